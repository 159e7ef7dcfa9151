"""Textual language for machine descriptions: parser, printer, validation.

Grammar (canonical section order; `#` comments run to end of line):

    spec       := "algorithm" NAME vocab labels states queries rules bounds witness
    vocab      := "vocabulary" "{" symdecl* "}"
    symdecl    := ("static" | "dynamic") ["relational"] NAME "/" NAT
                | "relational" NAME "/" NAT                    # dynamic relational
    labels     := "labels" "{" NAME* "}"
    states     := stateblock+ "initial" NAME+
    stateblock := "state" NAME "{" "base" NAME+ interpline* "}"
    interpline := "interp" NAME "(" NAME* ")" "=" NAME
    queries    := ("query" NAME "=" qtuple)*
    qtuple     := "(" component+ ")"                            # space separated
    component  := LABEL | term
    rules      := rule*
    rule       := "issue" NAME ":" "when" guard "emit" qtuple
                | "final" NAME ":" "when" guard ("succeed" | "fail")
                | "update" NAME ":" "when" guard NAME "(" [term ("," term)*] ")" ":=" term
    guard      := guard "or" guard | guard "and" guard | "not" guard | "(" guard ")" | atom
    atom       := "start" | "answered" "(" QNAME ")" | "unanswered" "(" QNAME ")"
                | "reply" "(" QNAME ")" "=" term
                | "before" "(" QNAME "," QNAME ")" | "simultaneous" "(" QNAME "," QNAME ")"
                | term "=" term
    term       := "reply" "(" QNAME ")" | "$" NAME
                | NAME "(" [term ("," term)*] ")" | NAME        # bare NAME: nullary symbol
    bounds     := "bounds" "{" "max_query_len" NAT "max_issued" NAT "}"
    witness    := "witness" "{" [term (";" term)*] "}"

Precedence is not > and > or, left-associative.  `start` holds exactly of the
empty history.  `not`, `and`, `or` are reserved in guard position, so terms
in source cannot apply the logic connectives (build such terms via the API;
`Boole` and `eq` remain spellable).  `reply(q) = t` always parses as the
reply-comparison atom.  Identifiers are ASCII alphanumeric plus underscore.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EngineError
from .history import Label
from .model import (
    AlgorithmSpec,
    And,
    Answered,
    Before,
    Bounds,
    FinalRule,
    Guard,
    IssueRule,
    Not,
    Or,
    QueryTemplate,
    ReplyEq,
    Simultaneous,
    Start,
    StateDef,
    TermEq,
    Unanswered,
    UpdateRule,
    WitnessDecl,
)
from .spans import Span
from .structure import (
    LOGIC_NAMES,
    App,
    ReplyVar,
    Structure,
    SymbolDecl,
    Term,
    Var,
    Vocabulary,
    canonical_interp_entries,
    format_symbol_decl,
    format_term,
    term_variables,
    validate_structure,
)


class DslError(EngineError):
    """Base class for source-text errors; always carries a span."""

    def __init__(self, message: str, span: Span):
        super().__init__(f"{span}: {message}")
        self.message = message
        self.span = span


class DslSyntaxError(DslError):
    def __init__(self, message: str, span: Span, expected: tuple[str, ...] = ()):
        super().__init__(message, span)
        self.expected = expected


class DslNameError(DslError):
    """An undeclared label, query template, symbol, or state was referenced."""


class DslArityError(DslError):
    """A symbol was applied to the wrong number of arguments."""


# --- Lexer ---------------------------------------------------------------------

_KEYWORDS = {
    "algorithm", "vocabulary", "labels", "state", "base", "interp", "initial",
    "query", "issue", "final", "update", "when", "emit", "succeed", "fail",
    "start", "not", "and", "or", "answered", "unanswered", "reply", "before",
    "simultaneous", "bounds", "witness", "static", "dynamic", "relational",
}

@dataclass(frozen=True)
class Token:
    kind: str  # keyword text, punct text, "IDENT", "NAT", "EOF"
    text: str
    span: Span


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    byte = 0
    n = len(text)

    def bump(ch: str) -> None:
        nonlocal line, col, byte
        byte += len(ch.encode("utf-8"))
        if ch == "\n":
            line += 1
            col = 1
        else:
            col += 1

    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            bump(ch)
            i += 1
            continue
        if ch == "#":
            # comment to end of line; element markers appear only in history
            # literals, which have their own parser
            while i < n and text[i] != "\n":
                bump(text[i])
                i += 1
            continue
        start_line, start_col, start_byte = line, col, byte
        two = text[i : i + 2]
        if two in ("->", ":="):
            for c in two:
                bump(c)
            i += 2
            tokens.append(Token(two, two, Span(start_line, start_col, start_byte, byte)))
            continue
        if ch in "{}():;,=/@$":
            bump(ch)
            i += 1
            tokens.append(Token(ch, ch, Span(start_line, start_col, start_byte, byte)))
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            word = text[i:j]
            for c in word:
                bump(c)
            i = j
            tokens.append(Token("NAT", word, Span(start_line, start_col, start_byte, byte)))
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if not word.isascii():
                raise DslSyntaxError(
                    f"identifier {word!r} contains non-ASCII characters",
                    Span(start_line, start_col, start_byte, start_byte + len(word.encode("utf-8"))),
                )
            for c in word:
                bump(c)
            i = j
            kind = word if word in _KEYWORDS else "IDENT"
            tokens.append(Token(kind, word, Span(start_line, start_col, start_byte, byte)))
            continue
        raise DslSyntaxError(f"unexpected character {ch!r}", Span(line, col, byte, byte + len(ch.encode("utf-8"))))
    tokens.append(Token("EOF", "", Span(line, col, byte, byte)))
    return tokens


# --- Parser ---------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.labels: set[str] = set()
        self.vocab: Vocabulary | None = None
        self.template_names: set[str] = set()

    # token plumbing

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def at(self, *kinds: str) -> bool:
        return self.peek().kind in kinds

    def accept(self, kind: str) -> Token | None:
        if self.at(kind):
            return self.advance()
        return None

    def expect(self, *kinds: str) -> Token:
        if self.at(*kinds):
            return self.advance()
        tok = self.peek()
        shown = tok.text if tok.kind != "EOF" else "end of input"
        raise DslSyntaxError(f"expected {' or '.join(kinds)}, found {shown!r}", tok.span, expected=kinds)

    def ident(self, what: str = "identifier") -> Token:
        if self.at("IDENT"):
            return self.advance()
        tok = self.peek()
        raise DslSyntaxError(f"expected {what}, found {tok.text!r}", tok.span, expected=("IDENT",))

    def span_from(self, start: Span) -> Span:
        end = self.tokens[self.pos - 1].span if self.pos else start
        return Span(start.line, start.column, start.start, end.end)

    # sections

    def parse_spec(self) -> AlgorithmSpec:
        start = self.peek().span
        self.expect("algorithm")
        name = self.ident("algorithm name").text
        vocab = self.parse_vocabulary()
        self.vocab = vocab
        labels = self.parse_labels()
        states = self.parse_states()
        initial = self.parse_initial({s.name for s in states})
        templates = self.parse_queries()
        issue_rules, final_rules, update_rules = self.parse_rules()
        bounds = self.parse_bounds()
        witness = self.parse_witness()
        self.expect("EOF")
        return AlgorithmSpec(
            name=name,
            vocab=vocab,
            labels=frozenset(labels),
            states=tuple(states),
            initial=frozenset(initial),
            templates=tuple(templates),
            issue_rules=tuple(issue_rules),
            final_rules=tuple(final_rules),
            update_rules=tuple(update_rules),
            bounds=bounds,
            witness=tuple(witness),
            span=self.span_from(start),
        )

    def parse_vocabulary(self) -> Vocabulary:
        self.expect("vocabulary")
        self.expect("{")
        decls: list[SymbolDecl] = []
        seen: set[str] = set()
        while not self.at("}"):
            flag = self.expect("static", "dynamic", "relational")
            static = flag.kind == "static"
            relational = flag.kind == "relational"
            if self.accept("relational"):
                relational = True
            name_tok = self.ident("symbol name")
            self.expect("/")
            arity = int(self.expect("NAT").text)
            if name_tok.text in LOGIC_NAMES:
                raise DslNameError(f"symbol {name_tok.text!r} is a reserved logic name", name_tok.span)
            if name_tok.text in seen:
                raise DslNameError(f"symbol {name_tok.text!r} declared twice", name_tok.span)
            seen.add(name_tok.text)
            decls.append(SymbolDecl(name_tok.text, arity, static=static, relational=relational))
        self.expect("}")
        return Vocabulary.make(decls)

    def parse_labels(self) -> list[str]:
        self.expect("labels")
        self.expect("{")
        labels: list[str] = []
        while not self.at("}"):
            tok = self.ident("label")
            if tok.text in labels:
                raise DslNameError(f"label {tok.text!r} declared twice", tok.span)
            if self.vocab is not None and tok.text in self.vocab:
                raise DslNameError(f"label {tok.text!r} collides with a vocabulary symbol", tok.span)
            labels.append(tok.text)
            self.labels.add(tok.text)
        self.expect("}")
        return labels

    def parse_states(self) -> list[StateDef]:
        states: list[StateDef] = []
        if not self.at("state"):
            self.expect("state")
        while self.at("state"):
            start = self.peek().span
            self.advance()
            name_tok = self.ident("state name")
            if any(s.name == name_tok.text for s in states):
                raise DslNameError(f"state {name_tok.text!r} declared twice", name_tok.span)
            self.expect("{")
            base_kw = self.expect("base")
            base: list[str] = []
            while self.at("IDENT"):
                base.append(self.advance().text)
            if not base:
                raise DslSyntaxError("base line lists no elements", base_kw.span, expected=("IDENT",))
            interp: dict[str, dict[tuple[str, ...], str]] = {}
            while self.at("interp"):
                self.advance()
                sym_tok = self.ident("symbol name")
                if sym_tok.text not in self.vocab:
                    raise DslNameError(f"unknown symbol {sym_tok.text!r}", sym_tok.span)
                self.expect("(")
                args: list[str] = []
                while self.at("IDENT"):
                    args.append(self.advance().text)
                self.expect(")")
                self.expect("=")
                value_tok = self.ident("element")
                decl = self.vocab.decl(sym_tok.text)
                if len(args) != decl.arity:
                    raise DslArityError(
                        f"{sym_tok.text!r} has arity {decl.arity}, entry lists {len(args)} arguments", sym_tok.span
                    )
                interp.setdefault(sym_tok.text, {})[tuple(args)] = value_tok.text
            self.expect("}")
            try:
                structure = Structure.make(self.vocab, base, interp)
            except EngineError as exc:
                raise DslNameError(f"state {name_tok.text!r}: {exc}", self.span_from(start)) from exc
            states.append(StateDef(name_tok.text, structure, self.span_from(start)))
        return states

    def parse_initial(self, state_names: set[str]) -> list[str]:
        self.expect("initial")
        names: list[str] = []
        while self.at("IDENT"):
            tok = self.advance()
            if tok.text not in state_names:
                raise DslNameError(f"initial state {tok.text!r} is not declared", tok.span)
            names.append(tok.text)
        if not names:
            tok = self.peek()
            raise DslSyntaxError("initial line lists no states", tok.span, expected=("IDENT",))
        return names

    def parse_queries(self) -> list[QueryTemplate]:
        templates: list[QueryTemplate] = []
        while self.at("query"):
            start = self.peek().span
            self.advance()
            name_tok = self.ident("query template name")
            if name_tok.text in self.template_names:
                raise DslNameError(f"query template {name_tok.text!r} declared twice", name_tok.span)
            self.template_names.add(name_tok.text)
            self.expect("=")
            parts = self.parse_qtuple()
            templates.append(QueryTemplate(name_tok.text, parts, self.span_from(start)))
        return templates

    def parse_qtuple(self) -> tuple[Label | Term, ...]:
        self.expect("(")
        parts: list[Label | Term] = []
        while not self.at(")"):
            parts.append(self.parse_component())
        close = self.expect(")")
        if not parts:
            raise DslSyntaxError("query tuple has no components", close.span, expected=("IDENT",))
        return tuple(parts)

    def parse_component(self) -> Label | Term:
        tok = self.peek()
        if tok.kind == "IDENT" and self.peek(1).kind != "(":
            if tok.text in self.labels:
                self.advance()
                return Label(tok.text)
            # fall through: bare nullary symbol
        return self.parse_term()

    def parse_term(self) -> Term:
        tok = self.peek()
        if tok.kind == "reply":
            self.advance()
            self.expect("(")
            qname = self._template_ref()
            self.expect(")")
            return ReplyVar(qname)
        if tok.kind == "$":
            self.advance()
            return Var(self.ident("variable name").text)
        if tok.kind != "IDENT":
            raise DslSyntaxError(f"expected a term, found {tok.text!r}", tok.span, expected=("IDENT", "reply", "$"))
        self.advance()
        if tok.text not in self.vocab:
            raise DslNameError(f"unknown symbol {tok.text!r}", tok.span)
        decl = self.vocab.decl(tok.text)
        args: list[Term] = []
        if self.accept("("):
            if not self.at(")"):
                args.append(self.parse_term())
                while self.accept(","):
                    args.append(self.parse_term())
            self.expect(")")
        if len(args) != decl.arity:
            raise DslArityError(f"{tok.text!r} has arity {decl.arity}, applied to {len(args)} arguments", tok.span)
        return App(tok.text, tuple(args))

    def _template_ref(self) -> str:
        tok = self.ident("query template name")
        if tok.text not in self.template_names:
            raise DslNameError(f"query template {tok.text!r} is not declared", tok.span)
        return tok.text

    # guards

    def parse_guard(self) -> Guard:
        return self._parse_or()

    def _parse_or(self) -> Guard:
        left = self._parse_and()
        while self.accept("or"):
            left = Or(left, self._parse_and())
        return left

    def _parse_and(self) -> Guard:
        left = self._parse_not()
        while self.accept("and"):
            left = And(left, self._parse_not())
        return left

    def _parse_not(self) -> Guard:
        if self.accept("not"):
            return Not(self._parse_not())
        return self._parse_atom()

    def _parse_atom(self) -> Guard:
        tok = self.peek()
        if tok.kind == "start":
            self.advance()
            return Start(span=tok.span)
        if tok.kind in ("answered", "unanswered"):
            self.advance()
            self.expect("(")
            qname = self._template_ref()
            close = self.expect(")")
            node = Answered if tok.kind == "answered" else Unanswered
            return node(qname, span=Span(tok.span.line, tok.span.column, tok.span.start, close.span.end))
        if tok.kind in ("before", "simultaneous"):
            self.advance()
            self.expect("(")
            first = self._template_ref()
            self.expect(",")
            second = self._template_ref()
            close = self.expect(")")
            node = Before if tok.kind == "before" else Simultaneous
            return node(first, second, span=Span(tok.span.line, tok.span.column, tok.span.start, close.span.end))
        if tok.kind == "reply":
            self.advance()
            self.expect("(")
            qname = self._template_ref()
            self.expect(")")
            self.expect("=")
            term = self.parse_term()
            return ReplyEq(qname, term, span=self.span_from(tok.span))
        if tok.kind == "(":
            self.advance()
            inner = self.parse_guard()
            self.expect(")")
            return inner
        left = self.parse_term()
        self.expect("=")
        right = self.parse_term()
        return TermEq(left, right, span=self.span_from(tok.span))

    # rules

    def parse_rules(self) -> tuple[list[IssueRule], list[FinalRule], list[UpdateRule]]:
        issue_rules: list[IssueRule] = []
        final_rules: list[FinalRule] = []
        update_rules: list[UpdateRule] = []
        while self.at("issue", "final", "update"):
            kw = self.advance()
            name = self.ident("rule name").text
            self.expect(":")
            self.expect("when")
            guard = self.parse_guard()
            if kw.kind == "issue":
                self.expect("emit")
                parts = self.parse_qtuple()
                issue_rules.append(IssueRule(name, guard, QueryTemplate(None, parts), self.span_from(kw.span)))
            elif kw.kind == "final":
                out = self.expect("succeed", "fail")
                final_rules.append(FinalRule(name, guard, out.kind, self.span_from(kw.span)))
            else:
                sym_tok = self.ident("dynamic symbol")
                if sym_tok.text not in self.vocab:
                    raise DslNameError(f"unknown symbol {sym_tok.text!r}", sym_tok.span)
                self.expect("(")
                args: list[Term] = []
                if not self.at(")"):
                    args.append(self.parse_term())
                    while self.accept(","):
                        args.append(self.parse_term())
                self.expect(")")
                decl = self.vocab.decl(sym_tok.text)
                if len(args) != decl.arity:
                    raise DslArityError(
                        f"{sym_tok.text!r} has arity {decl.arity}, location lists {len(args)} arguments",
                        sym_tok.span,
                    )
                self.expect(":=")
                value = self.parse_term()
                update_rules.append(
                    UpdateRule(name, guard, sym_tok.text, tuple(args), value, self.span_from(kw.span))
                )
        return issue_rules, final_rules, update_rules

    def parse_bounds(self) -> Bounds:
        start = self.peek().span
        self.expect("bounds")
        self.expect("{")
        key1 = self.ident("max_query_len")
        if key1.text != "max_query_len":
            raise DslSyntaxError("expected 'max_query_len'", key1.span, expected=("max_query_len",))
        max_query_len = int(self.expect("NAT").text)
        key2 = self.ident("max_issued")
        if key2.text != "max_issued":
            raise DslSyntaxError("expected 'max_issued'", key2.span, expected=("max_issued",))
        max_issued = int(self.expect("NAT").text)
        self.expect("}")
        return Bounds(max_query_len, max_issued, self.span_from(start))

    def parse_witness(self) -> list[WitnessDecl]:
        self.expect("witness")
        self.expect("{")
        terms: list[WitnessDecl] = []
        if not self.at("}"):
            start = self.peek().span
            terms.append(WitnessDecl(self.parse_term(), self.span_from(start)))
            while self.accept(";"):
                start = self.peek().span
                terms.append(WitnessDecl(self.parse_term(), self.span_from(start)))
        self.expect("}")
        return terms


def parse_spec(text: str) -> AlgorithmSpec:
    """Parse a machine description; raises Dsl*Error with a source span."""
    return _Parser(text).parse_spec()


# --- Printer --------------------------------------------------------------------

_PREC = {Or: 1, And: 2, Not: 3}


def _guard_prec(g: Guard) -> int:
    return _PREC.get(type(g), 4)


def format_guard(g: Guard) -> str:
    if isinstance(g, Start):
        return "start"
    if isinstance(g, Answered):
        return f"answered({g.qname})"
    if isinstance(g, Unanswered):
        return f"unanswered({g.qname})"
    if isinstance(g, ReplyEq):
        return f"reply({g.qname}) = {format_term(g.term)}"
    if isinstance(g, Before):
        return f"before({g.first}, {g.second})"
    if isinstance(g, Simultaneous):
        return f"simultaneous({g.first}, {g.second})"
    if isinstance(g, TermEq):
        if isinstance(g.left, ReplyVar):
            # prints identically to the reply atom, which is how it reparses
            return f"reply({g.left.name}) = {format_term(g.right)}"
        return f"{format_term(g.left)} = {format_term(g.right)}"
    if isinstance(g, Not):
        inner = format_guard(g.inner)
        if _guard_prec(g.inner) < _PREC[Not]:
            inner = f"({inner})"
        return f"not {inner}"
    if isinstance(g, (And, Or)):
        word = "and" if isinstance(g, And) else "or"
        prec = _guard_prec(g)
        left = format_guard(g.left)
        right = format_guard(g.right)
        if _guard_prec(g.left) < prec:
            left = f"({left})"
        if _guard_prec(g.right) <= prec:
            right = f"({right})"
        return f"{left} {word} {right}"
    raise EngineError(f"unknown guard node {g!r}")


def format_qtuple(parts: tuple[Label | Term, ...]) -> str:
    words = [p.name if isinstance(p, Label) else format_term(p) for p in parts]
    return "(" + " ".join(words) + ")"


def print_spec(spec: AlgorithmSpec) -> str:
    """Canonical text form; parsing it yields an AST equal modulo spans."""
    out: list[str] = [f"algorithm {spec.name}", ""]
    out.append("vocabulary {")
    for d in spec.vocab.user_symbols:
        out.append(f"  {format_symbol_decl(d)}")
    out.append("}")
    out.append("")
    out.append("labels { " + " ".join(sorted(spec.labels)) + " }" if spec.labels else "labels { }")
    out.append("")
    for s in spec.states:
        out.append(f"state {s.name} {{")
        out.append("  base " + " ".join(s.structure.base))
        for name, args, value in canonical_interp_entries(s.structure):
            out.append(f"  interp {name} ({' '.join(args)}) = {value}")
        out.append("}")
        out.append("")
    out.append("initial " + " ".join(sorted(spec.initial)))
    out.append("")
    for t in spec.templates:
        out.append(f"query {t.name} = {format_qtuple(t.parts)}")
    if spec.templates:
        out.append("")
    for r in spec.issue_rules:
        out.append(f"issue {r.name}: when {format_guard(r.guard)} emit {format_qtuple(r.template.parts)}")
    for r in spec.final_rules:
        out.append(f"final {r.name}: when {format_guard(r.guard)} {r.outcome}")
    for r in spec.update_rules:
        args = ", ".join(format_term(a) for a in r.args)
        out.append(f"update {r.name}: when {format_guard(r.guard)} {r.symbol}({args}) := {format_term(r.value)}")
    if spec.issue_rules or spec.final_rules or spec.update_rules:
        out.append("")
    out.append("bounds {")
    out.append(f"  max_query_len {spec.bounds.max_query_len}")
    out.append(f"  max_issued {spec.bounds.max_issued}")
    out.append("}")
    out.append("")
    if spec.witness:
        out.append("witness { " + " ; ".join(format_term(w.term) for w in spec.witness) + " }")
    else:
        out.append("witness { }")
    return "\n".join(out) + "\n"


# --- Validation ------------------------------------------------------------------


@dataclass(frozen=True)
class SpecDiagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    span: Span | None


def _guard_atoms(g: Guard):
    if isinstance(g, Not):
        yield from _guard_atoms(g.inner)
    elif isinstance(g, (And, Or)):
        yield from _guard_atoms(g.left)
        yield from _guard_atoms(g.right)
    else:
        yield g


def _guard_terms(g: Guard):
    for atom in _guard_atoms(g):
        if isinstance(atom, ReplyEq):
            yield atom.term, atom.span
        elif isinstance(atom, TermEq):
            yield atom.left, atom.span
            yield atom.right, atom.span


def _guard_template_refs(g: Guard):
    for atom in _guard_atoms(g):
        if isinstance(atom, (Answered, Unanswered)):
            yield atom.qname, atom.span
        elif isinstance(atom, ReplyEq):
            yield atom.qname, atom.span
        elif isinstance(atom, (Before, Simultaneous)):
            yield atom.first, atom.span
            yield atom.second, atom.span


def _term_ok(vocab: Vocabulary, term: Term) -> str | None:
    if isinstance(term, App):
        if term.symbol not in vocab:
            return f"unknown symbol {term.symbol!r}"
        if vocab.decl(term.symbol).arity != len(term.args):
            return f"{term.symbol!r} applied to {len(term.args)} arguments, arity is {vocab.decl(term.symbol).arity}"
        for a in term.args:
            bad = _term_ok(vocab, a)
            if bad:
                return bad
    return None


def validate_spec(spec: AlgorithmSpec, *, strict: bool = False) -> list[SpecDiagnostic]:
    """Static checks beyond the grammar; empty (or warnings only) means usable."""
    out: list[SpecDiagnostic] = []

    def err(code: str, message: str, span: Span | None) -> None:
        out.append(SpecDiagnostic("error", code, message, span))

    def warn(code: str, message: str, span: Span | None) -> None:
        out.append(SpecDiagnostic("warning", code, message, span))

    if not spec.states:
        err("states-empty", "a machine needs at least one state", spec.span)
    if not spec.initial:
        err("initial-empty", "a machine needs at least one initial state", spec.span)
    state_names = {s.name for s in spec.states}
    for name in sorted(spec.initial):
        if name not in state_names:
            err("initial-unknown", f"initial state {name!r} is not declared", spec.span)
    for s in spec.states:
        if s.structure.vocab != spec.vocab:
            err("state-vocabulary", f"state {s.name!r} uses a different vocabulary", s.span)
            continue
        for issue in validate_structure(spec.vocab, s.structure):
            err("structure", f"state {s.name!r}: {issue.message}", s.span)
    if spec.bounds.max_query_len < 1 or spec.bounds.max_issued < 1:
        err("bounds-positive", "declared bounds must be positive", spec.bounds.span)
    for label in sorted(spec.labels):
        if label in spec.vocab:
            err("label-symbol-clash", f"label {label!r} collides with a vocabulary symbol", spec.span)

    tnames: set[str] = set()
    for t in spec.templates:
        if t.name in tnames:
            err("duplicate-template", f"query template {t.name!r} declared twice", t.span)
        tnames.add(t.name)
    refs: dict[str, set[str]] = {}
    for t in spec.templates:
        needed: set[str] = set()
        for part in t.parts:
            if isinstance(part, Label):
                if part.name not in spec.labels:
                    err("label-undeclared", f"template {t.name!r} uses undeclared label {part.name!r}", t.span)
                continue
            bad = _term_ok(spec.vocab, part)
            if bad:
                err("term", f"template {t.name!r}: {bad}", t.span)
            for v in term_variables(part):
                if isinstance(v, ReplyVar):
                    needed.add(v.name)
                    if v.name not in tnames:
                        err("template-ref", f"template {t.name!r} references undeclared template {v.name!r}", t.span)
                else:
                    err("free-variable", f"template {t.name!r} has a free variable ${v.name}", t.span)
        refs[t.name or ""] = needed
    # reply references between templates must be acyclic
    seen: dict[str, int] = {}

    def visit(name: str) -> bool:
        state = seen.get(name, 0)
        if state == 1:
            return False
        if state == 2:
            return True
        seen[name] = 1
        ok = all(visit(dep) for dep in sorted(refs.get(name, ())))
        seen[name] = 2
        return ok

    for t in spec.templates:
        if t.name and not visit(t.name):
            err("template-cycle", f"template {t.name!r} reaches itself through reply references", t.span)
            break

    rule_names: set[str] = set()
    all_rules = [*spec.issue_rules, *spec.final_rules, *spec.update_rules]
    for r in all_rules:
        if r.name in rule_names:
            err("duplicate-rule", f"rule name {r.name!r} used twice", r.span)
        rule_names.add(r.name)
        for qname, span in _guard_template_refs(r.guard):
            if qname not in tnames:
                err("template-ref", f"rule {r.name!r} references undeclared template {qname!r}", span or r.span)
        for term, span in _guard_terms(r.guard):
            bad = _term_ok(spec.vocab, term)
            if bad:
                err("term", f"rule {r.name!r}: {bad}", span or r.span)
            for v in term_variables(term):
                if isinstance(v, Var):
                    err("free-variable", f"rule {r.name!r} has a free variable ${v.name}", span or r.span)
                elif v.name not in tnames:
                    err("template-ref", f"rule {r.name!r} references undeclared template {v.name!r}", span or r.span)
    for r in spec.issue_rules:
        for part in r.template.parts:
            if isinstance(part, Label):
                if part.name not in spec.labels:
                    err("label-undeclared", f"rule {r.name!r} emits undeclared label {part.name!r}", r.span)
            else:
                bad = _term_ok(spec.vocab, part)
                if bad:
                    err("term", f"rule {r.name!r}: {bad}", r.span)
                for v in term_variables(part):
                    if isinstance(v, ReplyVar) and v.name not in tnames:
                        err("template-ref", f"rule {r.name!r} references undeclared template {v.name!r}", r.span)
    for r in spec.update_rules:
        if r.symbol not in spec.vocab:
            err("term", f"rule {r.name!r} updates unknown symbol {r.symbol!r}", r.span)
            continue
        decl = spec.vocab.decl(r.symbol)
        if decl.static:
            err("update-static", f"rule {r.name!r} updates static symbol {r.symbol!r}", r.span)
        if decl.arity != len(r.args):
            err("term", f"rule {r.name!r}: {r.symbol!r} has arity {decl.arity}, location lists {len(r.args)}", r.span)
        for term in (*r.args, r.value):
            bad = _term_ok(spec.vocab, term)
            if bad:
                err("term", f"rule {r.name!r}: {bad}", r.span)
    for w in spec.witness:
        bad = _term_ok(spec.vocab, w.term)
        if bad:
            err("term", f"witness term: {bad}", w.span)
        for v in term_variables(w.term):
            if isinstance(v, ReplyVar):
                err("witness-reply-var", "witness terms use plain variables, not reply references", w.span)
    if strict and not spec.final_rules:
        warn(
            "no-final-rules",
            "no final rule declared; every step ending relies on completion finality",
            spec.span,
        )
    return out
