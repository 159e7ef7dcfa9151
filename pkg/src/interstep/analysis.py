"""Exhaustive attainable-history enumeration, conformance reports, equivalence.

Enumeration grows a frontier: from each non-final attainable history, every
nonempty sub-map of the pending queries into the reply pool yields a child by
appending one simultaneity class.  Children are attainable by construction.
The brute-force generator used for cross-checking instead produces *all*
phase-partitioned answer functions inside the bounds and filters them by
coherence and the no-proper-final-prefix condition.

Equivalence of two machine descriptions is decided clause by clause: same
states/initial/labels, same attainable sets, same issued sets, same final
classifications, same update sets on successful finals.  The weak variant
only compares behavior on histories attainable for both; the two verdicts
provably coincide, which agreement_property re-checks.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import EngineError
from .history import (
    EMPTY_HISTORY,
    History,
    Label,
    Query,
    append_class,
    format_history,
    format_query,
    history_sort_key,
    mk_history,
    query_sort_key,
)
from .isomorphism import Isomorphism, apply_isomorphism, check_isomorphism
from .model import (
    AlgorithmSpec,
    StateDef,
    causes,
    check_bounds,
    check_witness,
    explicitly_final,
    history_valid_for,
    is_coherent,
    issued,
    pending,
    update_set,
    verdict,
)
from .history import initial_segments
from .structure import Structure, term_variables


class AnalysisError(EngineError):
    """Bad enumeration configuration or analysis input."""


class ConfigMismatch(AnalysisError):
    """The two machine descriptions do not share a vocabulary."""


class TruncationWarning(UserWarning):
    """Enumeration bounds cut off part of the reachable space."""


@dataclass(frozen=True)
class EnumerationConfig:
    """Reply pool and size bounds for history enumeration."""

    reply_pool: tuple[str, ...] | None = None
    max_phases: int = 4
    max_domain: int = 8

    def __post_init__(self) -> None:
        if self.max_phases < 1 or self.max_domain < 1:
            raise AnalysisError("enumeration bounds must be positive")

    def pool_for(self, x: Structure) -> tuple[str, ...]:
        if self.reply_pool is None:
            return x.base
        extra = set(self.reply_pool) - x.elements
        if extra:
            raise AnalysisError(f"reply pool elements {sorted(extra)!r} are not in the base set")
        return tuple(sorted(set(self.reply_pool)))


@dataclass(frozen=True)
class EnumerationResult:
    histories: frozenset[History]
    truncated: bool


def _has_proper_final_prefix(spec: AlgorithmSpec, x: Structure, xi: History) -> bool:
    return any(verdict(spec, x, eta).is_final for eta in initial_segments(xi)[:-1])


def enumerate_attainable(spec: AlgorithmSpec, x: Structure, cfg: EnumerationConfig) -> EnumerationResult:
    """All attainable histories within the bounds, by breadth-first expansion."""
    pool = cfg.pool_for(x)
    seen: set[History] = {EMPTY_HISTORY}
    frontier: deque[History] = deque([EMPTY_HISTORY])
    truncated = False
    while frontier:
        xi = frontier.popleft()
        if verdict(spec, x, xi).is_final:
            continue
        pend = sorted(pending(spec, x, xi), key=query_sort_key)
        if not pend:
            continue
        if xi.length >= cfg.max_phases:
            truncated = True
            continue
        room = cfg.max_domain - len(xi.domain)
        for size in range(1, len(pend) + 1):
            if size > room:
                truncated = True
                break
            for subset in combinations(pend, size):
                for values in product(pool, repeat=size):
                    child = append_class(xi, dict(zip(subset, values)))
                    if child not in seen:
                        seen.add(child)
                        frontier.append(child)
    if truncated:
        warnings.warn("enumeration bounds cut off part of the space", TruncationWarning, stacklevel=2)
    return EnumerationResult(frozenset(seen), truncated)


# --- Brute-force generation (the enumerator's cross-check) ------------------------


def query_universe(spec: AlgorithmSpec, x: Structure, pool: Sequence[str]) -> frozenset[Query]:
    """Every query the issue rules can emit when replies range over the pool."""
    from .history import Elem
    from .structure import eval_term

    out: set[Query] = set()
    for rule in spec.issue_rules:
        names: list[str] = []
        for part in rule.template.parts:
            if not isinstance(part, Label):
                names.extend(v.name for v in term_variables(part))
        names = sorted(set(names))
        for combo in product(pool, repeat=len(names)):
            valuation = dict(zip(names, combo))
            parts = []
            for part in rule.template.parts:
                if isinstance(part, Label):
                    parts.append(part)
                else:
                    parts.append(Elem(eval_term(x, part, valuation)))
            out.add(Query(tuple(parts)))
    return frozenset(out)


def _ordered_partitions(items: tuple, max_classes: int) -> Iterator[tuple[tuple, ...]]:
    """All ways to split items into an ordered sequence of nonempty classes."""
    if not items:
        yield ()
        return
    if max_classes < 1:
        return
    rest = items[1:]
    first = items[0]
    for split in _ordered_partitions(rest, max_classes):
        # put `first` into an existing class
        for i in range(len(split)):
            yield split[:i] + ((first, *split[i]),) + split[i + 1 :]
        # or open a new class at any position
        if len(split) < max_classes:
            for i in range(len(split) + 1):
                yield split[:i] + ((first,),) + split[i:]


def all_bounded_histories(spec: AlgorithmSpec, x: Structure, cfg: EnumerationConfig) -> Iterator[History]:
    """All phase-partitioned answer functions over the query universe, within bounds."""
    pool = cfg.pool_for(x)
    universe = sorted(query_universe(spec, x, pool), key=query_sort_key)
    max_k = min(cfg.max_domain, len(universe))
    for k in range(0, max_k + 1):
        for domain in combinations(universe, k):
            for split in _ordered_partitions(domain, cfg.max_phases):
                phases = {q: i for i, cls in enumerate(split) for q in cls}
                for values in product(pool, repeat=k):
                    answers = dict(zip(domain, values))
                    yield mk_history(answers, phases)


def brute_force_attainable(spec: AlgorithmSpec, x: Structure, cfg: EnumerationConfig) -> frozenset[History]:
    """Filter all bounded histories by coherence and no-proper-final-prefix."""
    return frozenset(
        xi
        for xi in all_bounded_histories(spec, x, cfg)
        if is_coherent(spec, x, xi) and not _has_proper_final_prefix(spec, x, xi)
    )


def brute_force_coherent(spec: AlgorithmSpec, x: Structure, cfg: EnumerationConfig) -> frozenset[History]:
    return frozenset(xi for xi in all_bounded_histories(spec, x, cfg) if is_coherent(spec, x, xi))


# --- Postulate conformance ---------------------------------------------------------


@dataclass(frozen=True)
class SectionResult:
    name: str
    violations: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class PostulateReport:
    sections: tuple[SectionResult, ...]
    truncated: bool

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.sections)

    def section(self, name: str) -> SectionResult:
        for s in self.sections:
            if s.name == name:
                return s
        raise AnalysisError(f"no report section {name!r}")


IsoSpec = tuple[Mapping[str, str], str, str]


def check_postulates(
    spec: AlgorithmSpec,
    cfg: EnumerationConfig,
    isos: Sequence[IsoSpec] = (),
    *,
    strict: bool = False,
    witness_pairs: Sequence[tuple[str, str]] | None = None,
) -> PostulateReport:
    """Aggregate conformance report over the enumerated history space."""
    step_a: list[str] = []
    exclusivity: list[str] = []
    bounds: list[str] = []
    iso_section: list[str] = []
    witness_section: list[str] = []
    truncated = False

    attainable_by_state: dict[str, EnumerationResult] = {}
    for sdef in spec.states:
        res = enumerate_attainable(spec, sdef.structure, cfg)
        attainable_by_state[sdef.name] = res
        truncated = truncated or res.truncated

    for sdef in spec.states:
        x = sdef.structure
        for xi in sorted(brute_force_coherent(spec, x, cfg), key=history_sort_key):
            if pending(spec, x, xi):
                continue
            segs = initial_segments(xi)
            if strict:
                ok = any(explicitly_final(spec, x, eta) for eta in segs)
            else:
                ok = any(verdict(spec, x, eta).is_final for eta in segs)
            if not ok:
                step_a.append(f"state {sdef.name}: complete coherent {format_history(xi)} has no final prefix")

        res = attainable_by_state[sdef.name]
        for xi in sorted(res.histories, key=history_sort_key):
            v = verdict(spec, x, xi)
            if v.is_final and v.kind not in ("success", "fail"):
                exclusivity.append(f"state {sdef.name}: {format_history(xi)} has verdict {v.kind!r}")
        for issue in check_bounds(spec, x, res.histories):
            bounds.append(f"state {sdef.name}: [{issue.code}] {format_history(issue.history)}: {issue.detail}")

    for mapping, name_a, name_b in isos:
        xa, xb = spec.state(name_a), spec.state(name_b)
        full = {e: dict(mapping).get(e, e) for e in xa.base}
        if not check_isomorphism(full, xa, xb):
            iso_section.append(f"{name_a} -> {name_b}: mapping is not an isomorphism")
            continue
        if (name_a in spec.initial) != (name_b in spec.initial):
            iso_section.append(f"{name_a} -> {name_b}: initiality is not preserved")
        iso = Isomorphism.of(full)
        for xi in sorted(attainable_by_state[name_a].histories, key=history_sort_key):
            moved = apply_isomorphism(iso, xi)
            if apply_isomorphism(iso, causes(spec, xa, xi)) != causes(spec, xb, moved):
                iso_section.append(f"{name_a} -> {name_b}: causes not preserved at {format_history(xi)}")
            va, vb = verdict(spec, xa, xi), verdict(spec, xb, moved)
            if va.kind != vb.kind:
                iso_section.append(
                    f"{name_a} -> {name_b}: verdict {va.kind} became {vb.kind} at {format_history(xi)}"
                )
            if apply_isomorphism(iso, update_set(spec, xa, xi)) != update_set(spec, xb, moved):
                iso_section.append(f"{name_a} -> {name_b}: updates not preserved at {format_history(xi)}")

    if witness_pairs is None:
        names = [s.name for s in spec.states]
        witness_pairs = [(a, b) for i, a in enumerate(names) for b in names[i:]]
    for name_a, name_b in witness_pairs:
        xa, xb = spec.state(name_a), spec.state(name_b)
        for xi in sorted(attainable_by_state[name_a].histories, key=history_sort_key):
            if not history_valid_for(xb, xi):
                continue
            for issue in check_witness(spec, xa, xb, xi):
                witness_section.append(f"{name_a} vs {name_b} at {format_history(xi)}: [{issue.code}] {issue.detail}")

    return PostulateReport(
        sections=(
            SectionResult("step-a", tuple(step_a)),
            SectionResult("exclusivity", tuple(exclusivity)),
            SectionResult("bounds", tuple(bounds)),
            SectionResult("isomorphism", tuple(iso_section)),
            SectionResult("witness", tuple(witness_section)),
        ),
        truncated=truncated,
    )


def format_postulate_report(report: PostulateReport, fmt: str = "human") -> str:
    lines: list[str] = []
    if fmt == "machine":
        for s in report.sections:
            lines.append(f"{s.name}={'pass' if s.passed else 'fail'}")
            for v in s.violations:
                lines.append(f"{s.name}.violation={v}")
        lines.append(f"truncated={'true' if report.truncated else 'false'}")
        lines.append(f"result={'conforming' if report.passed else 'nonconforming'}")
    else:
        for s in report.sections:
            lines.append(f"{s.name}: {'pass' if s.passed else 'fail'}")
            for v in s.violations:
                lines.append(f"  {v}")
        if report.truncated:
            lines.append("note: enumeration was truncated by the configured bounds")
        lines.append("result: " + ("conforming" if report.passed else "nonconforming"))
    return "\n".join(lines) + "\n"


# --- Behavioral equivalence ----------------------------------------------------------


@dataclass(frozen=True)
class ClauseOutcome:
    clause: int
    state: str | None
    passed: bool
    detail: str


@dataclass(frozen=True)
class Divergence:
    state: str | None
    history: History | None
    clause: int
    detail: str


@dataclass(frozen=True)
class EquivalenceReport:
    equivalent: bool
    mode: str  # "full" | "weak"
    truncated: bool
    clauses: tuple[ClauseOutcome, ...]
    divergence: Divergence | None


def _divergence_key(d: Divergence) -> tuple:
    return (d.state or "", history_sort_key(d.history) if d.history is not None else (), d.clause)


def _compare(spec_a: AlgorithmSpec, spec_b: AlgorithmSpec, cfg: EnumerationConfig, weak: bool) -> EquivalenceReport:
    if spec_a.vocab != spec_b.vocab:
        raise ConfigMismatch("the two machine descriptions use different vocabularies")
    clauses: list[ClauseOutcome] = []
    divergences: list[Divergence] = []

    problems: list[str] = []
    if spec_a.labels != spec_b.labels:
        problems.append("labels differ")
    structs_a = frozenset(s.structure for s in spec_a.states)
    structs_b = frozenset(s.structure for s in spec_b.states)
    if structs_a != structs_b:
        problems.append("state sets differ")
    init_a = frozenset(spec_a.state(n) for n in spec_a.initial)
    init_b = frozenset(spec_b.state(n) for n in spec_b.initial)
    if init_a != init_b:
        problems.append("initial state sets differ")
    clause1 = not problems
    clauses.append(ClauseOutcome(1, None, clause1, "; ".join(problems) if problems else "states, initial states, and labels agree"))
    if not clause1:
        divergences.append(Divergence(None, None, 1, "; ".join(problems)))

    truncated = False
    for sdef in sorted(spec_a.states, key=lambda s: s.name):
        x = sdef.structure
        if x not in structs_b:
            continue
        res_a = enumerate_attainable(spec_a, x, cfg)
        res_b = enumerate_attainable(spec_b, x, cfg)
        truncated = truncated or res_a.truncated or res_b.truncated
        if not weak:
            same = res_a.histories == res_b.histories
            detail = (
                f"{len(res_a.histories)} attainable histories agree"
                if same
                else f"{len(res_a.histories ^ res_b.histories)} histories attainable in exactly one"
            )
            clauses.append(ClauseOutcome(2, sdef.name, same, detail))
            if not same:
                w = min(res_a.histories ^ res_b.histories, key=history_sort_key)
                divergences.append(Divergence(sdef.name, w, 2, "attainable in exactly one description"))
        common = sorted(res_a.histories & res_b.histories, key=history_sort_key)
        bad3 = [xi for xi in common if issued(spec_a, x, xi) != issued(spec_b, x, xi)]
        clauses.append(
            ClauseOutcome(3, sdef.name, not bad3, f"issued sets agree on {len(common)} histories" if not bad3 else f"issued sets differ on {len(bad3)} histories")
        )
        if bad3:
            w = bad3[0]
            sa = issued(spec_a, x, w)
            sb = issued(spec_b, x, w)
            diff = " ".join(format_query(q) for q in sorted(sa ^ sb, key=query_sort_key))
            divergences.append(Divergence(sdef.name, w, 3, f"issued sets differ by {diff}"))
        bad4 = [xi for xi in common if verdict(spec_a, x, xi).kind != verdict(spec_b, x, xi).kind]
        clauses.append(
            ClauseOutcome(4, sdef.name, not bad4, "final classifications agree" if not bad4 else f"final classifications differ on {len(bad4)} histories")
        )
        if bad4:
            w = bad4[0]
            divergences.append(
                Divergence(sdef.name, w, 4, f"{verdict(spec_a, x, w).kind} vs {verdict(spec_b, x, w).kind}")
            )
        succ = [xi for xi in common if verdict(spec_a, x, xi).is_success and verdict(spec_b, x, xi).is_success]
        bad5 = [xi for xi in succ if update_set(spec_a, x, xi) != update_set(spec_b, x, xi)]
        clauses.append(
            ClauseOutcome(5, sdef.name, not bad5, f"update sets agree on {len(succ)} successful finals" if not bad5 else f"update sets differ on {len(bad5)} histories")
        )
        if bad5:
            divergences.append(Divergence(sdef.name, bad5[0], 5, "update sets differ"))

    ok = all(c.passed for c in clauses)
    div = min(divergences, key=_divergence_key) if divergences else None
    return EquivalenceReport(ok, "weak" if weak else "full", truncated, tuple(clauses), div)


def equivalent(spec_a: AlgorithmSpec, spec_b: AlgorithmSpec, cfg: EnumerationConfig) -> EquivalenceReport:
    """Decide behavioral equivalence clause by clause."""
    return _compare(spec_a, spec_b, cfg, weak=False)


def weak_equivalent(spec_a: AlgorithmSpec, spec_b: AlgorithmSpec, cfg: EnumerationConfig) -> EquivalenceReport:
    """Decide equivalence comparing behavior only on commonly attainable histories."""
    return _compare(spec_a, spec_b, cfg, weak=True)


def agreement_property(spec_a: AlgorithmSpec, spec_b: AlgorithmSpec, cfg: EnumerationConfig) -> bool:
    """The full and weak checkers must return the same verdict."""
    return equivalent(spec_a, spec_b, cfg).equivalent == weak_equivalent(spec_a, spec_b, cfg).equivalent


def format_equivalence_report(report: EquivalenceReport, fmt: str = "human") -> str:
    lines: list[str] = []
    if fmt == "machine":
        lines.append(f"equivalent={'true' if report.equivalent else 'false'}")
        lines.append(f"mode={report.mode}")
        lines.append(f"truncated={'true' if report.truncated else 'false'}")
        for c in report.clauses:
            key = f"clause.{c.clause}" + (f".{c.state}" if c.state else "")
            lines.append(f"{key}={'pass' if c.passed else 'fail'}")
        if report.divergence is not None:
            d = report.divergence
            lines.append(f"divergence.state={d.state or ''}")
            lines.append(f"divergence.clause={d.clause}")
            lines.append("divergence.history=" + (format_history(d.history) if d.history is not None else ""))
            lines.append(f"divergence.detail={d.detail}")
    else:
        if report.equivalent:
            lines.append("equivalent up to bounds" if report.truncated else "equivalent")
        else:
            lines.append("not equivalent")
        for c in report.clauses:
            where = f" [{c.state}]" if c.state else ""
            lines.append(f"  clause {c.clause}{where}: {'pass' if c.passed else 'fail'} ({c.detail})")
        if report.divergence is not None:
            d = report.divergence
            where = f" in state {d.state}" if d.state else ""
            at = f" at {format_history(d.history)}" if d.history is not None else ""
            lines.append(f"  first divergence{where}{at}: clause {d.clause}, {d.detail}")
    return "\n".join(lines) + "\n"


# --- Isomorphism files -----------------------------------------------------------


def parse_iso_file(text: str) -> list[IsoSpec]:
    """Parse `iso STATE STATE { a -> b ; c -> d }` lines; unlisted elements map to themselves."""
    out: list[IsoSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split(None, 3)
        if len(words) < 4 or words[0] != "iso":
            raise AnalysisError(f"iso line {lineno}: expected 'iso STATE STATE {{ a -> b ; ... }}'")
        _, name_a, name_b, rest = words
        rest = rest.strip()
        if not (rest.startswith("{") and rest.endswith("}")):
            raise AnalysisError(f"iso line {lineno}: mapping must be braced")
        mapping: dict[str, str] = {}
        body = rest[1:-1].strip()
        if body:
            for entry in body.split(";"):
                if "->" not in entry:
                    raise AnalysisError(f"iso line {lineno}: entry {entry.strip()!r} lacks '->'")
                src, _, dst = entry.partition("->")
                mapping[src.strip()] = dst.strip()
        out.append((mapping, name_a, name_b))
    return out
