from __future__ import annotations

import dataclasses

import pytest

from conftest import SPECS
from interstep.dsl import (
    DslArityError,
    DslNameError,
    DslSyntaxError,
    format_guard,
    parse_spec,
    print_spec,
    validate_spec,
)
from interstep.model import And, Not, Or, ReplyEq, Start, TermEq
from interstep.structure import App

MINIMAL = """
algorithm idle

vocabulary { }

labels { }

state S {
  base false true undef
}

initial S

bounds {
  max_query_len 1
  max_issued 1
}

witness { }
"""


class TestParse:
    def test_broker_node_counts(self, broker):
        assert len(broker.issue_rules) == 4
        assert len(broker.final_rules) == 5
        assert len(broker.update_rules) == 5
        assert len(broker.templates) == 4
        assert broker.labels == {"offer0", "offer1", "choose", "timeout"}
        assert broker.state_names == ("X0",)
        assert broker.initial == {"X0"}
        assert broker.bounds.max_query_len == 1 and broker.bounds.max_issued == 5
        assert len(broker.witness) == 4

    def test_minimal_machine(self):
        spec = parse_spec(MINIMAL)
        assert spec.issue_rules == () and spec.final_rules == () and spec.witness == ()

    def test_missing_emit_is_a_syntax_error(self):
        text = MINIMAL.replace("bounds {", "issue x: when start\nbounds {")
        with pytest.raises(DslSyntaxError) as err:
            parse_spec(text)
        assert "emit" in str(err.value.expected)

    def test_undeclared_template_is_a_name_error(self):
        text = MINIMAL.replace("bounds {", "final f: when reply(unknownq) = true() succeed\nbounds {")
        with pytest.raises(DslNameError):
            parse_spec(text)

    def test_unknown_symbol_is_a_name_error(self):
        text = MINIMAL.replace("bounds {", "final f: when nosuch() = true() succeed\nbounds {")
        with pytest.raises(DslNameError):
            parse_spec(text)

    def test_arity_error(self):
        text = MINIMAL.replace("bounds {", "final f: when Boole() = true() succeed\nbounds {")
        with pytest.raises(DslArityError):
            parse_spec(text)

    def test_label_symbol_collision_rejected(self):
        text = MINIMAL.replace("vocabulary { }", "vocabulary { static a/0 }").replace(
            "labels { }", "labels { a }"
        )
        with pytest.raises(DslNameError):
            parse_spec(text)

    def test_spans_point_into_the_source(self):
        text = MINIMAL.replace("bounds {", "final f: when reply(ghost) = true() succeed\nbounds {")
        with pytest.raises(DslNameError) as err:
            parse_spec(text)
        span = err.value.span
        assert 0 <= span.start <= span.end <= len(text.encode())
        assert text.splitlines()[span.line - 1].find("ghost") >= 0

    def test_comments_and_blank_lines_ignored(self):
        text = "# leading comment\n" + MINIMAL.replace("initial S", "initial S  # trailing comment")
        parse_spec(text)

    def test_non_ascii_identifier_rejected(self):
        with pytest.raises(DslSyntaxError):
            parse_spec(MINIMAL.replace("algorithm idle", "algorithm idlé"))


class TestGuardGrammar:
    def parse_guard_text(self, guard_text):
        text = MINIMAL.replace(
            "vocabulary { }", "vocabulary { static a/0 static b/0 }"
        ).replace("initial S", "initial S\n\nquery q = (a())\nquery p = (b())").replace(
            "bounds {", f"final f: when {guard_text} succeed\nbounds {{"
        )
        return parse_spec(text).final_rules[0].guard

    def test_precedence_not_binds_tightest(self):
        g = self.parse_guard_text("not answered(q) and answered(p)")
        assert isinstance(g, And) and isinstance(g.left, Not)

    def test_precedence_and_over_or(self):
        g = self.parse_guard_text("answered(q) and answered(p) or start")
        assert isinstance(g, Or) and isinstance(g.left, And) and isinstance(g.right, Start)

    def test_left_associativity(self):
        g = self.parse_guard_text("start and start and start")
        assert isinstance(g, And) and isinstance(g.left, And) and isinstance(g.right, Start)

    def test_parenthesized_grouping(self):
        g = self.parse_guard_text("start and (start or start)")
        assert isinstance(g, And) and isinstance(g.right, Or)

    def test_not_applies_to_whole_atom(self):
        g = self.parse_guard_text("not reply(q) = a()")
        assert isinstance(g, Not) and isinstance(g.inner, ReplyEq)

    def test_term_equality_atom(self):
        g = self.parse_guard_text("a() = b()")
        assert isinstance(g, TermEq) and g.left == App("a") and g.right == App("b")

    def test_bare_nullary_symbol_sugar(self):
        g = self.parse_guard_text("a = b")
        assert g == TermEq(App("a"), App("b"))

    def test_guard_printing_round_trips(self):
        for text in [
            "not answered(q) and answered(p)",
            "answered(q) and answered(p) or start",
            "start and (start or start)",
            "not (answered(q) or answered(p))",
            "not not start",
            "reply(q) = a() and not reply(p) = b()",
            "before(q, p) or simultaneous(p, q)",
        ]:
            g = self.parse_guard_text(text)
            assert self.parse_guard_text(format_guard(g)) == g


class TestPrint:
    def test_round_trip_broker(self, broker):
        text = print_spec(broker)
        again = parse_spec(text)
        assert again == broker

    def test_print_is_canonical_fixed_point(self, broker):
        text = print_spec(broker)
        assert print_spec(parse_spec(text)) == text

    def test_round_trip_all_fixture_files(self):
        for name in ("broker.isa", "broker_preferred.isa", "broker_sym.isa"):
            spec = parse_spec((SPECS / name).read_text())
            assert parse_spec(print_spec(spec)) == spec

    def test_round_trip_minimal(self):
        spec = parse_spec(MINIMAL)
        assert parse_spec(print_spec(spec)) == spec


class TestValidate:
    def test_broker_is_clean(self, broker):
        assert validate_spec(broker) == []

    def test_fixture_files_are_clean(self, broker_preferred, broker_sym):
        assert validate_spec(broker_preferred) == []
        assert validate_spec(broker_sym) == []

    def test_empty_states_rejected(self, broker):
        spec = dataclasses.replace(broker, states=(), initial=frozenset())
        codes = {d.code for d in validate_spec(spec)}
        assert "states-empty" in codes and "initial-empty" in codes

    def test_initial_not_among_states(self, broker):
        spec = dataclasses.replace(broker, initial=frozenset({"nowhere"}))
        assert any(d.code == "initial-unknown" for d in validate_spec(spec))

    def test_nonpositive_bounds_rejected(self, broker):
        spec = dataclasses.replace(broker, bounds=dataclasses.replace(broker.bounds, max_issued=0))
        assert any(d.code == "bounds-positive" for d in validate_spec(spec))

    def test_bad_state_structure_reported(self, broker):
        from interstep.structure import Structure

        interp = {name: dict(entries) for name, entries in broker.states[0].structure.tables}
        interp["true"][()] = "false"
        bad = Structure.make(broker.vocab, broker.states[0].structure.base, interp)
        spec = dataclasses.replace(broker, states=(dataclasses.replace(broker.states[0], structure=bad),))
        assert any(d.code == "structure" for d in validate_spec(spec))

    def test_template_cycle_detected(self, broker):
        from interstep.history import Label
        from interstep.model import QueryTemplate
        from interstep.structure import ReplyVar

        t1 = QueryTemplate("c1", (Label("offer0"), ReplyVar("c2")))
        t2 = QueryTemplate("c2", (Label("offer1"), ReplyVar("c1")))
        spec = dataclasses.replace(broker, templates=broker.templates + (t1, t2))
        assert any(d.code == "template-cycle" for d in validate_spec(spec))

    def test_witness_reply_var_rejected(self, broker):
        from interstep.model import WitnessDecl
        from interstep.structure import ReplyVar

        spec = dataclasses.replace(broker, witness=(WitnessDecl(ReplyVar("choose")),))
        assert any(d.code == "witness-reply-var" for d in validate_spec(spec))

    def test_update_of_static_symbol_rejected(self, broker):
        from interstep.model import UpdateRule, Start
        from interstep.structure import App

        rule = UpdateRule("bad", Start(), "yes", (), App("client0"))
        spec = dataclasses.replace(broker, update_rules=broker.update_rules + (rule,))
        assert any(d.code == "update-static" for d in validate_spec(spec))

    def test_strict_mode_warns_without_final_rules(self, broker):
        spec = dataclasses.replace(broker, final_rules=())
        assert not any(d.code == "no-final-rules" for d in validate_spec(spec))
        diags = validate_spec(spec, strict=True)
        assert any(d.code == "no-final-rules" and d.severity == "warning" for d in diags)

    def test_parsed_spec_diagnostics_carry_spans(self, broker):
        spec = dataclasses.replace(broker, bounds=dataclasses.replace(broker.bounds, max_issued=0))
        for d in validate_spec(spec):
            assert d.span is not None
