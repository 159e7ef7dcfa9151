from __future__ import annotations

import dataclasses

import pytest

from conftest import BROKER_POOL, SPECS, h, lq
from interstep.analysis import (
    AnalysisError,
    ConfigMismatch,
    EnumerationConfig,
    TruncationWarning,
    agreement_property,
    all_bounded_histories,
    brute_force_attainable,
    brute_force_coherent,
    check_postulates,
    enumerate_attainable,
    equivalent,
    format_equivalence_report,
    format_postulate_report,
    parse_iso_file,
    query_universe,
    weak_equivalent,
)
from interstep.dsl import parse_spec
from interstep.history import EMPTY_HISTORY, initial_segments, is_initial_segment
from interstep.model import Answered, And, IssueRule, Unanswered, is_attainable, verdict

SMALL = EnumerationConfig(reply_pool=("yes", "no"), max_phases=3, max_domain=4)
FULL = EnumerationConfig(reply_pool=BROKER_POOL, max_phases=3, max_domain=4)


class TestConfig:
    def test_bounds_must_be_positive(self):
        with pytest.raises(AnalysisError):
            EnumerationConfig(max_phases=0)

    def test_pool_must_lie_in_the_base(self, broker_state):
        cfg = EnumerationConfig(reply_pool=("ghost",))
        with pytest.raises(AnalysisError):
            cfg.pool_for(broker_state)

    def test_default_pool_is_the_whole_base(self, broker_state):
        assert EnumerationConfig().pool_for(broker_state) == broker_state.base


class TestEnumerate:
    def test_machine_without_issue_rules_has_only_the_empty_history(self, broker, broker_state):
        quiet = dataclasses.replace(broker, issue_rules=(), final_rules=(), update_rules=())
        res = enumerate_attainable(quiet, broker_state, SMALL)
        assert res.histories == {EMPTY_HISTORY}
        assert not res.truncated

    def test_one_phase_bound_matches_brute_force(self, broker, broker_state):
        cfg = EnumerationConfig(reply_pool=("yes", "no"), max_phases=1, max_domain=4)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            res = enumerate_attainable(broker, broker_state, cfg)
            oracle = brute_force_attainable(broker, broker_state, cfg)
        assert res.histories == oracle
        # each initial query is unanswered or answered from the pool, not all unanswered
        assert sum(1 for xi in res.histories if xi.length == 1) == 3**3 - 1

    def test_full_space_equals_brute_force(self, broker, broker_state):
        res = enumerate_attainable(broker, broker_state, FULL)
        assert not res.truncated
        assert res.histories == brute_force_attainable(broker, broker_state, FULL)

    def test_all_enumerated_are_attainable(self, broker, broker_state):
        res = enumerate_attainable(broker, broker_state, SMALL)
        for xi in res.histories:
            assert is_attainable(broker, broker_state, xi)

    def test_prefix_closed(self, broker, broker_state):
        res = enumerate_attainable(broker, broker_state, SMALL)
        for xi in res.histories:
            for eta in initial_segments(xi):
                assert eta in res.histories

    def test_truncation_flag_and_warning(self, broker, broker_state):
        cfg = EnumerationConfig(reply_pool=("yes", "no"), max_phases=1, max_domain=4)
        with pytest.warns(TruncationWarning):
            res = enumerate_attainable(broker, broker_state, cfg)
        assert res.truncated

    def test_domain_bound_truncates(self, broker, broker_state):
        cfg = EnumerationConfig(reply_pool=("yes", "no"), max_phases=3, max_domain=1)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            res = enumerate_attainable(broker, broker_state, cfg)
        assert res.truncated
        assert all(len(xi.domain) <= 1 for xi in res.histories)


class TestBruteForce:
    def test_universe_is_the_four_template_instances(self, broker, broker_state):
        universe = query_universe(broker, broker_state, ("yes", "no"))
        assert universe == {lq("offer0"), lq("offer1"), lq("timeout"), lq("choose")}

    def test_bounded_histories_respect_bounds(self, broker, broker_state):
        cfg = EnumerationConfig(reply_pool=("yes",), max_phases=2, max_domain=2)
        for xi in all_bounded_histories(broker, broker_state, cfg):
            assert xi.length <= 2 and len(xi.domain) <= 2

    def test_coherent_filter_is_a_superset_of_attainable(self, broker, broker_state):
        coherent = brute_force_coherent(broker, broker_state, SMALL)
        attainable = brute_force_attainable(broker, broker_state, SMALL)
        assert attainable <= coherent
        assert any(xi not in attainable for xi in coherent)


class TestCheckPostulates:
    def test_broker_conforms(self, broker):
        report = check_postulates(broker, FULL)
        assert report.passed, format_postulate_report(report)
        assert not report.truncated

    def test_symmetrized_fixture_with_swap_isomorphism(self, broker_sym):
        isos = parse_iso_file((SPECS / "swap.iso").read_text())
        report = check_postulates(broker_sym, FULL, isos)
        assert report.passed, format_postulate_report(report)

    def test_broken_isomorphism_is_reported(self, broker_sym):
        report = check_postulates(broker_sym, SMALL, [({"client0": "client0"}, "X0", "Y0")])
        assert not report.section("isomorphism").passed

    def test_strict_mode_finds_missing_final_rules(self, broker):
        # deleting both no-sale endings leaves complete coherent histories
        # whose finality is only implicit
        gutted = dataclasses.replace(
            broker, final_rules=tuple(r for r in broker.final_rules if r.name not in ("no_sale", "expired"))
        )
        report = check_postulates(gutted, SMALL, strict=True)
        assert not report.section("step-a").passed
        lax = check_postulates(gutted, SMALL, strict=False)
        assert lax.section("step-a").passed

    def test_too_small_declared_bound_fails(self, broker):
        tight = dataclasses.replace(broker, bounds=dataclasses.replace(broker.bounds, max_issued=2))
        report = check_postulates(tight, SMALL)
        assert not report.section("bounds").passed

    def test_report_formats(self, broker):
        report = check_postulates(broker, SMALL)
        human = format_postulate_report(report)
        machine = format_postulate_report(report, "machine")
        assert "result: conforming" in human
        assert "result=conforming" in machine


def add_unsatisfiable_rule(spec):
    rule = IssueRule("never", And(Answered("choose"), Unanswered("choose")), spec.issue_rules[0].template)
    return dataclasses.replace(spec, issue_rules=spec.issue_rules + (rule,))


def reorder_rules(spec):
    return dataclasses.replace(
        spec,
        issue_rules=tuple(reversed(spec.issue_rules)),
        final_rules=tuple(reversed(spec.final_rules)),
        update_rules=tuple(reversed(spec.update_rules)),
    )


class TestEquivalence:
    def test_reflexive(self, broker):
        report = equivalent(broker, broker, SMALL)
        assert report.equivalent
        assert report.divergence is None

    def test_unsatisfiable_extra_rule_changes_nothing(self, broker):
        assert equivalent(broker, add_unsatisfiable_rule(broker), SMALL).equivalent

    def test_reordered_rules_are_equivalent(self, broker):
        assert equivalent(broker, reorder_rules(broker), SMALL).equivalent

    def test_preferred_client_variant_diverges_at_the_tie(self, broker, broker_preferred):
        report = equivalent(broker, broker_preferred, FULL)
        assert not report.equivalent
        d = report.divergence
        assert d is not None
        assert d.state == "X0"
        assert d.clause in (3, 4)
        assert d.history == h(("offer0", "yes", 0), ("offer1", "yes", 0))

    def test_weak_checker_agrees_on_the_variant(self, broker, broker_preferred):
        assert not weak_equivalent(broker, broker_preferred, FULL).equivalent
        assert agreement_property(broker, broker_preferred, FULL)

    def test_weak_checker_agrees_on_equivalent_pairs(self, broker):
        for mutant in (broker, add_unsatisfiable_rule(broker), reorder_rules(broker)):
            assert weak_equivalent(broker, mutant, SMALL).equivalent
            assert agreement_property(broker, mutant, SMALL)

    def test_vocabulary_mismatch_fails_fast(self, broker):
        text = (SPECS / "broker.isa").read_text().replace("dynamic owner/0", "dynamic owner/0\n  dynamic extra/0")
        other = parse_spec(text)
        with pytest.raises(ConfigMismatch):
            equivalent(broker, other, SMALL)

    def test_different_labels_fail_clause_one(self, broker):
        other = dataclasses.replace(broker, labels=broker.labels | {"extra"})
        report = equivalent(broker, other, SMALL)
        assert not report.equivalent
        assert report.divergence.clause == 1

    def test_candidate_with_strictly_larger_attainable_set_rejected_by_both(self, broker, broker_preferred):
        # the preferred variant's attainable set is strictly contained in the
        # broker's; both checkers must reject (the induction in the weak
        # checker forces attainable-set equality)
        ra = enumerate_attainable(broker, broker.state("X0"), FULL).histories
        rb = enumerate_attainable(broker_preferred, broker_preferred.state("X0"), FULL).histories
        assert rb < ra
        assert not equivalent(broker, broker_preferred, FULL).equivalent
        assert not weak_equivalent(broker, broker_preferred, FULL).equivalent

    def test_unattainable_differences_are_invisible_to_both(self, broker):
        # swapping the two first-reply-wins update rules only changes update
        # sets at sequential-yes histories, all of which are unattainable
        swapped = []
        for r in broker.update_rules:
            if r.name == "sell0_first":
                swapped.append(dataclasses.replace(r, value=__import__("interstep.structure", fromlist=["App"]).App("client1")))
            elif r.name == "sell1_first":
                swapped.append(dataclasses.replace(r, value=__import__("interstep.structure", fromlist=["App"]).App("client0")))
            else:
                swapped.append(r)
        mutant = dataclasses.replace(broker, update_rules=tuple(swapped))
        assert equivalent(broker, mutant, FULL).equivalent
        assert weak_equivalent(broker, mutant, FULL).equivalent

    def test_report_formats(self, broker, broker_preferred):
        report = equivalent(broker, broker_preferred, FULL)
        human = format_equivalence_report(report)
        machine = format_equivalence_report(report, "machine")
        assert "not equivalent" in human
        assert "equivalent=false" in machine
        assert any(line.startswith("divergence.history=") for line in machine.splitlines())

    def test_truncated_verdict_is_labeled(self, broker):
        import warnings

        cfg = EnumerationConfig(reply_pool=("yes", "no"), max_phases=1, max_domain=4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            report = equivalent(broker, broker, cfg)
        assert report.equivalent and report.truncated
        assert "equivalent up to bounds" in format_equivalence_report(report)


class TestIsoFile:
    def test_parse(self):
        isos = parse_iso_file("# swap\niso X0 Y0 { client0 -> client1 ; client1 -> client0 }\n")
        assert isos == [({"client0": "client1", "client1": "client0"}, "X0", "Y0")]

    def test_bad_lines_rejected(self):
        for text in ["iso X0 { a -> b }", "iso X0 Y0 a -> b", "iso X0 Y0 { a b }"]:
            with pytest.raises(AnalysisError):
                parse_iso_file(text)
