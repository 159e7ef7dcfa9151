from __future__ import annotations

from pathlib import Path

import pytest

from interstep.dsl import parse_spec
from interstep.history import EMPTY_HISTORY, History, Label, Query, mk_history

ROOT = Path(__file__).resolve().parents[1]
SPECS = ROOT / "specs"
SCRIPTS = SPECS / "scripts"

BROKER_POOL = ("client0", "client1", "no", "t", "yes")


def lq(name: str) -> Query:
    """Label-only query, the common case in the broker fixture."""
    return Query((Label(name),))


def h(*entries: tuple[str, str, int]) -> History:
    """History from (label, reply, phase) triples."""
    answers = {lq(name): reply for name, reply, _ in entries}
    phases = {lq(name): phase for name, _, phase in entries}
    return mk_history(answers, phases)


@pytest.fixture(scope="session")
def broker():
    return parse_spec((SPECS / "broker.isa").read_text())


@pytest.fixture(scope="session")
def broker_state(broker):
    return broker.state("X0")


@pytest.fixture(scope="session")
def broker_preferred():
    return parse_spec((SPECS / "broker_preferred.isa").read_text())


@pytest.fixture(scope="session")
def broker_sym():
    return parse_spec((SPECS / "broker_sym.isa").read_text())


@pytest.fixture(scope="session")
def empty_history():
    return EMPTY_HISTORY
