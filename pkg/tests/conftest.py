from __future__ import annotations

import dataclasses
from pathlib import Path

import pytest

from limifrob.family import parse_family
from limifrob.pipeline import RunArtifacts, run

FAMILIES = Path(__file__).resolve().parents[1] / "families"

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def load_family(name: str, **overrides):
    fi = parse_family((FAMILIES / f"{name}.fam").read_text())
    return dataclasses.replace(fi, **overrides) if overrides else fi


class Runs:
    """Pipeline results cached for the whole session, keyed by (family, N, verify)."""

    def __init__(self):
        self._cache = {}

    def get(self, name: str, N: int | None = None, verify: bool = False, fibers: int = 1, seed: int = 0):
        key = (name, N, verify, fibers, seed)
        if key not in self._cache:
            fi = load_family(name, **({"N": N} if N else {}))
            art = RunArtifacts()
            rep = run(fi, verify=verify, fibers=fibers, seed=seed, artifacts=art)
            self._cache[key] = (fi, rep, art)
        return self._cache[key]


@pytest.fixture(scope="session")
def runs() -> Runs:
    return Runs()


@pytest.fixture
def accept():
    """Record one acceptance line, then assert it."""

    def record(criterion: str, ok: bool, detail: str = ""):
        _ACCEPTANCE.append((criterion, bool(ok), detail))
        assert ok, f"{criterion}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {criterion}" + (f"  ({detail})" if detail else ""))
