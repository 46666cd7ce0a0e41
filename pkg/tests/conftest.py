from __future__ import annotations

import time

import pytest

from fradiag.data import Group, LabeledDataset
from fradiag.winding import generate_group

GENERATION_SEED = 0


class GroupCache:
    """Synthetic groups generated on first use and shared by the whole session."""

    def __init__(self) -> None:
        self.data: dict[Group, LabeledDataset] = {}
        self.seconds: dict[Group, float] = {}

    def __call__(self, group: Group) -> LabeledDataset:
        group = Group(group)
        if group not in self.data:
            start = time.perf_counter()
            self.data[group] = generate_group(group, GENERATION_SEED)
            self.seconds[group] = time.perf_counter() - start
        return self.data[group]


@pytest.fixture(scope="session")
def groups() -> GroupCache:
    return GroupCache()


class Verdicts:
    """One pass/fail line per acceptance criterion, echoed in the terminal summary."""

    def __init__(self) -> None:
        self.lines: dict[int, str] = {}

    def record(self, number: int, checks: dict[str, bool], detail: str = "") -> None:
        failed = [name for name, ok in checks.items() if not ok]
        status = "FAIL" if failed else "PASS"
        text = f"criterion {number:2d}: {status}"
        if detail:
            text += f"  {detail}"
        if failed:
            text += f"  [failed: {', '.join(failed)}]"
        self.lines[number] = text
        print(text)
        assert not failed, text


VERDICTS = Verdicts()


@pytest.fixture(scope="session")
def verdicts() -> Verdicts:
    return VERDICTS


def pytest_terminal_summary(terminalreporter):
    if VERDICTS.lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(VERDICTS.lines):
            terminalreporter.write_line(VERDICTS.lines[number])
