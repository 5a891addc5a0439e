import pytest

from hkcollapse.qrules import trial_rng
from hkcollapse.scenarios import ScenarioConfig, build_engine

_CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    _CRITERIA[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def epr_engine():
    return build_engine(ScenarioConfig("epr_singlet", trials=1, seed=42))


@pytest.fixture(scope="session")
def epr_trial(epr_engine):
    """First seeded EPR trial with two single collapses (A then B)."""
    for i in range(100):
        res = epr_engine.run(trial_rng(42, i))
        if len(res.ledger) == 2 and not res.ledger[0].is_dual:
            return res
    raise RuntimeError("no two-collapse trial found")
