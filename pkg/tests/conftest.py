import pytest

_RESULTS: dict[str, list[tuple[bool, str]]] = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; lines are summarised at the end of the run."""

    def record(criterion: str, passed: bool, detail: str):
        _RESULTS.setdefault(criterion, []).append((bool(passed), detail))
        print(f"[{criterion}] {'PASS' if passed else 'FAIL'}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_RESULTS, key=lambda c: int(c.split()[1])):
        parts = _RESULTS[crit]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"{crit}: {'PASS' if ok else 'FAIL'} | {detail}")


@pytest.fixture(scope="session")
def canonical_bath():
    """N = 4000 uniform finite bath at gamma = 0.1 pi, Lambda = 5, m = 1, k = 0 (built once)."""
    import math

    from qdsf.bath import diagonalize, discretize
    from qdsf.coupling import CouplingSpec, make_mode

    spec = CouplingSpec(0.1 * math.pi, 5.0)
    return diagonalize(discretize(spec, make_mode(spec, 0.0, 1.0), 4000))
