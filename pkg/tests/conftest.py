"""Suite-wide checks.

Every covariance fit made by any test passes through ``_finalize``; the
autouse fixture below records each one and fails the test if a fit whose
half-sweeps are exact block maximizations has a decreasing objective trace.
"""
import numpy as np
import pytest

from ipca import estimators

ASCENT_SLACK = 1e-9

FIT_LOG = []


def ascent_violation(trace):
    """Largest decrease between consecutive trace entries, relative to
    ``max(1, |f|)``; non-positive means the trace is non-decreasing."""
    t = np.asarray(trace)
    if t.size < 2:
        return -np.inf
    drops = (t[:-1] - t[1:]) / np.maximum(1.0, np.abs(t[:-1]))
    return float(drops.max())


@pytest.fixture(autouse=True)
def _ascent_guard(monkeypatch):
    original = estimators._finalize
    seen = []

    def recording(*args, **kwargs):
        fit = original(*args, **kwargs)
        seen.append(fit)
        FIT_LOG.append(fit)
        return fit

    monkeypatch.setattr(estimators, "_finalize", recording)
    yield seen
    bad = [
        (f.penalty.family.value, ascent_violation(f.objective_trace))
        for f in seen
        if f.ascent_expected and ascent_violation(f.objective_trace) > ASCENT_SLACK
    ]
    assert not bad, f"objective trace decreased: {bad}"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


def record_acceptance(number, ok, detail):
    """Store and print one acceptance verdict."""
    line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE and not FIT_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
    checked = [f for f in FIT_LOG if f.ascent_expected]
    worst = max((ascent_violation(f.objective_trace) for f in checked), default=-np.inf)
    verdict = "PASS" if worst <= ASCENT_SLACK else "FAIL"
    terminalreporter.write_line(
        f"ascent over the whole session: {verdict}  {len(checked)} fits, largest relative drop {max(worst, 0.0):.2e}"
    )
