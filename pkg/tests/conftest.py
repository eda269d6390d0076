"""Shared fixtures and the acceptance-criteria result summary."""

import re

import pytest

_CRITERION_RE = re.compile(r"test_criterion_(\d+)_(\w+)")
_RESULTS = {}  # criterion number -> {"slug", "outcome", "detail"}
_NOTES = {}  # nodeid -> detail string recorded by the test itself


@pytest.fixture
def note(request):
    """Attach a one-line detail to the criterion verdict printed at the end."""

    def _note(text):
        _NOTES[request.node.nodeid] = str(text)

    return _note


@pytest.fixture(scope="session")
def jit_warm():
    """Compile the rollout kernels once so wall-time-limited checks do not
    pay the first-call compilation cost."""
    import numpy as np

    from vicopt import LiveForceSource, PlantState, rollout_cost
    from vicopt.runtime import run_episode
    from vicopt.scenario import scenario_from_dict

    sc = scenario_from_dict(
        {
            "name": "warmup",
            "episode_length": 0.3,
            "initial_state": {"e": [0.5, 0, 0, 0, 0, 0]},
            "constant_gains": {"m": 1.0, "kd": 5.0, "kp": 40.0},
            "environment": {"surfaces": [{"axis": 0, "location": 0.2, "stiffness": 500.0, "penetration_sign": -1}]},
            "safe_set": {"d_lb": -2.0, "d_ub": 2.0, "active": True},
            "loop": {"buffer_period": 0.12, "substeps": 2, "sqp": {"max_iter": 2}},
        }
    )
    run_episode(sc)  # replay-path kernel via the scheduled gain solves
    u = np.concatenate([np.full(6, 5.0), np.full(6, 40.0), np.ones(6)])
    src = LiveForceSource(tuple(sc.surfaces), None)
    rollout_cost(u, PlantState(sc.e0.copy(), sc.edot0.copy(), 0.0), src, 0.2, 0.008, "fitave", 2)
    return True


def pytest_runtest_logreport(report):
    m = _CRITERION_RE.search(report.nodeid)
    if not m:
        return
    num, slug = int(m.group(1)), m.group(2)
    if report.when == "setup" and report.skipped:
        _RESULTS[num] = {"slug": slug, "outcome": "SKIP", "detail": ""}
        return
    if report.when != "call":
        return
    detail = _NOTES.get(report.nodeid, "")
    if report.failed:
        crash = getattr(report.longrepr, "reprcrash", None)
        reason = crash.message.splitlines()[0] if crash else "failed"
        detail = f"{detail}; {reason}" if detail else reason
    _RESULTS[num] = {"slug": slug, "outcome": "PASS" if report.passed else "FAIL", "detail": detail}


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        r = _RESULTS[num]
        line = f"criterion {num} ({r['slug']}): {r['outcome']}"
        if r["detail"]:
            line += f" -- {r['detail']}"
        terminalreporter.write_line(line)
