"""Shared fixtures and the acceptance summary printed at the end of a run."""

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ACCEPTANCE = {}


def record(criterion, passed, detail):
    """Register the outcome of one part of an acceptance criterion.

    ``passed`` is True, False, None (skipped) or "info" (context only).
    """
    if passed not in (None, "info"):
        passed = bool(passed)
    ACCEPTANCE.setdefault(criterion, []).append((passed, detail))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def lag_pair(d, z_norm, seed=0):
    """A point in the unit box and a second point at distance ``z_norm`` from it."""
    g = np.random.default_rng(seed)
    x = g.random(d)
    u = g.standard_normal(d)
    return x, x + z_norm * u / np.linalg.norm(u)


def sphere_pair(d, z_norm, seed=0):
    """Two unit vectors at Euclidean distance ``z_norm`` in a random plane."""
    g = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(g.standard_normal((d, d)))
    theta = 2.0 * np.arcsin(z_norm / 2.0)
    x = Q[:, 0]
    y = np.cos(theta) * Q[:, 0] + np.sin(theta) * Q[:, 1]
    return x, y


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(str(k).split(".")[0]), str(k))):
        parts = ACCEPTANCE[key]
        graded = [p for p, _ in parts if p != "info"]
        if any(p is False for p in graded):
            status = "FAIL"
        elif all(p is None for p in graded):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {key}: {status}")
        for passed, detail in parts:
            tag = {True: "pass", False: "FAIL", None: "skip", "info": "info"}[passed]
            terminalreporter.write_line(f"    [{tag}] {detail}")
