import math

import numpy as np
import pytest
from hypothesis import settings

from hamadv.phase import Bump, BumpPotential, PhasePoint

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def vectorized_bump(V: BumpPotential):
    """Independent numpy evaluation of a bump potential, used as a cross-check."""

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for b in V.bumps:
            u = (x - b.center) / b.radius
            inside = np.abs(u) < 1.0
            s = 1.0 - u[inside] ** 2
            out[inside] += b.amplitude * np.exp(-1.0 / s)
        return out

    return f


def simpson(f, a, b, panels):
    x = np.linspace(a, b, panels + 1)
    y = f(x)
    h = (b - a) / panels
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


def random_admissible_potential(rng, max_bumps=3, total_peak=0.45, span=(0.0, 3.0)):
    k = int(rng.integers(1, max_bumps + 1))
    weights = rng.uniform(0.2, 1.0, k)
    amps = weights / weights.sum() * total_peak * math.e * rng.uniform(0.3, 1.0)
    centers = rng.uniform(*span, k)
    radii = rng.uniform(0.1, 0.6, k)
    return BumpPotential(tuple(Bump(float(c), float(r), float(a)) for c, r, a in zip(centers, radii, amps)))


def pt(q, p):
    return PhasePoint.planar(q, p)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
