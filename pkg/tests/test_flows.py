import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import pt, random_admissible_potential, simpson, vectorized_bump
from hamadv.diagnostics import jacobian
from hamadv.errors import TurningPoint
from hamadv.flows import (
    adaptive_quad,
    bump_flow,
    exact_flow,
    free_flow,
    gauss_kronrod_15,
    harmonic_flow,
    time_of_flight,
)
from hamadv.phase import Bump, BumpPotential, FreeParticle, Harmonic, SeparableBump, energy

V1 = BumpPotential.single(0.5, 0.3, 0.8)
V2 = BumpPotential((Bump(0.4, 0.3, 0.6), Bump(1.5, 0.5, 0.5)))


def test_free_flow():
    assert free_flow(pt(0, 1), 0.3) == pt(0.3, 1)
    assert free_flow(pt(2, -1), 0.5) == pt(1.5, -1)
    assert free_flow(pt(4, 7), 0.0) == pt(4, 7)


def test_harmonic_flow():
    x = harmonic_flow(pt(1, 0), math.pi / 2)
    assert x.q[0] == pytest.approx(0.0, abs=1e-15) and x.p[0] == pytest.approx(-1.0, abs=1e-15)
    y = harmonic_flow(pt(1, 0), 2 * math.pi)
    assert abs(y.q[0] - 1) < 1e-14 and abs(y.p[0]) < 1e-14
    assert harmonic_flow(pt(0.3, 0.2), 0.0, 3.0) == pt(0.3, 0.2)
    z = harmonic_flow(pt(1, 0), math.pi / 4, 2.0)
    assert z.q[0] == pytest.approx(0.0, abs=1e-15) and z.p[0] == pytest.approx(-2.0, abs=1e-15)


def test_gauss_kronrod_polynomial_exact():
    val, err = gauss_kronrod_15(lambda x: x**10 - 3 * x**3 + 1, -1.0, 2.0)
    exact = (2**11 + 1) / 11 - 3 * (16 - 1) / 4 + 3
    assert val == pytest.approx(exact, rel=1e-14)
    assert err < 1e-10


def test_adaptive_quad_smooth_integrands():
    assert adaptive_quad(math.exp, 0, 1) == pytest.approx(math.e - 1, abs=1e-13)
    assert adaptive_quad(lambda x: 1 / (1 + 25 * x * x), -1, 1) == pytest.approx(0.4 * math.atan(5), abs=1e-12)
    assert adaptive_quad(math.sin, 0.0, 0.0) == 0.0


def test_time_of_flight_trivial_cases():
    assert time_of_flight(BumpPotential(), 0.0, 0.7, 0.5) == pytest.approx(0.7, abs=1e-15)
    assert time_of_flight(V1, 0.3, 0.3, 0.5) == 0.0
    assert time_of_flight(BumpPotential(), 0.0, 1.0, 2.0) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        time_of_flight(V1, 1.0, 0.0, 0.5)


@pytest.mark.parametrize("V", [V1, V2], ids=["one", "two"])
def test_time_of_flight_against_simpson(V):
    f = vectorized_bump(V)
    E = 0.5
    ref = simpson(lambda x: 1.0 / np.sqrt(2.0 * (E - f(x))), -0.5, 2.5, 1_000_000)
    got = time_of_flight(V, -0.5, 2.5, E)
    assert got > 3.0
    assert abs(got - ref) < 1e-11


def test_time_of_flight_against_scipy_quad(rng):
    for _ in range(10):
        V = random_admissible_potential(rng)
        f = vectorized_bump(V)
        E = 0.5 + rng.uniform(0, 0.5)
        a, b = -1.0, 4.0
        pts = sorted({x for s in V.supports() for x in s if a < x < b})
        ref, _ = quad(lambda x: 1.0 / math.sqrt(2.0 * (E - float(f(x)))), a, b, epsabs=1e-13, epsrel=1e-13, points=pts, limit=200)
        assert abs(time_of_flight(V, a, b, E) - ref) < 1e-11


def test_time_of_flight_strictly_increasing():
    ts = [time_of_flight(V1, 0.0, q1, 0.5) for q1 in np.linspace(0.0, 1.2, 50)]
    assert all(b > a for a, b in zip(ts, ts[1:]))


def test_turning_point_rejected():
    V = BumpPotential.single(0.0, 1.0, 1.3)  # peak ~0.478
    with pytest.raises(TurningPoint):
        time_of_flight(V, -2.0, 2.0, 0.45)
    with pytest.raises(TurningPoint):
        bump_flow(V, pt(-2.0, 0.9), 5.0)
    with pytest.raises(TurningPoint):
        bump_flow(V1, pt(0.0, 0.0), 1.0)


def test_bump_flow_free_cases():
    assert bump_flow(BumpPotential(), pt(0, 1), 0.4) == pt(0.4, 1)
    far = BumpPotential.single(5.0, 0.5, 0.5)
    assert bump_flow(far, pt(0, 1), 0.4) == pt(0.4, 1)
    assert bump_flow(V1, pt(0.3, 1.1), 0.0) == pt(0.3, 1.1)


def test_bump_flow_lags_free_flow():
    V = BumpPotential.single(0.5, 0.4, 1.0)
    x0 = pt(0.1, 1.0)  # V(0.1) = 0 and V > 0 just to the right
    assert V(0.1) == 0.0
    for t in np.linspace(0.01, 2.0, 60):
        assert bump_flow(V, x0, t).q[0] < 0.1 + t


def test_bump_flow_reflections():
    x = bump_flow(V1, pt(1.2, -1.0), 0.7)
    back = bump_flow(V1, x, -0.7)
    assert back.q[0] == pytest.approx(1.2, abs=1e-10) and back.p[0] == pytest.approx(-1.0, abs=1e-10)
    assert x.q[0] > 1.2 - 0.7 - 1e-12  # slowed while crossing the bump


def test_exact_flow_dispatch():
    assert exact_flow(FreeParticle(), pt(0, 1), 0.3) == pt(0.3, 1)
    assert exact_flow(Harmonic(1.0), pt(1, 0), 0.0) == pt(1, 0)
    assert exact_flow(SeparableBump(BumpPotential()), pt(0, 1), 0.4) == pt(0.4, 1)


admissible_start = st.tuples(st.floats(-1.0, 2.0), st.floats(0.95, 1.5))


@given(admissible_start, st.floats(0.0, 1.5), st.floats(0.0, 1.5))
def test_group_property(x0, s, t):
    x = pt(*x0)
    split = bump_flow(V2, bump_flow(V2, x, s), t)
    whole = bump_flow(V2, x, s + t)
    assert abs(split.q[0] - whole.q[0]) <= 1e-9 and abs(split.p[0] - whole.p[0]) <= 1e-9


@given(admissible_start, st.floats(-2.0, 2.0))
def test_energy_conservation_and_inversion(x0, t):
    x = pt(*x0)
    spec = SeparableBump(V2)
    y = bump_flow(V2, x, t)
    assert abs(energy(spec, y) - energy(spec, x)) <= 1e-10
    if t > 0:
        E = energy(spec, x)
        assert abs(time_of_flight(V2, x.q[0], y.q[0], E) - t) <= 1e-11


def test_bump_flow_is_area_preserving():
    fmap = lambda x: bump_flow(V1, x, 0.6)  # noqa: E731
    for q in (-0.2, 0.2, 0.5, 0.9):
        rep = jacobian(fmap, pt(q, 1.05), 1e-5)
        assert abs(rep.determinant - 1.0) <= 1e-5
