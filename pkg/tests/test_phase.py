import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import pt
from hamadv.errors import DimensionMismatch, InvalidPotential, UnsupportedOrder
from hamadv.phase import (
    Bump,
    BumpPotential,
    FreeParticle,
    Harmonic,
    LiftKind,
    LiftProduct,
    LiftSingle,
    PhasePoint,
    QueryTape,
    SeparableBump,
    agrees_on_tape,
    bump_derivatives,
    energy,
    eval_derivative,
    gradient,
    spec_from_json,
    spec_to_json,
)

BUMP = BumpPotential.single(0.5, 0.25, 0.3)
finite = st.floats(-10, 10, allow_nan=False)


def test_free_particle_derivatives():
    assert eval_derivative(FreeParticle(), (0, 1), pt(3, 5)) == 5.0
    assert eval_derivative(FreeParticle(), (1, 0), pt(3, 5)) == 0.0
    assert eval_derivative(FreeParticle(), (0, 0), pt(3, 5)) == 12.5
    assert eval_derivative(FreeParticle(), (0, 2), pt(3, 5)) == 1.0


def test_bump_value_and_slope_at_center():
    spec = SeparableBump(BUMP)
    assert eval_derivative(spec, (1, 0), pt(0.5, 1)) == 0.0
    assert eval_derivative(spec, (0, 0), pt(0.5, 1)) == pytest.approx(0.5 + 0.3 / math.e, abs=1e-16)


def test_bump_derivatives_closed_form_at_center():
    v, d1, d2 = bump_derivatives(BUMP, 0.5, 2)
    assert v == pytest.approx(0.3 / math.e, rel=1e-15)
    assert d1 == 0.0
    # second derivative of exp(-1/(1-u^2)) at u = 0 is -2/e, scaled by 1/r^2
    assert d2 == pytest.approx(-2.0 * 0.3 / math.e / 0.25**2, rel=1e-14)


def test_bump_derivatives_empty_and_boundary():
    assert bump_derivatives(BumpPotential(), 7.0, 2) == (0.0, 0.0, 0.0)
    assert bump_derivatives(BUMP, 0.75, 2) == (0.0, 0.0, 0.0)
    assert bump_derivatives(BUMP, 0.25, 2) == (0.0, 0.0, 0.0)
    assert bump_derivatives(BUMP, 0.5, 1) == pytest.approx((0.3 / math.e, 0.0))
    with pytest.raises(UnsupportedOrder):
        bump_derivatives(BUMP, 0.5, 3)


@pytest.mark.parametrize("q", np.linspace(0.26, 0.74, 25))
def test_bump_derivatives_match_finite_differences(q):
    h = 1e-5
    v, d1, d2 = bump_derivatives(BUMP, q, 2)
    vp, vm = BUMP(q + h), BUMP(q - h)
    assert d1 == pytest.approx((vp - vm) / (2 * h), abs=1e-6)
    assert d2 == pytest.approx((vp - 2 * v + vm) / h**2, abs=1e-3 * (1 + abs(d2)))


def test_harmonic_values():
    spec = Harmonic(2.0)
    x = pt(1.5, -0.5)
    assert energy(spec, x) == pytest.approx(0.5 * (0.25 + 4 * 2.25))
    assert eval_derivative(spec, (1, 0), x) == pytest.approx(4 * 1.5)
    assert eval_derivative(spec, (2, 0), x) == 4.0
    assert eval_derivative(spec, (1, 1), x) == 0.0


def test_order_and_dimension_errors():
    with pytest.raises(UnsupportedOrder):
        eval_derivative(FreeParticle(), (2, 1), pt(0, 0))
    with pytest.raises(DimensionMismatch):
        eval_derivative(FreeParticle(), (0, 0, 1, 0), pt(0, 0))
    with pytest.raises(DimensionMismatch):
        eval_derivative(LiftSingle(FreeParticle(), 2), (0, 1), pt(0, 0))


def test_tape_records_queries():
    tape = QueryTape()
    gradient(Harmonic(), pt(1, 2), tape)
    assert len(tape) == 2
    assert [r.alpha for r in tape] == [(1, 0), (0, 1)]
    assert [r.value for r in tape] == [1.0, 2.0]
    assert tape.q_coordinates() == [1.0, 1.0]


@given(finite, finite)
def test_evaluation_is_deterministic(q, p):
    spec = SeparableBump(BUMP)
    t1, t2 = QueryTape(), QueryTape()
    for alpha in [(0, 0), (1, 0), (0, 1), (2, 0)]:
        a = eval_derivative(spec, alpha, pt(q, p), t1)
        b = eval_derivative(spec, alpha, pt(q, p), t2)
        assert a.hex() == b.hex()
    assert t1 == t2


@pytest.mark.parametrize("spec", [FreeParticle(), Harmonic(1.3), SeparableBump(BUMP)])
def test_first_derivatives_against_central_differences(spec, rng):
    h = 1e-6
    for _ in range(100):
        q, p = rng.uniform(-1, 2), rng.uniform(-2, 2)
        for j, alpha in enumerate([(1, 0), (0, 1)]):
            exact = eval_derivative(spec, alpha, pt(q, p))
            dq, dp = (h, 0.0) if j == 0 else (0.0, h)
            fd = (energy(spec, pt(q + dq, p + dp)) - energy(spec, pt(q - dq, p - dp))) / (2 * h)
            assert abs(exact - fd) <= 1e-6 * (1 + abs(exact))


def test_potential_bound_on_dense_grid():
    V = BumpPotential((Bump(0.0, 1.0, 0.6), Bump(0.5, 0.3, 0.7)))
    for b in V.bumps:
        lo, hi = b.support
        xs = np.linspace(lo, hi, 10_000)
        assert max(V(x) for x in xs) < 0.5
    for x in [-1.0, -5.0, 1.0, 1.0000001, 3.0]:
        assert V(x) == 0.0


def test_potential_rejects_large_peaks():
    with pytest.raises(InvalidPotential):
        BumpPotential.single(0.0, 1.0, 0.5 * math.e)
    with pytest.raises(InvalidPotential):
        BumpPotential((Bump(0, 1, 0.7), Bump(5, 1, 0.7)))
    with pytest.raises(InvalidPotential):
        Bump(0.0, 0.0, 0.1)
    with pytest.raises(InvalidPotential):
        Bump(0.0, 1.0, -0.1)


def test_supports_merge_overlaps():
    V = BumpPotential((Bump(0, 1, 0.1), Bump(1.5, 1, 0.1), Bump(5, 0.5, 0.1)))
    assert V.supports() == [(-1.0, 2.5), (4.5, 5.5)]


def test_agrees_on_tape_examples():
    tape = QueryTape()
    x = pt(0.0, 1.0)
    energy(FreeParticle(), x, tape)
    gradient(FreeParticle(), x, tape)
    far = SeparableBump(BumpPotential.single(3.0, 0.5, 0.3))
    assert agrees_on_tape(FreeParticle(), FreeParticle(), tape)
    assert agrees_on_tape(FreeParticle(), far, tape)
    assert agrees_on_tape(far, FreeParticle(), tape)
    near = SeparableBump(BumpPotential.single(0.1, 0.5, 0.3))
    assert not agrees_on_tape(FreeParticle(), near, tape)
    assert not agrees_on_tape(near, FreeParticle(), tape)


def test_agreement_uses_lift_tag():
    kind = LiftKind("single", 2)
    tape = QueryTape()
    from hamadv.phase import QueryRecord

    x = PhasePoint((0.0, 0.0), (1.0, 0.0))
    tape.append(QueryRecord(x, (1, 0, 0, 0), 0.0, lift=kind))
    near = SeparableBump(BumpPotential.single(0.0, 0.5, 0.3))
    assert agrees_on_tape(FreeParticle(), FreeParticle(), tape)
    assert agrees_on_tape(FreeParticle(), near, tape)  # slope vanishes at the bump centre
    tape.append(QueryRecord(x, (0, 0, 0, 0), 0.5, lift=kind))
    assert not agrees_on_tape(FreeParticle(), near, tape)


def test_lift_examples():
    single = LiftSingle(FreeParticle(), 2)
    x = PhasePoint((0.0, 0.0), (1.0, 3.0))
    assert eval_derivative(single, (0, 0, 1, 0), x) == 1.0
    assert eval_derivative(single, (0, 0, 0, 1), x) == 0.0
    prod = LiftProduct(FreeParticle(), 3)
    assert energy(prod, PhasePoint((0, 0, 0), (1, 1, 1))) == 1.5
    h = LiftProduct(Harmonic(), 2)
    assert eval_derivative(h, (1, 1, 0, 0), PhasePoint((1, 2), (0, 0))) == 0.0
    assert eval_derivative(h, (2, 0, 0, 0), PhasePoint((1, 2), (0, 0))) == 1.0


def test_lift_point():
    x = pt(0.3, 1.2)
    assert LiftKind("single", 3).lift_point(x) == PhasePoint((0.3, 0.0, 0.0), (1.2, 0.0, 0.0))
    assert LiftKind("product", 2).lift_point(x) == PhasePoint((0.3, 0.3), (1.2, 1.2))
    with pytest.raises(ValueError):
        LiftKind("single", 1)


@pytest.mark.parametrize(
    "spec",
    [
        FreeParticle(),
        Harmonic(0.1 + 0.2),
        SeparableBump(BumpPotential((Bump(1 / 3, 0.1, 0.2), Bump(2.0, 0.7, 1 / 7)))),
        LiftSingle(Harmonic(2.5), 3),
        LiftProduct(SeparableBump(BUMP), 2),
    ],
)
def test_spec_json_round_trip(spec):
    text = json.dumps(spec_to_json(spec))
    assert spec_from_json(json.loads(text)) == spec


def test_phase_point_validation_and_json():
    with pytest.raises(ValueError):
        PhasePoint((math.nan,), (0.0,))
    with pytest.raises(DimensionMismatch):
        PhasePoint((0.0, 1.0), (0.0,))
    x = PhasePoint((0.1, 1 / 3), (2.0, -1e-300))
    assert PhasePoint.from_json(json.loads(json.dumps(x.to_json()))) == x
    assert list(x.as_array()) == [0.1, 1 / 3, 2.0, -1e-300]
