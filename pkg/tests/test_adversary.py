import json
import math
from dataclasses import replace

import pytest

from conftest import pt
from hamadv.adversary import (
    ConstructionParams,
    SweepGrid,
    Thresholds,
    construct_adversarial_potential,
    evaluate_verdict,
    generate_certificate,
    measure_c,
    run_traced,
    select_q0,
)
from hamadv.diagnostics import SweepRow
from hamadv.errors import EnergyNotConserved, IncompleteCertificate, NonpositiveC, NoRoomForBump
from hamadv.flows import bump_flow, free_flow
from hamadv.integrators import IntegratorConfig, StepResult, shipped_methods
from hamadv.phase import FreeParticle, QueryRecord, QueryTape, bump_derivatives

SP_LEAPFROG = IntegratorConfig("step_and_project", base="leapfrog")
SMALL = SweepGrid(nq=16, np=4)


class ConstantShift:
    """``(q, p) -> (q + a dt, p + b)`` without looking at ``H``."""

    def __init__(self, a, b=0.0):
        self.a, self.b = a, b

    def step(self, spec, x, dt, tape=None):
        return StepResult(point=pt(x.q[0] + self.a * dt, x.p[0] + self.b))


class FreeFlowMap:
    """The free-particle flow whatever ``H`` is; queries nothing."""

    def step(self, spec, x, dt, tape=None):
        return StepResult(point=free_flow(x, dt))


class AlwaysUndefined:
    def step(self, spec, x, dt, tape=None):
        return StepResult(reason="SolverDiverged")


def test_run_traced_examples():
    res, tape = run_traced(IntegratorConfig("rk4"), FreeParticle(), pt(0, 1), 0.1)
    assert res.point == pt(0.1, 1.0) and len(tape) == 8
    res, tape = run_traced(IntegratorConfig("explicit_euler"), FreeParticle(), pt(0, 1), 0.1)
    assert len(tape) == 2 and {r.point for r in tape} == {pt(0, 1)}
    res, tape = run_traced(IntegratorConfig("implicit_midpoint"), FreeParticle(), pt(0, 1), 0.1)
    assert res.point == pt(0.1, 1.0)
    assert pt(0.05, 1.0) in {r.point for r in tape}


@pytest.mark.parametrize("method", shipped_methods(), ids=lambda m: m.name)
def test_measure_c_is_one_for_shipped_methods(method):
    assert measure_c(method, 0.1) == 1.0


def test_measure_c_constructed_maps():
    assert measure_c(ConstantShift(0.5), 0.1) == 0.5
    with pytest.raises(EnergyNotConserved):
        measure_c(ConstantShift(0.0, 0.1), 0.1)
    with pytest.raises(NonpositiveC):
        measure_c(ConstantShift(-1.0), 0.1)


def _tape(qs):
    t = QueryTape()
    for q in qs:
        t.append(QueryRecord(pt(q, 1.0), (0, 1), 1.0))
    return t


def test_select_q0_examples():
    assert select_q0(_tape([0.0, 0.05]), 1.0, 0.1, 0.1) == pytest.approx(0.2, abs=1e-16)
    assert select_q0(QueryTape(), 1.0, 0.1, 0.1) == pytest.approx(0.2, abs=1e-16)
    assert select_q0(_tape([7.3]), 1.0, 0.1, 0.1) == 7.3 + 0.1


def test_construct_potential_examples():
    V = construct_adversarial_potential((0.2, 0.3), [], 0.25, 0.001)
    (b,) = V.bumps
    assert b.center == pytest.approx(0.25) and b.radius == pytest.approx(0.045) and b.amplitude == 0.25
    V = construct_adversarial_potential((0.2, 0.3), [0.25], 0.25, 0.001)
    (b,) = V.bumps
    assert b.center == pytest.approx(0.2245) and b.radius == pytest.approx(0.45 * 0.049)
    with pytest.raises(NoRoomForBump):
        construct_adversarial_potential((0.2, 0.3), [0.2 + 0.003 * k for k in range(40)], 0.25, 0.001)


def test_constructed_potential_vanishes_near_exclusions(rng):
    for _ in range(30):
        excluded = list(rng.uniform(0.0, 1.0, int(rng.integers(0, 8))))
        r = 0.01
        V = construct_adversarial_potential((0.0, 1.0), excluded, 0.3, r)
        for e in excluded:
            for q in (e - r, e - 0.5 * r, e, e + 0.5 * r, e + r):
                assert bump_derivatives(V, q, 2) == (0.0, 0.0, 0.0)
        for q in (-0.5, 0.0, 1.0, 1.5):
            assert V(q) == 0.0
        assert 0.0 < V.bumps[0].peak < 0.5


@pytest.fixture(scope="module")
def sp_certificate():
    return generate_certificate(SP_LEAPFROG, ConstructionParams(dt=0.1))


def test_step_and_project_certificate(sp_certificate):
    cert = sp_certificate
    assert cert.complete and cert.c == 1.0
    assert cert.output_at_origin_match and cert.output_at_q0_match
    assert cert.tape0_agrees and cert.tape1_agrees
    assert cert.mismatch > 0
    assert cert.lag_lower_bound > 0
    assert cert.mismatch >= cert.lag_lower_bound - 1e-9
    assert cert.verdict.failed_property in ("EnergyViolated", "VolumeViolated", "FlowMismatchOnly")
    assert cert.verdict.violated


def test_certificate_invariants(sp_certificate):
    cert = sp_certificate
    out, exact = cert.output_at_q0, cert.exact_flow_at_q0
    assert cert.mismatch == math.hypot(out.q[0] - exact.q[0], out.p[0] - exact.p[0])
    assert exact == bump_flow(cert.potential, pt(cert.q0, 1.0), cert.c * cert.params.dt)
    lo, hi = cert.potential.supports()[0]
    assert cert.q0 < lo and hi < cert.q0 + cert.c * cert.params.dt
    for q in cert.tape1.q_coordinates() + cert.tape0.q_coordinates():
        assert bump_derivatives(cert.potential, q, 2) == (0.0, 0.0, 0.0)
    assert cert.q0 >= cert.c * cert.params.dt


def test_certificate_is_deterministic(sp_certificate):
    again = generate_certificate(SP_LEAPFROG, ConstructionParams(dt=0.1))
    assert json.dumps(again.to_json(True)) == json.dumps(sp_certificate.to_json(True))


def test_certificate_with_scaled_amplitude():
    cert = generate_certificate(SP_LEAPFROG, ConstructionParams(dt=0.1, grid=SMALL).scaled(0.5))
    assert cert.potential.bumps[0].amplitude == 0.125
    assert cert.complete and cert.output_at_origin_match
    assert cert.mismatch >= cert.lag_lower_bound - 1e-9 > 0


@pytest.mark.parametrize("name", ["explicit_euler", "leapfrog"])
def test_non_conserving_methods_violate_energy(name):
    cert = generate_certificate(IntegratorConfig(name), ConstructionParams(dt=0.1, grid=SMALL))
    assert cert.complete
    assert cert.verdict.failed_property == "EnergyViolated"


def test_free_flow_masquerade_violates_energy():
    cert = generate_certificate(FreeFlowMap(), ConstructionParams(dt=0.1, grid=SMALL))
    assert len(cert.tape0) == 0 and cert.tape0_agrees and cert.tape1_agrees
    assert cert.verdict.failed_property == "EnergyViolated"


def test_aborted_certificates():
    cert = generate_certificate(AlwaysUndefined(), ConstructionParams(dt=0.1))
    assert cert.status == "aborted" and cert.verdict.failed_property == "Undefinedness"
    cert = generate_certificate(ConstantShift(1.0, 0.01), ConstructionParams(dt=0.1))
    assert cert.verdict.failed_property == "EnergyViolated"
    cert = generate_certificate(ConstantShift(-1.0), ConstructionParams(dt=0.1))
    assert cert.verdict.failed_property == "Inconclusive" and "NonpositiveC" in cert.error
    with pytest.raises(IncompleteCertificate):
        evaluate_verdict(cert)


def _row(q, det=1.0, err=0.0, energy_error=0.0, reason=None):
    if reason:
        return SweepRow(q, 1.0, None, None, None, reason)
    return SweepRow(q, 1.0, det, 1e-8, energy_error)


def test_verdict_priority(sp_certificate):
    base = replace(sp_certificate, det_sweep=[_row(0.0), _row(0.1)])
    th = Thresholds()
    assert evaluate_verdict(base, th).failed_property == "FlowMismatchOnly"
    vol = replace(base, det_sweep=[_row(0.0), _row(0.1, det=1.5)])
    assert evaluate_verdict(vol, th).failed_property == "VolumeViolated"
    noisy = replace(base, det_sweep=[SweepRow(0.1, 1.0, 1.5, 1e-3, 0.0)])
    assert evaluate_verdict(noisy, th).failed_property == "FlowMismatchOnly"
    en = replace(vol, det_sweep=vol.det_sweep + [_row(0.2, energy_error=1e-6)])
    assert evaluate_verdict(en, th).failed_property == "EnergyViolated"
    und = replace(en, det_sweep=en.det_sweep + [_row(0.3, reason="ProjectionFailed")])
    assert evaluate_verdict(und, th).failed_property == "Undefinedness"
    quiet = replace(base, mismatch=0.0)
    assert evaluate_verdict(quiet, th).failed_property == "Inconclusive"
    assert not evaluate_verdict(quiet, th).violated


def test_replay_mismatch_is_inconclusive(sp_certificate):
    broken = replace(sp_certificate, output_at_q0_match=False)
    assert evaluate_verdict(broken).failed_property == "Inconclusive"


def test_params_validation():
    with pytest.raises(ValueError):
        ConstructionParams(dt=0.1, lam=0.5)
    with pytest.raises(ValueError):
        ConstructionParams(dt=0.0)
    assert ConstructionParams(dt=0.1).radius == 0.001
