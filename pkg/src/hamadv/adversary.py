"""Adversarial bump Hamiltonians for energy-conserving integrators.

Given a taped integrator, :func:`generate_certificate`

1. steps the free particle ``H = p^2/2`` from ``(0, 1)`` and reads off the
   translation constant ``c`` from ``(0, 1) -> (c dt, 1)``;
2. picks ``q0`` to the right of every queried position and steps again from
   ``(q0, 1)``;
3. places a bump ``V`` inside ``[q0, q0 + c dt]`` that vanishes on a
   neighbourhood of every position queried by either step;
4. replays both steps on ``p^2/2 + V(q)`` (the outputs cannot change) and
   compares the output at ``q0`` with the exact flow of the bumped system.

If the integrator conserved energy and area on the bumped system, the output
at ``q0`` would have to equal that exact flow, and it cannot. The sweep then
looks for where the integrator gives way: undefined steps, energy errors or
Jacobian determinants away from one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

from .diagnostics import (
    DEFAULT_FD_STEP,
    ContinuityReport,
    StepMap,
    SweepRow,
    SweepSummary,
    continuity_probe,
    grid_points,
    summarize,
    sweep,
)
from .errors import (
    EnergyNotConserved,
    HamadvError,
    IncompleteCertificate,
    MapUndefined,
    NonpositiveC,
    NoRoomForBump,
)
from .flows import bump_flow
from .integrators import StepResult
from .phase import (
    BumpPotential,
    FreeParticle,
    HamiltonianSpec,
    PhasePoint,
    QueryTape,
    SeparableBump,
    agrees_on_tape,
)

ENERGY_CHECK_TOL = 1e-12
BUMP_RADIUS_FRACTION = 0.45

UNDEFINEDNESS = "Undefinedness"
ENERGY_VIOLATED = "EnergyViolated"
VOLUME_VIOLATED = "VolumeViolated"
FLOW_MISMATCH_ONLY = "FlowMismatchOnly"
INCONCLUSIVE = "Inconclusive"
VIOLATIONS = (UNDEFINEDNESS, ENERGY_VIOLATED, VOLUME_VIOLATED, FLOW_MISMATCH_ONLY)


def run_traced(integrator, spec: HamiltonianSpec, x: PhasePoint, dt: float) -> tuple[StepResult, QueryTape]:
    tape = QueryTape()
    return integrator.step(spec, x, dt, tape), tape


def _c_from_step(res: StepResult, x: PhasePoint, dt: float) -> float:
    if not res.defined:
        raise MapUndefined(x, res.reason)
    out = res.point
    if abs(out.p[0] - x.p[0]) > ENERGY_CHECK_TOL:
        raise EnergyNotConserved(f"free particle momentum moved from {x.p[0]} to {out.p[0]}")
    c = (out.q[0] - x.q[0]) / dt
    if not c > 0.0:
        raise NonpositiveC(f"translation constant c={c} is not positive at dt={dt}")
    return c


def measure_c(integrator, dt: float, spec: HamiltonianSpec | None = None) -> float:
    """Translation constant of one step from ``(0, 1)`` on the free particle."""
    spec = FreeParticle() if spec is None else spec
    x = PhasePoint.planar(0.0, 1.0)
    res, _ = run_traced(integrator, spec, x, dt)
    return _c_from_step(res, x, dt)


def select_q0(tape0: QueryTape, c: float, dt: float, margin: float) -> float:
    """Start point whose translation interval avoids ``[0, c dt]`` and every taped position."""
    return max([c * dt] + tape0.q_coordinates()) + margin


def construct_adversarial_potential(
    interval: tuple[float, float],
    excluded_qs,
    lam: float,
    exclusion_radius: float,
) -> BumpPotential:
    """One bump of amplitude ``lam`` in the widest gap left by the exclusions.

    The gap is ``interval`` minus an ``exclusion_radius`` neighbourhood of every
    excluded position; ties go to the leftmost gap. The bump radius is 0.45 of
    the gap, so its support stays strictly inside.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValueError("interval must have positive length")
    blocked = sorted(
        (max(lo, e - exclusion_radius), min(hi, e + exclusion_radius))
        for e in excluded_qs
        if e + exclusion_radius > lo and e - exclusion_radius < hi
    )
    gaps = []
    cur = lo
    for a, b in blocked:
        if a > cur:
            gaps.append((cur, a))
        cur = max(cur, b)
    if cur < hi:
        gaps.append((cur, hi))
    best = None
    for g in gaps:
        if best is None or g[1] - g[0] > best[1] - best[0]:
            best = g
    if best is None or best[1] - best[0] < 4.0 * exclusion_radius:
        width = 0.0 if best is None else best[1] - best[0]
        raise NoRoomForBump(f"largest free gap {width} is below 4 * exclusion_radius = {4 * exclusion_radius}")
    center = 0.5 * (best[0] + best[1])
    return BumpPotential.single(center, BUMP_RADIUS_FRACTION * (best[1] - best[0]), lam)


@dataclass(frozen=True)
class SweepGrid:
    """Grid over ``q0 + c dt * [q_span]`` by ``p_range``."""

    nq: int = 64
    np: int = 16
    q_span: tuple[float, float] = (-1.0, 2.0)
    p_range: tuple[float, float] = (0.9, 1.1)

    def points(self, q0: float, c: float, dt: float) -> list[PhasePoint]:
        width = c * dt
        q_range = (q0 + self.q_span[0] * width, q0 + self.q_span[1] * width)
        return grid_points(q_range, self.p_range, self.nq, self.np)


@dataclass(frozen=True)
class Thresholds:
    energy_tol: float = 1e-10
    det_tol: float = 1e-3
    mismatch_tol: float = 1e-9


@dataclass(frozen=True)
class ConstructionParams:
    dt: float
    lam: float = 0.25
    exclusion_radius: float | None = None
    q0_margin: float | None = None
    grid: SweepGrid = field(default_factory=SweepGrid)
    thresholds: Thresholds = field(default_factory=Thresholds)
    fd_step: float = DEFAULT_FD_STEP
    continuity_points: int = 32
    threads: int = 1

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not 0.0 < self.lam < 0.5:
            raise ValueError("lambda must lie in (0, 1/2)")
        if self.exclusion_radius is not None and not self.exclusion_radius > 0.0:
            raise ValueError("exclusion_radius must be positive")

    @property
    def radius(self) -> float:
        return self.dt / 100.0 if self.exclusion_radius is None else self.exclusion_radius

    def scaled(self, factor: float) -> ConstructionParams:
        return replace(self, lam=self.lam * factor)

    def to_json(self) -> dict:
        return {
            "dt": self.dt,
            "lambda": self.lam,
            "exclusion_radius": self.radius,
            "q0_margin": self.q0_margin,
            "grid": {"nq": self.grid.nq, "np": self.grid.np, "q_span": list(self.grid.q_span), "p_range": list(self.grid.p_range)},
            "fd_step": self.fd_step,
            "continuity_points": self.continuity_points,
        }


@dataclass(frozen=True)
class Verdict:
    failed_property: str
    evidence: dict

    @property
    def violated(self) -> bool:
        return self.failed_property in VIOLATIONS

    def to_json(self) -> dict:
        return {"failed_property": self.failed_property, "evidence": self.evidence}


def _bits(x: PhasePoint | None):
    return None if x is None else tuple(v.hex() for v in x.q + x.p)


def _same_result(a: StepResult, b: StepResult) -> bool:
    return a.reason == b.reason and _bits(a.point) == _bits(b.point)


def _point_json(x: PhasePoint | None):
    return None if x is None else x.to_json()


def _integrator_json(integrator) -> dict:
    if hasattr(integrator, "to_json"):
        return integrator.to_json()
    return {"name": getattr(integrator, "name", type(integrator).__name__)}


@dataclass
class Certificate:
    """Evidence bundle for one run of the construction.

    ``status`` is ``"complete"`` when every stage ran, else ``"aborted"`` with
    ``error`` naming why; an aborted certificate still carries a verdict.
    """

    integrator: dict
    params: ConstructionParams
    status: str = "complete"
    error: str | None = None
    c: float | None = None
    q0: float | None = None
    tape0: QueryTape | None = None
    tape1: QueryTape | None = None
    potential: BumpPotential | None = None
    tape0_agrees: bool | None = None
    tape1_agrees: bool | None = None
    output_at_origin: PhasePoint | None = None
    output_at_origin_match: bool | None = None
    output_at_q0_free: PhasePoint | None = None
    output_at_q0: PhasePoint | None = None
    output_at_q0_match: bool | None = None
    exact_flow_at_q0: PhasePoint | None = None
    mismatch: float | None = None
    lag_lower_bound: float | None = None
    energy_violations: SweepSummary | None = None
    det_sweep: list[SweepRow] = field(default_factory=list)
    continuity: ContinuityReport | None = None
    verdict: Verdict | None = None

    @property
    def complete(self) -> bool:
        return self.status == "complete"

    def to_json(self, full_tapes: bool = False) -> dict:
        th = self.params.thresholds
        return {
            "integrator": self.integrator,
            "params": self.params.to_json(),
            "thresholds": asdict(th),
            "status": self.status,
            "error": self.error,
            "c": self.c,
            "q0": self.q0,
            "tape0": None if self.tape0 is None else self.tape0.to_json(full_tapes),
            "tape1": None if self.tape1 is None else self.tape1.to_json(full_tapes),
            "potential": None if self.potential is None else self.potential.to_json(),
            "tape0_agrees": self.tape0_agrees,
            "tape1_agrees": self.tape1_agrees,
            "output_at_origin": _point_json(self.output_at_origin),
            "output_at_origin_match": self.output_at_origin_match,
            "output_at_q0_free": _point_json(self.output_at_q0_free),
            "output_at_q0": _point_json(self.output_at_q0),
            "output_at_q0_match": self.output_at_q0_match,
            "exact_flow_at_q0": _point_json(self.exact_flow_at_q0),
            "mismatch": self.mismatch,
            "lag_lower_bound": self.lag_lower_bound,
            "energy_violations": None if self.energy_violations is None else self.energy_violations.to_json(),
            "det_sweep": [r.to_json() for r in self.det_sweep],
            "continuity": None if self.continuity is None else self.continuity.to_json(),
            "verdict": None if self.verdict is None else self.verdict.to_json(),
        }


def evaluate_verdict(cert: Certificate, thresholds: Thresholds | None = None) -> Verdict:
    """Name the first failed property in priority order.

    Undefined sweep points, then energy errors, then a determinant deviation
    whose finite-difference error is small enough to trust, then the flow
    mismatch at ``q0``.
    """
    if not cert.complete or cert.energy_violations is None or cert.mismatch is None:
        raise IncompleteCertificate(cert.error or "certificate has not been fully generated")
    th = cert.params.thresholds if thresholds is None else thresholds
    if not (cert.output_at_origin_match and cert.output_at_q0_match):
        return Verdict(
            INCONCLUSIVE,
            {"reason": "replay on the bumped Hamiltonian changed the output; the tape is incomplete"},
        )
    rows = cert.det_sweep
    bad = [r for r in rows if r.undefined_reason is not None]
    if bad:
        r = bad[0]
        return Verdict(UNDEFINEDNESS, {"undefined_points": len(bad), "first": {"q": r.q, "p": r.p, "reason": r.undefined_reason}})
    worst = max((r for r in rows if r.energy_error is not None), key=lambda r: r.energy_error, default=None)
    if worst is not None and worst.energy_error > th.energy_tol:
        count = sum(1 for r in rows if r.energy_error is not None and r.energy_error > th.energy_tol)
        return Verdict(
            ENERGY_VIOLATED,
            {"max_energy_error": worst.energy_error, "at": {"q": worst.q, "p": worst.p}, "points_over_tol": count},
        )
    trusted = [r for r in rows if r.det is not None and r.det_err < th.det_tol / 10]
    volume = max(trusted, key=lambda r: abs(r.det - 1.0), default=None)
    if volume is not None and abs(volume.det - 1.0) > th.det_tol:
        return Verdict(
            VOLUME_VIOLATED,
            {"det": volume.det, "det_err": volume.det_err, "at": {"q": volume.q, "p": volume.p}},
        )
    if cert.mismatch > th.mismatch_tol:
        return Verdict(
            FLOW_MISMATCH_ONLY,
            {"mismatch": cert.mismatch, "lag_lower_bound": cert.lag_lower_bound, "c": cert.c},
        )
    return Verdict(INCONCLUSIVE, {"reason": "no property exceeded its threshold", "mismatch": cert.mismatch})


_ERROR_VERDICT = {
    MapUndefined: UNDEFINEDNESS,
    EnergyNotConserved: ENERGY_VIOLATED,
}


def _aborted(cert: Certificate, exc: HamadvError) -> Certificate:
    cert.status = "aborted"
    cert.error = f"{type(exc).__name__}: {exc}"
    prop = _ERROR_VERDICT.get(type(exc), INCONCLUSIVE)
    cert.verdict = Verdict(prop, {"error": type(exc).__name__, "message": str(exc), "stage": "free particle"})
    return cert


def generate_certificate(integrator, params: ConstructionParams) -> Certificate:
    """Run the whole construction against ``integrator``.

    Failures before the bumped system exists (undefined step, energy drift on
    the free particle, no room for a bump) are returned as aborted
    certificates rather than raised.
    """
    dt = params.dt
    free = FreeParticle()
    origin = PhasePoint.planar(0.0, 1.0)
    cert = Certificate(integrator=_integrator_json(integrator), params=params)
    try:
        res0, tape0 = run_traced(integrator, free, origin, dt)
        cert.tape0 = tape0
        c = _c_from_step(res0, origin, dt)
        cert.c = c
        cert.output_at_origin = res0.point
        margin = c * dt if params.q0_margin is None else params.q0_margin
        q0 = select_q0(tape0, c, dt, margin)
        cert.q0 = q0
        start = PhasePoint.planar(q0, 1.0)
        res1, tape1 = run_traced(integrator, free, start, dt)
        cert.tape1 = tape1
        if not res1.defined:
            raise MapUndefined(start, res1.reason)
        if abs(res1.point.p[0] - 1.0) > ENERGY_CHECK_TOL:
            raise EnergyNotConserved(f"free particle momentum moved to {res1.point.p[0]} from (q0, 1)")
        cert.output_at_q0_free = res1.point
        V = construct_adversarial_potential((q0, q0 + c * dt), tape1.q_coordinates(), params.lam, params.radius)
        cert.potential = V
    except HamadvError as exc:
        return _aborted(cert, exc)

    bumped = SeparableBump(V)
    cert.tape0_agrees = agrees_on_tape(free, bumped, tape0)
    cert.tape1_agrees = agrees_on_tape(free, bumped, tape1)
    res0b, _ = run_traced(integrator, bumped, origin, dt)
    res1b, _ = run_traced(integrator, bumped, start, dt)
    cert.output_at_origin_match = _same_result(res0, res0b)
    cert.output_at_q0_match = _same_result(res1, res1b)
    out = res1b.point if res1b.defined else res1.point
    cert.output_at_q0 = out

    exact = bump_flow(V, start, c * dt)
    cert.exact_flow_at_q0 = exact
    cert.mismatch = math.hypot(out.q[0] - exact.q[0], out.p[0] - exact.p[0])
    cert.lag_lower_bound = c * dt - (exact.q[0] - q0)

    fmap = StepMap(integrator, bumped, dt)
    rows = sweep(fmap, bumped, params.grid.points(q0, c, dt), params.fd_step, params.threads)
    cert.det_sweep = rows
    cert.energy_violations = summarize(rows, params.thresholds.energy_tol, params.thresholds.det_tol)

    lo, hi = V.supports()[0]
    k = max(params.continuity_points, 2)
    probes = [PhasePoint.planar(lo + (hi - lo) * i / (k - 1), 1.0) for i in range(k)]
    cert.continuity = continuity_probe(fmap, probes)
    cert.verdict = evaluate_verdict(cert)
    return cert
