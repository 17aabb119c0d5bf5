"""Numerical measurements of volume, energy, consistency and translation behaviour."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np

from ._parallel import pmap
from .errors import DegeneratePolygon, MapUndefined, StencilUndefined
from .flows import exact_flow
from .integrators import StepResult
from .phase import HamiltonianSpec, PhasePoint, energy

DEFAULT_FD_STEP = 1e-5
ZERO_RATIO = 1e-12
CONTINUITY_DELTA = 1e-7
LIPSCHITZ_ALARM = 1e3
MIN_ORDER = 0.5

PhaseMap = Callable[[PhasePoint], "PhasePoint | StepResult"]


@dataclass(frozen=True)
class StepMap:
    """``x -> integrator.step(spec, x, dt)`` as a picklable phase map."""

    integrator: object
    spec: HamiltonianSpec
    dt: float

    def __call__(self, x: PhasePoint) -> StepResult:
        return self.integrator.step(self.spec, x, self.dt)


def apply_map(fmap: PhaseMap, x: PhasePoint) -> tuple[PhasePoint | None, str | None]:
    """Evaluate ``fmap`` and normalise to ``(point, undefined_reason)``."""
    out = fmap(x)
    if isinstance(out, StepResult):
        return out.point, out.reason
    return out, None


def _shift(x: PhasePoint, j: int, h: float) -> PhasePoint:
    arr = list(x.q + x.p)
    arr[j] += h
    return PhasePoint.from_array(arr)


def _fd_matrix(fmap, x, h) -> np.ndarray:
    m = 2 * x.n
    J = np.empty((m, m))
    for j in range(m):
        cols = []
        for sign in (1.0, -1.0):
            xs = _shift(x, j, sign * h)
            y, reason = apply_map(fmap, xs)
            if y is None:
                raise StencilUndefined(xs, reason)
            cols.append(y.as_array())
        J[:, j] = (cols[0] - cols[1]) / (2.0 * h)
    return J


@dataclass(frozen=True)
class JacobianReport:
    matrix: np.ndarray
    determinant: float
    fd_step: float
    error_estimate: float
    det_error: float

    def to_json(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "determinant": self.determinant,
            "fd_step": self.fd_step,
            "error_estimate": self.error_estimate,
            "det_error": self.det_error,
        }


def jacobian(fmap: PhaseMap, x: PhasePoint, h: float = DEFAULT_FD_STEP) -> JacobianReport:
    """Central-difference Jacobian at ``x``.

    ``error_estimate`` is the largest entrywise gap between the ``h`` and
    ``h/2`` stencils; ``det_error`` is the same gap for the determinant.
    """
    if not h > 0.0:
        raise ValueError("fd step must be positive")
    J = _fd_matrix(fmap, x, h)
    J2 = _fd_matrix(fmap, x, 0.5 * h)
    det = float(np.linalg.det(J))
    return JacobianReport(
        matrix=J,
        determinant=det,
        fd_step=h,
        error_estimate=float(np.max(np.abs(J - J2))),
        det_error=abs(det - float(np.linalg.det(J2))),
    )


def shoelace(points: Sequence[tuple[float, float]]) -> float:
    n = len(points)
    s = 0.0
    for i in range(n):
        x1, y1 = points[i]
        x2, y2 = points[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def polygon_area_ratio(fmap: PhaseMap, polygon: Sequence[PhasePoint], refinement: int = 1) -> float:
    """Area of the image of a refined planar polygon over its own area."""
    if refinement < 1:
        raise ValueError("refinement must be at least 1")
    verts = [(v.q[0], v.p[0]) for v in polygon]
    src = shoelace(verts)
    if abs(src) < 1e-15:
        raise DegeneratePolygon(f"polygon area {src} is degenerate")
    dense = []
    for i, (x1, y1) in enumerate(verts):
        x2, y2 = verts[(i + 1) % len(verts)]
        for k in range(refinement):
            s = k / refinement
            dense.append(PhasePoint.planar(x1 + s * (x2 - x1), y1 + s * (y2 - y1)))
    image = []
    for v in dense:
        y, reason = apply_map(fmap, v)
        if y is None:
            raise StencilUndefined(v, reason)
        image.append((y.q[0], y.p[0]))
    return shoelace(image) / src


@dataclass(frozen=True)
class DriftReport:
    drift: float
    steps: int
    undefined_reason: str | None = None

    @property
    def completed(self) -> bool:
        return self.undefined_reason is None


def energy_drift(fmap: PhaseMap, spec: HamiltonianSpec, x0: PhasePoint, n_steps: int) -> DriftReport:
    """Largest ``|H(x_k) - H(x_0)|`` along an orbit, stopping at the first undefined step."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    e0 = energy(spec, x0)
    drift = 0.0
    x = x0
    for k in range(n_steps):
        y, reason = apply_map(fmap, x)
        if y is None:
            return DriftReport(drift, k, reason)
        drift = max(drift, abs(energy(spec, y) - e0))
        x = y
    return DriftReport(drift, n_steps)


@dataclass(frozen=True)
class TranslationReport:
    c_mean: float
    c_spread: float
    p_deviation: float
    c_values: tuple[float, ...] = ()

    def to_json(self) -> dict:
        return {
            "c_mean": self.c_mean,
            "c_spread": self.c_spread,
            "p_deviation": self.p_deviation,
            "c_values": list(self.c_values),
        }


def measure_translation_constant(fmap: PhaseMap, q_samples: Sequence[float], dt: float) -> TranslationReport:
    """Estimate ``c`` in ``(q, 1) -> (q + c dt, 1)`` at each sample position."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    cs, pdev = [], 0.0
    for q in q_samples:
        x = PhasePoint.planar(q, 1.0)
        y, reason = apply_map(fmap, x)
        if y is None:
            raise MapUndefined(x, reason)
        cs.append((y.q[0] - q) / dt)
        pdev = max(pdev, abs(y.p[0] - 1.0))
    return TranslationReport(
        c_mean=math.fsum(cs) / len(cs),
        c_spread=max(cs) - min(cs),
        p_deviation=pdev,
        c_values=tuple(cs),
    )


@dataclass(frozen=True)
class ConsistencyReport:
    dts: tuple[float, ...]
    ratios: tuple[float, ...]
    passed: bool
    order: float

    def to_json(self) -> dict:
        return {
            "dts": list(self.dts),
            "ratios": list(self.ratios),
            "passed": self.passed,
            "order": self.order if math.isfinite(self.order) else None,
        }


def fit_order(dts: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dt)``."""
    pts = [(math.log(h), math.log(e)) for h, e in zip(dts, errors) if e > 0.0]
    if len(pts) < 2:
        return math.inf
    xs, ys = zip(*pts)
    return float(np.polyfit(xs, ys, 1)[0])


def consistency_probe(integrator, spec: HamiltonianSpec, x: PhasePoint, dt_sequence: Sequence[float]) -> ConsistencyReport:
    """Ratios ``|S^dt(x) - Phi(x)| / dt`` over a decreasing step sequence.

    Passes when every ratio sits at rounding level, or when the last three
    ratios strictly decrease and either the final one is below a tenth of the
    first or the log-log slope is at least ``MIN_ORDER`` (a first-order method
    only shrinks by 8x over three halvings).
    """
    dts = tuple(float(h) for h in dt_sequence)
    if len(dts) < 3 or any(b >= a for a, b in zip(dts, dts[1:])) or dts[-1] < 1e-6:
        raise ValueError("dt_sequence must have at least 3 strictly decreasing entries >= 1e-6")
    ratios = []
    for h in dts:
        res = integrator.step(spec, x, h)
        if not res.defined:
            raise MapUndefined(x, res.reason)
        exact = exact_flow(spec, x, h)
        ratios.append(float(np.linalg.norm(exact.as_array() - res.point.as_array())) / h)
    if all(r <= ZERO_RATIO for r in ratios):
        passed = True
        order = math.inf
    else:
        tail = ratios[-3:]
        order = fit_order(dts, [r if r > ZERO_RATIO else 0.0 for r in ratios])
        shrinking = ratios[-1] < 0.1 * ratios[0] or order >= MIN_ORDER
        passed = tail[0] > tail[1] > tail[2] and shrinking
    return ConsistencyReport(dts, tuple(ratios), passed, order)


@dataclass(frozen=True)
class ContinuityReport:
    delta: float
    max_local_lipschitz: float

    @property
    def status(self) -> str:
        if self.max_local_lipschitz > LIPSCHITZ_ALARM:
            return "possible discontinuity"
        return "not falsified at resolution delta"

    def to_json(self) -> dict:
        return {"delta": self.delta, "max_local_lipschitz": self.max_local_lipschitz, "status": self.status}


def continuity_probe(fmap: PhaseMap, points: Sequence[PhasePoint], delta: float = CONTINUITY_DELTA) -> ContinuityReport:
    """Largest one-sided difference quotient at resolution ``delta``.

    Continuity can only be refuted numerically, never certified.
    """
    worst = 0.0
    for x in points:
        y, _ = apply_map(fmap, x)
        if y is None:
            continue
        for j in range(2 * x.n):
            ys, _ = apply_map(fmap, _shift(x, j, delta))
            if ys is None:
                continue
            worst = max(worst, float(np.max(np.abs(ys.as_array() - y.as_array()))) / delta)
    return ContinuityReport(delta, worst)


@dataclass(frozen=True)
class SweepRow:
    q: float
    p: float
    det: float | None
    det_err: float | None
    energy_error: float | None
    undefined_reason: str | None = None

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "p": self.p,
            "det": self.det,
            "det_err": self.det_err,
            "energy_error": self.energy_error,
            "undefined_reason": self.undefined_reason,
        }


def sweep_point(fmap: PhaseMap, spec: HamiltonianSpec, h: float, x: PhasePoint) -> SweepRow:
    """Energy error and Jacobian determinant of one step at a planar point."""
    q, p = x.q[0], x.p[0]
    y, reason = apply_map(fmap, x)
    if y is None:
        return SweepRow(q, p, None, None, None, reason)
    err = abs(energy(spec, y) - energy(spec, x))
    try:
        rep = jacobian(fmap, x, h)
    except StencilUndefined as exc:
        return SweepRow(q, p, None, None, err, exc.reason)
    return SweepRow(q, p, rep.determinant, rep.det_error, err)


def grid_points(q_range: tuple[float, float], p_range: tuple[float, float], nq: int, np_: int) -> list[PhasePoint]:
    qs = np.linspace(q_range[0], q_range[1], nq)
    ps = np.linspace(p_range[0], p_range[1], np_)
    return [PhasePoint.planar(float(q), float(p)) for q in qs for p in ps]


def sweep(fmap: PhaseMap, spec: HamiltonianSpec, points: Sequence[PhasePoint], h: float = DEFAULT_FD_STEP, threads: int = 1) -> list[SweepRow]:
    return pmap(partial(sweep_point, fmap, spec, h), points, threads)


@dataclass(frozen=True)
class SweepSummary:
    points: int
    undefined: int
    max_energy_error: float
    max_det_deviation: float
    worst_det_point: tuple[float, float] | None = None
    worst_det_err: float | None = None
    energy_violations: int = 0

    def to_json(self) -> dict:
        return {
            "points": self.points,
            "undefined": self.undefined,
            "max_energy_error": self.max_energy_error,
            "energy_violations": self.energy_violations,
            "max_det_deviation": self.max_det_deviation,
            "worst_det_point": list(self.worst_det_point) if self.worst_det_point else None,
            "worst_det_err": self.worst_det_err,
        }


def summarize(rows: Sequence[SweepRow], energy_tol: float = 1e-10, det_tol: float | None = None) -> SweepSummary:
    """Reduce sweep rows in their stored order.

    With ``det_tol`` given, the reported worst determinant only considers rows
    whose ``det_err`` is below ``det_tol / 10``.
    """
    undefined = sum(1 for r in rows if r.undefined_reason is not None)
    energies = [r.energy_error for r in rows if r.energy_error is not None]
    worst, worst_row = 0.0, None
    for r in rows:
        if r.det is None:
            continue
        if det_tol is not None and not r.det_err < det_tol / 10:
            continue
        dev = abs(r.det - 1.0)
        if dev > worst or worst_row is None:
            worst, worst_row = dev, r
    return SweepSummary(
        points=len(rows),
        undefined=undefined,
        max_energy_error=max(energies, default=0.0),
        max_det_deviation=worst,
        worst_det_point=(worst_row.q, worst_row.p) if worst_row else None,
        worst_det_err=worst_row.det_err if worst_row else None,
        energy_violations=sum(1 for e in energies if e > energy_tol),
    )


CSV_COLUMNS = ("q", "p", "det", "det_err")


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    """Plot-ready CSV; undefined points leave ``det`` and ``det_err`` empty."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([repr(r.q), repr(r.p), "" if r.det is None else repr(r.det), "" if r.det_err is None else repr(r.det_err)])
