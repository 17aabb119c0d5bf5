"""Lifting planar problems to ``R^{2n}`` and reducing lifted integrators back.

Two embeddings are supported. A *single* lift ``H*(q, p) = H(q_1, p_1)``
leaves coordinates 2..n out of the Hamiltonian. A *product* lift
``H*(q, p) = sum_i H(q_i, p_i)`` couples nothing. A ``2n``-dimensional
integrator that leaves absent coordinates untouched (single) or acts
componentwise on uncoupled sums (product) reduces to a planar integrator, and
that planar integrator can then be fed to the adversary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .diagnostics import DEFAULT_FD_STEP, jacobian
from .errors import MapUndefined
from .integrators import StepResult
from .phase import HamiltonianSpec, LiftKind, LiftProduct, LiftSingle, PhasePoint, QueryRecord, QueryTape

SINGLE = "single"
PRODUCT = "product"

__all__ = [
    "LiftKind",
    "BlockJacobianReport",
    "ReducedIntegrator",
    "lift",
    "check_condition_untouched",
    "check_condition_product",
    "reduce_to_planar",
    "jacobian_block_report",
]


def lift(spec: HamiltonianSpec, kind: LiftKind) -> HamiltonianSpec:
    return kind.lift(spec)


def _pair(x: PhasePoint, i: int) -> tuple[float, float]:
    return x.q[i], x.p[i]


def check_condition_untouched(integrator, lifted: LiftSingle, samples: Sequence[PhasePoint], dt: float) -> dict:
    """Largest movement of the coordinates a single lift leaves out of ``H``."""
    if not isinstance(lifted, LiftSingle):
        raise TypeError("the untouched-coordinate check needs a single lift")
    worst = 0.0
    for x in samples:
        res = integrator.step(lifted, x, dt)
        if not res.defined:
            raise MapUndefined(x, res.reason)
        y = res.point
        for i in range(1, lifted.n):
            worst = max(worst, abs(y.q[i] - x.q[i]), abs(y.p[i] - x.p[i]))
    return {"max_deviation": worst}


def check_condition_product(integrator, lifted: LiftProduct, samples: Sequence[PhasePoint], dt: float) -> dict:
    """Largest gap between each component of a product-lift step and the planar step on that component."""
    if not isinstance(lifted, LiftProduct):
        raise TypeError("the product-structure check needs a product lift")
    worst = 0.0
    for x in samples:
        res = integrator.step(lifted, x, dt)
        if not res.defined:
            raise MapUndefined(x, res.reason)
        for i in range(lifted.n):
            xi = PhasePoint.planar(*_pair(x, i))
            ri = integrator.step(lifted.inner, xi, dt)
            if not ri.defined:
                raise MapUndefined(xi, ri.reason)
            worst = max(worst, abs(res.point.q[i] - ri.point.q[0]), abs(res.point.p[i] - ri.point.p[0]))
    return {"max_cross_deviation": worst}


@dataclass(frozen=True)
class ReducedIntegrator:
    """Planar integrator ``x -> pi_1 Phi(H*, lift(x), dt)``.

    Tape records keep the full lifted query point and are tagged with the lift,
    so agreement checks on planar Hamiltonians re-lift them before evaluating.
    """

    inner: object
    kind: LiftKind

    @property
    def name(self) -> str:
        inner = getattr(self.inner, "name", type(self.inner).__name__)
        return f"reduce({inner}, {self.kind.kind}, n={self.kind.n})"

    def step(self, spec: HamiltonianSpec, x: PhasePoint, dt: float, tape: QueryTape | None = None) -> StepResult:
        lifted_spec = self.kind.lift(spec)
        inner_tape = QueryTape()
        res = self.inner.step(lifted_spec, self.kind.lift_point(x), dt, inner_tape)
        if tape is not None:
            for r in inner_tape:
                tape.append(QueryRecord(r.point, r.alpha, r.value, lift=self.kind))
        if not res.defined:
            return res
        return StepResult(point=PhasePoint.planar(res.point.q[0], res.point.p[0]))

    def to_json(self) -> dict:
        inner = self.inner.to_json() if hasattr(self.inner, "to_json") else {"name": getattr(self.inner, "name", "")}
        return {"reduced": inner, "lift": self.kind.to_json()}


def reduce_to_planar(integrator, kind: LiftKind) -> ReducedIntegrator:
    return ReducedIntegrator(integrator, kind)


@dataclass(frozen=True)
class BlockJacobianReport:
    block_dets: tuple[float, ...]
    off_block_norm: float
    pattern: str
    determinant: float
    matrix: np.ndarray

    def to_json(self) -> dict:
        return {
            "block_dets": list(self.block_dets),
            "off_block_norm": self.off_block_norm,
            "pattern": self.pattern,
            "determinant": self.determinant,
        }


def interleave(J: np.ndarray, n: int) -> np.ndarray:
    """Reorder rows and columns from ``(q_1..q_n, p_1..p_n)`` to ``(q_1, p_1, ..., q_n, p_n)``."""
    perm = [k for i in range(n) for k in (i, n + i)]
    return J[np.ix_(perm, perm)]


def jacobian_block_report(fmap, x: PhasePoint, h: float = DEFAULT_FD_STEP, pattern: str = PRODUCT) -> BlockJacobianReport:
    """Finite-difference Jacobian split into 2x2 blocks.

    ``off_block_norm`` is the largest entry that the pattern says should vanish:
    everything off the block diagonal for ``product``; for ``single``, the rows
    of coordinates 2..n measured against the identity.
    """
    if pattern not in (SINGLE, PRODUCT):
        raise ValueError(f"unknown pattern {pattern!r}")
    n = x.n
    J = interleave(jacobian(fmap, x, h).matrix, n)
    dets = tuple(float(np.linalg.det(J[2 * i : 2 * i + 2, 2 * i : 2 * i + 2])) for i in range(n))
    if pattern == PRODUCT:
        mask = np.ones_like(J, dtype=bool)
        for i in range(n):
            mask[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = False
        off = float(np.max(np.abs(J[mask]))) if mask.any() else 0.0
    else:
        lower = J[2:, :] - np.eye(2 * n)[2:, :]
        off = float(np.max(np.abs(lower)))
    return BlockJacobianReport(dets, off, pattern, float(np.linalg.det(J)), J)
