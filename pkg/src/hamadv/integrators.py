"""One-step integrators that see the Hamiltonian only through taped queries.

A step either returns a new point or is *undefined* (solver failure, failed
projection). Undefined outcomes are returned in-band as :class:`StepResult`
rather than raised.

All arithmetic runs in a fixed order on plain floats so that two runs whose
queries return identical values produce bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from .errors import DimensionMismatch
from .phase import HamiltonianSpec, PhasePoint, QueryTape, energy, eval_derivative, gradient

EXPLICIT_METHODS = ("explicit_euler", "symplectic_euler", "leapfrog", "rk4")
METHODS = EXPLICIT_METHODS + ("implicit_midpoint", "step_and_project")
SOLVERS = ("fixed_point", "newton")

# nominal local-error orders minus one, i.e. global convergence orders
NOMINAL_ORDER = {
    "explicit_euler": 1,
    "symplectic_euler": 1,
    "leapfrog": 2,
    "rk4": 4,
    "implicit_midpoint": 2,
}

SOLVER_DIVERGED = "SolverDiverged"
MAX_ITERATIONS = "MaxIterations"
PROJECTION_FAILED = "ProjectionFailed"
GRADIENT_VANISHES = "GradientVanishes"
UNDEFINED_REASONS = (SOLVER_DIVERGED, MAX_ITERATIONS, PROJECTION_FAILED, GRADIENT_VANISHES)

GRADIENT_FLOOR = 1e-14


@dataclass(frozen=True)
class StepResult:
    """``point`` is set when the step is defined, ``reason`` when it is not."""

    point: PhasePoint | None = None
    reason: str | None = None

    def __post_init__(self):
        if (self.point is None) == (self.reason is None):
            raise ValueError("a StepResult is either defined or undefined")
        if self.reason is not None and self.reason not in UNDEFINED_REASONS:
            raise ValueError(f"unknown undefined reason {self.reason!r}")

    @property
    def defined(self) -> bool:
        return self.point is not None

    def to_json(self) -> dict:
        if self.defined:
            return {"defined": True, "point": self.point.to_json()}
        return {"defined": False, "reason": self.reason}


def Defined(point: PhasePoint) -> StepResult:
    return StepResult(point=point)


def Undefined(reason: str) -> StepResult:
    return StepResult(reason=reason)


class Integrator(Protocol):
    def step(self, spec: HamiltonianSpec, x: PhasePoint, dt: float, tape: QueryTape | None = None) -> StepResult:
        ...


def _vector_field(spec, x, tape):
    dq, dp = gradient(spec, x, tape)
    return dp, [-v for v in dq]


def _point(q, p) -> PhasePoint:
    return PhasePoint(tuple(q), tuple(p))


def _finite(values) -> bool:
    return all(math.isfinite(v) for v in values)


def explicit_euler(spec, x, dt, tape=None) -> StepResult:
    fq, fp = _vector_field(spec, x, tape)
    q = [a + dt * b for a, b in zip(x.q, fq)]
    p = [a + dt * b for a, b in zip(x.p, fp)]
    return Defined(_point(q, p))


def _grad_q(spec, x, tape):
    n = spec.n
    out = []
    for i in range(n):
        alpha = [0] * (2 * n)
        alpha[i] = 1
        out.append(eval_derivative(spec, alpha, x, tape))
    return out


def _grad_p(spec, x, tape):
    n = spec.n
    out = []
    for i in range(n):
        alpha = [0] * (2 * n)
        alpha[n + i] = 1
        out.append(eval_derivative(spec, alpha, x, tape))
    return out


def symplectic_euler(spec, x, dt, tape=None) -> StepResult:
    # momentum first; explicit because every shipped Hamiltonian is separable
    dq = _grad_q(spec, x, tape)
    p = [a - dt * b for a, b in zip(x.p, dq)]
    dp = _grad_p(spec, _point(x.q, p), tape)
    q = [a + dt * b for a, b in zip(x.q, dp)]
    return Defined(_point(q, p))


def leapfrog(spec, x, dt, tape=None) -> StepResult:
    """Kick-drift-kick Stormer-Verlet."""
    half = 0.5 * dt
    dq = _grad_q(spec, x, tape)
    p_half = [a - half * b for a, b in zip(x.p, dq)]
    dp = _grad_p(spec, _point(x.q, p_half), tape)
    q = [a + dt * b for a, b in zip(x.q, dp)]
    dq = _grad_q(spec, _point(q, p_half), tape)
    p = [a - half * b for a, b in zip(p_half, dq)]
    return Defined(_point(q, p))


def rk4(spec, x, dt, tape=None) -> StepResult:
    half = 0.5 * dt
    k1q, k1p = _vector_field(spec, x, tape)
    x2 = _point([a + half * b for a, b in zip(x.q, k1q)], [a + half * b for a, b in zip(x.p, k1p)])
    k2q, k2p = _vector_field(spec, x2, tape)
    x3 = _point([a + half * b for a, b in zip(x.q, k2q)], [a + half * b for a, b in zip(x.p, k2p)])
    k3q, k3p = _vector_field(spec, x3, tape)
    x4 = _point([a + dt * b for a, b in zip(x.q, k3q)], [a + dt * b for a, b in zip(x.p, k3p)])
    k4q, k4p = _vector_field(spec, x4, tape)

    def combine(base, k1, k2, k3, k4):
        return [b + dt * ((a1 + 2.0 * a2 + 2.0 * a3 + a4) / 6.0) for b, a1, a2, a3, a4 in zip(base, k1, k2, k3, k4)]

    return Defined(_point(combine(x.q, k1q, k2q, k3q, k4q), combine(x.p, k1p, k2p, k3p, k4p)))


_EXPLICIT = {
    "explicit_euler": explicit_euler,
    "symplectic_euler": symplectic_euler,
    "leapfrog": leapfrog,
    "rk4": rk4,
}


def _hessian(spec, x, tape) -> np.ndarray:
    m = 2 * spec.n
    hess = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            alpha = [0] * m
            alpha[i] += 1
            alpha[j] += 1
            hess[i, j] = hess[j, i] = eval_derivative(spec, alpha, x, tape)
    return hess


def implicit_midpoint(config: IntegratorConfig, spec, x, dt, tape=None) -> StepResult:
    """Solve ``y = x + dt J grad H((x+y)/2)``.

    Each iterate's residual is computed from a taped gradient at the current
    midpoint, and the returned ``y`` is the iterate whose residual passed.
    """
    n = spec.n
    xs = list(x.q + x.p)
    y = list(xs)
    damping = 1.0
    prev = math.inf
    for _ in range(config.max_iters):
        mid = [0.5 * (a + b) for a, b in zip(xs, y)]
        mid_pt = _point(mid[:n], mid[n:])
        fq, fp = _vector_field(spec, mid_pt, tape)
        F = [a + dt * b for a, b in zip(xs, fq + fp)]
        if not _finite(F):
            return Undefined(SOLVER_DIVERGED)
        r = max(abs(a - b) for a, b in zip(F, y))
        if r <= config.solver_tol:
            return Defined(_point(y[:n], y[n:]))
        if config.solver == "newton":
            # G(y) = y - F(y); DG = I - dt/2 * J * Hess(mid)
            hess = _hessian(spec, mid_pt, tape)
            Df = np.vstack([hess[n:, :], -hess[:n, :]])
            DG = np.eye(2 * n) - 0.5 * dt * Df
            G = np.array(y) - np.array(F)
            try:
                delta = np.linalg.solve(DG, G)
            except np.linalg.LinAlgError:
                return Undefined(SOLVER_DIVERGED)
            y = [float(a - d) for a, d in zip(y, delta)]
        else:
            if r > prev:
                damping *= 0.5
            if damping == 1.0:
                y = F
            else:
                y = [a + damping * (b - a) for a, b in zip(y, F)]
        prev = r
        if not _finite(y):
            return Undefined(SOLVER_DIVERGED)
    return Undefined(MAX_ITERATIONS)


def project_to_energy(
    spec: HamiltonianSpec,
    y: PhasePoint,
    target_E: float,
    config: IntegratorConfig,
    tape: QueryTape | None = None,
) -> StepResult:
    """Move ``y`` along ``g = grad H(y)`` until ``|H - target_E| <= solver_tol``.

    The step ``mu`` solves ``H(y + mu g) = target_E`` for the root nearest
    zero on the downhill side. Newton steps march away from ``mu = 0``
    (each at most twice the previous one) until the sign of the residual
    flips, then Newton safeguarded by bisection finishes inside the bracket.
    """
    gq, gp = gradient(spec, y, tape)
    g = gq + gp
    gg = sum(v * v for v in g)
    if math.sqrt(gg) < GRADIENT_FLOOR:
        return Undefined(GRADIENT_VANISHES)
    n = spec.n
    ys = list(y.q + y.p)

    def at(mu):
        zs = [a + mu * b for a, b in zip(ys, g)]
        if not _finite(zs):
            return None, math.nan
        return _point(zs[:n], zs[n:]), energy(spec, _point(zs[:n], zs[n:]), tape) - target_E

    z, phi0 = at(0.0)
    if abs(phi0) <= config.solver_tol:
        return Defined(z)
    direction = -1.0 if phi0 > 0.0 else 1.0
    inside, outside = 0.0, None  # last mu with the sign of phi0, first mu past the root
    mu, phi, slope = 0.0, phi0, gg
    prev_step = abs(phi0) / gg
    prev_abs = abs(phi0)
    for _ in range(config.max_iters):
        if outside is None:
            step = prev_step
            if slope != 0.0 and math.isfinite(slope) and -phi / slope * direction > 0.0:
                step = min(abs(phi / slope), 2.0 * prev_step)
            else:
                step = 2.0 * prev_step
            cand = inside + direction * step
            prev_step = step
        else:
            lo, hi = min(inside, outside), max(inside, outside)
            cand = mu - phi / slope if slope != 0.0 and math.isfinite(slope) else math.nan
            if not (lo < cand < hi) or abs(phi) > 0.5 * prev_abs:
                cand = 0.5 * (inside + outside)
            if not lo < cand < hi:
                return Undefined(PROJECTION_FAILED)
        prev_abs = abs(phi)
        mu = cand
        z, phi = at(mu)
        if z is None or not math.isfinite(phi):
            return Undefined(PROJECTION_FAILED)
        if abs(phi) <= config.solver_tol:
            return Defined(z)
        if (phi > 0.0) == (phi0 > 0.0):
            inside = mu
        else:
            outside = mu
        zq, zp = gradient(spec, z, tape)
        slope = sum(a * b for a, b in zip(zq + zp, g))
    return Undefined(PROJECTION_FAILED)


def step_and_project(config: IntegratorConfig, spec, x, dt, tape=None) -> StepResult:
    target = energy(spec, x, tape)
    res = _EXPLICIT[config.base](spec, x, dt, tape)
    return project_to_energy(spec, res.point, target, config, tape)


@dataclass(frozen=True)
class IntegratorConfig:
    """A shipped integrator. ``base`` is only used by ``step_and_project``."""

    method: str
    solver_tol: float = 1e-12
    max_iters: int = 100
    base: str | None = None
    solver: str = "fixed_point"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.solver_tol > 0.0:
            raise ValueError("solver_tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.method == "step_and_project":
            if self.base is None:
                object.__setattr__(self, "base", "leapfrog")
            if self.base not in EXPLICIT_METHODS:
                raise ValueError("step_and_project needs an explicit base method")
        elif self.base is not None:
            raise ValueError("base is only meaningful for step_and_project")

    @property
    def name(self) -> str:
        if self.method == "step_and_project":
            return f"step_and_project({self.base})"
        return self.method

    @property
    def nominal_order(self) -> int:
        return NOMINAL_ORDER[self.base if self.method == "step_and_project" else self.method]

    def step(self, spec: HamiltonianSpec, x: PhasePoint, dt: float, tape: QueryTape | None = None) -> StepResult:
        if dt < 0.0:
            raise ValueError("dt must be non-negative")
        if x.n != spec.n:
            raise DimensionMismatch(f"point has n={x.n}, spec has n={spec.n}")
        if self.method in _EXPLICIT:
            return _EXPLICIT[self.method](spec, x, dt, tape)
        if self.method == "implicit_midpoint":
            return implicit_midpoint(self, spec, x, dt, tape)
        return step_and_project(self, spec, x, dt, tape)

    def max_tape_length(self, n: int) -> int:
        """Upper bound on the records one step can write."""
        grad = 2 * n
        explicit = {"explicit_euler": grad, "symplectic_euler": grad, "leapfrog": 3 * n, "rk4": 4 * grad}
        if self.method in explicit:
            return explicit[self.method]
        if self.method == "implicit_midpoint":
            per_iter = grad + (grad * (grad + 1) // 2 if self.solver == "newton" else 0)
            return per_iter * self.max_iters
        return 1 + explicit[self.base] + grad + self.max_iters * (1 + grad)

    def with_(self, **changes) -> IntegratorConfig:
        return replace(self, **changes)

    def to_json(self) -> dict:
        d = {"method": self.method, "solver_tol": self.solver_tol, "max_iters": self.max_iters}
        if self.base is not None:
            d["base"] = self.base
        if self.solver != "fixed_point":
            d["solver"] = self.solver
        return d

    @classmethod
    def from_json(cls, obj: dict) -> IntegratorConfig:
        return cls(
            method=obj["method"],
            solver_tol=float(obj.get("solver_tol", 1e-12)),
            max_iters=int(obj.get("max_iters", 100)),
            base=obj.get("base"),
            solver=obj.get("solver", "fixed_point"),
        )


def shipped_methods() -> list[IntegratorConfig]:
    """The six integrators the toolkit ships."""
    return [
        IntegratorConfig("explicit_euler"),
        IntegratorConfig("symplectic_euler"),
        IntegratorConfig("leapfrog"),
        IntegratorConfig("rk4"),
        IntegratorConfig("implicit_midpoint"),
        IntegratorConfig("step_and_project", base="leapfrog"),
    ]


def iterate(integrator: Integrator, spec, x0: PhasePoint, dt: float, n_steps: int) -> list[StepResult]:
    """Repeat steps from ``x0``; an undefined step ends the list."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    out = []
    x = x0
    for _ in range(n_steps):
        res = integrator.step(spec, x, dt)
        out.append(res)
        if not res.defined:
            break
        x = res.point
    return out


def trajectory(results: list[StepResult]) -> list[PhasePoint]:
    return [r.point for r in results if r.defined]
