"""Reference flow maps used as ground truth.

Free particle and harmonic oscillator flows are closed form. The bump
Hamiltonian ``p^2/2 + V(q)`` is solved by inverting the time-of-flight integral
``t = int dx / sqrt(2 (E - V(x)))``, which is valid while the motion is
monotone (no turning points).
"""

from __future__ import annotations

import math

from scipy.optimize import brentq

from .errors import RootBracketFailure, TurningPoint
from .phase import BumpPotential, FreeParticle, Harmonic, PhasePoint, SeparableBump, bump_derivatives

DEFAULT_QUAD_TOL = 1e-12
DEFAULT_MARGIN = 1e-3

# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
_XGK = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
)
_WGK = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)
_WG = (
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
)


def gauss_kronrod_15(f, a: float, b: float) -> tuple[float, float]:
    """Kronrod estimate of ``int_a^b f`` and ``|K15 - G7|``."""
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    fc = f(center)
    kronrod = fc * _WGK[7]
    gauss = fc * _WG[3]
    for j in range(7):
        dx = half * _XGK[j]
        fsum = f(center - dx) + f(center + dx)
        kronrod += _WGK[j] * fsum
        if j % 2 == 1:
            gauss += _WG[j // 2] * fsum
    return kronrod * half, abs((kronrod - gauss) * half)


def adaptive_quad(f, a: float, b: float, tol: float = DEFAULT_QUAD_TOL, max_depth: int = 40) -> float:
    """Adaptive bisection on Gauss-Kronrod panels.

    Each panel must meet its share of ``tol`` in proportion to its length.
    Panels are processed left to right, so the sum is reproducible.
    """
    if b == a:
        return 0.0
    total_len = b - a
    result = 0.0
    stack = [(a, b, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        val, err = gauss_kronrod_15(f, lo, hi)
        if err <= tol * (hi - lo) / total_len or depth >= max_depth:
            result += val
            continue
        mid = 0.5 * (lo + hi)
        stack.append((mid, hi, depth + 1))
        stack.append((lo, mid, depth + 1))
    return result


def free_flow(x: PhasePoint, t: float) -> PhasePoint:
    return PhasePoint(tuple(q + p * t for q, p in zip(x.q, x.p)), x.p)


def harmonic_flow(x: PhasePoint, t: float, omega: float = 1.0) -> PhasePoint:
    c, s = math.cos(omega * t), math.sin(omega * t)
    q = tuple(qi * c + (pi / omega) * s for qi, pi in zip(x.q, x.p))
    p = tuple(pi * c - omega * qi * s for qi, pi in zip(x.q, x.p))
    return PhasePoint(q, p)


def _speed(V: BumpPotential, E: float, x: float) -> float:
    return math.sqrt(2.0 * (E - bump_derivatives(V, x, 0)[0]))


def _check_no_turning(V: BumpPotential, lo: float, hi: float, E: float, margin: float) -> None:
    # conservative: every bump meeting [lo, hi] is assumed to peak at once
    peak = sum(b.peak for b in V.bumps if b.support[1] > lo and b.support[0] < hi)
    if E - peak < margin:
        raise TurningPoint(
            f"energy {E} does not clear the potential on [{lo}, {hi}] by margin {margin} (peak bound {peak})"
        )


def _segments(V: BumpPotential, lo: float, hi: float) -> list[tuple[float, float, bool]]:
    """Split ``[lo, hi]`` into pieces tagged with whether ``V`` can be nonzero there."""
    out = []
    cur = lo
    for a, b in V.supports():
        if b <= cur:
            continue
        if a >= hi:
            break
        if a > cur:
            out.append((cur, a, False))
            cur = a
        end = min(b, hi)
        out.append((cur, end, True))
        cur = end
        if cur >= hi:
            break
    if cur < hi:
        out.append((cur, hi, False))
    return out


def _tof_raw(V, lo, hi, E, quad_tol):
    free_speed = math.sqrt(2.0 * E)
    total = 0.0
    for a, b, bumpy in _segments(V, lo, hi):
        if bumpy:
            total += adaptive_quad(lambda s: 1.0 / _speed(V, E, s), a, b, quad_tol)
        else:
            total += (b - a) / free_speed
    return total


def time_of_flight(
    V: BumpPotential,
    q0: float,
    q1: float,
    E: float,
    quad_tol: float = DEFAULT_QUAD_TOL,
    margin: float = DEFAULT_MARGIN,
) -> float:
    """Time for the bump Hamiltonian at energy ``E`` to travel from ``q0`` to ``q1``.

    Stretches where ``V`` vanishes identically are integrated in closed form.
    """
    if q1 < q0:
        raise ValueError("time_of_flight needs q1 >= q0")
    if q1 == q0:
        return 0.0
    _check_no_turning(V, q0, q1, E, margin)
    return _tof_raw(V, q0, q1, E, quad_tol)


def _forward_position(V, q0, t, E, quad_tol):
    free_speed = math.sqrt(2.0 * E)
    elapsed = 0.0
    cur = q0
    supports = [s for s in V.supports() if s[1] > q0]
    for a, b in supports:
        if a > cur:
            leg = (a - cur) / free_speed
            if elapsed + leg >= t:
                return cur + (t - elapsed) * free_speed
            elapsed += leg
            cur = a
        leg = _tof_raw(V, cur, b, E, quad_tol)
        if elapsed + leg >= t:
            budget = t - elapsed
            start = cur

            def residual(s):
                return _tof_raw(V, start, s, E, quad_tol) - budget

            try:
                return brentq(residual, start, b, xtol=1e-15, rtol=1e-15, maxiter=200)
            except ValueError as exc:
                raise RootBracketFailure(str(exc)) from exc
        elapsed += leg
        cur = b
    return cur + (t - elapsed) * free_speed


def bump_flow(
    V: BumpPotential,
    x0: PhasePoint,
    t: float,
    quad_tol: float = DEFAULT_QUAD_TOL,
    margin: float = DEFAULT_MARGIN,
) -> PhasePoint:
    """Exact flow of ``p^2/2 + V(q)`` from a planar ``x0`` for time ``t``.

    Leftward motion and negative times are reduced to the rightward forward
    case by reflection.
    """
    if x0.n != 1:
        raise ValueError("bump_flow is planar")
    q0, p0 = x0.q[0], x0.p[0]
    if t < 0.0:
        back = bump_flow(V, PhasePoint.planar(q0, -p0), -t, quad_tol, margin)
        return PhasePoint.planar(back.q[0], -back.p[0])
    if p0 < 0.0:
        out = bump_flow(V.mirrored(), PhasePoint.planar(-q0, -p0), t, quad_tol, margin)
        return PhasePoint.planar(-out.q[0], -out.p[0])
    v0 = bump_derivatives(V, q0, 0)[0]
    E = 0.5 * p0 * p0 + v0
    if p0 == 0.0:
        raise TurningPoint(f"zero momentum at q={q0}")
    if t == 0.0:
        return x0
    # fastest possible motion bounds the reachable interval
    reach = q0 + t * math.sqrt(2.0 * E) + 1.0
    _check_no_turning(V, q0, reach, E, margin)
    q = _forward_position(V, q0, t, E, quad_tol)
    vq = bump_derivatives(V, q, 0)[0]
    if vq == 0.0 and v0 == 0.0:
        p = p0
    else:
        p = math.sqrt(2.0 * (E - vq))
    return PhasePoint.planar(q, p)


def exact_flow(spec, x: PhasePoint, t: float, quad_tol: float = DEFAULT_QUAD_TOL) -> PhasePoint:
    """Dispatch to the reference flow for a planar spec."""
    if isinstance(spec, FreeParticle):
        return free_flow(x, t)
    if isinstance(spec, Harmonic):
        return harmonic_flow(x, t, spec.omega)
    if isinstance(spec, SeparableBump):
        return bump_flow(spec.potential, x, t, quad_tol)
    raise TypeError(f"no reference flow for {type(spec).__name__}")
