"""Phase-space points, Hamiltonian specifications and the query tape.

Every access an integrator makes to a Hamiltonian goes through
:func:`eval_derivative`. When a :class:`QueryTape` is passed, the query is
recorded, so a step's dependence on ``H`` is observable afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, InvalidPotential, UnsupportedOrder

MAX_ORDER = 2
_INV_E = math.exp(-1.0)


@dataclass(frozen=True)
class PhasePoint:
    """A point ``(q, p)`` in ``R^{2n}``."""

    q: tuple[float, ...]
    p: tuple[float, ...]

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        p = tuple(float(v) for v in self.p)
        if len(q) != len(p) or len(q) < 1:
            raise DimensionMismatch(f"q has {len(q)} components, p has {len(p)}")
        if not all(math.isfinite(v) for v in q + p):
            raise ValueError(f"non-finite phase point {q}, {p}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @classmethod
    def planar(cls, q: float, p: float) -> PhasePoint:
        return cls((q,), (p,))

    @classmethod
    def from_array(cls, arr) -> PhasePoint:
        arr = [float(v) for v in arr]
        n = len(arr) // 2
        return cls(tuple(arr[:n]), tuple(arr[n:]))

    @property
    def n(self) -> int:
        return len(self.q)

    def as_array(self) -> np.ndarray:
        """Coordinates in the order ``(q_1..q_n, p_1..p_n)``."""
        return np.array(self.q + self.p)

    def to_json(self) -> dict:
        return {"q": list(self.q), "p": list(self.p)}

    @classmethod
    def from_json(cls, obj) -> PhasePoint:
        return cls(tuple(obj["q"]), tuple(obj["p"]))


def planar(q: float, p: float) -> PhasePoint:
    return PhasePoint.planar(q, p)


# ---------------------------------------------------------------------------
# Bump potentials


def _mollifier(u: float, max_order: int) -> tuple[float, ...]:
    # exp(-1/(1-u^2)) and its first two derivatives in u
    s = 1.0 - u * u
    if s <= 0.0:
        return (0.0,) * (max_order + 1)
    m = math.exp(-1.0 / s)
    if m == 0.0:
        return (0.0,) * (max_order + 1)
    out = [m]
    if max_order >= 1:
        out.append(m * (-2.0 * u / (s * s)))
    if max_order >= 2:
        s2 = s * s
        out.append(m * (4.0 * u * u - 2.0 * s2 - 8.0 * u * u * s) / (s2 * s2))
    return tuple(out)


@dataclass(frozen=True)
class Bump:
    center: float
    radius: float
    amplitude: float

    def __post_init__(self):
        for name in ("center", "radius", "amplitude"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidPotential(f"bump {name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if self.radius <= 0.0:
            raise InvalidPotential(f"bump radius must be positive, got {self.radius}")
        if self.amplitude < 0.0:
            raise InvalidPotential(f"bump amplitude must be non-negative, got {self.amplitude}")

    @property
    def support(self) -> tuple[float, float]:
        return (self.center - self.radius, self.center + self.radius)

    @property
    def peak(self) -> float:
        return self.amplitude * _INV_E


@dataclass(frozen=True)
class BumpPotential:
    """Sum of mollifier bumps ``amplitude * exp(-1/(1-u^2))``, ``u = (q-center)/radius``.

    The peak of a single bump is ``amplitude / e``. Construction rejects any
    bump list whose summed peaks could reach 1/2.
    """

    bumps: tuple[Bump, ...] = ()

    def __post_init__(self):
        bumps = tuple(b if isinstance(b, Bump) else Bump(**b) for b in self.bumps)
        object.__setattr__(self, "bumps", bumps)
        if sum(b.peak for b in bumps) >= 0.5:
            raise InvalidPotential("summed bump peaks must stay below 1/2")

    @classmethod
    def single(cls, center: float, radius: float, amplitude: float) -> BumpPotential:
        return cls((Bump(center, radius, amplitude),))

    def derivatives(self, q: float, max_order: int = 2) -> tuple[float, ...]:
        return bump_derivatives(self, q, max_order)

    def __call__(self, q: float) -> float:
        return bump_derivatives(self, q, 0)[0]

    def supports(self) -> list[tuple[float, float]]:
        """Merged closed supports, sorted left to right."""
        spans = sorted(b.support for b in self.bumps if b.amplitude > 0.0)
        merged: list[list[float]] = []
        for a, b in spans:
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        return [(a, b) for a, b in merged]

    def sup_bound(self) -> float:
        return sum(b.peak for b in self.bumps)

    def scaled(self, factor: float) -> BumpPotential:
        return BumpPotential(tuple(Bump(b.center, b.radius, b.amplitude * factor) for b in self.bumps))

    def mirrored(self) -> BumpPotential:
        """The potential ``q -> V(-q)``."""
        return BumpPotential(tuple(Bump(-b.center, b.radius, b.amplitude) for b in self.bumps))

    def to_json(self) -> list:
        return [{"center": b.center, "radius": b.radius, "amplitude": b.amplitude} for b in self.bumps]

    @classmethod
    def from_json(cls, items) -> BumpPotential:
        return cls(tuple(Bump(float(d["center"]), float(d["radius"]), float(d["amplitude"])) for d in items))


def bump_derivatives(V: BumpPotential, q: float, max_order: int = 2) -> tuple[float, ...]:
    """Return ``(V(q), V'(q), V''(q))`` truncated to ``max_order``.

    Bumps are summed in list order, so results are bit-reproducible.
    """
    if max_order not in (0, 1, 2):
        raise UnsupportedOrder(f"bump derivatives available up to order 2, asked {max_order}")
    acc = [0.0] * (max_order + 1)
    for b in V.bumps:
        u = (q - b.center) / b.radius
        if not -1.0 < u < 1.0:
            continue
        m = _mollifier(u, max_order)
        scale = b.amplitude
        for k in range(max_order + 1):
            acc[k] += scale * m[k]
            scale /= b.radius
    return tuple(acc)


# ---------------------------------------------------------------------------
# Hamiltonian specifications


@dataclass(frozen=True)
class FreeParticle:
    """``H = p^2/2``."""

    variant = "free_particle"
    n = 1

    def _derivative(self, a: int, b: int, q: float, p: float) -> float:
        if a == 0 and b == 0:
            return 0.5 * p * p
        if a == 0 and b == 1:
            return p
        if a == 0 and b == 2:
            return 1.0
        return 0.0

    def to_json(self) -> dict:
        return {"variant": self.variant}


@dataclass(frozen=True)
class Harmonic:
    """``H = (p^2 + omega^2 q^2)/2``."""

    omega: float = 1.0
    variant = "harmonic"
    n = 1

    def __post_init__(self):
        object.__setattr__(self, "omega", float(self.omega))
        if not (self.omega > 0.0 and math.isfinite(self.omega)):
            raise ValueError(f"omega must be positive, got {self.omega}")

    def _derivative(self, a, b, q, p):
        w2 = self.omega * self.omega
        if a == 0 and b == 0:
            return 0.5 * (p * p + w2 * q * q)
        if a == 1 and b == 0:
            return w2 * q
        if a == 2 and b == 0:
            return w2
        if a == 0 and b == 1:
            return p
        if a == 0 and b == 2:
            return 1.0
        return 0.0

    def to_json(self):
        return {"variant": self.variant, "omega": self.omega}


@dataclass(frozen=True)
class SeparableBump:
    """``H = p^2/2 + V(q)`` with ``V`` a :class:`BumpPotential`."""

    potential: BumpPotential = field(default_factory=BumpPotential)
    variant = "separable_bump"
    n = 1

    def _derivative(self, a, b, q, p):
        if b == 0:
            v = bump_derivatives(self.potential, q, a)[a]
            if a == 0:
                return 0.5 * p * p + v
            return v
        if a == 0 and b == 1:
            return p
        if a == 0 and b == 2:
            return 1.0
        return 0.0

    def to_json(self):
        return {"variant": self.variant, "bumps": self.potential.to_json()}


PlanarSpec = Union[FreeParticle, Harmonic, SeparableBump]


def _check_planar(inner):
    if getattr(inner, "n", None) != 1 or isinstance(inner, (LiftSingle, LiftProduct)):
        raise DimensionMismatch("lifted Hamiltonians need a planar inner spec")


@dataclass(frozen=True)
class LiftSingle:
    """``H*(q, p) = H(q_1, p_1)`` on ``R^{2n}``."""

    inner: PlanarSpec
    n: int = 2
    variant = "lift_single"

    def __post_init__(self):
        _check_planar(self.inner)
        if self.n < 2:
            raise ValueError("lift dimension n must be at least 2")

    def _derivative_nd(self, alpha, q, p):
        n = self.n
        for i, a in enumerate(alpha):
            if a and i != 0 and i != n:
                return 0.0
        return self.inner._derivative(alpha[0], alpha[n], q[0], p[0])

    def to_json(self):
        return {"variant": self.variant, "n": self.n, "inner": self.inner.to_json()}


@dataclass(frozen=True)
class LiftProduct:
    """``H*(q, p) = sum_i h(q_i, p_i)`` on ``R^{2n}``."""

    inner: PlanarSpec
    n: int = 2
    variant = "lift_product"

    def __post_init__(self):
        _check_planar(self.inner)
        if self.n < 2:
            raise ValueError("lift dimension n must be at least 2")

    def _derivative_nd(self, alpha, q, p):
        n = self.n
        touched = [i for i in range(n) if alpha[i] or alpha[n + i]]
        if not touched:
            total = 0.0
            for i in range(n):
                total += self.inner._derivative(0, 0, q[i], p[i])
            return total
        if len(touched) > 1:
            return 0.0
        i = touched[0]
        return self.inner._derivative(alpha[i], alpha[n + i], q[i], p[i])

    def to_json(self):
        return {"variant": self.variant, "n": self.n, "inner": self.inner.to_json()}


HamiltonianSpec = Union[FreeParticle, Harmonic, SeparableBump, LiftSingle, LiftProduct]


@dataclass(frozen=True)
class LiftKind:
    """How a planar problem is embedded in ``R^{2n}``: ``"single"`` or ``"product"``."""

    kind: str
    n: int = 2

    def __post_init__(self):
        if self.kind not in ("single", "product"):
            raise ValueError(f"unknown lift kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("lift dimension n must be at least 2")

    def lift(self, spec: PlanarSpec) -> HamiltonianSpec:
        cls = LiftSingle if self.kind == "single" else LiftProduct
        return cls(spec, self.n)

    def lift_point(self, x: PhasePoint) -> PhasePoint:
        if x.n != 1:
            raise DimensionMismatch("only planar points can be lifted")
        if self.kind == "single":
            rest = (0.0,) * (self.n - 1)
            return PhasePoint(x.q + rest, x.p + rest)
        return PhasePoint(x.q * self.n, x.p * self.n)

    def to_json(self):
        return {"kind": self.kind, "n": self.n}


def spec_dim(spec: HamiltonianSpec) -> int:
    return spec.n


def spec_to_json(spec: HamiltonianSpec) -> dict:
    return spec.to_json()


def spec_from_json(obj: dict) -> HamiltonianSpec:
    variant = obj.get("variant")
    if variant == "free_particle":
        return FreeParticle()
    if variant == "harmonic":
        return Harmonic(float(obj.get("omega", 1.0)))
    if variant == "separable_bump":
        return SeparableBump(BumpPotential.from_json(obj.get("bumps", [])))
    if variant in ("lift_single", "lift_product"):
        inner = spec_from_json(obj["inner"])
        cls = LiftSingle if variant == "lift_single" else LiftProduct
        return cls(inner, int(obj.get("n", 2)))
    raise ValueError(f"unknown Hamiltonian variant {variant!r}")


# ---------------------------------------------------------------------------
# Query tape


@dataclass(frozen=True)
class QueryRecord:
    """One derivative query. ``lift`` is set when the point lives in a lifted space."""

    point: PhasePoint
    alpha: tuple[int, ...]
    value: float
    lift: LiftKind | None = None

    def to_json(self) -> dict:
        d = {"point": self.point.to_json(), "alpha": list(self.alpha), "value": self.value}
        if self.lift is not None:
            d["lift"] = self.lift.to_json()
        return d


class QueryTape:
    """Append-only record of the queries made during one step."""

    def __init__(self, records: Sequence[QueryRecord] = ()):
        self._records: list[QueryRecord] = list(records)

    def append(self, record: QueryRecord) -> None:
        self._records.append(record)

    @property
    def records(self) -> tuple[QueryRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[QueryRecord]:
        return iter(self._records)

    def __eq__(self, other) -> bool:
        return isinstance(other, QueryTape) and self._records == other._records

    def __repr__(self) -> str:
        return f"QueryTape({len(self._records)} records)"

    def q_coordinates(self) -> list[float]:
        """Every position coordinate touched by a query, in tape order."""
        return [v for r in self._records for v in r.point.q]

    def to_json(self, full: bool = False) -> dict:
        d = {"length": len(self._records), "q_coordinates": self.q_coordinates()}
        if full:
            d["records"] = [r.to_json() for r in self._records]
        return d


def _raw_derivative(spec: HamiltonianSpec, alpha: tuple[int, ...], x: PhasePoint) -> float:
    if spec.n == 1:
        return spec._derivative(alpha[0], alpha[1], x.q[0], x.p[0])
    return spec._derivative_nd(alpha, x.q, x.p)


def eval_derivative(
    spec: HamiltonianSpec,
    alpha: Sequence[int],
    x: PhasePoint,
    tape: QueryTape | None = None,
) -> float:
    """Exact ``d_alpha H(x)``; appends a :class:`QueryRecord` to ``tape`` if given.

    ``alpha`` orders derivatives as ``(q_1..q_n, p_1..p_n)``.
    """
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != 2 * spec.n or x.n != spec.n:
        raise DimensionMismatch(
            f"spec has n={spec.n}, alpha has length {len(alpha)}, point has n={x.n}"
        )
    if any(a < 0 for a in alpha):
        raise ValueError(f"negative multi-index {alpha}")
    if sum(alpha) > MAX_ORDER:
        raise UnsupportedOrder(f"derivative order {sum(alpha)} exceeds {MAX_ORDER}")
    value = _raw_derivative(spec, alpha, x)
    if tape is not None:
        tape.append(QueryRecord(x, alpha, value))
    return value


def energy(spec: HamiltonianSpec, x: PhasePoint, tape: QueryTape | None = None) -> float:
    return eval_derivative(spec, (0,) * (2 * spec.n), x, tape)


def gradient(spec: HamiltonianSpec, x: PhasePoint, tape: QueryTape | None = None) -> tuple[list[float], list[float]]:
    """``(dH/dq, dH/dp)``, queried coordinate by coordinate in a fixed order."""
    n = spec.n
    dq, dp = [], []
    for i in range(n):
        alpha = [0] * (2 * n)
        alpha[i] = 1
        dq.append(eval_derivative(spec, alpha, x, tape))
    for i in range(n):
        alpha = [0] * (2 * n)
        alpha[n + i] = 1
        dp.append(eval_derivative(spec, alpha, x, tape))
    return dq, dp


def _record_spec(spec: HamiltonianSpec, record: QueryRecord) -> HamiltonianSpec:
    return record.lift.lift(spec) if record.lift is not None else spec


def agrees_on_tape(spec_a: HamiltonianSpec, spec_b: HamiltonianSpec, tape: QueryTape) -> bool:
    """True iff both specs give bit-identical values at every taped query."""
    for r in tape:
        a = eval_derivative(_record_spec(spec_a, r), r.alpha, r.point)
        b = eval_derivative(_record_spec(spec_b, r), r.alpha, r.point)
        if a != b:
            return False
    return True
