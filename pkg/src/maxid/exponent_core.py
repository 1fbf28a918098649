"""Exact finite-dimensional laws of max-i.d. vectors with atomic exponent measures.

A max-i.d. vector with exponent measure ``Q`` on ``[-inf, inf)^d`` has
distribution function ``F(y) = exp(-Q([-inf, y]^c))``.  When ``Q`` is a finite
sum of weighted point masses every quantity of interest (cylinder
probabilities, the dependence coefficient ``tau_a(t)``, association bounds)
reduces to a finite enumeration, which is what this module does.

Stationary sequences are represented by :class:`MovingMaximaModel`: shifted
copies of finitely supported deterministic profiles, carried by a Poisson
structure with rate ``c_j`` per shift, plus diagonal atoms that put mass on
constant paths.  Such a sequence is stationary and max-i.d., and each of its
finite-dimensional exponent measures is a finite atomic measure.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

#: Sentinel for the coordinate value ``-inf``.  Only ever compared, never
#: used in arithmetic.
NEG_INF = -math.inf

Point = tuple[float, ...]


def _check_level(value: float, what: str) -> float:
    value = float(value)
    if math.isnan(value) or value == math.inf:
        raise ValueError(f"{what} must be a real number or -inf, got {value!r}")
    return value


def _finite(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{what} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ExtendedPoint:
    """A point of ``[-inf, inf)^d``."""

    coords: Point

    def __post_init__(self):
        coords = tuple(_check_level(c, "coordinate") for c in self.coords)
        if not coords:
            raise ValueError("points must have dimension >= 1")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)


@dataclass(frozen=True)
class AtomicExponentMeasure:
    """Finite weighted sum of point masses on ``[-inf, inf)^dim``.

    Atoms are stored canonically: identical points are merged (masses add)
    and atoms are sorted, so two measures compare equal iff they charge the
    same points with the same masses.
    """

    dim: int
    atoms: tuple[tuple[Point, float], ...] = ()

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        merged: dict[Point, float] = defaultdict(float)
        for point, mass in self.atoms:
            coords = point.coords if isinstance(point, ExtendedPoint) else point
            coords = tuple(_check_level(c, "coordinate") for c in coords)
            if len(coords) != self.dim:
                raise ValueError(
                    f"atom {coords} has dimension {len(coords)}, expected {self.dim}"
                )
            mass = float(mass)
            if not (mass > 0 and math.isfinite(mass)):
                raise ValueError(f"atom masses must be positive and finite, got {mass!r}")
            merged[coords] += mass
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "atoms", tuple(sorted(merged.items())))

    @property
    def total_mass(self) -> float:
        return math.fsum(m for _, m in self.atoms)

    def isclose(self, other: "AtomicExponentMeasure", rtol: float = 1e-12) -> bool:
        """Same support and masses equal up to ``rtol``."""
        if self.dim != other.dim or len(self.atoms) != len(other.atoms):
            return False
        for (p, m), (q, n) in zip(self.atoms, other.atoms):
            if p != q or not math.isclose(m, n, rel_tol=rtol):
                return False
        return True


def _as_levels(y: Sequence[float], dim: int) -> Point:
    y = tuple(_finite(v, "level") for v in np.atleast_1d(np.asarray(y, dtype=float)))
    if len(y) != dim:
        raise ValueError(f"level vector has length {len(y)}, measure has dim {dim}")
    return y


def exceedance_mass(Q: AtomicExponentMeasure, y: Sequence[float]) -> float:
    """Mass ``Q([-inf, y]^c)``: atoms exceeding ``y`` in at least one coordinate."""
    y = _as_levels(y, Q.dim)
    return math.fsum(
        mass for point, mass in Q.atoms if any(p > yi for p, yi in zip(point, y))
    )


def cylinder_prob(Q: AtomicExponentMeasure, y: Sequence[float]) -> float:
    """``P[X <= y] = exp(-exceedance_mass(Q, y))``."""
    return math.exp(-exceedance_mass(Q, y))


def project_marginal(Q: AtomicExponentMeasure, coords: Iterable[int]) -> AtomicExponentMeasure:
    """Exponent measure of the sub-vector ``X[coords]`` (0-based indices).

    Atoms whose projection is entirely ``-inf`` are dropped since they charge
    no exceedance set of finite levels.
    """
    coords = list(coords)
    if not coords:
        raise ValueError("coordinate subset must be non-empty")
    for c in coords:
        if not (0 <= c < Q.dim):
            raise ValueError(f"coordinate {c} out of range for dim {Q.dim}")
    atoms = []
    for point, mass in Q.atoms:
        proj = tuple(point[c] for c in coords)
        if any(p != NEG_INF for p in proj):
            atoms.append((proj, mass))
    return AtomicExponentMeasure(len(coords), tuple(atoms))


@dataclass(frozen=True)
class Profile:
    """Deterministic profile ``f`` with finite support, carried with rate ``mass``.

    ``values`` maps integer lags to real values; the profile is ``-inf`` off
    its support.
    """

    mass: float
    values: Mapping[int, float]

    def __post_init__(self):
        mass = float(self.mass)
        if not (mass > 0 and math.isfinite(mass)):
            raise ValueError(f"profile mass must be positive, got {self.mass!r}")
        if not self.values:
            raise ValueError("profile support must be non-empty")
        values = {}
        for lag, value in self.values.items():
            if int(lag) != lag:
                raise ValueError(f"profile lags must be integers, got {lag!r}")
            values[int(lag)] = _finite(value, "profile value")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "values", dict(sorted(values.items())))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(self.values)

    @property
    def width(self) -> int:
        """``max(support) - min(support)``; lags further apart are never linked."""
        return max(self.values) - min(self.values)

    def __call__(self, lag: int) -> float:
        return self.values.get(lag, NEG_INF)


@dataclass(frozen=True)
class MovingMaximaModel:
    """Stationary max-i.d. sequence ``X(t) = max(moving maxima, diagonal part)``.

    The exponent measure of ``(X(t_1), ..., X(t_k))`` is

        sum_j c_j sum_s delta_{(f_j(t_1 - s), ..., f_j(t_k - s))}
          + sum_diag m delta_{(v, ..., v)},

    with all-``-inf`` images omitted.
    """

    profiles: tuple[Profile, ...] = ()
    diagonal: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        profiles = tuple(
            p if isinstance(p, Profile) else Profile(p[0], p[1]) for p in self.profiles
        )
        diagonal = []
        for level, mass in self.diagonal:
            mass = float(mass)
            if not (mass > 0 and math.isfinite(mass)):
                raise ValueError(f"diagonal masses must be positive, got {mass!r}")
            diagonal.append((_finite(level, "diagonal level"), mass))
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "diagonal", tuple(diagonal))

    @property
    def width(self) -> int:
        """Largest profile width; ``tau`` of the profile part vanishes beyond it."""
        return max((p.width for p in self.profiles), default=0)

    def diagonal_mass_above(self, a: float) -> float:
        return math.fsum(m for v, m in self.diagonal if v > a)


def finite_dim_measure(model: MovingMaximaModel, indices: Sequence[int]) -> AtomicExponentMeasure:
    """Exponent measure ``Q_{t_1,...,t_k}`` of ``(X(t_1), ..., X(t_k))``."""
    indices = [int(t) for t in indices]
    if not indices:
        raise ValueError("indices must be non-empty")
    atoms = []
    for prof in model.profiles:
        shifts = sorted({t - lag for t in indices for lag in prof.support})
        for s in shifts:
            atoms.append((tuple(prof(t - s) for t in indices), prof.mass))
    k = len(indices)
    for level, mass in model.diagonal:
        atoms.append(((level,) * k, mass))
    return AtomicExponentMeasure(k, tuple(atoms))


def tau_exact(model: MovingMaximaModel, a: float, t: int) -> float:
    """``Q_{0,t}((a, inf) x (a, inf))``, the exponent mass of the upper quadrant."""
    a = _finite(a, "level a")
    Q = finite_dim_measure(model, (0, t))
    return math.fsum(m for (x0, xt), m in Q.atoms if x0 > a and xt > a)


def tau_from_definition(model: MovingMaximaModel, a: float, t: int) -> float:
    """Dependence coefficient from probabilities:

    ``log P[X(0)<=a, X(t)<=a] - log P[X(0)<=a] - log P[X(t)<=a]``.
    """
    joint = cylinder_prob(finite_dim_measure(model, (0, t)), (a, a))
    p0 = cylinder_prob(finite_dim_measure(model, (0,)), (a,))
    pt = cylinder_prob(finite_dim_measure(model, (t,)), (a,))
    return math.log(joint) - math.log(p0) - math.log(pt)


def tau_sequence(model: MovingMaximaModel, a: float, n: int) -> np.ndarray:
    """``[tau_a(1), ..., tau_a(n)]`` computed exactly."""
    return np.array([tau_exact(model, a, t) for t in range(1, n + 1)])


@dataclass(frozen=True)
class CylinderEvent:
    """The event ``{X(t_i) <= y_i for all i}``."""

    entries: tuple[tuple[int, float], ...] = field(default=())

    def __post_init__(self):
        entries = tuple((int(t), _finite(y, "event level")) for t, y in self.entries)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def of(cls, indices: Sequence[int], levels: Sequence[float]) -> "CylinderEvent":
        if len(indices) != len(levels):
            raise ValueError("indices and levels must have equal length")
        return cls(tuple(zip(indices, levels)))

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(t for t, _ in self.entries)

    @property
    def levels(self) -> tuple[float, ...]:
        return tuple(y for _, y in self.entries)

    def shifted(self, h: int) -> "CylinderEvent":
        return CylinderEvent(tuple((t + h, y) for t, y in self.entries))


def _merge_entries(events: Iterable[tuple[CylinderEvent, int]]) -> dict[int, float]:
    merged: dict[int, float] = {}
    for event, shift in events:
        for t, y in event.entries:
            t = t + int(shift)
            merged[t] = min(y, merged.get(t, math.inf))
    return merged


def cylinder_joint_prob(
    model: MovingMaximaModel, events: Sequence[tuple[CylinderEvent, int]]
) -> float:
    """Exact probability of the intersection of shifted cylinder events.

    Repeated indices keep the smallest level, which is the intersection of the
    constraints.
    """
    merged = _merge_entries(events)
    if not merged:
        raise ValueError("the shifted events have no entries")
    indices = sorted(merged)
    Q = finite_dim_measure(model, indices)
    return cylinder_prob(Q, [merged[t] for t in indices])


@dataclass(frozen=True)
class LebowitzResult:
    lower_ok: bool
    upper_ok: bool
    lower_slack: float
    upper_slack: float
    p_a: float
    p_b: float
    p_joint: float
    upper_bound: float


def lebowitz_check(
    model: MovingMaximaModel,
    A: CylinderEvent,
    B: CylinderEvent,
    t: int,
    atol: float = 1e-12,
) -> LebowitzResult:
    """Check ``P[A]P[B] <= P[A & B_t] <= exp(sum_ij tau_a(t + t_j'' - t_i')) P[A]P[B]``.

    ``a`` is the smallest level appearing in either event and ``B_t`` is ``B``
    shifted by ``t``.  Slacks are ``middle - lower`` and ``upper - middle``; a
    flag is set when its slack is ``>= -atol``.
    """
    if not A.entries or not B.entries:
        raise ValueError("events must be non-empty")
    a = min(A.levels + B.levels)
    p_a = cylinder_joint_prob(model, [(A, 0)])
    p_b = cylinder_joint_prob(model, [(B, 0)])
    p_joint = cylinder_joint_prob(model, [(A, 0), (B, t)])
    product = p_a * p_b

    # tau only depends on |lag|, so cache per lag
    taus: dict[int, float] = {}
    theta = []
    for ti in A.indices:
        for tj in B.indices:
            lag = abs(t + tj - ti)
            if lag not in taus:
                taus[lag] = tau_exact(model, a, lag)
            theta.append(taus[lag])
    upper = math.exp(math.fsum(theta)) * product

    lower_slack = p_joint - product
    upper_slack = upper - p_joint
    return LebowitzResult(
        lower_ok=lower_slack >= -atol,
        upper_ok=upper_slack >= -atol,
        lower_slack=lower_slack,
        upper_slack=upper_slack,
        p_a=p_a,
        p_b=p_b,
        p_joint=p_joint,
        upper_bound=upper,
    )


def mixing_gap(
    model: MovingMaximaModel, events: Sequence[CylinderEvent], shifts: Sequence[int]
) -> float:
    """``P[A0 & A1_{s1} & ... ] - prod P[Ai]`` for cumulative shifts ``s_i``.

    ``shifts`` has one entry per event after the first; event ``i`` is moved by
    ``shifts[0] + ... + shifts[i-1]``, as in the definition of mixing of order r.
    """
    if len(shifts) != len(events) - 1:
        raise ValueError("need one shift per event after the first")
    offsets = np.concatenate([[0], np.cumsum(shifts, dtype=np.int64)])
    joint = cylinder_joint_prob(model, list(zip(events, offsets.tolist())))
    marginals = [cylinder_joint_prob(model, [(e, 0)]) for e in events]
    return joint - math.prod(marginals)


def random_model(
    rng: np.random.Generator,
    max_profiles: int = 5,
    max_support: int = 6,
    max_diagonal: int = 2,
    level_range: tuple[float, float] = (-2.0, 3.0),
) -> MovingMaximaModel:
    """Draw a random model; used by tests, fuzzing and the CLI demo configs."""
    lo, hi = level_range
    profiles = []
    for _ in range(rng.integers(0, max_profiles + 1)):
        size = int(rng.integers(1, max_support + 1))
        start = int(rng.integers(-3, 4))
        lags = sorted(rng.choice(np.arange(start, start + max_support + 2), size, replace=False))
        values = {int(l): float(np.round(rng.uniform(lo, hi), 3)) for l in lags}
        profiles.append(Profile(float(np.round(rng.uniform(0.05, 1.0), 3)), values))
    diagonal = tuple(
        (float(np.round(rng.uniform(lo, hi), 3)), float(np.round(rng.uniform(0.05, 1.0), 3)))
        for _ in range(rng.integers(0, max_diagonal + 1))
    )
    return MovingMaximaModel(tuple(profiles), diagonal)


def random_event(
    rng: np.random.Generator, max_len: int = 3, span: int = 4,
    level_range: tuple[float, float] = (-1.5, 2.5),
) -> CylinderEvent:
    k = int(rng.integers(1, max_len + 1))
    idx = rng.integers(-span, span + 1, size=k)
    lev = np.round(rng.uniform(*level_range, size=k), 3)
    return CylinderEvent.of(idx.tolist(), lev.tolist())


def sample_values(
    model: MovingMaximaModel, indices: Sequence[int], size: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``size`` replicates of ``(X(t_1), ..., X(t_k))``; shape ``(size, k)``.

    Each (profile, shift) pair is present when its Poisson(``c_j``) count is
    positive; the same holds for diagonal atoms.  Coordinates hit by nothing
    are ``-inf``.
    """
    indices = [int(t) for t in indices]
    out = np.full((size, len(indices)), NEG_INF)
    for prof in model.profiles:
        shifts = sorted({t - lag for t in indices for lag in prof.support})
        for s in shifts:
            present = rng.poisson(prof.mass, size=size) > 0
            row = np.array([prof(t - s) for t in indices])
            np.maximum(out, np.where(present[:, None], row, NEG_INF), out=out)
    for level, mass in model.diagonal:
        present = rng.poisson(mass, size=size) > 0
        np.maximum(out, np.where(present, level, NEG_INF)[:, None], out=out)
    return out
