"""Sequence-level mixing and ergodicity diagnostics.

Everything here works on finite stretches ``tau_a(1..n)`` or ``r(1..n)`` of a
dependence function.  The asymptotic criteria (``tau -> 0`` for mixing,
Cesaro mean ``-> 0`` for ergodicity) are turned into finite checks with
explicit tolerances and a three-way verdict.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np


class Verdict(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


class DegenerateSampleError(ValueError):
    """An empirical proportion is 0 or 1, so a log-ratio estimate is undefined."""


@dataclass(frozen=True)
class DependenceSequence:
    """Values ``theta_1, ..., theta_n`` with ``0 <= theta_t <= bound``.

    ``kind`` is ``"tau"`` or ``"r"``; for ``"r"`` the bound may not exceed 1.
    ``"signed"`` admits ``|theta_t| <= bound``, as for a general positive
    definite ``r`` built from a spectral measure; the classifier then works
    with absolute values and the exponential sandwich does not apply.
    """

    values: np.ndarray
    bound: float
    kind: str = "tau"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        values.setflags(write=False)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("values must be a non-empty 1-d sequence")
        if self.kind not in ("tau", "r", "signed"):
            raise ValueError(f"kind must be 'tau', 'r' or 'signed', got {self.kind!r}")
        bound = float(self.bound)
        if not bound > 0:
            raise ValueError("bound must be positive")
        if self.kind == "r" and bound > 1:
            raise ValueError("r sequences take values in [0, 1]; bound must be <= 1")
        lower = -bound if self.kind == "signed" else 0.0
        if not np.all(np.isfinite(values)) or values.min() < lower or values.max() > bound:
            raise ValueError(f"values must lie in [{lower}, {bound}]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bound", bound)

    @classmethod
    def from_values(cls, values, kind: str = "tau", bound: float | None = None):
        values = np.asarray(values, dtype=float)
        if kind != "signed":
            values = np.clip(values, 0.0, None)
        if bound is None:
            bound = 1.0 if kind == "r" else max(float(np.abs(values).max()), 1.0)
        return cls(values, bound, kind)

    def __len__(self) -> int:
        return self.values.size


def cesaro_average(seq: DependenceSequence, n: int | None = None) -> float:
    """``(1/n) * sum_{t=1}^n values[t]``."""
    n = len(seq) if n is None else int(n)
    if not 1 <= n <= len(seq):
        raise ValueError(f"n must lie in [1, {len(seq)}], got {n}")
    return math.fsum(seq.values[:n]) / n


def _require_unsigned(seq: DependenceSequence) -> None:
    if seq.kind == "signed":
        raise ValueError("the exponential sandwich needs values in [0, C]")


def cesaro_exp_equivalence(
    seq: DependenceSequence, kappa: float, n: int | None = None, rtol: float = 1e-12
) -> tuple[float, bool]:
    """Mean of ``exp(kappa * theta_t)`` over ``t <= n`` and the convexity sandwich

        1 + kappa * mean(theta) <= mean(exp(kappa*theta))
                                <= 1 + (exp(kappa*C) - 1)/C * mean(theta).

    The comparison allows ``rtol`` relative rounding; the sandwich is tight at
    the endpoints ``theta in {0, C}``.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    _require_unsigned(seq)
    n = len(seq) if n is None else int(n)
    mean_theta = cesaro_average(seq, n)
    exp_avg = math.fsum(np.exp(kappa * seq.values[:n])) / n
    C = seq.bound
    lower = 1.0 + kappa * mean_theta
    upper = 1.0 + math.expm1(kappa * C) / C * mean_theta
    ok = lower <= exp_avg * (1 + rtol) and exp_avg <= upper * (1 + rtol)
    return exp_avg, ok


def sandwich_all_prefixes(seq: DependenceSequence, kappa: float, rtol: float = 1e-12) -> bool:
    """Vectorised sandwich check at every prefix length ``n = 1..len(seq)``."""
    _require_unsigned(seq)
    n = np.arange(1, len(seq) + 1)
    theta = seq.values
    # float64 running sums drift by ~n * 1e-16 relative, which breaks the
    # tight endpoint case over long sequences; accumulate in extended precision
    acc = np.longdouble
    mean_theta = np.cumsum(theta.astype(acc)) / n
    exp_avg = np.cumsum(np.exp(kappa * theta).astype(acc)) / n
    C = seq.bound
    lower = 1.0 + kappa * mean_theta
    upper = 1.0 + acc(math.expm1(kappa * C)) / acc(C) * mean_theta
    slack = rtol * np.maximum(1.0, exp_avg)
    return bool(np.all(lower <= exp_avg + slack) and np.all(exp_avg <= upper + slack))


def _verdict(stat: float, tol: float) -> Verdict:
    if stat <= tol:
        return Verdict.PASS
    if stat <= 2 * tol:
        return Verdict.INCONCLUSIVE
    return Verdict.FAIL


def density_zero_decomposition(
    seq: DependenceSequence, delta: float, n_min: int | None = None, n_grid: int = 32
) -> tuple[np.ndarray, float]:
    """Exceptional set ``{t : values[t] > delta}`` and its upper density.

    The density is the largest ``|D & [1, n]| / n`` over a geometric grid of
    ``n`` between ``n_min`` (default ``len // 10``) and ``len``, a finite
    stand-in for the ``limsup``.  Indices are 1-based.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    N = len(seq)
    exceptional = np.flatnonzero(np.abs(seq.values) > delta) + 1
    if exceptional.size == 0:
        return exceptional, 0.0
    n_min = max(1, N // 10) if n_min is None else max(1, int(n_min))
    grid = np.unique(np.geomspace(n_min, N, n_grid).round().astype(int))
    counts = np.searchsorted(exceptional, grid, side="right")
    return exceptional, float(np.max(counts / grid))


@dataclass(frozen=True)
class ClassificationReport:
    mixing_verdict: Verdict
    ergodic_verdict: Verdict
    cesaro_tail: float
    cesaro_full: float
    tail_sup: float
    exceptional_density_estimate: float
    tol: float
    tail_fraction: float
    length: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mixing_verdict"] = self.mixing_verdict.value
        d["ergodic_verdict"] = self.ergodic_verdict.value
        return d


def classify(
    seq: DependenceSequence, tol: float = 1e-3, tail_fraction: float = 0.2
) -> ClassificationReport:
    """Finite-horizon mixing / ergodicity verdicts.

    Mixing uses the supremum of ``|theta_t|`` over the last ``tail_fraction``
    of the values, ergodicity ``|Cesaro mean|`` over the whole sequence.  Each statistic passes
    at ``<= tol``, is inconclusive in ``(tol, 2*tol]`` and fails above.  Since
    mixing implies ergodicity, a mixing pass forces an ergodic pass even when
    early transients inflate the full Cesaro mean.

    ``cesaro_tail`` is the mean over the tail window, an estimate of the
    Cesaro limit unaffected by the transient.
    """
    if len(seq) < 10:
        raise ValueError("need at least 10 values to classify")
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    N = len(seq)
    start = N - max(1, int(math.ceil(tail_fraction * N)))
    tail = seq.values[start:]
    tail_sup = float(np.abs(tail).max())
    cesaro_tail = math.fsum(tail) / tail.size
    cesaro_full = cesaro_average(seq)
    mixing = _verdict(tail_sup, tol)
    ergodic = Verdict.PASS if mixing is Verdict.PASS else _verdict(abs(cesaro_full), tol)
    _, density = density_zero_decomposition(seq, tol)
    return ClassificationReport(
        mixing_verdict=mixing,
        ergodic_verdict=ergodic,
        cesaro_tail=cesaro_tail,
        cesaro_full=cesaro_full,
        tail_sup=tail_sup,
        exceptional_density_estimate=density,
        tol=tol,
        tail_fraction=tail_fraction,
        length=N,
    )


@dataclass(frozen=True)
class SpectralMeasure:
    """Atomic symmetric measure on ``[-pi, pi]``; ``r(t) = sum w cos(t x)``."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.locations, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if x.shape != w.shape or x.ndim != 1:
            raise ValueError("locations and weights must be 1-d arrays of equal length")
        if np.any(np.abs(x) > math.pi) or np.any(w <= 0):
            raise ValueError("locations must lie in [-pi, pi] and weights be positive")
        object.__setattr__(self, "locations", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def symmetric(cls, atoms: Sequence[tuple[float, float]]) -> "SpectralMeasure":
        """Build from ``(x, w)`` with ``x >= 0``; ``w`` is split over ``+-x`` for ``x > 0``."""
        xs, ws = [], []
        for x, w in atoms:
            if x < 0:
                raise ValueError("give non-negative locations; mirroring is automatic")
            if x == 0:
                xs.append(0.0)
                ws.append(w)
            else:
                xs += [x, -x]
                ws += [w / 2, w / 2]
        return cls(np.array(xs), np.array(ws))

    @property
    def is_symmetric(self) -> bool:
        pos = sorted(zip(self.locations[self.locations > 0], self.weights[self.locations > 0]))
        neg = sorted(zip(-self.locations[self.locations < 0], self.weights[self.locations < 0]))
        return len(pos) == len(neg) and all(
            math.isclose(p[0], q[0], abs_tol=1e-15) and math.isclose(p[1], q[1], rel_tol=1e-12)
            for p, q in zip(pos, neg)
        )

    @property
    def atom_at_zero(self) -> float:
        return float(self.weights[self.locations == 0].sum())

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


def r_from_spectral(mu: SpectralMeasure, t) -> np.ndarray | float:
    """``r(t) = sum_j w_j cos(t x_j)`` (real by symmetry)."""
    if not mu.is_symmetric:
        raise ValueError("spectral measure must be symmetric about 0")
    t = np.asarray(t, dtype=float)
    r = np.cos(np.multiply.outer(t, mu.locations)) @ mu.weights
    return float(r) if r.ndim == 0 else r


def spectral_cesaro_error_bound(mu: SpectralMeasure, n: int) -> float:
    """Bound on ``|(1/n) sum_{t<=n} r(t) - mu({0})|`` from the geometric sum
    ``|sum_{t=1}^n e^{itx}| <= 2 / |1 - e^{ix}|``."""
    x = mu.locations[mu.locations != 0]
    w = mu.weights[mu.locations != 0]
    return float(np.sum(w * 2.0 / (n * np.abs(1.0 - np.exp(1j * x)))))


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float

    def __iter__(self):
        return iter((self.value, self.se))


def _proportion(indicator: np.ndarray, name: str) -> float:
    p = float(indicator.mean())
    if p <= 0.0 or p >= 1.0:
        raise DegenerateSampleError(f"empirical {name} proportion is {p}; estimate undefined")
    return p


def estimate_tau_mc(x0: np.ndarray, xt: np.ndarray, a: float, min_replicates: int = 1000) -> Estimate:
    """Plug-in ``log P[X0<=a, Xt<=a] - log P[X0<=a] - log P[Xt<=a]`` with delta-method se.

    The standard error uses the multinomial covariance of the three
    indicators, all computed from the same replicates.
    """
    x0, xt = np.asarray(x0), np.asarray(xt)
    if x0.shape != xt.shape or x0.ndim != 1:
        raise ValueError("x0 and xt must be 1-d arrays of equal length")
    N = x0.size
    if N < min_replicates:
        raise ValueError(f"need at least {min_replicates} replicates, got {N}")
    i0, it = x0 <= a, xt <= a
    ij = i0 & it
    p0 = _proportion(i0, "P[X(0)<=a]")
    pt = _proportion(it, "P[X(t)<=a]")
    pj = _proportion(ij, "joint")
    value = math.log(pj) - math.log(p0) - math.log(pt)
    # covariance of (I0, It, Ij); Ij implies both I0 and It
    cov = np.array(
        [
            [p0 * (1 - p0), pj - p0 * pt, pj * (1 - p0)],
            [pj - p0 * pt, pt * (1 - pt), pj * (1 - pt)],
            [pj * (1 - p0), pj * (1 - pt), pj * (1 - pj)],
        ]
    )
    g = np.array([-1 / p0, -1 / pt, 1 / pj])
    var = max(float(g @ cov @ g), 0.0) / N
    return Estimate(value, math.sqrt(var))


def estimate_r_mc(x0: np.ndarray, xt: np.ndarray, min_replicates: int = 1000) -> Estimate:
    """``r = 2 + log P[X0<=1, Xt<=1]`` for unit-Frechet margins, delta-method se."""
    x0, xt = np.asarray(x0), np.asarray(xt)
    if x0.shape != xt.shape or x0.ndim != 1:
        raise ValueError("x0 and xt must be 1-d arrays of equal length")
    N = x0.size
    if N < min_replicates:
        raise ValueError(f"need at least {min_replicates} replicates, got {N}")
    pj = float(((x0 <= 1.0) & (xt <= 1.0)).mean())
    if pj <= 0.0:
        raise DegenerateSampleError("empirical joint probability is 0")
    rho = -math.log(pj)
    se = math.sqrt((1 - pj) / (pj * N))
    return Estimate(2.0 - rho, se)


def bootstrap_se(
    statistic: Callable[..., float], *samples: np.ndarray, n_boot: int = 200, seed: int = 0
) -> float:
    """Nonparametric bootstrap standard error; rows are resampled jointly."""
    rng = np.random.default_rng(seed)
    N = len(samples[0])
    reps = []
    for _ in range(n_boot):
        idx = rng.integers(0, N, size=N)
        try:
            reps.append(statistic(*(s[idx] for s in samples)))
        except DegenerateSampleError:
            continue
    if len(reps) < 2:
        raise DegenerateSampleError("too few valid bootstrap replicates")
    return float(np.std(reps, ddof=1))


def read_sequence_csv(text: str) -> np.ndarray:
    """Parse two-column ``t,value`` CSV (header optional) into values ordered by t."""
    rows = []
    for row in csv.reader(io.StringIO(text)):
        if not row or not row[0].strip():
            continue
        try:
            rows.append((int(row[0]), float(row[1])))
        except ValueError:
            if rows:
                raise
            continue  # header
    rows.sort()
    ts = [t for t, _ in rows]
    if ts != list(range(1, len(ts) + 1)):
        raise ValueError("sequence CSV must list t = 1..n without gaps")
    return np.array([v for _, v in rows])


def write_sequence_csv(values: Sequence[float], header: str = "value") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", header])
    for t, v in enumerate(values, start=1):
        w.writerow([t, repr(float(v))])
    return buf.getvalue()
