"""Brown-Resnick processes on finite grids.

``X(t) = max_i exp(U_i + W_i(t) - sigma^2(t)/2)`` where ``{U_i}`` is Poisson
with intensity ``e^{-x}`` and ``W_i`` are i.i.d. centred Gaussian processes
with stationary increments, ``W(0) = 0`` and variance ``sigma^2(t)``.

Two samplers are provided:

* ``"threshold"`` follows the series literally, adding points in decreasing
  order of ``U_i`` until ``U_i < min_t log X(t) - margin``.  Cost grows like
  ``exp(margin)`` per replicate.
* ``"extremal"`` (default) is exact: it draws, location by location, only
  the extremal functions (Dombry, Engelke & Oesting, 2016), so a replicate
  costs about one spectral path per grid point.

Random streams are derived from ``(seed, block index)`` for fixed-size
blocks of replicates, so results do not depend on how blocks are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .ergodic_diag import estimate_r_mc

TWO_PI_SQ_OVER_3 = 2 * math.pi**2 / 3


class CovarianceError(ValueError):
    """The variogram does not induce a positive semidefinite covariance on the grid."""


@dataclass(frozen=True)
class VariogramSpec:
    """Variogram ``sigma^2(t)``, ``t >= 0``.

    Use the constructors :meth:`power`, :meth:`dyadic_cosine` and
    :meth:`table` rather than the raw fields.
    """

    variant: Literal["power", "dyadic_cosine", "table"]
    theta: float = 1.0
    alpha: float = 1.0
    K: int = 0
    table_t: tuple[float, ...] = ()
    table_v: tuple[float, ...] = ()

    @classmethod
    def power(cls, theta: float, alpha: float) -> "VariogramSpec":
        if not theta > 0 or not 0 < alpha <= 2:
            raise ValueError("power variogram needs theta > 0 and alpha in (0, 2]")
        return cls("power", theta=float(theta), alpha=float(alpha))

    @classmethod
    def dyadic_cosine(cls, K: int) -> "VariogramSpec":
        if int(K) < 1:
            raise ValueError("truncation order K must be >= 1")
        return cls("dyadic_cosine", K=int(K))

    @classmethod
    def dyadic_for(cls, t_max: float, tol: float = 1e-8) -> "VariogramSpec":
        """Dyadic variogram truncated so the tail bound at ``t_max`` is ``<= tol``."""
        return cls.dyadic_cosine(dyadic_order(t_max, tol))

    @classmethod
    def table(cls, t: Sequence[float], values: Sequence[float]) -> "VariogramSpec":
        t, v = tuple(map(float, t)), tuple(map(float, values))
        if len(t) != len(v) or len(t) < 2 or t[0] != 0.0 or v[0] != 0.0:
            raise ValueError("table needs >= 2 points starting at (0, 0)")
        if any(b <= a for a, b in zip(t, t[1:])) or min(v) < 0:
            raise ValueError("table grid must increase and values be non-negative")
        return cls("table", table_t=t, table_v=v)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("variogram is evaluated at t >= 0")
        if self.variant == "power":
            return self.theta * t**self.alpha
        if self.variant == "dyadic_cosine":
            out = np.zeros_like(t)
            for k in range(1, self.K + 1):
                # t / 2^k is exact, so integers reduce to an exact 0
                frac = np.mod(t / 2.0**k, 1.0)
                out += 2.0 * np.sin(math.pi * frac) ** 2
            return out
        if np.any(t > self.table_t[-1]):
            raise ValueError("t beyond the end of the variogram table")
        return np.interp(t, self.table_t, self.table_v)

    def tail_bound(self, t) -> np.ndarray | float:
        """Bound on the omitted terms ``sum_{k>K} (1 - cos(2 pi t / 2^k))``."""
        t = np.asarray(t, dtype=float)
        if self.variant != "dyadic_cosine":
            return np.zeros_like(t)
        return TWO_PI_SQ_OVER_3 * t**2 * 4.0 ** (-self.K)

    def to_dict(self) -> dict:
        if self.variant == "power":
            return {"variant": "power", "theta": self.theta, "alpha": self.alpha}
        if self.variant == "dyadic_cosine":
            return {"variant": "dyadic_cosine", "K": self.K}
        return {"variant": "table", "t": list(self.table_t), "values": list(self.table_v)}


def dyadic_order(t_max: float, tol: float = 1e-8) -> int:
    """Smallest ``K >= 1`` with ``(2 pi^2 / 3) t_max^2 4^{-K} <= tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if t_max <= 0:
        return 1
    return max(1, math.ceil(math.log(TWO_PI_SQ_OVER_3 * t_max**2 / tol, 4)))


class VariogramValue(NamedTuple):
    value: float
    tail_bound: float


def variogram_eval(spec: VariogramSpec, t: float) -> VariogramValue:
    """``sigma^2(t)`` plus the truncation tail bound (0 for exact variants)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return VariogramValue(float(spec(t)), float(spec.tail_bound(t)))


@dataclass(frozen=True)
class BrSimConfig:
    grid: tuple[float, ...]
    replicates: int
    seed: int = 0
    margin: float = 12.0
    max_count: int = 100_000
    method: Literal["extremal", "threshold"] = "extremal"
    block_size: int = 4096

    def __post_init__(self):
        grid = tuple(float(t) for t in self.grid)
        if not grid or grid[0] != 0.0:
            raise ValueError("grid must start at 0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if int(self.replicates) < 1:
            raise ValueError("replicates must be >= 1")
        if self.method not in ("extremal", "threshold"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.margin > 0 or int(self.max_count) < 1 or int(self.block_size) < 1:
            raise ValueError("margin, max_count and block_size must be positive")
        object.__setattr__(self, "grid", grid)

    def blocks(self):
        """Yield ``(start, size, rng)`` for each replicate block."""
        for b, start in enumerate(range(0, self.replicates, self.block_size)):
            size = min(self.block_size, self.replicates - start)
            ss = np.random.SeedSequence(self.seed, spawn_key=(b,))
            yield start, size, np.random.Generator(np.random.PCG64(ss))


def covariance(spec: VariogramSpec, grid: Sequence[float]) -> np.ndarray:
    """``Gamma(s, t) = (sigma^2(s) + sigma^2(t) - sigma^2(|t - s|)) / 2``."""
    g = np.asarray(grid, dtype=float)
    v = spec(g)
    return 0.5 * (v[:, None] + v[None, :] - spec(np.abs(g[:, None] - g[None, :])))


def path_factor(spec: VariogramSpec, grid: Sequence[float], tol: float = 1e-10) -> np.ndarray:
    """Matrix ``L`` with ``L @ L.T == Gamma`` (eigen-factorisation).

    Eigenvalues within ``tol * max(1, lambda_max)`` of zero are rounding and
    set to 0, so rank-deficient covariances factor exactly; anything more
    negative raises :class:`CovarianceError`.
    Rows for grid points at ``t = 0`` are exactly zero.
    """
    gamma = covariance(spec, grid)
    zero = np.asarray(grid) == 0.0
    L = np.zeros((gamma.shape[0], max(1, int((~zero).sum()))))
    if (~zero).any():
        sub = gamma[np.ix_(~zero, ~zero)]
        lam, vec = np.linalg.eigh(sub)
        scale = max(1.0, float(lam[-1]))
        if lam[0] < -tol * scale:
            raise CovarianceError(
                f"covariance not PSD: smallest eigenvalue {lam[0]:.3e} "
                f"(largest {lam[-1]:.3e}, tolerance {tol * scale:.1e})"
            )
        lam[lam < tol * scale] = 0.0
        L[~zero] = vec * np.sqrt(lam)
    return L


def gaussian_paths(spec: VariogramSpec, cfg: BrSimConfig) -> np.ndarray:
    """``cfg.replicates`` draws of ``(W(t))_{t in grid}``; shape ``(replicates, m)``."""
    L = path_factor(spec, cfg.grid)
    out = np.empty((cfg.replicates, len(cfg.grid)))
    for start, size, rng in cfg.blocks():
        out[start:start + size] = rng.standard_normal((size, L.shape[1])) @ L.T
    return out


def poisson_gumbel_points(max_count: int, seed: int | np.random.Generator = 0) -> np.ndarray:
    """First ``max_count`` points, in decreasing order, of a Poisson process with
    intensity ``e^{-x}``: ``U_i = -log(Gamma_i)`` for unit-rate arrivals ``Gamma_i``."""
    if int(max_count) < 1:
        raise ValueError("max_count must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return -np.log(np.cumsum(rng.exponential(size=int(max_count))))


@dataclass
class BrSample:
    grid: np.ndarray
    values: np.ndarray  # (replicates, m), strictly positive
    counts: np.ndarray  # spectral paths drawn per replicate
    flagged: np.ndarray  # replicate hit max_count before its stopping rule
    method: str

    @property
    def n_flagged(self) -> int:
        return int(self.flagged.sum())

    def column(self, t: float) -> np.ndarray:
        idx = np.flatnonzero(np.isclose(self.grid, t, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(f"t={t} not on the grid")
        return self.values[:, idx[0]]


def _threshold_block(L, half_var, size, rng, margin, max_count):
    m = L.shape[0]
    log_max = np.full((size, m), -np.inf)
    gamma = rng.exponential(size=size)
    counts = np.zeros(size, dtype=np.int64)
    flagged = np.zeros(size, dtype=bool)
    active = np.arange(size)
    while active.size:
        u = -np.log(gamma[active])
        keep = u >= log_max[active].min(axis=1) - margin
        active, u = active[keep], u[keep]
        if not active.size:
            break
        w = rng.standard_normal((active.size, L.shape[1])) @ L.T
        np.maximum(log_max[active], u[:, None] + w - half_var, out=w)
        log_max[active] = w
        counts[active] += 1
        gamma[active] += rng.exponential(size=active.size)
        hit = counts[active] >= max_count
        flagged[active[hit]] = True
        active = active[~hit]
    return np.exp(log_max), counts, flagged


def _extremal_block(spec, grid, L, size, rng, max_count):
    m = len(grid)
    g = np.asarray(grid)
    # log-variance shifts of the tilted spectral functions, one row per location
    shift = 0.5 * spec(np.abs(g[:, None] - g[None, :]))
    Z = np.zeros((size, m))
    counts = np.zeros(size, dtype=np.int64)
    flagged = np.zeros(size, dtype=bool)
    for j in range(m):
        gamma = rng.exponential(size=size)
        active = np.flatnonzero((1.0 / gamma > Z[:, j]) & ~flagged)
        while active.size:
            zeta = 1.0 / gamma[active]
            w = rng.standard_normal((active.size, L.shape[1])) @ L.T
            y = zeta[:, None] * np.exp(w - w[:, [j]] - shift[j])
            ok = np.all(y[:, :j] < Z[active, :j], axis=1)
            acc = active[ok]
            Z[acc] = np.maximum(Z[acc], y[ok])
            counts[active] += 1
            gamma[active] += rng.exponential(size=active.size)
            hit = counts[active] >= max_count
            flagged[active[hit]] = True
            still = (1.0 / gamma[active] > Z[active, j]) & ~hit
            active = active[still]
    return Z, counts, flagged


def simulate_br_path(spec: VariogramSpec, cfg: BrSimConfig) -> BrSample:
    """Replicated Brown-Resnick paths on ``cfg.grid`` with truncation diagnostics."""
    L = path_factor(spec, cfg.grid)
    half_var = 0.5 * spec(np.asarray(cfg.grid))
    R, m = cfg.replicates, len(cfg.grid)
    values = np.empty((R, m))
    counts = np.empty(R, dtype=np.int64)
    flagged = np.empty(R, dtype=bool)
    for start, size, rng in cfg.blocks():
        if cfg.method == "threshold":
            block = _threshold_block(L, half_var, size, rng, cfg.margin, cfg.max_count)
        else:
            block = _extremal_block(spec, cfg.grid, L, size, rng, cfg.max_count)
        sl = slice(start, start + size)
        values[sl], counts[sl], flagged[sl] = block
    return BrSample(np.asarray(cfg.grid), values, counts, flagged, cfg.method)


def gaussian_tail(z) -> np.ndarray | float:
    """``P[N(0,1) > z]`` via ``erfc``, accurate in relative terms in the upper tail."""
    from scipy.special import erfc

    out = 0.5 * erfc(np.asarray(z, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def theoretical_r(spec: VariogramSpec, t, formula: Literal["single_tail", "continuity"] = "continuity"):
    """Extremal dependence ``r(t)`` from the variogram.

    ``"single_tail"`` is ``Phibar(sigma(t)/2)``; ``"continuity"`` is
    ``2 Phibar(sigma(t)/2)``, the variant with ``r(0) = 1``.  Use
    :func:`select_r_variant` to decide between them empirically.
    """
    sigma = np.sqrt(spec(np.asarray(t, dtype=float)))
    tail = gaussian_tail(sigma / 2.0)
    if formula == "single_tail":
        return tail
    if formula == "continuity":
        return 2.0 * tail if np.ndim(tail) else 2.0 * float(tail)
    raise ValueError(f"unknown formula {formula!r}")


@dataclass(frozen=True)
class VariantSelection:
    selected: str
    chi2: dict[str, float]
    rows: list[dict]


def select_r_variant(sample: BrSample, spec: VariogramSpec, ts: Sequence[float]) -> VariantSelection:
    """Pick the ``theoretical_r`` variant closer to the Monte-Carlo estimates.

    Compares ``estimate_r_mc`` at each ``t`` against both formulas and picks
    the one with the smaller sum of squared standardised residuals.
    """
    chi2 = {"single_tail": 0.0, "continuity": 0.0}
    rows = []
    x0 = sample.column(0.0)
    for t in ts:
        est = estimate_r_mc(x0, sample.column(t))
        row = {"t": float(t), "r_hat": est.value, "se": est.se}
        for name in chi2:
            r = float(theoretical_r(spec, t, name))
            row[name] = r
            chi2[name] += ((est.value - r) / est.se) ** 2
        rows.append(row)
    return VariantSelection(min(chi2, key=chi2.get), chi2, rows)


def frechet_ks(x: np.ndarray):
    """KS test of ``x`` against the unit Frechet law ``P[X <= y] = exp(-1/y)``."""
    return stats.kstest(x, lambda y: np.exp(-1.0 / np.asarray(y)))


# ---------------------------------------------------------------------------
# Exceptional-set analysis for the dyadic cosine variogram


@dataclass
class ExceptionalRecord:
    n: int
    measured: float  # grid-measured Lebesgue measure of D_{n,eps}
    bound: float  # 6 eps 2^n
    resolution: float  # grid error bound on ``measured``
    riemann_S: float
    expected_S: float  # (1 - 2 eps) 2^n n
    b_measure_max_error: float  # max_k |grid lambda(B_{k,n}) - (1 - 2 eps) 2^n|
    min_sigma2_off_D: float
    sigma2_floor: float  # 0.5 (1 - cos(2 pi eps)) n
    log_constant: float  # min over off-D grid points of sigma^2(t) / log t

    @property
    def measure_ok(self) -> bool:
        return self.measured <= self.bound + self.resolution

    @property
    def sigma2_ok(self) -> bool:
        return self.min_sigma2_off_D >= self.sigma2_floor


@dataclass
class ExceptionalSetReport:
    eps: float
    grid_step: float
    records: list[ExceptionalRecord] = field(default_factory=list)
    density_estimate: float = 0.0
    density_bound: float = 0.0

    @property
    def all_ok(self) -> bool:
        return (
            all(r.measure_ok and r.sigma2_ok for r in self.records)
            and self.density_estimate <= self.density_bound
        )

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "grid_step": self.grid_step,
            "density_estimate": self.density_estimate,
            "density_bound": self.density_bound,
            "all_ok": self.all_ok,
            "records": [dict(vars(r), measure_ok=r.measure_ok, sigma2_ok=r.sigma2_ok)
                        for r in self.records],
        }


def exceptional_set_analysis(
    eps: float, n_max: int, grid_step: float, chunk: int = 1 << 21
) -> ExceptionalSetReport:
    """Measure the exceptional sets ``D_{n,eps}`` of the dyadic cosine variogram.

    On ``[2^n, 2^{n+1}]``, ``S_n(t)`` counts the ``k <= n`` for which ``t/2^k``
    is further than ``eps`` from an integer, and ``D_{n,eps} = {S_n < n/2}``.
    Lebesgue measures are midpoint-rule counts with step ``grid_step``
    (adjusted to divide ``2^n``); the reported resolution is the step times
    the number of boundary crossings of ``D_{n,eps}``.
    """
    if not 0 < eps < 0.25:
        raise ValueError("eps must lie in (0, 1/4)")
    if int(n_max) < 1:
        raise ValueError("n_max must be >= 1")
    # the shortest A_k piece inside [2^n, 2^{n+1}] is eps * 2 (k = 1, at an endpoint)
    if 2 * eps / grid_step < 8:
        raise ValueError(
            f"grid_step {grid_step} too coarse: need <= {eps / 4} for 8 points per interval"
        )
    spec = VariogramSpec.dyadic_for(2.0 ** (n_max + 1))
    report = ExceptionalSetReport(eps=eps, grid_step=grid_step, density_bound=12 * eps)
    floor_c = 1.0 - math.cos(2 * math.pi * eps)
    cumulative = 0.0
    for n in range(1, int(n_max) + 1):
        length = 2.0**n
        N = int(math.ceil(length / grid_step))
        h = length / N
        d_count = s_sum = crossings = 0
        b_counts = np.zeros(n, dtype=np.int64)
        min_sig = log_c = math.inf
        prev_last = None
        for lo in range(0, N, chunk):
            t = length + (np.arange(lo, min(N, lo + chunk)) + 0.5) * h
            S = np.zeros(t.size, dtype=np.int64)
            for k in range(1, n + 1):
                u = t / 2.0**k
                inside_b = np.abs(u - np.rint(u)) > eps
                b_counts[k - 1] += int(inside_b.sum())
                S += inside_b
            in_d = 2 * S < n
            d_count += int(in_d.sum())
            s_sum += int(S.sum())
            crossings += int(np.count_nonzero(in_d[1:] != in_d[:-1]))
            if prev_last is not None and prev_last != in_d[0]:
                crossings += 1
            prev_last = in_d[-1]
            off = ~in_d
            if off.any():
                sig = spec(t[off])
                min_sig = min(min_sig, float(sig.min()))
                log_c = min(log_c, float((sig / np.log(t[off])).min()))
        measured = d_count * h
        cumulative += measured
        report.records.append(
            ExceptionalRecord(
                n=n,
                measured=measured,
                bound=6 * eps * length,
                resolution=(crossings + 2) * h,
                riemann_S=s_sum * h,
                expected_S=(1 - 2 * eps) * length * n,
                b_measure_max_error=float(np.max(np.abs(b_counts * h - (1 - 2 * eps) * length))),
                min_sigma2_off_D=min_sig,
                sigma2_floor=0.5 * floor_c * n,
                log_constant=log_c,
            )
        )
        report.density_estimate = max(report.density_estimate, cumulative / length)
    return report
