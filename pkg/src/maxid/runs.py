"""Command bodies for the CLI.

Each runner takes the resolved config section and the seed and returns a
:class:`RunResult`.  Runners do no file I/O beyond reading inputs named in
the config; writing artifacts is the CLI's job.  Wherever a quantity has an
exact counterpart, the row carries the estimate, the exact value and their
absolute difference.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import brown_resnick as br
from . import ideal_gas as gas
from .config import ConfigError
from .ergodic_diag import (
    DependenceSequence,
    SpectralMeasure,
    cesaro_average,
    cesaro_exp_equivalence,
    classify,
    density_zero_decomposition,
    estimate_r_mc,
    estimate_tau_mc,
    r_from_spectral,
    read_sequence_csv,
    sandwich_all_prefixes,
    spectral_cesaro_error_bound,
)
from .exponent_core import tau_from_definition, tau_sequence
from .modelio import model_from_dict

FRECHET_AT_ONE = math.exp(-1.0)


@dataclass
class RunResult:
    summary: dict[str, Any]
    tables: dict[str, list[dict[str, Any]]] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    headline: list[str] = field(default_factory=list)


def _semantic(build: Callable[[], Any]) -> Any:
    """Run a constructor; its ``ValueError`` becomes a config error."""
    try:
        return build()
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc


def _sandwich(seq: DependenceSequence, kappas) -> list[dict]:
    out = []
    for kappa in kappas:
        exp_avg, ok = cesaro_exp_equivalence(seq, kappa)
        out.append({"kappa": kappa, "exp_average": exp_avg, "final_ok": ok,
                    "all_prefixes_ok": sandwich_all_prefixes(seq, kappa)})
    return out


# ---------------------------------------------------------------------------


def run_exact(sec: dict, seed: int) -> RunResult:
    """Exact tau sequences, classifier verdicts and the exponential sandwich."""
    model = _semantic(lambda: model_from_dict(sec["model"]))
    horizon = sec["horizon"]
    levels, rows, flags, head = [], [], [], []
    for a in sec["levels"]:
        taus = tau_sequence(model, a, horizon)
        worst = 0.0
        for t, tau in enumerate(taus, start=1):
            ref = tau_from_definition(model, a, t)
            diff = abs(tau - ref)
            worst = max(worst, diff)
            rows.append({"a": a, "t": t, "tau_exact": float(tau),
                         "tau_from_definition": ref, "abs_diff": diff})
        seq = DependenceSequence.from_values(taus)
        report = classify(seq, sec["tol"], sec["tail_fraction"])
        limit = model.diagonal_mass_above(a)
        sandwich = _sandwich(seq, sec["kappa"])
        levels.append({
            "a": a,
            "classification": report.to_dict(),
            "cesaro_limit_exact": limit,
            "cesaro_tail_abs_diff": abs(report.cesaro_tail - limit),
            "tau_definition_max_abs_diff": worst,
            "model_width": model.width,
            "sandwich": sandwich,
        })
        if worst > 1e-10:
            flags.append(f"a={a}: tau exact and definition differ by {worst:.2e}")
        if not all(s["final_ok"] and s["all_prefixes_ok"] for s in sandwich):
            flags.append(f"a={a}: exponential sandwich violated")
        head.append(f"a={a}: mixing={report.mixing_verdict.value} "
                    f"ergodic={report.ergodic_verdict.value} "
                    f"cesaro_tail={report.cesaro_tail:.6g} (exact {limit:.6g})")
    return RunResult({"command": "exact", "seed": seed, "horizon": horizon, "levels": levels},
                     {"tau": rows}, flags, head)


# ---------------------------------------------------------------------------


def _diag_sequence(spec: dict) -> tuple[DependenceSequence, dict]:
    kind = spec["type"]
    if kind == "spectral":
        mu = _semantic(lambda: SpectralMeasure.symmetric([tuple(p) for p in spec["atoms"]]))
        n = spec["n"]
        r = r_from_spectral(mu, np.arange(1, n + 1))
        seq = DependenceSequence(r, max(mu.total_weight, 1e-300), "signed")
        exact = {"cesaro_limit_exact": mu.atom_at_zero,
                 "cesaro_error_bound": spectral_cesaro_error_bound(mu, n)}
        return seq, exact
    if kind == "dyadic_spikes":
        n, h = spec["n"], spec.get("height", 1.0)
        values = np.zeros(n)
        k = 2
        while k <= n:
            values[k - 1] = h
            k *= 2
        seq = DependenceSequence(values, h, "r" if h <= 1 else "tau")
        m = int(math.floor(math.log2(n)))
        return seq, {"cesaro_limit_exact": 0.0, "cesaro_exact_at_n": h * m / n}
    if kind == "values":
        raw = spec["values"]
    else:
        path = Path(spec["path"])
        try:
            raw = read_sequence_csv(path.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError([f"sequence CSV {path}: {exc}"]) from exc
    seq = _semantic(lambda: DependenceSequence.from_values(
        raw, kind=spec.get("kind", "tau"), bound=spec.get("bound")))
    return seq, {}


def run_diag(sec: dict, seed: int) -> RunResult:
    """Classify a dependence sequence given directly, from CSV or from a spectral measure."""
    seq, exact = _diag_sequence(sec["sequence"])
    if len(seq) < 10:
        raise ConfigError(["sequence needs at least 10 values"])
    report = classify(seq, sec["tol"], sec["tail_fraction"])
    n = len(seq)
    cesaro = cesaro_average(seq)
    summary: dict[str, Any] = {
        "command": "diag",
        "seed": seed,
        "kind": seq.kind,
        "length": n,
        "classification": report.to_dict(),
        "cesaro": cesaro,
    }
    flags = []
    if "cesaro_limit_exact" in exact:
        limit = exact["cesaro_limit_exact"]
        summary["cesaro_limit_exact"] = limit
        summary["cesaro_abs_diff"] = abs(cesaro - limit)
    if "cesaro_error_bound" in exact:
        summary["cesaro_error_bound"] = exact["cesaro_error_bound"]
        if summary["cesaro_abs_diff"] > exact["cesaro_error_bound"] + 1e-12:
            flags.append("Cesaro mean outside the geometric-sum error bound")
    if "cesaro_exact_at_n" in exact:
        summary["cesaro_exact_at_n"] = exact["cesaro_exact_at_n"]
        summary["cesaro_exact_at_n_abs_diff"] = abs(cesaro - exact["cesaro_exact_at_n"])
    if seq.kind != "signed":
        summary["sandwich"] = _sandwich(seq, sec["kappa"])
        if not all(s["final_ok"] and s["all_prefixes_ok"] for s in summary["sandwich"]):
            flags.append("exponential sandwich violated")
    D, density = density_zero_decomposition(seq, sec["delta"])
    summary["exceptional_set"] = {"delta": sec["delta"], "size": int(D.size),
                                  "density_estimate": density}
    cumulative = np.cumsum(seq.values) / np.arange(1, n + 1)
    checkpoints = sorted({min(n, 2**k) for k in range(int(math.log2(n)) + 1)} | {n})
    tables = {
        "sequence": [{"t": t, "value": float(v)} for t, v in enumerate(seq.values, start=1)],
        "cesaro": [{"n": k, "cesaro": float(cumulative[k - 1])} for k in checkpoints],
    }
    head = [f"mixing={report.mixing_verdict.value} ergodic={report.ergodic_verdict.value} "
            f"cesaro={cesaro:.6g}"
            + (f" (limit {exact['cesaro_limit_exact']:.6g})" if "cesaro_limit_exact" in exact else "")]
    return RunResult(summary, tables, flags, head)


# ---------------------------------------------------------------------------


def _variogram(spec: dict, t_max: float) -> br.VariogramSpec:
    kind = spec["type"]
    if kind == "power":
        return _semantic(lambda: br.VariogramSpec.power(spec["theta"], spec["alpha"]))
    if kind == "dyadic":
        t_max = max(t_max, spec.get("t_max", 0.0))
        return _semantic(lambda: br.VariogramSpec.dyadic_for(t_max, spec.get("tol", 1e-8)))
    return _semantic(lambda: br.VariogramSpec.table(spec["t"], spec["values"]))


def run_br(sec: dict, seed: int) -> RunResult:
    """Brown-Resnick simulation, marginal and dependence checks, exceptional sets."""
    grid = [float(t) for t in sec["grid"]]
    powers = sec["sigma2_powers"]
    vspec = sec["variogram"]
    spec = _variogram(vspec, max(grid[-1], 2.0**powers))
    cfg = _semantic(lambda: br.BrSimConfig(
        tuple(grid), sec["replicates"], seed=seed, margin=sec["margin"],
        max_count=sec["max_count"], method=sec["method"], block_size=sec["block_size"]))
    try:
        sample = br.simulate_br_path(spec, cfg)
    except br.CovarianceError as exc:
        raise ConfigError([str(exc)]) from exc
    flags, head = [], []
    if sample.n_flagged:
        flags.append(f"{sample.n_flagged} replicates hit max_count before the stopping rule")

    marginals = []
    for t in grid:
        x = sample.column(t)
        ks = br.frechet_ks(x)
        p = float((x <= 1.0).mean())
        marginals.append({"t": t, "ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue),
                          "p_le_1_hat": p, "se": math.sqrt(p * (1 - p) / x.size),
                          "exact": FRECHET_AT_ONE, "abs_diff": abs(p - FRECHET_AT_ONE)})

    lags = grid[1:]
    if sec["r_formula"] == "auto":
        selection = br.select_r_variant(sample, spec, lags)
        formula, chi2 = selection.selected, selection.chi2
    else:
        formula, chi2 = sec["r_formula"], None
    x0 = sample.column(0.0)
    r_rows, tau_rows = [], []
    for t in lags:
        xt = sample.column(t)
        est = estimate_r_mc(x0, xt)
        exact = float(br.theoretical_r(spec, t, formula))
        r_rows.append({"t": t, "sigma2": float(spec(t)), "r_hat": est.value, "se": est.se,
                       "exact": exact, "abs_diff": abs(est.value - exact),
                       "single_tail": float(br.theoretical_r(spec, t, "single_tail")),
                       "continuity": float(br.theoretical_r(spec, t, "continuity"))})
        for a in sec["levels"]:
            tau = estimate_tau_mc(x0, xt, a)
            tau_rows.append({"t": t, "a": a, "tau_hat": tau.value, "se": tau.se,
                             "exact": exact / a, "abs_diff": abs(tau.value - exact / a),
                             "a_tau_minus_r_hat": a * tau.value - est.value,
                             "cross_se": math.hypot(a * tau.se, est.se)})
    summary: dict[str, Any] = {
        "command": "br",
        "seed": seed,
        "variogram": spec.to_dict(),
        "method": sec["method"],
        "replicates": cfg.replicates,
        "n_flagged": sample.n_flagged,
        "mean_points_per_replicate": float(sample.counts.mean()),
        "r_formula": formula,
        "r_variant_chi2": chi2,
        "marginals": marginals,
        "r": r_rows,
        "tau_cross_check": tau_rows,
    }
    tables = {"marginals": marginals, "r": r_rows, "tau": tau_rows}
    head.append(f"r formula: {formula}; max |r_hat - r| / se = "
                f"{max(r['abs_diff'] / r['se'] for r in r_rows):.2f}")

    if powers:
        rows = []
        for n in range(powers + 1):
            value, tail = br.variogram_eval(spec, 2.0**n)
            rows.append({"n": n, "t": 2.0**n, "sigma2": value, "tail_bound": tail,
                         "bound": br.TWO_PI_SQ_OVER_3,
                         "ok": value <= br.TWO_PI_SQ_OVER_3 + 1e-6})
        tables["sigma2_powers"] = rows
        summary["sigma2_powers_max"] = max(r["sigma2"] for r in rows)
        if not all(r["ok"] for r in rows):
            flags.append("sigma^2(2^n) exceeds 2 pi^2 / 3")

    if "exceptional" in sec:
        exc = sec["exceptional"]
        if vspec["type"] != "dyadic":
            raise ConfigError(["br/exceptional: needs the dyadic variogram"])
        frac = exc.get("grid_step_fraction", 0.25)
        rows, per_eps = [], []
        for eps in exc["eps"]:
            rep = _semantic(lambda: br.exceptional_set_analysis(eps, exc["n_max"], eps * frac))
            for rec in rep.records:
                rows.append({"eps": eps, "n": rec.n, "measured": rec.measured, "bound": rec.bound,
                             "resolution": rec.resolution, "measure_ok": rec.measure_ok,
                             "min_sigma2_off_D": rec.min_sigma2_off_D,
                             "sigma2_floor": rec.sigma2_floor, "sigma2_ok": rec.sigma2_ok,
                             "riemann_S": rec.riemann_S, "expected_S": rec.expected_S,
                             "log_constant": rec.log_constant})
            per_eps.append({"eps": eps, "grid_step": rep.grid_step,
                            "density_estimate": rep.density_estimate,
                            "density_bound": rep.density_bound, "all_ok": rep.all_ok})
            if not rep.all_ok:
                flags.append(f"exceptional-set bounds not met for eps={eps}")
            head.append(f"eps={eps}: density {rep.density_estimate:.4f} "
                        f"(bound {rep.density_bound:.4f}), all_ok={rep.all_ok}")
        tables["exceptional"] = rows
        summary["exceptional"] = per_eps
    return RunResult(summary, tables, flags, head)


# ---------------------------------------------------------------------------


def run_gas(sec: dict, seed: int) -> RunResult:
    """Ideal-gas simulation against the exact tau integral and its bound."""
    d, a = sec["d"], sec["a"]
    cfg = _semantic(lambda: gas.GasConfig(d, a, tuple(sec["times"]), sec["replicates"], seed=seed,
                                          L=sec.get("L"), block_size=sec["block_size"]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = gas.simulate_gas(cfg)
    s_exact = gas.survival_exact(d, a)
    rows = []
    for row in est.rows(d, a):
        oracle = gas.tau_lens_oracle(d, a, row["t"], sec["oracle_log2_draws"])
        row.update({"oracle": oracle.value, "oracle_se": oracle.se,
                    "exact_oracle_abs_diff": abs(row["exact"] - oracle.value),
                    "bound_ok": row["exact"] <= row["bound"] + 1e-12})
        rows.append(row)
    survival = {"estimate": est.survival.value, "se": est.survival.se, "exact": s_exact,
                "abs_diff": abs(est.survival.value - s_exact)}
    summary = {
        "command": "gas",
        "seed": seed,
        "d": d,
        "a": a,
        "replicates": cfg.replicates,
        "box_half_width": cfg.L,
        "truncation_bias_bound": est.truncation_bias_bound,
        "survival": survival,
        "tau": rows,
        "flags": list(est.flags),
    }
    flags = list(est.flags)
    if not all(r["bound_ok"] for r in rows):
        flags.append("tau exceeds V(a) P[W(t) in B(2a)]")
    head = [f"survival {survival['estimate']:.5f} +- {survival['se']:.5f} (exact {s_exact:.5f})"]
    head += [f"t={r['t']}: tau_hat {r['tau_hat']:.4f} +- {r['se']:.4f} (exact {r['exact']:.4f})"
             for r in rows]
    return RunResult(summary, {"tau": rows}, flags, head)


RUNNERS: dict[str, Callable[[dict, int], RunResult]] = {
    "exact": run_exact,
    "diag": run_diag,
    "br": run_br,
    "gas": run_gas,
}
