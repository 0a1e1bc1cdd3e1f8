"""Desk-scale experiment harness.

Each scenario expands its config into cells, runs every ``(cell, replicate)``
with a seed derived from ``(seed, cell, rep)`` and returns rows in
deterministic order plus a summary with pass/fail gates. ``run`` writes
``rows.csv`` and ``summary.json``.
"""
import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from .datagen import DesignSpec, NoiseSpec, contaminate, make_regression_dataset, make_rng
from .losses import LossSpec, loss_eval
from .penalties import PenaltySpec, elastic_net_value
from .rkhs import KernelSpec, mercer_features
from .solvers import SolverConfig, fit_mom_minmax, fit_rerm, lepski_select
from .theory import (bernstein_gamma_quantile, elastic_net_r_star, kernel_lambda_rerm,
                     quantile_localization_radius)

log = logging.getLogger(__name__)

SCENARIOS = ("rate_scaling", "breakdown", "lepski_demo", "rerm_vs_mom")
HEADER = ["scenario", "cell", "rep", "N", "p", "frac", "S", "lambda", "estimator",
          "l2_error", "excess_risk", "iters", "wall_ms"]
_CHUNK = 10_000


@dataclass
class ExperimentConfig:
    scenario: str
    grid: Dict[str, List[Any]]
    replicates: int = 5
    seed: int = 0
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ValueError("grids must be nonempty")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        base = {k: d.pop(k) for k in ("scenario", "grid", "replicates", "seed") if k in d}
        return cls(params=d, **base)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ReportRow:
    scenario: str
    cell: str
    rep: int
    N: int
    p: int
    frac: float
    S: int
    lam: float
    estimator: str
    l2_error: float
    excess_risk: float
    iters: int
    wall_ms: float

    def __post_init__(self):
        for name in ("frac", "lam", "l2_error", "excess_risk", "wall_ms"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite {name} in report row")

    def values(self):
        return [self.scenario, self.cell, self.rep, self.N, self.p, repr(float(self.frac)), self.S,
                repr(float(self.lam)), self.estimator, repr(float(self.l2_error)),
                repr(float(self.excess_risk)), self.iters, repr(float(self.wall_ms))]


def cell_seed(seed, cell_index, rep):
    return int(np.random.SeedSequence([int(seed), int(cell_index), int(rep)]).generate_state(1)[0])


class _Clock:
    def __init__(self, enabled):
        self.enabled = enabled

    def __enter__(self):
        self.t0 = time.perf_counter()
        self.ms = 0.0
        return self

    def __exit__(self, *exc):
        if self.enabled:
            self.ms = 1e3 * (time.perf_counter() - self.t0)


def _solver(params, key, **defaults):
    return SolverConfig.from_dict({**defaults, **params.get(key, {})})


# ---------------------------------------------------------------------------
# linear setting helpers
# ---------------------------------------------------------------------------

def _linear_truth(p, seed, scale):
    return scale * make_rng(seed, 9).standard_normal(p) / np.sqrt(p)


def _linear_excess_risk(loss, t_hat, t_star, noise, n_hold, seed):
    X = make_rng(seed, 7).standard_normal((n_hold, t_star.size))
    y = X @ t_star + _holdout_noise(noise, n_hold, seed)
    return float(np.mean(loss_eval(loss, X @ t_hat, y) - loss_eval(loss, X @ t_star, y)))


def _holdout_noise(noise, n, seed):
    rng = make_rng(seed, 8)
    if noise.kind == "gaussian":
        return noise.sigma * rng.standard_normal(n)
    if noise.kind == "student":
        return rng.standard_t(noise.nu, size=n)
    if noise.kind == "cauchy":
        return rng.standard_cauchy(n)
    return rng.uniform(-noise.a, noise.a, size=n)


def _sq(v):
    return float(v @ v)


# ---------------------------------------------------------------------------
# rate scaling
# ---------------------------------------------------------------------------

def _rate_setup(params):
    kernel = KernelSpec.from_dict(params.get("kernel", {"kind": "synthetic_mercer", "beta": 1.0,
                                                       "p_decay": 0.5, "k_max": 256}))
    n_terms = int(params.get("truth_terms", 10))
    norm = float(params.get("f_star_norm", 1.0))
    theta = np.zeros(kernel.k_max)
    m = min(n_terms, kernel.k_max)
    theta[:m] = 1.0 / np.arange(1, m + 1)
    theta *= norm / np.linalg.norm(theta)
    return kernel, theta, norm


def _rate_cell(cfg, ci, timing):
    params = cfg.params
    N = int(cfg.grid["N"][ci])
    kernel, theta, norm = _rate_setup(params)
    loss = LossSpec.from_dict(params.get("loss", {"kind": "quantile", "tau": 0.5}))
    noise = NoiseSpec.from_dict(params.get("noise", {"kind": "cauchy"}))
    p_decay = kernel.p_decay
    lam = float(params.get("lambda_constant", 1.0)) * norm ** (2.0 / (p_decay + 1.0)) / N ** (1.0 / (1.0 + p_decay))
    n_eval = int(params.get("eval_grid", 2000))
    grid = (np.arange(n_eval) + 0.5) / n_eval
    f_grid = mercer_features(kernel, grid) @ theta
    n_hold = int(params.get("holdout", 100_000))
    cfg_s = _solver(params, "solver")
    rows, extra = [], []

    def fstar(x):
        return mercer_features(kernel, x) @ theta

    for rep in range(cfg.replicates):
        seed = cell_seed(cfg.seed, ci, rep)
        data = make_regression_dataset(DesignSpec("uniform"), noise, fstar, N, seed, p=1)
        with _Clock(timing) as clk:
            model = fit_rerm(data, loss, PenaltySpec("squared_hilbert_norm"), lam, cfg_s, kernel)
        w = model.kernel_model.feature_weights
        diff2 = (mercer_features(kernel, grid) @ w - f_grid) ** 2
        hold = make_rng(seed, 7).uniform(0.0, 1.0, n_hold)
        excess = 0.0
        wn = _holdout_noise(noise, n_hold, seed)
        for lo in range(0, n_hold, _CHUNK):
            Phi = mercer_features(kernel, hold[lo:lo + _CHUNK])
            f_s = Phi @ theta
            y_hold = f_s + wn[lo:lo + _CHUNK]
            excess += float(np.sum(loss_eval(loss, Phi @ w, y_hold) - loss_eval(loss, f_s, y_hold)))
        rows.append(ReportRow("rate_scaling", f"N={N}", rep, N, 1, 0.0, 0, lam, "rerm",
                              float(diff2.mean()), excess / n_hold, model.iterations, clk.ms))
        extra.append(float(diff2.std(ddof=1) / np.sqrt(n_eval)))
    return rows, {"l2_grid_stderr": extra}


def _rate_summary(cfg, rows, extras):
    params = cfg.params
    kernel, theta, norm = _rate_setup(params)
    Ns = [int(n) for n in cfg.grid["N"]]
    means = [float(np.mean([r.l2_error for r in rows if r.N == n])) for n in Ns]
    slope = float(np.polyfit(np.log(Ns), np.log(means), 1)[0]) if len(Ns) > 1 else float("nan")
    lo, hi = params.get("slope_range", [-1.05, -0.35])
    R = quantile_localization_radius(norm, kernel.bounded_sup, 1.0)
    gamma = bernstein_gamma_quantile(NoiseSpec.from_dict(params.get("noise", {"kind": "cauchy"})), R).gamma
    theory = [kernel_lambda_rerm(gamma, kernel.beta, kernel.p_decay, norm, kernel.bounded_sup, n) for n in Ns]
    used = [next(r.lam for r in rows if r.N == n) for n in Ns]
    return {
        "slope": slope,
        "slope_theory": -1.0 / (1.0 + kernel.p_decay),
        "mean_l2_error": dict(zip(map(str, Ns), means)),
        "l2_grid_stderr": {str(n): e["l2_grid_stderr"] for n, e in zip(Ns, extras)},
        "lambda_used": dict(zip(map(str, Ns), used)),
        "lambda_theory": dict(zip(map(str, Ns), theory)),
        "gamma_theory": gamma,
        "gates": {"slope_in_range": bool(lo <= slope <= hi)},
    }


# ---------------------------------------------------------------------------
# breakdown
# ---------------------------------------------------------------------------

def _breakdown_common(params):
    N = int(params.get("N", 2000))
    p = int(params.get("p", 20))
    loss = LossSpec.from_dict(params.get("loss", {"kind": "huber", "delta": 2.0}))
    pen = PenaltySpec.from_dict(params.get("penalty", {"kind": "elastic_net", "alpha": 0.5}))
    noise = NoiseSpec.from_dict(params.get("noise", {"kind": "gaussian", "sigma": 1.0}))
    return N, p, loss, pen, noise


def blocks_for_outliers(n_outliers, margin=1):
    """Smallest block count with ``S >= 7 |O| / 3``, plus ``margin``."""
    return max(1, math.ceil(7 * n_outliers / 3) + int(margin))


def _breakdown_cell(cfg, ci, timing):
    params = cfg.params
    frac = float(cfg.grid["frac"][ci])
    N, p, loss, pen, noise = _breakdown_common(params)
    lam = float(params.get("lambda", 0.01))
    n_out = int(math.floor(frac * N))
    S = blocks_for_outliers(n_out, params.get("S_margin", 1))
    n_hold = int(params.get("holdout", 100_000))
    cfg_r = _solver(params, "solver")
    rows, clean = [], []
    for rep in range(cfg.replicates):
        seed = cell_seed(cfg.seed, 0, rep)  # same clean draw across fractions
        t_star = _linear_truth(p, seed, float(params.get("truth_scale", 2.0)))
        data = make_regression_dataset(DesignSpec(), noise, t_star, N, seed)
        dirty = contaminate(data, frac, float(params.get("magnitude", 1e6)),
                            params.get("mode", "both"), seed)
        clean.append(_sq(fit_rerm(data, loss, pen, lam, cfg_r).coefficients - t_star))
        cfg_m = _solver(params, "solver_mom", max_iters=5000, seed=seed)
        for name in ("rerm", "mom"):
            with _Clock(timing) as clk:
                if name == "rerm":
                    model = fit_rerm(dirty, loss, pen, lam, cfg_r)
                else:
                    model = fit_mom_minmax(dirty, loss, pen, lam, S, cfg_m)
            t_hat = model.coefficients
            rows.append(ReportRow("breakdown", f"frac={frac}", rep, N, p, frac, S if name == "mom" else 0,
                                  lam, name, _sq(t_hat - t_star),
                                  _linear_excess_risk(loss, t_hat, t_star, noise, n_hold, seed),
                                  model.iterations, clk.ms))
    return rows, {"clean_rerm_l2": clean}


def _breakdown_summary(cfg, rows, extras):
    fracs = [float(f) for f in cfg.grid["frac"]]
    clean = float(np.mean(extras[0]["clean_rerm_l2"]))
    out = {"clean_rerm_mean_l2": clean, "cells": {}, "gates": {}}
    for f in fracs:
        r = float(np.mean([x.l2_error for x in rows if x.frac == f and x.estimator == "rerm"]))
        m = float(np.mean([x.l2_error for x in rows if x.frac == f and x.estimator == "mom"]))
        S = next(x.S for x in rows if x.frac == f and x.estimator == "mom")
        out["cells"][str(f)] = {"S": S, "rerm_mean_l2": r, "mom_mean_l2": m,
                                "mom_over_clean": m / clean, "rerm_over_clean": r / clean}
        if f == 0.0:
            out["gates"]["clean_mom_rerm_within_2x"] = bool(max(m / r, r / m) <= 2.0)
        else:
            out["gates"][f"mom_le_3x_clean@{f}"] = bool(m <= 3.0 * clean)
            out["gates"][f"rerm_ge_10x_clean@{f}"] = bool(r >= 10.0 * clean)
    return out


# ---------------------------------------------------------------------------
# Lepski
# ---------------------------------------------------------------------------

def _lepski_cell(cfg, ci, timing):
    params = cfg.params
    N = int(cfg.grid["N"][ci])
    p = int(params.get("p", 10))
    loss = LossSpec.from_dict(params.get("loss", {"kind": "huber", "delta": 1.0}))
    pen = PenaltySpec.from_dict(params.get("penalty", {"kind": "elastic_net", "alpha": 0.5}))
    noise = NoiseSpec.from_dict(params.get("noise", {"kind": "gaussian", "sigma": 1.0}))
    M, A = int(params.get("M_bound", 8)), float(params.get("A_star", 1.0))
    scale, B = float(params.get("radius_scale", 1e-3)), float(params.get("B_subg", 1.0))
    n_hold = int(params.get("holdout", 100_000))
    cfg_s = _solver(params, "solver")
    delta = loss.delta if loss.kind == "huber" else 1.0

    def oracle(phi):
        return math.sqrt(scale * elastic_net_r_star(N, p, pen.alpha, delta, B, A, phi)[2])

    rows, states = [], []
    for rep in range(cfg.replicates):
        seed = cell_seed(cfg.seed, ci, rep)
        t_star = _linear_truth(p, seed, float(params.get("truth_scale", 2.0)))
        data = make_regression_dataset(DesignSpec(), noise, t_star, N, seed)
        with _Clock(timing) as clk:
            st = lepski_select(data, loss, pen, M, A, oracle, cfg_s)
        errs = [_sq(m.coefficients - t_star) for m in st.fitted]
        for j, m in enumerate(st.fitted, start=1):
            rows.append(ReportRow("lepski_demo", f"N={N}", rep, N, p, 0.0, 0, float(st.lambdas[j - 1]),
                                  f"grid_{j}", errs[j - 1],
                                  _linear_excess_risk(loss, m.coefficients, t_star, noise, n_hold, seed),
                                  m.iterations, 0.0))
        ft = st.f_tilde
        rows.append(ReportRow("lepski_demo", f"N={N}", rep, N, p, 0.0, 0, float(st.lambdas[st.selected - 1]),
                              "lepski", _sq(ft.coefficients - t_star),
                              _linear_excess_risk(loss, ft.coefficients, t_star, noise, n_hold, seed),
                              sum(m.iterations for m in st.fitted), clk.ms))
        states.append({"rep": rep, "J": st.J, "k_star": st.k_star, "selected": st.selected,
                       "phi_star": elastic_net_value(t_star, pen.alpha),
                       "fhat_J_in_R_J": st.in_R(st.J, st.J),
                       "ratio_to_best": _sq(ft.coefficients - t_star) / min(errs)})
    return rows, {"states": states}


def _lepski_summary(cfg, rows, extras):
    M = int(cfg.params.get("M_bound", 8))
    J_expected = M + math.ceil(math.log2(M))
    states = [s for e in extras for s in e["states"]]
    return {
        "J_expected": J_expected,
        "runs": states,
        "gates": {
            "J_matches": all(s["J"] == J_expected for s in states),
            "k_star_in_range": all(1 <= s["k_star"] <= s["J"] for s in states),
            "fhat_J_in_R_J": all(s["fhat_J_in_R_J"] for s in states),
            "f_tilde_le_3x_best": all(s["ratio_to_best"] <= 3.0 for s in states),
        },
    }


# ---------------------------------------------------------------------------
# RERM vs MOM
# ---------------------------------------------------------------------------

def _rvm_cells(cfg):
    return [(nz, int(n)) for nz in cfg.params.get("noises", [{"kind": "cauchy"},
                                                             {"kind": "gaussian", "sigma": 1.0}])
            for n in cfg.grid["N"]]


def _rvm_cell(cfg, ci, timing):
    params = cfg.params
    nz, N = _rvm_cells(cfg)[ci]
    noise = NoiseSpec.from_dict(nz)
    p = int(params.get("p", 10))
    loss = LossSpec.from_dict(params.get("loss", {"kind": "quantile", "tau": 0.5}))
    pen = PenaltySpec.from_dict(params.get("penalty", {"kind": "elastic_net", "alpha": 0.5}))
    lam = float(params.get("lambda_constant", 1.0)) * p / N
    S = int(params.get("S", 11))
    n_hold = int(params.get("holdout", 100_000))
    cfg_r = _solver(params, "solver")
    rows = []
    for rep in range(cfg.replicates):
        seed = cell_seed(cfg.seed, ci, rep)
        t_star = _linear_truth(p, seed, float(params.get("truth_scale", 2.0)))
        data = make_regression_dataset(DesignSpec(), noise, t_star, N, seed)
        cfg_m = _solver(params, "solver_mom", max_iters=2000, seed=seed)
        for name in ("rerm", "mom"):
            with _Clock(timing) as clk:
                model = (fit_rerm(data, loss, pen, lam, cfg_r) if name == "rerm"
                         else fit_mom_minmax(data, loss, pen, lam, S, cfg_m))
            t_hat = model.coefficients
            rows.append(ReportRow("rerm_vs_mom", f"noise={noise.kind},N={N}", rep, N, p, 0.0,
                                  S if name == "mom" else 0, lam, name, _sq(t_hat - t_star),
                                  _linear_excess_risk(loss, t_hat, t_star, noise, n_hold, seed),
                                  model.iterations, clk.ms))
    return rows, {}


def _inversions(seq):
    return sum(1 for a, b in zip(seq, seq[1:]) if b > a)


def _rvm_summary(cfg, rows, extras):
    out = {"cells": {}, "gates": {}}
    for nz, N in _rvm_cells(cfg):
        kind = nz["kind"]
        cell = [r for r in rows if r.cell == f"noise={kind},N={N}"]
        out["cells"][f"{kind}/{N}"] = {
            est: float(np.mean([r.l2_error for r in cell if r.estimator == est])) for est in ("rerm", "mom")}
    kinds = sorted({nz["kind"] for nz, _ in _rvm_cells(cfg)})
    Ns = [int(n) for n in cfg.grid["N"]]
    for kind in kinds:
        series = {est: [out["cells"][f"{kind}/{n}"][est] for n in Ns] for est in ("rerm", "mom")}
        if kind == "cauchy":
            for est, s in series.items():
                out["gates"][f"cauchy_{est}_decreasing"] = bool(_inversions(s) <= 1)
        if kind == "gaussian":
            out["gates"]["gaussian_mom_le_2x_rerm"] = bool(
                all(m <= 2.0 * r for m, r in zip(series["mom"], series["rerm"])))
    return out


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

_CELLS = {
    "rate_scaling": (lambda cfg: len(cfg.grid["N"]), _rate_cell, _rate_summary),
    "breakdown": (lambda cfg: len(cfg.grid["frac"]), _breakdown_cell, _breakdown_summary),
    "lepski_demo": (lambda cfg: len(cfg.grid["N"]), _lepski_cell, _lepski_summary),
    "rerm_vs_mom": (lambda cfg: len(_rvm_cells(cfg)), _rvm_cell, _rvm_summary),
}


def _run_cell(args):
    cfg, ci, timing = args
    return _CELLS[cfg.scenario][1](cfg, ci, timing)


def run_scenario(cfg, timing=False, jobs=1):
    """Returns ``(rows, summary)``; rows come back in (cell, replicate) order
    whatever ``jobs`` is."""
    count, _, summarize = _CELLS[cfg.scenario]
    tasks = [(cfg, ci, timing) for ci in range(count(cfg))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    rows = [r for res in results for r in res[0]]
    summary = summarize(cfg, rows, [res[1] for res in results])
    summary["scenario"] = cfg.scenario
    summary["rows"] = len(rows)
    summary["all_gates_pass"] = all(summary["gates"].values())
    return rows, summary


def _scenario_runner(name):
    def runner(cfg, timing=False, jobs=1):
        if cfg.scenario != name:
            raise ValueError(f"expected a {name} config, got {cfg.scenario}")
        return run_scenario(cfg, timing, jobs)
    runner.__name__ = f"run_{name}"
    runner.__doc__ = f"Run the ``{name}`` scenario; returns ``(rows, summary)``."
    return runner


run_rate_scaling = _scenario_runner("rate_scaling")
run_breakdown = _scenario_runner("breakdown")
run_lepski_demo = _scenario_runner("lepski_demo")
run_rerm_vs_mom = _scenario_runner("rerm_vs_mom")


def write_rows(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in rows:
            w.writerow(r.values())


def run(cfg, out_dir, timing=False, jobs=1):
    """Run a scenario and write ``rows.csv`` and ``summary.json`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    rows, summary = run_scenario(cfg, timing, jobs)
    write_rows(rows, os.path.join(out_dir, "rows.csv"))
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for gate, ok in summary["gates"].items():
        log.info("%s: %s", gate, "pass" if ok else "FAIL")
    return summary
