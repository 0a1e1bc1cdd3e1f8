"""Command line entry point: ``robust-rerm <command> ...``."""
import argparse
import json
import logging
import sys

import numpy as np

from . import theory
from .datagen import (Dataset, DesignSpec, NoiseSpec, contaminate, make_regression_dataset,
                      read_csv)
from .lab import ExperimentConfig, run
from .losses import LossSpec
from .penalties import PenaltySpec
from .rkhs import KernelSpec
from .solvers import SolverConfig, fit_mom_minmax, fit_rerm, lepski_select


def _load(path):
    with open(path) as fh:
        return json.load(fh)


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _dataset(cfg):
    """Either ``{"csv": path}`` or a synthetic linear spec
    ``{"n", "truth", "design", "noise", "seed", "contamination"?}``."""
    spec = cfg["data"]
    if "csv" in spec:
        data = read_csv(spec["csv"])
        truth = spec.get("truth")
        return Dataset(data.inputs, data.targets, None if truth is None else np.asarray(truth, float),
                       data.outliers)
    data = make_regression_dataset(DesignSpec.from_dict(spec.get("design", {"kind": "gaussian_iso"})),
                                   NoiseSpec.from_dict(spec.get("noise", {"kind": "gaussian", "sigma": 1.0})),
                                   np.asarray(spec["truth"], dtype=float), int(spec["n"]), int(spec.get("seed", 0)))
    cont = spec.get("contamination")
    if cont:
        data = contaminate(data, float(cont["frac"]), float(cont["magnitude"]),
                           cont.get("mode", "both"), int(spec.get("seed", 0)))
    return data


def _common(cfg):
    loss = LossSpec.from_dict(cfg["loss"])
    penalty = PenaltySpec.from_dict(cfg["penalty"])
    kernel = KernelSpec.from_dict(cfg["kernel"]) if cfg.get("kernel") else None
    solver = SolverConfig.from_dict(cfg.get("solver"))
    return loss, penalty, kernel, solver


def _model_json(model, data):
    out = {"coefficients": model.coefficients.tolist(), "objective": model.objective,
           "iterations": model.iterations}
    truth = data.truth
    if truth is not None and not callable(truth) and model.kernel_model is None:
        out["l2_error_vs_truth"] = float(np.sum((model.coefficients - np.asarray(truth)) ** 2))
    return out


def cmd_fit_rerm(args):
    cfg = _load(args.config)
    data = _dataset(cfg)
    loss, penalty, kernel, solver = _common(cfg)
    _emit(_model_json(fit_rerm(data, loss, penalty, float(cfg["lambda"]), solver, kernel), data))


def cmd_fit_mom(args):
    cfg = _load(args.config)
    data = _dataset(cfg)
    loss, penalty, kernel, solver = _common(cfg)
    model = fit_mom_minmax(data, loss, penalty, float(cfg["lambda"]), int(cfg["S"]), solver, kernel)
    _emit(_model_json(model, data))


def cmd_lepski(args):
    cfg = _load(args.config)
    data = _dataset(cfg)
    loss, penalty, kernel, solver = _common(cfg)
    th = cfg.get("theory", {})
    A = float(cfg["A_star"])
    delta = loss.delta if loss.kind == "huber" else 1.0
    scale = float(th.get("radius_scale", 1.0))

    def oracle(phi):
        r_sq = theory.elastic_net_r_star(data.n, data.p, penalty.alpha, delta,
                                         float(th.get("B_subg", 1.0)), A, phi)[2]
        return float(np.sqrt(scale * r_sq))

    st = lepski_select(data, loss, penalty, int(cfg["M_bound"]), A, oracle, solver, kernel)
    out = _model_json(st.f_tilde, data)
    out.update({"k_star": st.k_star, "selected": st.selected, "J": st.J,
                "lambdas": st.lambdas.tolist(), "phi_grid": st.phi_grid.tolist()})
    _emit(out)


def cmd_complexity(args):
    cfg = _load(args.config)
    kind = cfg["kind"]
    A, N = float(cfg.get("A", 1.0)), int(cfg.get("N", 1))
    draws, seed = int(cfg.get("draws", theory.DEFAULT_DRAWS)), int(cfg.get("seed", 0))
    if kind == "elastic_net_width":
        width = theory.elastic_net_width_oracle(int(cfg["p"]), float(cfg["alpha"]), A,
                                                float(cfg["phi_star"]), float(cfg.get("eta", 2.0)), draws, seed)
        res = theory.r_star_fixed_point(width, A, N, float(cfg.get("L", 1.0)), float(cfg.get("B", 1.0)))
    elif kind == "elastic_net_closed_form":
        r1, r2, r = theory.elastic_net_r_star(N, int(cfg["p"]), float(cfg["alpha"]), float(cfg["delta"]),
                                              float(cfg.get("B", 1.0)), A, float(cfg["phi_star"]))
        _emit({"r1_sq": r1, "r2_sq": r2, "radius": float(np.sqrt(r)), "inputs": cfg})
        return
    elif kind == "kernel_closed_form":
        rb, rt, C = theory.kernel_r_bar(A, float(cfg["beta"]), float(cfg.get("L", 1.0)),
                                        float(cfg["p_decay"]), float(cfg["f_star_norm"]), N)
        _emit({"r_bar_sq": rb, "r_tilde_sq": rt, "C": C, "radius": float(np.sqrt(rb)), "inputs": cfg})
        return
    elif kind == "kernel_bound":
        ks = KernelSpec.from_dict(cfg["kernel"])
        val = theory.kernel_complexity_bound(float(cfg["rho"]), float(cfg["r"]), ks.eigenvalues, ks.bounded_sup)
        _emit({"value": val, "inputs": cfg})
        return
    else:
        raise SystemExit(f"unknown complexity kind {kind!r}")
    _emit({**res.to_dict(), "inputs": cfg})


def cmd_bernstein(args):
    cfg = _load(args.config)
    noise = NoiseSpec.from_dict(cfg["noise"])
    if cfg["loss"] == "huber":
        chk = theory.bernstein_gamma_huber(noise, float(cfg["delta"]), float(cfg.get("C_prime", 1.0)),
                                           float(cfg["r"]))
    elif cfg["loss"] == "quantile":
        chk = theory.bernstein_gamma_quantile(noise, float(cfg["radius_R"]))
    else:
        raise SystemExit(f"no Bernstein checker for loss {cfg['loss']!r}")
    _emit({**chk.to_dict(), "inputs": cfg})


def cmd_lab(args):
    cfg = ExperimentConfig.load(args.config)
    if cfg.scenario != args.scenario:
        raise SystemExit(f"config is for {cfg.scenario}, not {args.scenario}")
    summary = run(cfg, args.out, timing=args.timing, jobs=args.jobs)
    for gate, ok in summary["gates"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {gate}")
    return 0 if summary["all_gates_pass"] else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="robust-rerm", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("fit-rerm", cmd_fit_rerm, "fit the regularized ERM"),
        ("fit-mom", cmd_fit_mom, "fit the minmax median-of-means estimator"),
        ("lepski", cmd_lepski, "Lepski selection over the penalty grid"),
        ("complexity", cmd_complexity, "complexity fixed points and closed-form radii"),
        ("bernstein-check", cmd_bernstein, "local Bernstein constant for a noise law"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="JSON config path")
        p.set_defaults(func=fn)
    p = sub.add_parser("lab", help="run an experiment scenario")
    p.add_argument("scenario", choices=["rate_scaling", "breakdown", "lepski_demo", "rerm_vs_mom"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="record wall_ms (breaks byte reproducibility)")
    p.set_defaults(func=cmd_lab)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
