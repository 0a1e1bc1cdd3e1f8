"""RERM, minmax median-of-means and Lepski selection.

Every fit is carried out in "weight coordinates" ``theta`` for a design
matrix ``Psi``: the raw design for linear models, and an exact feature
factorisation ``K = Psi Psi^T`` of the training Gram matrix for kernel
models. In those coordinates the squared RKHS norm is ``||theta||^2``, i.e.
the elastic net with ``alpha = 1``, so one set of solvers covers both cases.
The fitted weights are mapped back to representer coefficients at the end.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import _kernels
from .datagen import make_rng
from .losses import empirical_risk, lipschitz_constant, loss_eval, loss_subgradient
from .penalties import elastic_net_prox, elastic_net_value, soft_threshold
from .rkhs import KernelModel, KernelSpec, gram_matrix, mercer_features, predict_kernel

log = logging.getLogger(__name__)

STEP_RULES = ("auto", "fixed", "diminishing", "strongly_convex")
METHODS = ("auto", "prox_gradient", "subgradient", "dual")
_COLLAPSE = 1e-6
_RESEPARATE = 1e-3


class SolverError(RuntimeError):
    """A fit diverged; ``trace`` holds the objective values seen so far."""

    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = np.asarray(trace, dtype=float)


@dataclass
class SolverConfig:
    """Iteration controls.

    ``step_rule``: ``fixed`` uses ``step`` as is, ``diminishing`` uses
    ``step / sqrt(k + 1)``, ``strongly_convex`` uses ``1 / (mu (k + 1))``
    with ``mu`` the penalty's strong convexity, ``auto`` picks per loss.
    ``tolerance`` is relative: objective change for subgradient loops,
    prox-gradient residual for smooth losses, duality gap for dual solvers.
    """
    max_iters: int = 20_000
    step_rule: str = "auto"
    step: Optional[float] = None
    tolerance: float = 1e-9
    reshuffle_blocks: bool = True
    seed: int = 0
    method: str = "auto"
    check_every: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__})


@dataclass
class Model:
    coefficients: np.ndarray
    objective: float
    objective_trace: np.ndarray
    iterations: int
    weights: np.ndarray
    kernel_model: Optional[KernelModel] = None
    kkt_residual: Optional[float] = None
    method: str = ""

    def __post_init__(self):
        if not np.all(np.isfinite(self.coefficients)):
            raise SolverError("non-finite coefficients", self.objective_trace)
        if len(self.objective_trace) != self.iterations:
            raise ValueError("objective trace must have one entry per iteration")

    @property
    def variant(self):
        return "linear" if self.kernel_model is None else "kernel"

    def predict(self, inputs):
        if self.kernel_model is not None:
            return predict_kernel(self.kernel_model, inputs)
        X = np.asarray(inputs, dtype=float)
        return (X if X.ndim == 2 else X[:, None]) @ self.coefficients


@dataclass
class _Design:
    Psi: np.ndarray
    alpha: float
    to_representer: Optional[Callable] = None
    inputs: Optional[np.ndarray] = None
    kernel: Optional[KernelSpec] = None

    def model(self, theta, objective, trace, iterations, kkt=None, method=""):
        theta = np.asarray(theta, dtype=float)
        if self.kernel is None:
            return Model(theta.copy(), float(objective), np.asarray(trace, dtype=float),
                         iterations, theta.copy(), None, kkt, method)
        a = self.to_representer(theta)
        km = KernelModel(a, self.inputs, self.kernel)
        return Model(a, float(objective), np.asarray(trace, dtype=float),
                     iterations, theta.copy(), km, kkt, method)


def kernel_design(kernel, inputs):
    """Factor the training Gram matrix as ``Psi Psi^T``; returns ``Psi`` and
    the map from weights ``theta`` to representer coefficients ``a``."""
    if kernel.has_features:
        Psi = mercer_features(kernel, inputs)

        def to_rep(theta):
            # min-norm a with Psi^T a = theta; exact when theta lies in the
            # row space of Psi, which holds for every iterate we produce
            return np.linalg.lstsq(Psi.T, theta, rcond=None)[0]
        return Psi, to_rep
    G = gram_matrix(kernel, inputs)
    w, U = np.linalg.eigh(G)
    keep = w > 1e-12 * max(w.max(), 1e-300)
    Uk, root = U[:, keep], np.sqrt(w[keep])
    return Uk * root, lambda theta: Uk @ (theta / root)


def _build_design(data, penalty, kernel):
    if kernel is None:
        if penalty.kind != "elastic_net":
            raise ValueError("linear models use the elastic-net penalty; "
                             "squared_hilbert_norm needs a kernel")
        penalty.check_estimator_use()
        return _Design(data.inputs, float(penalty.alpha))
    if penalty.kind != "squared_hilbert_norm":
        raise ValueError("kernel models use the squared_hilbert_norm penalty")
    Psi, to_rep = kernel_design(kernel, data.inputs)
    return _Design(Psi, 1.0, to_rep, data.inputs, kernel)


def _spectral_norm_sq(Psi):
    small = Psi.T @ Psi if Psi.shape[0] >= Psi.shape[1] else Psi @ Psi.T
    return float(np.linalg.eigvalsh(small)[-1]) if small.size else 0.0


def composite_objective(Psi, y, loss, lam, alpha, theta):
    return empirical_risk(loss, Psi @ theta, y) + lam * elastic_net_value(theta, alpha)


def _grad(Psi, y, loss, theta):
    return Psi.T @ loss_subgradient(loss, Psi @ theta, y) / y.shape[0]


def prox_gradient_residual(Psi, y, loss, lam, alpha, theta, step):
    """``||theta - prox(theta - step * grad)||`` for smooth losses."""
    g = _grad(Psi, y, loss, theta)
    return float(np.linalg.norm(theta - elastic_net_prox(theta - step * g, step * lam, alpha)))


def _finite(value, trace):
    if not np.isfinite(value):
        raise SolverError("objective became non-finite", trace)


# ---------------------------------------------------------------------------
# solvers in weight coordinates
# ---------------------------------------------------------------------------

def _solve_prox_gradient(Psi, y, loss, lam, alpha, cfg):
    """Accelerated proximal gradient with adaptive restart (smooth losses)."""
    n, d = Psi.shape
    L = loss.curvature * _spectral_norm_sq(Psi) / n
    s = cfg.step if (cfg.step_rule == "fixed" and cfg.step) else (1.0 / L if L > 0 else 1.0)
    x = np.zeros(d)
    z = x.copy()
    t = 1.0
    best_x, best_f = x.copy(), composite_objective(Psi, y, loss, lam, alpha, x)
    trace = []
    res = np.inf
    for k in range(cfg.max_iters):
        x_new = elastic_net_prox(z - s * _grad(Psi, y, loss, z), s * lam, alpha)
        f = composite_objective(Psi, y, loss, lam, alpha, x_new)
        trace.append(f)
        _finite(f, trace)
        if f <= best_f:
            best_f, best_x = f, x_new.copy()
        if (z - x_new) @ (x_new - x) > 0:
            t = 1.0  # gradient-based restart
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        res = prox_gradient_residual(Psi, y, loss, lam, alpha, x, s)
        if res <= cfg.tolerance * (1.0 + np.linalg.norm(x)):
            break
    kkt = prox_gradient_residual(Psi, y, loss, lam, alpha, best_x, s)
    return best_x, best_f, trace, kkt


def dual_box(loss, y):
    """Feasible box of the conjugate of ``lbar(., y_i) / N`` for the
    piecewise-linear losses; the conjugate is ``u_i * y_i`` on the box."""
    n = y.shape[0]
    if loss.kind == "quantile":
        return np.full(n, (loss.tau - 1.0) / n), np.full(n, loss.tau / n)
    if loss.kind == "hinge_regression":
        return np.full(n, -1.0 / n), np.zeros(n)
    if loss.kind == "hinge_classification":
        edge = -y / n
        return np.minimum(edge, 0.0), np.maximum(edge, 0.0)
    raise ValueError(f"no dual box for {loss.kind}")


def _dual_value(u, y, v, lam, alpha):
    # D(u) = -u.y - (lam phi)^*(v), v = -Psi^T u
    if alpha >= 1.0:
        conj = (v @ v) / (4.0 * lam)
    else:
        e = np.maximum(np.abs(v) - lam * (1.0 - alpha), 0.0)
        conj = (e @ e) / (4.0 * lam * alpha)
    return float(-(u @ y) - conj)


def _primal_from_dual(v, lam, alpha):
    if alpha >= 1.0:
        return v / (2.0 * lam)
    return soft_threshold(v, lam * (1.0 - alpha)) / (2.0 * lam * alpha)


def _solve_dual(Psi, y, loss, lam, alpha, cfg):
    """Exact coordinate ascent (alpha = 1) or accelerated projected gradient
    (alpha < 1) on the Fenchel dual; stops on the relative duality gap."""
    n, d = Psi.shape
    lo, hi = dual_box(loss, y)
    u = np.zeros(n)
    rng = make_rng(cfg.seed, 21)
    trace = []
    best_x, best_f = np.zeros(d), composite_objective(Psi, y, loss, lam, alpha, np.zeros(d))
    gap = np.inf
    if alpha >= 1.0:
        Psi_c = np.ascontiguousarray(Psi)
        w = np.zeros(d)
        sqnorm = np.einsum("ij,ij->i", Psi_c, Psi_c)
        for k in range(cfg.max_iters):
            _kernels.dual_cd(Psi_c, y, lo, hi, lam, u, w, sqnorm, rng.permutation(n))
            theta = -w / (2.0 * lam)
            f = composite_objective(Psi, y, loss, lam, alpha, theta)
            trace.append(f)
            _finite(f, trace)
            if f <= best_f:
                best_f, best_x = f, theta.copy()
            gap = best_f - _dual_value(u, y, -w, lam, alpha)
            if gap <= cfg.tolerance * max(1.0, abs(best_f)):
                break
    else:
        L = _spectral_norm_sq(Psi) / (2.0 * lam * alpha)
        s = 1.0 / L if L > 0 else 1.0
        z = u.copy()
        t = 1.0
        d_prev = -np.inf
        for k in range(cfg.max_iters):
            grad = -y + Psi @ _primal_from_dual(-(Psi.T @ z), lam, alpha)
            u_new = np.clip(z + s * grad, lo, hi)
            v = -(Psi.T @ u_new)
            theta = _primal_from_dual(v, lam, alpha)
            f = composite_objective(Psi, y, loss, lam, alpha, theta)
            trace.append(f)
            _finite(f, trace)
            if f <= best_f:
                best_f, best_x = f, theta.copy()
            dval = _dual_value(u_new, y, v, lam, alpha)
            if dval < d_prev:
                t = 1.0  # function-value restart
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = u_new + ((t - 1.0) / t_new) * (u_new - u)
            u, t, d_prev = u_new, t_new, dval
            gap = best_f - dval
            if gap <= cfg.tolerance * max(1.0, abs(best_f)):
                break
    log.debug("dual solver: %d iterations, gap %.3g", len(trace), gap)
    return best_x, best_f, trace


def _subgradient_scale(Psi, loss):
    n = Psi.shape[0]
    G = lipschitz_constant(loss) * np.sqrt(_spectral_norm_sq(Psi) / n)
    return 1.0 / G if G > 0 else 1.0


def _solve_subgradient(Psi, y, loss, lam, alpha, cfg):
    """Proximal subgradient loop keeping the best iterate."""
    n, d = Psi.shape
    rule = cfg.step_rule
    if rule == "auto":
        rule = "diminishing"
    if rule == "strongly_convex":
        mu = 2.0 * lam * alpha
        if not mu > 0:
            raise ValueError("strongly_convex step rule needs lam * alpha > 0")
    c = cfg.step or _subgradient_scale(Psi, loss)
    theta = np.zeros(d)
    best_x, best_f = theta.copy(), composite_objective(Psi, y, loss, lam, alpha, theta)
    trace = []
    recent = deque(maxlen=20 * cfg.check_every)
    for k in range(cfg.max_iters):
        if rule == "fixed":
            s = c
        elif rule == "diminishing":
            s = c / np.sqrt(k + 1.0)
        else:
            s = 1.0 / (mu * (k + 1.0))
        theta = elastic_net_prox(theta - s * _grad(Psi, y, loss, theta), s * lam, alpha)
        f = composite_objective(Psi, y, loss, lam, alpha, theta)
        trace.append(f)
        _finite(f, trace)
        if f < best_f:
            best_f, best_x = f, theta.copy()
        recent.append(best_f)
        if len(recent) == recent.maxlen and recent[0] - best_f <= cfg.tolerance * max(1.0, abs(best_f)):
            break
    return best_x, best_f, trace


def _solve(design, y, loss, lam, cfg):
    Psi, alpha = design.Psi, design.alpha
    method = cfg.method
    if method == "auto":
        if loss.smooth:
            method = "prox_gradient"
        elif lam > 0 and alpha > 0 and loss.kind != "logistic":
            method = "dual"
        else:
            method = "subgradient"
    kkt = None
    if method == "prox_gradient":
        if not loss.smooth:
            raise ValueError(f"prox_gradient needs a smooth loss, got {loss.kind}")
        theta, f, trace, kkt = _solve_prox_gradient(Psi, y, loss, lam, alpha, cfg)
    elif method == "dual":
        if loss.smooth or not lam > 0 or not alpha > 0:
            raise ValueError("the dual solver handles piecewise-linear losses with lam > 0")
        theta, f, trace = _solve_dual(Psi, y, loss, lam, alpha, cfg)
    else:
        theta, f, trace = _solve_subgradient(Psi, y, loss, lam, alpha, cfg)
    return theta, f, trace, kkt, method


def fit_rerm(data, loss, penalty, lam, cfg=None, kernel=None):
    """Regularized empirical risk minimizer ``argmin P_N l_f + lam * phi(f)``.

    Returns the best-objective iterate. The objective never exceeds its value
    at the zero model.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    cfg = cfg or SolverConfig()
    design = _build_design(data, penalty, kernel)
    theta, f, trace, kkt, method = _solve(design, data.targets, loss, lam, cfg)
    return design.model(theta, f, trace, len(trace), kkt, method)


# ---------------------------------------------------------------------------
# median of means
# ---------------------------------------------------------------------------

def lower_median(values):
    """Element at sorted position ceil(S/2) (1-based)."""
    values = np.asarray(values, dtype=float)
    return float(np.sort(values)[(values.size + 1) // 2 - 1])


def _median_block(means):
    return int(np.argsort(means, kind="stable")[(means.size + 1) // 2 - 1])


def mom_of_increments(loss, model_f, model_g, data, partition):
    """``MOM_S(l_f - l_g)``: lower median of the block means."""
    if partition.block_size == 0:
        raise ValueError("empty block in partition")
    inc = (loss_eval(loss, model_f.predict(data.inputs), data.targets)
           - loss_eval(loss, model_g.predict(data.inputs), data.targets))
    return lower_median(_kernels.block_means(np.ascontiguousarray(inc, dtype=float),
                                             np.ascontiguousarray(partition.blocks)))


def _block_perm(rng, n, n_blocks):
    size = n // n_blocks
    return rng.permutation(n)[: n_blocks * size].reshape(n_blocks, size)


def fit_mom_minmax(data, loss, penalty, lam, n_blocks, cfg=None, kernel=None):
    """Minmax MOM estimator ``argmin_f sup_g MOM_S(l_f - l_g) + lam (phi(f) - phi(g))``.

    Alternating scheme: each iteration picks the median block of the loss
    increments and takes one proximal (sub)gradient step for ``f`` and one for
    ``g`` on that block (descent on ``P_B l_f + lam phi(f)``, ascent on
    ``-P_B l_g - lam phi(g)``). Blocks are reshuffled every iteration unless
    ``cfg.reshuffle_blocks`` is off. The returned ``f`` minimises a pool
    estimate of the sup over ``g`` among checkpointed and averaged iterates.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    n = data.n
    if not 1 <= n_blocks <= n:
        raise ValueError(f"need 1 <= S <= N, got S={n_blocks}, N={n}")
    cfg = cfg or SolverConfig(max_iters=4000)
    design = _build_design(data, penalty, kernel)
    Psi, alpha, y = design.Psi, design.alpha, data.targets
    rng = make_rng(cfg.seed, 31)
    blocks = _block_perm(rng, n, n_blocks)
    eval_blocks = blocks.copy()
    size = blocks.shape[1]

    # robust step scale: median over blocks of the per-block smoothness
    per_block = np.array([_spectral_norm_sq(Psi[b]) / size for b in blocks])
    scale = float(np.median(per_block))
    if loss.smooth:
        base = cfg.step or (1.0 / (loss.curvature * scale) if scale > 0 else 1.0)
    else:
        g_scale = lipschitz_constant(loss) * np.sqrt(scale)
        base = cfg.step or (1.0 / g_scale if g_scale > 0 else 1.0)
    rule = cfg.step_rule
    if rule == "auto":
        rule = "fixed" if (loss.smooth and n_blocks == 1) else "diminishing"

    d = Psi.shape[1]
    tf = np.zeros(d)
    # distinct starting points: with f == g every increment ties at zero and
    # the median block would be an arbitrary, possibly corrupted, block
    tg = _RESEPARATE * rng.standard_normal(d) / np.sqrt(d)
    tail_start = cfg.max_iters // 2
    avg = np.zeros(d)
    n_avg = 0
    f_pool = deque(maxlen=40)
    g_pool = deque(maxlen=40)
    trace = []
    for k in range(cfg.max_iters):
        if cfg.reshuffle_blocks and k > 0:
            blocks = _block_perm(rng, n, n_blocks)
        zf = Psi @ tf
        zg = Psi @ tg
        lf = loss_eval(loss, zf, y)
        lg = loss_eval(loss, zg, y)
        means = _kernels.block_means(lf - lg, blocks)
        b = blocks[_median_block(means)]
        pen_f = elastic_net_value(tf, alpha)
        pen_g = elastic_net_value(tg, alpha)
        trace.append(float(np.sort(means)[(n_blocks + 1) // 2 - 1] + lam * (pen_f - pen_g)))
        _finite(trace[-1], trace)
        s = base if rule == "fixed" else base / np.sqrt(1.0 + k / 10.0)
        Pb = Psi[b]
        gf = Pb.T @ loss_subgradient(loss, zf[b], y[b]) / size
        gg = Pb.T @ loss_subgradient(loss, zg[b], y[b]) / size
        tf = elastic_net_prox(tf - s * gf, s * lam, alpha)
        tg = elastic_net_prox(tg - s * gg, s * lam, alpha)
        spread = 1.0 + np.linalg.norm(tf)
        if np.linalg.norm(tf - tg) <= _COLLAPSE * spread:
            # f and g have merged: the increments, hence the block order, are
            # now rounding noise; re-separate g so the median block stays informative
            tg = tf + _RESEPARATE * spread * rng.standard_normal(d) / np.sqrt(d)
        if k >= tail_start:
            n_avg += 1
            avg += (tf - avg) / n_avg
        if (k + 1) % cfg.check_every == 0 or k == cfg.max_iters - 1:
            f_pool.append(tf.copy())
            g_pool.append(tg.copy())

    candidates = list(f_pool) + ([avg.copy()] if n_avg else [])
    challengers = list(g_pool) + candidates
    losses_c = [loss_eval(loss, Psi @ c, y) for c in candidates]
    losses_g = [loss_eval(loss, Psi @ g, y) for g in challengers]
    pen_c = [elastic_net_value(c, alpha) for c in candidates]
    pen_g = [elastic_net_value(g, alpha) for g in challengers]
    best, best_val = 0, np.inf
    for i, lc in enumerate(losses_c):
        sup = -np.inf
        for j, lg in enumerate(losses_g):
            m = lower_median(_kernels.block_means(lc - lg, eval_blocks))
            sup = max(sup, m + lam * (pen_c[i] - pen_g[j]))
        if sup < best_val:
            best, best_val = i, sup
    theta = candidates[best]
    return design.model(theta, best_val, trace, len(trace), None, "mom_minmax")


# ---------------------------------------------------------------------------
# Lepski
# ---------------------------------------------------------------------------

@dataclass
class LepskiState:
    M_bound: int
    A_star: float
    phi_grid: np.ndarray
    lambdas: np.ndarray
    radii: np.ndarray
    fitted: List[Model]
    T: np.ndarray
    thresholds: np.ndarray
    k_star: int
    selected: int
    f_tilde: Model = field(repr=False)

    @property
    def J(self):
        return len(self.phi_grid)

    def in_R(self, j, m):
        """Whether grid model ``m`` lies in the acceptance set of level ``j`` (1-based)."""
        return bool(self.T[j - 1, m - 1] <= self.thresholds[j - 1])


def lepski_grid(M_bound):
    """``phi_j = 2^j / 2^M`` for ``j = 1..M + ceil(log2 M)``."""
    if int(M_bound) != M_bound or M_bound < 1:
        raise ValueError("M_bound must be an integer >= 1")
    M = int(M_bound)
    J = M + int(np.ceil(np.log2(M)))
    return np.array([2.0 ** (j - M) for j in range(1, J + 1)])


def lepski_select(data, loss, penalty, M_bound, A_star, theory_oracle, cfg=None, kernel=None):
    """Lepski adaptation over the penalty-level grid.

    ``theory_oracle(phi_j)`` returns the complexity radius ``r_j``; then
    ``lam_j = r_j^2 / phi_j``. The acceptance sets are searched among the
    fitted grid models only. The grid is reordered so that ``lam_j`` is
    nonincreasing in ``j`` before the nested intersections are taken.
    """
    if not A_star > 0:
        raise ValueError("A_star must be positive")
    phis = lepski_grid(M_bound)
    radii = np.array([float(theory_oracle(p)) for p in phis])
    lams = radii ** 2 / phis
    order = np.lexsort((phis, -lams))
    phis, radii, lams = phis[order], radii[order], lams[order]
    cfg = cfg or SolverConfig()
    models = [fit_rerm(data, loss, penalty, lam, cfg, kernel) for lam in lams]
    J = len(models)
    preds = [m.predict(data.inputs) for m in models]
    risks = np.array([empirical_risk(loss, p, data.targets) for p in preds])
    pens = np.array([_penalty_of(m, penalty, kernel, data) for m in models])
    T = np.empty((J, J))
    for j in range(J):
        T[j] = (risks - risks[j]) + lams[j] * (pens - pens[j])
    thr = (1.0 / A_star + 2.0) * lams * phis
    inside = T <= thr[:, None]
    k_star, selected = J, J
    for k in range(J, 0, -1):
        ok = np.all(inside[k - 1:], axis=0)
        if ok.any():
            k_star, selected = k, int(np.flatnonzero(ok)[0]) + 1
        else:
            break
    # nested sets only shrink as k decreases, so the scan can stop early
    return LepskiState(int(M_bound), float(A_star), phis, lams, radii, models, T, thr,
                       k_star, selected, models[selected - 1])


def _penalty_of(model, penalty, kernel, data):
    if kernel is None:
        return elastic_net_value(model.coefficients, penalty.alpha)
    return float(model.weights @ model.weights)
