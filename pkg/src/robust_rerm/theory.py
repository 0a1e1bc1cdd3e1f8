"""Complexity fixed points, closed-form radii and local Bernstein constants.

Monte-Carlo complexity oracles draw their Gaussian or Rademacher variables
once per oracle (common random numbers), so an oracle is a deterministic,
nondecreasing function of the radius and bisection on it is well posed.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from . import _kernels
from .datagen import NoiseSpec, make_rng

DEFAULT_DRAWS = 400
MOM_CONSTANT = 384.0
CSR_CONSTANT = 368.0
HUBER_MOM_CONSTANT = 5588.0
QUANTILE_MOM_CONSTANT = 13888.0


# ---------------------------------------------------------------------------
# inner suprema
# ---------------------------------------------------------------------------

def sup_inner_product_l1l2(g, rho, r):
    """``sup <g, t>`` over ``||t||_1 <= rho`` and ``||t||_2 <= r``."""
    if rho < 0 or r < 0:
        raise ValueError("radii must be nonnegative")
    G = np.ascontiguousarray(np.atleast_2d(np.asarray(g, dtype=float)))
    return float(_kernels.l1l2_sup(G, float(rho), float(r))[0])


def ellipsoid_sups(C, a, b, iters=100):
    """Row-wise ``sup <c, x>`` over ``sum a_k x_k^2 <= 1`` and ``sum b_k x_k^2 <= 1``.

    Convex duality reduces each row to
    ``min_{s in [0,1]} sqrt(sum_k c_k^2 / (s a_k + (1-s) b_k))``, a convex
    problem in ``s`` solved by bisection on the sign of the derivative.
    """
    C2 = np.atleast_2d(np.asarray(C, dtype=float)) ** 2
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)

    def q(s):
        d = s[:, None] * a + (1.0 - s[:, None]) * b
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(C2 > 0, C2 / d, 0.0)
        return terms.sum(axis=1)

    lo = np.zeros(C2.shape[0])
    hi = np.ones(C2.shape[0])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        d = mid[:, None] * a + (1.0 - mid[:, None]) * b
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = -np.where(C2 > 0, C2 * (a - b) / (d * d), 0.0).sum(axis=1)
        up = slope < 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    val = np.minimum(np.minimum(q(lo), q(hi)), np.minimum(q(np.zeros_like(lo)), q(np.ones_like(lo))))
    return np.sqrt(val)


def kernel_ellipsoid_sups(C, eigs, rho, r):
    """Row-wise ``sup sum_k c_k theta_k`` over ``||theta|| <= rho`` and
    ``sum_k eigs_k theta_k^2 <= r^2``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if rho <= 0 or r <= 0:
        return np.zeros(C.shape[0])
    eigs = np.asarray(eigs, dtype=float)
    return ellipsoid_sups(C, np.full(eigs.shape, 1.0 / rho ** 2), eigs / r ** 2)


# ---------------------------------------------------------------------------
# Gaussian mean width and Rademacher complexity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class L1L2Set:
    rho: float
    r: float
    p: int


@dataclass(frozen=True)
class L2Ball:
    r: float
    p: int


@dataclass(frozen=True)
class KernelEllipsoid:
    """``{sum_k theta_k sqrt(eig_k) e_k : ||theta|| <= rho, ||.||_{L2} <= r}``."""
    rho: float
    r: float
    eigs: Tuple[float, ...]


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    se = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return float(values.mean()), se


def gaussian_sups(set_spec, G):
    """Per-row exact ``sup_{h in H} <G_row, h>`` for a matrix of Gaussian draws."""
    if isinstance(set_spec, L2Ball):
        return set_spec.r * np.linalg.norm(G, axis=1)
    if isinstance(set_spec, L1L2Set):
        return _kernels.l1l2_sup(np.ascontiguousarray(G), float(set_spec.rho), float(set_spec.r))
    if isinstance(set_spec, KernelEllipsoid):
        eigs = np.asarray(set_spec.eigs, dtype=float)
        root = np.sqrt(eigs)
        return kernel_ellipsoid_sups(G * root, eigs, set_spec.rho, set_spec.r)
    raise TypeError(f"unsupported set {set_spec!r}")


def _dim(set_spec):
    return len(set_spec.eigs) if isinstance(set_spec, KernelEllipsoid) else int(set_spec.p)


def gaussian_mean_width_mc(set_spec, draws=DEFAULT_DRAWS, seed=0):
    """Monte-Carlo ``w(H) = E sup_{h in H} G_h``; returns ``(estimate, stderr)``."""
    if draws < 2:
        raise ValueError("need at least 2 draws")
    G = make_rng(seed, 41).standard_normal((draws, _dim(set_spec)))
    return _mean_se(gaussian_sups(set_spec, G))


@dataclass(frozen=True)
class LinearClass:
    """``{x -> <x, t> : ||t||_1 <= rho, ||t||_2 <= r}``."""
    rho: float
    r: float


@dataclass(frozen=True)
class KernelClass:
    """``{h in H_K : ||h||_H <= rho_norm, (1/N) sum h(X_i)^2 <= r^2}`` on the sample
    with Gram matrix ``gram``."""
    rho_norm: float
    r: float
    gram: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class FixedFunction:
    """A single function through its values at the sample."""
    values: np.ndarray = field(repr=False, compare=False)


def _gram_factor(gram):
    w, U = np.linalg.eigh(np.asarray(gram, dtype=float))
    w = np.clip(w, 0.0, None)
    return w, U


def rademacher_sups(class_spec, design, signs):
    """Per-row exact ``sup_h |sum_i sigma_i h(X_i)|`` for a matrix of sign draws."""
    if isinstance(class_spec, FixedFunction):
        return np.abs(signs @ np.asarray(class_spec.values, dtype=float))
    if isinstance(class_spec, LinearClass):
        X = np.asarray(design, dtype=float)
        X = X if X.ndim == 2 else X[:, None]
        return _kernels.l1l2_sup(np.ascontiguousarray(signs @ X), float(class_spec.rho), float(class_spec.r))
    if isinstance(class_spec, KernelClass):
        w, U = _gram_factor(class_spec.gram)
        n = w.size
        C = (signs @ U) * np.sqrt(w)
        emp = w / n
        return kernel_ellipsoid_sups(C, emp, class_spec.rho_norm, class_spec.r)
    raise TypeError(f"unsupported class {class_spec!r}")


def _sample_size(class_spec, design):
    if isinstance(class_spec, FixedFunction):
        return np.asarray(class_spec.values).shape[0]
    if isinstance(class_spec, KernelClass):
        return np.asarray(class_spec.gram).shape[0]
    return np.asarray(design).shape[0]


def rademacher_complexity_mc(class_spec, design_sample=None, draws=DEFAULT_DRAWS, seed=0):
    """Monte-Carlo ``E sup_h |sum_i sigma_i h(X_i)|``; returns ``(estimate, stderr)``."""
    n = _sample_size(class_spec, design_sample)
    if n < 1:
        raise ValueError("design sample must be nonempty")
    if draws < 2:
        raise ValueError("need at least 2 draws")
    signs = make_rng(seed, 42).choice(np.array([-1.0, 1.0]), size=(draws, n))
    return _mean_se(rademacher_sups(class_spec, design_sample, signs))


def kernel_complexity_bound(rho_norm, r, eigenvalues, sup_K):
    """``sqrt(2) ||K||_inf (sum_k min(rho^2 lambda_k, r^2))^(1/2)``."""
    eig = np.asarray(eigenvalues, dtype=float)
    if np.any(eig < 0) or np.any(np.diff(eig) > 0):
        raise ValueError("eigenvalues must be nonnegative and nonincreasing")
    inner = np.minimum(rho_norm ** 2 * eig, r ** 2).sum()
    return float(np.sqrt(2.0) * sup_K * np.sqrt(inner))


# ---------------------------------------------------------------------------
# fixed points
# ---------------------------------------------------------------------------

class BracketError(RuntimeError):
    pass


@dataclass
class FixedPointResult:
    """``certificate`` holds ``(lhs, lhs_stderr, rhs)`` at ``radius`` and at
    ``radius / 1.1``."""
    radius: float
    A: float
    mc_stderr: float
    certificate: Tuple[Tuple[float, float, float], Tuple[float, float, float]]

    @property
    def holds_at_radius(self):
        lhs, se, rhs = self.certificate[0]
        return lhs - 2.0 * se <= rhs

    @property
    def fails_below(self):
        lhs, se, rhs = self.certificate[1]
        return self.radius == 0.0 or lhs + 2.0 * se > rhs

    def to_dict(self):
        return {"radius": self.radius, "A": self.A, "stderr": self.mc_stderr,
                "certificate": {"at_radius": list(self.certificate[0]),
                                "at_radius_over_1.1": list(self.certificate[1])}}


def fixed_point_solve(lhs, rhs, A=1.0, tol=1e-3, r_start=1.0, r_min=1e-12, max_doublings=60):
    """Smallest ``r`` with ``lhs(r) <= rhs(r)``.

    ``lhs(r)`` returns ``(value, stderr)`` and must be nondecreasing in ``r``;
    ``rhs`` is the threshold shape. Bisection is geometric, to ``tol`` relative.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")

    def holds(r):
        return lhs(r)[0] <= rhs(r)

    def result(radius):
        at = radius if radius > 0 else r_min
        v0, s0 = lhs(at)
        v1, s1 = lhs(at / 1.1)
        return FixedPointResult(float(radius), float(A), float(s0),
                                ((float(v0), float(s0), float(rhs(at))),
                                 (float(v1), float(s1), float(rhs(at / 1.1)))))

    r = float(r_start)
    if holds(r):
        while holds(r):
            if r < r_min:
                return result(0.0)
            r /= 2.0
        lo, hi = r, 2.0 * r
    else:
        for _ in range(max_doublings):
            r *= 2.0
            if holds(r):
                break
        else:
            raise BracketError(f"defining inequality still fails at r = {r:.3g}")
        lo, hi = r / 2.0, r
    while hi / lo > 1.0 + tol:
        mid = np.sqrt(lo * hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return result(hi)


def gaussian_shape(A, N, L=1.0, B=1.0):
    """Sub-Gaussian fixed point: ``32 L B w(r) <= sqrt(N) r^2 / (2A)``;
    returns ``(scale, rhs)`` with ``lhs = scale * width``."""
    return 32.0 * L * B, lambda r: np.sqrt(N) * r * r / (2.0 * A)


def r_star_fixed_point(width, A, N, L=1.0, B=1.0, tol=1e-3):
    """``width(r) -> (w, se)``; solves the sub-Gaussian defining inequality."""
    scale, rhs = gaussian_shape(A, N, L, B)

    def lhs(r):
        w, se = width(r)
        return scale * w, scale * se
    return fixed_point_solve(lhs, rhs, A=A, tol=tol)


def elastic_net_width_oracle(p, alpha, A, phi_star, eta=2.0, draws=DEFAULT_DRAWS, seed=0):
    """Width bound ``min(w(rho/(1-alpha) B1 cap r B2), min(r, sqrt(rho/alpha)) E||G||)``
    with ``rho = eta (4 + 2/A) phi_star``, on fixed Gaussian draws."""
    G = np.ascontiguousarray(make_rng(seed, 43).standard_normal((draws, p)))
    norms = np.linalg.norm(G, axis=1)
    rho = eta * (4.0 + 2.0 / A) * phi_star
    l1_rad = rho / (1.0 - alpha)
    r_cap = np.sqrt(rho / alpha)

    def width(r):
        a = _mean_se(_kernels.l1l2_sup(G, l1_rad, float(r)))
        b = _mean_se(min(r, r_cap) * norms)
        return a if a[0] <= b[0] else b
    return width


def mom_fixed_point(design, rho, A, L=1.0, draws=DEFAULT_DRAWS, seed=0, tol=1e-3):
    """``r-tilde`` for the linear class: the Rademacher sum over ``J`` must stay
    below ``r^2 |J| / (384 A L)`` for ``J`` the full sample and one random half."""
    X = np.asarray(design, dtype=float)
    n = X.shape[0]
    rng = make_rng(seed, 44)
    half = np.sort(rng.permutation(n)[: (n + 1) // 2])
    s_full = rng.choice(np.array([-1.0, 1.0]), size=(draws, n))
    s_half = rng.choice(np.array([-1.0, 1.0]), size=(draws, half.size))
    G_full = np.ascontiguousarray(s_full @ X)
    G_half = np.ascontiguousarray(s_half @ X[half])

    def lhs(r):
        a = _mean_se(_kernels.l1l2_sup(G_full, float(rho), float(r)))
        b = _mean_se(_kernels.l1l2_sup(G_half, float(rho), float(r)))
        ra, rb = a[0] / n, b[0] / half.size
        return (ra, a[1] / n) if ra >= rb else (rb, b[1] / half.size)
    return fixed_point_solve(lhs, lambda r: r * r / (MOM_CONSTANT * A * L), A=A, tol=tol)


def kernel_fixed_point(gram, rho_norm, A, L=1.0, draws=DEFAULT_DRAWS, seed=0, tol=1e-3):
    """``r-bar``: Rademacher sum over the kernel class against ``N r^2 / (64 A L)``."""
    w, U = _gram_factor(gram)
    n = w.size
    signs = make_rng(seed, 45).choice(np.array([-1.0, 1.0]), size=(draws, n))
    C = (signs @ U) * np.sqrt(w)
    emp = w / n

    def lhs(r):
        return _mean_se(kernel_ellipsoid_sups(C, emp, rho_norm, r))
    return fixed_point_solve(lhs, lambda r: n * r * r / (64.0 * A * L), A=A, tol=tol)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def elastic_net_r_star(N, p, alpha, delta, B_subg, A, phi_star):
    """Two-branch closed forms for the lasso-type and ridge-type radii.

    Returns ``(r1_sq, r2_sq, min)``. The lasso branch reads ``log(e x)`` as
    ``log(e max(1, x))``, the usual convention for widths of ``rho B1 cap r B2``;
    with it both branches agree at the branch boundary and ``r1_sq`` is
    continuous and nonincreasing in ``N``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if min(N, p, delta, B_subg, A, phi_star) <= 0:
        raise ValueError("all inputs must be positive")
    c = 8.0 + 4.0 / A
    k = 64.0 * delta * B_subg * A
    if (c * phi_star) ** 2 * N / ((1.0 - alpha) ** 2 * k) <= p ** 2:
        lg = 1.0 + max(0.0, math.log(p * (1.0 - alpha) / (math.sqrt(N) * c * phi_star)))
        r1 = c * phi_star / (1.0 - alpha) * math.sqrt(k / N * lg)
    else:
        r1 = k * p / N
    if N >= k * alpha * p / (c * phi_star):
        r2 = k * p / N
    else:
        r2 = math.sqrt(64.0 * delta * B_subg * c * phi_star * p / (alpha * N))
    return r1, r2, min(r1, r2)


def kernel_constant(A, beta, L, p_decay):
    """``C(A, beta, L, p) = (384 A beta L)^(2/(p+1)) (4(2 + 1/A))^(2p/(p+1))``."""
    if not 0 < p_decay < 1:
        raise ValueError("p_decay must lie in (0, 1)")
    e = 1.0 / (p_decay + 1.0)
    return (MOM_CONSTANT * A * beta * L) ** (2.0 * e) * (4.0 * (2.0 + 1.0 / A)) ** (2.0 * p_decay * e)


def kernel_r_bar(A, beta, L, p_decay, f_star_norm, N):
    """Returns ``(r_bar_sq, r_tilde_sq, C)`` with ``r_tilde_sq = 6 r_bar_sq``."""
    C = kernel_constant(A, beta, L, p_decay)
    rt = C * f_star_norm ** (2.0 * p_decay / (p_decay + 1.0)) / N ** (1.0 / (p_decay + 1.0))
    return rt / 6.0, rt, C


def c_s_r(A, L, S, N, r_tilde_sq):
    """``max(r_tilde^2, 368 A^2 L^2 S / N)``."""
    return max(r_tilde_sq, CSR_CONSTANT * A * A * L * L * S / N)


def kernel_lambda_rerm(gamma, beta, p_decay, f_star_norm, sup_K, N):
    """Penalty level for kernel RERM with the absolute loss."""
    C = kernel_constant(4.0 / gamma, beta, 1.0, p_decay)
    return (C * max(1.0, (8.0 + gamma) * sup_K * f_star_norm)
            * f_star_norm ** (2.0 / (p_decay + 1.0)) / N ** (1.0 / (1.0 + p_decay)))


def kernel_lambda_mom(gamma, beta, p_decay, f_star_norm, S, N):
    """Penalty level for the kernel MOM estimator with the absolute loss."""
    C = kernel_constant(4.0 / gamma, beta, 1.0, p_decay)
    c_sn = max(6.0 * C * f_star_norm ** (2.0 * p_decay / (p_decay + 1.0)) / N ** (1.0 / (p_decay + 1.0)),
               QUANTILE_MOM_CONSTANT / gamma * S / N)
    return c_sn / f_star_norm ** 2


def huber_lambda_mom(r_tilde_sq, delta, gamma, S, N, phi_star):
    """Penalty level for the elastic-net MOM estimator with the Huber loss."""
    return max(r_tilde_sq, HUBER_MOM_CONSTANT * delta ** 2 / gamma ** 2 * S / N) / phi_star


# ---------------------------------------------------------------------------
# local Bernstein constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BernsteinCheck:
    gamma: float
    A_out: float
    C_prime: Optional[float]
    epsilon: Optional[float]
    radius_checked: float

    def to_dict(self):
        return {"gamma": self.gamma, "A_out": self.A_out, "C_prime": self.C_prime,
                "epsilon": self.epsilon, "radius_checked": self.radius_checked}


def _noise(noise):
    return NoiseSpec.from_dict(noise) if isinstance(noise, dict) else noise


def noise_symmetric_mass(noise, a):
    """``F_W(a) - F_W(-a)`` for the closed-form laws."""
    noise = _noise(noise)
    if a <= 0:
        return 0.0
    if noise.kind == "cauchy":
        return 2.0 / math.pi * math.atan(a)
    if noise.kind == "gaussian":
        return 1.0 if noise.sigma == 0 else math.erf(a / (noise.sigma * math.sqrt(2.0)))
    if noise.kind == "student":
        return float(2.0 * stats.t.cdf(a, noise.nu) - 1.0)
    if noise.kind == "uniform":
        return min(1.0, a / noise.a)
    raise ValueError(f"unsupported noise law {noise.kind!r}")


def noise_density(noise, z):
    noise = _noise(noise)
    z = abs(float(z))
    if noise.kind == "cauchy":
        return 1.0 / (math.pi * (1.0 + z * z))
    if noise.kind == "gaussian":
        if noise.sigma == 0:
            raise ValueError("degenerate gaussian noise has no density")
        s = noise.sigma
        return math.exp(-0.5 * (z / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
    if noise.kind == "student":
        return float(stats.t.pdf(z, noise.nu))
    if noise.kind == "uniform":
        return 1.0 / (2.0 * noise.a) if z <= noise.a else 0.0
    raise ValueError(f"unsupported noise law {noise.kind!r}")


def norm_equivalence_constant(rho, sup_K, r, epsilon):
    """``C' = (rho ||K||_inf / r)^(eps / (2 + eps))``."""
    if rho <= 0 or r <= 0 or epsilon <= 0:
        raise ValueError("rho, r and epsilon must be positive")
    return (rho * sup_K / r) ** (epsilon / (2.0 + epsilon))


def bernstein_gamma_huber(noise, delta, C_prime, r, epsilon=None):
    """Mass of the noise on ``[-a, a]`` with ``a = delta - 2 C'^2 r``; zero when
    ``a <= 0``. ``A_out = 4 / gamma`` (``inf`` when ``gamma == 0``)."""
    if not delta > 0 or C_prime < 0 or r < 0:
        raise ValueError("need delta > 0, C' >= 0, r >= 0")
    a = delta - 2.0 * C_prime ** 2 * r
    gamma = noise_symmetric_mass(noise, a) if a > 0 else 0.0
    return BernsteinCheck(gamma, 4.0 / gamma if gamma > 0 else math.inf, C_prime, epsilon, float(r))


def bernstein_gamma_quantile(noise, radius_R, C_prime=None, epsilon=None):
    """Infimum of the (symmetric, unimodal) noise density on ``[-R, R]``,
    attained at ``|z| = R``."""
    if radius_R < 0:
        raise ValueError("radius must be nonnegative")
    gamma = min(1.0, noise_density(noise, radius_R))
    return BernsteinCheck(gamma, 4.0 / gamma if gamma > 0 else math.inf, C_prime, epsilon, float(radius_R))


def quantile_localization_radius(f_star_norm, sup_K, gamma=1.0):
    """``2 sqrt(8 + gamma) ||f*|| ||K||_inf``."""
    return 2.0 * math.sqrt(8.0 + gamma) * f_star_norm * sup_K


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def moment_growth_diagnostic(samples, q_max):
    """``||Z||_{L_q} / sqrt(q)`` for ``q = 1..q_max`` (empirical moments)."""
    z = np.abs(np.asarray(samples, dtype=float).ravel())
    if z.size == 0:
        raise ValueError("samples must be nonempty")
    if q_max < 2:
        raise ValueError("q_max must be >= 2")
    scale = z.max()
    out = {}
    for q in range(1, int(q_max) + 1):
        if scale == 0:
            out[q] = 0.0
            continue
        # rescale before powering to keep heavy tails finite
        norm = scale * np.mean((z / scale) ** q) ** (1.0 / q)
        out[q] = float(norm / np.sqrt(q))
    return out
