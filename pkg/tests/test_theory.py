import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from robust_rerm import theory
from robust_rerm.datagen import NoiseSpec
from robust_rerm.rkhs import KernelSpec, gram_matrix

finite = st.floats(-5, 5, allow_nan=False)


# --- inner supremum --------------------------------------------------------

def test_l1l2_limits():
    g = np.array([3.0, -1.0, 0.5])
    assert theory.sup_inner_product_l1l2(g, 1e6, 2.0) == pytest.approx(2.0 * np.linalg.norm(g), rel=1e-9)
    assert theory.sup_inner_product_l1l2(g, 0.7, 1e6) == pytest.approx(0.7 * 3.0, rel=1e-9)
    assert theory.sup_inner_product_l1l2(g, 0.0, 1.0) == 0.0


def test_l1l2_against_mu_grid():
    g = np.array([3.0, 1.0])
    rho, r = 1.2, 1.0
    mu = np.linspace(0.0, 3.0, 3_000_001)
    soft = np.maximum(np.abs(g)[:, None] - mu, 0.0)
    oracle = np.min(mu * rho + r * np.sqrt((soft ** 2).sum(axis=0)))
    assert theory.sup_inner_product_l1l2(g, rho, r) == pytest.approx(oracle, abs=1e-6)


def test_l1l2_against_primal_search():
    # direct search over the feasible set of a 2-vector: boundary of the l2 disk
    # and the vertices of the l1 ball clipped to it
    g = np.array([3.0, 1.0])
    ang = np.linspace(0, 2 * np.pi, 200_001)
    best = -np.inf
    for scale in np.linspace(0.5, 1.0, 501):
        t = scale * np.stack([np.cos(ang), np.sin(ang)])
        ok = np.abs(t).sum(axis=0) <= 1.2
        if ok.any():
            best = max(best, (g @ t[:, ok]).max())
    assert theory.sup_inner_product_l1l2(g, 1.2, 1.0) == pytest.approx(best, abs=1e-3)


@given(st.lists(finite, min_size=1, max_size=12), st.floats(0.01, 5), st.floats(0.01, 5))
def test_l1l2_homogeneous(g, rho, r):
    a = theory.sup_inner_product_l1l2(g, rho, r)
    b = theory.sup_inner_product_l1l2(g, 2 * rho, 2 * r)
    assert b == pytest.approx(2 * a, rel=1e-8, abs=1e-12)


def test_l1l2_tiny_entries():
    g = np.array([4e-299, 1e-300])
    assert theory.sup_inner_product_l1l2(g, 1.0, 1.0) == pytest.approx(np.linalg.norm(g), rel=1e-12)


def test_l1l2_rejects_negative_radius():
    with pytest.raises(ValueError):
        theory.sup_inner_product_l1l2([1.0], -1.0, 1.0)


def test_ellipsoid_sup_against_lagrange_grid(rng):
    c = rng.normal(size=5)
    a, b = rng.uniform(0.2, 2, 5), rng.uniform(0.2, 2, 5)
    s = np.linspace(0, 1, 200_001)
    oracle = np.sqrt(np.min((c ** 2 / (s[:, None] * a + (1 - s[:, None]) * b)).sum(axis=1)))
    assert theory.ellipsoid_sups(c, a, b)[0] == pytest.approx(oracle, rel=1e-9)


# --- widths and Rademacher complexities -------------------------------------

def test_width_of_point_is_zero():
    assert theory.gaussian_mean_width_mc(theory.L2Ball(0.0, 5))[0] == 0.0
    assert theory.gaussian_mean_width_mc(theory.L1L2Set(1.0, 0.0, 5))[0] == 0.0


def test_l2_ball_width_gamma_oracle():
    est, se = theory.gaussian_mean_width_mc(theory.L2Ball(1.0, 100), draws=4000, seed=1)
    exact = math.sqrt(2) * math.exp(special.gammaln(50.5) - special.gammaln(50))
    assert abs(est - exact) <= 0.02 * exact


def test_l1l2_width_vs_max_of_gaussians():
    est, _ = theory.gaussian_mean_width_mc(theory.L1L2Set(1.0, 10.0, 1000), draws=400, seed=2)
    oracle = np.abs(np.random.default_rng(77).standard_normal((400, 1000))).max(axis=1).mean()
    assert abs(est - oracle) <= 0.1 * oracle


def test_l1l2_width_below_separate_widths():
    for rho, r in [(1.0, 0.2), (3.0, 1.0), (0.5, 5.0)]:
        est, se = theory.gaussian_mean_width_mc(theory.L1L2Set(rho, r, 200), seed=3)
        w1, se1 = theory.gaussian_mean_width_mc(theory.L1L2Set(rho, 1e9, 200), seed=4)
        w2, se2 = theory.gaussian_mean_width_mc(theory.L2Ball(r, 200), seed=5)
        assert est <= min(w1, w2) + 3 * max(se, se1, se2)


def test_rademacher_zero_and_fixed_function(rng):
    X = rng.normal(size=(30, 4))
    assert theory.rademacher_complexity_mc(theory.LinearClass(0.0, 1.0), X)[0] == 0.0
    h = rng.normal(size=30)
    est, se = theory.rademacher_complexity_mc(theory.FixedFunction(h), draws=2000, seed=6)
    signs = np.random.default_rng(8).choice([-1.0, 1.0], size=(20000, 30))
    oracle = np.abs(signs @ h).mean()
    assert abs(est - oracle) <= 3 * se + 3 * np.abs(signs @ h).std() / np.sqrt(20000)


def test_kernel_rademacher_below_bound(rng):
    ks = KernelSpec("synthetic_mercer", beta=1.0, p_decay=0.5, k_max=200)
    x = rng.uniform(size=200)
    gram = gram_matrix(ks, x)
    est, se = theory.rademacher_complexity_mc(theory.KernelClass(1.0, 0.3, gram), seed=7)
    # normalized by N the Rademacher average matches the L2-ball bound scale
    bound = np.sqrt(200) * theory.kernel_complexity_bound(1.0, 0.3, ks.eigenvalues, ks.bounded_sup)
    assert est <= bound + 3 * se


def test_validation():
    with pytest.raises(ValueError):
        theory.gaussian_mean_width_mc(theory.L2Ball(1.0, 3), draws=1)
    with pytest.raises(ValueError):
        theory.kernel_complexity_bound(1.0, 1.0, [0.1, 0.5], 1.0)


# --- kernel complexity bound ------------------------------------------------

def test_kernel_bound_examples():
    eig = 1.0 / np.arange(1, 1001) ** 2
    assert theory.kernel_complexity_bound(1.0, 0.0, eig, 1.0) == 0.0
    assert theory.kernel_complexity_bound(0.5, 10.0, eig, 2.0) == pytest.approx(
        math.sqrt(2) * 2.0 * 0.5 * math.sqrt(eig.sum()))
    big = 1.0 / np.arange(1, 10 ** 6 + 1, dtype=float) ** 2
    inner = float(np.minimum(big, 0.01).sum())
    assert inner == pytest.approx(0.19516533568218586, abs=1e-12)
    assert theory.kernel_complexity_bound(1.0, 0.1, big, 1.0) == pytest.approx(math.sqrt(2 * inner), abs=1e-12)


@given(st.floats(0.01, 3), st.floats(0.01, 3), st.floats(1.0, 2.0), st.integers(0, 19))
def test_kernel_bound_monotone(rho, r, factor, k):
    eig = np.sort(np.random.default_rng(k).uniform(0, 1, 20))[::-1]
    base = theory.kernel_complexity_bound(rho, r, eig, 1.0)
    assert theory.kernel_complexity_bound(rho * factor, r, eig, 1.0) >= base
    assert theory.kernel_complexity_bound(rho, r * factor, eig, 1.0) >= base
    bumped = eig.copy()
    bumped[: k + 1] *= factor
    assert theory.kernel_complexity_bound(rho, r, bumped, 1.0) >= base


# --- fixed points ------------------------------------------------------------

def test_fixed_point_zero_oracle():
    res = theory.r_star_fixed_point(lambda r: (0.0, 0.0), 1.0, 100)
    assert res.radius == 0.0


def test_fixed_point_linear_closed_form():
    r1 = theory.r_star_fixed_point(lambda r: (r, 0.0), 1.0, 400).radius
    r2 = theory.r_star_fixed_point(lambda r: (r, 0.0), 1.0, 800).radius
    assert r1 == pytest.approx(64 / math.sqrt(400), rel=1e-3)
    assert r1 / r2 == pytest.approx(math.sqrt(2), rel=2e-3)


def test_fixed_point_certificate_flags():
    res = theory.r_star_fixed_point(lambda r: (r, 0.0), 1.0, 100)
    assert res.holds_at_radius and res.fails_below
    d = res.to_dict()
    assert set(d) == {"radius", "A", "stderr", "certificate"}


def test_fixed_point_bracket_failure():
    with pytest.raises(theory.BracketError):
        theory.fixed_point_solve(lambda r: (2.0 * r * r, 0.0), lambda r: r * r)
    with pytest.raises(ValueError):
        theory.fixed_point_solve(lambda r: (r, 0.0), lambda r: r * r, tol=0.0)


def test_mom_fixed_point_scales_with_n(rng):
    X = rng.normal(size=(400, 5))
    res = theory.mom_fixed_point(X, rho=1.0, A=1.0, draws=200)
    assert res.holds_at_radius and res.fails_below
    res2 = theory.mom_fixed_point(np.vstack([X, rng.normal(size=(1200, 5))]), rho=1.0, A=1.0, draws=200)
    assert res2.radius < res.radius


# --- closed forms ------------------------------------------------------------

def test_elastic_net_r_star_example():
    r1, r2, r = theory.elastic_net_r_star(10 ** 4, 100, 0.5, 1, 1, 1, 1)
    assert (r1, r2, r) == pytest.approx((0.64, 0.64, 0.64))


def test_elastic_net_r_star_monotone_in_n():
    vals = [theory.elastic_net_r_star(n, 300, 0.3, 1, 1, 1, 0.5)[2] for n in np.geomspace(50, 1e7, 60)]
    assert np.all(np.diff(vals) <= 1e-15)
    with pytest.raises(ValueError):
        theory.elastic_net_r_star(100, 10, 1.0, 1, 1, 1, 1)


def test_kernel_r_bar():
    rb, rt, C = theory.kernel_r_bar(1, 1, 1, 1 / 3, 1.0, 1000)
    assert C == pytest.approx(384 ** 1.5 * 12 ** 0.5, rel=1e-12)
    assert C == pytest.approx(2.6067e4, rel=1e-4)
    assert rb == rt / 6
    p = 0.4
    _, a, _ = theory.kernel_r_bar(2, 1, 1, p, 3.0, 1000)
    _, b, _ = theory.kernel_r_bar(2, 1, 1, p, 3.0, 1000 * 2 ** (p + 1))
    assert b == pytest.approx(a / 2, rel=1e-12)
    with pytest.raises(ValueError):
        theory.kernel_r_bar(1, 1, 1, 1.0, 1.0, 10)


def test_c_s_r():
    assert theory.c_s_r(1, 1, 1e-9, 100, 0.5) == 0.5
    assert theory.c_s_r(1, 1, 100, 100, 0.5) == 368
    r2, N = 0.25, 5000
    s_star = r2 * N / 368
    assert 368 * s_star / N == pytest.approx(r2)
    assert theory.c_s_r(1, 1, s_star, N, r2) == pytest.approx(r2)
    assert theory.c_s_r(1, 1, 2 * s_star, N, r2) > r2


# --- Bernstein constants -----------------------------------------------------

def test_huber_gamma_examples():
    cauchy = theory.bernstein_gamma_huber(NoiseSpec("cauchy"), 1.0, 1.0, 0.0)
    assert cauchy.gamma == 0.5
    assert cauchy.A_out == 8.0
    gauss = theory.bernstein_gamma_huber(NoiseSpec("gaussian", sigma=1.0), 1.0, 1.0, 0.0)
    assert gauss.gamma == pytest.approx(special.erf(1 / math.sqrt(2)), abs=1e-10)
    assert gauss.gamma == pytest.approx(0.6827, abs=1e-4)
    assert theory.bernstein_gamma_huber(NoiseSpec("uniform", a=1.0), 2.0, 1.0, 0.5).gamma == 1.0
    assert theory.bernstein_gamma_huber(NoiseSpec("cauchy"), 1.0, 1.0, 0.5).gamma == 0.0


@given(st.sampled_from([NoiseSpec("cauchy"), NoiseSpec("gaussian", sigma=0.7),
                        NoiseSpec("student", nu=3.0), NoiseSpec("uniform", a=2.0)]),
       st.floats(0.1, 5), st.floats(0, 2), st.floats(0, 1), st.floats(0, 1))
def test_huber_gamma_monotone(noise, delta, r, dr, dd):
    g = theory.bernstein_gamma_huber(noise, delta, 1.0, r).gamma
    assert theory.bernstein_gamma_huber(noise, delta, 1.0, r + dr).gamma <= g
    assert theory.bernstein_gamma_huber(noise, delta + dd, 1.0, r).gamma >= g


def test_student_mass_against_quadrature():
    from scipy import integrate
    nu = 3.0
    c = special.gamma((nu + 1) / 2) / (math.sqrt(nu * math.pi) * special.gamma(nu / 2))

    def dens(z):
        return c * (1 + z * z / nu) ** (-(nu + 1) / 2)
    for a in (0.3, 1.0, 4.0):
        mass = integrate.quad(dens, -a, a, epsabs=1e-13)[0]
        assert theory.noise_symmetric_mass(NoiseSpec("student", nu=nu), a) == pytest.approx(mass, abs=1e-10)
        assert theory.noise_density(NoiseSpec("student", nu=nu), a) == pytest.approx(dens(a), rel=1e-12)


def test_quantile_gamma():
    assert theory.bernstein_gamma_quantile(NoiseSpec("cauchy"), 1.0).gamma == pytest.approx(1 / (2 * math.pi))
    R = theory.quantile_localization_radius(1.0, 1.0)
    assert R == 6.0
    got = theory.bernstein_gamma_quantile(NoiseSpec("cauchy"), R).gamma
    assert got == pytest.approx(min(1.0, 1.0 / (math.pi * (1 + 36))), rel=1e-14)
    for noise in (NoiseSpec("gaussian", sigma=0.3), NoiseSpec("student", nu=4.0)):
        g0 = theory.bernstein_gamma_quantile(noise, 0.0).gamma
        assert g0 == pytest.approx(min(1.0, theory.noise_density(noise, 0.0)))
        assert theory.bernstein_gamma_quantile(noise, 1.0).gamma <= g0


def test_norm_equivalence_constant():
    assert theory.norm_equivalence_constant(2.0, 1.0, 2.0, 1.0) == 1.0
    assert theory.norm_equivalence_constant(4.0, 1.0, 1.0, 2.0) == pytest.approx(2.0)


def test_lambda_helpers_positive():
    assert theory.kernel_lambda_rerm(0.5, 1, 0.5, 1, 1, 1000) > theory.kernel_lambda_rerm(0.5, 1, 0.5, 1, 1, 4000)
    assert theory.kernel_lambda_mom(0.5, 1, 0.5, 1, 10, 1000) > 0
    assert theory.huber_lambda_mom(0.1, 2.0, 0.5, 10, 1000, 1.0) == pytest.approx(5588 * 16 * 0.01)


# --- moment growth -------------------------------------------------------------

def test_moment_growth():
    const = theory.moment_growth_diagnostic(np.ones(10), 6)
    assert [const[q] for q in range(1, 7)] == pytest.approx([1 / math.sqrt(q) for q in range(1, 7)])
    rng = np.random.default_rng(0)
    g = theory.moment_growth_diagnostic(rng.standard_normal(10 ** 5), 8)
    exact = {q: (2 ** (q / 2) * special.gamma((q + 1) / 2) / math.sqrt(math.pi)) ** (1 / q) / math.sqrt(q)
             for q in range(1, 9)}
    assert max(g.values()) <= 1.3
    assert all(abs(g[q] - exact[q]) < 0.05 for q in range(1, 9))
    c = theory.moment_growth_diagnostic(rng.standard_cauchy(10 ** 5), 2)
    assert c[2] > 10
    with pytest.raises(ValueError):
        theory.moment_growth_diagnostic([], 3)
