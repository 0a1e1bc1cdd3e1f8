import os
import subprocess
import sys

import numpy as np
import pytest

from robust_rerm import _kernels
from robust_rerm.theory import sup_inner_product_l1l2


def test_block_means_backends_bitwise(rng):
    v = rng.normal(size=997)
    blocks = rng.permutation(997)[:990].reshape(30, 33)
    a = _kernels.block_means_numba(v, blocks)
    b = _kernels.block_means_numpy(v, blocks)
    ref = np.array([sum(float(v[i]) for i in row) / 33 for row in blocks])
    np.testing.assert_array_equal(a, ref)
    np.testing.assert_array_equal(b, ref)


def test_l1l2_backends_agree(rng):
    G = np.ascontiguousarray(rng.normal(size=(200, 30)) * rng.exponential(size=(200, 1)))
    for rho, r in ((0.5, 1.0), (3.0, 1.0), (100.0, 1.0), (1.0, 0.0)):
        np.testing.assert_allclose(_kernels.l1l2_sup_numba(G, rho, r), _kernels.l1l2_sup_numpy(G, rho, r),
                                   rtol=1e-12, atol=1e-14)


def test_dual_cd_backends_agree(rng):
    n, k = 120, 8
    Psi = np.ascontiguousarray(rng.normal(size=(n, k)))
    y = rng.normal(size=n)
    lo, hi = np.full(n, -0.7 / n), np.full(n, 0.3 / n)
    sq = np.einsum("ij,ij->i", Psi, Psi)
    order = rng.permutation(n)
    out = []
    for f in (_kernels.dual_cd_numba, _kernels.dual_cd_numpy):
        u, w = np.zeros(n), np.zeros(k)
        for _ in range(5):
            f(Psi, y, lo, hi, 0.05, u, w, sq, order)
        out.append((u, w))
    np.testing.assert_allclose(out[0][0], out[1][0], rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(out[0][1], Psi.T @ out[0][0], atol=1e-12)


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("0", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, ROBUST_RERM_NO_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import robust_rerm; print(robust_rerm.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_numpy_backend_kernel_fit_matches():
    code = (
        "import numpy as np, json\n"
        "from robust_rerm import *\n"
        "ks = KernelSpec('synthetic_mercer', beta=1.0, p_decay=0.5, k_max=64)\n"
        "d = make_regression_dataset(DesignSpec('uniform'), NoiseSpec('cauchy'), np.cos, 80, 4)\n"
        "m = fit_rerm(d, LossSpec('quantile', tau=0.5), PenaltySpec('squared_hilbert_norm'), 0.01,"
        " kernel=ks)\n"
        "print(json.dumps(m.objective))\n"
    )
    vals = []
    for flag in ("1", "0"):
        env = dict(os.environ, ROBUST_RERM_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        vals.append(float(out.stdout))
    assert vals[0] == pytest.approx(vals[1], rel=1e-9)


def test_sup_exact_oracle():
    # frozen from a 3e5-point grid over mu in [0, 3]
    assert sup_inner_product_l1l2([3.0, 1.0], 1.2, 1.0) == pytest.approx(3.14833147735, abs=1e-6)
