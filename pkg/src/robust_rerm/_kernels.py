"""Hot inner loops, each in a loop form (numba-compiled) and a numpy form.

The public names at the bottom dispatch on :data:`robust_rerm._accel.BACKEND`.
Both forms are importable directly so tests and the benchmark can compare
them regardless of the active backend.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

_BISECT_ITERS = 200


# ---------------------------------------------------------------------------
# block means
# ---------------------------------------------------------------------------

def _block_means_loop(values, blocks):
    n_blocks, size = blocks.shape
    out = np.empty(n_blocks)
    for s in range(n_blocks):
        acc = 0.0
        for j in range(size):
            acc += values[blocks[s, j]]
        out[s] = acc / size
    return out


def block_means_numpy(values, blocks):
    """Mean of ``values`` over each row of index matrix ``blocks``.

    Summation runs left to right within a block so the result is bitwise
    identical to a sequential Python sum.
    """
    gathered = values[blocks]
    acc = gathered[:, 0].copy()
    for j in range(1, gathered.shape[1]):
        acc += gathered[:, j]
    return acc / gathered.shape[1]


# ---------------------------------------------------------------------------
# sup <g, t> over {||t||_1 <= rho, ||t||_2 <= r}
# ---------------------------------------------------------------------------

def _l1l2_sup_loop(G, rho, r):
    n, p = G.shape
    out = np.zeros(n)
    if rho <= 0.0 or r <= 0.0:
        return out
    target = rho / r
    a = np.empty(p)
    for i in range(n):
        gmax = 0.0
        for j in range(p):
            v = abs(G[i, j])
            if v > gmax:
                gmax = v
        if gmax == 0.0:
            continue
        # work on the row scaled to unit max norm so tiny entries cannot underflow
        s1 = 0.0
        s2 = 0.0
        for j in range(p):
            v = abs(G[i, j]) / gmax
            a[j] = v
            s1 += v
            s2 += v * v
        n2 = np.sqrt(s2)
        if s1 / n2 <= target:
            out[i] = r * n2 * gmax
            continue
        if target <= 1.0:
            out[i] = rho * gmax
            continue
        lo = 0.0
        hi = 1.0
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            t1 = 0.0
            t2 = 0.0
            for j in range(p):
                d = a[j] - mid
                if d > 0.0:
                    t1 += d
                    t2 += d * d
            if t2 > 0.0 and t1 / np.sqrt(t2) > target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15:
                break
        best = rho
        for mu in (lo, hi):
            t2 = 0.0
            for j in range(p):
                d = a[j] - mu
                if d > 0.0:
                    t2 += d * d
            val = mu * rho + r * np.sqrt(t2)
            if val < best:
                best = val
        out[i] = best * gmax
    return out


def l1l2_sup_numpy(G, rho, r):
    """Row-wise exact sup of <g, t> over the l1 ball of radius ``rho``
    intersected with the l2 ball of radius ``r``.

    Solves the dual ``min_{mu >= 0} mu*rho + r*||soft(g, mu)||_2`` by
    bisection on the sign of its derivative, all rows at once.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n = G.shape[0]
    if rho <= 0.0 or r <= 0.0:
        return np.zeros(n)
    A = np.abs(G)
    gmax = A.max(axis=1)
    nz = gmax > 0
    # rows scaled to unit max norm so tiny entries cannot underflow
    A = A / np.where(nz, gmax, 1.0)[:, None]
    s1 = A.sum(axis=1)
    n2 = np.sqrt((A * A).sum(axis=1))
    target = rho / r
    out = np.zeros(n)
    l2_only = nz & (s1 <= target * n2)
    out[l2_only] = r * n2[l2_only] * gmax[l2_only]
    if target <= 1.0:
        rest = nz & ~l2_only
        out[rest] = rho * gmax[rest]
        return out
    act = np.flatnonzero(nz & ~l2_only)
    if act.size == 0:
        return out
    Aa = A[act]
    lo = np.zeros(act.size)
    hi = np.ones(act.size)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        d = np.maximum(Aa - mid[:, None], 0.0)
        t1 = d.sum(axis=1)
        t2 = np.sqrt((d * d).sum(axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            go_right = (t2 > 0) & (t1 > target * t2)
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        if np.all(hi - lo <= 1e-15):
            break
    vals = []
    for mu in (lo, hi):
        d = np.maximum(Aa - mu[:, None], 0.0)
        vals.append(mu * rho + r * np.sqrt((d * d).sum(axis=1)))
    out[act] = np.minimum(np.minimum(vals[0], vals[1]), rho) * gmax[act]
    return out


# ---------------------------------------------------------------------------
# dual coordinate ascent for piecewise-linear losses + lam*||theta||^2
# ---------------------------------------------------------------------------

def _dual_cd_loop(Psi, y, lo, hi, lam, u, w, sqnorm, order):
    # one pass; w = Psi^T u is kept in sync, theta = -w / (2 lam)
    k = Psi.shape[1]
    two_lam = 2.0 * lam
    for idx in range(order.shape[0]):
        i = order[idx]
        q = sqnorm[i]
        if q <= 0.0:
            continue
        dot = 0.0
        for j in range(k):
            dot += Psi[i, j] * w[j]
        new = u[i] - (two_lam * y[i] + dot) / q
        if new < lo[i]:
            new = lo[i]
        elif new > hi[i]:
            new = hi[i]
        step = new - u[i]
        if step != 0.0:
            u[i] = new
            for j in range(k):
                w[j] += step * Psi[i, j]


def dual_cd_numpy(Psi, y, lo, hi, lam, u, w, sqnorm, order):
    """One epoch of exact coordinate ascent on the box-constrained dual
    ``max_u -u.y - ||Psi^T u||^2 / (4 lam)``. Updates ``u`` and ``w`` in place.
    """
    two_lam = 2.0 * lam
    for i in order:
        q = sqnorm[i]
        if q <= 0.0:
            continue
        row = Psi[i]
        new = u[i] - (two_lam * y[i] + row @ w) / q
        new = min(max(new, lo[i]), hi[i])
        step = new - u[i]
        if step != 0.0:
            u[i] = new
            w += step * row


block_means_numba = njit(_block_means_loop)
l1l2_sup_numba = njit(_l1l2_sup_loop)
dual_cd_numba = njit(_dual_cd_loop)

if USE_NUMBA:
    block_means = block_means_numba
    l1l2_sup = l1l2_sup_numba
    dual_cd = dual_cd_numba
else:
    block_means = block_means_numpy
    l1l2_sup = l1l2_sup_numpy
    dual_cd = dual_cd_numpy
