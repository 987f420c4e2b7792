"""Compiled accumulators: basis moments, histograms and mask counts along orbits.

All kernels take a chunk of consecutive orbit points ``pts[j]`` whose global
index is ``j0 + j`` and update running sums in place.  Checkpoint ``n``
records ``S_n = sum_{j<n} g(x_j)`` together with ``g(x_n)`` so that both
``mu_n`` and ``mu_{n+1}`` are recoverable.
"""

from __future__ import annotations

import numba as nb
import numpy as np

TWO_PI = 2.0 * np.pi


@nb.njit(cache=True)
def _trig_row(x, top, out):
    out[0] = 1.0
    if top == 0:
        return
    c1 = np.cos(TWO_PI * x)
    s1 = np.sin(TWO_PI * x)
    c, s = c1, s1
    for k in range(1, (top + 1) // 2 + 1):
        out[2 * k - 1] = c
        if 2 * k <= top:
            out[2 * k] = s
        # angle addition; error grows ~k*eps, negligible for k <= 64
        c, s = c * c1 - s * s1, s * c1 + c * s1


@nb.njit(cache=True)
def _cheb_row(x, top, out):
    u = 2.0 * x - 1.0
    out[0] = 1.0
    if top >= 1:
        out[1] = u
    for n in range(2, top + 1):
        out[n] = 2.0 * u * out[n - 1] - out[n - 2]


@nb.njit(cache=True)
def _row_1d(fam, x, top, out):
    if fam == 0:
        _trig_row(x, top, out)
    else:
        _cheb_row(x, top, out)


@nb.njit(cache=True)
def eval_point(fam, dim, pa, pb, ta, tb, x, y, bufa, bufb, out):
    """out[i] = g_{i+1}(x, y) for the product family described by pair lists."""
    _row_1d(fam, x, ta, bufa)
    if dim == 1:
        for i in range(pa.size):
            out[i] = bufa[pa[i]]
        return
    _row_1d(fam, y, tb, bufb)
    for i in range(pa.size):
        out[i] = bufa[pa[i]] * bufb[pb[i]]


@nb.njit(cache=True)
def accumulate_chunk(
    pts, j0, fam, pa, pb, ta, tb,
    S, cps, cp_pos, cp_S, cp_next,
    hist, r0, r1,
    mask, mask_count, cp_mask,
    obs, obs_sum, cp_obs,
):
    """Fold a chunk of orbit points into the running accumulators.

    Returns the updated checkpoint cursor.  `hist` and `mask` may be empty
    (size 0) to skip those channels; `obs` likewise.
    """
    m = pts.shape[0]
    dim = pts.shape[1]
    imax = pa.size
    bufa = np.empty(ta + 1)
    bufb = np.empty(tb + 1)
    g = np.empty(imax)
    ncp = cps.size
    use_hist = hist.size > 0
    use_mask = mask.size > 0
    use_obs = obs.size > 0
    c = cp_pos
    for j in range(m):
        pj = j0 + j
        x = pts[j, 0]
        y = pts[j, 1] if dim == 2 else 0.0
        eval_point(fam, dim, pa, pb, ta, tb, x, y, bufa, bufb, g)
        while c < ncp and cps[c] == pj:
            for i in range(imax):
                cp_S[c, i] = S[i]
                cp_next[c, i] = g[i]
            cp_mask[c] = mask_count[0]
            cp_obs[c] = obs_sum[0]
            c += 1
        for i in range(imax):
            S[i] += g[i]
        if use_hist or use_mask:
            kx = int(np.floor(x * r0))
            kx = min(max(kx, 0), r0 - 1)
            b = kx
            if dim == 2:
                ky = int(np.floor(y * r1))
                ky = min(max(ky, 0), r1 - 1)
                b = kx * r1 + ky
            if use_hist:
                hist[b] += 1
            if use_mask and mask[b]:
                mask_count[0] += 1
        if use_obs:
            obs_sum[0] += obs[j]
    return c


@nb.njit(cache=True)
def distance_trace_chunk(
    pts, j0, fam, pa, pb, ta, tb, S, weights, ref_a, ref_b, out_a, out_b
):
    """Distances of mu_n (n = j0+j+1) to two reference moment vectors.

    out_a[j] = dist(mu_{j0+j+1}, ref_a), likewise for ref_b.
    """
    m = pts.shape[0]
    dim = pts.shape[1]
    imax = pa.size
    bufa = np.empty(ta + 1)
    bufb = np.empty(tb + 1)
    g = np.empty(imax)
    for j in range(m):
        x = pts[j, 0]
        y = pts[j, 1] if dim == 2 else 0.0
        eval_point(fam, dim, pa, pb, ta, tb, x, y, bufa, bufb, g)
        n = j0 + j + 1
        inv = 1.0 / n
        da = 0.0
        db = 0.0
        for i in range(imax):
            S[i] += g[i]
            v = S[i] * inv
            da += weights[i] * abs(v - ref_a[i])
            db += weights[i] * abs(v - ref_b[i])
        out_a[j] = da
        out_b[j] = db


@nb.njit(cache=True)
def moments_of_points(pts, fam, pa, pb, ta, tb):
    """Row-wise basis values, shape (m, imax)."""
    m = pts.shape[0]
    dim = pts.shape[1]
    imax = pa.size
    out = np.empty((m, imax))
    bufa = np.empty(ta + 1)
    bufb = np.empty(tb + 1)
    g = np.empty(imax)
    for j in range(m):
        y = pts[j, 1] if dim == 2 else 0.0
        eval_point(fam, dim, pa, pb, ta, tb, pts[j, 0], y, bufa, bufb, g)
        out[j, :] = g
    return out


def basis_args(basis):
    """Flat arguments describing a TestFunctionBasis to the compiled kernels."""
    fam = 0 if basis.family == "trig" else 1
    pairs = basis.pairs
    ta, tb = basis.top
    return (
        fam,
        np.ascontiguousarray(pairs[:, 0]),
        np.ascontiguousarray(pairs[:, 1]),
        int(ta),
        int(tb),
    )
