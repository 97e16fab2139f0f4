"""Hot numeric kernels.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
version.  Both must return identical results; the numpy path is used when
numba is missing or when ``IVREGIME_DISABLE_NUMBA=1`` is set in the
environment before import.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("IVREGIME_DISABLE_NUMBA", "0") not in ("1", "true", "yes")

FEAS_TOL = 1e-12


# --------------------------------------------------------------------------
# LP vertex evaluation
# --------------------------------------------------------------------------


def vertex_range_numpy(inv_bases, basis_cols, b, c):
    """Min and max of ``c @ x`` over the feasible basic solutions.

    ``inv_bases`` has shape (K, m, m), ``basis_cols`` (K, m).  Returns
    ``(lo, hi, n_feasible)``; lo/hi are nan when nothing is feasible.
    """
    xb = inv_bases @ b
    feasible = np.all(xb >= -FEAS_TOL, axis=1)
    n_feas = int(feasible.sum())
    if n_feas == 0:
        return np.nan, np.nan, 0
    obj = np.einsum("km,km->k", c[basis_cols], xb)[feasible]
    return float(obj.min()), float(obj.max()), n_feas


def _vertex_range_loop(inv_bases, basis_cols, b, c):
    k_count, m = basis_cols.shape
    lo = np.inf
    hi = -np.inf
    n_feas = 0
    xb = np.empty(m)
    for k in range(k_count):
        ok = True
        for i in range(m):
            s = 0.0
            for j in range(m):
                s += inv_bases[k, i, j] * b[j]
            if s < -FEAS_TOL:
                ok = False
                break
            xb[i] = s
        if not ok:
            continue
        n_feas += 1
        val = 0.0
        for i in range(m):
            val += c[basis_cols[k, i]] * xb[i]
        if val < lo:
            lo = val
        if val > hi:
            hi = val
    if n_feas == 0:
        return np.nan, np.nan, 0
    return lo, hi, n_feas


# --------------------------------------------------------------------------
# Row sampling: uniforms -> (l, u, z, a, y)
# --------------------------------------------------------------------------


def _pick(cum, r):
    # first index whose cumulative probability exceeds r
    idx = np.searchsorted(cum, r, side="right")
    return np.minimum(idx, cum.shape[-1] - 1)


def draw_rows_numpy(unif, normals, strata_cum, latent_cum, p_z, p_a_z1, p_a_zm1,
                    is_bern, par1, parm1, noise_sd):
    """Map iid uniforms to observed rows.

    ``unif`` has shape (n, 5): columns drive L, U, Z, A, Y in that order;
    ``normals`` (n,) supplies the Gaussian noise for mean-mode outcomes.
    """
    l = _pick(strata_cum, unif[:, 0])
    # last real class has cumulative exactly 1.0, padding carries 2.0
    u = (latent_cum[l] <= unif[:, 1:2]).sum(axis=1)
    z = np.where(unif[:, 2] < p_z[l], 1, -1).astype(np.int8)
    pa = np.where(z == 1, p_a_z1[l, u], p_a_zm1[l, u])
    a = np.where(unif[:, 3] < pa, 1, -1).astype(np.int8)
    arm1 = a == 1
    par = np.where(arm1, par1[l, u], parm1[l, u])
    bern = is_bern[l, u]
    y_bern = (unif[:, 4] < par).astype(np.float64)
    y_mean = par + noise_sd[l, u] * normals
    y = np.where(bern, y_bern, y_mean)
    return y, l.astype(np.int64), u.astype(np.int64), z, a


def _draw_rows_loop(unif, normals, strata_cum, latent_cum, p_z, p_a_z1, p_a_zm1,
                    is_bern, par1, parm1, noise_sd):
    n = unif.shape[0]
    n_strata = strata_cum.shape[0]
    k_max = latent_cum.shape[1]
    y = np.empty(n)
    l_out = np.empty(n, dtype=np.int64)
    u_out = np.empty(n, dtype=np.int64)
    z_out = np.empty(n, dtype=np.int8)
    a_out = np.empty(n, dtype=np.int8)
    for i in range(n):
        r = unif[i, 0]
        l = n_strata - 1
        for s in range(n_strata):
            if strata_cum[s] > r:
                l = s
                break
        r = unif[i, 1]
        u = 0
        for k in range(k_max):
            if latent_cum[l, k] <= r:
                u += 1
        z = 1 if unif[i, 2] < p_z[l] else -1
        pa = p_a_z1[l, u] if z == 1 else p_a_zm1[l, u]
        a = 1 if unif[i, 3] < pa else -1
        par = par1[l, u] if a == 1 else parm1[l, u]
        if is_bern[l, u]:
            y[i] = 1.0 if unif[i, 4] < par else 0.0
        else:
            y[i] = par + noise_sd[l, u] * normals[i]
        l_out[i] = l
        u_out[i] = u
        z_out[i] = z
        a_out[i] = a
    return y, l_out, u_out, z_out, a_out


# --------------------------------------------------------------------------
# Stratified moments
# --------------------------------------------------------------------------
# Accumulator shape (n_strata, 4, 3): axis 1 is the joint cell
# 2*(z == -1) + (a == -1), axis 2 holds (count, sum y, sum y^2).


def moments_numpy(y, l, z, a, n_strata):
    out = np.zeros((n_strata, 4, 3))
    cell = 2 * (z == -1).astype(np.int64) + (a == -1).astype(np.int64)
    flat = l * 4 + cell
    size = n_strata * 4
    out[:, :, 0] = np.bincount(flat, minlength=size).reshape(n_strata, 4)
    out[:, :, 1] = np.bincount(flat, weights=y, minlength=size).reshape(n_strata, 4)
    out[:, :, 2] = np.bincount(flat, weights=y * y, minlength=size).reshape(n_strata, 4)
    return out


def _moments_loop(y, l, z, a, n_strata):
    out = np.zeros((n_strata, 4, 3))
    for i in range(y.shape[0]):
        cell = 0
        if z[i] == -1:
            cell += 2
        if a[i] == -1:
            cell += 1
        yi = y[i]
        out[l[i], cell, 0] += 1.0
        out[l[i], cell, 1] += yi
        out[l[i], cell, 2] += yi * yi
    return out


if HAS_NUMBA:
    vertex_range_numba = numba.njit(cache=True, nogil=True)(_vertex_range_loop)
    draw_rows_numba = numba.njit(cache=True, nogil=True)(_draw_rows_loop)
    moments_numba = numba.njit(cache=True, nogil=True)(_moments_loop)
else:  # pragma: no cover
    vertex_range_numba = draw_rows_numba = moments_numba = None


def vertex_range(inv_bases, basis_cols, b, c):
    if USE_NUMBA:
        lo, hi, n = vertex_range_numba(inv_bases, basis_cols, b, c)
        return float(lo), float(hi), int(n)
    return vertex_range_numpy(inv_bases, basis_cols, b, c)


def draw_rows(*args):
    if USE_NUMBA:
        return draw_rows_numba(*args)
    return draw_rows_numpy(*args)


def moments(y, l, z, a, n_strata):
    if USE_NUMBA:
        return moments_numba(y, l, z, a, n_strata)
    return moments_numpy(y, l, z, a, n_strata)
