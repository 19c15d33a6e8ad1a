# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the two O(pairs) inner loops."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp

cnp.import_array()


def kiti_collide(double[:, ::1] X, double[:, ::1] V, double[:, :, ::1] dirs,
                 double coll_coef, double dt, bint update_positions,
                 double nondiff_eps):
    """Fused collision step over all unordered pairs.

    Returns (x_out, v_out, accepted[uint8], delta_v, counts, v_r_max, nondiff).
    """
    cdef Py_ssize_t N = X.shape[0], nd = X.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double s, t, vr, xr, vrmax = 0.0, thresh = 1.0 - coll_coef
    cdef bint nondiff = False

    x_out_a = np.empty((N, nd))
    v_out_a = np.empty((N, nd))
    acc_a = np.zeros((N, N), dtype=np.uint8)
    dv_a = np.zeros((N, N, nd))
    counts_a = np.zeros(N, dtype=np.int64)
    vr_a = np.zeros((N, N))
    cdef double[:, ::1] x_out = x_out_a
    cdef double[:, ::1] v_out = v_out_a
    cdef unsigned char[:, ::1] acc = acc_a
    cdef double[:, :, ::1] dv = dv_a
    cdef long long[::1] counts = counts_a
    cdef double[:, ::1] vrm = vr_a
    cdef double[:, ::1] xsum = np.zeros((N, nd))
    cdef double[:, ::1] vsum = np.zeros((N, nd))

    for i in range(N):
        for j in range(i + 1, N):
            s = 0.0
            for d in range(nd):
                t = V[i, d] - V[j, d]
                s += t * t
            vr = sqrt(s)
            vrm[i, j] = vr
            vrm[j, i] = vr
            if vr > vrmax:
                vrmax = vr

    for i in range(N):
        for j in range(i + 1, N):
            vr = vrm[i, j]
            for d in range(nd):
                t = 0.5 * (V[i, d] + V[j, d])
                dv[i, j, d] = t + 0.5 * vr * dirs[i, j, d] - V[i, d]
                dv[j, i, d] = t + 0.5 * vr * dirs[j, i, d] - V[j, d]
            if vrmax == 0.0:
                continue
            s = 0.0
            for d in range(nd):
                t = X[i, d] - X[j, d]
                s += t * t
            xr = sqrt(s)
            if (vr * exp(-xr)) / vrmax > thresh:
                acc[i, j] = 1
                acc[j, i] = 1
                counts[i] += 1
                counts[j] += 1
                if vr < nondiff_eps:
                    nondiff = True
                for d in range(nd):
                    vsum[i, d] += dv[i, j, d]
                    vsum[j, d] += dv[j, i, d]
                    t = 0.5 * (X[i, d] + X[j, d])
                    xsum[i, d] += t
                    xsum[j, d] += t

    for i in range(N):
        for d in range(nd):
            if counts[i] > 0:
                v_out[i, d] = V[i, d] + vsum[i, d]
                if update_positions:
                    t = (X[i, d] + xsum[i, d]) / (1.0 + counts[i])
                else:
                    t = X[i, d]
            else:
                v_out[i, d] = V[i, d]
                t = X[i, d]
            x_out[i, d] = t + dt * v_out[i, d]

    return x_out_a, v_out_a, acc_a, dv_a, counts_a, vrmax, nondiff


def dsmc_collide(double[:, ::1] vel, long long[::1] order, long long[::1] cell_start,
                 long long[::1] cell_count, long long[::1] cand_start,
                 long long[::1] m_cand, double[:, ::1] uniforms,
                 double[:, ::1] unit_dirs, double[::1] vr_max):
    """No-time-counter candidate loop over all cells; updates vel, vr_max in place."""
    cdef Py_ssize_t n_cells = cell_start.shape[0], dim = vel.shape[1]
    cdef Py_ssize_t cell, c, d, n, m, first, base, a, b, i, j
    cdef double s, diff, vr, vmax, half, cm, step
    cdef long long hits
    acc_a = np.zeros(n_cells, dtype=np.int64)
    cdef long long[::1] accepted = acc_a

    for cell in range(n_cells):
        n = cell_count[cell]
        m = m_cand[cell]
        if n < 2 or m == 0:
            continue
        first = cell_start[cell]
        base = cand_start[cell]
        vmax = vr_max[cell]
        hits = 0
        for c in range(base, base + m):
            a = <Py_ssize_t>(uniforms[c, 0] * n)
            if a >= n:
                a = n - 1
            b = <Py_ssize_t>(uniforms[c, 1] * (n - 1))
            if b >= n - 1:
                b = n - 2
            if b >= a:
                b += 1
            i = order[first + a]
            j = order[first + b]
            s = 0.0
            for d in range(dim):
                diff = vel[i, d] - vel[j, d]
                s += diff * diff
            vr = sqrt(s)
            if vr > vmax:
                vmax = vr
            if vmax == 0.0 or not (vr / vmax > uniforms[c, 2]):
                continue
            half = 0.5 * vr
            for d in range(dim):
                cm = 0.5 * (vel[i, d] + vel[j, d])
                step = half * unit_dirs[c, d]
                vel[i, d] = cm + step
                vel[j, d] = cm - step
            hits += 1
        vr_max[cell] = vmax
        accepted[cell] = hits
    return acc_a
