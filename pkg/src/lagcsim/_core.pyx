# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation loop: one fused C implementation of the per-iteration
protocol (selection, batch gradients, F-fastest uploads, decode, step, loss).

Mirrors engine.run_iteration exactly: same selection rule, same summation
order for the gradient estimate, and the same RNG consumption (one call to
the Python ``sampler`` per iteration with selected groups). Small dense
linear algebra goes through the BLAS bound into scipy.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite
from scipy.linalg.cython_blas cimport ddot, dgemv

cnp.import_array()


cdef inline void _residual(double* xb, double* yb, double* theta, double* resid,
                           int n, int d) noexcept nogil:
    # resid = Xb @ theta - yb for a row-major (n, d) block
    cdef int inc = 1, m_ = d, n_ = n, lda = d, l
    cdef double one = 1.0
    cdef char trans = b'T'
    for l in range(n):
        resid[l] = -yb[l]
    dgemv(&trans, &m_, &n_, &one, xb, &lda, theta, &inc, &one, resid, &inc)


cdef inline void _xt_times(double* xb, double* v, double* out, int n, int d,
                           double scale) noexcept nogil:
    # out = scale * Xb^T @ v
    cdef int inc = 1, m_ = d, n_ = n, lda = d
    cdef double zero = 0.0
    cdef char trans = b'N'
    dgemv(&trans, &m_, &n_, &scale, xb, &lda, v, &inc, &zero, out, &inc)


def run_loop(double[:, :, ::1] x, double[:, ::1] y, double[::1] theta0,
             double[::1] group_l, double[:, ::1] b_matrix, long[:, ::1] support,
             double[:, ::1] decode_tbl, int m_g, int f_wait, double alpha,
             double thr_coef, int window, double epsilon, double div_limit,
             long max_iters, object sampler, bint record_vectors):
    cdef int m_total = x.shape[0]
    cdef int n = x.shape[1]
    cdef int d = x.shape[2]
    cdef int g_count = m_total // m_g
    cdef int r_g = support.shape[1]
    cdef long it, g, n_sel, t0, rank, b_idx
    cdef int k, j, p, q, best, hist_n = 0, hist_start = 0, status = 1
    cdef long n_done = max_iters
    cdef int inc = 1
    cdef double rhs, hist_sum, lhs, diff, duration, dur_g, step2, gap, w

    theta_arr = np.array(theta0, dtype=np.float64)
    cdef double[::1] theta = theta_arr
    cdef double[::1] theta_new = np.empty(d)
    cdef double[:, ::1] stale = np.tile(theta_arr, (g_count, 1))
    cdef double[:, ::1] cache = np.zeros((g_count, d))
    cdef cnp.uint8_t[::1] has_cache = np.zeros(g_count, dtype=np.uint8)
    cdef double[:, ::1] fresh = np.zeros((g_count, d))
    cdef double[:, ::1] grads = np.empty((m_g, d))
    cdef double[:, ::1] encoded = np.empty((f_wait, d))
    cdef double[::1] ghat = np.empty(d)
    cdef double[::1] resid = np.empty(n)
    cdef double[::1] ring = np.zeros(window)
    cdef long[::1] sel = np.empty(g_count, dtype=np.int64)
    cdef long[::1] order = np.empty(m_g, dtype=np.int64)
    cdef long[::1] subset = np.empty(f_wait, dtype=np.int64)

    # Binomial table for colex ranking of upload subsets.
    binom_arr = np.zeros((m_g + 1, f_wait + 2), dtype=np.int64)
    binom_arr[:, 0] = 1
    for i_ in range(1, m_g + 1):
        for j_ in range(1, min(i_, f_wait + 1) + 1):
            binom_arr[i_, j_] = binom_arr[i_ - 1, j_ - 1] + binom_arr[i_ - 1, j_]
    cdef long[:, ::1] binom = binom_arr

    out_dur = np.zeros(max_iters)
    out_md = np.zeros(max_iters, dtype=np.int64)
    out_mu = np.zeros(max_iters, dtype=np.int64)
    out_gap = np.zeros(max_iters)
    out_sel = np.zeros((max_iters, g_count), dtype=np.uint8)
    cdef double[::1] dur_v = out_dur
    cdef long[::1] md_v = out_md
    cdef long[::1] mu_v = out_mu
    cdef double[::1] gap_v = out_gap
    cdef cnp.uint8_t[:, ::1] sel_v = out_sel

    if record_vectors:
        thetas_arr = np.zeros((max_iters + 1, d))
        ests_arr = np.zeros((max_iters, d))
    else:
        thetas_arr = np.zeros((1, d))
        ests_arr = np.zeros((1, d))
    cdef double[:, ::1] thetas_v = thetas_arr
    cdef double[:, ::1] ests_v = ests_arr
    if record_vectors:
        for k in range(d):
            thetas_v[0, k] = theta[k]

    cdef double[::1] times

    for it in range(max_iters):
        # Selection condition: L_g^2 ||stale_g - theta||^2 >= coef * sum(history)
        rhs = 0.0
        if thr_coef != 0.0 and hist_n > 0:
            hist_sum = 0.0
            for k in range(hist_n):
                hist_sum += ring[(hist_start + k) % window]
            rhs = thr_coef * hist_sum
        n_sel = 0
        for g in range(g_count):
            lhs = 0.0
            for k in range(d):
                diff = stale[g, k] - theta[k]
                lhs += diff * diff
            lhs *= group_l[g] * group_l[g]
            if lhs >= rhs:
                sel[n_sel] = g
                sel_v[it, g] = 1
                n_sel += 1

        duration = 0.0
        if n_sel > 0:
            times = sampler(n_sel * m_g)
            for k in range(n_sel):
                g = sel[k]
                t0 = k * m_g
                # All stored batch gradients of the group at the current iterate.
                for j in range(m_g):
                    b_idx = g * m_g + j
                    _residual(&x[b_idx, 0, 0], &y[b_idx, 0], &theta[0], &resid[0], n, d)
                    _xt_times(&x[b_idx, 0, 0], &resid[0], &grads[j, 0], n, d, 2.0)
                # Indices of the F fastest workers in the group.
                for j in range(m_g):
                    order[j] = j
                for p in range(f_wait):
                    best = p
                    for q in range(p + 1, m_g):
                        if times[t0 + order[q]] < times[t0 + order[best]]:
                            best = q
                    order[p], order[best] = order[best], order[p]
                dur_g = times[t0 + order[f_wait - 1]]
                if dur_g > duration:
                    duration = dur_g
                for p in range(f_wait):
                    subset[p] = order[p]
                for p in range(1, f_wait):        # sort subset ascending
                    q = p
                    while q > 0 and subset[q] < subset[q - 1]:
                        subset[q], subset[q - 1] = subset[q - 1], subset[q]
                        q -= 1
                # Encode at each uploading worker, then combine (decode).
                rank = 0
                for p in range(f_wait):
                    rank += binom[subset[p], p + 1]
                for p in range(f_wait):
                    for j in range(d):
                        encoded[p, j] = 0.0
                    for q in range(r_g):
                        b_idx = support[subset[p], q]
                        w = b_matrix[subset[p], b_idx]
                        for j in range(d):
                            encoded[p, j] += w * grads[b_idx, j]
                for j in range(d):
                    fresh[g, j] = 0.0
                for p in range(f_wait):
                    w = decode_tbl[rank, p]
                    for j in range(d):
                        fresh[g, j] += w * encoded[p, j]

        # Gradient estimate: fresh recoveries first, stale caches after.
        for j in range(d):
            ghat[j] = 0.0
        for k in range(n_sel):
            g = sel[k]
            for j in range(d):
                ghat[j] += fresh[g, j]
        for g in range(g_count):
            if not sel_v[it, g]:
                if not has_cache[g]:
                    status = 3
                    n_done = it
                    break
                for j in range(d):
                    ghat[j] += cache[g, j]
        if status == 3:
            break

        step2 = 0.0
        for j in range(d):
            theta_new[j] = theta[j] - alpha * ghat[j]
            diff = theta_new[j] - theta[j]
            step2 += diff * diff

        for k in range(n_sel):
            g = sel[k]
            for j in range(d):
                stale[g, j] = theta[j]
                cache[g, j] = fresh[g, j]
            has_cache[g] = 1

        if hist_n < window:
            ring[(hist_start + hist_n) % window] = step2
            hist_n += 1
        else:
            ring[hist_start] = step2
            hist_start = (hist_start + 1) % window

        for j in range(d):
            theta[j] = theta_new[j]

        gap = 0.0
        for b_idx in range(m_total):
            _residual(&x[b_idx, 0, 0], &y[b_idx, 0], &theta[0], &resid[0], n, d)
            gap += ddot(&n, &resid[0], &inc, &resid[0], &inc)

        dur_v[it] = duration
        md_v[it] = n_sel * m_g
        mu_v[it] = n_sel * f_wait
        gap_v[it] = gap
        if record_vectors:
            for j in range(d):
                thetas_v[it + 1, j] = theta[j]
                ests_v[it, j] = ghat[j]

        if not isfinite(gap) or gap > div_limit:
            status = 2
            n_done = it + 1
            break
        if gap <= epsilon:
            status = 0
            n_done = it + 1
            break

    cdef long done = n_done if n_done < max_iters else max_iters
    result_thetas = thetas_arr[:done + 1].copy() if record_vectors else None
    result_ests = ests_arr[:done].copy() if record_vectors else None
    return (status, out_dur[:done].copy(), out_md[:done].copy(), out_mu[:done].copy(),
            out_gap[:done].copy(), out_sel[:done].copy(), result_thetas, result_ests)
