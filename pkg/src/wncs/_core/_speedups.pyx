# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: periodic kernel matrices and policy rollouts."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, M_PI, exp, fabs, sin

cnp.import_array()


def periodic_kernel_matrix(ta, tb, double h, double l, double s):
    """Pairwise periodic covariance h^2 * exp(-2/l^2 * sin^2(pi*(ta-tb)/s))."""
    cdef double[::1] a = np.ascontiguousarray(ta, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(tb, dtype=np.float64)
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], i, j
    cdef double scale = -2.0 / (l * l)
    cdef double h2 = h * h
    cdef double sv
    out_arr = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(na):
        for j in range(nb):
            sv = sin(M_PI * (a[i] - b[j]) / s)
            out[i, j] = h2 * exp(scale * sv * sv)
    return out_arr


def policy_rollout(A, B, Qc, Y, eta, bint tail_two_norm, Wm, sigma, lo, hi,
                   x0, plant_noise, action_noise, double stop_bound=INFINITY):
    """Roll a linear-Gaussian policy through the plant for up to H steps.

    Same contract as the pure backend: caller supplies the scaled plant
    noise (H, D) and the standard normals (H, N) behind the action draws;
    the rollout stops once any state coordinate exceeds stop_bound.
    """
    cdef double[:, ::1] Am = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] Bm = np.ascontiguousarray(B, dtype=np.float64)
    cdef double[:, ::1] Qm = np.ascontiguousarray(Qc, dtype=np.float64)
    cdef double[:, ::1] Ym = np.ascontiguousarray(Y, dtype=np.float64)
    cdef double[::1] etav = np.ascontiguousarray(eta, dtype=np.float64)
    cdef double[:, ::1] Wv = np.ascontiguousarray(Wm, dtype=np.float64)
    cdef double[::1] sig = np.ascontiguousarray(sigma, dtype=np.float64)
    cdef double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef double[:, ::1] wn = np.ascontiguousarray(plant_noise, dtype=np.float64)
    cdef double[:, ::1] an = np.ascontiguousarray(action_noise, dtype=np.float64)

    cdef Py_ssize_t H = wn.shape[0]
    cdef Py_ssize_t D = Am.shape[0]
    cdef Py_ssize_t N = Bm.shape[1]
    states_arr = np.empty((H, D), dtype=np.float64)
    raw_arr = np.empty((H, N), dtype=np.float64)
    acts_arr = np.empty((H, N), dtype=np.float64)
    rew_arr = np.empty(H, dtype=np.float64)
    cdef double[:, ::1] states = states_arr
    cdef double[:, ::1] raw = raw_arr
    cdef double[:, ::1] acts = acts_arr
    cdef double[::1] rew = rew_arr

    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double[::1] xn = np.empty(D, dtype=np.float64)
    cdef double[::1] u = np.empty(N, dtype=np.float64)
    cdef Py_ssize_t t, i, j
    cdef Py_ssize_t n_steps = H
    cdef double acc, r, ratio
    cdef bint outside, stopped

    for t in range(H):
        for i in range(N):
            acc = Wv[i, D]
            for j in range(D):
                acc += Wv[i, j] * x[j]
            acc += sig[i] * an[t, i]
            raw[t, i] = acc
            if acc < lov[i]:
                acc = lov[i]
            elif acc > hiv[i]:
                acc = hiv[i]
            u[i] = acc
            acts[t, i] = acc
        if tail_two_norm:
            acc = 0.0
            for i in range(D):
                ratio = x[i] / etav[i]
                acc += ratio * ratio
            outside = acc > 1.0
        else:
            outside = False
            for i in range(D):
                if fabs(x[i]) > etav[i]:
                    outside = True
                    break
        r = 0.0
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc += Ym[i, j] * u[j]
            r -= u[i] * acc
        if outside:
            for i in range(D):
                acc = 0.0
                for j in range(D):
                    acc += Qm[i, j] * x[j]
                r -= x[i] * acc
        rew[t] = r
        for i in range(D):
            states[t, i] = x[i]
        for i in range(D):
            acc = wn[t, i]
            for j in range(D):
                acc += Am[i, j] * x[j]
            for j in range(N):
                acc += Bm[i, j] * u[j]
            xn[i] = acc
        stopped = False
        for i in range(D):
            x[i] = xn[i]
            if fabs(xn[i]) > stop_bound:
                stopped = True
        if stopped:
            n_steps = t + 1
            break
    return states_arr, raw_arr, acts_arr, rew_arr, n_steps
