# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels, same contract as _pykernels (see its docstring):
deterministic and chunking-independent, shared term grouping and RK4 update
expression, no exp() evaluated here. Within-segment sums are sequential,
so results match the numpy backend to a few ulp rather than bitwise."""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()

BACKEND = "cython"


cdef void _drift_row(const double* x, const long long* i1, const long long* i2,
                     const double* w, const long long* seg_bounds,
                     const long long* seg_slots, Py_ssize_t nseg,
                     double* b, Py_ssize_t nslots) noexcept nogil:
    cdef Py_ssize_t s, t
    cdef double acc
    for s in range(nslots):
        b[s] = 0.0
    for s in range(nseg):
        acc = 0.0
        for t in range(seg_bounds[s], seg_bounds[s + 1]):
            acc = acc + (x[i1[t]] * x[i2[t]]) * w[t]
        b[seg_slots[s]] = acc


def drift_batch(cnp.ndarray[double, ndim=2] X,
                cnp.ndarray[long long, ndim=1] i1,
                cnp.ndarray[long long, ndim=1] i2,
                cnp.ndarray[double, ndim=1] w,
                cnp.ndarray[long long, ndim=1] seg_bounds,
                cnp.ndarray[long long, ndim=1] seg_slots,
                Py_ssize_t nslots):
    cdef Py_ssize_t M = X.shape[0]
    cdef Py_ssize_t nseg = seg_slots.shape[0]
    cdef cnp.ndarray[double, ndim=2] B = np.zeros((M, nslots))
    cdef Py_ssize_t m
    cdef double[:, ::1] Xv = np.ascontiguousarray(X)
    cdef double[:, ::1] Bv = B
    cdef const long long[::1] i1v = i1, i2v = i2, sbv = seg_bounds, ssv = seg_slots
    cdef const double[::1] wv = w
    with nogil:
        for m in range(M):
            _drift_row(&Xv[m, 0], &i1v[0], &i2v[0], &wv[0], &sbv[0], &ssv[0],
                       nseg, &Bv[m, 0], nslots)
    return B


def rk4_batch(cnp.ndarray[double, ndim=2] X0, double dt,
              cnp.ndarray[long long, ndim=1] i1,
              cnp.ndarray[long long, ndim=1] i2,
              cnp.ndarray[long long, ndim=1] seg_bounds,
              cnp.ndarray[long long, ndim=1] seg_slots,
              cnp.ndarray[double, ndim=2] w_stages,
              cnp.ndarray[long long, ndim=1] snap_steps):
    cdef Py_ssize_t nsteps = (w_stages.shape[0] - 1) // 2
    cdef Py_ssize_t M = X0.shape[0]
    cdef Py_ssize_t C = X0.shape[1] - 1
    cdef Py_ssize_t nseg = seg_slots.shape[0]
    cdef Py_ssize_t nsnap = snap_steps.shape[0]
    cdef cnp.ndarray[double, ndim=3] snaps = np.empty((nsnap, M, C))
    cdef double[:, :, ::1] snapv = snaps
    cdef double[:, ::1] Y = np.ascontiguousarray(X0).copy()
    cdef double[:, ::1] Wv = np.ascontiguousarray(w_stages)
    cdef const long long[::1] i1v = i1, i2v = i2, sbv = seg_bounds, ssv = seg_slots
    cdef const long long[::1] snv = snap_steps
    cdef cnp.ndarray scratch = np.empty((5, C + 1))
    cdef double[:, ::1] sv = scratch
    cdef double half = -0.5 * dt
    cdef double full = -dt
    cdef double sixth = -dt / 6.0
    cdef Py_ssize_t m, step, c, j
    cdef double acc
    cdef int bad = 0
    cdef Py_ssize_t bad_step = 0

    for j in range(nsnap):
        if snv[j] == 0:
            for m in range(M):
                for c in range(C):
                    snapv[j, m, c] = Y[m, c]

    with nogil:
        for m in range(M):
            if bad:
                break
            sv[4, C] = 1.0
            for step in range(nsteps):
                # b1..b4 in scratch rows 0..3; row 4 is the stage state
                _drift_row(&Y[m, 0], &i1v[0], &i2v[0], &Wv[2 * step, 0],
                           &sbv[0], &ssv[0], nseg, &sv[0, 0], C)
                for c in range(C):
                    sv[4, c] = Y[m, c] + half * sv[0, c]
                _drift_row(&sv[4, 0], &i1v[0], &i2v[0], &Wv[2 * step + 1, 0],
                           &sbv[0], &ssv[0], nseg, &sv[1, 0], C)
                for c in range(C):
                    sv[4, c] = Y[m, c] + half * sv[1, c]
                _drift_row(&sv[4, 0], &i1v[0], &i2v[0], &Wv[2 * step + 1, 0],
                           &sbv[0], &ssv[0], nseg, &sv[2, 0], C)
                for c in range(C):
                    sv[4, c] = Y[m, c] + full * sv[2, c]
                _drift_row(&sv[4, 0], &i1v[0], &i2v[0], &Wv[2 * step + 2, 0],
                           &sbv[0], &ssv[0], nseg, &sv[3, 0], C)
                for c in range(C):
                    acc = sv[0, c] + 2.0 * sv[1, c]
                    acc = acc + 2.0 * sv[2, c]
                    acc = acc + sv[3, c]
                    Y[m, c] = Y[m, c] + sixth * acc
                    if not isfinite(Y[m, c]):
                        bad = 1
                        bad_step = step + 1
                if bad:
                    break
                for j in range(nsnap):
                    if snv[j] == step + 1:
                        for c in range(C):
                            snapv[j, m, c] = Y[m, c]
    if bad:
        raise FloatingPointError(f"non-finite state at step {bad_step}")
    return snaps
