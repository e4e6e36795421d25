#cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernel.

Mirrors _engine_py.py draw for draw: one uint64 per uniform, Box-Muller
normals, Marsaglia-Tsang gammas, identical accumulation order. Any change
here must be replicated there (and vice versa) to preserve bit-identical
trajectories between the two engines.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t
from libc.math cimport sqrt, log, cos, pow

import numpy as np

cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 6.283185307179586

cdef int DET = 0
cdef int SBM = 1
cdef int DIR = 2
cdef int RS = 3


cdef inline double next_u(bitgen_t *rng) noexcept:
    return <double> (rng.next_uint64(rng.state) >> 11) * INV_2_53


cdef double gamma_draw(bitgen_t *rng, double alpha) noexcept:
    cdef double boost, d, c, u1, u2, x, t, v, u, xx
    if alpha <= 0.0:
        return 0.0
    boost = 1.0
    if alpha < 1.0:
        boost = pow(next_u(rng), 1.0 / alpha)
        alpha = alpha + 1.0
    d = alpha - 1.0 / 3.0
    c = 1.0 / sqrt(9.0 * d)
    while True:
        u1 = next_u(rng)
        u2 = next_u(rng)
        x = sqrt(-2.0 * log(1.0 - u1)) * cos(TWO_PI * u2)
        t = 1.0 + c * x
        if t <= 0.0:
            continue
        v = t * t * t
        u = next_u(rng)
        xx = x * x
        if u < 1.0 - 0.0331 * xx * xx:
            return boost * d * v
        if u <= 0.0:
            return boost * d * v
        if log(u) < 0.5 * xx + d * (1.0 - v + log(v)):
            return boost * d * v


cdef inline int pick_row(double *w, int k, double u) noexcept:
    cdef double cum = 0.0
    cdef int i
    for i in range(k):
        cum += w[i]
        if u < cum:
            return i
    return k - 1


cdef inline int pick_col(double[:, :, ::1] H, int j, int k, int i, double u) noexcept:
    cdef double cum = 0.0
    cdef int kk
    for kk in range(k):
        cum += H[j, kk, i]
        if u < cum:
            return kk
    return k - 1


def run_trajectory(double[:, ::1] y, double[::1] t, double[:, ::1] W,
                   int[::1] fam, double[:, :, ::1] H, double[::1] kappa,
                   long long n_steps, long long[::1] checkpoints, bitgen,
                   double[:, :, ::1] z_out, double[:, ::1] t_out):
    """Same contract as the pure-Python run_trajectory."""
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(bitgen.capsule, "BitGenerator")
    cdef int n = y.shape[0]
    cdef int k = y.shape[1]
    cdef int ncp = checkpoints.shape[0]
    cdef int ci = 0
    cdef long long step
    cdef int i, j, h, kk, f, color
    cdef double u, u2, u3, acc, tot, s, a, scale, kap, gv

    zbuf = np.empty((n, k), dtype=np.float64)
    ztbuf = np.empty((n, k), dtype=np.float64)
    gbuf = np.empty(k, dtype=np.float64)
    cdef double[:, ::1] z = zbuf
    cdef double[:, ::1] zt = ztbuf
    cdef double[::1] g = gbuf

    if ci < ncp and checkpoints[ci] == 0:
        for j in range(n):
            for kk in range(k):
                z_out[ci, j, kk] = y[j, kk] / t[j]
            t_out[ci, j] = t[j]
        ci += 1

    for step in range(1, n_steps + 1):
        for h in range(n):
            for i in range(k):
                z[h, i] = y[h, i] / t[h]
        for j in range(n):
            for i in range(k):
                acc = 0.0
                for h in range(n):
                    acc += W[j, h] * z[h, i]
                zt[j, i] = acc
        for j in range(n):
            u = next_u(rng)
            color = pick_row(&zt[j, 0], k, u)
            f = fam[j]
            if f == DET:
                tot = 0.0
                for kk in range(k):
                    a = H[j, kk, color]
                    y[j, kk] += a
                    tot += a
                t[j] += tot
            elif f == SBM:
                u2 = next_u(rng)
                kk = pick_col(H, j, k, color, u2)
                y[j, kk] += 1.0
                t[j] += 1.0
            elif f == DIR:
                kap = kappa[j]
                tot = 0.0
                for kk in range(k):
                    gv = gamma_draw(rng, kap * H[j, kk, color])
                    g[kk] = gv
                    tot += gv
                s = 0.0
                for kk in range(k):
                    a = g[kk] / tot
                    y[j, kk] += a
                    s += a
                t[j] += s
            else:
                u2 = next_u(rng)
                scale = 0.0 if u2 < 0.5 else 2.0
                u3 = next_u(rng)
                kk = pick_col(H, j, k, color, u3)
                y[j, kk] += scale
                t[j] += scale
            if t[j] <= 0.0:
                from interurn.errors import NumericUnderflow
                raise NumericUnderflow(f"urn {j} total became nonpositive")
        if ci < ncp and step == checkpoints[ci]:
            for j in range(n):
                for kk in range(k):
                    z_out[ci, j, kk] = y[j, kk] / t[j]
                t_out[ci, j] = t[j]
            ci += 1
