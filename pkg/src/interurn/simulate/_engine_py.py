"""Pure-Python stepping kernel.

Consumes 64-bit outputs of a numpy BitGenerator through random_raw() and maps
them to draws with exactly the arithmetic of the compiled kernel (one uint64
per uniform, Box-Muller normals, Marsaglia-Tsang gammas), so trajectories are
bit-identical across the two engines. Keep every expression in sync with
_kernel.pyx; the compiled module is built with FP contraction disabled for
the same reason.
"""

from math import cos, log, sqrt

from ..errors import NumericUnderflow

INV_2_53 = 1.0 / 9007199254740992.0
TWO_PI = 6.283185307179586

DET = 0
SBM = 1
DIR = 2
RS = 3


def _gamma_draw(alpha, uniform):
    if alpha <= 0.0:
        return 0.0
    boost = 1.0
    if alpha < 1.0:
        boost = uniform() ** (1.0 / alpha)
        alpha = alpha + 1.0
    d = alpha - 1.0 / 3.0
    c = 1.0 / sqrt(9.0 * d)
    while True:
        u1 = uniform()
        u2 = uniform()
        x = sqrt(-2.0 * log(1.0 - u1)) * cos(TWO_PI * u2)
        t = 1.0 + c * x
        if t <= 0.0:
            continue
        v = t * t * t
        u = uniform()
        xx = x * x
        if u < 1.0 - 0.0331 * xx * xx:
            return boost * d * v
        if u <= 0.0:
            return boost * d * v
        if log(u) < 0.5 * xx + d * (1.0 - v + log(v)):
            return boost * d * v


def _pick(weights, k, u):
    cum = 0.0
    for i in range(k):
        cum += weights[i]
        if u < cum:
            return i
    return k - 1


def _advance(y, t, z, zt, W, fam, H, kappa, n, k, uniform):
    """One synchronous step over all urns, mutating y and t in place."""
    for h in range(n):
        yh = y[h]
        th = t[h]
        zh = z[h]
        for i in range(k):
            zh[i] = yh[i] / th
    for j in range(n):
        wj = W[j]
        ztj = zt[j]
        for i in range(k):
            acc = 0.0
            for h in range(n):
                acc += wj[h] * z[h][i]
            ztj[i] = acc
    for j in range(n):
        u = uniform()
        i = _pick(zt[j], k, u)
        yj = y[j]
        f = fam[j]
        if f == DET:
            hj = H[j]
            tot = 0.0
            for kk in range(k):
                a = hj[kk][i]
                yj[kk] += a
                tot += a
            t[j] += tot
        elif f == SBM:
            u2 = uniform()
            kk = _pick_col(H[j], k, i, u2)
            yj[kk] += 1.0
            t[j] += 1.0
        elif f == DIR:
            hj = H[j]
            kap = kappa[j]
            g = [0.0] * k
            tot = 0.0
            for kk in range(k):
                gv = _gamma_draw(kap * hj[kk][i], uniform)
                g[kk] = gv
                tot += gv
            s = 0.0
            for kk in range(k):
                a = g[kk] / tot
                yj[kk] += a
                s += a
            t[j] += s
        else:  # RS
            u2 = uniform()
            scale = 0.0 if u2 < 0.5 else 2.0
            u3 = uniform()
            kk = _pick_col(H[j], k, i, u3)
            yj[kk] += scale
            t[j] += scale
        if t[j] <= 0.0:
            raise NumericUnderflow(f"urn {j} total became nonpositive")


def _pick_col(hj, k, i, u):
    cum = 0.0
    for kk in range(k):
        cum += hj[kk][i]
        if u < cum:
            return kk
    return k - 1


def run_trajectory(y, t, W, fam, H, kappa, n_steps, checkpoints, bitgen, z_out, t_out):
    """Fill z_out/t_out with snapshots at the requested steps.

    Arguments are numpy arrays shaped like the compiled kernel expects:
    y (N,K), t (N,), W (N,N), fam (N,) int32 codes, H (N,K,K), kappa (N,),
    checkpoints int64 sorted, z_out (C,N,K), t_out (C,N).
    """
    n, k = y.shape
    raw = bitgen.random_raw

    def uniform():
        return (raw() >> 11) * INV_2_53

    yl = [[float(y[j, kk]) for kk in range(k)] for j in range(n)]
    tl = [float(t[j]) for j in range(n)]
    Wl = [[float(W[j, h]) for h in range(n)] for j in range(n)]
    Hl = [[[float(H[j, kk, i]) for i in range(k)] for kk in range(k)] for j in range(n)]
    kap = [float(kappa[j]) for j in range(n)]
    fams = [int(fam[j]) for j in range(n)]
    z = [[0.0] * k for _ in range(n)]
    zt = [[0.0] * k for _ in range(n)]

    ncp = len(checkpoints)
    ci = 0
    if ci < ncp and checkpoints[ci] == 0:
        _record(yl, tl, n, k, z_out, t_out, ci)
        ci += 1
    for step in range(1, int(n_steps) + 1):
        _advance(yl, tl, z, zt, Wl, fams, Hl, kap, n, k, uniform)
        if ci < ncp and step == checkpoints[ci]:
            _record(yl, tl, n, k, z_out, t_out, ci)
            ci += 1


def _record(yl, tl, n, k, z_out, t_out, ci):
    for j in range(n):
        tj = tl[j]
        for kk in range(k):
            z_out[ci, j, kk] = yl[j][kk] / tj
        t_out[ci, j] = tj


def step_arrays(y, t, W, fam, H, kappa, bitgen):
    """Single synchronous step on (N,K)/(N,) arrays; returns updated copies."""
    n, k = y.shape
    raw = bitgen.random_raw

    def uniform():
        return (raw() >> 11) * INV_2_53

    yl = [[float(y[j, kk]) for kk in range(k)] for j in range(n)]
    tl = [float(t[j]) for j in range(n)]
    Wl = [[float(W[j, h]) for h in range(n)] for j in range(n)]
    Hl = [[[float(H[j, kk, i]) for i in range(k)] for kk in range(k)] for j in range(n)]
    kap = [float(kappa[j]) for j in range(n)]
    fams = [int(fam[j]) for j in range(n)]
    z = [[0.0] * k for _ in range(n)]
    zt = [[0.0] * k for _ in range(n)]
    _advance(yl, tl, z, zt, Wl, fams, Hl, kap, n, k, uniform)
    import numpy as np

    return np.array(yl), np.array(tl)
