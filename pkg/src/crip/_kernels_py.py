"""NumPy implementations of the inner loops in ``_kernels.pyx``."""

import numpy as np


def reaction_update(p, u, gamma_sl, dt):
    k = u + gamma_sl
    live = k > 0
    kl = k[live]
    pl = p[live]
    pinf = u[live] / kl
    p[live] = pl - (pinf - pl) * np.expm1(-kl * dt)


def neg_laplacian_3d(p, active, dirichlet, out):
    act = active.astype(bool)
    pa = np.where(act, p, 0.0)
    acc = np.zeros_like(p)
    for axis in range(3):
        n = p.shape[axis]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        lo, hi = tuple(lo), tuple(hi)
        link = act[lo] & act[hi]
        diff = np.where(link, pa[lo] - pa[hi], 0.0)
        acc[lo] += diff
        acc[hi] -= diff
        first = [slice(None)] * 3
        last = [slice(None)] * 3
        first[axis] = 0
        last[axis] = n - 1
        if dirichlet[2 * axis]:
            acc[tuple(first)] += 2.0 * pa[tuple(first)]
        if dirichlet[2 * axis + 1]:
            acc[tuple(last)] += 2.0 * pa[tuple(last)]
    out[...] = np.where(act, acc, 0.0)


def _pair_weights(pos, w0):
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    return w0 / r2 ** 3


def pair_exchange(pos, p, w0, out):
    w = _pair_weights(pos, w0)
    out[:] = w @ p - w.sum(axis=1) * p


def pair_rate_rowsum(pos, w0, out):
    out[:] = _pair_weights(pos, w0).sum(axis=1)
