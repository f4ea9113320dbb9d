# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.  Semantics must match ``_kernels_py`` exactly."""

from libc.math cimport expm1, sqrt


def reaction_update(double[::1] p, const double[::1] u, double gamma_sl, double dt):
    """In place: exact solution of dP/dt = u (1 - P) - gamma_sl P over dt."""
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double k, pinf
    with nogil:
        for i in range(n):
            k = u[i] + gamma_sl
            if k > 0.0:
                pinf = u[i] / k
                p[i] = p[i] - (pinf - p[i]) * expm1(-k * dt)


def neg_laplacian_3d(const double[:, :, ::1] p, const unsigned char[:, :, ::1] active,
                     const int[::1] dirichlet, double[:, :, ::1] out):
    """out = sum over faces of (P_c - P_nb); masked neighbours are zero flux,
    Dirichlet box faces (P = 0 on the face) count twice.  Inactive cells get 0."""
    cdef Py_ssize_t nx = p.shape[0], ny = p.shape[1], nz = p.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double c, acc
    with nogil:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if not active[i, j, k]:
                        out[i, j, k] = 0.0
                        continue
                    c = p[i, j, k]
                    acc = 0.0
                    if i > 0:
                        if active[i - 1, j, k]:
                            acc += c - p[i - 1, j, k]
                    elif dirichlet[0]:
                        acc += 2.0 * c
                    if i < nx - 1:
                        if active[i + 1, j, k]:
                            acc += c - p[i + 1, j, k]
                    elif dirichlet[1]:
                        acc += 2.0 * c
                    if j > 0:
                        if active[i, j - 1, k]:
                            acc += c - p[i, j - 1, k]
                    elif dirichlet[2]:
                        acc += 2.0 * c
                    if j < ny - 1:
                        if active[i, j + 1, k]:
                            acc += c - p[i, j + 1, k]
                    elif dirichlet[3]:
                        acc += 2.0 * c
                    if k > 0:
                        if active[i, j, k - 1]:
                            acc += c - p[i, j, k - 1]
                    elif dirichlet[4]:
                        acc += 2.0 * c
                    if k < nz - 1:
                        if active[i, j, k + 1]:
                            acc += c - p[i, j, k + 1]
                    elif dirichlet[5]:
                        acc += 2.0 * c
                    out[i, j, k] = acc


def pair_exchange(const double[:, ::1] pos, const double[::1] p, double w0, double[::1] out):
    """out_i = sum_j w0 / r_ij^6 (P_j - P_i)."""
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, r2, w, d
    with nogil:
        for i in range(n):
            out[i] = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                dx = pos[i, 0] - pos[j, 0]
                dy = pos[i, 1] - pos[j, 1]
                dz = pos[i, 2] - pos[j, 2]
                r2 = dx * dx + dy * dy + dz * dz
                w = w0 / (r2 * r2 * r2)
                d = w * (p[j] - p[i])
                out[i] += d
                out[j] -= d


def pair_rate_rowsum(const double[:, ::1] pos, double w0, double[::1] out):
    """out_i = sum_{j != i} w0 / r_ij^6."""
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, r2, w
    with nogil:
        for i in range(n):
            out[i] = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                dx = pos[i, 0] - pos[j, 0]
                dy = pos[i, 1] - pos[j, 1]
                dz = pos[i, 2] - pos[j, 2]
                r2 = dx * dx + dy * dy + dz * dz
                w = w0 / (r2 * r2 * r2)
                out[i] += w
                out[j] += w
