# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled geometry kernels (hot inner loops of the morphing solver).

Signature-compatible with ``_numpy``; agreement between the two backends
is enforced by the test suite. Eigendecompositions use cyclic Jacobi
sweeps, which are exact to machine precision for the n <= 3 matrices
used here.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cosh, exp, fabs, log, log1p, sinh, sqrt

cnp.import_array()

cdef double EIG_FLOOR = 1e-14


cdef inline void jacobi_eig(double* a, double* q, double* w, int n) noexcept nogil:
    """Eigendecomposition of symmetric n x n `a` (row major, destroyed).

    Eigenvectors land in the columns of `q`, eigenvalues in `w`.
    """
    cdef int i, j, p, r, sweep
    cdef double off, theta, t, c, s, app, aqq, apq, aip, aiq, qip, qiq
    for i in range(n):
        for j in range(n):
            q[i * n + j] = 1.0 if i == j else 0.0
    for sweep in range(64):
        off = 0.0
        for p in range(n - 1):
            for r in range(p + 1, n):
                off += a[p * n + r] * a[p * n + r]
        if off < 1e-30:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apq = a[p * n + r]
                if fabs(apq) < 1e-300:
                    continue
                app = a[p * n + p]
                aqq = a[r * n + r]
                theta = 0.5 * (aqq - app) / apq
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for i in range(n):
                    aip = a[i * n + p]
                    aiq = a[i * n + r]
                    a[i * n + p] = c * aip - s * aiq
                    a[i * n + r] = s * aip + c * aiq
                for i in range(n):
                    aip = a[p * n + i]
                    aiq = a[r * n + i]
                    a[p * n + i] = c * aip - s * aiq
                    a[r * n + i] = s * aip + c * aiq
                for i in range(n):
                    qip = q[i * n + p]
                    qiq = q[i * n + r]
                    q[i * n + p] = c * qip - s * qiq
                    q[i * n + r] = s * qip + c * qiq
    for i in range(n):
        w[i] = a[i * n + i]


cdef inline void unpack(const double* src, double* mat, int n) noexcept nogil:
    if n == 2:
        mat[0] = src[0]; mat[1] = src[1]
        mat[2] = src[1]; mat[3] = src[2]
    else:
        mat[0] = src[0]; mat[1] = src[1]; mat[2] = src[2]
        mat[3] = src[1]; mat[4] = src[3]; mat[5] = src[4]
        mat[6] = src[2]; mat[7] = src[4]; mat[8] = src[5]


cdef inline void pack(const double* mat, double* dst, int n) noexcept nogil:
    if n == 2:
        dst[0] = mat[0]; dst[1] = mat[1]; dst[2] = mat[3]
    else:
        dst[0] = mat[0]; dst[1] = mat[1]; dst[2] = mat[2]
        dst[3] = mat[4]; dst[4] = mat[5]; dst[5] = mat[8]


cdef inline void matmul(const double* x, const double* y, double* z, int n) noexcept nogil:
    cdef int i, j, k
    cdef double acc
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += x[i * n + k] * y[k * n + j]
            z[i * n + j] = acc


cdef inline void eig_apply(const double* q, const double* w, double* out, int n) noexcept nogil:
    # out = q diag(w) q^T
    cdef int i, j, k
    cdef double acc
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += q[i * n + k] * w[k] * q[j * n + k]
            out[i * n + j] = acc


cdef inline void halves(const double* apacked, double* sqrt_a, double* isqrt_a, int n) noexcept nogil:
    cdef double mat[9]
    cdef double q[9]
    cdef double w[3]
    cdef double f[3]
    cdef int i
    unpack(apacked, mat, n)
    jacobi_eig(mat, q, w, n)
    for i in range(n):
        if w[i] < EIG_FLOOR:
            w[i] = EIG_FLOOR
        f[i] = sqrt(w[i])
    eig_apply(q, f, sqrt_a, n)
    for i in range(n):
        f[i] = 1.0 / f[i]
    eig_apply(q, f, isqrt_a, n)


cdef inline void whitened(const double* apacked, const double* bpacked,
                          double* sqrt_a, double* cw, double* cq, int n) noexcept nogil:
    """Eigendecomposition of A^{-1/2} B A^{-1/2}: values in cw, vectors in cq."""
    cdef double isqrt_a[9]
    cdef double bmat[9]
    cdef double tmp[9]
    cdef double c[9]
    cdef int i, j
    halves(apacked, sqrt_a, isqrt_a, n)
    unpack(bpacked, bmat, n)
    matmul(isqrt_a, bmat, tmp, n)
    matmul(tmp, isqrt_a, c, n)
    for i in range(n):
        for j in range(i + 1, n):
            c[i * n + j] = 0.5 * (c[i * n + j] + c[j * n + i])
            c[j * n + i] = c[i * n + j]
    jacobi_eig(c, cq, cw, n)
    for i in range(n):
        if cw[i] < EIG_FLOOR:
            cw[i] = EIG_FLOOR


cdef inline int order_from_width(Py_ssize_t d) except -1:
    if d == 3:
        return 2
    if d == 6:
        return 3
    raise ValueError("packed SPD width must be 3 or 6")


def spd_dist(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], i
    cdef int n = order_from_width(a.shape[1]), j
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef double sqrt_a[9]
    cdef double cq[9]
    cdef double cw[3]
    cdef double acc, l
    with nogil:
        for i in range(m):
            whitened(&a[i, 0], &b[i, 0], sqrt_a, cw, cq, n)
            acc = 0.0
            for j in range(n):
                l = log(cw[j])
                acc += l * l
            out[i] = sqrt(acc)
    return out_arr


cdef inline void _geo_core(const double* ai, const double* bi, double t, double* dst, int n) noexcept nogil:
    cdef double sqrt_a[9]
    cdef double cq[9]
    cdef double mid[9]
    cdef double tmp[9]
    cdef double cw[3]
    cdef double f[3]
    cdef int j
    whitened(ai, bi, sqrt_a, cw, cq, n)
    for j in range(n):
        f[j] = exp(t * log(cw[j]))
    eig_apply(cq, f, mid, n)
    matmul(sqrt_a, mid, tmp, n)
    matmul(tmp, sqrt_a, mid, n)
    pack(mid, dst, n)


def spd_geodesic(const double[:, ::1] a, const double[:, ::1] b, const double[::1] t):
    cdef Py_ssize_t m = a.shape[0], i
    cdef int n = order_from_width(a.shape[1])
    out_arr = np.empty((m, a.shape[1]))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(m):
            _geo_core(&a[i, 0], &b[i, 0], t[i], &out[i, 0], n)
    return out_arr


def spd_log(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], i
    cdef int n = order_from_width(a.shape[1]), j
    out_arr = np.empty((m, a.shape[1]))
    cdef double[:, ::1] out = out_arr
    cdef double sqrt_a[9]
    cdef double cq[9]
    cdef double mid[9]
    cdef double tmp[9]
    cdef double cw[3]
    cdef double f[3]
    with nogil:
        for i in range(m):
            whitened(&a[i, 0], &b[i, 0], sqrt_a, cw, cq, n)
            for j in range(n):
                f[j] = log(cw[j])
            eig_apply(cq, f, mid, n)
            matmul(sqrt_a, mid, tmp, n)
            matmul(tmp, sqrt_a, mid, n)
            pack(mid, &out[i, 0], n)
    return out_arr


def spd_exp(const double[:, ::1] a, const double[:, ::1] v):
    cdef Py_ssize_t m = a.shape[0], i
    cdef int n = order_from_width(a.shape[1]), j, k
    out_arr = np.empty((m, a.shape[1]))
    cdef double[:, ::1] out = out_arr
    cdef double sqrt_a[9]
    cdef double isqrt_a[9]
    cdef double vmat[9]
    cdef double tmp[9]
    cdef double c[9]
    cdef double cq[9]
    cdef double cw[3]
    cdef double f[3]
    with nogil:
        for i in range(m):
            halves(&a[i, 0], sqrt_a, isqrt_a, n)
            unpack(&v[i, 0], vmat, n)
            matmul(isqrt_a, vmat, tmp, n)
            matmul(tmp, isqrt_a, c, n)
            for j in range(n):
                for k in range(j + 1, n):
                    c[j * n + k] = 0.5 * (c[j * n + k] + c[k * n + j])
                    c[k * n + j] = c[j * n + k]
            jacobi_eig(c, cq, cw, n)
            for j in range(n):
                f[j] = exp(cw[j])
            eig_apply(cq, f, c, n)
            matmul(sqrt_a, c, tmp, n)
            matmul(tmp, sqrt_a, c, n)
            pack(c, &out[i, 0], n)
    return out_arr


def spd_tangent_norm(const double[:, ::1] a, const double[:, ::1] v):
    cdef Py_ssize_t m = a.shape[0], i
    cdef int n = order_from_width(a.shape[1]), j
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef double sqrt_a[9]
    cdef double isqrt_a[9]
    cdef double vmat[9]
    cdef double tmp[9]
    cdef double c[9]
    cdef double acc
    with nogil:
        for i in range(m):
            halves(&a[i, 0], sqrt_a, isqrt_a, n)
            unpack(&v[i, 0], vmat, n)
            matmul(isqrt_a, vmat, tmp, n)
            matmul(tmp, isqrt_a, c, n)
            acc = 0.0
            for j in range(n * n):
                acc += c[j] * c[j]
            out[i] = sqrt(acc)
    return out_arr


def spd_min_eig(const double[:, ::1] a):
    cdef Py_ssize_t m = a.shape[0], i
    cdef int n = order_from_width(a.shape[1]), j
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef double mat[9]
    cdef double q[9]
    cdef double w[3]
    cdef double lo
    with nogil:
        for i in range(m):
            unpack(&a[i, 0], mat, n)
            jacobi_eig(mat, q, w, n)
            lo = w[0]
            for j in range(1, n):
                if w[j] < lo:
                    lo = w[j]
            out[i] = lo
    return out_arr


cdef inline double mdot(const double* x, const double* y, int d) noexcept nogil:
    cdef double acc = -x[0] * y[0]
    cdef int i
    for i in range(1, d):
        acc += x[i] * y[i]
    return acc


def mink_dot(const double[:, ::1] x, const double[:, ::1] y):
    cdef Py_ssize_t m = x.shape[0], i
    cdef int d = <int> x.shape[1]
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(m):
            out[i] = mdot(&x[i, 0], &y[i, 0], d)
    return out_arr


cdef inline double _gap_one(const double* x, const double* y, int d) noexcept nogil:
    # -<x,y> - 1 via the Minkowski norm of the difference (cancellation-free)
    cdef double diff0 = x[0] - y[0]
    cdef double acc = -diff0 * diff0
    cdef double dj
    cdef int j
    for j in range(1, d):
        dj = x[j] - y[j]
        acc += dj * dj
    acc *= 0.5
    return acc if acc > 0.0 else 0.0


def hyp_dist(const double[:, ::1] x, const double[:, ::1] y):
    cdef Py_ssize_t m = x.shape[0], i
    cdef int d = <int> x.shape[1]
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef double u
    with nogil:
        for i in range(m):
            u = _gap_one(&x[i, 0], &y[i, 0], d)
            out[i] = log1p(u + sqrt(u * (u + 2.0)))
    return out_arr


cdef inline double log_factor(double u) noexcept nogil:
    if u > 1e-8:
        return log1p(u + sqrt(u * (u + 2.0))) / sqrt(u * (u + 2.0))
    return 1.0 - u / 3.0


cdef inline void _hyp_log_one(const double* x, const double* y, double* dst, int d) noexcept nogil:
    cdef double u = _gap_one(x, y, d)
    cdef double theta = 1.0 + u
    cdef double f = log_factor(u)
    cdef int j
    for j in range(d):
        dst[j] = f * (y[j] - theta * x[j])


cdef inline void _hyp_exp_one(const double* x, const double* v, double* dst, int d) noexcept nogil:
    cdef double r2 = mdot(v, v, d)
    cdef double r, ch, sinc, nrm
    cdef int j
    if r2 < 0.0:
        r2 = 0.0
    r = sqrt(r2)
    if r < 1e-8:
        ch = cosh(r)
        sinc = 1.0 + r2 / 6.0
    else:
        ch = cosh(r)
        sinc = sinh(r) / r
    for j in range(d):
        dst[j] = ch * x[j] + sinc * v[j]
    nrm = -mdot(dst, dst, d)
    if nrm < EIG_FLOOR:
        nrm = EIG_FLOOR
    nrm = sqrt(nrm)
    for j in range(d):
        dst[j] /= nrm


def hyp_log(const double[:, ::1] x, const double[:, ::1] y):
    cdef Py_ssize_t m = x.shape[0], i
    cdef int d = <int> x.shape[1]
    out_arr = np.empty((m, d))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(m):
            _hyp_log_one(&x[i, 0], &y[i, 0], &out[i, 0], d)
    return out_arr


def hyp_exp(const double[:, ::1] x, const double[:, ::1] v):
    cdef Py_ssize_t m = x.shape[0], i
    cdef int d = <int> x.shape[1]
    out_arr = np.empty((m, d))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(m):
            _hyp_exp_one(&x[i, 0], &v[i, 0], &out[i, 0], d)
    return out_arr


def hyp_geodesic(const double[:, ::1] x, const double[:, ::1] y, const double[::1] t):
    cdef Py_ssize_t m = x.shape[0], i
    cdef int d = <int> x.shape[1], j
    out_arr = np.empty((m, d))
    cdef double[:, ::1] out = out_arr
    cdef double tan[8]
    with nogil:
        for i in range(m):
            _hyp_log_one(&x[i, 0], &y[i, 0], tan, d)
            for j in range(d):
                tan[j] *= t[i]
            _hyp_exp_one(&x[i, 0], tan, &out[i, 0], d)
    return out_arr


def hyp_tangent_norm(const double[:, ::1] x, const double[:, ::1] v):
    cdef Py_ssize_t m = v.shape[0], i
    cdef int d = <int> v.shape[1]
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef double r2
    with nogil:
        for i in range(m):
            r2 = mdot(&v[i, 0], &v[i, 0], d)
            out[i] = sqrt(r2) if r2 > 0.0 else 0.0
    return out_arr
