"""Vectorized numpy fallback for the geometry kernels.

All functions take 2-D ``(M, D)`` float64 arrays of packed point payloads
and are the reference implementation the compiled core must agree with.

Packed layouts
--------------
SPD(n):        upper triangle, row major: n=2 -> (a00, a01, a11),
               n=3 -> (a00, a01, a02, a11, a12, a22).
Hyperboloid(n): n+1 Minkowski coordinates (x0, x1, ..., xn) with
               -x0^2 + x1^2 + ... + xn^2 = -1 and x0 > 0.
"""

import numpy as np

# Eigenvalues are clamped here before log/sqrt so that matrices that are
# positive definite only up to roundoff stay inside the metric's domain.
EIG_FLOOR = 1e-14

_TRI_IDX = {
    3: ([0, 0, 1], [0, 1, 1]),
    6: ([0, 0, 0, 1, 1, 2], [0, 1, 2, 1, 2, 2]),
}


def sym_unpack(a):
    """Packed (M, D) upper triangles -> full (M, n, n) symmetric matrices."""
    m, d = a.shape
    n = 2 if d == 3 else 3
    rows, cols = _TRI_IDX[d]
    out = np.empty((m, n, n))
    out[:, rows, cols] = a
    out[:, cols, rows] = a
    return out


def sym_pack(mat):
    """Full (M, n, n) symmetric matrices -> packed (M, D) upper triangles."""
    n = mat.shape[-1]
    rows, cols = _TRI_IDX[3 if n == 2 else 6]
    return np.ascontiguousarray(mat[:, rows, cols])


def _eigh_clamped(mat):
    w, q = np.linalg.eigh(mat)
    return np.maximum(w, EIG_FLOOR), q


def _apply_eig(q, w):
    # q @ diag(w) @ q.T for batches
    return np.einsum("mij,mj,mkj->mik", q, w, q)


def _halves(a_mat):
    w, q = _eigh_clamped(a_mat)
    sq = np.sqrt(w)
    return _apply_eig(q, sq), _apply_eig(q, 1.0 / sq)


def _whiten(a_mat, b_mat):
    """Return (sqrt(A), A^{-1/2} B A^{-1/2} symmetrized)."""
    sqrt_a, isqrt_a = _halves(a_mat)
    c = isqrt_a @ b_mat @ isqrt_a
    return sqrt_a, 0.5 * (c + np.swapaxes(c, -1, -2))


def spd_dist(a, b):
    _, c = _whiten(sym_unpack(a), sym_unpack(b))
    w, _ = _eigh_clamped(c)
    return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))


def spd_geodesic(a, b, t):
    sqrt_a, c = _whiten(sym_unpack(a), sym_unpack(b))
    w, q = _eigh_clamped(c)
    mid = _apply_eig(q, w ** np.asarray(t)[:, None])
    return sym_pack(sqrt_a @ mid @ sqrt_a)


def spd_log(a, b):
    sqrt_a, c = _whiten(sym_unpack(a), sym_unpack(b))
    w, q = _eigh_clamped(c)
    logc = _apply_eig(q, np.log(w))
    return sym_pack(sqrt_a @ logc @ sqrt_a)


def spd_exp(a, v):
    sqrt_a, isqrt_a = _halves(sym_unpack(a))
    c = isqrt_a @ sym_unpack(v) @ isqrt_a
    c = 0.5 * (c + np.swapaxes(c, -1, -2))
    w, q = np.linalg.eigh(c)
    expc = _apply_eig(q, np.exp(w))
    return sym_pack(sqrt_a @ expc @ sqrt_a)


def spd_tangent_norm(a, v):
    _, isqrt_a = _halves(sym_unpack(a))
    c = isqrt_a @ sym_unpack(v) @ isqrt_a
    return np.sqrt(np.sum(c * c, axis=(-1, -2)))


def spd_min_eig(a):
    return np.linalg.eigvalsh(sym_unpack(a))[:, 0]


def mink_dot(x, y):
    s = np.sum(x * y, axis=-1)
    return s - 2.0 * x[..., 0] * y[..., 0]


def _gap(x, y):
    # -<x,y> - 1 = <x-y, x-y>/2, computed from the difference to avoid the
    # catastrophic cancellation of the direct inner product near x = y
    d = x - y
    return np.maximum(0.5 * mink_dot(d, d), 0.0)


def hyp_dist(x, y):
    u = _gap(x, y)
    return np.log1p(u + np.sqrt(u * (u + 2.0)))


def _log_factor(u):
    # arccosh(1+u)/sqrt(u(u+2)), series below the precision cliff
    small = u < 1e-8
    safe = np.where(small, 1.0, u)
    exact = np.log1p(safe + np.sqrt(safe * (safe + 2.0))) / np.sqrt(safe * (safe + 2.0))
    return np.where(small, 1.0 - u / 3.0, exact)


def hyp_log(x, y):
    u = _gap(x, y)
    tangent = y - (1.0 + u)[..., None] * x
    return _log_factor(u)[..., None] * tangent


def _renorm(p):
    # project back onto the sheet: rescale so <p, p>_M = -1
    return p / np.sqrt(np.maximum(-mink_dot(p, p), EIG_FLOOR))[..., None]


def hyp_exp(x, v):
    r2 = np.maximum(mink_dot(v, v), 0.0)
    r = np.sqrt(r2)
    small = r < 1e-8
    sinc = np.where(small, 1.0 + r2 / 6.0, np.sinh(np.where(small, 1.0, r)) / np.where(small, 1.0, r))
    p = np.cosh(r)[..., None] * x + sinc[..., None] * v
    return _renorm(p)


def hyp_geodesic(x, y, t):
    return hyp_exp(x, np.asarray(t)[:, None] * hyp_log(x, y))


def hyp_tangent_norm(x, v):
    return np.sqrt(np.maximum(mink_dot(v, v), 0.0))
