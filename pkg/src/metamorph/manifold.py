"""Geometry kernel for the range spaces of the images.

Three families of complete, nonpositively curved manifolds are supported:
flat multichannel values, symmetric positive definite matrices with the
affine-invariant metric, and hyperbolic space in hyperboloid (Minkowski)
coordinates. Distances, geodesics, log/exp maps and weighted two-point
means are exact closed forms; the comparison-inequality checkers return
residuals that are nonnegative (up to roundoff) on valid inputs.

Array-valued functions (``dist``, ``geodesic``, ...) operate on payload
arrays of shape ``(..., D)`` and broadcast over the leading axes; the
``Point``/``Tangent`` wrappers provide the scalar, validated interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidPointError, KindMismatchError

#: Two payloads closer than this (max-norm) are treated as the same point.
POINT_TOL = 1e-10

#: Distances below this short-circuit direction normalization.
COINCIDENT_TOL = 1e-12

_FAMILIES = ("euclidean", "spd", "hyperboloid")


@dataclass(frozen=True)
class ManifoldKind:
    """Tagged descriptor of the value manifold of an image.

    ``param`` is the channel count for ``euclidean``, the matrix order for
    ``spd`` and the intrinsic dimension for ``hyperboloid``.
    """

    family: str
    param: int

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown manifold family {self.family!r}")
        if self.family == "euclidean" and self.param < 1:
            raise ValueError("euclidean needs at least one channel")
        if self.family == "spd" and self.param not in (2, 3):
            raise ValueError("spd order must be 2 or 3")
        if self.family == "hyperboloid" and self.param < 2:
            raise ValueError("hyperboloid dimension must be >= 2")

    @classmethod
    def euclidean(cls, channels: int) -> "ManifoldKind":
        return cls("euclidean", int(channels))

    @classmethod
    def spd(cls, order: int) -> "ManifoldKind":
        return cls("spd", int(order))

    @classmethod
    def hyperboloid(cls, dim: int) -> "ManifoldKind":
        return cls("hyperboloid", int(dim))

    @property
    def payload_dim(self) -> int:
        if self.family == "euclidean":
            return self.param
        if self.family == "spd":
            return self.param * (self.param + 1) // 2
        return self.param + 1

    def to_json(self) -> dict:
        return {"family": self.family, "param": self.param}

    @classmethod
    def from_json(cls, obj: dict) -> "ManifoldKind":
        return cls(obj["family"], int(obj["param"]))

    def __str__(self):
        return f"{self.family}({self.param})"


def _require_same_kind(a: ManifoldKind, b: ManifoldKind):
    if a != b:
        raise KindMismatchError(f"manifold kinds differ: {a} vs {b}")


def _flat(kind: ManifoldKind, arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.shape[-1] != kind.payload_dim:
        raise ValueError(
            f"payload width {arr.shape[-1]} does not match {kind} "
            f"(expected {kind.payload_dim})"
        )
    return arr.reshape(-1, kind.payload_dim), arr.shape[:-1]


def validate_payloads(kind: ManifoldKind, arr):
    """Raise :class:`InvalidPointError` unless every payload is a valid point."""
    flat, _ = _flat(kind, arr)
    if not np.all(np.isfinite(flat)):
        raise InvalidPointError("non-finite payload entries")
    if kind.family == "spd":
        bad = _kernels.spd_min_eig(flat) <= 0.0
        if np.any(bad):
            raise InvalidPointError(
                f"{int(bad.sum())} SPD payload(s) are not positive definite"
            )
    elif kind.family == "hyperboloid":
        gram = _kernels.mink_dot(flat, flat)
        if np.any(np.abs(gram + 1.0) > POINT_TOL) or np.any(flat[:, 0] <= 0.0):
            raise InvalidPointError("payload off the hyperboloid sheet")


def dist(kind: ManifoldKind, a, b):
    """Geodesic distance between payload arrays, elementwise over ``(...)``."""
    fa, lead = _flat(kind, a)
    fb, _ = _flat(kind, b)
    if kind.family == "euclidean":
        out = np.linalg.norm(fa - fb, axis=-1)
    elif kind.family == "spd":
        out = _kernels.spd_dist(fa, fb)
        out[np.all(fa == fb, axis=-1)] = 0.0  # exact zero on equal payloads
    else:
        out = _kernels.hyp_dist(fa, fb)
    return out.reshape(lead)


def geodesic(kind: ManifoldKind, a, b, t):
    """Point ``gamma_{a,b}(t)`` on the connecting geodesic; ``t`` broadcasts."""
    fa, lead = _flat(kind, a)
    fb, _ = _flat(kind, b)
    ft = np.array(np.broadcast_to(np.asarray(t, dtype=np.float64), lead)).reshape(-1)
    if kind.family == "euclidean":
        out = fa + ft[:, None] * (fb - fa)
    elif kind.family == "spd":
        out = _kernels.spd_geodesic(fa, fb, ft)
    else:
        out = _kernels.hyp_geodesic(fa, fb, ft)
    # endpoints are reproduced exactly, not just to eigensolver accuracy
    at0 = ft == 0.0
    at1 = ft == 1.0
    if np.any(at0):
        out[at0] = fa[at0]
    if np.any(at1):
        out[at1] = fb[at1]
    return out.reshape(lead + (kind.payload_dim,))


def logmap(kind: ManifoldKind, a, b):
    fa, lead = _flat(kind, a)
    fb, _ = _flat(kind, b)
    if kind.family == "euclidean":
        out = fb - fa
    elif kind.family == "spd":
        out = _kernels.spd_log(fa, fb)
    else:
        out = _kernels.hyp_log(fa, fb)
    return out.reshape(lead + (kind.payload_dim,))


def expmap(kind: ManifoldKind, a, v):
    fa, lead = _flat(kind, a)
    fv, _ = _flat(kind, v)
    if kind.family == "euclidean":
        out = fa + fv
    elif kind.family == "spd":
        out = _kernels.spd_exp(fa, fv)
    else:
        out = _kernels.hyp_exp(fa, fv)
    return out.reshape(lead + (kind.payload_dim,))


def tangent_norm(kind: ManifoldKind, a, v):
    """Riemannian norm of tangent payloads ``v`` based at ``a``."""
    fa, lead = _flat(kind, a)
    fv, _ = _flat(kind, v)
    if kind.family == "euclidean":
        out = np.linalg.norm(fv, axis=-1)
    elif kind.family == "spd":
        out = _kernels.spd_tangent_norm(fa, fv)
    else:
        out = _kernels.hyp_tangent_norm(fa, fv)
    return out.reshape(lead)


def weighted_mean(kind: ManifoldKind, a, b, wa, wb):
    """Minimizer of ``wa*d^2(a, .) + wb*d^2(b, .)``.

    On these manifolds the minimizer lies on the connecting geodesic at
    parameter ``wb / (wa + wb)``. Weights broadcast over the leading axes
    and must be nonnegative with a positive sum.
    """
    wa = np.asarray(wa, dtype=np.float64)
    wb = np.asarray(wb, dtype=np.float64)
    if np.any(wa < 0.0) or np.any(wb < 0.0):
        raise ValueError("weights must be nonnegative")
    total = wa + wb
    if np.any(total <= 0.0):
        raise ValueError("weights must not both vanish")
    return geodesic(kind, a, b, wb / total)


def check_cat0(kind: ManifoldKind, x, y, v, w):
    """Residual of the four-point comparison inequality (nonnegative on
    nonpositively curved spaces): d2(x,w) + d2(y,v) + 2 d(x,y) d(v,w)
    - d2(x,v) - d2(y,w)."""
    return (
        dist(kind, x, w) ** 2
        + dist(kind, y, v) ** 2
        + 2.0 * dist(kind, x, y) * dist(kind, v, w)
        - dist(kind, x, v) ** 2
        - dist(kind, y, w) ** 2
    )


def check_joint_convexity(kind: ManifoldKind, x1, x2, y1, y2, t):
    """Residual of joint convexity of the distance along two geodesics:
    (1-t) d(x1,y1) + t d(x2,y2) - d(gamma_{x1,x2}(t), gamma_{y1,y2}(t))."""
    return (
        (1.0 - t) * dist(kind, x1, y1)
        + t * dist(kind, x2, y2)
        - dist(kind, geodesic(kind, x1, x2, t), geodesic(kind, y1, y2, t))
    )


@dataclass(frozen=True)
class Point:
    """A validated point on a manifold; payload is immutable."""

    kind: ManifoldKind
    payload: np.ndarray = field(repr=False)

    def __post_init__(self):
        payload = np.array(self.payload, dtype=np.float64).reshape(-1)
        validate_payloads(self.kind, payload)
        payload.setflags(write=False)
        object.__setattr__(self, "payload", payload)

    def allclose(self, other: "Point", tol: float = POINT_TOL) -> bool:
        _require_same_kind(self.kind, other.kind)
        return bool(np.max(np.abs(self.payload - other.payload)) <= tol)


@dataclass(frozen=True)
class Tangent:
    """Tangent vector at a base point, stored as a flat payload."""

    kind: ManifoldKind
    base: np.ndarray = field(repr=False)
    vector: np.ndarray = field(repr=False)

    def __post_init__(self):
        base = np.array(self.base, dtype=np.float64).reshape(-1)
        vec = np.array(self.vector, dtype=np.float64).reshape(-1)
        if base.shape != vec.shape or base.shape[0] != self.kind.payload_dim:
            raise ValueError("tangent payload width mismatch")
        if self.kind.family == "hyperboloid":
            pairing = float(_kernels.mink_dot(base[None, :], vec[None, :])[0])
            if abs(pairing) > POINT_TOL:
                raise InvalidPointError("tangent not Minkowski-orthogonal to base")
        base.setflags(write=False)
        vec.setflags(write=False)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "vector", vec)

    @property
    def norm(self) -> float:
        return float(tangent_norm(self.kind, self.base, self.vector))


def distance(p: Point, q: Point) -> float:
    _require_same_kind(p.kind, q.kind)
    return float(dist(p.kind, p.payload, q.payload))


def geodesic_point(p: Point, q: Point, t: float) -> Point:
    _require_same_kind(p.kind, q.kind)
    if not 0.0 <= t <= 1.0:
        raise ValueError("geodesic parameter must lie in [0, 1]")
    if p.allclose(q, COINCIDENT_TOL):
        return p
    return Point(p.kind, geodesic(p.kind, p.payload, q.payload, t))


def log_map(p: Point, q: Point) -> Tangent:
    _require_same_kind(p.kind, q.kind)
    if p.allclose(q, COINCIDENT_TOL):
        return Tangent(p.kind, p.payload, np.zeros(p.kind.payload_dim))
    return Tangent(p.kind, p.payload, logmap(p.kind, p.payload, q.payload))


def exp_map(p: Point, v: Tangent) -> Point:
    _require_same_kind(p.kind, v.kind)
    if not np.array_equal(p.payload, v.base):
        raise ValueError("tangent is not based at the given point")
    return Point(p.kind, expmap(p.kind, p.payload, v.vector))


def weighted_pair_mean(a: Point, b: Point, w_a: float, w_b: float) -> Point:
    _require_same_kind(a.kind, b.kind)
    return Point(a.kind, weighted_mean(a.kind, a.payload, b.payload, w_a, w_b))


def halfplane_to_hyperboloid(z):
    """Map upper half-plane coordinates ``(x, y)``, y > 0, to hyperboloid
    coordinates; used for images of univariate Gaussian densities."""
    z = np.asarray(z, dtype=np.float64)
    x, y = z[..., 0], z[..., 1]
    if np.any(y <= 0.0):
        raise InvalidPointError("half-plane points need y > 0")
    r2 = x * x + y * y
    out = np.empty(z.shape[:-1] + (3,))
    out[..., 0] = (r2 + 1.0) / (2.0 * y)
    out[..., 1] = (r2 - 1.0) / (2.0 * y)
    out[..., 2] = x / y
    return out


def hyperboloid_to_halfplane(p):
    p = np.asarray(p, dtype=np.float64)
    denom = p[..., 0] - p[..., 1]
    out = np.empty(p.shape[:-1] + (2,))
    out[..., 0] = p[..., 2] / denom
    out[..., 1] = 1.0 / denom
    return out
