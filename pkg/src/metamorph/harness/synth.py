"""Deterministic synthetic images, deformations and analytic scenarios.

Three bundled endpoint pairs exercise the three value manifolds: a
scalar bump pair (flat), a translating anisotropic blob pair (SPD) and a
field of univariate Gaussian densities (hyperbolic, via the half-plane
embedding). Two analytic scenarios drive the recovery experiments: pure
transport along a smooth interior velocity bump with the target image
pulled back along the exact flow, and pure blending with zero velocity
and a time-constant rate.
"""

from __future__ import annotations

import numpy as np

from .. import extension, field, manifold
from .._kernels import sym_pack
from ..energy import CouplingParams, DensityParams, ModelParams, RegParams
from ..field import GridSpec, ManifoldImage
from ..manifold import ManifoldKind

SCENARIOS = ("bump", "blob", "hyperbolic")


def default_params(delta: float = 0.25, epsilon: float = 0.2, m: int = 3) -> ModelParams:
    """Parameter set the bundled scenarios are tuned for."""
    return ModelParams(
        DensityParams(lam=1.0, mu=1.0),
        RegParams(gamma=1e-5, m=m, pragmatic=(m == 2)),
        CouplingParams(delta=delta, epsilon=epsilon),
    )


def interior_bump(grid: GridSpec):
    """Smooth profile vanishing to second order on the boundary, peak 1."""
    x = grid.nodes()
    out = np.ones(grid.shape)
    for ax in range(grid.ndim):
        c = x[..., ax]
        out = out * (c * (1.0 - c)) ** 2
    return out / out.max()


def euclidean_bump_pair(grid: GridSpec):
    """Scalar Gaussian bump translated within the domain."""
    x = grid.nodes()

    def gauss(cx, cy):
        return np.exp(-((x[..., 0] - cx) ** 2 + (x[..., 1] - cy) ** 2) / (2 * 0.16**2))

    kind = ManifoldKind.euclidean(1)
    I_A = ManifoldImage(grid, kind, (0.2 + 0.8 * gauss(0.42, 0.46))[..., None])
    I_B = ManifoldImage(grid, kind, (0.2 + 0.8 * gauss(0.58, 0.54))[..., None])
    return I_A, I_B


def spd_blob(grid: GridSpec, cx: float, cy: float, angle: float, sigma=0.18, peak=2.0):
    """Anisotropic tensor blob on an isotropic background."""
    x = grid.nodes()
    amp = np.exp(-((x[..., 0] - cx) ** 2 + (x[..., 1] - cy) ** 2) / (2 * sigma**2))
    lam1 = 0.5 + peak * amp
    lam2 = np.full_like(lam1, 0.5)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    diag = np.zeros(grid.shape + (2, 2))
    diag[..., 0, 0] = lam1
    diag[..., 1, 1] = lam2
    mats = rot @ diag @ rot.T
    vals = sym_pack(mats.reshape(-1, 2, 2)).reshape(grid.shape + (3,))
    return ManifoldImage(grid, ManifoldKind.spd(2), vals)


def spd_blob_pair(grid: GridSpec):
    """Translating, rotating anisotropic blob: tensors both move and turn."""
    return spd_blob(grid, 0.4, 0.45, 0.3), spd_blob(grid, 0.6, 0.55, 1.1)


def hyperboloid_gaussian_pair(grid: GridSpec):
    """Fields of univariate Gaussian densities (mean, deviation) embedded
    in the hyperbolic plane through the half-plane model."""
    x = grid.nodes()

    def make(mu_c, sig_c):
        mu = 0.5 * np.sin(2.0 * x[..., 0] + mu_c) * np.cos(1.5 * x[..., 1])
        sigma = 0.8 + 0.4 * np.exp(
            -((x[..., 0] - sig_c) ** 2 + (x[..., 1] - 0.5) ** 2) / (2 * 0.2**2)
        )
        half = np.stack([mu / np.sqrt(2.0), sigma], axis=-1)
        vals = manifold.halfplane_to_hyperboloid(half)
        return ManifoldImage(grid, ManifoldKind.hyperboloid(2), vals)

    return make(0.3, 0.4), make(1.0, 0.6)


def scenario_pair(name: str, grid: GridSpec):
    if name == "bump":
        return euclidean_bump_pair(grid)
    if name == "blob":
        return spd_blob_pair(grid)
    if name == "hyperbolic":
        return hyperboloid_gaussian_pair(grid)
    raise ValueError(f"unknown scenario {name!r} (expected one of {SCENARIOS})")


# ---------------------------------------------------------------------------
# analytic recovery scenarios


def bump_velocity(scale_x: float = 0.25, scale_y: float = -0.18):
    """Smooth interior velocity field with mild time modulation."""

    def velocity(t, X):
        b = np.ones(X.shape[:-1])
        for ax in range(X.shape[-1]):
            c = X[..., ax]
            b = b * (c * (1.0 - c)) ** 2
        b = b / (0.25**2) ** X.shape[-1]
        out = np.zeros_like(X)
        out[..., 0] = scale_x * b * (0.7 + 0.3 * np.sin(2 * np.pi * t))
        out[..., 1] = scale_y * b * (0.8 + 0.2 * np.cos(np.pi * t))
        return out

    return velocity


def zero_rate(t, X):
    return np.zeros(np.asarray(X).shape[:-1])


def transport_scenario(grid: GridSpec, flow_steps: int = 512) -> extension.AnalyticScenario:
    """Pure transport: nonzero velocity, zero rate, target image pulled
    back along the exact flow so the rate budget is (numerically) zero."""
    x = grid.nodes()
    kind = ManifoldKind.euclidean(2)
    vals = np.stack(
        [
            0.6 + 0.3 * np.sin(2.2 * x[..., 0] + 0.4) * np.cos(1.7 * x[..., 1]),
            0.5 + 0.3 * np.cos(1.3 * x[..., 0]) * np.sin(2.0 * x[..., 1] + 0.2),
        ],
        axis=-1,
    )
    I_A = ManifoldImage(grid, kind, vals)
    velocity = bump_velocity()
    Y = extension.integrate_flow(velocity, x, flow_steps)
    X1 = field.invert_position_map(grid, Y[-1], x)
    I_B = ManifoldImage(grid, kind, field.sample_image(I_A, X1))
    return extension.AnalyticScenario(velocity, zero_rate, I_A, I_B, "pure-transport")


def blending_scenario(grid: GridSpec) -> extension.AnalyticScenario:
    """Pure blending: zero velocity, time-constant rate equal to the
    pointwise endpoint distance (SPD pair at constant distance)."""
    x = grid.nodes()
    base = np.empty(grid.shape + (3,))
    base[..., 0] = 1.2 + 0.3 * np.sin(2 * np.pi * x[..., 0])
    base[..., 1] = 0.15 * np.cos(np.pi * x[..., 1])
    base[..., 2] = 1.0 + 0.25 * x[..., 1]
    kind = ManifoldKind.spd(2)
    I_A = ManifoldImage(grid, kind, base)
    I_B = ManifoldImage(grid, kind, base * np.e)
    dist_field = manifold.dist(kind, I_A.values, I_B.values)

    def rate(t, X):
        return field.sample_linear(grid, dist_field[..., None], np.clip(X, 0.0, 1.0))[..., 0]

    def velocity(t, X):
        return np.zeros_like(np.asarray(X, dtype=np.float64))

    return extension.AnalyticScenario(velocity, rate, I_A, I_B, "pure-blending")


# ---------------------------------------------------------------------------
# random sampling for the property suites


def random_points(kind: ManifoldKind, count: int, rng, spread: float = 1.0):
    """Payload batch of valid random points, spread out but well
    conditioned for double-precision geometry."""
    if kind.family == "euclidean":
        return rng.normal(size=(count, kind.param)) * spread
    if kind.family == "spd":
        n = kind.param
        g = rng.normal(size=(count, n, n)) * spread / np.sqrt(n)
        sym = 0.5 * (g + np.swapaxes(g, 1, 2))
        eye = np.tile(sym_pack(np.eye(n)[None]), (count, 1))
        return manifold.expmap(kind, eye, sym_pack(sym))
    spatial = rng.normal(size=(count, kind.param)) * spread
    x0 = np.sqrt(1.0 + np.sum(spatial**2, axis=-1, keepdims=True))
    return np.concatenate([x0, spatial], axis=-1)


def random_tangents(kind: ManifoldKind, base, rng, spread: float = 1.0):
    """Random tangent payloads at the given base points."""
    base = np.asarray(base)
    if kind.family == "euclidean":
        return rng.normal(size=base.shape) * spread
    if kind.family == "spd":
        n = kind.param
        g = rng.normal(size=base.shape[:-1] + (n, n)) * spread / np.sqrt(n)
        return sym_pack((0.5 * (g + np.swapaxes(g, -1, -2))).reshape(-1, n, n)).reshape(base.shape)
    g = rng.normal(size=base.shape) * spread
    pairing = manifold._kernels.mink_dot(
        np.ascontiguousarray(base.reshape(-1, base.shape[-1])),
        np.ascontiguousarray(g.reshape(-1, base.shape[-1])),
    ).reshape(base.shape[:-1])
    return g + pairing[..., None] * base


def write_demo_dti(path, shape, rng, bad_voxels: int = 1):
    """Synthetic raw DTI volume (6 components per voxel, little-endian
    float64) with a controlled number of non-positive-definite voxels."""
    count = int(np.prod(shape))
    g = rng.normal(size=(count, 3, 3)) * 0.3
    mats = g @ np.swapaxes(g, 1, 2) + np.eye(3)
    for i in range(min(bad_voxels, count)):
        mats[i] = np.diag([1.0, 0.5, -0.2])
    tri = np.stack(
        [mats[:, 0, 0], mats[:, 0, 1], mats[:, 0, 2], mats[:, 1, 1], mats[:, 1, 2], mats[:, 2, 2]],
        axis=-1,
    )
    with open(path, "wb") as fh:
        fh.write(tri.astype("<f8").tobytes())
    return tri
