"""Hyperelastic density, smoothness regularizer, pair energy and gradients.

The one-step energy of a deformation ``phi`` between images ``I`` and
``J`` is

    R(I, J, phi) = int W(D phi) + gamma |D^m phi|^2 dx
                   + (1/delta) * l2_distance(I, J o phi)^2

with a density ``W`` that vanishes to second order at the identity,
reproduces the quadratic form of the viscous-dissipation operator there,
penalizes volume collapse and is bounded below away from the identity
even in skew directions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import field, manifold
from .errors import AdmissibilityError
from .field import Deformation, GridSpec, ManifoldImage


@dataclass(frozen=True)
class DensityParams:
    """Weights of the elastic density (trace/shear moduli and the
    determinant penalty). ``beta`` must not exceed ``lam`` so every term
    of the density stays nonnegative."""

    lam: float = 1.0
    mu: float = 1.0
    beta: float | None = None

    def __post_init__(self):
        if self.lam <= 0.0 or self.mu <= 0.0:
            raise ValueError("lam and mu must be positive")
        beta = self.beta
        if beta is None:
            beta = min(self.mu / 10.0, self.lam / 2.0)
            object.__setattr__(self, "beta", beta)
        if beta < 0.0 or beta > self.lam:
            raise ValueError("beta must lie in [0, lam]")


@dataclass(frozen=True)
class RegParams:
    """Weight and differentiation order of the higher-order regularizer."""

    gamma: float = 1e-4
    m: int = 3
    pragmatic: bool = False

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.m < 2:
            raise ValueError("order m must be at least 2")

    def validate_for_dim(self, ndim: int):
        if self.m > 1 + ndim / 2:
            return
        if self.pragmatic and self.m == 2:
            warnings.warn(
                "regularizer order m=2 is below the coercivity threshold; "
                "running in pragmatic mode",
                stacklevel=2,
            )
            return
        raise ValueError(f"order m={self.m} needs m > 1 + n/2 (n={ndim}); set pragmatic for m=2")


@dataclass(frozen=True)
class CouplingParams:
    """Data-term weight 1/delta and determinant admissibility bound epsilon."""

    delta: float = 1.0
    epsilon: float = 0.01

    def __post_init__(self):
        if self.delta <= 0.0 or self.epsilon <= 0.0:
            raise ValueError("delta and epsilon must be positive")


@dataclass(frozen=True)
class ModelParams:
    density: DensityParams = DensityParams()
    reg: RegParams = RegParams()
    coupling: CouplingParams = CouplingParams()


# ---------------------------------------------------------------------------
# elastic density


def density_W(A, params: DensityParams):
    """Elastic density, elementwise over matrices of shape ``(..., n, n)``.

    W(A) = mu |A^sym - 1|^2 + (lam - beta)/2 (tr(A - 1))^2
           + beta (det A - 1 - log det A)

    Raises ``ValueError`` outside GL+ (det A <= 0).
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[-1]
    det = np.linalg.det(A)
    if np.any(det <= 0.0):
        raise ValueError("density undefined for nonpositive determinants")
    sym = 0.5 * (A + np.swapaxes(A, -1, -2))
    sym_dev = sym - np.eye(n)
    tr_dev = np.trace(A, axis1=-2, axis2=-1) - n
    out = params.mu * np.sum(sym_dev**2, axis=(-2, -1))
    out += 0.5 * (params.lam - params.beta) * tr_dev**2
    out += params.beta * (det - 1.0 - np.log(det))
    return out


def density_gradient(A, params: DensityParams):
    """dW/dA, same shape as ``A``; matches finite differences of
    :func:`density_W`."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[-1]
    det = np.linalg.det(A)
    if np.any(det <= 0.0):
        raise ValueError("density undefined for nonpositive determinants")
    sym_dev = 0.5 * (A + np.swapaxes(A, -1, -2)) - np.eye(n)
    tr_dev = np.trace(A, axis1=-2, axis2=-1) - n
    grad = 2.0 * params.mu * sym_dev
    grad += ((params.lam - params.beta) * tr_dev)[..., None, None] * np.eye(n)
    inv_t = np.swapaxes(np.linalg.inv(A), -1, -2)
    grad += (params.beta * (det - 1.0))[..., None, None] * inv_t
    return grad


def quadratic_form(B, lam: float, mu: float):
    """(lam/2) (tr B)^2 + mu tr((B^sym)^2): the density's Hessian form at 1."""
    B = np.asarray(B, dtype=np.float64)
    sym = 0.5 * (B + np.swapaxes(B, -1, -2))
    return 0.5 * lam * np.trace(B, axis1=-2, axis2=-1) ** 2 + mu * np.sum(sym**2, axis=(-2, -1))


# ---------------------------------------------------------------------------
# higher-order regularizer


def _derivative_tensors(grid: GridSpec, f, order: int):
    """All ordered ``order``-fold derivatives D_{i1} ... D_{im} f."""
    h = grid.spacing
    current = [f]
    for _ in range(order):
        current = [
            field.diff_axis(g, ax, h[ax]) for g in current for ax in range(grid.ndim)
        ]
    return current


def _derivative_tuples(ndim: int, order: int):
    tuples = [()]
    for _ in range(order):
        tuples = [t + (ax,) for t in tuples for ax in range(ndim)]
    return tuples


def _apply_tuple(grid: GridSpec, f, axes):
    h = grid.spacing
    for ax in axes:
        f = field.diff_axis(f, ax, h[ax])
    return f


def _apply_tuple_adjoint(grid: GridSpec, g, axes):
    h = grid.spacing
    for ax in reversed(axes):
        g = field.diff_axis_adjoint(g, ax, h[ax])
    return g


def higher_order_density(grid: GridSpec, u, order: int):
    """|D^m u|^2 as a node field, summing all components and index tuples."""
    u = np.asarray(u, dtype=np.float64)
    total = np.zeros(grid.shape)
    for c in range(u.shape[-1]):
        for t in _derivative_tensors(grid, u[..., c], order):
            total += t * t
    return total


def regularizer(defm_or_u, grid: GridSpec | None = None, reg: RegParams = RegParams()):
    """gamma * integral of |D^m u|^2 (identical for u and phi when m >= 2)."""
    if isinstance(defm_or_u, Deformation):
        grid, u = defm_or_u.grid, defm_or_u.displacement
    else:
        u = defm_or_u
    reg.validate_for_dim(grid.ndim)
    return reg.gamma * field.integrate(grid, higher_order_density(grid, u, reg.m))


def _regularizer_gradient(grid: GridSpec, u, reg: RegParams):
    w = grid.quad_weights()
    grad = np.zeros_like(u)
    for c in range(u.shape[-1]):
        for axes in _derivative_tuples(grid.ndim, reg.m):
            t = _apply_tuple(grid, u[..., c], axes)
            grad[..., c] += 2.0 * reg.gamma * _apply_tuple_adjoint(grid, w * t, axes)
    return grad


# ---------------------------------------------------------------------------
# pair energy


def _check_admissible(defm: Deformation, epsilon: float, det):
    u = defm.displacement
    if np.any(u[defm.grid.boundary_mask()] != 0.0):
        raise AdmissibilityError("nonzero boundary displacement")
    if float(np.min(det)) <= epsilon:
        raise AdmissibilityError(
            f"Jacobian determinant {float(np.min(det)):.6f} <= {epsilon}"
        )


def pair_energy_parts(
    I: ManifoldImage, J: ManifoldImage, defm: Deformation, params: ModelParams
) -> dict:
    """Elastic / regularizer / data contributions and their sum."""
    if I.grid != J.grid or I.grid != defm.grid:
        raise field.GridMismatchError("images and deformation must share one grid")
    params.reg.validate_for_dim(I.grid.ndim)
    grid = defm.grid
    jac = field.jacobian(defm)
    _check_admissible(defm, params.coupling.epsilon, np.linalg.det(jac))
    elastic = field.integrate(grid, density_W(jac, params.density))
    smooth = params.reg.gamma * field.integrate(
        grid, higher_order_density(grid, defm.displacement, params.reg.m)
    )
    data = field.l2_distance(I, field.warp(J, defm)) ** 2 / params.coupling.delta
    return {
        "elastic": elastic,
        "regularizer": smooth,
        "data": data,
        "total": elastic + smooth + data,
    }


def pair_energy(I: ManifoldImage, J: ManifoldImage, defm: Deformation, params: ModelParams) -> float:
    return pair_energy_parts(I, J, defm, params)["total"]


#: step for the positional central differences inside the data-term gradient;
#: kept below the cell size by many orders so cell-face kinks are straddled
#: only in a hairline neighborhood
_POS_STEP = 1e-7


def _data_term_gradient(I: ManifoldImage, J: ManifoldImage, defm: Deformation, delta: float):
    """Gradient of (1/delta) d2^2(I, J o phi) w.r.t. the displacement."""
    grid = defm.grid
    pos = defm.positions()
    w = grid.quad_weights()
    grad = np.empty(grid.shape + (grid.ndim,))
    for ax in range(grid.ndim):
        hi = pos.copy()
        lo = pos.copy()
        hi[..., ax] = np.minimum(pos[..., ax] + _POS_STEP, 1.0)
        lo[..., ax] = np.maximum(pos[..., ax] - _POS_STEP, 0.0)
        span = hi[..., ax] - lo[..., ax]
        d_hi = manifold.dist(I.kind, I.values, field.sample_image(J, hi)) ** 2
        d_lo = manifold.dist(I.kind, I.values, field.sample_image(J, lo)) ** 2
        grad[..., ax] = (d_hi - d_lo) / span
    return w[..., None] * grad / delta


def pair_energy_gradient(
    I: ManifoldImage, J: ManifoldImage, defm: Deformation, params: ModelParams
):
    """Gradient of :func:`pair_energy` w.r.t. the node displacements.

    Elastic and regularizer contributions use exact stencil adjoints; the
    data term differentiates the pointwise warped objective in the warp
    position by short central differences. Boundary rows are zero, the
    displacement there being pinned.
    """
    grid = defm.grid
    w = grid.quad_weights()
    jac = field.jacobian(defm)
    G = density_gradient(jac, params.density)
    grad = np.zeros(grid.shape + (grid.ndim,))
    for i in range(grid.ndim):
        for j in range(grid.ndim):
            grad[..., i] += field.diff_axis_adjoint(w * G[..., i, j], j, grid.spacing[j])
    grad += _regularizer_gradient(grid, defm.displacement, params.reg)
    grad += _data_term_gradient(I, J, defm, params.coupling.delta)
    grad[grid.boundary_mask()] = 0.0
    return grad


# ---------------------------------------------------------------------------
# dissipation operator and diagnostics


def dissipation(grid: GridSpec, v, density: DensityParams, reg: RegParams) -> float:
    """Viscous dissipation of a velocity field on the grid:
    int (lam/2)(tr e[v])^2 + mu tr(e[v]^2) + gamma |D^m v|^2 dx."""
    reg.validate_for_dim(grid.ndim)
    dv = field.displacement_jacobian(grid, np.asarray(v, dtype=np.float64))
    pointwise = quadratic_form(dv, density.lam, density.mu)
    pointwise = pointwise + reg.gamma * higher_order_density(grid, v, reg.m)
    return field.integrate(grid, pointwise)


def taylor_residual(grid: GridSpec, u, K: int, density: DensityParams) -> float:
    """|K^2 * int W(1 + Du/K) - int (lam/2)(tr e[u])^2 + mu tr(e[u]^2)|.

    Measures the deviation of the scaled density from its quadratic model;
    decays like 1/K for smooth u."""
    du = field.displacement_jacobian(grid, np.asarray(u, dtype=np.float64))
    n = grid.ndim
    A = np.eye(n) + du / K
    scaled = K**2 * field.integrate(grid, density_W(A, density))
    quad = field.integrate(grid, quadratic_form(du, density.lam, density.mu))
    return abs(scaled - quad)


def sobolev_norm(defm: Deformation, order: int) -> float:
    """Discrete H^m norm of the displacement: all derivative levels 0..m."""
    total = 0.0
    for j in range(order + 1):
        total += field.integrate(
            defm.grid, higher_order_density(defm.grid, defm.displacement, j)
        )
    return float(np.sqrt(total))


def theta_diagnostic(defm: Deformation, r_value: float, reg: RegParams):
    """(H^m displacement norm, (R + R^2)^(1/2)) for monitoring the growth
    bound that ties displacements to the pair energy."""
    lhs = sobolev_norm(defm, reg.m)
    bound = float(np.sqrt(max(r_value, 0.0) + max(r_value, 0.0) ** 2))
    return lhs, bound
