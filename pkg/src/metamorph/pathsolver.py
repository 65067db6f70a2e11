"""Minimization of the discrete path energy over images and deformations.

The total energy of a path with K steps is K times the sum of the
per-step pair energies. It is driven down by block alternation:

* registration half-step: the K deformations are optimized independently
  (descent with an admissibility-preserving backtracking line search);
* image half-step: the K-1 interior images are replaced by the exact
  pointwise minimizer of their decoupled objective, a weighted two-point
  geodesic mean of the pulled-back neighbors (Jacobi sweep).

Both half-steps only ever accept energy decreases, so the recorded trace
is non-increasing; the endpoint images are never touched.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import energy as energy_mod
from . import field as field_mod
from . import manifold
from .energy import ModelParams
from .errors import GridMismatchError, KindMismatchError
from .field import Deformation, GridSpec, ManifoldImage


@dataclass(frozen=True)
class SolverConfig:
    levels: int = 2
    max_outer: int = 200
    tol: float = 1e-6
    max_reg_iter: int = 60
    grad_tol: float = 1e-7
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    optimizer: str = "lbfgs"
    history: int = 8
    pin_identity: bool = False
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.levels < 1 or self.max_outer < 1:
            raise ValueError("levels and max_outer must be at least 1")
        if self.tol <= 0.0 or self.grad_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.optimizer not in ("lbfgs", "gd"):
            raise ValueError("optimizer must be 'lbfgs' or 'gd'")


@dataclass
class RegistrationResult:
    deformation: Deformation
    value: float
    parts: dict
    iterations: int
    grad_norm: float
    stalled: bool = False


@dataclass(frozen=True)
class DiscretePath:
    """K+1 images, K deformations and the per-step energies."""

    images: tuple
    deformations: tuple
    step_energies: tuple

    def __post_init__(self):
        if len(self.images) != len(self.deformations) + 1:
            raise ValueError("need one deformation per consecutive image pair")
        if len(self.deformations) != len(self.step_energies):
            raise ValueError("need one energy per step")
        if self.K < 2:
            raise ValueError("paths need at least K=2 steps")

    @property
    def K(self) -> int:
        return len(self.deformations)

    @property
    def total_energy(self) -> float:
        return self.K * float(sum(self.step_energies))


def path_energy(path: DiscretePath, params: ModelParams) -> float:
    """Recomputed total energy K * sum of pair energies."""
    total = 0.0
    for k in range(path.K):
        total += energy_mod.pair_energy(
            path.images[k], path.images[k + 1], path.deformations[k], params
        )
    return path.K * total


# ---------------------------------------------------------------------------
# single-pair registration


def _violation(grid: GridSpec, u, epsilon: float) -> bool:
    pos = grid.nodes() + u
    if float(np.max(pos)) > 1.0 + field_mod.OVERSHOOT_TOL:
        return True
    if float(np.min(pos)) < -field_mod.OVERSHOOT_TOL:
        return True
    jac = field_mod.displacement_jacobian(grid, u)
    idx = np.arange(grid.ndim)
    jac[..., idx, idx] += 1.0
    return float(np.min(np.linalg.det(jac))) <= epsilon


def _descend(I, J, u0, params: ModelParams, config: SolverConfig, max_iter: int):
    """Admissibility-preserving descent from u0 (which must be admissible)."""
    grid = I.grid
    eps = params.coupling.epsilon

    def value(u):
        return energy_mod.pair_energy_parts(
            I, J, Deformation(grid, u, eps, validate=False), params
        )

    def grad(u):
        return energy_mod.pair_energy_gradient(
            I, J, Deformation(grid, u, eps, validate=False), params
        )

    u = u0.copy()
    parts = value(u)
    g = grad(u)
    mem: deque = deque(maxlen=config.history)
    stalled = False
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= config.grad_tol:
            break
        d = -_lbfgs_direction(g, mem) if config.optimizer == "lbfgs" else -g
        slope = float(np.sum(g * d))
        if slope >= 0.0:
            d = -g
            slope = -float(np.sum(g * g))
        accepted = False
        for fallback in range(2):
            step = 1.0
            for _ in range(config.max_backtracks):
                u_try = u + step * d
                if not _violation(grid, u_try, eps):
                    parts_try = value(u_try)
                    if parts_try["total"] <= parts["total"] + config.armijo * step * slope:
                        accepted = True
                        break
                step *= config.shrink
            if accepted or config.optimizer == "gd" or fallback == 1:
                break
            d = -g  # retry the line search along steepest descent
            slope = -float(np.sum(g * g))
        if not accepted:
            stalled = True
            break
        g_new = grad(u_try)
        s = (u_try - u).ravel()
        y = (g_new - g).ravel()
        ys = float(np.dot(y, s))
        if ys > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            mem.append((s, y, ys))
        u, parts, g = u_try, parts_try, g_new
    return u, parts, float(np.max(np.abs(g))), it, stalled


def _lbfgs_direction(g, mem):
    q = g.ravel().copy()
    alphas = []
    for s, y, ys in reversed(mem):
        a = np.dot(s, q) / ys
        q -= a * y
        alphas.append(a)
    if mem:
        s, y, ys = mem[-1]
        q *= ys / np.dot(y, y)
    for (s, y, ys), a in zip(mem, reversed(alphas)):
        b = np.dot(y, q) / ys
        q += (a - b) * s
    return q.reshape(g.shape)


def _coarse_grids(grid: GridSpec, levels: int):
    grids = [grid]
    while len(grids) < levels:
        shape = tuple((s + 1) // 2 for s in grids[-1].shape)
        if any(s < 5 for s in shape) or shape == grids[-1].shape:
            break
        grids.append(GridSpec(shape))
    return grids[::-1]  # coarse to fine


def register(
    I: ManifoldImage,
    J: ManifoldImage,
    params: ModelParams,
    config: SolverConfig = SolverConfig(),
    init: Deformation | None = None,
) -> RegistrationResult:
    """Minimize the pair energy over admissible deformations.

    Cold starts run coarse-to-fine over a factor-2 grid pyramid; a warm
    ``init`` skips the pyramid and is kept only if it beats the identity.
    The result is never worse than the identity deformation.
    """
    if I.grid != J.grid:
        raise GridMismatchError("images live on different grids")
    if I.kind != J.kind:
        raise KindMismatchError("images have different kinds")
    grid = I.grid
    eps = params.coupling.epsilon

    if init is None:
        u = np.zeros(grid.shape + (grid.ndim,))
        for level in _coarse_grids(grid, config.levels):
            if level != grid:
                I_l = field_mod.resample_image(I, level)
                J_l = field_mod.resample_image(J, level)
                u_l = field_mod.resample_displacement(
                    Deformation(grid, u, eps, validate=False), level
                ).displacement
            else:
                I_l, J_l, u_l = I, J, u
            while _violation(level, u_l, eps) and np.any(u_l):
                u_l = 0.5 * u_l
            u_l, _, _, _, _ = _descend(I_l, J_l, u_l, params, config, config.max_reg_iter)
            u = (
                u_l
                if level == grid
                else field_mod.resample_displacement(
                    Deformation(level, u_l, eps, validate=False), grid
                ).displacement
            )
        while _violation(grid, u, eps) and np.any(u):
            u = 0.5 * u
    else:
        if init.grid != grid:
            raise GridMismatchError("warm start lives on the wrong grid")
        u = init.displacement.copy()

    # never start worse than the identity
    zero = np.zeros_like(u)
    if np.any(u):
        e_u = energy_mod.pair_energy(I, J, Deformation(grid, u, eps, validate=False), params)
        e_id = energy_mod.pair_energy(I, J, Deformation(grid, zero, eps, validate=False), params)
        if e_id < e_u:
            u = zero
    u, parts, gnorm, iters, stalled = _descend(I, J, u, params, config, config.max_reg_iter)
    return RegistrationResult(
        Deformation(grid, u, eps, validate=False), parts["total"], parts, iters, gnorm, stalled
    )


# ---------------------------------------------------------------------------
# image update (exact pointwise minimizer for frozen deformations)


def blended_initial_path(I_A: ManifoldImage, I_B: ManifoldImage, K: int, epsilon: float):
    """Pointwise geodesic interpolation with identity deformations."""
    images = [I_A]
    for k in range(1, K):
        vals = manifold.geodesic(I_A.kind, I_A.values, I_B.values, k / K)
        images.append(ManifoldImage(I_A.grid, I_A.kind, vals))
    images.append(I_B)
    deformations = [Deformation.identity(I_A.grid, epsilon) for _ in range(K)]
    return images, deformations


def pointwise_image_update(path: DiscretePath) -> list:
    """Candidate interior images: for each k and node y the weighted mean of
    a = I_{k-1}(phi_k^{-1}(y)) and b = I_{k+1}(phi_{k+1}(y)) with weights
    (det D phi_k^{-1}(y), 1)."""
    K = path.K
    kind = path.images[0].kind
    grid = path.images[0].grid
    new_images = [path.images[0]]
    for k in range(1, K):
        inv = field_mod.invert(path.deformations[k - 1])
        a = field_mod.warp(path.images[k - 1], inv).values
        w1 = field_mod.jacobian_det(inv)
        b = field_mod.warp(path.images[k + 1], path.deformations[k]).values
        vals = manifold.weighted_mean(kind, a, b, w1, np.ones_like(w1))
        new_images.append(ManifoldImage(grid, kind, vals))
    new_images.append(path.images[K])
    return new_images


def _step_energies(images, deformations, params: ModelParams):
    return tuple(
        energy_mod.pair_energy(images[k], images[k + 1], deformations[k], params)
        for k in range(len(deformations))
    )


def update_images(path: DiscretePath, params: ModelParams) -> DiscretePath:
    """Image half-step; falls back to the unchanged path if the recomputed
    total energy would increase (interpolation effects can spoil the
    pointwise argument by a quadrature-level amount)."""
    candidate_images = pointwise_image_update(path)
    energies = _step_energies(candidate_images, path.deformations, params)
    candidate = DiscretePath(tuple(candidate_images), path.deformations, energies)
    if candidate.total_energy <= path.total_energy:
        return candidate
    return path


@dataclass
class SolveReport:
    """Energy trace of one alternation run: (phase, total energy) tuples."""

    trace: list = field(default_factory=list)
    outer_iterations: int = 0
    converged: bool = False
    stalled_registrations: int = 0

    def record(self, phase: str, value: float):
        self.trace.append((phase, float(value)))


def _register_all(images, deformations, params, config):
    K = len(deformations)

    def task(k):
        return register(images[k], images[k + 1], params, config, init=deformations[k])

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(task, range(K)))
    return [task(k) for k in range(K)]


def discrete_geodesic(
    I_A: ManifoldImage,
    I_B: ManifoldImage,
    K: int,
    params: ModelParams,
    config: SolverConfig = SolverConfig(),
) -> tuple:
    """Alternating minimization of the path energy between fixed endpoints.

    Returns ``(path, report)``. The trace in the report is non-increasing
    by construction; iteration stops once the relative energy decrease of
    a full outer iteration falls below ``config.tol``.
    """
    if I_A.grid != I_B.grid:
        raise GridMismatchError("endpoint grids differ")
    if I_A.kind != I_B.kind:
        raise KindMismatchError("endpoint kinds differ")
    if K < 2:
        raise ValueError("K must be at least 2")

    images, deformations = blended_initial_path(I_A, I_B, K, params.coupling.epsilon)
    energies = _step_energies(images, deformations, params)
    path = DiscretePath(tuple(images), tuple(deformations), energies)
    report = SolveReport()
    report.record("init", path.total_energy)

    first = True
    for outer in range(1, config.max_outer + 1):
        report.outer_iterations = outer
        j_before = path.total_energy

        if not config.pin_identity:
            results = _register_all(
                path.images,
                path.deformations if not first else [None] * K,
                params,
                config,
            )
            report.stalled_registrations += sum(r.stalled for r in results)
            path = DiscretePath(
                path.images,
                tuple(r.deformation for r in results),
                tuple(r.value for r in results),
            )
            report.record("register", path.total_energy)
        first = False

        path = update_images(path, params)
        report.record("update", path.total_energy)

        j_after = path.total_energy
        denom = max(abs(report.trace[0][1]), 1e-30)
        if (j_before - j_after) / denom < config.tol:
            report.converged = True
            break
    return path, report
