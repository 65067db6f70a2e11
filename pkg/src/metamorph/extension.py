"""Continuous-time extension of discrete paths and recovery sequences.

A discrete path is turned into a time-continuous object by three linked
constructions:

* per-step transport maps, affine in time, concatenated into a flow
  ``Y`` with spatial inverse ``X``;
* an image extension that geodesically blends consecutive images along
  the transport and evaluates the blend at the pulled-back position;
* a scalar rate ``z`` (the material derivative), K times the pointwise
  distance between the blended pair, transported the same way.

Along flow trajectories the construction satisfies, step by step, an
exact transport identity; the admissibility verifier exploits it so that
within-step inequality residuals reduce to geodesic-affinity errors of
the geometry kernels, while cross-step residuals probe the genuine
triangle-inequality slack.

The recovery constructor approximates an analytic velocity/rate scenario
by step-averaged deformations and guarded geodesic reparameterization,
producing discrete paths whose energies approach the continuous energy
from above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import energy as energy_mod
from . import field as field_mod
from . import manifold
from .energy import ModelParams
from .errors import ScenarioError
from .field import Deformation, GridSpec, ManifoldImage
from .pathsolver import DiscretePath


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0,1] into K steps of size tau = 1/K."""

    K: int

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("time grids need K >= 2")

    @property
    def tau(self) -> float:
        return 1.0 / self.K

    def nodes(self):
        return np.arange(self.K + 1) / self.K

    def step_of(self, t: float) -> int:
        """Index k in 1..K with t in [t_{k-1}, t_k); t=1 belongs to step K."""
        if not 0.0 <= t <= 1.0:
            raise ValueError("time must lie in [0, 1]")
        return min(int(np.floor(t * self.K)) + 1, self.K)

    def local(self, t: float, k: int) -> float:
        """Affine coordinate K*(t - t_{k-1}) within step k."""
        return t * self.K - (k - 1)


def transport_map(defm: Deformation, K: int, k: int, t: float):
    """Positions of the step-k transport y(t,x) = x + (t - t_{k-1}) K u(x)."""
    tg = TimeGrid(K)
    lo, hi = (k - 1) * tg.tau, k * tg.tau
    if not lo <= t <= hi:
        raise ValueError(f"t={t} outside step {k} of a {K}-step grid")
    return defm.grid.nodes() + (t - lo) * K * defm.displacement


class ExtensionBundle:
    """Sampled flows, velocities, image extension and material derivative
    of one discrete path."""

    def __init__(self, path: DiscretePath):
        self.path = path
        self.tgrid = TimeGrid(path.K)
        grid = path.images[0].grid
        self.grid = grid
        self.kind = path.images[0].kind
        K = path.K

        # forward flow at step boundaries and per-step increments
        nodes = grid.nodes()
        y_bound = [nodes]
        incr = []
        for k in range(1, K + 1):
            prev = y_bound[-1]
            step_u = field_mod.sample_linear(grid, path.deformations[k - 1].displacement, prev)
            incr.append(step_u)
            y_bound.append(prev + step_u)
        self.Y_bound = np.stack(y_bound)
        self.incr = np.stack(incr)

        # image samples along trajectories: T_k = I_k o Y(t_k, .)
        traj = [path.images[0].values]
        for k in range(1, K + 1):
            traj.append(field_mod.sample_image(path.images[k], self.Y_bound[k]))
        self.traj_values = np.stack(traj)
        self.traj_dists = np.stack(
            [
                manifold.dist(self.kind, self.traj_values[k - 1], self.traj_values[k])
                for k in range(1, K + 1)
            ]
        )

        # node-field view of the blended pair per step: I_{k-1} and I_k o phi_k
        self.warped = [
            field_mod.warp(path.images[k], path.deformations[k - 1]) for k in range(1, K + 1)
        ]
        self.step_dist_fields = np.stack(
            [
                manifold.dist(self.kind, path.images[k - 1].values, self.warped[k - 1].values)
                for k in range(1, K + 1)
            ]
        )

        self._inverses: dict = {}
        self._x_bound = None

    # -- forward flow -----------------------------------------------------

    def Y_at(self, t: float):
        """Flow positions Y(t, x) for all nodes x (affine within steps)."""
        k = self.tgrid.step_of(t)
        s = self.tgrid.local(t, k)
        return self.Y_bound[k - 1] + s * self.incr[k - 1]

    def flow_samples(self, S: int):
        """Y at the K*S+1 uniform sample times."""
        K = self.path.K
        out = np.empty((K * S + 1,) + self.Y_bound.shape[1:])
        for k in range(1, K + 1):
            for j in range(S):
                s = j / S
                out[(k - 1) * S + j] = self.Y_bound[k - 1] + s * self.incr[k - 1]
        out[-1] = self.Y_bound[-1]
        return out

    # -- inverse flow ------------------------------------------------------

    def _step_inverse(self, k: int, s: float):
        """Node positions of the inverse of the step-k transport at local
        coordinate s: the inverse of x + s*u_k(x)."""
        key = (k, round(float(s), 12))
        if key not in self._inverses:
            u = s * self.path.deformations[k - 1].displacement
            if not np.any(u):
                pos = self.grid.nodes()
            else:
                eps = self.path.deformations[k - 1].epsilon
                scaled = Deformation(self.grid, u, eps, validate=False)
                pos = self.grid.nodes() + field_mod.invert(scaled).displacement
            self._inverses[key] = pos
        return self._inverses[key]

    @property
    def X_bound(self):
        """Inverse flow at step boundaries (node maps)."""
        if self._x_bound is None:
            nodes = self.grid.nodes()
            x_bound = [nodes]
            for k in range(1, self.path.K + 1):
                p_step = self._step_inverse(k, 1.0)
                chained = field_mod.sample_linear(self.grid, x_bound[-1], p_step)
                x_bound.append(
                    field_mod.invert_position_map(self.grid, self.Y_bound[k], nodes, init=chained)
                )
            self._x_bound = np.stack(x_bound)
        return self._x_bound

    def X_at(self, t: float, queries=None):
        """Inverse flow X(t, q): Newton preimages under the composed
        forward map, seeded by the chained per-step inverse so that the
        correct branch is tracked even for strongly compressed flows.
        Grid nodes are used when ``queries`` is omitted."""
        if queries is None:
            queries = self.grid.nodes()
        k = self.tgrid.step_of(t)
        s = self.tgrid.local(t, k)
        y_map = self.Y_bound[k - 1] + s * self.incr[k - 1]
        u_k = self.path.deformations[k - 1].displacement
        step_map = self.grid.nodes() + s * u_k
        p_step = field_mod.invert_position_map(self.grid, step_map, queries)
        init = field_mod.sample_linear(self.grid, self.X_bound[k - 1], p_step)
        return field_mod.invert_position_map(self.grid, y_map, queries, init=init)

    def inverse_flow_samples(self, S: int):
        K = self.path.K
        times = np.arange(K * S + 1) / (K * S)
        return np.stack([self.X_at(t) for t in times])

    # -- velocities ---------------------------------------------------------

    def w(self, k: int):
        """Piecewise-constant velocity of step k: K * u_k at the nodes."""
        return self.path.K * self.path.deformations[k - 1].displacement

    def v_at(self, t: float):
        """Velocity field v(t, x) = w_k(x_k(t, x)) at the nodes."""
        k = self.tgrid.step_of(t)
        s = self.tgrid.local(t, k)
        p = self._step_inverse(k, s)
        return field_mod.sample_linear(self.grid, self.w(k), p)

    # -- image extension and material derivative ----------------------------

    def image_at(self, t: float) -> ManifoldImage:
        """Extended image at time t: geodesic blend of the step's image pair
        evaluated at the pulled-back position."""
        if t == 1.0:
            return self.path.images[-1]
        k = self.tgrid.step_of(t)
        s = self.tgrid.local(t, k)
        blend = manifold.geodesic(
            self.kind, self.path.images[k - 1].values, self.warped[k - 1].values, s
        )
        p = self._step_inverse(k, s)
        if s == 0.0:
            return self.path.images[k - 1]
        vals = field_mod.sample_image(ManifoldImage(self.grid, self.kind, blend), p)
        return ManifoldImage(self.grid, self.kind, vals)

    def z_at(self, t: float):
        """Material derivative z(t, x) at the nodes: K times the blended
        pair's distance, transported like the image extension."""
        k = self.tgrid.step_of(t)
        s = self.tgrid.local(t, k)
        p = self._step_inverse(k, s)
        return self.path.K * field_mod.sample_linear(
            self.grid, self.step_dist_fields[k - 1][..., None], p
        )[..., 0]

    # -- trajectory view -----------------------------------------------------

    def traj_image(self, t: float):
        """I(t, Y(t, x)) as payloads over the starting nodes x, evaluated
        through the per-step transport identity."""
        k = self.tgrid.step_of(t)
        s = self.tgrid.local(t, k)
        return manifold.geodesic(self.kind, self.traj_values[k - 1], self.traj_values[k], s)

    def traj_z(self, t: float):
        """z(t, Y(t, x)) over starting nodes (constant within each step)."""
        k = self.tgrid.step_of(t)
        return self.path.K * self.traj_dists[k - 1]

    def traj_z_integral(self, t0: float, t1: float):
        """Exact integral of the piecewise-constant r -> z(r, Y(r, x))."""
        if t1 < t0:
            raise ValueError("need t0 <= t1")
        K = self.path.K
        out = np.zeros(self.grid.shape)
        for k in range(1, K + 1):
            lo, hi = (k - 1) / K, k / K
            overlap = max(0.0, min(t1, hi) - max(t0, lo))
            if overlap > 0.0:
                out += overlap * K * self.traj_dists[k - 1]
        return out


def extend_path(path: DiscretePath) -> ExtensionBundle:
    return ExtensionBundle(path)


def velocities(path: DiscretePath):
    """The per-step constant velocities K(phi_k - Id) and the bundle that
    evaluates the time-dependent velocity field."""
    bundle = ExtensionBundle(path)
    return [bundle.w(k) for k in range(1, path.K + 1)], bundle


def material_derivative(path: DiscretePath) -> ExtensionBundle:
    """Bundle exposing z in both views (``z_at`` on the grid, ``traj_z``
    along trajectories)."""
    return ExtensionBundle(path)


def ode_residual(bundle: ExtensionBundle, S: int) -> float:
    """Mean over the refined time samples of the sup-norm gap between the
    centered time difference of Y and the velocity along Y.

    Within steps the two sides agree exactly; samples adjacent to step
    boundaries see the velocity jump, so the mean decays like 1/S.
    """
    K = bundle.path.K
    Y = bundle.flow_samples(S)
    dt = 1.0 / (K * S)
    total = 0.0
    count = 0
    for j in range(1, K * S):
        fd = (Y[j + 1] - Y[j - 1]) / (2.0 * dt)
        k = min(j // S + 1, K)  # step owning t_j (left-closed)
        v = K * field_mod.sample_linear(
            bundle.grid, bundle.path.deformations[k - 1].displacement, bundle.Y_bound[k - 1]
        )
        total += float(np.max(np.abs(fd - v)))
        count += 1
    return total / count


def verify_admissibility(
    bundle: ExtensionBundle,
    num_samples: int = 1000,
    S: int = 64,
    rng=None,
    tol: float = 1e-4,
) -> dict:
    """Check the transport inequality d(I(t,Y(t,.)), I(s,Y(s,.))) <=
    int_t^s z(r, Y(r,.)) dr on random (t, s, x) triples.

    Times are drawn from the S-refined sample grid; the right-hand side
    integrates the piecewise-constant rate exactly. Reports the largest
    violation, the largest within-step deviation from equality, and
    whether the run passes at ``tol``.
    """
    rng = np.random.default_rng(rng)
    K = bundle.path.K
    times = np.arange(K * S + 1) / (K * S)
    max_violation = -np.inf
    max_within_gap = 0.0
    checked = 0
    while checked < num_samples:
        j1, j2 = sorted(rng.integers(0, K * S + 1, size=2))
        if j1 == j2:
            continue
        t1, t2 = times[j1], times[j2]
        v1 = bundle.traj_image(t1)
        v2 = bundle.traj_image(t2)
        lhs = manifold.dist(bundle.kind, v1, v2)
        rhs = bundle.traj_z_integral(t1, t2)
        gap = rhs - lhs
        max_violation = max(max_violation, float(np.max(-gap)))
        if bundle.tgrid.step_of(t1) == bundle.tgrid.step_of(t2):
            max_within_gap = max(max_within_gap, float(np.max(np.abs(gap))))
        checked += 1
    return {
        "samples": checked,
        "max_violation": max_violation,
        "max_within_step_gap": max_within_gap,
        "tol": tol,
        "passed": max_violation <= tol,
    }


# ---------------------------------------------------------------------------
# flow integration for analytic velocity fields


def integrate_flow(velocity, positions0, steps: int, t0: float = 0.0, t1: float = 1.0):
    """Classical fourth-order Runge-Kutta integration of dY/dt = v(t, Y).

    ``velocity(t, X)`` maps positions of shape (..., n) to velocities of
    the same shape. Returns samples at ``steps + 1`` uniform times,
    including both endpoints.
    """
    y = np.asarray(positions0, dtype=np.float64).copy()
    out = np.empty((steps + 1,) + y.shape)
    out[0] = y
    dt = (t1 - t0) / steps
    for j in range(steps):
        t = t0 + j * dt
        k1 = velocity(t, y)
        k2 = velocity(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = velocity(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = velocity(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[j + 1] = y
    return out


# ---------------------------------------------------------------------------
# recovery sequences


@dataclass(frozen=True)
class AnalyticScenario:
    """Closed-form velocity and rate driving a recovery construction.

    ``velocity(t, X)`` must vanish on the boundary of the unit cube;
    ``rate(t, X)`` must be nonnegative. The endpoint images must satisfy
    d(I_A(x), I_B(Y(1,x))) <= int_0^1 z(s, Y(s,x)) ds.
    """

    velocity: object
    rate: object
    I_A: ManifoldImage
    I_B: ManifoldImage
    label: str = "scenario"

    def __post_init__(self):
        if self.I_A.grid != self.I_B.grid or self.I_A.kind != self.I_B.kind:
            raise ScenarioError("endpoint images must share grid and kind")


@dataclass
class RecoveryResult:
    path: DiscretePath
    energy: float
    continuous_energy: float
    beta: float
    compat_violation: float
    guarded_fraction: float


def _time_weights(num: int, dt: float):
    w = np.full(num, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def continuous_energy(
    scenario: AnalyticScenario, grid: GridSpec, params: ModelParams, samples: int = 256
) -> float:
    """Quadrature value of the continuous path energy
    int_0^1 int L[v,v] + (1/delta) z^2 dx dt for the analytic fields."""
    times = np.arange(samples + 1) / samples
    wt = _time_weights(samples + 1, 1.0 / samples)
    nodes = grid.nodes()
    total = 0.0
    for t, w in zip(times, wt):
        v = scenario.velocity(t, nodes)
        z = scenario.rate(t, nodes)
        diss = energy_mod.dissipation(grid, v, params.density, params.reg)
        total += w * (diss + field_mod.integrate(grid, z**2) / params.coupling.delta)
    return total


def recovery_sequence(
    scenario: AnalyticScenario,
    K: int,
    params: ModelParams,
    S: int = 64,
    compat_tol: float = 1e-6,
) -> RecoveryResult:
    """Discrete path built from step-averaged velocities and a guarded
    geodesic reparameterization of the endpoint connection.

    The deformations are Id + w_k/K (not re-optimized); the returned
    energy evaluates the discrete path energy with exactly these
    deformations and therefore upper-bounds the optimal value.
    """
    grid = scenario.I_A.grid
    kind = scenario.I_A.kind
    nodes = grid.nodes()
    eps = params.coupling.epsilon
    n_samp = K * S + 1
    times = np.arange(n_samp) / (K * S)
    dt = 1.0 / (K * S)

    # exact flow and rate along it
    Y = integrate_flow(scenario.velocity, nodes, K * S)
    z_on_Y = np.stack([scenario.rate(t, Y[j]) for j, t in enumerate(times)])
    if np.any(z_on_Y < -1e-12):
        raise ScenarioError("rate must be nonnegative")
    z_on_Y = np.maximum(z_on_Y, 0.0)
    cum_z = np.concatenate(
        [np.zeros((1,) + grid.shape), np.cumsum(0.5 * (z_on_Y[1:] + z_on_Y[:-1]) * dt, axis=0)]
    )
    total_z = cum_z[-1]

    # compatibility of the endpoint images with the transported rate budget
    end_values = field_mod.sample_image(scenario.I_B, np.clip(Y[-1], 0.0, 1.0))
    compat = manifold.dist(kind, scenario.I_A.values, end_values) - total_z
    compat_violation = float(np.max(compat))
    if compat_violation > compat_tol:
        raise ScenarioError(
            f"scenario violates the rate budget by {compat_violation:.3e} "
            f"(needs d(I_A, I_B o Y(1)) <= integral of z)"
        )

    # step-averaged velocities and the induced small deformations
    boundary = grid.boundary_mask()
    w_fields = []
    for k in range(1, K + 1):
        sl = slice((k - 1) * S, k * S + 1)
        wt = _time_weights(S + 1, dt)
        w_k = K * np.einsum("t,t...->...", wt, np.stack([scenario.velocity(t, nodes) for t in times[sl]]))
        w_k[boundary] = 0.0
        w_fields.append(w_k)
    c1 = max(
        float(np.max(np.abs(w))) / K
        + float(np.max(np.abs(field_mod.displacement_jacobian(grid, w / K))))
        for w in w_fields
    )
    if c1 >= 1.0:
        raise ScenarioError(f"K={K} too small: C^1 size of the steps is {c1:.3f} >= 1")
    deformations = [Deformation(grid, w / K, eps) for w in w_fields]

    # discrete flow of the constructed deformations and its rate samples
    recon = DiscretePath(
        tuple([scenario.I_A] * (K + 1)), tuple(deformations), tuple([0.0] * K)
    )
    bundle = ExtensionBundle(recon)
    YK = bundle.flow_samples(S)
    z_on_YK = np.stack([scenario.rate(t, YK[j]) for j, t in enumerate(times)])
    z_on_YK = np.maximum(z_on_YK, 0.0)
    cum_zK = np.concatenate(
        [np.zeros((1,) + grid.shape), np.cumsum(0.5 * (z_on_YK[1:] + z_on_YK[:-1]) * dt, axis=0)]
    )

    # the guard: L2((0,1) x Omega) distance between the two rate samples
    wt_full = _time_weights(n_samp, dt)
    wx = grid.quad_weights()
    l2_gap = float(
        np.sqrt(np.sum(wt_full[:, None, None] * wx * (z_on_YK - z_on_Y) ** 2))
    )
    beta = max(l2_gap, 1.0 / K)

    # guarded reparameterization at the step times
    sqrt_beta = np.sqrt(beta)
    zero_budget = total_z == 0.0
    guarded = (~zero_budget) & (total_z <= sqrt_beta)
    regular = ~zero_budget & ~guarded
    guarded_fraction = float(np.mean(guarded))

    def alpha_K(k: int):
        num = cum_zK[k * S]
        out = np.zeros(grid.shape)
        out[guarded] = num[guarded] / sqrt_beta
        out[regular] = num[regular] / total_z[regular]
        return np.minimum(1.0, out)

    # images along the discrete flow: G_K(t_k, .) on the grid via X_K
    x_bound = bundle.X_bound
    start_vals = scenario.I_A.values
    end_img = ManifoldImage(grid, kind, end_values)
    images = [scenario.I_A]
    for k in range(1, K + 1):
        xi = x_bound[k]
        a = field_mod.sample_image(scenario.I_A, np.clip(xi, 0.0, 1.0))
        b = field_mod.sample_image(end_img, np.clip(xi, 0.0, 1.0))
        alpha_field = field_mod.sample_linear(grid, alpha_K(k)[..., None], np.clip(xi, 0.0, 1.0))[..., 0]
        vals = manifold.geodesic(kind, a, b, np.clip(alpha_field, 0.0, 1.0))
        images.append(ManifoldImage(grid, kind, vals))
    images[0] = scenario.I_A

    energies = tuple(
        energy_mod.pair_energy(images[k], images[k + 1], deformations[k], params)
        for k in range(K)
    )
    path = DiscretePath(tuple(images), tuple(deformations), energies)
    return RecoveryResult(
        path=path,
        energy=path.total_energy,
        continuous_energy=continuous_energy(scenario, grid, params),
        beta=beta,
        compat_violation=compat_violation,
        guarded_fraction=guarded_fraction,
    )
