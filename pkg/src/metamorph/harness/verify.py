"""Invariant suites behind the ``verify`` CLI subcommand.

Each suite returns a list of ``(name, passed, detail)`` tuples; the CLI
prints one line per check. Sample counts are parameters so the same
suites run small from the CLI and at full size in the acceptance tests.
"""

from __future__ import annotations

import numpy as np

from .. import energy, extension, field, manifold
from ..energy import DensityParams
from ..field import Deformation, GridSpec
from ..manifold import ManifoldKind
from ..pathsolver import SolverConfig, discrete_geodesic
from . import synth

GEOMETRY_KINDS = (
    ManifoldKind.spd(2),
    ManifoldKind.spd(3),
    ManifoldKind.hyperboloid(2),
    ManifoldKind.euclidean(3),
)


def _check(name, passed, detail):
    return (name, bool(passed), detail)


def manifold_suite(samples: int = 2000, seed: int = 0, tol: float = 1e-9):
    rng = np.random.default_rng(seed)
    out = []
    for kind in GEOMETRY_KINDS:
        p = synth.random_points(kind, samples, rng)
        q = synth.random_points(kind, samples, rng)
        r = synth.random_points(kind, samples, rng)
        d_pq = manifold.dist(kind, p, q)
        out.append(
            _check(f"{kind} symmetry", np.max(np.abs(d_pq - manifold.dist(kind, q, p))) <= tol,
                   f"max asymmetry {np.max(np.abs(d_pq - manifold.dist(kind, q, p))):.2e}")
        )
        out.append(
            _check(f"{kind} identity", np.max(manifold.dist(kind, p, p)) <= tol,
                   f"max d(p,p) {np.max(manifold.dist(kind, p, p)):.2e}")
        )
        tri = manifold.dist(kind, p, q) + manifold.dist(kind, q, r) - manifold.dist(kind, p, r)
        out.append(_check(f"{kind} triangle", tri.min() >= -tol, f"min slack {tri.min():.2e}"))

        s = rng.uniform(size=samples)
        t = rng.uniform(size=samples)
        gs = manifold.geodesic(kind, p, q, s)
        gt = manifold.geodesic(kind, p, q, t)
        aff = np.abs(manifold.dist(kind, gs, gt) - np.abs(s - t) * d_pq)
        out.append(_check(f"{kind} geodesic affinity", aff.max() <= tol, f"max {aff.max():.2e}"))

        v = manifold.logmap(kind, p, q)
        back = manifold.expmap(kind, p, v)
        rt = np.max(np.abs(back - q))
        out.append(_check(f"{kind} exp/log roundtrip", rt <= tol, f"max {rt:.2e}"))
        nrm = np.abs(manifold.tangent_norm(kind, p, v) - d_pq)
        out.append(_check(f"{kind} log norm = distance", nrm.max() <= tol, f"max {nrm.max():.2e}"))

        quad = synth.random_points(kind, samples, rng)
        cat0 = manifold.check_cat0(kind, p, q, r, quad)
        out.append(_check(f"{kind} quadruple comparison", cat0.min() >= -tol, f"min {cat0.min():.2e}"))
        conv = manifold.check_joint_convexity(kind, p, q, r, quad, rng.uniform(size=samples))
        out.append(_check(f"{kind} joint convexity", conv.min() >= -tol, f"min {conv.min():.2e}"))

        mid = manifold.geodesic(kind, p, q, 0.5)
        gap = np.abs(manifold.dist(kind, p, mid) - 0.5 * d_pq)
        out.append(_check(f"{kind} midpoint", gap.max() <= tol, f"max {gap.max():.2e}"))

    # affine invariance of the SPD metric
    kind = ManifoldKind.spd(2)
    p = synth.random_points(kind, samples, rng)
    q = synth.random_points(kind, samples, rng)
    g = np.eye(2) + 0.5 * rng.normal(size=(samples, 2, 2))
    keep = np.abs(np.linalg.det(g)) > 0.2
    g, pk, qk = g[keep], p[keep], q[keep]
    pm = g @ manifold._kernels.sym_unpack(pk) @ np.swapaxes(g, 1, 2)
    qm = g @ manifold._kernels.sym_unpack(qk) @ np.swapaxes(g, 1, 2)
    d1 = manifold.dist(kind, pk, qk)
    d2 = manifold.dist(
        kind, manifold._kernels.sym_pack(pm), manifold._kernels.sym_pack(qm)
    )
    gap = np.max(np.abs(d1 - d2))
    out.append(_check("spd(2) congruence invariance", gap <= 1e-9, f"max {gap:.2e}"))
    return out


def density_suite(samples: int = 10000, seed: int = 1, params: DensityParams | None = None):
    rng = np.random.default_rng(seed)
    dp = params or DensityParams(lam=1.0, mu=1.0)
    out = []
    eye = np.eye(2)
    out.append(_check("W(1) = 0", energy.density_W(eye, dp) == 0.0, f"{energy.density_W(eye, dp):.2e}"))
    gnorm = float(np.max(np.abs(energy.density_gradient(eye, dp))))
    out.append(_check("DW(1) = 0", gnorm <= 1e-12, f"|DW(1)| {gnorm:.2e}"))

    # Hessian at the identity against the dissipation quadratic form
    h = 1e-3
    worst = 0.0
    for _ in range(100):
        B = rng.normal(size=(2, 2))
        val = (energy.density_W(eye + h * B, dp) + energy.density_W(eye - h * B, dp)) / (h * h)
        target = 2.0 * energy.quadratic_form(B, dp.lam, dp.mu)
        worst = max(worst, abs(val - target) / max(abs(target), 1e-12))
    out.append(_check("Hessian(1) matches quadratic form", worst <= 1e-6, f"max rel {worst:.2e}"))

    # growth near the identity: W >= mu |A^sym - 1|^2 inside |A - 1| < 1
    B = rng.normal(size=(samples, 2, 2))
    B *= (rng.uniform(0.0, 0.99, size=samples) / np.maximum(np.linalg.norm(B, axis=(1, 2)), 1e-12))[:, None, None]
    A = eye + B
    ok = np.linalg.det(A) > 0
    W = energy.density_W(A[ok], dp)
    sym_dev = 0.5 * (A[ok] + np.swapaxes(A[ok], 1, 2)) - eye
    slack = W - dp.mu * np.sum(sym_dev**2, axis=(1, 2))
    out.append(_check("near-identity growth", slack.min() >= -1e-12, f"min slack {slack.min():.2e}"))

    # growth away from the identity, including pure-skew directions
    B = rng.normal(size=(samples, 2, 2))
    B *= (rng.uniform(1.0, 4.0, size=samples) / np.maximum(np.linalg.norm(B, axis=(1, 2)), 1e-12))[:, None, None]
    A = eye + B
    far = A[np.linalg.det(A) > 1e-8]
    a = rng.uniform(0.5, 4.0, size=samples)
    skew = np.zeros((samples, 2, 2))
    skew[:, 0, 1], skew[:, 1, 0] = a, -a
    far = np.concatenate([far, eye + skew])
    Wfar = energy.density_W(far, dp)
    out.append(
        _check("far-field growth floor", Wfar.min() > 0.0, f"fitted floor {Wfar.min():.3e}")
    )

    # midpoint convexity on pairs with positive-determinant midpoints
    A1 = eye + 0.6 * rng.normal(size=(samples, 2, 2))
    A2 = eye + 0.6 * rng.normal(size=(samples, 2, 2))
    mid = 0.5 * (A1 + A2)
    ok = (np.linalg.det(A1) > 0.05) & (np.linalg.det(A2) > 0.05) & (np.linalg.det(mid) > 0.05)
    gap = (
        0.5 * (energy.density_W(A1[ok], dp) + energy.density_W(A2[ok], dp))
        - energy.density_W(mid[ok], dp)
    )
    out.append(_check("midpoint convexity (sampled)", gap.min() >= -1e-9, f"min {gap.min():.2e}"))
    return out


def field_suite(seed: int = 2):
    rng = np.random.default_rng(seed)
    grid = GridSpec((17, 17))
    out = []
    kind = ManifoldKind.spd(2)
    I_A, _ = synth.spd_blob_pair(grid)
    ident = Deformation.identity(grid)
    out.append(
        _check("warp by identity is exact", np.array_equal(field.warp(I_A, ident).values, I_A.values), "")
    )
    u = np.zeros(grid.shape + (2,))
    bump = synth.interior_bump(grid)
    u[..., 0] = 0.04 * bump
    u[..., 1] = -0.03 * bump
    defm = Deformation(grid, u, epsilon=0.2)
    const_vals = np.tile(np.array([1.3, 0.2, 0.8]), grid.shape + (1,))
    const = field.warp(field.ManifoldImage(grid, kind, const_vals), defm)
    gap = np.max(np.abs(const.values - const_vals))
    out.append(_check("warp preserves constant images", gap <= 1e-12, f"max {gap:.2e}"))

    inv = field.invert(defm)
    res = np.max(
        np.abs(
            inv.displacement
            + field.sample_linear(grid, u, np.clip(grid.nodes() + inv.displacement, 0, 1))
        )
    )
    out.append(_check("inverse roundtrip at nodes", res <= 1e-8, f"max {res:.2e}"))

    det = field.jacobian_det(Deformation.identity(grid))
    out.append(_check("identity jacobian", np.max(np.abs(det - 1.0)) <= 1e-14, ""))

    a = rng.normal(size=grid.shape)
    b = rng.normal(size=grid.shape)
    h = grid.spacing[0]
    adj = abs(
        float(np.sum(field.diff_axis(a, 0, h) * b))
        - float(np.sum(a * field.diff_axis_adjoint(b, 0, h)))
    )
    out.append(_check("stencil adjoint identity", adj <= 1e-10, f"gap {adj:.2e}"))
    return out


def extension_suite(seed: int = 3, samples: int = 300):
    out = []
    grid = GridSpec((12, 12))
    I_A, I_B = synth.spd_blob_pair(grid)
    params = synth.default_params()
    path, _ = discrete_geodesic(
        I_A, I_B, 3, params, SolverConfig(levels=1, max_outer=3, max_reg_iter=15)
    )
    bundle = extension.extend_path(path)
    rep = extension.verify_admissibility(bundle, num_samples=samples, S=32, rng=seed)
    out.append(
        _check(
            "transport inequality",
            rep["max_violation"] <= rep["tol"],
            f"max violation {rep['max_violation']:.2e}",
        )
    )
    out.append(
        _check(
            "within-step equality",
            rep["max_within_step_gap"] <= 1e-6,
            f"max gap {rep['max_within_step_gap']:.2e}",
        )
    )
    r1 = extension.ode_residual(bundle, 16)
    r2 = extension.ode_residual(bundle, 32)
    out.append(
        _check("flow ODE residual halves", 0.35 <= r2 / r1 <= 0.65, f"ratio {r2 / r1:.3f}")
    )
    worst = 0.0
    for t in (0.4, 1.0):
        back = bundle.X_at(t, queries=bundle.Y_at(t))
        worst = max(worst, float(np.max(np.abs(back - grid.nodes()))))
    out.append(_check("inverse flow roundtrip", worst <= 1e-8, f"max {worst:.2e}"))
    return out


SUITES = {
    "manifold": manifold_suite,
    "density": density_suite,
    "field": field_suite,
    "extension": extension_suite,
}


def run_suites(names, **kwargs):
    results = []
    for name in names:
        results.extend(SUITES[name](**kwargs.get(name, {})))
    return results
