"""Convergence experiments: K sweeps and recovery-rate measurements."""

from __future__ import annotations

import numpy as np

from .. import extension, field
from ..energy import ModelParams, theta_diagnostic
from ..pathsolver import DiscretePath, SolverConfig, discrete_geodesic

#: common sampling times for comparing extended paths across K levels
SWEEP_TIMES = tuple(j / 8 for j in range(9))


def path_diagnostics(path: DiscretePath, params: ModelParams) -> dict:
    min_det = min(float(np.min(field.jacobian_det(d))) for d in path.deformations)
    theta = [
        theta_diagnostic(d, r, params.reg)
        for d, r in zip(path.deformations, path.step_energies)
    ]
    return {
        "min_jacobian_det": min_det,
        "theta_pairs": [[lhs, bound] for lhs, bound in theta],
        "step_energies": list(path.step_energies),
        "total_energy": path.total_energy,
    }


def sweep(I_A, I_B, Ks, params: ModelParams, config: SolverConfig) -> dict:
    """Solve the path problem for every K and measure cross-K agreement.

    For consecutive K levels the extended paths are compared in the
    integral image metric at the common times j/8, and the energy gaps
    |J_{2K} - J_K| are tabulated.
    """
    Ks = sorted(int(k) for k in Ks)
    levels = []
    bundles = {}
    for K in Ks:
        path, report = discrete_geodesic(I_A, I_B, K, params, config)
        bundles[K] = extension.extend_path(path)
        diag = path_diagnostics(path, params)
        diag.update(
            {
                "K": K,
                "outer_iterations": report.outer_iterations,
                "converged": report.converged,
                "trace": [[phase, val] for phase, val in report.trace],
            }
        )
        levels.append(diag)
    consecutive = []
    for K_lo, K_hi in zip(Ks[:-1], Ks[1:]):
        per_time = [
            field.l2_distance(bundles[K_lo].image_at(t), bundles[K_hi].image_at(t))
            for t in SWEEP_TIMES
        ]
        consecutive.append(
            {
                "K": K_lo,
                "K_next": K_hi,
                "sample_times": list(SWEEP_TIMES),
                "path_distances": per_time,
                "mean_path_distance": float(np.mean(per_time)),
                "energy_gap": abs(levels[Ks.index(K_hi)]["total_energy"] - levels[Ks.index(K_lo)]["total_energy"]),
            }
        )
    return {"levels": levels, "consecutive": consecutive}


def fit_decay_exponent(Ks, gaps) -> float:
    """Least-squares slope of log|gap| against log K (decay is negative)."""
    Ks = np.asarray(Ks, dtype=float)
    gaps = np.maximum(np.abs(np.asarray(gaps, dtype=float)), 1e-300)
    return float(np.polyfit(np.log(Ks), np.log(gaps), 1)[0])


def recovery_experiment(
    scenario, Ks, params: ModelParams, S: int = 64, compat_tol: float = 1e-2
) -> dict:
    """Recovery energies against the continuous energy over a K range."""
    rows = []
    continuous = extension.continuous_energy(scenario, scenario.I_A.grid, params)
    for K in sorted(int(k) for k in Ks):
        res = extension.recovery_sequence(scenario, K, params, S=S, compat_tol=compat_tol)
        rows.append(
            {
                "K": K,
                "energy": res.energy,
                "gap": res.energy - continuous,
                "beta": res.beta,
                "guarded_fraction": res.guarded_fraction,
                "compat_violation": res.compat_violation,
            }
        )
    exponent = fit_decay_exponent([r["K"] for r in rows], [r["gap"] for r in rows])
    return {
        "scenario": scenario.label,
        "continuous_energy": continuous,
        "levels": rows,
        "decay_exponent": exponent,
    }
