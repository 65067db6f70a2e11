"""Config files (TOML or JSON) and CLI overrides for run parameters.

Sections: ``[density]`` (lambda, mu, beta), ``[regularizer]`` (gamma, m,
pragmatic), ``[coupling]`` (delta, epsilon), ``[solver]`` and ``[sweep]``.
Flag values override file values; defaults fill the rest.
"""

from __future__ import annotations

import json
import sys

from ..energy import CouplingParams, DensityParams, ModelParams, RegParams
from ..pathsolver import SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def load_config(path) -> dict:
    text = open(path, "rb").read()
    if str(path).endswith(".json"):
        return json.loads(text.decode("utf-8"))
    return tomllib.loads(text.decode("utf-8"))


def _merged(cfg: dict, section: str, overrides: dict) -> dict:
    out = dict(cfg.get(section, {}))
    for key, val in overrides.items():
        if val is not None:
            out[key] = val
    return out


def build_params(cfg: dict, args=None) -> ModelParams:
    """ModelParams from a config dict plus parsed-argument overrides."""
    a = vars(args) if args is not None else {}
    density = _merged(cfg, "density", {"lam": a.get("lam"), "mu": a.get("mu"), "beta": a.get("beta")})
    reg = _merged(
        cfg,
        "regularizer",
        {"gamma": a.get("gamma"), "m": a.get("m"), "pragmatic": a.get("pragmatic_m2") or None},
    )
    coupling = _merged(
        cfg, "coupling", {"delta": a.get("delta"), "epsilon": a.get("epsilon")}
    )
    return ModelParams(DensityParams(**density), RegParams(**reg), CouplingParams(**coupling))


def build_solver_config(cfg: dict, args=None) -> SolverConfig:
    a = vars(args) if args is not None else {}
    solver = _merged(
        cfg,
        "solver",
        {
            "levels": a.get("levels"),
            "tol": a.get("tol"),
            "seed": a.get("seed"),
            "threads": a.get("threads"),
            "max_outer": a.get("max_outer"),
            "max_reg_iter": a.get("max_reg_iter"),
            "pin_identity": a.get("pin_identity") or None,
        },
    )
    return SolverConfig(**solver)


def config_echo(params: ModelParams, solver: SolverConfig | None = None) -> dict:
    echo = {
        "density": {
            "lam": params.density.lam,
            "mu": params.density.mu,
            "beta": params.density.beta,
        },
        "regularizer": {
            "gamma": params.reg.gamma,
            "m": params.reg.m,
            "pragmatic": params.reg.pragmatic,
        },
        "coupling": {"delta": params.coupling.delta, "epsilon": params.coupling.epsilon},
    }
    if solver is not None:
        echo["solver"] = {
            "levels": solver.levels,
            "max_outer": solver.max_outer,
            "tol": solver.tol,
            "max_reg_iter": solver.max_reg_iter,
            "grad_tol": solver.grad_tol,
            "optimizer": solver.optimizer,
            "pin_identity": solver.pin_identity,
            "threads": solver.threads,
            "seed": solver.seed,
        }
    return echo
