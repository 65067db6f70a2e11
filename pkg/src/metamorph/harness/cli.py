"""Command-line interface.

Subcommands: ``synth``, ``register``, ``geodesic``, ``extend``,
``recover``, ``sweep``, ``render``, ``verify``. Exit codes: 0 success,
2 validation error, 3 numerical failure. Runs are deterministic for a
fixed seed, config and thread count; timing is written to a sidecar only
with ``--timing`` so reports stay byte-reproducible.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .. import extension, field
from ..errors import MetamorphError
from ..pathsolver import discrete_geodesic, register
from . import config as config_mod
from . import dti, experiments, mvf, render, report, synth, verify


def _params_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("model parameters")
    g.add_argument("--lambda", dest="lam", type=float, help="trace modulus of the density")
    g.add_argument("--mu", type=float, help="shear modulus of the density")
    g.add_argument("--beta", type=float, help="determinant-penalty weight")
    g.add_argument("--gamma", type=float, help="higher-order regularizer weight")
    g.add_argument("--m", type=int, help="regularizer differentiation order")
    g.add_argument(
        "--pragmatic-m2", action="store_true", dest="pragmatic_m2",
        help="allow m=2 below the coercivity threshold (recorded in reports)",
    )
    g.add_argument("--delta", type=float, help="data-term weight is 1/delta")
    g.add_argument("--epsilon", type=float, help="Jacobian determinant lower bound")
    g.add_argument("--config", help="TOML or JSON config file")


def _solver_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("solver")
    g.add_argument("--levels", type=int, help="pyramid levels")
    g.add_argument("--tol", type=float, help="relative energy stop tolerance")
    g.add_argument("--max-outer", dest="max_outer", type=int)
    g.add_argument("--max-reg-iter", dest="max_reg_iter", type=int)
    g.add_argument("--pin-identity", dest="pin_identity", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, help="defaults to METAMORPH_THREADS or 1")


def _resolve(args):
    cfg = config_mod.load_config(args.config) if getattr(args, "config", None) else {}
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = int(os.environ.get("METAMORPH_THREADS", "1"))
    params = config_mod.build_params(cfg, args)
    solver = config_mod.build_solver_config(cfg, args) if hasattr(args, "levels") else None
    return params, solver


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_synth(args) -> int:
    grid = field.GridSpec((args.n, args.n))
    out = _out_dir(args)
    if args.scenario == "dti-demo":
        rng = np.random.default_rng(args.seed)
        synth.write_demo_dti(os.path.join(out, "demo.raw"), (args.n, args.n), rng)
        report.dump_report(
            {"scenario": args.scenario, "shape": [args.n, args.n], "components": 6},
            os.path.join(out, "synth.json"),
        )
        return 0
    I_A, I_B = synth.scenario_pair(args.scenario, grid)
    mvf.write_image(I_A, os.path.join(out, "source.mvf"))
    mvf.write_image(I_B, os.path.join(out, "target.mvf"))
    report.dump_report(
        {"scenario": args.scenario, "shape": list(grid.shape), "kind": I_A.kind.to_json()},
        os.path.join(out, "synth.json"),
    )
    return 0


def cmd_register(args) -> int:
    params, solver = _resolve(args)
    I = mvf.read_image(args.source)
    J = mvf.read_image(args.target)
    t0 = time.perf_counter()
    res = register(I, J, params, solver)
    elapsed = time.perf_counter() - t0
    out = _out_dir(args)
    mvf.write_deformation(res.deformation, os.path.join(out, "deformation.mvf"))
    rep = {
        "config": config_mod.config_echo(params, solver),
        "value": res.value,
        "parts": res.parts,
        "iterations": res.iterations,
        "grad_norm": res.grad_norm,
        "stalled": res.stalled,
        "min_jacobian_det": float(np.min(field.jacobian_det(res.deformation))),
    }
    report.dump_report(rep, os.path.join(out, "report.json"))
    if args.timing:
        report.dump_timing({"register": elapsed}, os.path.join(out, "timing.json"))
    return 0


def cmd_geodesic(args) -> int:
    params, solver = _resolve(args)
    I_A = mvf.read_image(args.source)
    I_B = mvf.read_image(args.target)
    t0 = time.perf_counter()
    path, solve_report = discrete_geodesic(I_A, I_B, args.K, params, solver)
    elapsed = time.perf_counter() - t0
    out = _out_dir(args)
    diag = experiments.path_diagnostics(path, params)
    rep = {
        "config": config_mod.config_echo(params, solver),
        "K": path.K,
        "trace": [[phase, val] for phase, val in solve_report.trace],
        "outer_iterations": solve_report.outer_iterations,
        "converged": solve_report.converged,
        "stalled_registrations": solve_report.stalled_registrations,
    }
    rep.update(diag)
    report.save_path(path, out, extra={"config": rep["config"]})
    report.dump_report(rep, os.path.join(out, "report.json"))
    if args.timing:
        report.dump_timing({"geodesic": elapsed}, os.path.join(out, "timing.json"))
    return 0


def cmd_extend(args) -> int:
    path, _ = report.load_path(args.path)
    bundle = extension.extend_path(path)
    out = _out_dir(args)
    written = []
    for t in args.t:
        img = bundle.image_at(t)
        name = f"extended_t{t:.6f}.mvf"
        mvf.write_image(img, os.path.join(out, name))
        written.append(name)
    report.dump_report({"times": list(args.t), "files": written}, os.path.join(out, "extend.json"))
    return 0


def cmd_recover(args) -> int:
    params, _ = _resolve(args)
    grid = field.GridSpec((args.n, args.n))
    scenario = (
        synth.transport_scenario(grid)
        if args.scenario == "transport"
        else synth.blending_scenario(grid)
    )
    Ks = [int(k) for k in args.Ks.split(",")]
    rep = experiments.recovery_experiment(scenario, Ks, params, S=args.S)
    rep["config"] = config_mod.config_echo(params)
    report.dump_report(rep, os.path.join(_out_dir(args), "recover.json"))
    return 0


def cmd_sweep(args) -> int:
    params, solver = _resolve(args)
    if args.scenario:
        grid = field.GridSpec((args.n, args.n))
        I_A, I_B = synth.scenario_pair(args.scenario, grid)
    else:
        I_A = mvf.read_image(args.source)
        I_B = mvf.read_image(args.target)
    Ks = [int(k) for k in args.Ks.split(",")]
    rep = experiments.sweep(I_A, I_B, Ks, params, solver)
    rep["config"] = config_mod.config_echo(params, solver)
    report.dump_report(rep, os.path.join(_out_dir(args), "sweep.json"))
    return 0


def cmd_render(args) -> int:
    img = mvf.read_image(args.image)
    render.render_spd(img, args.out, png=args.png)
    return 0


def cmd_dti(args) -> int:
    shape = tuple(int(s) for s in args.shape.split(","))
    img, repaired = dti.load_dti_raw(args.raw, shape, project2d=args.project2d)
    out = _out_dir(args)
    mvf.write_image(img, os.path.join(out, "dti.mvf"))
    report.dump_report(
        {"repaired_voxels": repaired, "shape": list(shape), "kind": img.kind.to_json()},
        os.path.join(out, "dti.json"),
    )
    return 0


def cmd_verify(args) -> int:
    names = list(verify.SUITES) if args.suite == "all" else [args.suite]
    kwargs = {}
    for name in names:
        opts = {"seed": args.seed}
        if name in ("manifold", "density"):
            opts["samples"] = args.samples
        kwargs[name] = opts
    results = verify.run_suites(names, **kwargs)
    failed = 0
    for name, passed, detail in results:
        tag = "PASS" if passed else "FAIL"
        failed += not passed
        suffix = f" ({detail})" if detail else ""
        print(f"{tag} {name}{suffix}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="metamorph",
        description="Discrete geodesic morphing of manifold-valued images",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate bundled endpoint pairs")
    p.add_argument("--scenario", choices=synth.SCENARIOS + ("dti-demo",), required=True)
    p.add_argument("--n", type=int, default=16, help="grid nodes per axis")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("register", help="single-pair registration")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--timing", action="store_true")
    _params_flags(p)
    _solver_flags(p)
    p.set_defaults(fn=cmd_register)

    p = sub.add_parser("geodesic", help="solve the discrete path problem")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--timing", action="store_true")
    _params_flags(p)
    _solver_flags(p)
    p.set_defaults(fn=cmd_geodesic)

    p = sub.add_parser("extend", help="sample the extended image in time")
    p.add_argument("--path", required=True, help="directory written by 'geodesic'")
    p.add_argument("--t", type=float, action="append", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_extend)

    p = sub.add_parser("recover", help="recovery-sequence rate experiment")
    p.add_argument("--scenario", choices=("transport", "blend"), required=True)
    p.add_argument("--Ks", default="4,8,16,32,64")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--S", type=int, default=64, help="time samples per step")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _params_flags(p)
    p.set_defaults(fn=cmd_recover)

    p = sub.add_parser("sweep", help="K-refinement convergence study")
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--scenario", choices=synth.SCENARIOS)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--Ks", default="2,4,8,16")
    p.add_argument("--out", required=True)
    _params_flags(p)
    _solver_flags(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("render", help="SPD glyph rendering (SVG, optional PNG)")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--png", action="store_true")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("dti", help="ingest a raw diffusion-tensor volume")
    p.add_argument("--raw", required=True)
    p.add_argument("--shape", required=True, help="comma-separated grid shape")
    p.add_argument("--project2d", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dti)

    p = sub.add_parser("verify", help="run invariant suites")
    p.add_argument("--suite", choices=tuple(verify.SUITES) + ("all",), default="all")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "sweep" and not args.scenario and not (args.source and args.target):
        print("sweep needs either --scenario or both --source and --target", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except MetamorphError as exc:
        kind = 3 if isinstance(exc, RuntimeError) else 2
        print(f"error: {exc}", file=sys.stderr)
        return kind
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
