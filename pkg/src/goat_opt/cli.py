"""``goat-opt`` command line front end.

Subcommands: ``fit-env``, ``optimize``, ``render`` and ``gp``. Exit codes:
0 ok, 2 input error, 3 fit failure, 4 optimization failure, 5 render error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import environment as envmod
from . import graspgp
from .config import ConfigError, RunConfig
from .errors import (
    AllStartsFailed,
    BranchViolation,
    DegenerateVariance,
    GoatOptError,
    InfeasibleProblem,
    MalformedSpec,
    NoAssembly,
    NonPositiveValue,
    TooFewRecords,
    Unreachable,
)
from .linkage import ContactSpec, load_topology, solve_ik
from .objective import DecisionVector, evaluate
from .optimizer import ProblemSpec, base_designs, cluster_count, multi_start
from .render import coverage_svg, linkage_svg

EXIT_OK, EXIT_INPUT, EXIT_FIT, EXIT_OPT, EXIT_RENDER = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _say(args, *msg) -> None:
    if not args.quiet:
        print(*msg)


def _load_config(args) -> RunConfig:
    try:
        cfg = RunConfig.load(args.config, seed=args.seed, out_dir=args.out_dir)
    except ConfigError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg


def _topology(cfg: RunConfig):
    try:
        return load_topology(cfg.path("topology"))
    except MalformedSpec as exc:
        raise CliError(EXIT_INPUT, f"topology: {exc}") from None


def _environment(cfg: RunConfig, override=None) -> envmod.BivariateLogNormal:
    path = override or cfg.path("env_model")
    if path is not None:
        try:
            return envmod.BivariateLogNormal.load(path)
        except (OSError, KeyError, ValueError, GoatOptError) as exc:
            raise CliError(EXIT_INPUT, f"environment model {path}: {exc}") from None
    holds = cfg.path("holds_csv")
    if holds is not None:
        return _fit(_read_holds(holds), cfg.raw["environment"]["width_from"])
    return envmod.SYNTHETIC_DEFAULT


def _read_holds(path) -> list:
    try:
        records = envmod.read_holds_csv(path)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    if not records:
        raise CliError(EXIT_INPUT, f"{path}: no data rows")
    return records


def _fit(records, width_from) -> envmod.BivariateLogNormal:
    try:
        return envmod.fit_lognormal(records, width_from=width_from)
    except (TooFewRecords, NonPositiveValue, DegenerateVariance) as exc:
        raise CliError(EXIT_FIT, f"fit failed: {exc}") from None


def _portable(raw: dict) -> dict:
    # the output location does not affect results; keep it out of result files
    out = json.loads(json.dumps(raw))
    out["paths"].pop("out_dir", None)
    return out


# -- subcommands ----------------------------------------------------------------


def cmd_fit_env(args) -> int:
    cfg = _load_config(args)
    out = cfg.out_dir
    holds = args.holds or cfg.path("holds_csv")
    if holds is None:
        records = envmod.synthetic_holds(cfg.raw["environment"]["synthetic_n"], seed=cfg.seed)
        holds = out / "holds.csv"
        envmod.write_holds_csv(holds, records)
        _say(args, f"no hold CSV configured; wrote {len(records)} synthetic holds to {holds}")
    else:
        records = _read_holds(holds)
    model = _fit(records, cfg.raw["environment"]["width_from"])
    model.save(out / "env_model.json")
    pairs = envmod._pairs(records, cfg.raw["environment"]["width_from"])
    with open(out / "qq.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis", "normal_quantile", "log_sample"])
        for axis, col in (("width", 0), ("height", 1)):
            for t, s in envmod.qq_points(pairs[:, col]):
                w.writerow([axis, repr(float(t)), repr(float(s))])
    _say(args, f"mu = ({model.mu[0]:.4f}, {model.mu[1]:.4f})  sigma = ({model.sigma[0]:.4f}, {model.sigma[1]:.4f})  rho = {model.rho:.4f}")
    _say(args, f"modal width {model.mode[0]:.1f} mm, modal height {model.mode[1]:.1f} mm")
    return EXIT_OK


def _problem(cfg: RunConfig, args) -> ProblemSpec:
    return ProblemSpec(
        topo=_topology(cfg),
        env=_environment(cfg, getattr(args, "env", None)),
        task=cfg.task,
        statics=cfg.statics,
        weights=cfg.weights,
        config=cfg.optimizer,
    )


def _sample_rows(samples) -> list[dict]:
    return [
        {
            "omega": s.omega_i,
            "m_x": float(s.m_i[0]),
            "m_y": float(s.m_i[1]),
            "n_x": float(s.n_i[0]),
            "n_y": float(s.n_i[1]),
            "theta3": s.theta_i["theta3"],
            "theta6": s.theta_i["theta6"],
            "h": s.h_i,
            "sf": s.sf_i,
            "weight": s.weight_i,
            "cdf_delta": s.cdf_delta_i,
        }
        for s in samples
    ]


def cmd_optimize(args) -> int:
    cfg = _load_config(args)
    problem = _problem(cfg, args)
    ocfg = problem.config
    bases = base_designs()[: ocfg.n_bases]

    def progress(start, sol):
        if args.verbose and not args.quiet:
            print(f"start {start.start_id:4d} base {start.base} scale {start.scale:.3f} seed {start.seed}: {sol.status} {sol.objective:.6f}")

    try:
        best, sols = multi_start(problem, bases, ocfg.scales, ocfg.seeds, jobs=args.jobs, progress=progress)
    except (AllStartsFailed, InfeasibleProblem) as exc:
        raise CliError(EXIT_OPT, str(exc)) from None
    objective, samples = evaluate(best.decision, problem.topo, problem.env, problem.task, problem.statics, problem.weights)
    coverage = float(sum(s.cdf_delta_i for s in samples))
    out = cfg.out_dir
    rows = _sample_rows(samples)
    _write_json(
        out / "solution.json",
        {
            "best": {**best.to_dict(), "coverage": coverage, "samples": rows},
            "cluster_count": cluster_count(sols, best),
            "environment": problem.env.to_dict(),
            "config": _portable(cfg.raw),
            "solutions": [s.to_dict() for s in sols],
        },
    )
    with open(out / "starts.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start_id", "seed", "status", "initial_objective", "objective", "max_violation", "iterations", "evaluations"])
        for s in sols:
            w.writerow([s.start_id, s.seed, s.status, repr(s.initial_objective), repr(s.objective), repr(s.max_violation), s.iterations, s.evaluations])
    with open(out / "samples.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) for k, v in r.items()})
    lengths = best.decision.lengths
    _say(args, "optimal link lengths (mm): " + ", ".join(f"{k}={lengths[k]:.2f}" for k in ("L1", "L2", "L3", "L4", "L8", "L9", "L10", "L14")))
    _say(args, f"graspable width range [{best.decision.omega_lo:.2f}, {best.decision.omega_hi:.2f}] mm")
    _say(args, f"theoretical graspable range CDF = {100 * coverage:.1f}% (objective {objective:.6f})")
    _say(args, f"{cluster_count(sols, best)} of {sum(s.feasible for s in sols)} feasible runs reach the best objective")
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = _load_config(args)
    sol_path = Path(args.solution) if args.solution else (cfg.path("solution") or cfg.out_dir / "solution.json")
    try:
        data = json.loads(Path(sol_path).read_text())
        best = data["best"] if "best" in data else data
        decision = DecisionVector.from_dict(best["decision"])
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"solution {sol_path}: {exc}") from None
    problem = _problem(cfg, args)
    omegas = args.omega or cfg.raw["render"]["omegas"] or [decision.omega_lo, decision.omega_hi]
    out = cfg.out_dir
    for om in omegas:
        try:
            config, _, _ = solve_ik(problem.topo, decision.lengths, ContactSpec(float(om), problem.task.psi))
        except (Unreachable, BranchViolation, NoAssembly, ValueError) as exc:
            raise CliError(EXIT_RENDER, f"cannot render omega={om}: {exc}") from None
        name = out / f"pose_omega_{float(om):.2f}.svg"
        name.write_text(linkage_svg(problem.topo, config, title=f"omega = {float(om):.2f} mm"))
        _say(args, f"wrote {name}")
    objective, samples = evaluate(decision, problem.topo, problem.env, problem.task, problem.statics, problem.weights)
    if not samples:
        raise CliError(EXIT_RENDER, "solution design cannot be evaluated")
    coverage = float(sum(s.cdf_delta_i for s in samples))
    (out / "coverage.svg").write_text(
        coverage_svg(problem.env, [s.omega_i for s in samples], [s.h_i for s in samples], coverage)
    )
    _say(args, f"wrote {out / 'coverage.svg'} (coverage {100 * coverage:.1f}%)")
    return EXIT_OK


def cmd_gp(args) -> int:
    cfg = _load_config(args)
    g = cfg.raw["gp"]
    data_path = args.data or cfg.path("pull_csv")
    hyper = g["hyper"]
    if data_path is None:
        data = graspgp.crossing_dataset()
        hyper = hyper or (1e4, 1e4, 1.0)
        _say(args, "no pull-test CSV configured; using the engineered crossing dataset")
    else:
        try:
            data = graspgp.read_pull_csv(data_path)
        except (OSError, ValueError) as exc:
            raise CliError(EXIT_INPUT, str(exc)) from None
    try:
        model = graspgp.fit_gp(data, hyper)
    except (TooFewRecords, GoatOptError) as exc:
        raise CliError(EXIT_INPUT, f"GP fit failed: {exc}") from None
    f_min = args.f_min if args.f_min is not None else g["f_min"]
    eta_range = (g["eta_lo"], g["eta_hi"])
    eta_star = None if f_min <= 0 else graspgp.max_safe_eta(model, f_min, eta_range)
    out = cfg.out_dir
    _write_json(out / "gp_model.json", {**model.to_dict(), "f_min": f_min, "eta_star": eta_star})
    etas = np.linspace(*eta_range, 200)
    mean, lo, hi = graspgp.predict(model, etas)
    with open(out / "gp_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "mean_n", "ci95_lo_n", "ci95_hi_n"])
        for row in zip(etas, mean, lo, hi):
            w.writerow([repr(float(v)) for v in row])
    if eta_star is None:
        _say(args, f"lower 95% bound never reaches {f_min} N on eta in {eta_range}")
    else:
        _say(args, f"lower 95% bound reaches {f_min} N at eta = {eta_star:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run-config JSON")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="parallel starts for optimize")
    common.add_argument("--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="goat-opt", description="Gripper link-length optimization toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("fit-env", parents=[common], help="fit the hold-size model")
    s.add_argument("--holds", help="hold CSV (width_mm,length_mm,height_mm)")
    s.set_defaults(func=cmd_fit_env)
    s = sub.add_parser("optimize", parents=[common], help="multi-start design optimization")
    s.add_argument("--env", help="environment model JSON")
    s.add_argument("--verbose", action="store_true", help="one line per start")
    s.set_defaults(func=cmd_optimize)
    s = sub.add_parser("render", parents=[common], help="SVG drawings of a solution")
    s.add_argument("--solution", help="solution JSON from optimize")
    s.add_argument("--env", help="environment model JSON")
    s.add_argument("--omega", type=float, action="append", help="width to draw (repeatable)")
    s.set_defaults(func=cmd_render)
    s = sub.add_parser("gp", parents=[common], help="pull-force Gaussian process")
    s.add_argument("--data", help="pull-test CSV (eta,force_n)")
    s.add_argument("--f-min", type=float, help="required pull force in N")
    s.set_defaults(func=cmd_gp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"goat-opt: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
