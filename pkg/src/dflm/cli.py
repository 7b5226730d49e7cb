"""Command-line runner: ``dflm run|eval|oracle``.

Exit codes: 0 success, 2 invalid input (config, checkpoint, arguments),
3 numerical failure (non-finite loss, Picard divergence).
Thread count for the BLAS backend comes from ``DFLM_NUM_THREADS`` (default 1),
read when the package is first imported.
"""
from __future__ import annotations

import argparse
import csv
import json
from pathlib import Path
import sys
import time

import numpy as np

from . import config as config_mod
from . import nets, oracle, train
from .config import ConfigError

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


def _references(cfg, problem):
    """FD reference grids used for model selection when no exact solution exists."""
    nx = cfg.eval.reference_nx
    if problem.exact is not None or nx is None:
        return None
    if problem.param_range is None:
        return oracle.fd_reference(problem, nx)
    return {r: oracle.fd_reference(problem, nx, r) for r in cfg.eval.r_values} or None


def _experiment_header(cfg):
    return {"experiment": cfg.to_dict(), "seed": cfg.seed}


def _report(cfg, problem, spec, state, references):
    net = train.final_network(state, spec, problem)
    rep = {"seed": cfg.seed, "problem": cfg.problem, "iterations": state.step,
           "best_step": state.best_step, "clamp_count": state.clamp_count,
           "relative_l2": None if not np.isfinite(state.best_error) else state.best_error}
    if problem.exact is not None and problem.jump is None:
        er = oracle.QuadratureGrid(problem.domain, cfg.train.eval_grid).report(net, problem.exact)
        rep.update(er.to_dict())
    if problem.jump is not None:
        rep["jump_at_interface"] = oracle.learned_jump(net, problem.domain.r_interface)
    quad = oracle.QuadratureGrid(problem.domain, cfg.train.eval_grid)
    if isinstance(references, oracle.Grid2D):
        rep.update(quad.report(net, references).to_dict())
        rep["peak"] = float(np.max(net(references.points())))
        rep["fd_peak"] = float(np.max(references.values))
    elif isinstance(references, dict):
        table = []
        for r, ref in references.items():
            fixed = lambda x, r=r: net(x, params=np.full(len(x), r))
            row = {"r": r, "fd_peak": float(np.max(ref.values)),
                   "peak": float(np.max(fixed(ref.points())))}
            row.update(quad.report(fixed, ref).to_dict())
            table.append(row)
        rep["family"] = table
    return rep


def cmd_run(config_path, resume=None, out=sys.stdout):
    try:
        cfg = config_mod.load(config_path)
    except ConfigError as exc:
        return _fail(EXIT_INVALID, f"invalid config {config_path}: {exc}")
    except OSError as exc:
        return _fail(EXIT_INVALID, f"cannot read {config_path}: {exc}")

    problem = cfg.build_problem()
    spec = cfg.build_network()
    outdir = Path(cfg.output.dir)
    (outdir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (outdir / "config.toml").write_text(cfg.dumps())

    if resume is None:
        state = train.init_state(spec, problem, cfg.train)
    else:
        try:
            ck_spec, state, header = train.load_state(resume)
        except (OSError, ValueError, KeyError) as exc:
            return _fail(EXIT_INVALID, f"cannot resume from {resume}: {exc}")
        if ck_spec != spec or header.get("experiment", {}).get("problem") != cfg.to_dict()["problem"]:
            return _fail(EXIT_INVALID, f"checkpoint {resume} does not match config {config_path}")

    try:
        references = _references(cfg, problem)
    except oracle.PicardDivergence as exc:
        return _fail(EXIT_NUMERIC, f"reference solve failed: {exc}")
    error_fn = train.default_error_fn(problem, cfg.train, references)
    header = _experiment_header(cfg)
    metrics_path = outdir / "metrics.jsonl"
    mode = "w" if resume is None else "a"
    every = cfg.output.checkpoint_every or cfg.train.iterations
    clock = time.perf_counter()
    with open(metrics_path, mode) as metrics:
        if resume is None:
            metrics.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        try:
            while state.step < cfg.train.iterations:
                stop = min(cfg.train.iterations, (state.step // every + 1) * every)
                train.run(state, problem, spec, cfg.train, error_fn=error_fn, metrics=metrics,
                          wall_clock=cfg.output.wall_clock, until=stop,
                          clock_start=clock)
                metrics.flush()
                if cfg.output.checkpoint_every and stop < cfg.train.iterations:
                    train.save_state(outdir / "checkpoints" / f"step_{stop:08d}.ckpt",
                                     state, spec, header)
        except train.NonFiniteLoss as exc:
            train.save_state(outdir / "checkpoints" / "failed.ckpt", state, spec, header)
            return _fail(EXIT_NUMERIC, str(exc))

    train.save_state(outdir / "final.ckpt", state, spec, header)
    report = _report(cfg, problem, spec, state, references)
    (outdir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, sort_keys=True), file=out)
    return EXIT_OK


def _write_rows(path, meta, columns, rows):
    with open(path, "w", newline="") as f:
        f.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def cmd_eval(checkpoint, grid=None, r=None, outdir=None, out=sys.stdout):
    try:
        spec, state, header = train.load_state(checkpoint)
        cfg = config_mod.ExperimentConfig.from_dict(header["experiment"])
    except (OSError, ValueError, KeyError) as exc:
        return _fail(EXIT_INVALID, f"cannot load checkpoint {checkpoint}: {exc}")
    problem = cfg.build_problem()
    if spec != cfg.build_network() or spec.encoding != problem.encoding:
        return _fail(EXIT_INVALID, "checkpoint network does not match its recorded experiment")
    family = problem.param_range is not None
    if r is not None and not family:
        return _fail(EXIT_INVALID, f"--r only applies to family problems, not {problem.name!r}")
    if r is not None and not problem.param_range[0] <= r <= problem.param_range[1]:
        return _fail(EXIT_INVALID, f"--r {r} outside {list(problem.param_range)}")
    nx = cfg.eval.grid if grid is None else grid
    if nx < 2:
        return _fail(EXIT_INVALID, "--grid needs at least 2 points")

    net = train.final_network(state, spec, problem)
    outdir = Path(outdir) if outdir is not None else Path(checkpoint).parent
    outdir.mkdir(parents=True, exist_ok=True)
    meta = {"seed": cfg.seed, "problem": problem.name, "step": state.step, "checkpoint": str(checkpoint)}
    if r is not None:
        meta["r"] = r

    def u(points):
        if family:
            rr = r if r is not None else float(np.mean(problem.param_range))
            return net(points, params=np.full(len(points), rr))
        return net(points)

    lo, hi = problem.domain.bounding_box()
    xs = np.linspace(lo[0], hi[0], nx)
    ys = np.linspace(lo[1], hi[1], nx)
    sol = oracle.Grid2D(xs, ys, np.zeros((nx, nx)), meta)
    pts = sol.points()
    sol.values = u(pts).reshape(nx, nx)
    sol.to_csv(outdir / "solution.csv")
    written = ["solution.csv"]

    reference = None
    if problem.exact is not None:
        reference = problem.exact(pts)
    elif cfg.eval.reference_nx is not None and (not family or r is not None):
        try:
            ref_grid = oracle.fd_reference(problem, cfg.eval.reference_nx, r)
        except oracle.PicardDivergence as exc:
            return _fail(EXIT_NUMERIC, str(exc))
        reference = ref_grid.interpolator()(pts)
    if reference is not None:
        err = oracle.Grid2D(xs, ys, np.abs(sol.values.ravel() - reference).reshape(nx, nx),
                            dict(meta, quantity="abs_error"))
        err.to_csv(outdir / "error.csv")
        written.append("error.csv")

    if problem.jump is not None:
        radii = (np.arange(cfg.eval.radial_points) + 0.5) * problem.domain.r_outer / cfg.eval.radial_points
        avg = oracle.radial_profile(net, radii)
        exact = problem.exact(np.column_stack([radii, np.zeros_like(radii)]))
        _write_rows(outdir / "radial_profile.csv",
                    dict(meta, jump_at_interface=oracle.learned_jump(net, problem.domain.r_interface)),
                    ["r", "u_average", "u_exact"], zip(radii, avg, exact))
        written.append("radial_profile.csv")

    if family and r is None and cfg.eval.r_values and cfg.eval.probe_points:
        probes = np.asarray(cfg.eval.probe_points, dtype=np.float64)
        table = oracle.family_slice(net, probes, cfg.eval.r_values)
        rows = []
        for i, rv in enumerate(cfg.eval.r_values):
            ref = None
            if cfg.eval.reference_nx is not None:
                try:
                    ref = oracle.fd_reference(problem, cfg.eval.reference_nx, rv).interpolator()(probes)
                except oracle.PicardDivergence as exc:
                    return _fail(EXIT_NUMERIC, str(exc))
            for k, p in enumerate(probes):
                fd = np.nan if ref is None else ref[k]
                rows.append([rv, p[0], p[1], table[i, k], fd])
        _write_rows(outdir / "family_table.csv", meta, ["r", "x", "y", "u_network", "u_fd"], rows)
        written.append("family_table.csv")

    print(json.dumps({"outputs": [str(outdir / w) for w in written]}), file=out)
    return EXIT_OK


def cmd_oracle(config_path, out=sys.stdout):
    try:
        cfg = config_mod.load(config_path)
    except ConfigError as exc:
        return _fail(EXIT_INVALID, f"invalid config {config_path}: {exc}")
    except OSError as exc:
        return _fail(EXIT_INVALID, f"cannot read {config_path}: {exc}")
    problem = cfg.build_problem()
    if "chi" not in problem.settings:
        return _fail(EXIT_INVALID, f"no finite-difference oracle for problem {problem.name!r}")
    nx = cfg.eval.reference_nx or 129
    family = problem.param_range is not None
    rates = cfg.eval.r_values if family else [None]
    if not rates:
        return _fail(EXIT_INVALID, "eval.r_values: family oracle needs at least one r")
    outdir = Path(cfg.output.dir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for r in rates:
        try:
            grid = oracle.fd_reference(problem, nx, r)
        except oracle.PicardDivergence as exc:
            return _fail(EXIT_NUMERIC, f"{exc} (residual history: {exc.history[-5:]})")
        grid.meta["seed"] = cfg.seed
        name = "fd_solution.csv" if r is None else f"fd_solution_r{r:g}.csv"
        grid.to_csv(outdir / name)
        written.append({"path": str(outdir / name), "peak": float(grid.values.max()),
                        "picard_iterations": grid.meta["picard_iterations"]})
    print(json.dumps({"outputs": written}), file=out)
    return EXIT_OK


def _odd_at_least_65(text):
    value = int(text)
    if value < 65 or value % 2 == 0:
        raise argparse.ArgumentTypeError("must be odd and at least 65")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="dflm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="train a network from a config file")
    p.add_argument("config")
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue from a saved training state")
    p = sub.add_parser("eval", help="write solution/error grids for a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--grid", type=int, metavar="NX", help="points per side of the output grid")
    p.add_argument("--r", type=float, metavar="VALUE", help="growth rate for family checkpoints")
    p.add_argument("--out", metavar="DIR", help="output directory (default: next to checkpoint)")
    p = sub.add_parser("oracle", help="finite-difference reference for a taxis config")
    p.add_argument("config")
    p.add_argument("--nx", type=_odd_at_least_65, help="override eval.reference_nx")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    if args.command == "run":
        return cmd_run(args.config, args.resume)
    if args.command == "eval":
        return cmd_eval(args.checkpoint, args.grid, args.r, args.out)
    if args.nx is not None:
        return _oracle_with_nx(args.config, args.nx)
    return cmd_oracle(args.config)


def _oracle_with_nx(config_path, nx):
    try:
        cfg = config_mod.load(config_path)
    except (ConfigError, OSError) as exc:
        return _fail(EXIT_INVALID, f"invalid config {config_path}: {exc}")
    cfg.eval.reference_nx = nx
    tmp = Path(cfg.output.dir)
    tmp.mkdir(parents=True, exist_ok=True)
    path = tmp / "oracle_config.toml"
    path.write_text(cfg.dumps())
    return cmd_oracle(path)
