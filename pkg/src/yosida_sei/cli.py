"""Command-line front end.

Commands::

    yosida-sei resolve --graph "{type: power, p: 1.5}" --s -1 0 2 --lam 0.5 --alpha 1.5
    yosida-sei simulate run.yaml
    yosida-sei extinction run.yaml
    yosida-sei sweep run.yaml
    yosida-sei verify --level fast

Exit codes: 0 on success, 1 when a checked property fails, 2 on usage,
configuration or precondition errors.  Outputs go to ``--out``, else to
``$YOSIDA_SEI_OUT``, else to ``./yosida_sei_out``.  Every output directory
gets a deterministic ``manifest.json`` holding the resolved config and a
``.meta.json`` sidecar holding timestamps and timings.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import config as C
from . import extinction as E
from . import graphs as G
from . import sde as S
from . import verify as V
from .graphs import YosidaParams
from .spaces import embedding_constant

OUT_ENV = "YOSIDA_SEI_OUT"
DEFAULT_OUT = "yosida_sei_out"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("yosida_sei")


class UsageError(Exception):
    pass


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(out: Path, command: str, cfg_dict: dict | None, files: list[str], started: float, **extra) -> None:
    manifest = {"command": command, "schema_version": C.SCHEMA_VERSION, "config": cfg_dict,
                "files": sorted(files), "version": __version__}
    manifest.update(extra)
    _write_json(manifest, out / "manifest.json")
    meta = {"finished": datetime.now(timezone.utc).isoformat(), "elapsed_s": time.perf_counter() - started,
            "python": platform.python_version(), "numpy": np.__version__, "host": platform.node()}
    _write_json(meta, out / ".meta.json")


def _load(args) -> C.RunConfig:
    cfg = C.load_file(args.config)
    if args.seed is not None:
        sim = cfg.simulation.model_copy(update={"seed": args.seed})
        cfg = cfg.model_copy(update={"simulation": sim})
    return C.RunConfig.model_validate(C.to_dict(cfg))  # revalidate after overrides


def _threads(args) -> int:
    return args.threads or S.default_threads()


# -- commands ----------------------------------------------------------------------

def cmd_resolve(args) -> int:
    spec = C.parse_yaml(args.graph)
    if not isinstance(spec, dict) or "type" not in spec:
        raise UsageError("--graph must be a mapping with a 'type' key")
    g = G.from_spec(spec)
    prm = YosidaParams(args.lam, args.alpha)
    s = np.asarray(args.s, dtype=float)
    sol = G.resolvent_solution(g, s, prm)
    a = G.scalar_duality(sol.offset, args.alpha) / args.lam
    a0 = G.minimal_section(g, s)
    q = args.alpha / (args.alpha - 1)
    gauge = np.abs(np.abs(sol.offset) ** args.alpha - args.lam**q * np.abs(a) ** q)
    print(f"graph {g.name}  lambda={args.lam:g}  alpha={args.alpha:g}")
    print(f"{'s':>14} {'R_lam(s)':>20} {'A_lam(s)':>20} {'A0(s)':>20} {'gauge_res':>11}")
    for row in zip(s, sol.x, a, a0, gauge):
        print(f"{row[0]:>14.6g} {row[1]:>20.13g} {row[2]:>20.13g} {row[3]:>20.13g} {row[4]:>11.2e}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    cfg = _load(args)
    sim = cfg.build_sim()
    out = _out_dir(args)
    trajs = S.run_trajectories(sim, cfg.simulation.N, _threads(args))
    S.write_trajectories_csv(trajs, out / "trajectories.csv", sim.yosida_alpha)
    summary = {"N": len(trajs), "extinct": sum(t.extinct for t in trajs),
               "tau": [t.tau for t in trajs], "final_norm_H": [float(t.norm_H[-1]) for t in trajs]}
    _write_json(summary, out / "summary.json")
    _finish(out, "simulate", C.to_dict(cfg), ["trajectories.csv", "summary.json"], started)
    print(f"{len(trajs)} trajectories, {summary['extinct']} extinct; wrote {out}")
    return EXIT_OK


def _extinction_sim(cfg: C.RunConfig):
    """Simulation config with ``T`` from the floor when requested, plus ``c0``."""
    sim = cfg.build_sim()
    ext = cfg.extinction
    c0 = ext.c0
    if ext.floor is not None:
        if c0 is None:
            c0 = embedding_constant(sim.operator.triple).c0
        alpha = E._alpha(sim)
        if sim.operator.assumptions is None:
            raise E.PreconditionError("operator has no coercivity constants")
        cs = E.c_star(sim.operator.assumptions.delta, alpha, c0)
        T = cs * sim.operator.triple.norm_H(sim.x) ** (2.0 - alpha) / (1.0 - ext.floor)
        if T > 0:
            sim = sim.with_(T=T)
    return sim, c0


def cmd_extinction(args) -> int:
    started = time.perf_counter()
    cfg = _load(args)
    sim, c0 = _extinction_sim(cfg)
    N = cfg.extinction.N
    if N < E.MIN_TRAJECTORIES:
        raise E.PreconditionError(f"need at least {E.MIN_TRAJECTORIES} trajectories, got {N}")
    E._check_preconditions(sim)
    out = _out_dir(args)
    checkpoints = E.default_checkpoints(sim.T, cfg.extinction.checkpoints)
    energy_times = (sim.T / 4, sim.T / 2, sim.T)
    recorded = tuple(sorted(set(checkpoints) | set(energy_times)))
    trajs = E.extinction_run(sim, N, recorded, threads=_threads(args))
    rep = E.mc_extinction(sim, N, c0=c0, trajectories=trajs, check_assumptions=False)
    sm = E.supermartingale_check(sim, N, checkpoints, trajectories=trajs)
    en = E.energy_inequality_check(sim, N, energy_times, c0=rep.c0, trajectories=trajs)
    sup = max(float(np.max(t.norm_H**2)) for t in trajs)
    x2 = sim.operator.triple.norm_H(sim.x) ** 2
    moment = {"sup_norm_sq": sup, "x_norm_sq": x2, "passed": bool(sup <= 10 * x2)}
    passed = rep.passed and sm.passed and en.passed and moment["passed"]
    report = {"config": C.to_dict(cfg), "schema_version": C.SCHEMA_VERSION, "T": sim.T,
              "extinction": rep.to_dict(), "supermartingale": sm.to_dict(), "energy": en.to_dict(),
              "moment": moment, "passed": passed}
    _write_json(report, out / "extinction_report.json")
    E.write_tau_csv(rep, out / "tau.csv")
    _finish(out, "extinction", C.to_dict(cfg), ["extinction_report.json", "tau.csv"], started)
    lines = [("probability", rep.pass_prob, f"P={rep.prob:.4f} floor={rep.bound_prob:.4f} se={rep.prob_se:.4f}"),
             ("mean", rep.pass_mean, f"mean={rep.mean_lower:.5g} bound={rep.bound_mean:.5g}"),
             ("supermartingale", sm.passed, f"min margin={min(sm.margins, default=0.0):.3g}"),
             ("energy", en.passed, f"min margin={min(en.margins, default=0.0):.3g}"),
             ("moment", moment["passed"], f"sup/x^2={sup / x2 if x2 else 0.0:.4g}")]
    for name, ok, info in lines:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<16} {info}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    cfg = _load(args)
    sim = cfg.build_sim()
    sw = cfg.sweep
    checkpoints = sw.checkpoints or [sim.T]
    out = _out_dir(args)
    table = S.lambda_sweep(sim, sw.mus, sw.N, checkpoints, threads=_threads(args))
    S.write_sweep_csv(table, out / "sweep.csv")
    last = table.diffs[:, -1]
    decreasing = bool(np.all(np.diff(last) < 0))
    _finish(out, "sweep", C.to_dict(cfg), ["sweep.csv"], started, decreasing_at_T=decreasing)
    for (a, b), v in zip(zip(table.mus, table.mus[1:]), last):
        print(f"mu {a:g} -> {b:g}: E|dX(T)|_H^2 = {v:.6e}")
    print(f"{'PASS' if decreasing else 'FAIL'}  successive differences strictly decreasing")
    return EXIT_OK if decreasing else EXIT_FAIL


def cmd_verify(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    seed = 0 if args.seed is None else args.seed

    def show(c):
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<36} margin={c.margin:.3e} {c.detail}".rstrip())

    res = V.run_suite(args.level, seed=seed, progress=show)
    name = f"verify_{args.level}.json"
    _write_json(res.to_dict(), out / name)
    _finish(out, "verify", None, [name], started, level=args.level, seed=seed)
    meta = json.loads((out / ".meta.json").read_text())
    meta["timings_s"] = res.timings
    _write_json(meta, out / ".meta.json")
    n_fail = sum(not c.passed for c in res.checks)
    print(f"{len(res.checks) - n_fail}/{len(res.checks)} properties passed")
    return EXIT_OK if res.passed else EXIT_FAIL


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the base seed")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: logical cores)")
    common.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="yosida-sei", description="Generalized Yosida approximation toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("resolve", parents=[common], help="scalar resolvent table")
    r.add_argument("--graph", required=True, help="graph spec, e.g. '{type: power, p: 1.5, nu: 0}'")
    r.add_argument("--s", type=float, nargs="+", required=True)
    r.add_argument("--lam", type=float, required=True)
    r.add_argument("--alpha", type=float, default=2.0)
    r.set_defaults(func=cmd_resolve)

    for name, func, text in (("simulate", cmd_simulate, "simulate trajectories"),
                             ("extinction", cmd_extinction, "Monte Carlo extinction report"),
                             ("sweep", cmd_sweep, "coupled regularization sweep")):
        c = sub.add_parser(name, parents=[common], help=text)
        c.add_argument("config", help="YAML run configuration")
        c.set_defaults(func=func)

    v = sub.add_parser("verify", parents=[common], help="built-in property suite")
    v.add_argument("--level", choices=V.LEVELS, default="fast")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (C.ConfigError, E.PreconditionError, UsageError, G.GraphError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
