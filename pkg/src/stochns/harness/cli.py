"""Command-line interface: ``stochns <subcommand> [--config PATH] ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .reports import (
    convergence_table,
    expmoment_report,
    localization_report,
    moments_report,
    pressure_report,
    rates_report,
    summary,
    write_csv,
    write_json,
)
from .runner import RunError, run_experiment
from .snapshot import dump_mesh, dump_operators

log = logging.getLogger("stochns")

RUN_COMMANDS = ("simulate", "converge", "moments", "expmoment", "localize", "pressure")
COMMANDS = RUN_COMMANDS + ("rates", "infsup")

HELP = {
    "simulate": "run samples and store every trajectory as a binary snapshot",
    "converge": "coupled multilevel errors: convergence.csv and summary.json",
    "moments": "moment-bound estimates across the ladder's N values",
    "expmoment": "exponential moments of the time scheme (additive noise)",
    "localize": "localization probabilities and localized errors",
    "pressure": "pressure-sum scaling in N for the finite-element scheme",
    "rates": "closed-form rate constants for the configured noise",
    "infsup": "discrete inf-sup constants of the finite-element pair",
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochns", description="Stochastic Navier-Stokes discretization experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", type=Path, help="experiment JSON (defaults used when omitted)")
        sp.add_argument("--seed", type=int, help="master seed (u64)")
        sp.add_argument("--samples", type=int, help="Monte Carlo sample count")
        sp.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--resume", type=Path, metavar="MANIFEST", help="continue a run from its manifest")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "expmoment":
            sp.add_argument("--alpha", type=float, help="exponent (default half the admissibility bound)")
        if name == "localize":
            sp.add_argument("--M", type=float, action="append", help="threshold (repeatable)")
        if name == "infsup":
            sp.add_argument("--m", type=int, action="append", help="mesh subdivision (repeatable)")
    return p


def _config(args, command: str) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig({})
    over = {"seed": args.seed, "samples": args.samples}
    if args.out is not None:
        over["out"] = str(args.out)
    if command == "simulate" and args.samples is None and args.resume is None:
        over["samples"] = 1
    cfg = cfg.with_overrides(**over)
    a = dict(cfg.analysis)
    if command == "simulate":
        a["save_trajectories"] = True
    if command in ("moments", "expmoment"):
        a["time_at_levels"] = True
    if command == "pressure" and cfg["scheme"] != "alg1":
        raise ConfigError("the pressure subcommand needs scheme = 'alg1'")
    return cfg.with_overrides(analysis=a)


def _emit(obj, path: Path) -> None:
    write_json(obj, path)
    log.info("wrote %s", path)


def _run(args, command: str) -> int:
    if args.resume is not None:
        manifest, records = run_experiment(resume=args.resume, threads=args.threads, progress=_progress)
        cfg = load_config(args.resume.parent / manifest["config_file"])
        out = args.resume.parent
    else:
        cfg = _config(args, command)
        out = Path(cfg["out"])
        manifest, records = run_experiment(cfg, out, threads=args.threads, progress=_progress)
    if manifest["failed"]:
        log.warning("%d sample(s) failed", manifest["failed"])
    if command == "converge":
        table = convergence_table(cfg, records)
        write_csv(table, out / "convergence.csv")
        report = summary(cfg, records, table, manifest)
        _emit(report, out / "summary.json")
    elif command == "simulate":
        report = {"samples": manifest["samples"]}
        if cfg["scheme"] == "alg1":
            from ..fem import assemble_operators
            from ..schemes import make_space
            for li, (N, res) in enumerate(cfg.levels):
                space = make_space(cfg.params(N, res))
                dump_mesh(out / f"mesh_level{li}.snsarrs", space.mesh)
                dump_operators(out / f"operators_level{li}.snsarrs", assemble_operators(space))
        _emit(report, out / "simulate.json")
    elif command == "moments":
        report = moments_report(cfg, records, min_samples=1)
        _emit(report, out / "moments.json")
    elif command == "expmoment":
        report = expmoment_report(cfg, records, getattr(args, "alpha", None))
        _emit(report, out / "expmoment.json")
    elif command == "localize":
        report = localization_report(cfg, records, getattr(args, "M", None))
        _emit(report, out / "localization.json")
    else:
        report = pressure_report(cfg, records)
        _emit(report, out / "pressure.json")
    print(json.dumps({"command": command, "out": str(out), "completed": manifest["completed"],
                      "failed": manifest["failed"]}))
    return 1 if manifest["completed"] == 0 else 0


def _progress(rec) -> None:
    if rec["status"] == "ok":
        log.info("sample %d done in %.2fs", rec["index"], rec["seconds"])
    else:
        log.warning("sample %d failed: %s", rec["index"], rec.get("error"))


def _rates(args) -> int:
    cfg = _config(args, "rates")
    report = rates_report(cfg)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        _emit(report, args.out / "rates.json")
    print(json.dumps(report, indent=2, sort_keys=True, default=str))
    return 0


def _infsup(args) -> int:
    from ..fem import FemSpacePair, build_periodic_mesh, check_inf_sup
    cfg = _config(args, "infsup")
    ms = args.m or ([res for _, res in cfg.levels] if cfg["scheme"] == "alg1" else [4, 8, 16])
    values = {}
    for m in ms:
        space = FemSpacePair(build_periodic_mesh(cfg.geometry, m), cfg["element"])
        values[str(m)] = check_inf_sup(space)
    vals = list(values.values())
    report = {"element": cfg["element"], "inf_sup": values,
              "relative_spread": (max(vals) - min(vals)) / max(vals)}
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        _emit(report, args.out / "infsup.json")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "rates":
            return _rates(args)
        if args.command == "infsup":
            return _infsup(args)
        return _run(args, args.command)
    except (ConfigError, RunError, OSError, ValueError) as exc:
        print(f"stochns {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
