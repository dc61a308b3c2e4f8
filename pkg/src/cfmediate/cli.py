"""``cfmediate`` command line.

Exit codes: 0 success, 2 usage or configuration error, 3 file IO error,
4 estimation failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from pathlib import Path

from . import __version__
from .dgp import DGPConfig, oracle_truths, simulate
from .errors import ConfigError, DataValidationError, MediationError
from .estimators import ESTIMATORS
from .inference import bootstrap
from .model import dataset_from_columns, read_columns, write_dataset
from .stats import RNG_ALGORITHM
from . import studies

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_ESTIMATION = 0, 2, 3, 4
SCHEMA_VERSION = 1
CONFIG_KEYS = {"schema_version", "n", "seed", "sigma", "error_family", "z_prob", "first_stage_variant"}
METHOD_CHOICES = ("conventional", "parametric-cf", "semiparametric-cf")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config & manifest


def load_config(path) -> DGPConfig:
    """Read a JSON simulation config; unknown keys and missing version reject."""
    if path is None:
        return DGPConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = sorted(set(raw) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version must be {SCHEMA_VERSION}")
    fields = {k: v for k, v in raw.items() if k != "schema_version"}
    try:
        return DGPConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_to_json(cfg: DGPConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, **cfg.to_dict()}


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def write_manifest(output, command, argv, config, seed):
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "output": str(output),
    }
    write_json(f"{output}.manifest.json", manifest)


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _names(arg):
    if arg is None:
        return None
    return [s.strip() for s in arg.split(",") if s.strip()]


def _methods(arg):
    names = _names(arg) or []
    bad = [m for m in names if m.replace("-", "_") not in ESTIMATORS]
    if bad or not names:
        raise UsageError(f"--methods must list some of {', '.join(METHOD_CHOICES)}")
    return names


def _grid(arg):
    try:
        values = [float(v) for v in (_names(arg) or [])]
    except ValueError:
        raise UsageError(f"--grid must be comma-separated numbers, got {arg!r}") from None
    if not values:
        raise UsageError("--grid must not be empty")
    return values


def _positive(name, value, minimum=1):
    if value < minimum:
        raise UsageError(f"{name} must be >= {minimum}")


# ---------------------------------------------------------------- commands


def cmd_simulate(args, argv):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    if args.n is not None:
        cfg = cfg.with_(n=args.n)
    data, table = simulate(cfg)
    write_dataset(data, args.out)
    write_manifest(args.out, "simulate", argv, config_to_json(cfg), cfg.seed)
    if args.truths:
        write_json(args.truths, _clean(oracle_truths(table).to_dict()))
        write_manifest(args.truths, "simulate", argv, config_to_json(cfg), cfg.seed)
    return EXIT_OK


def cmd_estimate(args, argv):
    method = args.method.replace("-", "_")
    cols = read_columns(args.data)
    data = dataset_from_columns(cols, controls=_names(args.controls), instruments=_names(args.instruments))
    if method == "semiparametric_cf" and data.m == 0:
        raise UsageError("semiparametric-cf needs at least one instrument column (--instruments)")
    if args.bootstrap is not None:
        _positive("--bootstrap", args.bootstrap, 2)
    est = ESTIMATORS[method](data)
    result = {"estimates": est.to_dict()}
    if args.bootstrap:
        boot = bootstrap(data, method, args.bootstrap, args.seed, level=args.level, workers=args.workers)
        result["bootstrap"] = boot.to_dict()
        if args.draws:
            boot.write_draws(args.draws)
    text = json.dumps(_clean(result), indent=2, sort_keys=True, allow_nan=False) + "\n"
    resolved = {
        "data": str(args.data),
        "method": method,
        "controls": list(data.control_names),
        "instruments": list(data.iv_names),
        "bootstrap": args.bootstrap,
        "level": args.level,
    }
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        write_manifest(args.out, "estimate", argv, resolved, args.seed)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_mc_study(args, argv):
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    _positive("--reps", args.reps, 2)
    res = studies.mc_study(cfg, args.reps, _methods(args.methods), seed=seed, workers=args.workers,
                           oracle_n=args.oracle_n)
    studies.write_rows(res.rows, studies.MC_COLUMNS, args.out)
    resolved = {**config_to_json(cfg), "reps": args.reps, "methods": _methods(args.methods),
                "oracle_n": args.oracle_n}
    write_manifest(args.out, "mc-study", argv, resolved, seed)
    if res.failures:
        print(f"warning: {res.failures} method fits failed; see the status column", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args, argv):
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    grid = _grid(args.grid)
    _positive("--reps-per-point", args.reps_per_point)
    if args.bootstrap:
        _positive("--bootstrap", args.bootstrap, 2)
    rows, skipped = studies.sweep(cfg, args.param, grid, _methods(args.methods), reps_per_point=args.reps_per_point,
                                  b=args.bootstrap, seed=seed, level=args.level, workers=args.workers,
                                  oracle_n=args.oracle_n)
    studies.write_rows(rows, studies.SWEEP_COLUMNS, args.out)
    resolved = {**config_to_json(cfg), "param": args.param, "grid": grid, "methods": _methods(args.methods),
                "reps_per_point": args.reps_per_point, "bootstrap": args.bootstrap, "level": args.level,
                "oracle_n": args.oracle_n}
    write_manifest(args.out, "sweep", argv, resolved, seed)
    for s in skipped:
        print(f"warning: skipped {args.param}={s['value']}: {s['reason']}", file=sys.stderr)
    return EXIT_OK


def cmd_calibrate(args, argv):
    cfg = load_config(args.config)
    results = studies.calibrate(cfg, oracle_n=args.oracle_n)
    text = studies.calibration_report(results, oracle_n=args.oracle_n)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        write_manifest(args.out, "calibrate", argv, config_to_json(cfg), cfg.seed)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_rerun(args, argv):
    try:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        old = manifest["argv"]
    except (json.JSONDecodeError, KeyError, TypeError):
        raise ConfigError(f"{args.manifest}: not a cfmediate manifest") from None
    return main(old)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfmediate", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a dataset and its oracle truths")
    s.add_argument("--config")
    s.add_argument("--out", required=True, help="dataset CSV path")
    s.add_argument("--truths", help="oracle truths JSON path")
    s.add_argument("--seed", type=int)
    s.add_argument("--n", type=int)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate mediation effects on a CSV dataset")
    e.add_argument("data")
    e.add_argument("--method", required=True, choices=METHOD_CHOICES)
    e.add_argument("--bootstrap", type=int, metavar="B")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--level", type=float, default=0.95)
    e.add_argument("--controls", help="comma-separated control columns (default: all x*)")
    e.add_argument("--instruments", help="comma-separated instrument columns (default: all iv*)")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--draws", help="write bootstrap draws to this CSV")
    e.add_argument("--out", help="results JSON path (default: stdout)")
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("mc-study", help="Monte Carlo study of estimator errors")
    m.add_argument("--config")
    m.add_argument("--reps", type=int, required=True)
    m.add_argument("--methods", default="conventional,parametric-cf")
    m.add_argument("--seed", type=int)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--oracle-n", type=int, default=studies.ORACLE_N)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mc_study)

    w = sub.add_parser("sweep", help="estimates and bootstrap intervals across an error-parameter grid")
    w.add_argument("--config")
    w.add_argument("--param", required=True, choices=studies.SWEEP_PARAMS)
    w.add_argument("--grid", required=True, help="comma-separated values; use --grid=-1,0,1 for negatives")
    w.add_argument("--methods", default="conventional,parametric-cf")
    w.add_argument("--reps-per-point", type=int, default=1)
    w.add_argument("--bootstrap", type=int, default=1000, metavar="B")
    w.add_argument("--level", type=float, default=0.95)
    w.add_argument("--seed", type=int)
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--oracle-n", type=int, default=studies.ORACLE_N)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", help="oracle moments of each first-stage variant")
    c.add_argument("--config")
    c.add_argument("--oracle-n", type=int, default=studies.ORACLE_N)
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("rerun", help="repeat the command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except (UsageError, ConfigError, DataValidationError) as exc:
        print(f"cfmediate {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cfmediate {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except MediationError as exc:
        print(json.dumps(_clean(exc.payload()), sort_keys=True), file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
