"""Command line interface.

Subcommands: table51 and table52 (published comparison sweeps), field
(engine samples on a spatial grid), single (one evaluation point),
validate (cross-engine validation suite).  Exit status: 0 success,
1 validation failure, 2 configuration error.

Options come from three layers, later ones winning: built-in defaults,
a --config file of 'key = value' lines (geometry keys plus run keys),
then command line flags.
"""

from __future__ import annotations

import argparse
import sys

from . import asymptotics, geometry, harness

_RUN_KEYS = {"engines", "h_list", "dt", "walkers", "seed", "grid",
             "precision", "skip", "point", "max_steps", "out"}

_MODE_ENGINES = {
    "table51": ("formula", "fem", "robin_fem"),
    "table52": ("formula", "fem"),
    "field": ("formula", "fem"),
    "single": ("formula", "fem", "robin_fem"),
    "validate": ("formula", "fem", "robin_fem", "mc"),
}

_BLURBS = {
    "table51": "straight-neck comparison sweep at the head center",
    "table52": "curved-neck comparison sweep at the head center",
    "field": "sample engines on a spatial grid, write CSV fields",
    "single": "evaluate engines at one point",
    "validate": "run the cross-engine validation suite",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spinemfpt",
        description="Mean exit time of Brownian motion from a spine-shaped "
                    "domain, by closed form, finite elements, and walkers.")
    sub = ap.add_subparsers(dest="mode", required=True)
    for mode in harness.MODES:
        sp = sub.add_parser(mode, help=_BLURBS[mode])
        sp.add_argument("--config", metavar="PATH",
                        help="key = value file: geometry and run keys")
        sp.add_argument("--out", metavar="PATH",
                        help="output CSV path (field mode: filename prefix)")
        sp.add_argument("--engines", metavar="LIST",
                        help="comma-separated subset of "
                             + ",".join(harness.ENGINES))
        sp.add_argument("--h-list", metavar="LIST", dest="h_list",
                        help="comma-separated mesh ladder, e.g. 0.04,0.02,0.01")
        sp.add_argument("--dt", type=float, help="walker time step")
        sp.add_argument("--walkers", type=int, help="walker ensemble size")
        sp.add_argument("--seed", type=int, help="walker stream seed")
        sp.add_argument("--grid", type=int, metavar="N",
                        help="field grid resolution (N x N)")
        sp.add_argument("--precision", type=int, metavar="K",
                        help="significant digits in outputs (default 6)")
        sp.add_argument("--skip", metavar="LIST",
                        help="engines whose validate checks are skipped")
        sp.add_argument("--no-timestamp", action="store_true",
                        help="omit the timestamp metadata line "
                             "(byte-identical reruns)")
    return ap


def _split(text: str) -> tuple:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _parse_config_file(path: str) -> tuple[dict, dict]:
    """Split a key = value file into geometry keys and run keys."""
    geo_cfg, run_cfg = {}, {}
    with open(path) as f:
        text = f.read()
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise harness.ConfigError(
                f"{path}:{ln}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in geometry._CONFIG_KEYS:
            geo_cfg[key] = val
        elif key in _RUN_KEYS:
            run_cfg[key] = val
        else:
            raise harness.ConfigError(f"{path}:{ln}: unknown key {key!r}")
    return geo_cfg, run_cfg


def _spec_from_args(args) -> harness.RunSpec:
    geo_cfg, run_cfg = ({}, {})
    if args.config:
        geo_cfg, run_cfg = _parse_config_file(args.config)
    kw = {"mode": args.mode, "geometry": geo_cfg}
    try:
        if "engines" in run_cfg:
            kw["engines"] = _split(run_cfg["engines"])
        if "h_list" in run_cfg:
            kw["h_list"] = tuple(float(s) for s in _split(run_cfg["h_list"]))
        if "dt" in run_cfg:
            kw["dt"] = float(run_cfg["dt"])
        if "walkers" in run_cfg:
            kw["walkers"] = int(run_cfg["walkers"])
        if "seed" in run_cfg:
            kw["seed"] = int(run_cfg["seed"])
        if "max_steps" in run_cfg:
            kw["max_steps"] = int(run_cfg["max_steps"])
        if "grid" in run_cfg:
            kw["grid"] = int(run_cfg["grid"])
        if "precision" in run_cfg:
            kw["precision"] = int(run_cfg["precision"])
        if "skip" in run_cfg:
            kw["skip"] = _split(run_cfg["skip"])
        if "point" in run_cfg:
            xy = _split(run_cfg["point"])
            if len(xy) != 2:
                raise harness.ConfigError(f"point must be x,y, got "
                                          f"{run_cfg['point']!r}")
            kw["point"] = (float(xy[0]), float(xy[1]))
        if "out" in run_cfg:
            kw["out"] = run_cfg["out"]
    except ValueError as exc:
        raise harness.ConfigError(f"{args.config}: {exc}") from exc
    if args.engines:
        kw["engines"] = _split(args.engines)
    if "engines" not in kw:
        kw["engines"] = _MODE_ENGINES[args.mode]
    if args.h_list:
        try:
            kw["h_list"] = tuple(float(s) for s in _split(args.h_list))
        except ValueError as exc:
            raise harness.ConfigError(f"--h-list: {exc}") from exc
    for name in ("dt", "walkers", "seed", "grid", "precision"):
        val = getattr(args, name)
        if val is not None:
            kw[name] = val
    if args.skip:
        kw["skip"] = _split(args.skip)
    if args.out:
        kw["out"] = args.out
    kw["timestamp"] = not args.no_timestamp
    return harness.RunSpec(**kw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    caught = (harness.ConfigError, harness.EmptyGrid,
              geometry.InvalidGeometry, asymptotics.DomainError, OSError)
    try:
        spec = _spec_from_args(args)
    except caught as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if spec.mode in ("table51", "table52"):
            run = harness.run_table51 if spec.mode == "table51" \
                else harness.run_table52
            rows = run(spec)
            if spec.out:
                harness.rows_to_csv(rows, spec.out, spec, reference=spec.mode)
            print(harness.format_rows(rows, spec, reference=spec.mode))
            return 0
        if spec.mode == "field":
            paths = harness.run_field(spec)
            for label, path in paths.items():
                print(f"{label}: {path}")
            return 0
        if spec.mode == "single":
            results = harness.run_single(spec)
            for eng, value, stderr, _terms, note in results:
                tail = f" +- {stderr:.3g}" if stderr == stderr else ""
                tail += f"  [{note}]" if note else ""
                print(f"{eng:>10}: {value:.{spec.precision}g}{tail}")
            return 0
        checks, ok = harness.run_validate(spec)
        report = "\n".join(c.line() for c in checks)
        print(report)
        n_fail = sum(c.status == "FAIL" for c in checks)
        print(f"{len(checks)} checks: "
              f"{sum(c.status == 'PASS' for c in checks)} passed, "
              f"{n_fail} failed, "
              f"{sum(c.status == 'SKIP' for c in checks)} skipped")
        if spec.out:
            with open(spec.out, "w") as f:
                f.write(report + "\n")
        return 0 if ok else 1
    except caught as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
