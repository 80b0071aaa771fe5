"""Command-line driver: construct measures, evaluate transforms, run checks and recipes.

Exit status is 0 when every check passes, 1 when a check fails and 2 for
usage or internal errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import criteria
from .construct import build_nomoc, build_nosupp, build_riesz, load_measure, verify_moc_bound
from .dyadic import LebesgueMeasure, dirac, dump_measure
from .experiments import KEYS, ConfigError, make_config, parse_set, run_recipe
from .majorant import Majorant, w_entropy
from .report import CONVERGING, DIVERGING, dumps, fmt_float
from .transform import UncertifiedError, singular_inner, transforms

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def read_config(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {num}", f"expected key=value, got {line!r}")
        values[key.strip().replace("_", "-")] = value.strip()
    return values


# subcommands ------------------------------------------------------------------------

def cmd_construct(args) -> int:
    kind = args.kind
    if kind == "nomoc":
        w = Majorant.parse(args.majorant)
        mu = build_nomoc(w, args.levels)
        depth = args.depth if args.depth is not None else mu.generations[-1]
    elif kind == "nosupp":
        if not args.set:
            raise UsageError("construct nosupp needs --set")
        E = parse_set(args.set)
        depth = args.depth if args.depth is not None else 12
        mu, _ = build_nosupp(E, depth)
    elif kind == "riesz":
        mu = build_riesz(Fraction(args.eta))
        depth = args.depth if args.depth is not None else 16
    elif kind == "atom":
        mu = dirac()
        depth = args.depth if args.depth is not None else 8
    else:
        mu = LebesgueMeasure()
        depth = args.depth if args.depth is not None else 8
    _emit(dumps(dump_measure(mu, depth)), args.out)
    return EXIT_PASS


def _read_points(path: str) -> np.ndarray:
    pts = []
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    pts.append(complex(float(row[0]), float(row[1]) if len(row) > 1 else 0.0))
                except ValueError:
                    if pts:
                        raise UsageError(f"bad point row {row!r}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    return np.array(pts, dtype=complex)


def cmd_transform(args) -> int:
    mu = load_measure(_read_json(args.measure))
    zs = _read_points(args.points)
    kind = args.kind
    rows = []
    for z in zs:
        if kind in ("S", "S'"):
            S, Sp = singular_inner(mu, z, tol=args.tol)
            tv = S if kind == "S" else Sp
        else:
            tv = transforms(mu, z, (kind,), tol=args.tol)[{"H'": "dH"}.get(kind, kind)]
        rows.append([z.real, z.imag, tv.value.real, tv.value.imag, tv.error_bound])
    lines = ["re_z,im_z,re_val,im_val,err_bound"]
    lines += [",".join(fmt_float(x) for x in r) for r in rows]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_PASS


def cmd_check(args) -> int:
    what = args.what
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    depth = args.depth if args.depth is not None else 10
    status = EXIT_PASS
    table = None
    if what in ("zygmund", "expzyg", "cyclic", "w1", "moc"):
        if not args.measure:
            raise UsageError(f"check {what} needs --measure")
        mu = load_measure(_read_json(args.measure))
    if what == "zygmund":
        result = criteria.zygmund_seminorm(mu, depth).to_dict()
    elif what in ("expzyg", "cyclic"):
        fn = criteria.exp_zygmund_constant if what == "expzyg" else criteria.cyclicity_constant
        rep = fn(mu, depth)
        result = rep.to_dict()
        result["verdict"] = rep.trend
        status = EXIT_FAIL if rep.trend == DIVERGING else EXIT_PASS
    elif what == "moc":
        rep = verify_moc_bound(mu, Majorant.parse(args.majorant), depth)
        result = rep.to_dict()
        status = EXIT_PASS if rep.passed else EXIT_FAIL
    else:
        if not args.set:
            raise UsageError(f"check {what} needs --set")
        E = parse_set(args.set)
        if E.depth is not None:
            if args.depth is None:
                depth = E.depth
            elif depth > E.depth:
                raise UsageError(f"--depth {depth} exceeds the closed set's depth {E.depth}")
        if what == "w1":
            rep = criteria.w1_report(mu, E, depth, args.quad, workers=args.workers)
        elif what == "carleson":
            rep = criteria.carleson_sum(E, depth)
        else:
            rep = w_entropy(E, Majorant.parse(args.majorant), depth)
        result = rep.to_dict()
        table = rep.to_csv()
        status = EXIT_PASS if rep.verdict == CONVERGING else EXIT_FAIL
    if out_dir:
        (out_dir / f"{what}.json").write_text(dumps(result))
        if table is not None:
            (out_dir / f"{what}.csv").write_text(table)
    else:
        sys.stdout.write(dumps(result))
    return status


def cmd_run(args) -> int:
    values = read_config(args.config) if args.config else {}
    for key in KEYS:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            values[key] = flag
    if not values:
        raise UsageError("empty configuration: give --recipe or --config")
    out = Path(values.pop("out-dir", None) or "blochlab-out")
    cfg = make_config(values)
    summary = run_recipe(cfg, out)
    for item in summary["items"]:
        sys.stdout.write(f"{'PASS' if item['passed'] else 'FAIL'} {item['name']}\n")
    return EXIT_PASS if summary["passed"] else EXIT_FAIL


# parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blochlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build a measure and write its dump")
    c.add_argument("kind", choices=["nomoc", "nosupp", "riesz", "atom", "lebesgue"])
    c.add_argument("--majorant", default="power:1/2")
    c.add_argument("--levels", type=int, default=3)
    c.add_argument("--eta", default="1/2")
    c.add_argument("--set", help="points:a,b | cantor:D | half:D | closed-set dump path")
    c.add_argument("--depth", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_construct)

    t = sub.add_parser("transform", help="evaluate a transform at the points of a CSV file")
    t.add_argument("--measure", required=True)
    t.add_argument("--kind", required=True, choices=["P", "H", "H'", "S", "S'"])
    t.add_argument("--points", required=True)
    t.add_argument("--tol", type=float, default=1e-8)
    t.add_argument("--out")
    t.set_defaults(func=cmd_transform)

    k = sub.add_parser("check", help="run one criterion")
    k.add_argument("what", choices=["zygmund", "expzyg", "cyclic", "w1", "carleson", "moc", "entropy"])
    k.add_argument("--measure")
    k.add_argument("--set")
    k.add_argument("--majorant", default="power:1/2")
    k.add_argument("--depth", type=int)
    k.add_argument("--quad", type=int, default=8)
    k.add_argument("--workers", type=int, default=1)
    k.add_argument("--out-dir")
    k.set_defaults(func=cmd_check)

    r = sub.add_parser("run", help="run a built-in recipe")
    r.add_argument("--config", help="flat key=value file; flags win")
    for key in sorted(KEYS):
        r.add_argument(f"--{key}")
    r.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        sys.stderr.write(f"blochlab: usage error: {exc}\n")
        return EXIT_USAGE
    except UncertifiedError as exc:
        sys.stderr.write(f"blochlab: {exc}\n")
        return EXIT_FAIL
    except Exception as exc:  # reported, never swallowed silently
        sys.stderr.write(f"blochlab: internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
