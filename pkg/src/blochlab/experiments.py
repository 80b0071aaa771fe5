"""Built-in experiment recipes.

Each recipe takes a resolved configuration, writes its artifacts into an
output directory and returns a list of named pass/fail items.  Outputs are
deterministic given the configuration: no timestamps, sorted assembly, and
random points drawn only from the configured seed.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import criteria
from .construct import (build_nomoc, build_nosupp, build_riesz, check_nosupp, clark_function,
                        riesz_depth_bound, riesz_witness, verify_moc_bound)
from .dyadic import DyadicArc, LebesgueMeasure, PointSet, cantor_pattern, dirac, dump_measure, half_density_set, closed_set_from_dump
from .majorant import Majorant, w_entropy
from .report import CONVERGING, DIVERGING, dumps, fmt_float
from .transform import (UncertifiedError, bloch_seminorm_sample, growth_scan, polar_grid, singular_inner,
                        transforms)


class ConfigError(ValueError):
    """A configuration key is missing, unknown or malformed."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass
class Item:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, **self.detail}


@dataclass
class Config:
    recipe: str
    majorant: str = "power:1/2"
    levels: int | None = None
    eta: Fraction = Fraction(1, 2)
    set: str = "points:0,1/3"
    depth: int | None = None
    quad: int = 8
    points: int | None = None
    workers: int = 1
    seed: int = 0

    def to_dict(self) -> dict:
        return {k: (fmt_float(v) if isinstance(v, Fraction) else v) for k, v in self.__dict__.items()}


KEYS = {"recipe", "majorant", "levels", "eta", "set", "depth", "quad", "points", "workers", "seed", "out-dir"}


def _parse_int(key, value, low=0):
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected an integer, got {value!r}") from None
    if v < low:
        raise ConfigError(key, f"must be at least {low}")
    return v


def make_config(values: dict) -> Config:
    """Validate a flat key/value mapping into a Config."""
    for key in values:
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
    if not values.get("recipe"):
        raise ConfigError("recipe", "missing")
    if values["recipe"].startswith("custom:"):
        parse_pipeline(values["recipe"])
    elif values["recipe"] not in RECIPES:
        raise ConfigError("recipe", f"unknown recipe {values['recipe']!r}; choose from {', '.join(RECIPES)} "
                                    "or custom:<measure>:<check>,...")
    cfg = Config(values["recipe"])
    if values.get("majorant") is not None:
        try:
            Majorant.parse(values["majorant"])
        except Exception as exc:
            raise ConfigError("majorant", str(exc)) from None
        cfg.majorant = values["majorant"]
    if values.get("eta") is not None:
        try:
            cfg.eta = Fraction(str(values["eta"]))
        except (ValueError, ZeroDivisionError):
            raise ConfigError("eta", f"not a number: {values['eta']!r}") from None
        if not 0 < cfg.eta < 1:
            raise ConfigError("eta", "must lie in (0, 1)")
    if values.get("set") is not None:
        cfg.set = str(values["set"])
        parse_set(cfg.set)
    for key, low in (("levels", 0), ("depth", 0), ("quad", 1), ("points", 1), ("workers", 1), ("seed", 0)):
        if values.get(key) is not None:
            setattr(cfg, key, _parse_int(key, values[key], low))
    return cfg


def parse_set(text: str):
    """Closed set from 'points:a,b,...', 'cantor:D', 'half:D' or a path to a closed-set dump."""
    kind, _, arg = text.partition(":")
    try:
        if kind == "points":
            return PointSet([Fraction(p) for p in arg.split(",") if p])
        if kind == "cantor":
            return cantor_pattern(int(arg))
        if kind == "half":
            return half_density_set(int(arg))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError("set", str(exc)) from None
    path = Path(text)
    if path.is_file():
        import json
        return closed_set_from_dump(json.loads(path.read_text()))
    raise ConfigError("set", f"not a set description or file: {text!r}")


def _write(out: Path, name: str, text: str) -> str:
    (out / name).write_text(text)
    return name


def _map(fn: Callable, items, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# recipes ---------------------------------------------------------------------------

def nomoc_recipe(cfg: Config, out: Path) -> list[Item]:
    w = Majorant.parse(cfg.majorant)
    mu = build_nomoc(w, cfg.levels or 3)
    depth = cfg.depth if cfg.depth is not None else mu.generations[-1]
    _write(out, "measure.json", dumps(dump_measure(mu, depth)))
    moc = verify_moc_bound(mu, w, depth)
    _write(out, "moc_bound.json", dumps(moc.to_dict()))
    w1 = criteria.w1_report(mu, mu.support_set(), depth, cfg.quad, workers=cfg.workers)
    _write(out, "w1_report.csv", w1.to_csv())
    _write(out, "w1_report.json", dumps(w1.to_dict()))
    return [
        Item("moc_bound", moc.passed, {"worst_ratio": moc.worst_ratio, "regime_ratio": moc.worst_ratio_regime}),
        Item("w1_converging", w1.verdict == CONVERGING, {"tail_ratio": w1.tail_ratio, "cumulative": w1.cumulative}),
    ]


def nosupp_recipe(cfg: Config, out: Path) -> list[Item]:
    E = parse_set(cfg.set)
    depth = cfg.depth if cfg.depth is not None else 12
    mu, coverings = build_nosupp(E, depth)
    _write(out, "measure.json", dumps(dump_measure(mu, depth)))
    set_depth = depth if E.depth is None else min(depth, E.depth)
    _write(out, "set.json", dumps(E.dump(set_depth)))
    cov = check_nosupp(mu, E, coverings, depth)
    cov_dict = cov.to_dict()
    cov_dict["coverings"] = [[[a.level, a.index] for a in g] for g in coverings]
    _write(out, "coverings.json", dumps(cov_dict))
    w1 = criteria.w1_report(mu, E, set_depth, cfg.quad, workers=cfg.workers)
    _write(out, "w1_report.csv", w1.to_csv())
    _write(out, "w1_report.json", dumps(w1.to_dict()))
    cs = criteria.carleson_sum(E, set_depth)
    _write(out, "carleson_sum.csv", cs.to_csv())
    return [
        Item("support_bound", cov.support_ok, {"checked_arcs": cov.checked_arcs}),
        Item("covering_density", cov.density_ok, {"generations": cov.generations}),
        Item("packing", cov.packing_ok),
        Item("w1_converging", w1.verdict == CONVERGING, {"tail_ratio": w1.tail_ratio, "cumulative": w1.cumulative}),
    ]


def riesz_recipe(cfg: Config, out: Path) -> list[Item]:
    nu = build_riesz(cfg.eta)
    levels = cfg.levels if cfg.levels is not None else 8
    extra = cfg.depth if cfg.depth is not None else 12
    delta = Fraction(1, 2)
    _write(out, "measure.json", dumps(dump_measure(nu, levels)))
    rows, missing = [], 0
    for n in range(levels + 1):
        for k in range(1 << n):
            arc = DyadicArc(n, k)
            hit = riesz_witness(nu, arc, delta, extra)
            if hit is None:
                missing += 1
                rows.append([n, k, "", riesz_depth_bound(nu, arc, delta)])
            else:
                rows.append([n, k, hit[0], riesz_depth_bound(nu, arc, delta)])
    with open(out / "witnesses.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["level", "index", "extra_levels", "extra_levels_needed"])
        writer.writerows(rows)
    zyg = criteria.zygmund_seminorm(nu, 10)
    ez = criteria.exp_zygmund_constant(nu, 10)
    _write(out, "zygmund.json", dumps(zyg.to_dict()))
    _write(out, "expzyg.json", dumps(ez.to_dict()))
    worst = max(r[3] for r in rows)
    return [Item("witness_within_extra_levels", missing == 0,
                 {"extra_levels": extra, "arcs_without_witness": missing, "max_levels_needed": worst})]


def clark_recipe(cfg: Config, out: Path) -> list[Item]:
    nu = build_riesz(cfg.eta)
    f = clark_function(nu)
    n_points = cfg.points if cfg.points is not None else 1 << 16
    radial = 64 if n_points >= 4096 else 16
    radii = 1 - np.geomspace(0.5, 2.0 ** -12, radial)
    grid = polar_grid(max(n_points // radial, 1), radii)
    delta = 0.05
    scan = growth_scan(f.f, delta, grid, windows=64)
    b = f.b(grid)
    sample_pts = polar_grid(64, 1 - np.geomspace(0.5, 2.0 ** -8, 16))
    sample = bloch_seminorm_sample(f.herglotz, sample_pts)
    _write(out, "growth_scan.json", dumps({
        "delta": delta, "grid_points": int(len(grid)), "captured": int(len(scan.points)),
        "window_distance": [float(x) for x in scan.window_distance], "worst_window": scan.worst_window,
        "max_abs_b": float(np.max(np.abs(b))), "herglotz_bloch_sample": sample.value,
    }))
    return [
        Item("windows_within_1/32", scan.worst_window <= 1 / 32, {"worst_window": scan.worst_window}),
        Item("b_maps_into_disc", bool(np.max(np.abs(b)) < 1), {"max_abs_b": float(np.max(np.abs(b)))}),
    ]


def atom_recipe(cfg: Config, out: Path) -> list[Item]:
    mu = dirac()
    n_points = cfg.points if cfg.points is not None else 50
    rng = np.random.default_rng(cfg.seed)
    eps = 2.0 ** rng.uniform(-10, -0.2, n_points)
    zs = (1 - eps) * np.exp(2j * np.pi * rng.uniform(0, 1, n_points))

    def row(z):
        t = transforms(mu, z, ("H", "dH"))
        S, Sp = singular_inner(mu, z)
        H0 = (1 + z) / (1 - z)
        dH0 = 2 / (1 - z) ** 2
        S0 = np.exp(-H0)
        return [z, t["H"], H0, t["dH"], dH0, S, S0]

    rows = _map(row, list(zs), cfg.workers)
    worst_h = worst_s = worst_dh = 0.0
    bound_ok = True
    with open(out / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["re_z", "im_z", "H_err", "H_bound", "dH_rel_err", "S_rel_err"])
        for z, H, H0, dH, dH0, S, S0 in rows:
            eh = abs(H.value - H0)
            bound_ok &= eh <= H.error_bound and H.error_bound <= 1e-8
            rdh = abs(dH.value - dH0) / abs(dH0)
            rs = abs(S.value - S0) / abs(S0)
            worst_h, worst_dh, worst_s = max(worst_h, eh), max(worst_dh, rdh), max(worst_s, rs)
            writer.writerow([fmt_float(z.real), fmt_float(z.imag), fmt_float(eh), fmt_float(H.error_bound),
                             fmt_float(rdh), fmt_float(rs)])
    depth = cfg.depth if cfg.depth is not None else 14
    w1 = criteria.w1_report(mu, PointSet([0]), depth, cfg.quad, workers=cfg.workers)
    _write(out, "w1_report.csv", w1.to_csv())
    zyg = criteria.zygmund_seminorm(mu, 12)
    _write(out, "zygmund.json", dumps(zyg.to_dict()))
    return [
        Item("herglotz_within_bound", bool(bound_ok), {"max_abs_err": worst_h}),
        Item("singular_inner_rel_1e-8", worst_s <= 1e-8, {"max_rel_err": worst_s}),
        Item("derivative_rel_1e-8", worst_dh <= 1e-8, {"max_rel_err": worst_dh}),
        Item("w1_converging", w1.verdict == CONVERGING, {"tail_ratio": w1.tail_ratio}),
        Item("zygmund_exact", all(v == (1 << n if n else 0) for n, v, _ in zyg.per_level)),
    ]


RECIPES = {
    "nomoc-thm14": nomoc_recipe,
    "nosupp-thm15": nosupp_recipe,
    "riesz-lemma53": riesz_recipe,
    "clark-prop52": clark_recipe,
    "atom-baseline": atom_recipe,
}


MEASURES = ("nomoc", "nosupp", "riesz", "atom", "lebesgue")
CHECKS = ("zygmund", "expzyg", "cyclic", "moc", "w1", "carleson", "entropy")


def parse_pipeline(recipe: str) -> tuple[str, list[str]]:
    """Split 'custom:<measure>:<check>,<check>,...' into its parts."""
    parts = recipe.split(":")
    if len(parts) != 3 or parts[1] not in MEASURES:
        raise ConfigError("recipe", f"custom pipeline must be custom:<{'|'.join(MEASURES)}>:<checks>")
    checks = [c for c in parts[2].split(",") if c]
    bad = [c for c in checks if c not in CHECKS]
    if bad or not checks:
        raise ConfigError("recipe", f"unknown checks {bad or parts[2]!r}; choose from {', '.join(CHECKS)}")
    return parts[1], checks


def custom_recipe(cfg: Config, out: Path) -> list[Item]:
    """Construct a measure, run the named checks, then sample H at seeded points."""
    kind, checks = parse_pipeline(cfg.recipe)
    depth = cfg.depth if cfg.depth is not None else 10
    E = None
    if kind == "nomoc":
        mu = build_nomoc(Majorant.parse(cfg.majorant), cfg.levels or 3)
        E = mu.support_set()
    elif kind == "nosupp":
        E = parse_set(cfg.set)
        mu, _ = build_nosupp(E, depth)
    elif kind == "riesz":
        mu = build_riesz(cfg.eta)
    elif kind == "atom":
        mu, E = dirac(), PointSet([0])
    else:
        mu = LebesgueMeasure()
    if E is None and any(c in ("w1", "carleson", "entropy") for c in checks):
        E = parse_set(cfg.set)
    set_depth = depth if E is None or E.depth is None else min(depth, E.depth)
    _write(out, "measure.json", dumps(dump_measure(mu, depth)))
    items = []
    for check in checks:
        if check == "zygmund":
            rep = criteria.zygmund_seminorm(mu, depth)
            items.append(Item(check, True, {"sup": rep.sup}))
        elif check in ("expzyg", "cyclic"):
            fn = criteria.exp_zygmund_constant if check == "expzyg" else criteria.cyclicity_constant
            rep = fn(mu, depth)
            items.append(Item(check, rep.trend != DIVERGING, {"trend": rep.trend}))
        elif check == "moc":
            rep = verify_moc_bound(mu, Majorant.parse(cfg.majorant), depth)
            items.append(Item(check, rep.passed, {"worst_ratio": rep.worst_ratio}))
        else:
            if check == "w1":
                rep = criteria.w1_report(mu, E, set_depth, cfg.quad, workers=cfg.workers)
            elif check == "carleson":
                rep = criteria.carleson_sum(E, set_depth)
            else:
                rep = w_entropy(E, Majorant.parse(cfg.majorant), set_depth)
            _write(out, f"{check}.csv", rep.to_csv())
            items.append(Item(check, rep.verdict == CONVERGING, {"verdict": rep.verdict}))
        _write(out, f"{check}.json", dumps(rep.to_dict()))

    n_points = cfg.points if cfg.points is not None else 16
    rng = np.random.default_rng(cfg.seed)
    eps = 2.0 ** rng.uniform(-8, -0.2, n_points)
    zs = (1 - eps) * np.exp(2j * np.pi * rng.uniform(0, 1, n_points))

    def sample(z):
        try:
            return transforms(mu, z, ("H",))["H"]
        except UncertifiedError:
            return None

    values = _map(sample, list(zs), cfg.workers)
    with open(out / "transform_sample.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["re_z", "im_z", "re_val", "im_val", "err_bound"])
        for z, tv in zip(zs, values):
            row = [z.real, z.imag] + ([tv.value.real, tv.value.imag, tv.error_bound] if tv else [math.nan] * 3)
            writer.writerow([fmt_float(x) for x in row])
    items.append(Item("transform_certified", all(v is not None for v in values), {"points": n_points}))
    return items


def run_recipe(cfg: Config, out: Path) -> dict:
    """Run one recipe into ``out`` and write summary.json; returns the summary."""
    out.mkdir(parents=True, exist_ok=True)
    fn = custom_recipe if cfg.recipe.startswith("custom:") else RECIPES[cfg.recipe]
    items = fn(cfg, out)
    summary = {
        "recipe": cfg.recipe,
        "config": {k: v for k, v in cfg.to_dict().items() if k != "workers"},
        "items": [i.to_dict() for i in items],
        "passed": all(i.passed for i in items),
    }
    _write(out, "summary.json", dumps(summary))
    return summary
