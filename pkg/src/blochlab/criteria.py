"""Computable regularity and membership tests on dyadic data.

Arc-pair suprema run over adjacent equal-length dyadic arcs only (wrapping
around the circle), which is comparable to the full supremum up to absolute
constants.  Verdicts describe trends, not sharp constants.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import mpmath
import numpy as np

from .dyadic import DyadicArc, DyadicClosedSet, DyadicMeasure, common_ancestor
from .report import CONVERGING, DIVERGING, INCONCLUSIVE, TailReport, geometric_report
from .transform import TWO_PI, evaluate_block

BOUNDED = "bounded"


class PreconditionError(ValueError):
    """An input violates the precondition of a check."""


# adjacent dyadic pairs ---------------------------------------------------------

def _adjacent_pairs(measure: DyadicMeasure, n: int):
    """(k, k', mass_k, mass_k') for adjacent arcs at level n where at least one mass is nonzero."""
    masses = dict(measure.nonzero(n))
    size = 1 << n
    keys = set()
    for k in masses:
        keys.add(k)
        keys.add((k - 1) % size)
    for k in sorted(keys):
        k2 = (k + 1) % size
        if k2 == k:
            continue
        yield k, k2, masses.get(k, Fraction(0)), masses.get(k2, Fraction(0))


@dataclass
class ZygmundReport:
    """Exact per-level maxima of density differences of adjacent dyadic arcs."""

    per_level: list[tuple[int, Fraction, tuple[int, int] | None]]

    @property
    def sup(self) -> Fraction:
        return max((v for _, v, _ in self.per_level), default=Fraction(0))

    def values(self) -> list[Fraction]:
        return [v for _, v, _ in self.per_level]

    def to_dict(self) -> dict:
        return {
            "surrogate": "adjacent dyadic pairs",
            "sup": self.sup,
            "per_level": [{"level": n, "max": v, "pair": list(p) if p else None} for n, v, p in self.per_level],
        }


def zygmund_seminorm(measure: DyadicMeasure, n_max: int) -> ZygmundReport:
    """max over adjacent level-n dyadic pairs of |nu(I)/|I| - nu(I')/|I'||, for n = 0..n_max."""
    rows = []
    for n in range(n_max + 1):
        best, pair = Fraction(0), None
        scale = 1 << n
        for k, k2, a, b in _adjacent_pairs(measure, n):
            diff = abs(a - b) * scale
            if diff > best:
                best, pair = diff, (k, k2)
        rows.append((n, best, pair))
    return ZygmundReport(rows)


def _trend(values: list) -> str:
    """bounded if the last level does not exceed the earlier maximum, diverging if the
    last three levels grow by more than 10% each, inconclusive otherwise."""
    vals = [mpmath.mpf(v) for v in values]
    if len(vals) < 2 or all(v == 0 for v in vals):
        return BOUNDED
    if vals[-1] <= max(vals[:-1]):
        return BOUNDED
    tail = vals[-4:]
    if len(tail) >= 3 and all(b > a * mpmath.mpf("1.1") for a, b in zip(tail, tail[1:])):
        return DIVERGING
    return INCONCLUSIVE


@dataclass
class ConstantReport:
    """Smallest constant satisfying a pair inequality on each level, with the maximizing pair."""

    per_level: list[tuple[int, mpmath.mpf, tuple | None]]
    trend: str
    extra: dict = field(default_factory=dict)

    @property
    def constant(self) -> mpmath.mpf:
        return max((c for _, c, _ in self.per_level), default=mpmath.mpf(0))

    @property
    def worst_pair(self):
        best = None
        for n, c, p in self.per_level:
            if p is not None and (best is None or c > best[0]):
                best = (c, n, p)
        return None if best is None else {"level": best[1], "I": best[2][0], "I_prime": best[2][1]}

    def to_dict(self) -> dict:
        return {
            "constant": self.constant,
            "trend": self.trend,
            "worst_pair": self.worst_pair,
            "per_level": [{"level": n, "constant": c, "pair": list(p) if p else None} for n, c, p in self.per_level],
            **self.extra,
        }


def exp_zygmund_constant(measure: DyadicMeasure, n_max: int) -> ConstantReport:
    """Smallest C with |d(I) - d(I')| <= C exp(-d(I)) over adjacent dyadic pairs, both orientations.

    d is the density nu(I)/|I|.  The pair is reported as (I, I') with I the
    arc in the exponent.
    """
    rows = []
    for n in range(n_max + 1):
        scale = 1 << n
        best, pair = mpmath.mpf(0), None
        for k, k2, a, b in _adjacent_pairs(measure, n):
            da, db = a * scale, b * scale
            diff = abs(da - db)
            if diff == 0:
                continue
            for I, J, d in ((k, k2, da), (k2, k, db)):
                c = mpmath.mpf(diff.numerator) / diff.denominator * mpmath.exp(mpmath.mpf(d.numerator) / d.denominator)
                if c > best:
                    best, pair = c, (I, J)
        rows.append((n, best, pair))
    return ConstantReport(rows, _trend([c for _, c, _ in rows]))


def cyclicity_constant(measure: DyadicMeasure, n_max: int) -> ConstantReport:
    """Smallest C with |d(I) - d(I')| <= C inf_J exp(-d(J)).

    J ranges over the smallest dyadic arc containing both I and I' and all of
    its dyadic ancestors, so the infimum is exp(-max ancestor density).  Also
    reports the constant obtained with only the smallest container.
    """
    memo: dict[tuple[int, int], Fraction] = {}

    def ancestor_max(level: int, index: int) -> Fraction:
        key = (level, index)
        if key not in memo:
            d = measure.mass_at(level, index) * (1 << level)
            memo[key] = d if level == 0 else max(d, ancestor_max(level - 1, index >> 1))
        return memo[key]

    rows, container_rows = [], []
    for n in range(n_max + 1):
        scale = 1 << n
        best, pair, best_c = mpmath.mpf(0), None, mpmath.mpf(0)
        for k, k2, a, b in _adjacent_pairs(measure, n):
            diff = abs(a - b) * scale
            if diff == 0:
                continue
            J = common_ancestor(DyadicArc(n, k), DyadicArc(n, k2))
            top = ancestor_max(J.level, J.index)
            own = measure.mass_at(J.level, J.index) * (1 << J.level)
            mdiff = mpmath.mpf(diff.numerator) / diff.denominator
            c = mdiff * mpmath.exp(mpmath.mpf(top.numerator) / top.denominator)
            c_own = mdiff * mpmath.exp(mpmath.mpf(own.numerator) / own.denominator)
            if c > best:
                best, pair = c, (k, k2)
            best_c = max(best_c, c_own)
        rows.append((n, best, pair))
        container_rows.append(best_c)
    extra = {"container_only_constant": max(container_rows, default=mpmath.mpf(0))}
    return ConstantReport(rows, _trend([c for _, c, _ in rows]), extra)


# Carleson boxes -----------------------------------------------------------------

@dataclass(frozen=True)
class CarlesonBox:
    """The box Q_I over a dyadic arc and its top half T_I, in polar coordinates (turns)."""

    arc: DyadicArc

    @property
    def size(self) -> float:
        return float(self.arc.length)

    @property
    def top(self) -> tuple[float, float, float, float]:
        """(r0, r1, theta0, theta1) of T_I."""
        s = self.size
        left = float(self.arc.left)
        return 1.0 - s, 1.0 - s / 2, left, left + s

    def in_box(self, z: complex) -> bool:
        return abs(z) < 1 and 1 - abs(z) <= self.size and self.arc.contains(_turns(z))

    def in_top(self, z: complex) -> bool:
        return self.in_box(z) and 1 - abs(z) >= self.size / 2


def _turns(z: complex) -> Fraction:
    return Fraction((math.atan2(z.imag, z.real) / TWO_PI) % 1.0)


def _midpoint_nodes(box: CarlesonBox, q: int) -> tuple[np.ndarray, np.ndarray]:
    r0, r1, t0, t1 = box.top
    dr, dt = (r1 - r0) / q, (t1 - t0) / q
    r = r0 + (np.arange(q) + 0.5) * dr
    t = t0 + (np.arange(q) + 0.5) * dt
    zs = (r[:, None] * np.exp(1j * TWO_PI * t[None, :])).ravel()
    weights = (r[:, None] * dr * TWO_PI * dt * np.ones(q)[None, :]).ravel()
    return zs, weights


def singular_derivative_modulus(measure: DyadicMeasure, ratio: float = 1 / 32) -> Callable:
    """z -> |S'(z)| = |H'(z)| exp(-P(z)) for the singular inner function of the measure."""
    def f(zs):
        out = evaluate_block(measure, zs, ("H", "dH"), ratio=ratio)
        return np.abs(out["dH"]) * np.exp(-out["H"].real)
    return f


def _richardson(integrand: Callable, box: CarlesonBox, q: int) -> tuple[float, float]:
    z1, w1 = _midpoint_nodes(box, q)
    z2, w2 = _midpoint_nodes(box, 2 * q)
    vals = integrand(np.concatenate([z1, z2]))
    m1 = math.fsum(w1 * vals[: len(z1)])
    m2 = math.fsum(w2 * vals[len(z1):])
    return (4 * m2 - m1) / 3, abs(m2 - m1) / 3


def box_integral(integrand: Callable, box: CarlesonBox, q: int, rel: float = 0.1,
                 max_quad: int = 64) -> tuple[float, float]:
    """Midpoint rule on T_I with q and 2q nodes per side; Richardson value and error estimate.

    While the estimate exceeds ``rel`` of the value, q is doubled up to ``max_quad``.
    """
    value, err = _richardson(integrand, box, q)
    while err > rel * abs(value) and 2 * q <= max_quad:
        q *= 2
        value, err = _richardson(integrand, box, q)
    return value, err


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def check_support_hull(measure: DyadicMeasure, E: DyadicClosedSet, depth: int) -> DyadicArc | None:
    """First level-``depth`` arc carrying mass but missing E, or None if the support lies in E's hull."""
    for k, _ in measure.nonzero(depth):
        if not E.meets(depth, k):
            return DyadicArc(depth, k)
    return None


def w1_report(measure: DyadicMeasure, E: DyadicClosedSet, depth: int, quad: int = 8, *,
              integrand: Callable | None = None, workers: int = 1, flag_ratio: float = 0.1,
              floor: float = 1e-12) -> TailReport:
    """Per-level sums over arcs I meeting E of the integral of |S'| over T_I.

    A level is flagged when its quadrature error estimate exceeds
    ``flag_ratio`` of its contribution and ``floor`` times the running total.
    """
    bad = check_support_hull(measure, E, depth)
    if bad is not None:
        raise PreconditionError(f"mass on {bad}, which does not meet the closed set")
    f = integrand or singular_derivative_modulus(measure)
    rows, flags, errors, boxes = [], {}, [], 0
    running = 0.0
    for n in range(depth + 1):
        arcs = [CarlesonBox(DyadicArc(n, k)) for k in E.survivors(n)]
        results = _map(lambda b: box_integral(f, b, quad, flag_ratio), arcs, workers)
        boxes += len(arcs)
        contrib = math.fsum(v for v, _ in results)
        err = math.fsum(e for _, e in results)
        running += contrib
        if err > flag_ratio * contrib and err > floor * running:
            flags[n] = f"quadrature error {err:.3g} exceeds {flag_ratio:g} of the contribution {contrib:.3g}"
        rows.append((n, contrib))
        errors.append(err)
    report = geometric_report(rows, flags, extra={"quad": quad, "boxes": boxes})
    total = report.cumulative
    # relative change between the cumulative sums at the last two levels
    report.extra["last_two_change"] = (total - report.per_level[-2][2]) / total if len(rows) >= 2 and total > 0 else math.nan
    report.extra["errors"] = errors
    return report


def carleson_sum(E: DyadicClosedSet, depth: int) -> TailReport:
    """Per level n, (number of dyadic arcs of length 2^-n meeting E) times 2^-n."""
    rows, exact = [], Fraction(0)
    counts = []
    for n in range(depth + 1):
        c = len(E.survivors(n))
        counts.append(c)
        term = Fraction(c, 1 << n)
        exact += term
        rows.append((n, float(term)))
    return geometric_report(rows, extra={"cumulative_exact": exact, "counts": counts})


def qbox_check(measure: DyadicMeasure, arc: DyadicArc, quad: int = 8, depth_cap: int = 8, *,
               integrand: Callable | None = None, workers: int = 1) -> tuple[float, float]:
    """Integral of |S'| over Q_I from the top halves of I's descendants down to ``depth_cap``
    extra levels; returns (estimate, estimate / |I|).  Requires mu(I) = 0."""
    if measure.mass(arc) != 0:
        raise PreconditionError(f"the measure charges {arc}")
    f = integrand or singular_derivative_modulus(measure)
    boxes = [CarlesonBox(d) for m in range(depth_cap + 1) for d in arc.descendants(m)]
    results = _map(lambda b: box_integral(f, b, quad), boxes, workers)
    total = math.fsum(v for v, _ in results)
    return total, total / float(arc.length)
