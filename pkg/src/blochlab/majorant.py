"""Majorants w (moduli of continuity), their structural predicates and the w-entropy of closed sets."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import mpmath
from scipy import integrate

from .dyadic import DyadicClosedSet, as_fraction
from .report import CONVERGING, DIVERGING, INCONCLUSIVE, TailReport

KINDS = ("power", "tlog", "loginv", "table")


@dataclass(frozen=True)
class Majorant:
    """w(t) = t**alpha ("power"), t log(e/t) ("tlog"), log(e/t)**-alpha ("loginv") or a table.

    Tables are piecewise linear through (t_i, w_i) with (0, 0) prepended when
    missing; they must reach t = 1.
    """

    kind: str
    alpha: Fraction | None = None
    table: tuple[tuple[Fraction, Fraction], ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown majorant kind {self.kind!r}")
        if self.kind in ("power", "loginv"):
            if self.alpha is None or self.alpha <= 0:
                raise ValueError(f"{self.kind} needs a positive exponent")
            if self.kind == "power" and self.alpha > 1:
                raise ValueError("power majorants need 0 < alpha <= 1")
        if self.kind == "table":
            pts = list(self.table)
            if not pts or pts[0][0] != 0:
                pts.insert(0, (Fraction(0), Fraction(0)))
            ts = [t for t, _ in pts]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("table abscissae must increase strictly")
            if ts[-1] < 1:
                raise ValueError("table must cover [0, 1]")
            if pts[0][1] != 0:
                raise ValueError("a majorant vanishes at 0")
            object.__setattr__(self, "table", tuple(pts))

    @classmethod
    def power(cls, alpha) -> "Majorant":
        return cls("power", as_fraction(alpha))

    @classmethod
    def tlog(cls) -> "Majorant":
        return cls("tlog")

    @classmethod
    def loginv(cls, alpha) -> "Majorant":
        return cls("loginv", as_fraction(alpha))

    @classmethod
    def from_table(cls, points) -> "Majorant":
        return cls("table", None, tuple((as_fraction(t), as_fraction(w)) for t, w in points))

    @classmethod
    def parse(cls, spec: str) -> "Majorant":
        """Parse "power:1/2", "tlog", "loginv:2" or "table:<path>"."""
        kind, _, arg = spec.strip().partition(":")
        if kind == "tlog" and not arg:
            return cls.tlog()
        if kind in ("power", "loginv") and arg:
            return cls(kind, as_fraction(arg))
        if kind == "table" and arg:
            return cls.from_table(_read_table(Path(arg)))
        raise ValueError(f"bad majorant spec {spec!r}; expected power:<a>, tlog, loginv:<a> or table:<path>")

    @property
    def spec(self) -> str:
        if self.kind == "tlog":
            return "tlog"
        if self.kind == "table":
            return "table"
        return f"{self.kind}:{self.alpha}"

    # evaluation -------------------------------------------------------------
    def __call__(self, t: float) -> float:
        """Float evaluation for quadrature."""
        t = float(t)
        if t <= 0:
            return 0.0
        if self.kind == "power":
            return t ** float(self.alpha)
        if self.kind == "tlog":
            return t * (1.0 - math.log(t))
        if self.kind == "loginv":
            return (1.0 - math.log(t)) ** -float(self.alpha)
        return float(self._interpolate(Fraction(t)))

    def log_w(self, t: float) -> float:
        """log w(t), accurate for tiny t."""
        t = float(t)
        if self.kind == "power":
            return float(self.alpha) * math.log(t)
        if self.kind == "tlog":
            return math.log(t) + math.log1p(-math.log(t))
        if self.kind == "loginv":
            return -float(self.alpha) * math.log1p(-math.log(t))
        return math.log(self(t))

    def of_log(self, u: float) -> float:
        """w(exp(-u)), evaluated without forming exp(-u) when possible."""
        if self.kind == "power":
            return math.exp(-float(self.alpha) * u)
        if self.kind == "tlog":
            return math.exp(-u) * (1.0 + u)
        if self.kind == "loginv":
            return (1.0 + u) ** -float(self.alpha)
        return self(math.exp(-u))

    def mp(self, t, dps: int = 50):
        """High-precision value as an mpmath number."""
        with mpmath.workdps(dps):
            if self.kind == "table":
                return mpmath.mpf(self._interpolate(as_fraction(t)).numerator) / self._interpolate(as_fraction(t)).denominator
            x = _to_mp(t)
            if x == 0:
                return mpmath.mpf(0)
            if self.kind == "power":
                return x ** _to_mp(self.alpha)
            if self.kind == "tlog":
                return x * (1 - mpmath.log(x))
            return (1 - mpmath.log(x)) ** (-_to_mp(self.alpha))

    def lower_bound(self, t: Fraction, prec: int = 120) -> Fraction:
        """A certified rational lower bound for w(t) from interval arithmetic."""
        t = as_fraction(t)
        if t == 0:
            return Fraction(0)
        if self.kind == "table":
            return self._interpolate(t)
        iv = mpmath.iv
        old = iv.prec
        iv.prec = prec
        try:
            x = iv.mpf(t.numerator) / t.denominator
            if self.kind == "power":
                a = iv.mpf(self.alpha.numerator) / self.alpha.denominator
                val = iv.exp(a * iv.log(x))
            elif self.kind == "tlog":
                val = x * (1 - iv.log(x))
            else:
                a = iv.mpf(self.alpha.numerator) / self.alpha.denominator
                val = iv.exp(-a * iv.log(1 - iv.log(x)))
            lo = val.a
        finally:
            iv.prec = old
        man, exp = lo.man_exp if hasattr(lo, "man_exp") else mpmath.mpf(lo).man_exp
        return Fraction(int(man)) * (Fraction(2) ** int(exp))

    def _interpolate(self, t: Fraction) -> Fraction:
        pts = self.table
        if t < 0 or t > pts[-1][0]:
            raise ValueError(f"t={t} outside the table range")
        for (t0, w0), (t1, w1) in zip(pts, pts[1:]):
            if t <= t1:
                return w0 + (w1 - w0) * (t - t0) / (t1 - t0)
        return pts[-1][1]

    @property
    def resolution(self) -> float:
        """Smallest positive abscissa where a table is informative (0 for closed forms)."""
        return float(self.table[1][0]) if self.kind == "table" else 0.0


def _to_mp(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def _read_table(path: Path):
    text = path.read_text()
    if path.suffix == ".json":
        return [tuple(row) for row in json.loads(text)]
    rows = []
    for row in csv.reader(text.splitlines()):
        if not row or row[0].strip().startswith("#"):
            continue
        try:
            rows.append((as_fraction(row[0]), as_fraction(row[1])))
        except (ValueError, ZeroDivisionError):
            continue  # header line
    return rows


def eval_majorant(w: Majorant, t, precision: float = 1e-15):
    """w(t) to absolute accuracy ``precision`` (an mpmath number)."""
    tf = as_fraction(t)
    if tf < 0 or tf > 1:
        raise ValueError(f"t={t} outside [0, 1]")
    dps = max(20, int(-math.log10(precision)) + 10)
    return w.mp(tf, dps)


# structural predicates ----------------------------------------------------------

def _grid(grid_depth: int) -> list[Fraction]:
    pts = {Fraction(1, 1 << j) for j in range(grid_depth + 1)}
    pts |= {Fraction(3, 1 << (j + 2)) for j in range(grid_depth)}
    return sorted(pts)


@dataclass
class CheckResult:
    """Pass/fail with an optional witness."""

    passed: bool
    witness: tuple | None = None
    details: list[str] = field(default_factory=list)

    def __bool__(self):
        return self.passed


def aa_exponent_check(w: Majorant, gamma, grid_depth: int = 40) -> CheckResult:
    """Check that w(t)/t**gamma is non-increasing on dyadic points and their midpoints.

    The witness is the first pair t1 < t2 (scanning upward from the smallest t)
    with w(t2)/t2**gamma > w(t1)/t1**gamma.
    """
    g = as_fraction(gamma)
    if not 0 < g < 1:
        raise ValueError("gamma must lie in (0, 1)")
    with mpmath.workdps(60):
        ts = _grid(grid_depth)
        gm = _to_mp(g)
        logs = [mpmath.log(w.mp(t, 60)) - gm * mpmath.log(_to_mp(t)) for t in ts]
        tol = mpmath.mpf(10) ** -40
        for (t1, v1), (t2, v2) in zip(zip(ts, logs), zip(ts[1:], logs[1:])):
            if v2 > v1 + tol:
                return CheckResult(False, (t1, t2, float(mpmath.exp(v1)), float(mpmath.exp(v2))))
    return CheckResult(True)


def check_majorant(w: Majorant, grid_depth: int = 40) -> CheckResult:
    """Grid checks: w(0) = 0, w non-decreasing, and w(t)/t <= 2 w(s)/s whenever s < t."""
    details = []
    if w.mp(0) != 0:
        details.append("w(0) != 0")
    ts = _grid(grid_depth)
    with mpmath.workdps(50):
        vals = [w.mp(t, 50) for t in ts]
        for (t1, v1), (t2, v2) in zip(zip(ts, vals), zip(ts[1:], vals[1:])):
            if v2 < v1 * (1 - mpmath.mpf(10) ** -40):
                details.append(f"decreasing between {t1} and {t2}")
                break
        slopes = [v / _to_mp(t) for t, v in zip(ts, vals)]
        low = slopes[0]
        for t, s in zip(ts, slopes):
            low = min(low, s)
            if s > 2 * low * (1 + mpmath.mpf(10) ** -40):
                details.append(f"w(t)/t at t={t} exceeds twice its minimum over smaller s")
                break
    return CheckResult(not details, None, details)


@dataclass
class DiniReport:
    """Outcome of the Dini integral: value or divergence evidence, with the dyadic pieces."""

    verdict: str
    value: float | None
    pieces: list[tuple[float, float, float]]
    tail: float
    ratio: float


def dini_integral(w: Majorant, tol: float = 1e-8, max_pieces: int = 62):
    """Integral of w(t)/t over (0, 1], via u = log(1/t) on the pieces [0,1], [1,2], [2,4], ...

    Returns (value, report) when convergent, ("divergent", report) when the
    pieces stop shrinking, and ("inconclusive", report) otherwise.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    u_max = math.inf
    if w.kind == "table":
        u_max = -math.log(w.resolution)
    pieces = []
    partial = []
    ratios = []
    bounds = [0.0, 1.0]
    while len(bounds) <= max_pieces:
        bounds.append(bounds[-1] * 2)
    for a, b in zip(bounds, bounds[1:]):
        if b > u_max:
            report = DiniReport(INCONCLUSIVE, None, pieces, math.nan, ratios[-1] if ratios else math.nan)
            return INCONCLUSIVE, report
        val, err = integrate.quad(w.of_log, a, b, epsabs=tol * 1e-3, epsrel=1e-13, limit=200)
        pieces.append((a, b, val))
        partial.append(val)
        if len(pieces) >= 2 and pieces[-2][2] > 0:
            ratios.append(val / pieces[-2][2])
        if val == 0.0:
            return math.fsum(partial), DiniReport(CONVERGING, math.fsum(partial), pieces, 0.0, 0.0)
        if len(ratios) >= 3:
            rho = ratios[-1]
            drift = abs(ratios[-1] - ratios[-2])
            if rho < 1 - 1e-3:
                tail = val * rho / (1 - rho)
                spread = tail * drift / (1 - rho) + val * 1e-12
                if tail < tol / 4 or (spread < tol / 4 and drift < 1e-3):
                    total = math.fsum(partial) + tail
                    return total, DiniReport(CONVERGING, total, pieces, tail, rho)
    rho = ratios[-1]
    if rho >= 1 - 1e-3:
        return "divergent", DiniReport(DIVERGING, None, pieces, math.inf, rho)
    return INCONCLUSIVE, DiniReport(INCONCLUSIVE, None, pieces, math.nan, rho)


# entropy ----------------------------------------------------------------------

def _gap_integral(w: Majorant, half: float, cache: dict) -> float:
    """Integral of log w(t) over [0, half]."""
    if half not in cache:
        val, _ = integrate.quad(w.log_w, 0.0, half, limit=200, epsabs=1e-13, epsrel=1e-12)
        cache[half] = val
    return cache[half]


def _point_gaps(pts: list[float]) -> list[float]:
    return [b - a for a, b in zip(pts, pts[1:])] + [pts[0] + 1.0 - pts[-1]]


def _hull_gaps(survivors: list[int], n: int) -> list[float]:
    """Lengths of the gaps between closed surviving arcs of length 2^-n."""
    size = 1.0 / (1 << n)
    ks = sorted(survivors)
    gaps = [(b - a - 1) * size for a, b in zip(ks, ks[1:])]
    gaps.append((ks[0] + (1 << n) - ks[-1] - 1) * size)
    return [g for g in gaps if g > 0]


def w_entropy(E: DyadicClosedSet, w: Majorant, depth: int, tol: float = 1e-3) -> TailReport:
    """The integral of log w(dist(theta, E)) over the circle, generation by generation.

    When E supplies exact points, generation n uses every point found so far
    and each gap (a, b) between consecutive points contributes
    2 * int_0^{(b-a)/2} log w.  Otherwise the gaps are those between the
    closed surviving arcs of generation n.  Either way gaps only split or
    widen with n, so the values never increase while w <= 1.  Distances are
    arc-length on the normalized circle.  The verdict is converging when the
    last four decrements are all below ``tol``.
    """
    for t in (1e-12, 1e-6, 0.25, 0.5, 1.0):
        if not w(t) > 0:
            raise ValueError("w must be strictly positive on (0, 1]")
    cache: dict = {}
    rows = []
    flags = {}
    prev = None
    approximate = False
    points: set[float] = set()
    for n in range(depth + 1):
        pts, exact = E.representatives(n)
        if exact:
            points.update(float(p) % 1.0 for p in pts)
            gaps = _point_gaps(sorted(points))
        else:
            approximate = True
            gaps = _hull_gaps(E.survivors(n), n)
        value = math.fsum(2.0 * _gap_integral(w, g / 2.0, cache) for g in gaps if g > 0)
        decrement = 0.0 if prev is None else value - prev
        rows.append((n, decrement, value))
        prev = value
        if len(E.survivors(n)) == (1 << n):
            flags[n] = "survivors cover the whole circle (measure-zero premise violated)"
    decs = [abs(d) for _, d, _ in rows[1:]]
    if len(decs) < 4:
        verdict = INCONCLUSIVE
    elif all(d < tol for d in decs[-4:]):
        verdict = CONVERGING
    else:
        verdict = DIVERGING
    ratio = math.nan
    if len(decs) >= 2 and decs[-2] > 0:
        ratio = decs[-1] / decs[-2]
    return TailReport(rows, verdict, ratio, flags, {"approximate_points": approximate, "value": prev})
