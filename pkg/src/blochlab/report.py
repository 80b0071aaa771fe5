"""Per-level tail reports and deterministic serialization helpers."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

CONVERGING = "converging"
DIVERGING = "diverging"
INCONCLUSIVE = "inconclusive"


def fit_ratio(contributions, k: int = 4) -> float:
    """Geometric ratio fitted (least squares on logs) to the last k contributions.

    Zero contributions after a positive one count as an immediate collapse.
    """
    tail = [float(c) for c in contributions[-k:]]
    if len(tail) < 2:
        return math.nan
    if all(c == 0 for c in tail):
        return 0.0
    if any(c < 0 for c in tail):
        return math.nan
    if any(c == 0 for c in tail):
        return 0.0
    logs = np.log(np.array(tail))
    x = np.arange(len(tail), dtype=float)
    slope = np.polyfit(x, logs, 1)[0]
    return float(math.exp(slope))


@dataclass
class TailReport:
    """Partial contributions of a series level by level with a convergence verdict."""

    per_level: list[tuple[int, float, float]]
    verdict: str
    tail_ratio: float
    flags: dict[int, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def cumulative(self) -> float:
        return self.per_level[-1][2] if self.per_level else 0.0

    @property
    def contributions(self) -> list[float]:
        return [c for _, c, _ in self.per_level]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "tail_ratio": self.tail_ratio,
            "cumulative": self.cumulative,
            "per_level": [{"level": n, "contribution": c, "cumulative": s} for n, c, s in self.per_level],
            "flags": {str(k): v for k, v in sorted(self.flags.items())},
            **self.extra,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["level", "contribution", "cumulative", "flag"])
        for n, c, s in self.per_level:
            writer.writerow([n, fmt_float(c), fmt_float(s), self.flags.get(n, "")])
        return buf.getvalue()


def geometric_report(contributions: list[tuple[int, float]], flags: dict[int, str] | None = None,
                     threshold: float = 0.9, extra: dict | None = None) -> TailReport:
    """Running sums plus the geometric-tail verdict (converging iff ratio <= threshold and no flags)."""
    flags = dict(flags or {})
    rows = []
    running = []
    for n, c in contributions:
        running.append(c)
        rows.append((n, c, math.fsum(running)))
    ratio = fit_ratio([c for _, c in contributions])
    if math.isnan(ratio):
        verdict = INCONCLUSIVE
    elif ratio <= threshold and not flags:
        verdict = CONVERGING
    elif ratio >= 0.99:
        verdict = DIVERGING
    else:
        verdict = INCONCLUSIVE
    return TailReport(rows, verdict, ratio, flags, dict(extra or {}))


def fmt_float(x) -> str:
    """Fixed 17-significant-digit text for floats (exact text for Fractions and mpf)."""
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    if isinstance(x, mpmath.mpf):
        return mpmath.nstr(x, 17, min_fixed=-5, max_fixed=17)
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating, mpmath.mpf)):
        text = fmt_float(obj)
        return json.dumps(text) if text in ("NaN", "Infinity", "-Infinity") else text
    if isinstance(obj, Fraction):
        return json.dumps(fmt_float(obj))
    if isinstance(obj, complex):
        return _encode([obj.real, obj.imag], indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[" + pad + ("," + pad).join(_encode(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 1) -> str:
    """JSON text with floats at 17 significant digits and insertion-ordered keys."""
    return _encode(obj, indent, 0) + "\n"
