"""Explicit singular measures: the modulus-of-continuity construction, the
measure forced onto a closed set, the right-favoring Riesz-type product
measure, and the Clark-type function built from a probability measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import mpmath
import numpy as np

from .dyadic import (MAX_DEPTH, ZERO, AtomicMeasure, DigitCantorSet, DyadicArc, DyadicClosedSet,
                     DyadicMeasure, LeafModel, LebesgueMeasure, ScaledMeasure, TableMeasure,
                     as_fraction, closed_set_from_dump, measure_from_dump)
from .majorant import Majorant


class IneligibleMajorant(ValueError):
    """w(t)/t stays bounded, so no generation level can be chosen."""


# generation levels --------------------------------------------------------------

def _slope_at(w: Majorant, n: int):
    """w(2^-n) * 2^n in high precision."""
    with mpmath.workdps(60):
        return w.mp(Fraction(1, 1 << n), 60) * mpmath.mpf(2) ** n


def check_eligible(w: Majorant, grid: int = MAX_DEPTH) -> None:
    """Grid evidence that w(t)/t grows without bound as t -> 0."""
    with mpmath.workdps(60):
        far = _slope_at(w, grid)
        mid = _slope_at(w, grid // 2)
        if not far > mid * (1 + mpmath.mpf(10) ** -6):
            raise IneligibleMajorant(f"majorant ineligible: w(t)/t looks bounded ({mpmath.nstr(mid, 8)} -> {mpmath.nstr(far, 8)})")


def choose_generation(w: Majorant, l: int, previous: int | None = None, max_depth: int = MAX_DEPTH) -> int:
    """Smallest n > previous with w(2^-n) 2^n >= 6 * 2^l.

    ``previous`` is the level chosen for l - 1 (defaults to -1, so n = 0 is
    allowed).  Raises ValueError when the level would exceed ``max_depth``.
    """
    if l < 0:
        raise ValueError("l must be nonnegative")
    check_eligible(w)
    target = 6 * (1 << l)
    n = 0 if previous is None else previous + 1
    while n <= max_depth:
        if _slope_at(w, n) >= target:
            return n
        n += 1
    raise ValueError(f"generation {l} needs a level beyond the depth cap {max_depth}")


def generation_levels(w: Majorant, count: int, max_depth: int = MAX_DEPTH) -> list[int]:
    """Strictly increasing levels n_1 < ... < n_count."""
    levels = []
    for l in range(1, count + 1):
        levels.append(choose_generation(w, l, levels[-1] if levels else None, max_depth))
    return levels


# modulus-of-continuity measure -------------------------------------------------

class NomocMeasure(DyadicMeasure):
    """Probability measure whose generation-l arcs have density exactly 2^l.

    Between generation levels mass is halved evenly; at a generation level
    n_l every parent sends all of its mass to its even (left) child, so the
    surviving arcs are every other arc of level n_l.  Generation levels past
    n_L are chosen lazily until the depth cap.
    """

    label = "nomoc"

    def __init__(self, w: Majorant, L: int, max_depth: int = MAX_DEPTH):
        if L < 1:
            raise ValueError("L must be at least 1")
        self.w = w
        self.L = L
        gens = generation_levels(w, L, max_depth)
        super().__init__(declared_depth=gens[-1], max_depth=max_depth)
        self._gens = gens
        self._exhausted = False
        self._gen_set = set(gens)
        self._moments: list[tuple[float, float]] | None = None

    @property
    def generations(self) -> list[int]:
        """The levels n_1 < ... < n_L of the declared construction."""
        return self._gens[: self.L]

    def _extend(self, level: int) -> None:
        while not self._exhausted and self._gens[-1] < level:
            try:
                n = choose_generation(self.w, len(self._gens) + 1, self._gens[-1], self.max_depth)
            except ValueError:
                self._exhausted = True
                break
            self._gens.append(n)
            self._gen_set.add(n)

    def is_generation_level(self, level: int) -> bool:
        self._extend(level)
        return level in self._gen_set

    def _split(self, level, index, mass):
        if self.is_generation_level(level + 1):
            return mass, ZERO
        half = mass / 2
        return half, half

    def _moment_table(self) -> list[tuple[float, float]]:
        # normalized mean offset a(n) and second moment b(n) about the left end,
        # identical for every positive-mass arc of a level
        if self._moments is None:
            self._extend(self.max_depth)
            a, b = 0.5, 1.0 / 3.0
            table = [(a, b)] * (self.max_depth + 1)
            for n in range(self.max_depth - 1, -1, -1):
                if (n + 1) in self._gen_set:
                    a, b = a / 2, b / 4
                else:
                    a, b = a / 2 + 0.25, b / 4 + a / 4 + 0.125
                table[n] = (a, b)
            self._moments = table
        return self._moments

    def _closed_model(self, level, index, mass):
        if level > self.max_depth:
            return None
        a, b = self._moment_table()[level]
        size = 1.0 / (1 << level)
        var = max(b - a * a, 0.0) * size * size
        return LeafModel("moments", float(mass), (index + a) * size, var, max(a, 1 - a) * size)

    def support_set(self) -> "NomocSupport":
        return NomocSupport(self)

    def construction(self):
        return {"kind": "nomoc", "majorant": self.w.spec, "levels": self.L}


class NomocSupport(DyadicClosedSet):
    """Support of a modulus-of-continuity measure under the closed-arc convention.

    Left endpoints of positive-mass arcs belong to the support while right
    endpoints do not, so a zero-mass arc meets it exactly when its right
    neighbour carries mass.
    """

    def __init__(self, measure: NomocMeasure):
        self.measure = measure

    def meets(self, level, index):
        m = self.measure
        if m.mass_at(level, index) > 0:
            return True
        return index + 1 < (1 << level) and m.mass_at(level, index + 1) > 0


def build_nomoc(w: Majorant, L: int, max_depth: int = MAX_DEPTH) -> NomocMeasure:
    """Measure with modulus of continuity w whose singular inner function lies in W^1."""
    return NomocMeasure(w, L, max_depth)


@dataclass
class MocReport:
    """Outcome of the modulus-of-continuity check.

    ``worst_ratio`` is the largest mu(I)/w(|I|) over every dyadic arc checked;
    ``worst_ratio_regime`` restricts to levels >= ``regime_level``, where the
    sharper bound mu(I) <= w(|I|)/3 is checked.
    """

    passed: bool
    worst_ratio: float
    worst_arc: DyadicArc | None
    worst_ratio_regime: float
    worst_arc_regime: DyadicArc | None
    regime_level: int | None
    arcs_checked: int
    violations: list[tuple[str, DyadicArc]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_ratio": self.worst_ratio,
            "worst_arc": str(self.worst_arc),
            "worst_ratio_regime": self.worst_ratio_regime,
            "worst_arc_regime": str(self.worst_arc_regime),
            "regime_level": self.regime_level,
            "arcs_checked": self.arcs_checked,
            "violations": [[kind, str(arc)] for kind, arc in self.violations[:50]],
        }


def verify_moc_bound(measure: DyadicMeasure, w: Majorant, depth: int) -> MocReport:
    """Exact check of mu(I) <= w(|I|) on all dyadic arcs down to ``depth``.

    From the first level n_0 with w(2^-n) 2^n >= 6 on, it also checks the
    sharper dyadic bound mu(I) <= w(|I|)/3 and the tripled-arc bound: any three
    consecutive arcs of a level carry at most w of their common length, which
    controls arbitrary arcs.  w is replaced by a certified rational lower bound.
    """
    try:
        n0 = choose_generation(w, 0)
    except ValueError:
        n0 = None
    violations = []
    worst = (Fraction(-1), None)
    worst_reg = (Fraction(-1), None)
    checked = 0
    for n in range(depth + 1):
        lower = w.lower_bound(Fraction(1, 1 << n))
        masses = measure.level_masses(n)
        checked += len(masses)
        if lower <= 0:
            raise ValueError("w must be positive on (0, 1]")
        for k, m in enumerate(masses):
            ratio = m / lower
            if ratio > worst[0]:
                worst = (ratio, DyadicArc(n, k))
            if m > lower:
                violations.append(("mass exceeds w(|I|)", DyadicArc(n, k)))
            if n0 is not None and n >= n0:
                if ratio > worst_reg[0]:
                    worst_reg = (ratio, DyadicArc(n, k))
                if 3 * m > lower:
                    violations.append(("mass exceeds w(|I|)/3", DyadicArc(n, k)))
        if n0 is not None and n >= n0 and len(masses) >= 3:
            size = len(masses)
            for k in range(size):
                if masses[k] + masses[(k + 1) % size] + masses[(k + 2) % size] > lower:
                    violations.append(("three consecutive arcs exceed w(|I|)", DyadicArc(n, k)))
    reg_ratio = float(worst_reg[0]) if worst_reg[1] is not None else math.nan
    return MocReport(not violations, float(worst[0]), worst[1], reg_ratio, worst_reg[1], n0, checked, violations)


# measure supported on a closed set ----------------------------------------------

class NosuppMeasure(DyadicMeasure):
    """Probability measure carried by the closed set E.

    A parent splits its mass evenly when both closed children meet E and gives
    everything to the child that meets E otherwise.  Sets known only to a
    finite depth are extended by spreading mass uniformly on surviving leaves.
    """

    label = "nosupp"

    def __init__(self, E: DyadicClosedSet, depth: int, max_depth: int = MAX_DEPTH):
        self.E = E
        super().__init__(declared_depth=depth, max_depth=max_depth)

    def _split(self, level, index, mass):
        E = self.E
        if E.depth is not None and level >= E.depth:
            return mass / 2, mass / 2
        left = E.meets(level + 1, 2 * index)
        right = E.meets(level + 1, 2 * index + 1)
        if left and right:
            return mass / 2, mass / 2
        if left:
            return mass, ZERO
        if right:
            return ZERO, mass
        raise ValueError(f"arc ({level},{index}) carries mass but neither child meets E")

    def _closed_model(self, level, index, mass):
        E = self.E
        size = 1.0 / (1 << level)
        if E.depth is not None and level >= E.depth:
            return LeafModel("uniform", float(mass), (index + 0.5) * size, size * size / 12.0, size / 2.0)
        p = E.isolated_point(level, index)
        if p is not None:
            return LeafModel("moments", float(mass), float(p), 0.0, 0.0)
        return None

    def construction(self):
        desc = self.E.describe()
        if desc is None:
            return None
        return {"kind": "nosupp", "set": desc, "depth": self.declared_depth}


def _split_point(E: DyadicClosedSet, arc: DyadicArc, depth: int) -> list[DyadicArc] | None:
    """Maximal subarcs of ``arc`` with a child missing E, mapped to the child that meets E.

    Returns None when the search runs past ``depth``.
    """
    out = []
    stack = [arc]
    while stack:
        J = stack.pop()
        if J.level + 1 > depth:
            return None
        left, right = J.children()
        lm = E.meets(left.level, left.index)
        rm = E.meets(right.level, right.index)
        if lm and rm:
            stack.append(right)
            stack.append(left)
        elif lm:
            out.append(left)
        elif rm:
            out.append(right)
    return out


def build_nosupp(E: DyadicClosedSet, depth: int, max_depth: int = MAX_DEPTH) -> tuple[NosuppMeasure, list[list[DyadicArc]]]:
    """The measure carried by E together with its coverings G_0 = {root}, G_1, G_2, ...

    Each G_{k+1} arc sits inside a G_k arc with twice its density, and the G_{k+1}
    arcs inside a G_k arc I cover exactly half of I.  Only coverings that are
    complete within ``depth`` are returned.
    """
    E.check(min(depth, E.depth) if E.depth is not None else depth)
    top = min(depth, E.depth) if E.depth is not None else depth
    if top >= 1 and len(E.survivors(top)) == (1 << top):
        raise ValueError(f"generation {top} of E covers the whole circle; E must have measure zero")
    measure = NosuppMeasure(E, depth, max_depth)
    coverings = [[DyadicArc.root()]]
    while True:
        nxt = []
        for I in coverings[-1]:
            part = _split_point(E, I, top)
            if part is None:
                return measure, coverings
            nxt.extend(part)
        if not nxt:
            return measure, coverings
        nxt.sort()
        coverings.append(nxt)


@dataclass
class CoveringReport:
    """Exact checks of a measure carried by a closed set against its coverings."""

    support_ok: bool
    density_ok: bool
    packing_ok: bool
    checked_arcs: int
    generations: int
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.support_ok and self.density_ok and self.packing_ok

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "support_bound": self.support_ok,
            "covering_density": self.density_ok,
            "packing": self.packing_ok,
            "checked_arcs": self.checked_arcs,
            "generations": self.generations,
            "failures": [[reason, str(arc)] for reason, arc in self.failures[:20]],
        }


def _survivors_to(E: DyadicClosedSet, n: int) -> list[int]:
    """Survivors at level n, with every child surviving past the set's known depth."""
    if E.depth is None or n <= E.depth:
        return E.survivors(n)
    shift = n - E.depth
    return [(k << shift) + j for k in E.survivors(E.depth) for j in range(1 << shift)]


def check_nosupp(measure: DyadicMeasure, E: DyadicClosedSet, coverings: list[list[DyadicArc]],
                 depth: int) -> CoveringReport:
    """mu(I) >= |I| on every arc meeting E down to ``depth``, density >= 2^k on the
    k-th covering, and the arcs of covering k+1 inside an arc I of covering k
    have total length |I|/2.  All in exact arithmetic."""
    support, density, packing = [], [], []
    checked = 0
    for n in range(depth + 1):
        length = Fraction(1, 1 << n)
        for k in _survivors_to(E, n):
            checked += 1
            if measure.mass_at(n, k) < length:
                support.append(("support bound", DyadicArc(n, k)))
    for g, arcs in enumerate(coverings):
        density += [("covering density", I) for I in arcs if measure.density(I) < (1 << g)]
    for g in range(len(coverings) - 1):
        for I in coverings[g]:
            inside = sum((J.length for J in coverings[g + 1] if I.contains_arc(J)), ZERO)
            if inside != I.length / 2:
                packing.append(("packing", I))
    failures = support + density + packing
    return CoveringReport(not support, not density, not packing, checked, len(coverings), failures)


# right-favoring product measure ------------------------------------------------

class RieszMeasure(DyadicMeasure):
    """Each arc sends (1 - eta)/2 of its mass to the left child and (1 + eta)/2 to the right."""

    label = "riesz"

    def __init__(self, eta, max_depth: int = MAX_DEPTH):
        self.eta = as_fraction(eta)
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        super().__init__(max_depth=max_depth)
        self._p = float((1 + self.eta) / 2)

    def _split(self, level, index, mass):
        return mass * (1 - self.eta) / 2, mass * (1 + self.eta) / 2

    def mass_formula(self, arc: DyadicArc) -> Fraction:
        """(1+eta)^r (1-eta)^(n-r) / 2^n with r the number of right steps."""
        r = bin(arc.index).count("1")
        return (1 + self.eta) ** r * (1 - self.eta) ** (arc.level - r) / (1 << arc.level)

    def heaviest_descendant(self, arc: DyadicArc, extra: int) -> tuple[DyadicArc, Fraction]:
        """The all-right descendant ``extra`` levels down, which carries the largest mass."""
        J = DyadicArc(arc.level + extra, ((arc.index + 1) << extra) - 1)
        return J, self.mass_at(arc.level, arc.index) * ((1 + self.eta) / 2) ** extra

    def _closed_model(self, level, index, mass):
        p = self._p
        size = 1.0 / (1 << level)
        return LeafModel("moments", float(mass), (index + p) * size, p * (1 - p) / 3.0 * size * size, p * size)

    def construction(self):
        return {"kind": "riesz", "eta": str(self.eta)}


def build_riesz(eta, max_depth: int = MAX_DEPTH) -> RieszMeasure:
    return RieszMeasure(eta, max_depth)


def _dominates(mass: Fraction, level: int, exponent: Fraction) -> bool:
    """Exact test of mass >= (2^-level)^exponent."""
    p, q = exponent.numerator, exponent.denominator
    # mass^q >= 2^(-level p)
    return mass ** q * (Fraction(2) ** (level * p)) >= 1


def riesz_witness(measure: RieszMeasure, arc: DyadicArc, delta, max_extra: int) -> tuple[int, DyadicArc] | None:
    """Smallest relative depth m <= max_extra with a J inside ``arc`` at that depth and nu(J) >= |J|^(1-delta).

    Returns (m, J) or None when no such J exists within ``max_extra`` levels.
    """
    d = as_fraction(delta)
    if not 0 < d < 1:
        raise ValueError("delta must lie in (0, 1)")
    for m in range(max_extra + 1):
        J, mass = measure.heaviest_descendant(arc, m)
        if _dominates(mass, J.level, 1 - d):
            return m, J
    return None


def riesz_depth_bound(measure: RieszMeasure, arc: DyadicArc, delta) -> int:
    """Smallest n with (1+eta)^n / 2^(n delta) >= |I|^(1-delta) / nu(I), in floating point."""
    d = float(as_fraction(delta))
    eta = float(measure.eta)
    need = (1 - d) * -arc.level * math.log(2) - math.log(float(measure.mass(arc)))
    rate = math.log(1 + eta) - d * math.log(2)
    if rate <= 0:
        raise ValueError("needs 2^delta < 1 + eta")
    return max(0, math.ceil(need / rate - 1e-12))


# Clark function -----------------------------------------------------------------

class ClarkFunction:
    """b = (H - 1)/(H + 1) and f = log(e/(1 - b)) for the Herglotz transform H of nu.

    Scalars go through the certified evaluator; arrays use the shared-leaf
    bulk evaluator.
    """

    def __init__(self, nu: DyadicMeasure, ratio: float = 1 / 16):
        if nu.total_mass != 1:
            raise ValueError("the Clark construction needs a probability measure")
        self.nu = nu
        self.ratio = ratio

    def herglotz(self, z):
        from .transform import evaluate, herglotz
        if np.ndim(z) == 0:
            return herglotz(self.nu, complex(z)).value
        return evaluate(self.nu, np.asarray(z, dtype=complex), ("H",), ratio=self.ratio)["H"]

    def b(self, z):
        H = self.herglotz(z)
        return (H - 1) / (H + 1)

    def f(self, z):
        H = self.herglotz(z)
        # 1 - b = 2/(H + 1), so f = 1 + log((H + 1)/2)
        return 1 + np.log((H + 1) / 2)

    __call__ = f


def clark_function(nu: DyadicMeasure) -> ClarkFunction:
    return ClarkFunction(nu)


# rebuilding measures from dumps --------------------------------------------------

def measure_from_construction(cons: Mapping) -> DyadicMeasure:
    """Rebuild a measure from the construction record written into dumps."""
    kind = cons.get("kind")
    if kind == "nomoc":
        return build_nomoc(Majorant.parse(cons["majorant"]), int(cons["levels"]))
    if kind == "riesz":
        return build_riesz(cons["eta"])
    if kind == "nosupp":
        E = closed_set_from_dump({"description": cons["set"]})
        return build_nosupp(E, int(cons["depth"]))[0]
    if kind == "lebesgue":
        return LebesgueMeasure(as_fraction(cons.get("total_mass", 1)))
    if kind == "atomic":
        return AtomicMeasure([(p, m) for p, m in cons["atoms"]])
    if kind == "scaled":
        return ScaledMeasure(measure_from_construction(cons["base"]), cons["factor"])
    raise ValueError(f"unknown construction kind {kind!r}")


def load_measure(data: Mapping) -> DyadicMeasure:
    """Measure from a dump: rebuilt exactly when a construction record is present
    and agrees with the table, otherwise the table with uniform extension."""
    table = measure_from_dump(data)
    cons = data.get("construction")
    if not cons:
        return table
    measure = measure_from_construction(cons)
    depth = table.depth
    if measure.level_masses(depth) != table.level_masses(depth):
        raise ValueError("construction record disagrees with the tabulated masses")
    return measure
