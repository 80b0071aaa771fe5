"""Dyadic geometry of the normalized circle and exact measure trees.

The circle is parametrized by theta in [0, 1), so every dyadic arc has an
exact rational length 2**-n.  Measures assign exact ``Fraction`` masses to
arcs through a pure splitting rule that is memoized per arc.  Closed sets are
described by the dyadic arcs whose *closed* interval meets them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

MAX_DEPTH = 64
ZERO = Fraction(0)
ONE = Fraction(1)
# relative depth used when no closed-form moments are known for an arc
MODEL_BUDGET = 16


class BeyondDepthError(LookupError):
    """Raised when a measure is queried below its authoritative depth with no extension rule."""


class DepthLimitError(RuntimeError):
    """Raised when a refinement would go deeper than the configured maximum depth."""

    def __init__(self, arc: "DyadicArc", message: str = ""):
        self.arc = arc
        super().__init__(message or f"refinement exceeds maximum depth at arc {arc}")


def as_fraction(value) -> Fraction:
    """Parse ints, Fractions, 'p/q' strings and [p, q] pairs into a Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return Fraction(int(value[0]), int(value[1]))
    if isinstance(value, float):
        return Fraction(value)
    return Fraction(str(value).strip())


@dataclass(frozen=True, order=True, slots=True)
class DyadicArc:
    """The half-open arc [k 2^-n, (k+1) 2^-n) of the normalized circle."""

    level: int
    index: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"negative level {self.level}")
        if not 0 <= self.index < (1 << self.level):
            raise ValueError(f"index {self.index} out of range for level {self.level}")

    @classmethod
    def root(cls) -> "DyadicArc":
        return cls(0, 0)

    @classmethod
    def containing(cls, theta, level: int) -> "DyadicArc":
        """The level-``level`` arc whose half-open interval contains theta (mod 1)."""
        t = as_fraction(theta) % 1
        return cls(level, math.floor(t * (1 << level)))

    @property
    def key(self) -> tuple[int, int]:
        return (self.level, self.index)

    @property
    def length(self) -> Fraction:
        return Fraction(1, 1 << self.level)

    @property
    def left(self) -> Fraction:
        return Fraction(self.index, 1 << self.level)

    @property
    def right(self) -> Fraction:
        return Fraction(self.index + 1, 1 << self.level)

    @property
    def center(self) -> Fraction:
        return Fraction(2 * self.index + 1, 1 << (self.level + 1))

    def children(self) -> tuple["DyadicArc", "DyadicArc"]:
        return (DyadicArc(self.level + 1, 2 * self.index), DyadicArc(self.level + 1, 2 * self.index + 1))

    def parent(self) -> "DyadicArc":
        if self.level == 0:
            raise ValueError("the root arc has no parent")
        return DyadicArc(self.level - 1, self.index >> 1)

    def ancestors(self) -> list["DyadicArc"]:
        """All strict ancestors, nearest first, ending with the root."""
        return [DyadicArc(m, self.index >> (self.level - m)) for m in range(self.level - 1, -1, -1)]

    def neighbor(self, step: int = 1) -> "DyadicArc":
        """The arc ``step`` positions away at the same level, wrapping around the circle."""
        return DyadicArc(self.level, (self.index + step) % (1 << self.level))

    def contains(self, theta) -> bool:
        """Half-open membership used for mass."""
        t = as_fraction(theta)
        return self.left <= t < self.right

    def closed_contains(self, theta) -> bool:
        """Closed-interval membership used for intersections with closed sets."""
        t = as_fraction(theta)
        return self.left <= t <= self.right

    def contains_arc(self, other: "DyadicArc") -> bool:
        return other.level >= self.level and (other.index >> (other.level - self.level)) == self.index

    def descendants(self, depth: int) -> Iterator["DyadicArc"]:
        """Descendants exactly ``depth`` levels below, in left-to-right order."""
        shift = depth
        base = self.index << shift
        for j in range(1 << shift):
            yield DyadicArc(self.level + depth, base + j)

    def __str__(self) -> str:
        return f"({self.level},{self.index})"


def common_ancestor(a: DyadicArc, b: DyadicArc) -> DyadicArc:
    """Smallest dyadic arc containing both arcs."""
    la, lb = a.level, b.level
    ia, ib = a.index, b.index
    if la > lb:
        ia >>= la - lb
        la = lb
    elif lb > la:
        ib >>= lb - la
    level = min(la, lb)
    while ia != ib:
        ia >>= 1
        ib >>= 1
        level -= 1
    return DyadicArc(level, ia)


def arc_distance(level: int, index: int, lo: float, width: float = 0.0) -> float:
    """Arc-length distance from arc (level, index) to the angular window [lo, lo + width] (turns)."""
    size = 1.0 / (1 << level)
    if size >= 1.0 or width >= 1.0:
        return 0.0
    a = index * size
    if (lo - a) % 1.0 <= size or (a - lo) % 1.0 <= width:
        return 0.0
    return min((lo - a - size) % 1.0, (a - lo - width) % 1.0)


@dataclass(frozen=True, slots=True)
class LeafModel:
    """Local description of a measure restricted to one arc, in turns.

    ``kind`` is "empty", "uniform" (constant density on the arc) or "moments"
    (a barycenter with variance).  Exact models have ``uncertainty == 0`` and an
    exact variance; inexact ones carry an upper bound on the variance and a
    bound on the barycenter error.
    """

    kind: str
    mass: float
    position: float
    variance: float
    spread: float
    uncertainty: float = 0.0

    @property
    def exact(self) -> bool:
        return self.uncertainty == 0.0


EMPTY_MODEL = LeafModel("empty", 0.0, 0.0, 0.0, 0.0)


def _uniform_model(level: int, index: int, mass: float) -> LeafModel:
    size = 1.0 / (1 << level)
    return LeafModel("uniform", mass, (index + 0.5) * size, size * size / 12.0, size / 2.0)


def _combine_models(models: Sequence[LeafModel], size: float, left: float) -> LeafModel:
    parts = [m for m in models if m.kind != "empty"]
    if not parts:
        return EMPTY_MODEL
    total = math.fsum(m.mass for m in parts)
    mean = math.fsum(m.mass * m.position for m in parts) / total
    second = math.fsum(m.mass * (m.variance + (m.position - mean) ** 2) for m in parts) / total
    unc = math.fsum(m.mass * m.uncertainty for m in parts) / total
    spread = max(abs(m.position - mean) + m.spread + m.uncertainty for m in parts)
    spread = min(spread, max(mean - left, left + size - mean))
    return LeafModel("moments", total, mean, max(second, 0.0), spread, unc)


class DyadicMeasure:
    """A finite measure on dyadic arcs defined by a pure, memoized splitting rule.

    Subclasses implement ``_split(level, index, mass)`` returning the exact
    masses of the two children of a parent with the given mass.  Masses are
    exact ``Fraction`` values; float views are only produced for quadrature.
    """

    label = "measure"

    def __init__(self, total_mass=ONE, *, declared_depth: int = 0, max_depth: int = MAX_DEPTH):
        self.total_mass = as_fraction(total_mass)
        if self.total_mass < 0:
            raise ValueError("total mass must be nonnegative")
        self.declared_depth = declared_depth
        self.max_depth = max_depth
        self._memo: dict[tuple[int, int], Fraction] = {(0, 0): self.total_mass}
        self._models: dict[tuple[int, int], LeafModel] = {}

    # rule hooks -------------------------------------------------------------
    def _split(self, level: int, index: int, mass: Fraction) -> tuple[Fraction, Fraction]:
        raise NotImplementedError

    def _closed_model(self, level: int, index: int, mass: Fraction) -> LeafModel | None:
        """Closed-form local model of the arc, or None when only recursion can tell."""
        return None

    def construction(self) -> dict | None:
        """Parameters that rebuild this measure exactly, when it comes from a known rule."""
        return None

    # mass access ------------------------------------------------------------
    def mass_at(self, level: int, index: int) -> Fraction:
        m = self._memo.get((level, index))
        if m is not None:
            return m
        if level > self.max_depth:
            raise DepthLimitError(DyadicArc(level, index), f"level {level} exceeds the depth cap {self.max_depth}")
        if not 0 <= index < (1 << level):
            raise ValueError(f"index {index} out of range for level {level}")
        parent = self.mass_at(level - 1, index >> 1)
        if parent == 0:
            left = right = ZERO
        else:
            left, right = self._split(level - 1, index >> 1, parent)
        base = index & ~1
        self._memo[(level, base)] = left
        self._memo[(level, base + 1)] = right
        return right if index & 1 else left

    def mass(self, arc: DyadicArc) -> Fraction:
        """Exact mass of ``arc``."""
        return self.mass_at(arc.level, arc.index)

    def density(self, arc: DyadicArc) -> Fraction:
        return self.mass_at(arc.level, arc.index) * (1 << arc.level)

    def level_masses(self, level: int) -> list[Fraction]:
        """Dense list of the masses of all 2**level arcs."""
        out = [ZERO] * (1 << level)
        for k, m in self.nonzero(level):
            out[k] = m
        return out

    def nonzero(self, level: int) -> list[tuple[int, Fraction]]:
        """Indices and masses of the positive-mass arcs at ``level``, left to right."""
        current = [(0, self.total_mass)] if self.total_mass > 0 else []
        for n in range(level):
            nxt = []
            for k, _ in current:
                for c in (2 * k, 2 * k + 1):
                    m = self.mass_at(n + 1, c)
                    if m:
                        nxt.append((c, m))
            current = nxt
        return current

    def iter_level(self, level: int) -> Iterator[tuple[int, Fraction]]:
        """Positive-mass arcs at ``level`` without filling the memo (for large sweeps)."""
        stack = [(0, 0, self.total_mass)] if self.total_mass > 0 else []
        while stack:
            n, k, m = stack.pop()
            if n == level:
                yield k, m
                continue
            cached = self._memo.get((n + 1, 2 * k))
            if cached is not None:
                left, right = cached, self._memo[(n + 1, 2 * k + 1)]
            else:
                if n + 1 > self.max_depth:
                    raise DepthLimitError(DyadicArc(n + 1, 2 * k))
                left, right = self._split(n, k, m)
            if right:
                stack.append((n + 1, 2 * k + 1, right))
            if left:
                stack.append((n + 1, 2 * k, left))

    def scaled(self, factor) -> "ScaledMeasure":
        return ScaledMeasure(self, factor)

    # local models -----------------------------------------------------------
    def leaf_model(self, level: int, index: int) -> LeafModel:
        """Barycenter, variance and spread of the measure restricted to an arc."""
        key = (level, index)
        model = self._models.get(key)
        if model is None:
            model = self._model(level, index, MODEL_BUDGET)
            if len(self._models) > 4_000_000:
                self._models.clear()
            self._models[key] = model
        return model

    def _model(self, level: int, index: int, budget: int, mass: Fraction | None = None) -> LeafModel:
        if mass is None:
            mass = self.mass_at(level, index)
        if mass == 0:
            return EMPTY_MODEL
        closed = self._closed_model(level, index, mass)
        if closed is not None:
            return closed
        size = 1.0 / (1 << level)
        if budget == 0 or level >= self.max_depth:
            # only the mass is known: barycenter somewhere in the arc
            return LeafModel("moments", float(mass), (index + 0.5) * size, size * size / 4.0, size / 2.0, size / 2.0)
        kids = [self._model(level + 1, 2 * index + j, budget - 1) for j in (0, 1)]
        return _combine_models(kids, size, index * size)


class LebesgueMeasure(DyadicMeasure):
    """Normalized arc-length measure (times ``total_mass``)."""

    label = "lebesgue"

    def _split(self, level, index, mass):
        return mass / 2, mass / 2

    def _closed_model(self, level, index, mass):
        return _uniform_model(level, index, float(mass))

    def construction(self):
        return {"kind": "lebesgue", "total_mass": str(self.total_mass)}


class AtomicMeasure(DyadicMeasure):
    """Finitely many point masses at rational positions in [0, 1)."""

    label = "atomic"

    def __init__(self, atoms: Iterable[tuple], *, max_depth: int = MAX_DEPTH):
        pts: dict[Fraction, Fraction] = {}
        for pos, m in atoms:
            p = as_fraction(pos) % 1
            w = as_fraction(m)
            if w < 0:
                raise ValueError("atom masses must be nonnegative")
            pts[p] = pts.get(p, ZERO) + w
        self.atoms = sorted((p, w) for p, w in pts.items() if w > 0)
        super().__init__(sum((w for _, w in self.atoms), ZERO), max_depth=max_depth)

    def _inside(self, level, index):
        lo = Fraction(index, 1 << level)
        hi = Fraction(index + 1, 1 << level)
        return [(p, w) for p, w in self.atoms if lo <= p < hi]

    def _split(self, level, index, mass):
        mid = Fraction(2 * index + 1, 1 << (level + 1))
        inside = self._inside(level, index)
        left = sum((w for p, w in inside if p < mid), ZERO)
        return left, mass - left

    def _closed_model(self, level, index, mass):
        inside = self._inside(level, index)
        size = 1.0 / (1 << level)
        parts = [LeafModel("moments", float(w), float(p), 0.0, 0.0) for p, w in inside]
        if len(parts) == 1:
            return parts[0]
        return _combine_models(parts, size, index * size)

    def construction(self):
        return {"kind": "atomic", "atoms": [[str(p), str(w)] for p, w in self.atoms]}


def dirac(theta=0, mass=1) -> AtomicMeasure:
    """Point mass at theta."""
    return AtomicMeasure([(theta, mass)])


class ScaledMeasure(DyadicMeasure):
    """The measure c * base."""

    label = "scaled"

    def __init__(self, base: DyadicMeasure, factor):
        self.base = base
        self.factor = as_fraction(factor)
        if self.factor < 0:
            raise ValueError("scale factor must be nonnegative")
        super().__init__(base.total_mass * self.factor, declared_depth=base.declared_depth, max_depth=base.max_depth)

    def mass_at(self, level, index):
        return self.factor * self.base.mass_at(level, index)

    def _split(self, level, index, mass):
        return (self.mass_at(level + 1, 2 * index), self.mass_at(level + 1, 2 * index + 1))

    def leaf_model(self, level, index):
        m = self.base.leaf_model(level, index)
        if m.kind == "empty" or self.factor == 0:
            return EMPTY_MODEL
        return LeafModel(m.kind, m.mass * float(self.factor), m.position, m.variance, m.spread, m.uncertainty)

    def construction(self):
        inner = self.base.construction()
        if inner is None:
            return None
        return {"kind": "scaled", "factor": str(self.factor), "base": inner}


class TableMeasure(DyadicMeasure):
    """A measure given by an explicit table of arc masses down to ``depth``.

    Missing ancestors are filled in by summing children; entries that are
    present are taken verbatim, so an inconsistent table is reported by
    ``check_consistency`` instead of being silently repaired.  Beyond
    ``depth`` the mass either spreads uniformly on each leaf
    (``extension="uniform"``) or queries fail.
    """

    label = "table"

    def __init__(self, table: Mapping[tuple[int, int], object], depth: int, *, extension: str | None = "uniform"):
        if extension not in (None, "uniform"):
            raise ValueError(f"unknown extension {extension!r}")
        entries = {(int(n), int(k)): as_fraction(m) for (n, k), m in table.items()}
        for (n, k), m in entries.items():
            if n > depth or not 0 <= k < (1 << n):
                raise ValueError(f"table entry ({n},{k}) outside depth {depth}")
            if m < 0:
                raise ValueError(f"negative mass at ({n},{k})")
        for n in range(depth - 1, -1, -1):
            for k in range(1 << n):
                if (n, k) not in entries:
                    entries[(n, k)] = entries.get((n + 1, 2 * k), ZERO) + entries.get((n + 1, 2 * k + 1), ZERO)
        self.depth = depth
        self.extension = extension
        self._table = entries
        super().__init__(entries[(0, 0)], declared_depth=depth)
        self._memo.update(entries)

    @classmethod
    def from_leaves(cls, masses: Sequence, depth: int, **kwargs) -> "TableMeasure":
        if len(masses) != (1 << depth):
            raise ValueError(f"expected {1 << depth} leaf masses, got {len(masses)}")
        return cls({(depth, k): m for k, m in enumerate(masses)}, depth, **kwargs)

    @classmethod
    def from_measure(cls, measure: DyadicMeasure, depth: int, **kwargs) -> "TableMeasure":
        """Snapshot every arc mass of ``measure`` down to ``depth``."""
        table = {}
        for n in range(depth + 1):
            for k, m in enumerate(measure.level_masses(n)):
                table[(n, k)] = m
        return cls(table, depth, **kwargs)

    def mass_at(self, level, index):
        if level <= self.depth:
            if not 0 <= index < (1 << level):
                raise ValueError(f"index {index} out of range for level {level}")
            return self._table.get((level, index), ZERO)
        if self.extension is None:
            raise BeyondDepthError(f"arc ({level},{index}) is beyond the authoritative depth {self.depth}")
        return super().mass_at(level, index)

    def _split(self, level, index, mass):
        if level >= self.depth and self.extension == "uniform":
            return mass / 2, mass / 2
        raise BeyondDepthError(f"arc ({level},{index}) is beyond the authoritative depth {self.depth}")

    def _closed_model(self, level, index, mass):
        if level >= self.depth and self.extension == "uniform":
            return _uniform_model(level, index, float(mass))
        return None


# consistency and atomization --------------------------------------------------

@dataclass
class ConsistencyReport:
    """Arcs whose children fail to add up to the parent, as (arc, parent mass, children sum)."""

    depth: int
    violations: list[tuple[DyadicArc, Fraction, Fraction]] = field(default_factory=list)
    checked: int = 0

    @property
    def passed(self) -> bool:
        return not self.violations


def check_consistency(measure: DyadicMeasure, depth: int) -> ConsistencyReport:
    """Exact check that every parent's mass equals the sum of its children's, down to ``depth``."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    report = ConsistencyReport(depth)
    if isinstance(measure, TableMeasure):
        # tables may hide mass under zero parents, so look at every arc
        levels = [range(1 << n) for n in range(depth)]
    else:
        levels = None
    if measure.mass_at(0, 0) != measure.total_mass:
        report.violations.append((DyadicArc.root(), measure.total_mass, measure.mass_at(0, 0)))
    for n in range(depth):
        indices = levels[n] if levels is not None else [k for k, _ in measure.nonzero(n)]
        for k in indices:
            parent = measure.mass_at(n, k)
            kids = measure.mass_at(n + 1, 2 * k) + measure.mass_at(n + 1, 2 * k + 1)
            report.checked += 1
            if kids != parent:
                report.violations.append((DyadicArc(n, k), parent, kids))
    return report


@dataclass
class AtomList:
    """Point masses (position in turns, exact mass) approximating a measure."""

    atoms: list[tuple[object, Fraction]]

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    @property
    def total(self) -> Fraction:
        return sum((m for _, m in self.atoms), ZERO)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Positions and masses as float arrays."""
        pos = np.array([float(p) for p, _ in self.atoms], dtype=float)
        mass = np.array([float(m) for _, m in self.atoms], dtype=float)
        return pos, mass


def to_atoms(measure: DyadicMeasure, depth: int, placement: str = "center") -> AtomList:
    """One atom per positive-mass arc at ``depth``.

    ``placement="center"`` puts it at the arc midpoint (exact rational);
    ``"barycenter"`` uses the arc's local barycenter (float), which is the
    second-order accurate choice for quadrature.
    """
    if placement not in ("center", "barycenter"):
        raise ValueError(f"unknown placement {placement!r}")
    atoms = []
    denom = 1 << (depth + 1)
    for k, m in sorted(measure.iter_level(depth)):
        if placement == "center":
            atoms.append((Fraction(2 * k + 1, denom), m))
        else:
            atoms.append((measure._model(depth, k, MODEL_BUDGET, m).position, m))
    return AtomList(atoms)


def adaptive_leaves(measure: DyadicMeasure | None, z: complex, ratio, max_depth: int | None = None) -> list[DyadicArc]:
    """Partition of the circle adapted to the interior point z.

    Every arc J satisfies |J| <= ratio * max(1 - |z|, dist(J, z/|z|)); arcs are
    returned left to right.  ``measure`` only supplies the default depth cap.
    """
    r = float(ratio)
    if not 0 < r < 1:
        raise ValueError("ratio must lie in (0, 1)")
    z = complex(z)
    if abs(z) >= 1:
        raise ValueError("z must lie in the open unit disc")
    if max_depth is None:
        max_depth = measure.max_depth if measure is not None else MAX_DEPTH
    return region_leaves(measure, *_window(z), 1.0 - abs(z), r, max_depth=max_depth, prune=False)


def _window(z: complex) -> tuple[float, float]:
    if z == 0:
        return 0.0, 1.0
    return (math.atan2(z.imag, z.real) / (2 * math.pi)) % 1.0, 0.0


def region_leaves(measure: DyadicMeasure | None, lo: float, width: float, eps: float, ratio: float, *,
                  max_depth: int = MAX_DEPTH, prune: bool = True) -> list[DyadicArc]:
    """Partition adapted to the angular window [lo, lo + width] at boundary distance eps.

    With ``prune`` the measure is consulted: zero-mass arcs and arcs whose mass
    has an exactly integrable local model (uniform density or a single atom)
    are kept whole.
    """
    out: list[DyadicArc] = []
    stack = [(0, 0)]
    while stack:
        n, k = stack.pop()
        if prune:
            model = measure.leaf_model(n, k)
            if model.kind == "empty" or model.kind == "uniform" or (model.exact and model.spread == 0.0):
                if model.kind != "empty":
                    out.append(DyadicArc(n, k))
                continue
        size = 1.0 / (1 << n)
        d = arc_distance(n, k, lo, width)
        if size <= ratio * max(eps, d):
            out.append(DyadicArc(n, k))
            continue
        if n >= max_depth:
            raise DepthLimitError(DyadicArc(n, k))
        stack.append((n + 1, 2 * k + 1))
        stack.append((n + 1, 2 * k))
    return out


# closed sets ------------------------------------------------------------------

class DyadicClosedSet:
    """A closed subset E of the circle seen through the dyadic arcs meeting it.

    Survivors at level n are the indices k whose closed arc
    [k 2^-n, (k+1) 2^-n] meets E; the test does not wrap around theta = 1.
    ``depth`` is None for sets that can be refined to any level.
    """

    depth: int | None = None

    def meets(self, level: int, index: int) -> bool:
        raise NotImplementedError

    def survivors(self, level: int) -> list[int]:
        if self.depth is not None and level > self.depth:
            raise BeyondDepthError(f"closed set only defined to depth {self.depth}")
        cache = self.__dict__.setdefault("_survivor_cache", {0: [0] if self.meets(0, 0) else []})
        top = max(n for n in cache if n <= level)
        for n in range(top, level):
            cache[n + 1] = [c for k in cache[n] for c in (2 * k, 2 * k + 1) if self.meets(n + 1, c)]
        return cache[level]

    def isolated_point(self, level: int, index: int) -> Fraction | None:
        """The single point of E in the closed arc, if that is known to be the case."""
        return None

    def representatives(self, level: int) -> tuple[list[Fraction], bool]:
        """Points used to approximate E at ``level`` and whether they are known to lie in E."""
        return [Fraction(k, 1 << level) for k in self.survivors(level)], False

    def check(self, depth: int) -> None:
        """Raise ValueError unless survivors are nonempty and nested down to ``depth``."""
        prev = None
        for n in range(depth + 1):
            cur = self.survivors(n)
            if not cur:
                raise ValueError(f"closed set is empty at generation {n}")
            if prev is not None and any((k >> 1) not in prev for k in cur):
                raise ValueError(f"survivors at generation {n} are not nested")
            prev = set(cur)

    def describe(self) -> dict | None:
        return None

    def dump(self, depth: int) -> dict:
        """JSON-ready survivors down to ``depth``, plus an exact description when available."""
        out = {"depth": depth, "survivors": [list(self.survivors(n)) for n in range(depth + 1)]}
        desc = self.describe()
        if desc is not None:
            out["description"] = desc
        return out


class PointSet(DyadicClosedSet):
    """A finite set of rational points."""

    def __init__(self, points: Iterable):
        pts = sorted({as_fraction(p) % 1 for p in points})
        if not pts:
            raise ValueError("a closed set must be nonempty")
        self.points = pts

    def meets(self, level, index):
        lo = Fraction(index, 1 << level)
        hi = Fraction(index + 1, 1 << level)
        return any(lo <= p <= hi for p in self.points)

    def survivors(self, level):
        scale = 1 << level
        out = set()
        for p in self.points:
            x = p * scale
            k = math.floor(x)
            out.add(k)
            if x == k and k > 0:
                out.add(k - 1)
        return sorted(out)

    def isolated_point(self, level, index):
        lo = Fraction(index, 1 << level)
        hi = Fraction(index + 1, 1 << level)
        inside = [p for p in self.points if lo <= p <= hi]
        return inside[0] if len(inside) == 1 else None

    def representatives(self, level):
        return list(self.points), True

    def describe(self):
        return {"kind": "points", "points": [str(p) for p in self.points]}


class DigitCantorSet(DyadicClosedSet):
    """Points whose base-2**bits expansion uses only the allowed digits.

    With bits=2 and digits (0, 3) this is the middle-half Cantor set; it has
    measure zero whenever fewer than 2**bits digits are allowed.
    """

    def __init__(self, bits: int = 2, digits: Sequence[int] = (0, 3)):
        self.bits = bits
        self.base = 1 << bits
        self.digits = tuple(sorted(set(int(d) for d in digits)))
        if not self.digits or self.digits[0] < 0 or self.digits[-1] >= self.base:
            raise ValueError("digits must lie in [0, base)")
        self._emin = Fraction(self.digits[0], self.base - 1)
        self._emax = Fraction(self.digits[-1], self.base - 1)

    def min_above(self, a: Fraction, _guard: int = 0) -> Fraction | None:
        """Smallest point of E that is >= a."""
        if a <= self._emin:
            return self._emin
        if a >= self._emax:
            return self._emax if a == self._emax else None
        if _guard > 400:
            raise RecursionError("non-dyadic query point")
        for d in self.digits:
            lo = (d + self._emin) / self.base
            hi = (d + self._emax) / self.base
            if a <= lo:
                return lo
            if a <= hi:
                r = self.min_above(a * self.base - d, _guard + 1)
                if r is not None:
                    return (d + r) / self.base
        return None

    def max_below(self, b: Fraction, _guard: int = 0) -> Fraction | None:
        """Largest point of E that is <= b."""
        if b >= self._emax:
            return self._emax
        if b <= self._emin:
            return self._emin if b == self._emin else None
        if _guard > 400:
            raise RecursionError("non-dyadic query point")
        for d in reversed(self.digits):
            lo = (d + self._emin) / self.base
            hi = (d + self._emax) / self.base
            if b >= hi:
                return hi
            if b >= lo:
                r = self.max_below(b * self.base - d, _guard + 1)
                if r is not None:
                    return (d + r) / self.base
        return None

    def meets(self, level, index):
        p = self.min_above(Fraction(index, 1 << level))
        return p is not None and p <= Fraction(index + 1, 1 << level)

    def isolated_point(self, level, index):
        lo = Fraction(index, 1 << level)
        hi = Fraction(index + 1, 1 << level)
        p = self.min_above(lo)
        if p is None or p > hi:
            return None
        return p if self.max_below(hi) == p else None

    def representatives(self, level):
        pts = sorted({self.min_above(Fraction(k, 1 << level)) for k in self.survivors(level)})
        return pts, True

    def describe(self):
        return {"kind": "digits", "bits": self.bits, "digits": list(self.digits)}


class ExplicitClosedSet(DyadicClosedSet):
    """Survivor lists given generation by generation down to a finite depth."""

    def __init__(self, survivors: Sequence[Iterable[int]]):
        self._levels = [sorted(set(int(k) for k in row)) for row in survivors]
        if not self._levels:
            raise ValueError("need at least generation 0")
        self.depth = len(self._levels) - 1
        self._sets = [set(row) for row in self._levels]
        for n, row in enumerate(self._levels):
            if any(not 0 <= k < (1 << n) for k in row):
                raise ValueError(f"survivor index out of range at generation {n}")

    def meets(self, level, index):
        if level > self.depth:
            raise BeyondDepthError(f"closed set only defined to depth {self.depth}")
        return index in self._sets[level]

    def survivors(self, level):
        if level > self.depth:
            raise BeyondDepthError(f"closed set only defined to depth {self.depth}")
        return self._levels[level]


def cantor_pattern(depth: int, bits: int = 2, digits: Sequence[int] = (0, 3)) -> ExplicitClosedSet:
    """Digit-Cantor survivors to ``depth``, read off half-open arcs.

    Level n keeps the arcs whose leading base-2**bits digits (and the leading
    bits of a partial digit) can start an allowed digit.  Unlike the exact
    closed-arc survivors of ``DigitCantorSet``, every parent at a complete-digit
    level has a child that is dropped, so coverings terminate.
    """
    allowed = set(digits)
    rows = []
    for n in range(depth + 1):
        full, part = divmod(n, bits)
        keep = []
        for k in range(1 << n):
            ok = True
            for j in range(full):
                d = (k >> (n - bits * (j + 1))) & ((1 << bits) - 1)
                if d not in allowed:
                    ok = False
                    break
            if ok and part:
                lead = k & ((1 << part) - 1)
                ok = any(d >> (bits - part) == lead for d in allowed)
            if ok:
                keep.append(k)
        rows.append(keep)
    return ExplicitClosedSet(rows)


def half_density_set(depth: int) -> ExplicitClosedSet:
    """Survivors k < 2**(n-1) at each level: half of all arcs, a non Beurling-Carleson pattern."""
    return ExplicitClosedSet([[0]] + [range(1 << (n - 1)) for n in range(1, depth + 1)])


def closed_set_from_dump(data: Mapping) -> DyadicClosedSet:
    """Rebuild a closed set from its JSON form (exact description first, survivors otherwise)."""
    desc = data.get("description")
    if desc:
        if desc.get("kind") == "points":
            return PointSet(desc["points"])
        if desc.get("kind") == "digits":
            return DigitCantorSet(int(desc["bits"]), desc["digits"])
        raise ValueError(f"unknown closed-set description {desc.get('kind')!r}")
    if "survivors" not in data:
        raise ValueError("closed-set dump needs 'survivors'")
    return ExplicitClosedSet(data["survivors"])


# measure dumps ----------------------------------------------------------------

def _pair(q: Fraction) -> list[int]:
    return [q.numerator, q.denominator]


def dump_measure(measure: DyadicMeasure, depth: int) -> dict:
    """JSON-ready table of all arcs at ``depth`` (plus the construction when known)."""
    masses = measure.level_masses(depth)
    out = {
        "total_mass": _pair(measure.total_mass),
        "depth": depth,
        "arcs": [{"level": depth, "index": k, "mass": _pair(m)} for k, m in enumerate(masses)],
    }
    cons = measure.construction()
    if cons is not None:
        out["construction"] = cons
    return out


def measure_from_dump(data: Mapping, extension: str | None = "uniform") -> TableMeasure:
    """Table measure from a dump; ignores any construction record."""
    depth = int(data["depth"])
    table = {}
    for entry in data["arcs"]:
        table[(int(entry["level"]), int(entry["index"]))] = as_fraction(entry["mass"])
    measure = TableMeasure(table, depth, extension=extension)
    total = as_fraction(data["total_mass"])
    if measure.total_mass != total:
        raise ValueError(f"arc masses sum to {measure.total_mass}, header says {total}")
    return measure
