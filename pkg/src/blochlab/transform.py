"""Poisson and Herglotz transforms, their derivative, singular inner functions
and Bloch-type sampling, evaluated with certified error bounds.

Each leaf of a dyadic partition contributes through its local model: a
uniform leaf is integrated in closed form, and any other leaf through its
barycenter with a second-moment correction.  The remainder is bounded by the
third angular derivative of the kernel over the leaf times the leaf's
spread and variance.  Inexact models (barycenter known only approximately)
fall back to a first-order bound.  Angles are in radians inside the kernel
algebra and in turns everywhere else.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .dyadic import DepthLimitError, DyadicArc, DyadicMeasure, adaptive_leaves, region_leaves

TWO_PI = 2.0 * math.pi
EPS = np.finfo(float).eps
BOUNDARY_FLOOR = 2.0 ** -40
KINDS = ("P", "H", "dH")
_KIND_ALIASES = {"P": "P", "H": "H", "dH": "dH", "H'": "dH", "Hprime": "dH", "S": "S", "S'": "S'"}


class UncertifiedError(RuntimeError):
    """The requested accuracy could not be certified; ``arc`` is the limiting leaf when known."""

    def __init__(self, message: str, arc: DyadicArc | None = None):
        self.arc = arc
        super().__init__(message if arc is None else f"{message} (limiting leaf {arc})")


@dataclass(frozen=True)
class DiscPoint:
    """A point of the open unit disc kept away from the boundary by ``floor``."""

    z: complex

    def __post_init__(self):
        z = complex(self.z)
        object.__setattr__(self, "z", z)
        if not abs(z) < 1:
            raise ValueError(f"{z} is not inside the unit disc")

    @classmethod
    def checked(cls, z, floor: float = BOUNDARY_FLOOR) -> "DiscPoint":
        p = cls(z)
        if 1 - abs(p.z) < floor:
            raise ValueError(f"1 - |z| = {1 - abs(p.z):.3g} is below the floor {floor:.3g}")
        return p


@dataclass(frozen=True)
class TransformValue:
    """A transform value with a certified absolute error bound."""

    value: complex
    error_bound: float
    leaves: int = 0


def normalize_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind]
    except KeyError:
        raise ValueError(f"unknown transform kind {kind!r}") from None


# kernel algebra -------------------------------------------------------------------
#
# A kernel is a polynomial in u = 1/(zeta - z) with z-dependent coefficients,
# stored as {power: coefficient}.  With theta = zeta d/dzeta one has
# theta(u^k) = -k u^k - k z u^(k+1), and d/dphi = i * theta.

def _base_series(kind: str, z):
    if kind == "H":
        return {0: np.ones_like(z), 1: 2 * z}
    if kind == "dH":
        return {1: 2 * np.ones_like(z), 2: 2 * z}
    raise ValueError(kind)


def _dphi(series: dict, z) -> dict:
    out: dict = {}
    for k, c in series.items():
        if k == 0:
            continue
        out[k] = out.get(k, 0) + (-k * 1j) * c
        out[k + 1] = out.get(k + 1, 0) + (-k * 1j) * z * c
    return out


def _series_chain(kind: str, z, order: int = 3) -> list[dict]:
    chain = [_base_series(kind, z)]
    for _ in range(order):
        chain.append(_dphi(chain[-1], z))
    return chain


def _series_value(series: dict, u):
    total = 0
    for k, c in series.items():
        total = total + (c if k == 0 else c * u ** k)
    return total


def _series_bound(series: dict, dinv):
    total = 0
    for k, c in series.items():
        total = total + np.abs(c) * (1.0 if k == 0 else dinv ** k)
    return total


# leaf contributions ----------------------------------------------------------------

@dataclass
class _LeafArrays:
    arcs: list[DyadicArc]
    code: np.ndarray   # 1 uniform, 2 moments
    mass: np.ndarray
    pos: np.ndarray
    var: np.ndarray
    spread: np.ndarray
    unc: np.ndarray
    left: np.ndarray
    size: np.ndarray

    def __len__(self):
        return len(self.arcs)


def _leaf_arrays(measure: DyadicMeasure, arcs: Sequence[DyadicArc]) -> _LeafArrays:
    keep, code, mass, pos, var, spread, unc = [], [], [], [], [], [], []
    for a in arcs:
        m = measure.leaf_model(a.level, a.index)
        if m.kind == "empty":
            continue
        keep.append(a)
        code.append(1 if m.kind == "uniform" else 2)
        mass.append(m.mass)
        pos.append(m.position)
        var.append(m.variance)
        spread.append(m.spread)
        unc.append(m.uncertainty)
    size = np.array([1.0 / (1 << a.level) for a in keep])
    left = np.array([a.index for a in keep], dtype=float) * size
    return _LeafArrays(keep, np.array(code, dtype=np.int8), np.array(mass), np.array(pos), np.array(var),
                       np.array(spread), np.array(unc), left, size)


def _arc_distance_from(z, left, size):
    """Euclidean distance from z (P,1) to each closed arc (L,)."""
    phi = (np.angle(z) / TWO_PI) % 1.0
    r = np.abs(z)
    inside = ((phi - left) % 1.0) <= size
    ea = np.exp(1j * TWO_PI * left)
    eb = np.exp(1j * TWO_PI * (left + size))
    d_out = np.minimum(np.abs(ea - z), np.abs(eb - z))
    return np.where(inside, 1.0 - r, d_out)


def _contributions(leaves: _LeafArrays, z: np.ndarray, kinds: Iterable[str], errors: bool = True):
    """Per-(point, leaf) contributions and error bounds for the requested kernels.

    ``z`` has shape (P, 1).  Returns {kind: (values (P, L), errors (P, L))}.
    """
    kinds = set(kinds)
    need = set()
    if kinds & {"P", "H"}:
        need.add("H")
    if "dH" in kinds:
        need.add("dH")
    L = len(leaves)
    out = {}
    if L == 0:
        zero = np.zeros((z.shape[0], 0))
        return {k: (zero.astype(complex), zero) for k in kinds}
    mass = leaves.mass
    uni = leaves.code == 1
    mom = ~uni
    d = _arc_distance_from(z, leaves.left, leaves.size)
    dinv = 1.0 / d
    zeta = np.exp(1j * TWO_PI * leaves.pos)
    u = 1.0 / (zeta - z)
    V = leaves.var * TWO_PI ** 2
    s = leaves.spread * TWO_PI
    beta = leaves.unc * TWO_PI
    exact = beta == 0.0

    if uni.any():
        a = np.exp(1j * TWO_PI * leaves.left)
        half = np.pi * leaves.size
        chord = 2j * np.sin(half) * np.exp(1j * (TWO_PI * leaves.left + half))  # b - a
        q = chord / (a - z)
        sweep = np.arctan2(q.imag, 1.0 + q.real) % TWO_PI
        logmod = 0.5 * np.log1p(2 * q.real + np.abs(q) ** 2)
        full = leaves.size >= 1.0
        sweep = np.where(full, TWO_PI, sweep)
        logmod = np.where(full, 0.0, logmod)
        dens = mass / leaves.size

    for kind in need:
        chain = _series_chain(kind, z)
        K0 = _series_value(chain[0], u)
        D2 = _series_value(chain[2], u)
        vals = mass * np.where(exact, K0 + 0.5 * V * D2, K0)
        if errors:
            B0 = _series_bound(chain[0], dinv)
            B1 = _series_bound(chain[1], dinv)
            B2 = _series_bound(chain[2], dinv)
            B3 = _series_bound(chain[3], dinv)
            err_exact = mass * (B3 * s * V / 6.0)
            err_loose = mass * (B1 * beta + 0.5 * B2 * (V + beta ** 2))
            errs = np.where(exact, err_exact, err_loose)
            # rounding in each term, relative to the size of the kernel on the leaf
            errs = errs + 64 * EPS * mass * (B0 + 0.5 * V * B2)
        else:
            errs = None
        if uni.any():
            if kind == "H":
                exact_int = dens * ((sweep / np.pi - leaves.size) - 1j * logmod / np.pi)
            else:
                exact_int = dens * (chord / ((a - z) * (a + chord - z))) / (1j * np.pi)
            vals = np.where(uni, exact_int, vals)
            if errors:
                B0 = _series_bound(chain[0], dinv)
                errs = np.where(uni, 64 * EPS * mass * B0, errs)
        out[kind] = (vals, errs)
    result = {}
    for kind in kinds:
        src = out["H" if kind == "P" else kind]
        if kind == "P":
            result[kind] = (src[0].real.astype(complex), src[1])
        else:
            result[kind] = src
    return result


# certified pointwise evaluation --------------------------------------------------

def _certified(measure: DyadicMeasure, z, kinds: Sequence[str], tol: float, rtol: float,
               ratio: float, max_leaves: int, max_depth: int | None) -> dict[str, TransformValue]:
    point = DiscPoint.checked(z)
    zc = np.array([[point.z]])
    try:
        arcs = adaptive_leaves(measure, point.z, ratio, max_depth)
    except DepthLimitError as exc:
        raise UncertifiedError("adaptive partition exceeds the depth cap", exc.arc) from exc
    cap = measure.max_depth if max_depth is None else max_depth
    leaves = _leaf_arrays(measure, arcs)
    contrib = _contributions(leaves, zc, kinds)
    vals = {k: contrib[k][0][0] for k in kinds}
    errs = {k: contrib[k][1][0] for k in kinds}
    current = list(leaves.arcs)
    for _ in range(200):
        totals = {k: complex(np.sum(vals[k])) for k in kinds}
        bounds = {k: float(np.sum(errs[k])) * (1 + 1e-12) for k in kinds}
        targets = {k: max(tol, rtol * abs(totals[k])) for k in kinds}
        if all(bounds[k] <= targets[k] for k in kinds):
            return {k: TransformValue(totals[k], bounds[k], len(current)) for k in kinds}
        score = np.zeros(len(current))
        for k in kinds:
            score = np.maximum(score, errs[k] / targets[k])
        n_active = max(int(np.count_nonzero(score)), 1)
        split = score > 0.5 / n_active
        split[int(np.argmax(score))] = True
        parents = [a for a, sp in zip(current, split) if sp]
        kept = [a for a, sp in zip(current, split) if not sp]
        children = []
        for a in parents:
            model = measure.leaf_model(a.level, a.index)
            if model.kind == "uniform" or (model.exact and model.spread == 0.0):
                raise UncertifiedError("rounding floor reached before the requested accuracy", a)
            if a.level >= cap:
                raise UncertifiedError("refinement exceeds the depth cap", a)
            children.extend(a.children())
        if len(kept) + len(children) > max_leaves:
            worst = current[int(np.argmax(score))]
            raise UncertifiedError(f"more than {max_leaves} leaves needed", worst)
        new = _leaf_arrays(measure, children)
        add = _contributions(new, zc, kinds)
        keep_mask = ~split
        for k in kinds:
            vals[k] = np.concatenate([vals[k][keep_mask], add[k][0][0]])
            errs[k] = np.concatenate([errs[k][keep_mask], add[k][1][0]])
        current = kept + new.arcs
    raise UncertifiedError("refinement did not converge")


def transforms(measure: DyadicMeasure, z, kinds: Sequence[str] = KINDS, *, tol: float = 1e-8, rtol: float = 1e-12,
               ratio: float = 0.25, max_leaves: int = 2_000_000, max_depth: int | None = None) -> dict[str, TransformValue]:
    """Several kernels at one point from a shared refinement.

    Each error bound is at most max(tol, rtol * |value|).
    """
    kinds = [normalize_kind(k) for k in kinds]
    return _certified(measure, z, kinds, tol, rtol, float(ratio), max_leaves, max_depth)


def poisson(measure: DyadicMeasure, z, **kw) -> TransformValue:
    """Integral of (1 - |z|^2)/|zeta - z|^2 against the measure."""
    tv = transforms(measure, z, ("P",), **kw)["P"]
    return TransformValue(complex(tv.value.real, 0.0), tv.error_bound, tv.leaves)


def herglotz(measure: DyadicMeasure, z, **kw) -> TransformValue:
    """Integral of (zeta + z)/(zeta - z) against the measure."""
    return transforms(measure, z, ("H",), **kw)["H"]


def herglotz_prime(measure: DyadicMeasure, z, **kw) -> TransformValue:
    """Integral of 2 zeta/(zeta - z)^2 against the measure (the derivative of the Herglotz transform)."""
    return transforms(measure, z, ("dH",), **kw)["dH"]


def singular_inner(measure: DyadicMeasure, z, **kw) -> tuple[TransformValue, TransformValue]:
    """S = exp(-H) and S' = -H' S, with the error bounds pushed through exp."""
    t = transforms(measure, z, ("H", "dH"), **kw)
    H, dH = t["H"], t["dH"]
    S = np.exp(-H.value)
    grow = math.expm1(H.error_bound)
    eS = abs(S) * grow
    Sp = -dH.value * S
    eSp = abs(dH.value) * eS + abs(S) * (1 + grow) * dH.error_bound
    return TransformValue(complex(S), eS, H.leaves), TransformValue(complex(Sp), eSp, dH.leaves)


# bulk evaluation on many points -------------------------------------------------

def evaluate_block(measure: DyadicMeasure, zs: np.ndarray, kinds: Sequence[str], ratio: float = 1 / 16,
                   errors: bool = False, max_depth: int | None = None) -> dict[str, np.ndarray]:
    """Kernels at a batch of nearby points using one partition adapted to the batch.

    Values are not certified; with ``errors`` the per-point bounds of the same
    leaf models are returned under "<kind>_err".
    """
    zs = np.asarray(zs, dtype=complex).ravel()
    kinds = [normalize_kind(k) for k in kinds]
    if np.any(np.abs(zs) >= 1):
        raise ValueError("all points must lie inside the unit disc")
    eps = float(np.min(1 - np.abs(zs)))
    phi = (np.angle(zs) / TWO_PI) % 1.0
    lo, width = _angular_window(phi, zs)
    cap = measure.max_depth if max_depth is None else max_depth
    arcs = region_leaves(measure, lo, width, eps, ratio, max_depth=cap)
    leaves = _leaf_arrays(measure, arcs)
    contrib = _contributions(leaves, zs[:, None], kinds, errors=errors)
    out = {}
    for k in kinds:
        vals, errs = contrib[k]
        out[k] = vals.sum(axis=1) if k != "P" else vals.sum(axis=1).real
        if errors:
            out[k + "_err"] = errs.sum(axis=1)
    return out


def _angular_window(phi: np.ndarray, zs: np.ndarray) -> tuple[float, float]:
    """Smallest window [lo, lo + width] (turns) containing all angles."""
    if np.any(np.abs(zs) == 0) or len(phi) == 0:
        return 0.0, 1.0
    s = np.sort(phi)
    gaps = np.diff(np.concatenate([s, [s[0] + 1.0]]))
    j = int(np.argmax(gaps))
    lo = s[(j + 1) % len(s)]
    width = 1.0 - gaps[j]
    return float(lo), float(width)


def evaluate(measure: DyadicMeasure, zs, kinds: Sequence[str] = ("H",), ratio: float = 1 / 16,
             errors: bool = False, block: int = 256) -> dict[str, np.ndarray]:
    """Kernels at many points, grouping points into angular blocks that share a partition."""
    zs = np.asarray(zs, dtype=complex)
    shape = zs.shape
    flat = zs.ravel()
    kinds = [normalize_kind(k) for k in kinds]
    out = {k: np.zeros(flat.shape, dtype=float if k == "P" else complex) for k in kinds}
    if errors:
        for k in kinds:
            out[k + "_err"] = np.zeros(flat.shape)
    for idx in _blocks(flat, block):
        res = evaluate_block(measure, flat[idx], kinds, ratio, errors)
        for key, val in res.items():
            out[key][idx] = val
    return {k: v.reshape(shape) for k, v in out.items()}


def _blocks(zs: np.ndarray, block: int) -> list[np.ndarray]:
    """Index groups of points whose angular spread is comparable to their boundary distance."""
    phi = (np.angle(zs) / TWO_PI) % 1.0
    eps = 1 - np.abs(zs)
    order = np.lexsort((eps, phi))
    groups = []
    start = 0
    n = len(order)
    while start < n:
        lo = phi[order[start]]
        emin = eps[order[start]]
        end = start + 1
        while end < n and end - start < block:
            j = order[end]
            e = min(emin, eps[j])
            if phi[j] - lo > 4 * max(e, 1.0 / 4096):
                break
            emin = e
            end += 1
        groups.append(order[start:end])
        start = end
    return groups


def atomized(positions: np.ndarray, masses: np.ndarray, zs, kind: str, chunk: int = 1 << 16) -> np.ndarray:
    """Direct sum of a kernel over point masses (positions in turns)."""
    kind = normalize_kind(kind)
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    zeta = np.exp(1j * TWO_PI * np.asarray(positions, dtype=float))
    masses = np.asarray(masses, dtype=float)
    out = np.zeros(zs.shape, dtype=complex)
    for i, z in enumerate(zs):
        total = 0.0 + 0.0j
        for s in range(0, len(zeta), chunk):
            w = zeta[s:s + chunk] - z
            m = masses[s:s + chunk]
            if kind == "P":
                total += np.sum(m * (1 - abs(z) ** 2) / (w.real ** 2 + w.imag ** 2))
            elif kind == "H":
                total += np.sum(m * (zeta[s:s + chunk] + z) / w)
            else:
                total += np.sum(m * 2 * zeta[s:s + chunk] / (w * w))
        out[i] = total
    return out


# Bloch sampling and growth sets ----------------------------------------------------

@dataclass
class BlochSample:
    """Sampled (1 - |z|)|f'(z)|: the max, where it occurs, and the stencil disagreement."""

    value: float
    argmax: complex | None
    values: np.ndarray
    skipped: int
    stencil_gap: float

    def __float__(self):
        return float(self.value)


def bloch_seminorm_sample(f: Callable, points, h_factor: float = 1e-3) -> BlochSample:
    """max over the points of (1 - |z|)|f'(z)| with f' from central differences.

    The step is h = (1 - |z|) * h_factor along both the real and the imaginary
    direction; the two estimates are averaged and their gap is reported.  A
    lower bound for the Bloch seminorm, never the supremum itself.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    h = (1 - np.abs(pts)) * h_factor
    stencil = np.stack([pts + h, pts - h, pts + 1j * h, pts - 1j * h])
    ok = np.all(np.abs(stencil) < 1, axis=0) & (np.abs(pts) < 1)
    skipped = int(np.count_nonzero(~ok))
    if skipped:
        warnings.warn(f"{skipped} points skipped: finite-difference stencil leaves the disc")
    pts, h, stencil = pts[ok], h[ok], stencil[:, ok]
    if len(pts) == 0:
        return BlochSample(0.0, None, np.zeros(0), skipped, 0.0)
    vals = np.asarray(f(stencil.ravel()), dtype=complex).reshape(stencil.shape)
    d1 = (vals[0] - vals[1]) / (2 * h)
    d2 = (vals[2] - vals[3]) / (2j * h)
    weight = 1 - np.abs(pts)
    samples = weight * np.abs(0.5 * (d1 + d2))
    j = int(np.argmax(samples))
    gap = float(np.max(weight * np.abs(d1 - d2)))
    return BlochSample(float(samples[j]), complex(pts[j]), samples, skipped, gap)


@dataclass
class GrowthScan:
    """Grid points in the growth set and how close they come to each boundary window."""

    points: np.ndarray
    window_distance: np.ndarray
    windows: int

    @property
    def worst_window(self) -> float:
        return float(np.max(self.window_distance))


def growth_scan(f: Callable, delta: float, grid, windows: int = 64) -> GrowthScan:
    """Grid points with |f(z)| >= delta * log(1/(1 - |z|)).

    For each of ``windows`` equal boundary windows the distance from the
    window's midpoint on the circle to the nearest captured point is recorded
    (infinite when nothing was captured).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    grid = np.atleast_1d(np.asarray(grid, dtype=complex)).ravel()
    vals = np.asarray(f(grid), dtype=complex)
    captured = grid[np.abs(vals) >= delta * np.log(1.0 / (1.0 - np.abs(grid)))]
    mids = np.exp(1j * TWO_PI * (np.arange(windows) + 0.5) / windows)
    if len(captured) == 0:
        dist = np.full(windows, np.inf)
    else:
        dist = np.array([np.min(np.abs(captured - m)) for m in mids])
    return GrowthScan(captured, dist, windows)


def polar_grid(n_angles: int, radii: Sequence[float], offset: float = 0.5) -> np.ndarray:
    """Points r e^{2 pi i (j + offset)/n_angles} for every radius."""
    ang = np.exp(1j * TWO_PI * (np.arange(n_angles) + offset) / n_angles)
    return (np.asarray(radii, dtype=float)[:, None] * ang[None, :]).ravel()
