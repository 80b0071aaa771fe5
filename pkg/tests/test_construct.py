import cmath
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blochlab.construct import (IneligibleMajorant, build_nomoc, build_nosupp, build_riesz, check_nosupp,
                                choose_generation, clark_function, generation_levels, load_measure,
                                riesz_depth_bound, riesz_witness, verify_moc_bound)
from blochlab.dyadic import (DyadicArc, ExplicitClosedSet, LebesgueMeasure, PointSet, cantor_pattern, dirac,
                             dump_measure)
from blochlab.majorant import Majorant

HALF = Fraction(1, 2)
SQRT = Majorant.power(HALF)


def test_choose_generation_examples():
    assert choose_generation(SQRT, 1) == 8
    assert choose_generation(SQRT, 2, previous=8) == 10
    assert choose_generation(SQRT, 3, previous=10) == 12
    assert generation_levels(SQRT, 3) == [8, 10, 12]


def test_generation_levels_strictly_increase():
    levels = generation_levels(Majorant.loginv(1), 4)
    assert all(a < b for a, b in zip(levels, levels[1:]))


def test_linear_majorant_is_ineligible():
    with pytest.raises(IneligibleMajorant):
        choose_generation(Majorant.power(1), 1)


def test_nomoc_generation_masses():
    mu = build_nomoc(SQRT, 1)
    masses = mu.level_masses(8)
    assert sum(masses) == 1
    assert masses == [Fraction(1, 128) if k % 2 == 0 else 0 for k in range(256)]
    mu2 = build_nomoc(SQRT, 2)
    for j in range(0, 256, 2):
        inside = [mu2.mass_at(10, 4 * j + i) for i in range(4)]
        assert inside == [Fraction(1, 256), 0, Fraction(1, 256), 0]
        assert sum(inside) == mu2.mass_at(8, j)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_nomoc_total_mass(L):
    mu = build_nomoc(SQRT, L)
    n = mu.generations[-1]
    assert sum(mu.level_masses(n)) == 1
    # generation-l arcs carry 2^l |I|
    assert max(mu.level_masses(n)) == Fraction(1 << L, 1 << n)


def test_moc_bound_examples():
    assert verify_moc_bound(LebesgueMeasure(), SQRT, 1).passed
    rep = verify_moc_bound(dirac(), SQRT, 4)
    assert not rep.passed
    assert rep.worst_ratio == 4.0


def test_moc_bound_nomoc_two_generations():
    rep = verify_moc_bound(build_nomoc(SQRT, 2), SQRT, 10)
    assert rep.passed
    assert rep.worst_ratio_regime <= 1 / 3


def test_nosupp_two_points_by_hand():
    E = PointSet([0, Fraction(1, 3)])
    mu, G = build_nosupp(E, 12)
    assert G[1] == [DyadicArc(1, 0)]
    assert mu.mass(DyadicArc(1, 0)) == 1
    assert G[2] == [DyadicArc(3, 0), DyadicArc(3, 2)]
    assert all(mu.mass(a) == HALF and mu.density(a) == 4 for a in G[2])


def test_nosupp_single_point_is_an_atom():
    mu, _ = build_nosupp(PointSet([Fraction(1, 3)]), 20)
    for n in range(21):
        nz = mu.nonzero(n)
        assert len(nz) == 1 and nz[0][1] == 1
        assert DyadicArc(n, nz[0][0]).closed_contains(Fraction(1, 3))


def test_nosupp_full_generation_rejected():
    with pytest.raises(ValueError):
        build_nosupp(ExplicitClosedSet([[0], [0, 1]]), 1)


@pytest.mark.parametrize("E", [PointSet([Fraction(1, 3)]), PointSet([0, Fraction(1, 3)]), cantor_pattern(10),
                               PointSet([Fraction(1, 4)])], ids=["point", "two", "cantor", "dyadic"])
def test_nosupp_exact_checks(E):
    mu, G = build_nosupp(E, 12)
    assert check_nosupp(mu, E, G, 12).passed


def test_nosupp_zero_off_the_set():
    E = PointSet([0, Fraction(1, 3), Fraction(1, 5), Fraction(5, 7)])
    mu, _ = build_nosupp(E, 12)
    for n in range(9):
        for k in range(1 << n):
            if not E.meets(n, k):
                assert mu.mass_at(n, k) == 0


def test_riesz_examples():
    nu = build_riesz(HALF)
    assert nu.level_masses(1) == [Fraction(1, 4), Fraction(3, 4)]
    right = DyadicArc(4, 15)
    assert nu.mass(right) == Fraction(81, 256)
    assert nu.density(right) == Fraction(81, 16)
    # |J|^(1/2) = 1/4 for a level-4 arc
    assert nu.mass(right) >= Fraction(1, 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 14).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, (1 << n) - 1))))
def test_riesz_density_from_step_counts(arc):
    n, k = arc
    r = bin(k).count("1")
    expected = Fraction(3, 2) ** r * Fraction(1, 2) ** (n - r)
    assert build_riesz(HALF).density(DyadicArc(n, k)) == expected


def test_riesz_rejects_eta():
    with pytest.raises(ValueError):
        build_riesz(1)


def test_riesz_witness_and_depth_bound():
    nu = build_riesz(HALF)
    m, J = riesz_witness(nu, DyadicArc(4, 15), HALF, 0)
    assert m == 0 and J == DyadicArc(4, 15)
    # leftmost level-8 arc: 2^-16 (3/4)^m >= 2^-(8+m)/2 first holds at m = 142
    assert riesz_depth_bound(nu, DyadicArc(8, 0), HALF) == 142
    assert riesz_witness(nu, DyadicArc(8, 0), HALF, 141) is None
    m, J = riesz_witness(nu, DyadicArc(8, 0), HALF, 200)
    assert m == 142 and J.level == 150


def test_clark_function_atom_and_lebesgue():
    f = clark_function(dirac())
    assert abs(f.b(0.5) - 0.5) < 1e-12
    z = 0.3 + 0.4j
    assert abs(f.f(z) - cmath.log(cmath.e / (1 - z))) < 1e-10
    g = clark_function(LebesgueMeasure())
    assert abs(g.b(z)) < 1e-12
    assert abs(g.f(z) - 1) < 1e-12


def test_clark_function_maps_into_disc():
    f = clark_function(build_riesz(HALF))
    rng = np.random.default_rng(3)
    zs = np.sqrt(rng.uniform(0, 0.99, 200)) * np.exp(2j * np.pi * rng.uniform(0, 1, 200))
    assert np.all(np.abs(f.b(zs)) < 1)
    assert np.all(np.abs(f.f(zs).imag) <= np.pi + 1)
    assert abs(f.b(0)) < 1e-12


def test_load_measure_rebuilds_construction():
    mu = build_nomoc(SQRT, 2)
    back = load_measure(dump_measure(mu, 10))
    assert back.mass_at(14, 0) == mu.mass_at(14, 0)
    data = dump_measure(mu, 10)
    data["arcs"][0]["mass"] = [1, 3]
    with pytest.raises(ValueError):
        load_measure(data)
