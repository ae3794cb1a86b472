import math

import numpy as np
import pytest

from waplab.averaging import VanHoveFamily, mean_of_comb
from waplab.io import dumps_comb
from waplab.measures import Box, variation
from waplab.models import (SQRT2, TAU, CPSScheme, ModelDescriptor, certify_point_set,
                           dual_frequencies, fibonacci_scheme, gen_crystal, gen_cut_project,
                           gen_lattice, gen_mixed_2d, gen_mixed_2d_strong, gen_null_pair,
                           gen_perturbed_integer)
from waplab.spectra import bragg_intensity

FAM = VanHoveFamily()


def fibonacci_oracle(lo, hi):
    """Model set by scanning a full grid of lattice coordinates (i, j)."""
    r = int(2 * max(abs(lo), abs(hi))) + 10
    i, j = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    x = i + j * TAU
    y = i + j * (1 - TAU)
    keep = (lo <= x) & (x < hi) & (-1 <= y) & (y < TAU - 1)
    return np.sort(x[keep])


# ---------------------------------------------------------------- lattices and crystals


def test_lattice_examples():
    assert gen_lattice(1, 0, Box.interval(-2.5, 2.5)).x.tolist() == [-2, -1, 0, 1, 2]
    assert gen_lattice(2, 1, Box.interval(0, 7)).x.tolist() == [1, 3, 5]
    assert len(gen_lattice(1, 0, Box.interval(-1000, 1000))) == 2000


def test_lattice_rejects_nonpositive_spacing():
    with pytest.raises(ValueError, match="a ≤ 0"):
        gen_lattice(0, 0, Box.interval(0, 1))


def test_crystal_examples():
    c = gen_crystal([[2.0]], [[0.0], [0.5]], Box.interval(-2, 5))
    assert c.x.tolist() == [-2, -1.5, 0, 0.5, 2, 2.5, 4, 4.5]
    same = gen_crystal([[1.0]], [[0.0]], Box.interval(-20, 20))
    assert np.array_equal(same.positions, gen_lattice(1, 0, Box.interval(-20, 20)).positions)
    doubled = gen_crystal([[1.0]], [[0.0], [0.0]], Box.interval(0, 3))
    assert doubled.weights.tolist() == [2, 2, 2]


def test_crystal_2d_count():
    c = gen_crystal([[1.0, 0.0], [0.5, 1.0]], [[0.0, 0.0]], Box.cube(0, 10, 2))
    assert len(c) == 100


def test_crystal_degenerate_basis():
    with pytest.raises(ValueError):
        gen_crystal([[1.0, 2.0], [2.0, 4.0]], [[0.0, 0.0]], Box.cube(0, 1, 2))


# ---------------------------------------------------------------- cut and project


def test_fibonacci_matches_double_loop_oracle():
    F = gen_cut_project(fibonacci_scheme(), Box.interval(0, 1000))
    oracle = fibonacci_oracle(0, 1000)
    assert len(F) == len(oracle)
    assert np.allclose(F.x, oracle)


def test_fibonacci_gaps_take_two_values():
    F = gen_cut_project(fibonacci_scheme(), Box.interval(0, 100))
    gaps = np.unique(np.round(np.diff(F.x), 9))
    assert np.allclose(gaps, [1.0, TAU])


def test_fibonacci_density_converges():
    dens = TAU / math.sqrt(5)
    errs = [abs(len(gen_cut_project(fibonacci_scheme(), Box.interval(0, L))) / L - dens)
            for L in (100, 1000, 10_000)]
    assert errs[-1] < 1e-3 and errs[-1] < errs[0]


def test_empty_window_gives_empty_comb():
    s = fibonacci_scheme().with_window(Box.interval(0.2, 0.2))
    assert len(gen_cut_project(s, Box.interval(0, 100))) == 0


def test_window_monotonicity():
    small = fibonacci_scheme().with_window(Box.interval(-0.5, 0.3))
    a = gen_cut_project(small, Box.interval(-300, 300))
    b = gen_cut_project(fibonacci_scheme(), Box.interval(-300, 300))
    assert set(np.round(a.x, 9)) <= set(np.round(b.x, 9))


def test_scheme_round_trip():
    s = fibonacci_scheme()
    assert CPSScheme.from_dict(s.to_dict()) == s
    assert s.density == pytest.approx(TAU / math.sqrt(5))


# ---------------------------------------------------------------- perturbed examples


def test_perturbed_integer_example():
    P = gen_perturbed_integer(Box.interval(0.5, 4.5))
    assert P.x.tolist() == pytest.approx([2.0, 2.5, 3 + 1 / 3, 4.25])
    assert len(gen_perturbed_integer(Box.interval(0.1, 0.9))) == 0


def test_null_pair_means():
    nu = gen_null_pair(Box.interval(-25_000, 25_000))
    assert abs(mean_of_comb(nu, FAM, 10_000).value) < 1e-3
    assert mean_of_comb(variation(nu), FAM, 10_000).value.real == pytest.approx(2.0, abs=1e-2)


def test_mixed_2d_rows():
    mu = gen_mixed_2d(Box((-20.0, -0.5), (20.0, 1.5)))
    row0 = np.sort(mu.positions[np.isclose(mu.positions[:, 1], 0.0), 0])
    row1 = np.sort(mu.positions[np.isclose(mu.positions[:, 1], 1.0), 0])
    m = np.array([v for v in range(-19, 20) if v != 0], float)
    want0 = np.sort([v for v in m + 1 / m if -20 <= v < 20])
    assert np.allclose(row0, want0)
    assert np.allclose(row1, SQRT2 * np.arange(-14, 15))
    strong = gen_mixed_2d_strong(Box((-20.0, -0.5), (20.0, 1.5)))
    s0 = strong.positions[np.isclose(strong.positions[:, 1], 0.0), 0]
    assert np.allclose(np.sort(s0), np.arange(-20, 20))
    assert len(gen_mixed_2d(Box((0.0, 0.1), (10.0, 0.9)))) == 0


def test_generators_are_deterministic():
    for model in ({"tag": "fibonacci"}, {"tag": "perturbedInteger"}, {"tag": "mixed2D"}):
        d = ModelDescriptor.from_dict(model)
        box = Box.cube(-50, 50, d.dim)
        assert dumps_comb(d.build(box)) == dumps_comb(d.build(box))


# ---------------------------------------------------------------- descriptors


def test_descriptor_round_trip_and_alias():
    d = ModelDescriptor.from_dict({"tag": "fibonacci", "patch": [[0, 10]]})
    assert d.tag == "cps" and d.dim == 1
    assert ModelDescriptor.from_dict(d.to_dict()) == d
    assert ModelDescriptor.from_dict({"tag": "mixed2D"}).dim == 2


def test_descriptor_rejects_unknown_tag():
    with pytest.raises(ValueError):
        ModelDescriptor.from_dict({"tag": "penrose"})


# ---------------------------------------------------------------- certification


def test_certify_lattice():
    rep = certify_point_set(gen_lattice(1, 0, Box.interval(-500, 500)))
    assert rep.r == 1 and rep.R == pytest.approx(0.5)
    assert rep.flc and rep.meyer and rep.label == "patch-certified"


@pytest.mark.parametrize("a,cutoff", [(1.0, 3.7), (2.0, 9.0), (0.5, 2.2)])
def test_certify_lattice_cluster_count(a, cutoff):
    rep = certify_point_set(gen_lattice(a, 0, Box.interval(-400, 400)), cutoff=cutoff)
    assert rep.r == pytest.approx(a)
    assert rep.difference_clusters == 2 * math.floor(cutoff / a) + 1


def test_certify_fibonacci_clusters_match_enumeration():
    F = gen_cut_project(fibonacci_scheme(), Box.interval(0, 3000))
    rep = certify_point_set(F, cutoff=6.0)
    x = F.x
    diffs = set()
    for i in range(len(x)):
        for j in range(i, min(len(x), i + 10)):
            d = x[j] - x[i]
            if d <= 6.0:
                diffs.add(round(d, 6))
    assert rep.difference_clusters == 2 * len(diffs) - 1
    assert rep.flc and rep.meyer


def test_certify_perturbed_fails_flc():
    rep = certify_point_set(gen_perturbed_integer(Box.interval(-5000, 5000)))
    assert not rep.flc and not rep.meyer


def test_certify_empty_comb():
    from waplab.measures import DiracComb
    with pytest.raises(ValueError):
        certify_point_set(DiracComb.empty(Box.interval(0, 10)))


# ---------------------------------------------------------------- dual frequencies


def test_dual_frequencies_lattice():
    assert dual_frequencies(ModelDescriptor("lattice", {"a": 1.0}), 3) == [(float(k),) for k in range(-3, 4)]
    half = [k[0] for k in dual_frequencies(ModelDescriptor("lattice", {"a": 2.0}), 2)]
    assert half == [k / 2 for k in range(-4, 5)]


def test_dual_frequencies_fibonacci_are_peaks(fibonacci_big):
    ks = dual_frequencies(ModelDescriptor("cps", {"scheme": "fibonacci"}), 3.0, 0.5)
    assert 5 <= len(ks) < 50
    ints = [bragg_intensity(fibonacci_big, k, FAM, 10_000) for k in ks]
    assert min(ints) > 1e-3 * (TAU / math.sqrt(5)) ** 2


def test_dual_frequencies_unsupported():
    with pytest.raises(ValueError):
        dual_frequencies(ModelDescriptor("nullPair"), 3.0)
