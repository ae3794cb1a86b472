import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waplab.averaging import (AbsOf, MeanEstimate, VanHoveFamily, comb_average,
                              convergence_diagnostic, integrate, k_boundary, mean_of_comb,
                              mean_of_function)
from waplab.errors import NonFiniteSampleError, PatchTooSmallError
from waplab.measures import (Box, DiracComb, SmoothedComb, TestFunction, add, scale,
                             translate, variation)
from waplab.models import gen_lattice, gen_null_pair, gen_perturbed_integer

PATCH = Box.interval(-3000, 3000)


# ---------------------------------------------------------------- K-boundary


def test_k_boundary_examples():
    assert k_boundary(Box.interval(-10, 10), Box.interval(-1, 1)).volume == 4
    assert k_boundary(Box.interval(-10, 10), Box.interval(0, 0)).volume == 0
    # a single nonzero point still shifts the box: half a unit sticks out, half a unit is lost
    assert k_boundary(Box.interval(-10, 10), Box.interval(0.5, 0.5)).volume == 1
    assert k_boundary(Box.cube(0, 10, 2), Box.cube(-1, 1, 2)).volume == 12 ** 2 - 8 ** 2


def _mc_boundary(A, K, rng, samples=200_000):
    """Monte Carlo volume of {x : (x + K) meets both A and its complement}."""
    lo = np.array(A.lo) + np.array(K.lo) * -1 - 3
    hi = np.array(A.hi) + 3
    x = rng.uniform(lo, hi, (samples, A.dim))
    # x + K meets A iff x in A - K; x + K inside A iff x in erosion
    minus_k = Box(tuple(np.subtract(A.lo, K.hi)), tuple(np.subtract(A.hi, K.lo)))
    lo_e, hi_e = np.subtract(A.lo, K.lo), np.subtract(A.hi, K.hi)
    inside = np.all((x >= lo_e) & (x < hi_e), axis=1)
    meets = minus_k.contains(x)
    return (meets & ~inside).mean() * np.prod(hi - lo)


def test_k_boundary_symmetric_K_matches_monte_carlo(rng):
    A = Box((0.0, 0.0), (6.0, 4.0))
    K = Box((-1.0, -0.5), (1.0, 0.5))
    est = _mc_boundary(A, K, rng)
    assert k_boundary(A, K).volume == pytest.approx(est, rel=2e-2)


def test_boundary_ratio_decreases():
    fam = VanHoveFamily()
    K = Box.interval(-2, 3)
    ratios = [fam.boundary_ratio(n, K) for n in (5, 10, 50, 100, 1000)]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] == pytest.approx(2 * 5 / 2000)


# ---------------------------------------------------------------- families


def test_family_boxes():
    assert VanHoveFamily().box(10).to_pairs() == [[-10.0, 10.0]]
    assert VanHoveFamily(step=1.5).box(10).to_pairs() == [[-15.0, 15.0]]
    assert VanHoveFamily("drifting").box(10).to_pairs() == [[-6.0, 14.0]]
    assert VanHoveFamily(dim=2).volume(3) == 36


def test_family_config_round_trip():
    fam = VanHoveFamily("drifting", 2.0, 2, 1)
    assert VanHoveFamily.from_config(fam.to_config(), 2) == fam


def test_family_validation():
    with pytest.raises(ValueError):
        VanHoveFamily("spiral")
    with pytest.raises(ValueError):
        VanHoveFamily(step=0)


# ---------------------------------------------------------------- means of combs


def test_mean_of_lattice_is_exactly_one():
    Z = gen_lattice(1, 0, PATCH)
    for n in (2, 10, 1000):
        est = mean_of_comb(Z, VanHoveFamily(), n)
        assert est.value == 1.0 and est.cauchy_gap == 0.0


def test_mean_of_null_pair_and_its_variation():
    nu = gen_null_pair(Box.interval(-25000, 25000))
    fam = VanHoveFamily()
    vals = [abs(mean_of_comb(nu, fam, n).value) for n in (100, 1000, 10000)]
    assert vals[-1] < 1e-3
    v = mean_of_comb(variation(nu), fam, 10000).value
    assert v.real == pytest.approx(2.0, abs=1e-2)


def test_patch_too_small_reports_required_box():
    Z = gen_lattice(1, 0, Box.interval(-10, 10))
    with pytest.raises(PatchTooSmallError, match="patch too small") as err:
        mean_of_comb(Z, VanHoveFamily(), 20)
    assert err.value.required.to_pairs() == [[-20.0, 20.0]]


def test_n_below_two_rejected():
    Z = gen_lattice(1, 0, Box.interval(-10, 10))
    with pytest.raises(ValueError):
        mean_of_comb(Z, VanHoveFamily(), 1)


def test_mean_translation_rate():
    Z = gen_perturbed_integer(PATCH)
    fam = VanHoveFamily()
    for n in (100, 1000):
        d = abs(mean_of_comb(translate(Z, 7.3), fam, n).value - mean_of_comb(Z, fam, n).value)
        # at most 8 atoms cross each end of the box
        assert d <= 2 * 8 / (2 * n) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-90, 90), max_size=30), st.lists(st.floats(-90, 90), max_size=30),
       st.complex_numbers(max_magnitude=5), st.complex_numbers(max_magnitude=5),
       st.integers(2, 90))
def test_mean_is_linear(p1, p2, a, b, n):
    patch = Box.interval(-100, 100)
    mu = DiracComb(np.array(p1, float), 1.0, patch)
    nu = DiracComb(np.array(p2, float), -2.0, patch)
    fam = VanHoveFamily()
    lhs = mean_of_comb(add(scale(mu, a), scale(nu, b)), fam, n).value
    rhs = a * mean_of_comb(mu, fam, n).value + b * mean_of_comb(nu, fam, n).value
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(a) + abs(b)) * 100


# ---------------------------------------------------------------- means of functions


def test_mean_of_constant_and_full_periods():
    fam = VanHoveFamily()
    one = mean_of_function(lambda x: np.ones_like(x), fam, 50)
    assert one.value == pytest.approx(1.0, abs=1e-12)
    osc = mean_of_function(lambda x: np.exp(2j * np.pi * x), fam, 50)
    assert abs(osc.value) < 1e-9


def test_exact_integration_of_smoothed_comb():
    mu = DiracComb(np.array([0.0, 0.4, 3.0]), np.array([1.0, -2.0, 0.5]))
    f = SmoothedComb(TestFunction.tent(), mu)
    box = Box.interval(-5, 5)
    # mass of c*mu equals mu(R) times the integral of c
    assert integrate(f, box).real == pytest.approx(-0.5, abs=1e-14)
    xs = np.linspace(-5, 5, 2_000_001)
    brute = np.trapezoid(np.abs(f(xs)), xs)
    assert integrate(AbsOf(f), box).real == pytest.approx(brute, abs=1e-8)


def test_smoothed_null_pair_mean_decreases():
    nu = gen_null_pair(Box.interval(-25000, 25000))
    f = AbsOf(SmoothedComb(TestFunction.tent(), nu))
    fam = VanHoveFamily()
    vals = [mean_of_function(f, fam, n).value.real for n in (100, 1000, 10000)]
    assert vals[0] > vals[1] > vals[2]


def test_non_finite_samples_raise():
    with pytest.raises(NonFiniteSampleError):
        mean_of_function(lambda x: np.full_like(x, np.nan), VanHoveFamily(), 5)


def test_trapezoid_2d():
    fam = VanHoveFamily(dim=2)
    est = mean_of_function(lambda p: p[:, 0] ** 2, fam, 3, h=1e-2)
    assert est.value.real == pytest.approx(3.0, rel=1e-4)


# ---------------------------------------------------------------- diagnostics


def test_convergence_geometric():
    est = [MeanEstimate(1.0, n, g) for n, g in ((10, 0.1), (20, 0.05), (40, 0.025))]
    rep = convergence_diagnostic(est, threshold=0.05)
    assert rep.exponent == pytest.approx(-1.0)
    assert rep.converged and rep.monotone


def test_convergence_stagnation():
    est = [MeanEstimate(1.0, n, 0.1) for n in (10, 20, 40)]
    rep = convergence_diagnostic(est)
    assert not rep.converged
    assert rep.exponent == pytest.approx(0.0, abs=1e-12)


def test_convergence_needs_two():
    with pytest.raises(ValueError):
        convergence_diagnostic([MeanEstimate(1.0, 10, 0.1)])


def test_comb_average_empty_box():
    Z = gen_lattice(1, 0, Box.interval(-5, 5))
    assert comb_average(Z, Box.interval(0.2, 0.7)) == 0
    assert not math.isnan(abs(comb_average(Z, Box.interval(0, 1))))
