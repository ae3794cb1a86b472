"""Eberlein convolution, autocorrelation and the structural checks built on them.

The averaged convolution

    (mu (*) nu)_n = (1 / vol A_n) (mu|A_n) * (nu|A_n)

is only ever formed on an output window: pairs ``(p, q)`` with ``p + q``
outside the window are never generated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import models
from .averaging import (AbsOf, ProductOf, ReflectedAt, integrate,
                        mean_of_function, require_cover)
from .errors import DimensionMismatchError, NoDecompositionRuleError, PatchTooSmallError
from .measures import (DEFAULT_PAIR_CAP, MERGE_TOL, Box, DiracComb, SmoothedComb, TestFunction, apply,
                       as_point, pairs_in_window, reflect_conjugate, restrict, smooth, subtract)
from .spectra import _coefficient, character_sum

DEFAULT_WINDOW_HALF = 10.0
DEFAULT_TOL = 1e-2
DEFAULT_PITCH = 0.25


def default_window(dim=1, half=DEFAULT_WINDOW_HALF):
    return Box.cube(-half, half, dim)


@dataclass
class EberleinResult:
    comb: DiracComb
    n: int
    window: Box
    one_sided: bool = False
    family: dict = field(default_factory=dict)

    def coefficient(self, k):
        """Fourier-Bohr estimate of the convolution from its mean over the window."""
        k = as_point(k, self.comb.dim)
        return character_sum(self.comb.positions, self.comb.weights, k) / self.window.volume

    def metadata(self):
        return {"n": self.n, "family": self.family, "window": self.window.to_pairs(),
                "oneSided": self.one_sided}


def _windowed_product(P, wP, Q, wQ, window, scale, cap):
    i, j = pairs_in_window(P, Q, window, cap)
    merged = DiracComb(P[i] + Q[j], wP[i] * wQ[j], window)
    return DiracComb(merged.positions, merged.weights * scale, window, _trusted=True)


def _check_window(mu, window):
    if window.dim != mu.dim:
        raise DimensionMismatchError("window and comb dimensions differ")
    if window.volume <= 0:
        raise ValueError("output window must have positive volume")


def eberlein_convolve(mu, nu, family, n, window=None, cap=DEFAULT_PAIR_CAP):
    """``(1/vol A_n) (mu|A_n) * (nu|A_n)`` restricted to ``window``."""
    if mu.dim != nu.dim:
        raise DimensionMismatchError("comb dimensions differ")
    window = window or default_window(mu.dim)
    _check_window(mu, window)
    A = family.box(n)
    require_cover(mu.patch, A)
    require_cover(nu.patch, A)
    a, b = restrict(mu, A), restrict(nu, A)
    comb = _windowed_product(a.positions, a.weights, b.positions, b.weights, window,
                             1.0 / A.volume, cap)
    return EberleinResult(comb, n, window, False, family.to_config())


def one_sided_support(A, window):
    """Region of ``nu`` reached by ``(mu|A) * nu`` on ``window``."""
    return Box(tuple(np.subtract(window.lo, A.hi)), tuple(np.subtract(window.hi, A.lo)))


def eberlein_convolve_one_sided(mu, nu, family, n, window=None, cap=DEFAULT_PAIR_CAP):
    """``(1/vol A_n) (mu|A_n) * nu`` restricted to ``window`` (``nu`` untruncated)."""
    if mu.dim != nu.dim:
        raise DimensionMismatchError("comb dimensions differ")
    window = window or default_window(mu.dim)
    _check_window(mu, window)
    A = family.box(n)
    require_cover(mu.patch, A)
    need = one_sided_support(A, window)
    if not nu.patch.covers(need):
        raise PatchTooSmallError(
            f"enlarged patch unavailable: nu must cover {need.to_pairs()}", required=need)
    a, b = restrict(mu, A), restrict(nu, need)
    comb = _windowed_product(a.positions, a.weights, b.positions, b.weights, window,
                             1.0 / A.volume, cap)
    return EberleinResult(comb, n, window, True, family.to_config())


def autocorrelation(mu, family, n, window=None, cap=DEFAULT_PAIR_CAP):
    """``(1/vol A_n) (mu|A_n) * (mu|A_n)~`` on ``window``.

    On symmetric boxes this equals ``eberlein_convolve(mu, reflect_conjugate(mu))``;
    restricting before reflecting keeps the weight at 0 equal to the mean of
    ``|w|^2`` for every family.
    """
    window = window or default_window(mu.dim)
    _check_window(mu, window)
    A = family.box(n)
    require_cover(mu.patch, A)
    a = restrict(mu, A)
    b = reflect_conjugate(a)
    comb = _windowed_product(a.positions, a.weights, b.positions, b.weights, window,
                             1.0 / A.volume, cap)
    return EberleinResult(_real_origin(comb), n, window, False, family.to_config())


def _real_origin(comb):
    """Drop the rounding-level imaginary part of the weight at 0 (a sum of ``|w|^2``)."""
    at0 = np.all(np.abs(comb.positions) <= MERGE_TOL, axis=1)
    if not at0.any():
        return comb
    w = comb.weights.copy()
    w[at0] = w[at0].real
    return DiracComb(comb.positions, w, comb.patch, _trusted=True)


# --------------------------------------------------------------------------


@dataclass
class GapReport:
    """Two independently computed numbers and their distance."""

    lhs: complex
    rhs: complex
    gap: float
    tolerance: float
    passed: bool
    params: dict = field(default_factory=dict)


def smoothed_eberlein_identity_check(mu, nu, f, g, t, family, n, tol=DEFAULT_TOL):
    """Compare ``((mu (*) nu) * f * g)(t)`` with the average of ``(f*mu)(s) (g*nu)(t-s)``.

    The left side smooths the windowed Eberlein estimate with the exact ``f * g``;
    the right side integrates the product of the two smoothed combs exactly over
    ``A_n``.  One-dimensional combs only.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise DimensionMismatchError("the smoothed identity check is one-dimensional")
    t = float(as_point(t, 1)[0])
    fg = f.convolve(g)
    s = fg.support
    eps = 1e-9
    window = Box.interval(t - s.hi[0] - eps, t - s.lo[0] + eps)
    varpi = eberlein_convolve(mu, nu, family, n, window)
    lhs = smooth(fg, varpi.comb, t)

    A = family.box(n)
    require_cover(mu.patch, A.minkowski(f.support.reflect()), "support of f*mu on A_n")
    need_nu = Box.interval(t - A.hi[0] - g.support.hi[0], t - A.lo[0] - g.support.lo[0])
    require_cover(nu.patch, need_nu, "support of g*nu at t - A_n")
    integrand = ProductOf(SmoothedComb(f, mu), ReflectedAt(SmoothedComb(g, nu), t))
    rhs = integrate(integrand, A) / A.volume
    gap = abs(lhs - rhs)
    return GapReport(lhs, rhs, gap, tol, bool(gap < tol), {"t": t, "n": n})


class _Sampled:
    def __init__(self, f):
        self.f = f

    def __call__(self, x):
        return np.asarray(self.f(x), dtype=complex)


def function_eberlein(f, g, x, family, n, h=1e-2):
    """``(f (*) g)(x) = M_t(f(x - t) g(t))`` estimated on ``A_n``.

    Exact when both functions expose breakpoints, trapezoid with step ``h``
    otherwise.
    """
    x = float(as_point(x, 1)[0])
    if hasattr(f, "breakpoints") and hasattr(g, "breakpoints"):
        integrand = ProductOf(ReflectedAt(f, x), g)
    else:
        def integrand(tt):
            tt = np.asarray(tt, dtype=float)
            return np.asarray(f(x - tt), dtype=complex) * np.asarray(g(tt), dtype=complex)
    return mean_of_function(integrand, family, n, h=h).value


# --------------------------------------------------------------------------
# Iterated autocorrelation


def _axis_period(pos, w, axis, window, rel_tol):
    """Smallest shift along ``axis`` mapping the atoms in the window onto themselves."""
    c = window.center
    e = np.zeros(pos.shape[1])
    e[axis] = 1.0
    ref = int(np.argmin(np.linalg.norm(pos - c, axis=1)))
    on_line = np.all(np.abs(np.delete(pos - pos[ref], axis, axis=1)) < 1e-6, axis=1)
    cands = np.sort((pos[on_line, axis] - pos[ref, axis]))
    cands = cands[cands > 1e-6]
    scale = np.abs(w).max()
    width = window.widths[axis]
    lookup = {tuple(np.round(p, 6)): wi for p, wi in zip(pos, w)}
    for P in cands:
        if 2 * P > width:
            break
        shifted = pos + P * e
        inside = window.contains(shifted)
        ok = True
        for p, wi in zip(shifted[inside], w[inside]):
            other = lookup.get(tuple(np.round(p, 6)))
            if other is None or abs(other - wi) > rel_tol * scale:
                ok = False
                break
        # atoms whose back-shift lands in the window must also be images
        if ok:
            back = pos - P * e
            inside = window.contains(back)
            for p in back[inside]:
                if tuple(np.round(p, 6)) not in lookup:
                    ok = False
                    break
        if ok:
            return float(P)
    return None


def periodize(comb, window, target, rel_tol=1e-2):
    """Tile a lattice-periodic window result over ``target``.

    The periods along each axis are detected from the window (weights must agree
    under the shift to ``rel_tol`` of the largest weight); the cell around the
    window center is then repeated.  Raises ``PatchTooSmallError`` when no period
    fits twice into the window.
    """
    if len(comb) == 0:
        return DiracComb.empty(target)
    pos, w = comb.positions, comb.weights
    periods = []
    for axis in range(comb.dim):
        P = _axis_period(pos, w, axis, window, rel_tol)
        if P is None:
            raise PatchTooSmallError(
                "window insufficient for next level: no translation period found along "
                f"axis {axis}", required=window)
        periods.append(P)
    periods = np.asarray(periods)
    c = window.center
    cell = Box(tuple(c - periods / 2), tuple(c + periods / 2))
    base = cell.contains(pos)
    bp, bw = pos[base], w[base]
    ranges = [np.arange(math.floor((target.lo[a] - cell.hi[a]) / periods[a]) - 1,
                        math.ceil((target.hi[a] - cell.lo[a]) / periods[a]) + 2)
              for a in range(comb.dim)]
    grids = np.meshgrid(*ranges, indexing="ij")
    shifts = np.stack([g.ravel() for g in grids], axis=1) * periods
    P = (bp[None, :, :] + shifts[:, None, :]).reshape(-1, comb.dim)
    W = np.tile(bw, shifts.shape[0])
    keep = target.contains(P)
    return DiracComb(P[keep], W[keep], target)


def iterated_autocorrelation(mu, depth, family, n, window=None, rel_tol=1e-2):
    """``[gamma_(0), ..., gamma_(depth)]`` with ``gamma_(k+1)`` the autocorrelation of ``gamma_(k)``.

    Each level is periodized from its window onto the averaging box before the
    next autocorrelation is taken.
    """
    if not 0 <= depth <= 3:
        raise ValueError("depth must be between 0 and 3")
    window = window or default_window(mu.dim)
    out = [autocorrelation(mu, family, n, window)]
    A = family.box(n)
    target = Box(tuple(np.minimum(A.lo, A.reflect().lo)), tuple(np.maximum(A.hi, A.reflect().hi)))
    for _ in range(depth):
        tiled = periodize(out[-1].comb, window, target, rel_tol)
        out.append(autocorrelation(tiled, family, n, window))
    return out


# --------------------------------------------------------------------------
# Decomposition


@dataclass
class Decomposition:
    strong: DiracComb
    null: DiracComb
    provenance: str


def eberlein_decompose(model, patch=None):
    """Known split ``mu = mu_s + mu_0`` for the supported model families.

    No rule is ever inferred numerically; unsupported families raise
    :class:`NoDecompositionRuleError`.
    """
    if isinstance(model, dict):
        model = models.ModelDescriptor.from_dict(model)
    patch = patch or model.patch
    tag = model.tag
    if tag not in models.TAGS:
        raise NoDecompositionRuleError(f"no analytic decomposition rule for {tag!r}")
    mu = model.build(patch)
    if tag in ("lattice", "crystal", "cps"):
        return Decomposition(mu, DiracComb.empty(patch), f"{tag}: strongly almost periodic")
    if tag == "perturbedInteger":
        strong = models.gen_lattice(1.0, 0.0, patch)
        return Decomposition(strong, subtract(mu, strong).with_patch(patch),
                             "perturbedInteger: strong part is delta_Z")
    if tag == "nullPair":
        return Decomposition(DiracComb.empty(patch), mu, "nullPair: null weakly almost periodic")
    if tag == "mixed2D":
        strong = models.gen_mixed_2d_strong(patch)
        return Decomposition(strong, subtract(mu, strong).with_patch(patch),
                             "mixed2D: strong part is [Z x 2Z] + [Z sqrt2 x (2Z+1)]")
    raise NoDecompositionRuleError(f"no analytic decomposition rule for {tag!r}")


# --------------------------------------------------------------------------
# Null-ness and hull membership


@dataclass
class NullnessReport:
    ns: list
    means: list
    decreasing: bool
    null: bool
    threshold: float
    witness: float | None
    best_t: float
    best_sup: float
    K: list
    eps: float


def nullness_check(mu0, c, family, n_max, ns=None, threshold=DEFAULT_TOL,
                   K=None, eps=0.05, pitch=DEFAULT_PITCH, search=None):
    """Averages ``M_n(|c * mu0|)`` and a translate ``t`` with ``|c * mu0| < eps`` on ``t + K``.

    ``null`` holds when the averages decrease along ``ns`` and the last one is
    below ``threshold``.  The translate search walks ``search = (lo, hi)`` with
    the given pitch; on failure the best candidate is reported.
    """
    if mu0.dim != 1:
        raise DimensionMismatchError("nullness_check is one-dimensional")
    ns = sorted(ns or [n for n in (n_max // 100, n_max // 10, n_max) if n >= 2])
    supp = c.support
    A = family.box(n_max)
    require_cover(mu0.patch, A.minkowski(supp.reflect()), "support of c*mu0 on A_n")
    f = SmoothedComb(c, mu0)
    means = [float(mean_of_function(AbsOf(f), family, n).value.real) for n in ns]
    decreasing = all(b < a for a, b in zip(means, means[1:])) or all(m == 0 for m in means)
    null = bool(decreasing and means[-1] < threshold)

    K = K or Box.interval(0.0, 10.0)
    usable = Box.interval(mu0.patch.lo[0] + supp.hi[0], mu0.patch.hi[0] + supp.lo[0])
    if search is None:
        search = (max(0.0, usable.lo[0] - K.lo[0]), usable.hi[0] - K.hi[0])
    grid = np.arange(search[0], search[1] + pitch / 2, pitch)
    if grid.size == 0:
        raise PatchTooSmallError("patch too small for the translate search", required=K)
    require_cover(usable, Box.interval(grid[0] + K.lo[0], grid[-1] + K.hi[0]),
                  "translate search range")
    bp = f.breakpoints(grid[0] + K.lo[0], grid[-1] + K.hi[0])
    vals = np.abs(f(bp))
    ends_lo = np.abs(f(grid + K.lo[0]))
    ends_hi = np.abs(f(grid + K.hi[0]))
    i0 = np.searchsorted(bp, grid + K.lo[0], "left")
    i1 = np.searchsorted(bp, grid + K.hi[0], "right")
    sups = np.maximum(ends_lo, ends_hi)
    for idx in range(grid.size):
        if i1[idx] > i0[idx]:
            sups[idx] = max(sups[idx], vals[i0[idx]:i1[idx]].max())
    good = np.nonzero(sups < eps)[0]
    witness = float(grid[good[0]]) if good.size else None
    best = int(np.argmin(sups))
    return NullnessReport(ns, means, bool(decreasing), null, threshold, witness,
                          float(grid[best]), float(sups[best]), K.to_pairs(), eps)


@dataclass
class HullReport:
    witness: float | list | None
    discrepancy: float
    best_t: float | list
    best_discrepancy: float
    eps: float
    tests: int
    searched: int

    @property
    def passed(self):
        return self.witness is not None


def _as_grid(search_grid, dim):
    if isinstance(search_grid, tuple) and len(search_grid) == 3 and dim == 1:
        lo, hi, pitch = search_grid
        return np.arange(lo, hi + pitch / 2, pitch)[:, None]
    g = np.asarray(search_grid, dtype=float)
    return g.reshape(-1, dim)


def hull_membership_check(mu, target, tests, eps=DEFAULT_TOL, search_grid=(0.0, 100.0, DEFAULT_PITCH)):
    """Search for ``t`` with ``max_i |(T^t mu)(c_i) - target(c_i)| < eps``.

    ``(T^t mu)(c) = sum_p w_p c(p + t)``.  ``search_grid`` is either
    ``(lo, hi, pitch)`` (one dimension) or an explicit array of translates;
    the first translate in grid order that works is the witness.
    """
    tests = list(tests)
    if not tests:
        raise ValueError("empty test set")
    grid = _as_grid(search_grid, mu.dim)
    for c in tests:
        require_cover(target.patch, c.support, "test support (target)")
        need = Box(tuple(np.asarray(c.support.lo) - grid.max(axis=0)),
                   tuple(np.asarray(c.support.hi) - grid.min(axis=0)))
        require_cover(mu.patch, need, "test supports over the search grid")
    ref = np.array([apply(target, c) for c in tests])
    got = np.stack([smooth(c.mirror(), mu, -grid if mu.dim > 1 else -grid[:, 0]) for c in tests],
                   axis=1)
    disc = np.max(np.abs(got - ref[None, :]), axis=1)
    good = np.nonzero(disc < eps)[0]
    best = int(np.argmin(disc))

    def point(i):
        return float(grid[i, 0]) if mu.dim == 1 else grid[i].tolist()

    if good.size:
        w = int(good[0])
        return HullReport(point(w), float(disc[w]), point(best), float(disc[best]), eps,
                          len(tests), grid.shape[0])
    return HullReport(None, math.nan, point(best), float(disc[best]), eps, len(tests), grid.shape[0])


# --------------------------------------------------------------------------
# Comparisons


def lattice_tents(window, pitch=1.0, halfwidth=1.0):
    """Tents on a grid inside ``window`` (shrunk by the half-width)."""
    axes = [np.arange(math.ceil((lo + halfwidth) / pitch) * pitch, hi - halfwidth + 1e-12, pitch)
            for lo, hi in zip(window.lo, window.hi)]
    grids = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=1)
    return [TestFunction.tent(c, halfwidth, dim=window.dim) for c in centers]


@dataclass
class ComparisonReport:
    vague_deviation: float
    coefficient_deviation: float
    max_deviation: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)


def same_autocorrelation_check(mu, nu, family, n, window=None, ks=(), tests=None, tol=DEFAULT_TOL):
    """Compare the autocorrelations of ``mu`` and ``nu``.

    The window estimates are compared against ``tests`` (default: unit tents on
    the integer grid of the window) and the Bragg intensities at ``ks``.
    """
    if mu.dim != nu.dim:
        raise DimensionMismatchError("patch mismatch: comb dimensions differ")
    window = window or default_window(mu.dim)
    A = family.box(n)
    for m in (mu, nu):
        require_cover(m.patch, A, "averaging box (patch mismatch)")
    g1 = autocorrelation(mu, family, n, window)
    g2 = autocorrelation(nu, family, n, window)
    tests = lattice_tents(window) if tests is None else list(tests)
    vague = max((abs(apply(g1.comb, c) - apply(g2.comb, c)) for c in tests), default=0.0)
    coef = 0.0
    for k in ks:
        k = as_point(k, mu.dim)
        coef = max(coef, abs(abs(_coefficient(mu, k, A)) ** 2 - abs(_coefficient(nu, k, A)) ** 2))
    dev = max(vague, coef)
    return ComparisonReport(float(vague), float(coef), float(dev), tol, bool(dev < tol),
                            {"n": n, "window": window.to_pairs(), "tests": len(tests)})


@dataclass
class ProductLawReport:
    freqs: list
    gaps: list
    max_gap: float
    tolerance: float
    passed: bool
    n: int
    window: list


def product_law_check(mu, nu, ks, family, n, window=None, tol=DEFAULT_TOL):
    """``|c_k(mu (*) nu) - c_k(mu) c_k(nu)|`` for each ``k``.

    The coefficient of the convolution is its mean over the output window.
    """
    window = window or default_window(mu.dim)
    varpi = eberlein_convolve(mu, nu, family, n, window)
    A = family.box(n)
    gaps = []
    for k in ks:
        k = as_point(k, mu.dim)
        lhs = varpi.coefficient(k)
        rhs = _coefficient(mu, k, A) * _coefficient(nu, k, A)
        gaps.append(float(abs(lhs - rhs)))
    mg = max(gaps) if gaps else 0.0
    return ProductLawReport([tuple(as_point(k, mu.dim)) for k in ks], gaps, mg, tol,
                            bool(mg < tol), n, window.to_pairs())


@dataclass
class FamilyComparison:
    estimates: dict
    max_deviation: float
    tolerance: float
    passed: bool


def vanhove_independence_check(mu, k, families, n, tol=DEFAULT_TOL):
    """Coefficient estimates at ``k`` from several van Hove families, and their spread."""
    k = as_point(k, mu.dim)
    est = {}
    for name, fam in families.items():
        est[name] = _coefficient(mu, k, fam.box(n))
    vals = np.array(list(est.values()))
    dev = float(np.max(np.abs(vals[:, None] - vals[None, :]))) if vals.size else 0.0
    return FamilyComparison(est, dev, tol, bool(dev < tol))
