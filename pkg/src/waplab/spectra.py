"""Fourier-Bohr coefficients, Bragg intensities and diffraction spectra.

Characters are ``chi_k(t) = exp(2 pi i k.t)``.  The coefficient of a comb at
frequency ``k`` is estimated by

    c_k(mu)_n = (1 / vol A_n) * sum_{p in A_n} w_p exp(-2 pi i k.p)

using compensated summation, so long sums keep their small averages.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .averaging import _coarse_index, comb_average, require_cover
from .errors import DimensionMismatchError, PatchTooSmallError
from .measures import as_point, compensated_sum, restrict, translate, variation

DEFAULT_PEAK_FRACTION = 1e-3


def character_sum(positions, weights, k):
    """``sum_p w_p exp(-2 pi i k.p)``, phases reduced mod 1 before exponentiation."""
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    k = as_point(k, positions.shape[1])
    phase = positions @ k
    phase = phase - np.round(phase)
    return compensated_sum(np.asarray(weights) * np.exp(-2j * np.pi * phase))


@dataclass(frozen=True)
class FourierBohrEstimate:
    freq: tuple
    value: complex
    n: int
    cauchy_gap: float

    @property
    def intensity(self):
        return abs(self.value) ** 2


def _coefficient(mu, k, A):
    require_cover(mu.patch, A)
    sub = restrict(mu, A)
    return character_sum(sub.positions, sub.weights, k) / A.volume


def fourier_bohr(mu, k, family, n):
    """Estimate ``c_k(mu)`` on ``A_n``; the Cauchy gap compares with ``A_{n//2}``."""
    if mu.dim != family.dim:
        raise DimensionMismatchError("comb and family dimensions differ")
    k = as_point(k, mu.dim)
    v = _coefficient(mu, k, family.box(n))
    v2 = _coefficient(mu, k, family.box(_coarse_index(n)))
    return FourierBohrEstimate(tuple(k), v, n, abs(v - v2))


def bragg_intensity(mu, k, family, n):
    return fourier_bohr(mu, k, family, n).intensity


@dataclass(frozen=True)
class Peak:
    freq: tuple
    intensity: float
    coefficient: complex
    cauchy_gap: float


@dataclass
class DiffractionSpectrum:
    peaks: list
    n: int
    threshold: float

    def frequencies(self):
        return np.array([p.freq for p in self.peaks])

    def intensities(self):
        return np.array([p.intensity for p in self.peaks])

    def to_csv(self, dim=None):
        dim = dim or (len(self.peaks[0].freq) if self.peaks else 1)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"k{i + 1}" for i in range(dim)] + ["intensity", "re", "im", "cauchyGap"])
        for p in self.peaks:
            w.writerow([repr(float(v)) for v in p.freq]
                       + [repr(p.intensity), repr(p.coefficient.real), repr(p.coefficient.imag),
                          repr(p.cauchy_gap)])
        return buf.getvalue()


def _threads():
    try:
        return max(1, int(os.environ.get("WAPLAB_THREADS", "1")))
    except ValueError:
        return 1


def diffraction_spectrum(mu, candidates, family, n, threshold=None):
    """Bragg peaks among ``candidates`` with intensity at least ``threshold``.

    The default threshold is ``1e-3 * M_n(|mu|)**2``.  Frequencies are evaluated
    independently (in parallel when ``WAPLAB_THREADS`` > 1); each sum is serial,
    so results do not depend on the thread count.
    """
    cands = [tuple(as_point(k, mu.dim)) for k in candidates]
    if not cands:
        raise ValueError("empty candidate list")
    if threshold is None:
        dens = abs(comb_average(variation(mu), family.box(n)))
        threshold = DEFAULT_PEAK_FRACTION * dens ** 2
    cands = sorted(set(cands))

    def one(k):
        return fourier_bohr(mu, k, family, n)

    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            ests = list(ex.map(one, cands))
    else:
        ests = [one(k) for k in cands]
    peaks = [Peak(e.freq, e.intensity, e.value, e.cauchy_gap) for e in ests
             if e.intensity >= threshold and e.intensity > 0]
    return DiffractionSpectrum(peaks, n, threshold)


# --------------------------------------------------------------------------
# Checks


@dataclass
class CovarianceReport:
    freq: tuple
    shift: tuple
    n: int
    discrepancy: float
    tolerance: float
    boundary_bound: float
    passed: bool


def covariance_check(mu, k, t, family, n, tol=None):
    """Compare ``c_k(T^t mu)_n`` with ``exp(-2 pi i k.t) c_k(mu)_n``.

    ``T^t mu = delta_t * mu`` moves atoms by ``+t``; the averaging box stays put,
    so the two sums differ only by atoms in ``A_n`` symmetric-difference
    ``A_n - t``.  ``boundary_bound`` is that mass of ``|mu|`` over ``vol A_n``;
    it is the default tolerance.
    """
    k = as_point(k, mu.dim)
    t = as_point(t, mu.dim)
    A = family.box(n)
    moved = translate(mu, t)
    try:
        require_cover(moved.patch, A, "averaging box (after translation)")
    except PatchTooSmallError as exc:
        raise PatchTooSmallError(f"patch too small after translation: {exc}", exc.required)
    lhs = _coefficient(moved, k, A)
    rhs = np.exp(-2j * np.pi * float(k @ t)) * _coefficient(mu, k, A)
    disc = abs(lhs - rhs)
    bound = _symmetric_difference_mass(mu, A, A.translate(-t)) / A.volume
    tolerance = bound + 1e-12 if tol is None else tol
    return CovarianceReport(tuple(k), tuple(t), n, disc, tolerance, bound, bool(disc <= tolerance))


def _symmetric_difference_mass(mu, A, B):
    a = np.abs(mu.weights)
    inA = A.contains(mu.positions) if len(mu) else np.zeros(0, bool)
    inB = B.contains(mu.positions) if len(mu) else np.zeros(0, bool)
    return math.fsum(a[inA != inB])


@dataclass
class UniformityReport:
    freq: tuple
    n: int
    estimates: dict
    max_deviation: float
    tolerance: float
    passed: bool


def uniformity_check(mu, k, family_centered, family_drifting, n, shifts=(), tol=1e-2):
    """Spread of coefficient estimates across averaging families and translates.

    Estimates on translates ``T^t mu`` are phase-corrected by ``exp(2 pi i k.t)``
    so that every entry estimates the same number.
    """
    k = as_point(k, mu.dim)
    est = {
        "centered": _coefficient(mu, k, family_centered.box(n)),
        "drifting": _coefficient(mu, k, family_drifting.box(n)),
    }
    A = family_centered.box(n)
    for t in shifts:
        t = as_point(t, mu.dim)
        moved = translate(mu, t)
        est[f"shift{tuple(t.tolist())}"] = (np.exp(2j * np.pi * float(k @ t))
                                            * _coefficient(moved, k, A))
    vals = np.array(list(est.values()))
    dev = float(np.max(np.abs(vals[:, None] - vals[None, :])))
    return UniformityReport(tuple(k), n, est, dev, tol, bool(dev <= tol))
