"""Van Hove box families, K-boundaries, and means of combs and functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatchError, NonFiniteSampleError, PatchTooSmallError
from .measures import Box, as_point, compensated_sum, restrict

DEFAULT_STEP_H = 1e-2
DEFAULT_THRESHOLD = 1e-3


class KBoundary(NamedTuple):
    """The K-boundary of a box ``A``: ``((A + K) \\ A)`` together with ``A \\ (A erode K)``.

    ``outer`` is the box ``A + K`` and ``inner`` the erosion ``{x : x + K in A}``
    (``None`` when it is empty).
    """

    outer: Box
    inner: Box | None
    volume: float


def _overlap(a, b):
    c = a.intersect(b)
    return 0.0 if c is None else c.volume


def k_boundary(A, K):
    if A.dim != K.dim:
        raise DimensionMismatchError("A and K have different dimensions")
    outer = A.minkowski(K)
    lo = np.subtract(A.lo, K.lo)
    hi = np.subtract(A.hi, K.hi)
    inner = Box(tuple(lo), tuple(hi)) if np.all(lo <= hi) else None
    vol = outer.volume - _overlap(A, outer)
    vol += A.volume - (0.0 if inner is None else _overlap(A, inner))
    return KBoundary(outer, inner, vol)


@dataclass(frozen=True)
class VanHoveFamily:
    """Boxes ``A_n = t_n + [-n s, n s)^d``.

    ``kind="centered"`` has ``t_n = 0``; ``kind="drifting"`` moves the center to
    ``ceil(sqrt(n))`` along ``drift_axis``.
    """

    kind: str = "centered"
    step: float = 1.0
    dim: int = 1
    drift_axis: int = 0

    def __post_init__(self):
        if self.kind not in ("centered", "drifting"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.dim < 1 or not 0 <= self.drift_axis < self.dim:
            raise ValueError("bad dim / drift_axis")

    @classmethod
    def from_config(cls, cfg, dim=1):
        cfg = dict(cfg)
        return cls(kind=cfg.get("kind", "centered"), step=float(cfg.get("step", 1.0)),
                   dim=int(cfg.get("dim", dim)), drift_axis=int(cfg.get("driftAxis", 0)))

    def to_config(self):
        cfg = {"kind": self.kind, "step": self.step}
        if self.kind == "drifting":
            cfg["driftAxis"] = self.drift_axis
        return cfg

    def radius(self, n):
        return n * self.step

    def center(self, n):
        c = np.zeros(self.dim)
        if self.kind == "drifting":
            c[self.drift_axis] = math.ceil(math.sqrt(n))
        return c

    def box(self, n):
        if n < 1:
            raise ValueError("index n must be >= 1")
        r = self.radius(n)
        c = self.center(n)
        return Box(tuple(c - r), tuple(c + r))

    def volume(self, n):
        return self.box(n).volume

    def boundary_ratio(self, n, K):
        A = self.box(n)
        return k_boundary(A, K).volume / A.volume


@dataclass(frozen=True)
class MeanEstimate:
    value: complex
    n: int
    cauchy_gap: float


def require_cover(patch, box, what="averaging box"):
    if not patch.covers(box):
        raise PatchTooSmallError(
            f"patch too small: {what} {box.to_pairs()} is not inside patch {patch.to_pairs()}",
            required=box)


def _coarse_index(n):
    if n < 2:
        raise ValueError("n must be >= 2 (the Cauchy gap compares against n // 2)")
    return n // 2


def comb_average(mu, A, weights=None):
    """``(1/vol A) * sum of weights of atoms in A`` with compensated summation."""
    require_cover(mu.patch, A)
    sub = restrict(mu, A)
    w = sub.weights if weights is None else weights(sub)
    return compensated_sum(w) / A.volume


def mean_of_comb(mu, family, n):
    """Estimate of the mean ``M(mu)`` at index ``n``."""
    if mu.dim != family.dim:
        raise DimensionMismatchError("comb and family dimensions differ")
    m = _coarse_index(n)
    v = comb_average(mu, family.box(n))
    v2 = comb_average(mu, family.box(m))
    return MeanEstimate(v, n, abs(v - v2))


# --------------------------------------------------------------------------
# Functions with known breakpoints (integrated exactly)


class AbsOf:
    """``|f|`` for a piecewise-linear ``f``; real zero crossings become breakpoints."""

    def __init__(self, f):
        self.f = f
        self.degree = f.degree

    def __call__(self, x):
        return np.abs(self.f(x))

    def breakpoints(self, a, b):
        bp = self.f.breakpoints(a, b)
        v = np.asarray(self.f(bp))
        if np.iscomplexobj(v):
            if np.any(v.imag != 0):
                # |f| of a complex linear piece is not polynomial
                self.degree = None
                return bp
            v = v.real
        cross = (v[:-1] * v[1:]) < 0
        if np.any(cross):
            a0, b0 = bp[:-1][cross], bp[1:][cross]
            va, vb = v[:-1][cross], v[1:][cross]
            roots = a0 + (b0 - a0) * va / (va - vb)
            bp = np.unique(np.concatenate([bp, roots]))
        return bp


class ProductOf:
    def __init__(self, f, g):
        self.f = f
        self.g = g
        self.degree = f.degree + g.degree

    def __call__(self, x):
        return self.f(x) * self.g(x)

    def breakpoints(self, a, b):
        return np.union1d(self.f.breakpoints(a, b), self.g.breakpoints(a, b))


class ReflectedAt:
    """``s -> g(t - s)``."""

    def __init__(self, g, t):
        self.g = g
        self.t = float(t)
        self.degree = g.degree

    def __call__(self, s):
        return self.g(self.t - np.asarray(s, dtype=float))

    def breakpoints(self, a, b):
        return np.sort(self.t - self.g.breakpoints(self.t - b, self.t - a))


def _exact_integral(f, a, b):
    bp = f.breakpoints(a, b)
    if getattr(f, "degree", None) is None or f.degree > 3:
        # fall back to subdivided Simpson on each piece
        bp = np.unique(np.concatenate([np.linspace(x0, x1, 9) for x0, x1 in zip(bp[:-1], bp[1:])]))
    lo, hi = bp[:-1], bp[1:]
    vals = np.asarray(f(np.concatenate([lo, (lo + hi) / 2, hi])), dtype=complex)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteSampleError("function returned non-finite values")
    k = lo.size
    fa, fm, fb = vals[:k], vals[k:2 * k], vals[2 * k:]
    return compensated_sum((hi - lo) / 6 * (fa + 4 * fm + fb))


def _trapezoid(f, box, h, chunk=1_000_000):
    if box.dim == 1:
        a, b = box.lo[0], box.hi[0]
        N = max(1, math.ceil((b - a) / h))
        parts = []
        for s in range(0, N + 1, chunk):
            idx = np.arange(s, min(N + 1, s + chunk))
            x = a + (b - a) * idx / N
            v = np.asarray(f(x), dtype=complex)
            if not np.all(np.isfinite(v)):
                raise NonFiniteSampleError("function returned non-finite values")
            wts = np.ones(idx.size)
            wts[idx == 0] = 0.5
            wts[idx == N] = 0.5
            parts.append(v * wts)
        total = compensated_sum(np.concatenate(parts))
        return total * (b - a) / N
    grids = []
    for a, b in zip(box.lo, box.hi):
        N = max(1, math.ceil((b - a) / h))
        x = np.linspace(a, b, N + 1)
        w = np.full(N + 1, (b - a) / N)
        w[0] = w[-1] = (b - a) / (2 * N)
        grids.append((x, w))
    mesh = np.meshgrid(*[g[0] for g in grids], indexing="ij")
    wmesh = np.prod(np.meshgrid(*[g[1] for g in grids], indexing="ij"), axis=0)
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    v = np.asarray(f(pts), dtype=complex)
    if not np.all(np.isfinite(v)):
        raise NonFiniteSampleError("function returned non-finite values")
    return compensated_sum(v * wmesh.ravel())


def integrate(f, box, h=DEFAULT_STEP_H):
    """Integral of ``f`` over ``box``.

    Exact (piecewise Simpson) when ``f`` exposes ``breakpoints``; otherwise the
    composite trapezoid rule with step about ``h``.
    """
    if hasattr(f, "breakpoints") and box.dim == 1:
        return _exact_integral(f, box.lo[0], box.hi[0])
    return _trapezoid(f, box, h)


def mean_of_function(f, family, n, shift=None, h=DEFAULT_STEP_H):
    """Estimate of ``M(f)`` as the average of ``f`` over ``shift + A_n``."""
    shift = np.zeros(family.dim) if shift is None else as_point(shift, family.dim)
    m = _coarse_index(n)
    A = family.box(n).translate(shift)
    A2 = family.box(m).translate(shift)
    v = integrate(f, A, h) / A.volume
    v2 = integrate(f, A2, h) / A2.volume
    return MeanEstimate(v, n, abs(v - v2))


# --------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    ns: list
    gaps: list
    monotone: bool
    exponent: float
    converged: bool
    threshold: float = DEFAULT_THRESHOLD
    values: list = field(default_factory=list)


def convergence_diagnostic(estimates, threshold=DEFAULT_THRESHOLD):
    """Summarise a run of estimates at increasing ``n``.

    ``exponent`` is the least-squares slope of ``log gap`` against ``log n``
    (``-inf`` when every gap is zero).  A run counts as converged when the last
    gap is below ``threshold`` and has decreased over the run (or is zero).
    """
    est = list(estimates)
    if len(est) < 2:
        raise ValueError("need at least two estimates")
    ns = np.array([e.n for e in est], dtype=float)
    if np.any(np.diff(ns) <= 0):
        raise ValueError("estimates must have increasing n")
    gaps = np.array([e.cauchy_gap for e in est])
    monotone = bool(np.all(np.diff(gaps) <= 0))
    pos = gaps > 0
    if pos.sum() >= 2:
        exponent = float(np.polyfit(np.log(ns[pos]), np.log(gaps[pos]), 1)[0])
    elif not pos.any():
        exponent = -math.inf
    else:
        exponent = math.nan
    last = gaps[-1]
    converged = bool(last < threshold and (last == 0 or last < gaps[0]))
    return ConvergenceReport(ns.astype(int).tolist(), gaps.tolist(), monotone, exponent,
                             converged, threshold, [e.value for e in est])
