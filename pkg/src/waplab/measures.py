"""Weighted Dirac combs on patches of R^d and the exact algebra on them.

A measure is held as a finite list of atoms ``(position, weight)`` together
with the axis-aligned box (``patch``) on which the list is complete.  Every
operation here is a finite computation; nothing is approximated except the
float rounding of positions, which is absorbed by the merge tolerance.

Conventions
-----------
* Boxes are half-open, ``[lo, hi)`` on every axis.
* Positions within ``MERGE_TOL`` (Chebyshev distance) are coalesced into one
  atom whose weight is the sum of the weights.
* Exact zero weights are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ResultTooLargeError

MERGE_TOL = 1e-9
DEFAULT_PAIR_CAP = 50_000_000


def as_point(t, dim=None):
    """Return ``t`` as a float vector, checking the dimension if given."""
    p = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
    if dim is not None and p.size != dim:
        raise DimensionMismatchError(f"expected a point in R^{dim}, got {p.size} coordinates")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


def _as_positions(positions, dim=None):
    p = np.asarray(positions, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1, 1)
    elif p.ndim == 1:
        if dim is None or dim == 1:
            p = p.reshape(-1, 1)
        else:
            p = p.reshape(-1, dim)
    if dim is not None and p.shape[1] != dim:
        raise DimensionMismatchError(f"positions have dimension {p.shape[1]}, expected {dim}")
    return p


@dataclass(frozen=True)
class Box:
    """Axis-aligned half-open box ``[lo, hi)``.

    Degenerate boxes (``lo == hi`` on some axis) are allowed; they have volume
    zero and contain no points.
    """

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise DimensionMismatchError("lo and hi must have the same length")
        if not all(math.isfinite(v) for v in lo + hi):
            raise ValueError("box bounds must be finite")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"box needs lo <= hi on every axis, got {lo}, {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def interval(cls, lo, hi):
        return cls((lo,), (hi,))

    @classmethod
    def cube(cls, lo, hi, dim):
        return cls((lo,) * dim, (hi,) * dim)

    @classmethod
    def from_pairs(cls, pairs):
        """Build from ``[[lo, hi], ...]`` (the file/config representation)."""
        pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(tuple(pairs[:, 0]), tuple(pairs[:, 1]))

    def to_pairs(self):
        return [[a, b] for a, b in zip(self.lo, self.hi)]

    @property
    def dim(self):
        return len(self.lo)

    @property
    def widths(self):
        return np.subtract(self.hi, self.lo)

    @property
    def volume(self):
        return float(np.prod(self.widths))

    @property
    def center(self):
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2

    def contains(self, points):
        """Half-open membership test, vectorised over rows of ``points``."""
        p = _as_positions(points, self.dim)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((p >= lo) & (p < hi), axis=1)

    def covers(self, other, tol=0.0):
        """True if ``other`` is a subset of this box (up to ``tol`` slack)."""
        return all(a - tol <= c and d <= b + tol
                   for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def translate(self, t):
        t = as_point(t, self.dim)
        return Box(tuple(np.add(self.lo, t)), tuple(np.add(self.hi, t)))

    def reflect(self):
        return Box(tuple(-np.asarray(self.hi)), tuple(-np.asarray(self.lo)))

    def minkowski(self, other):
        if other.dim != self.dim:
            raise DimensionMismatchError("box dimensions differ")
        return Box(tuple(np.add(self.lo, other.lo)), tuple(np.add(self.hi, other.hi)))

    def enlarge(self, margin):
        m = np.broadcast_to(np.asarray(margin, dtype=float), (self.dim,))
        return Box(tuple(np.subtract(self.lo, m)), tuple(np.add(self.hi, m)))

    def intersect(self, other):
        """Intersection box, or ``None`` if the two boxes are disjoint."""
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(lo > hi):
            return None
        return Box(tuple(lo), tuple(hi))


class DiracComb:
    """Finite weighted Dirac comb ``sum_p w_p delta_p`` known on ``patch``.

    Parameters
    ----------
    positions : array_like, shape (N,) or (N, d)
    weights : array_like of complex, shape (N,), or scalar
    patch : Box, optional
        Region on which the atom list is complete.  Defaults to the bounding
        box of the positions.
    dim : int, optional
        Needed only for an empty comb without a patch.
    merge_tol : float
        Chebyshev radius below which positions are coalesced.
    """

    __slots__ = ("positions", "weights", "patch")

    def __init__(self, positions, weights=1.0, patch=None, *, dim=None, merge_tol=MERGE_TOL,
                 _trusted=False):
        if dim is None and patch is not None:
            dim = patch.dim
        pos = _as_positions(positions, dim)
        if pos.size == 0:
            if dim is None:
                raise ValueError("an empty comb needs a patch or an explicit dim")
            pos = np.zeros((0, dim))
        w = np.broadcast_to(np.asarray(weights, dtype=complex), (pos.shape[0],)).copy()
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(w)):
            raise ValueError("positions and weights must be finite")
        if not _trusted:
            pos, w = _normalize(pos, w, merge_tol)
        if patch is None:
            if pos.shape[0] == 0:
                raise ValueError("an empty comb needs a patch")
            lo = pos.min(axis=0)
            hi = np.nextafter(pos.max(axis=0), np.inf)
            patch = Box(tuple(lo), tuple(hi))
        elif patch.dim != pos.shape[1]:
            raise DimensionMismatchError("patch and positions have different dimensions")
        elif not _trusted and pos.shape[0] and not np.all(patch.contains(pos)):
            raise ValueError("every atom must lie inside the patch")
        pos.flags.writeable = False
        w.flags.writeable = False
        self.positions = pos
        self.weights = w
        self.patch = patch

    @classmethod
    def empty(cls, patch):
        return cls(np.zeros((0, patch.dim)), np.zeros(0), patch)

    @property
    def dim(self):
        return self.positions.shape[1]

    @property
    def x(self):
        """First coordinate of every atom (the positions themselves when d = 1)."""
        return self.positions[:, 0]

    def __len__(self):
        return self.positions.shape[0]

    def __repr__(self):
        return f"DiracComb(dim={self.dim}, atoms={len(self)}, patch={self.patch.to_pairs()})"

    def with_patch(self, patch):
        return DiracComb(self.positions, self.weights, patch)

    def weight_at(self, point, tol=MERGE_TOL):
        """Weight of the atom at ``point`` (0 if there is none)."""
        p = as_point(point, self.dim)
        hit = np.all(np.abs(self.positions - p) <= tol, axis=1)
        return complex(self.weights[hit].sum())


def _normalize(pos, w, tol):
    """Sort lexicographically, merge near-coincident atoms, drop zero weights."""
    n, d = pos.shape
    if n == 0:
        return pos, w
    order = np.lexsort(pos.T[::-1])
    pos = pos[order]
    w = w[order]
    if n > 1:
        if d == 1:
            new = np.empty(n, dtype=bool)
            new[0] = True
            new[1:] = np.diff(pos[:, 0]) > tol
            labels = np.cumsum(new) - 1
        else:
            labels = _cluster_labels(pos, tol)
        if labels[-1] + 1 < n or d > 1:
            first = np.unique(labels, return_index=True)[1]
            k = first.size
            if k < n:
                w = _cluster_sums(labels, w, k)
                pos = pos[first]
    keep = w != 0
    return np.ascontiguousarray(pos[keep]), np.ascontiguousarray(w[keep])


def _cluster_sums(labels, w, k):
    """Per-cluster weight sums; clusters with more than two atoms are summed exactly."""
    out = (np.bincount(labels, weights=w.real, minlength=k)
           + 1j * np.bincount(labels, weights=w.imag, minlength=k))
    counts = np.bincount(labels, minlength=k)
    big = np.nonzero(counts > 2)[0]
    if big.size:
        order = np.argsort(labels, kind="stable")
        starts = np.concatenate([[0], np.cumsum(counts)])
        ws = w[order]
        for c in big:
            out[c] = compensated_sum(ws[starts[c]:starts[c + 1]])
    return out


def _cluster_labels(pos, tol):
    # labels follow the lexicographic order of the first atom of each cluster
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components
    from scipy.spatial import cKDTree

    n = pos.shape[0]
    pairs = cKDTree(pos).query_pairs(tol, p=np.inf, output_type="ndarray")
    if pairs.size == 0:
        return np.arange(n)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, raw = connected_components(graph, directed=False)
    first = np.full(raw.max() + 1, n)
    np.minimum.at(first, raw, np.arange(n))
    rank = np.empty_like(first)
    rank[np.argsort(first)] = np.arange(first.size)
    return rank[raw]


def _check_dims(mu, nu):
    if mu.dim != nu.dim:
        raise DimensionMismatchError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


def _ranges_to_pairs(lo_idx, hi_idx):
    """Expand per-row index ranges ``[lo, hi)`` into flat (row, column) arrays."""
    counts = np.maximum(hi_idx - lo_idx, 0)
    total = int(counts.sum())
    rows = np.repeat(np.arange(counts.size), counts)
    starts = np.repeat(lo_idx - (np.cumsum(counts) - counts), counts)
    cols = np.arange(total) + starts
    return rows, cols


def pairs_in_window(P, Q, window, cap=DEFAULT_PAIR_CAP):
    """Index pairs ``(i, j)`` with ``P[i] + Q[j]`` inside ``window``.

    ``Q`` must be sorted by its first coordinate (true for comb positions).
    """
    if P.shape[0] == 0 or Q.shape[0] == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    q0 = Q[:, 0]
    # widen by a few ulps so that rounding in P + Q never loses a pair; the
    # exact half-open test below decides membership
    slack = 1e-12 * (1.0 + np.abs(P[:, 0]).max() + np.abs(q0).max())
    lo_idx = np.searchsorted(q0, window.lo[0] - P[:, 0] - slack, "left")
    hi_idx = np.searchsorted(q0, window.hi[0] - P[:, 0] + slack, "left")
    total = int(np.maximum(hi_idx - lo_idx, 0).sum())
    if total > cap:
        raise ResultTooLargeError(f"result too large: {total} candidate pairs exceed cap {cap}")
    i, j = _ranges_to_pairs(lo_idx, hi_idx)
    keep = window.contains(P[i] + Q[j])
    return i[keep], j[keep]


def translate(mu, t):
    """Shift every atom (and the patch) by ``t``."""
    t = as_point(t, mu.dim)
    return DiracComb(mu.positions + t, mu.weights, mu.patch.translate(t), _trusted=True)


def reflect_conjugate(mu):
    """``(p, w) -> (-p, conj(w))``."""
    pos = -mu.positions
    order = np.lexsort(pos.T[::-1])
    return DiracComb(pos[order], np.conj(mu.weights)[order], mu.patch.reflect(), _trusted=True)


def restrict(mu, box):
    """Atoms of ``mu`` inside ``box``; the result's patch is ``box``."""
    if box.dim != mu.dim:
        raise DimensionMismatchError("box and comb dimensions differ")
    if mu.dim == 1:
        x = mu.x
        i0 = np.searchsorted(x, box.lo[0], "left")
        i1 = np.searchsorted(x, box.hi[0], "left")
        sel = slice(i0, i1)
        return DiracComb(mu.positions[sel], mu.weights[sel], box, _trusted=True)
    keep = box.contains(mu.positions)
    return DiracComb(mu.positions[keep], mu.weights[keep], box, _trusted=True)


def add(mu, nu):
    """``mu + nu`` on the union hull of the two patches."""
    _check_dims(mu, nu)
    patch = Box(tuple(np.minimum(mu.patch.lo, nu.patch.lo)),
                tuple(np.maximum(mu.patch.hi, nu.patch.hi)))
    return DiracComb(np.vstack([mu.positions, nu.positions]),
                     np.concatenate([mu.weights, nu.weights]), patch)


def scale(mu, a):
    a = complex(a)
    if a == 0:
        return DiracComb.empty(mu.patch)
    return DiracComb(mu.positions, mu.weights * a, mu.patch, _trusted=True)


def subtract(mu, nu):
    return add(mu, scale(nu, -1))


def variation(mu):
    """Same atoms with weights replaced by their moduli."""
    return DiracComb(mu.positions, np.abs(mu.weights), mu.patch, _trusted=True)


def convolve_finite(mu, nu, cap=DEFAULT_PAIR_CAP):
    """Convolution of two finite combs: atoms at ``p + q`` with weight ``w_p w_q``."""
    _check_dims(mu, nu)
    if len(mu) * len(nu) > cap:
        raise ResultTooLargeError(
            f"result too large: {len(mu)} x {len(nu)} atoms exceeds cap {cap}")
    pos = (mu.positions[:, None, :] + nu.positions[None, :, :]).reshape(-1, mu.dim)
    w = np.outer(mu.weights, nu.weights).ravel()
    return DiracComb(pos, w, mu.patch.minkowski(nu.patch))


def translation_bound_norm(mu, K):
    """``sup_x |mu|(x + K)`` over the represented patch (exact sweep)."""
    if K.dim != mu.dim:
        raise DimensionMismatchError("window and comb dimensions differ")
    if K.volume <= 0:
        raise ValueError("K must have positive volume")
    if len(mu) == 0:
        return 0.0
    a = np.abs(mu.weights)
    w = K.widths
    if mu.dim == 1:
        return _sweep_max(mu.x, a, w[0])
    best = 0.0
    x, y = mu.positions[:, 0], mu.positions[:, 1]
    hi_idx = np.searchsorted(x, x + w[0], "left")
    for i in range(len(mu)):
        # only x-coordinates that start a new column need a sweep
        if i and x[i] == x[i - 1]:
            continue
        sl = slice(i, hi_idx[i])
        order = np.argsort(y[sl], kind="stable")
        best = max(best, _sweep_max(y[sl][order], a[sl][order], w[1]))
    return best


def _sweep_max(coord, mass, width):
    cum = np.concatenate([[0.0], np.cumsum(mass)])
    hi = np.searchsorted(coord, coord + width, "left")
    return float(np.max(cum[hi] - cum[np.arange(coord.size)]))


# --------------------------------------------------------------------------
# Test functions


def _interp(x, bp, vals):
    if np.iscomplexobj(vals):
        return (np.interp(x, bp, vals.real, left=0.0, right=0.0)
                + 1j * np.interp(x, bp, vals.imag, left=0.0, right=0.0))
    return np.interp(x, bp, vals, left=0.0, right=0.0)


class TestFunction:
    """Compactly supported continuous piecewise-linear function.

    In one dimension it is given by strictly increasing ``breakpoints`` and the
    ``values`` there (both end values zero).  In two dimensions it is the tensor
    product of one profile per axis, see :meth:`tensor`.
    """

    __test__ = False  # keep pytest from collecting this class

    def __init__(self, breakpoints, values):
        bp = np.asarray(breakpoints, dtype=float)
        vals = np.asarray(values)
        vals = vals.astype(complex if np.iscomplexobj(vals) else float)
        if bp.ndim != 1 or bp.size < 2 or bp.shape != vals.shape:
            raise ValueError("breakpoints and values must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if vals[0] != 0 or vals[-1] != 0:
            raise ValueError("test functions vanish at both ends of their support")
        self.profiles = ((bp, vals),)

    @classmethod
    def tensor(cls, *factors):
        """Tensor product ``f1(x1) f2(x2) ...`` of one-dimensional test functions."""
        out = cls.__new__(cls)
        out.profiles = tuple(p for f in factors for p in f.profiles)
        return out

    @classmethod
    def tent(cls, center=0.0, halfwidth=1.0, height=1.0, dim=1):
        c = as_point(center)
        if c.size == 1 and dim > 1:
            c = np.repeat(c, dim)
        f = [cls([ci - halfwidth, ci, ci + halfwidth], [0.0, height if i == 0 else 1.0, 0.0])
             for i, ci in enumerate(c)]
        return f[0] if len(f) == 1 else cls.tensor(*f)

    @property
    def dim(self):
        return len(self.profiles)

    @property
    def support(self):
        return Box(tuple(bp[0] for bp, _ in self.profiles), tuple(bp[-1] for bp, _ in self.profiles))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0 or (x.ndim == 1 and self.dim > 1 and x.size == self.dim)
        X = _as_positions(x, self.dim)
        out = None
        for axis, (bp, vals) in enumerate(self.profiles):
            v = _interp(X[:, axis], bp, vals)
            out = v if out is None else out * v
        return out[0] if scalar else out

    def integral(self):
        out = 1.0
        for bp, vals in self.profiles:
            out = out * np.sum(np.diff(bp) * (vals[1:] + vals[:-1]) / 2)
        return out

    def mirror(self):
        """``x -> f(-x)``."""
        out = TestFunction.__new__(TestFunction)
        out.profiles = tuple((-bp[::-1], vals[::-1]) for bp, vals in self.profiles)
        return out

    def reflect(self):
        """``x -> conj(f(-x))``."""
        out = self.mirror()
        out.profiles = tuple((bp, np.conj(vals)) for bp, vals in out.profiles)
        return out

    def scaled(self, a):
        out = TestFunction.__new__(TestFunction)
        first = ((self.profiles[0][0], self.profiles[0][1] * a),)
        out.profiles = first + self.profiles[1:]
        return out

    def shifted(self, t):
        t = as_point(t, self.dim)
        out = TestFunction.__new__(TestFunction)
        out.profiles = tuple((bp + ti, vals) for (bp, vals), ti in zip(self.profiles, t))
        return out

    def convolve(self, other):
        return ConvolvedTestFunction(self, other)

    def __repr__(self):
        return f"TestFunction(dim={self.dim}, support={self.support.to_pairs()})"


def _pl_convolve(bf, vf, bg, vg, x, chunk=4096):
    """Exact ``(f*g)(x)`` for piecewise-linear profiles.

    Between consecutive points of ``bf`` and ``x - bg`` the integrand
    ``f(y) g(x - y)`` is a quadratic, so Simpson's rule is exact there.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    complex_out = np.iscomplexobj(vf) or np.iscomplexobj(vg)
    out = np.empty(x.size, dtype=complex if complex_out else float)
    for s in range(0, x.size, chunk):
        xs = x[s:s + chunk, None]
        lo = np.maximum(bf[0], xs - bg[-1])
        hi = np.minimum(bf[-1], xs - bg[0])
        Y = np.sort(np.concatenate([np.broadcast_to(bf, (xs.shape[0], bf.size)), xs - bg], axis=1),
                    axis=1)
        Y = np.clip(Y, lo, np.maximum(lo, hi))
        a, b = Y[:, :-1], Y[:, 1:]
        m = (a + b) / 2

        def F(y):
            return _interp(y, bf, vf) * _interp(xs - y, bg, vg)

        out[s:s + chunk] = np.sum((b - a) / 6 * (F(a) + 4 * F(m) + F(b)), axis=1)
    return out


class ConvolvedTestFunction:
    """``f * g`` for two test functions, evaluated exactly (piecewise cubic)."""

    def __init__(self, f, g):
        if f.dim != g.dim:
            raise DimensionMismatchError("test function dimensions differ")
        self.f = f
        self.g = g

    @property
    def dim(self):
        return self.f.dim

    @property
    def support(self):
        return self.f.support.minkowski(self.g.support)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0 or (x.ndim == 1 and self.dim > 1 and x.size == self.dim)
        X = _as_positions(x, self.dim)
        out = None
        for axis, ((bf, vf), (bg, vg)) in enumerate(zip(self.f.profiles, self.g.profiles)):
            v = _pl_convolve(bf, vf, bg, vg, X[:, axis])
            out = v if out is None else out * v
        return out[0] if scalar else out


# --------------------------------------------------------------------------
# Pairing measures with functions


def _support_pairs(mu, x_query, support, cap):
    """(query index, atom index) for atoms ``p`` with ``x - p`` in the closed support."""
    x0 = mu.x
    lo_idx = np.searchsorted(x0, x_query[:, 0] - support.hi[0], "left")
    hi_idx = np.searchsorted(x0, x_query[:, 0] - support.lo[0], "right")
    total = int(np.maximum(hi_idx - lo_idx, 0).sum())
    if total > cap:
        raise ResultTooLargeError(f"result too large: {total} evaluation pairs exceed cap {cap}")
    return _ranges_to_pairs(lo_idx, hi_idx)


def smooth(c, mu, x, cap=DEFAULT_PAIR_CAP):
    """``(c * mu)(x) = sum_p w_p c(x - p)``, vectorised over ``x``.

    ``c`` is any callable with a ``support`` box (a :class:`TestFunction` or a
    :class:`ConvolvedTestFunction`).
    """
    if c.dim != mu.dim:
        raise DimensionMismatchError("test function and comb dimensions differ")
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0 or (xa.ndim == 1 and mu.dim > 1 and xa.size == mu.dim)
    X = _as_positions(xa, mu.dim)
    out = np.zeros(X.shape[0], dtype=complex)
    if len(mu):
        rows, cols = _support_pairs(mu, X, c.support, cap)
        if rows.size:
            vals = c(X[rows] - mu.positions[cols]) * mu.weights[cols]
            out = (np.bincount(rows, weights=vals.real, minlength=X.shape[0])
                   + 1j * np.bincount(rows, weights=vals.imag, minlength=X.shape[0]))
    return complex(out[0]) if scalar else out


def apply(mu, c):
    """``mu(c) = sum_p w_p c(p)``."""
    if len(mu) == 0:
        return 0j
    vals = np.asarray(c(mu.positions if mu.dim > 1 else mu.x), dtype=complex) * mu.weights
    return complex(math.fsum(vals.real), math.fsum(vals.imag))


def positive_definiteness_defect(gamma, f):
    """``gamma(f * f~)``; non-negative (up to rounding) for positive-definite ``gamma``."""
    return apply(gamma, f.convolve(f.reflect()))


class SmoothedComb:
    """The function ``x -> (c * mu)(x)`` for a piecewise-linear ``c`` in one dimension.

    It is piecewise linear with breakpoints at ``p + b`` (``p`` an atom, ``b`` a
    breakpoint of ``c``), which lets averages be integrated exactly.
    """

    degree = 1

    def __init__(self, c, mu):
        if mu.dim != 1 or c.dim != 1:
            raise DimensionMismatchError("SmoothedComb is one-dimensional")
        self.c = c
        self.mu = mu

    def __call__(self, x):
        return smooth(self.c, self.mu, x)

    def breakpoints(self, a, b):
        bp = self.c.profiles[0][0]
        lo = np.searchsorted(self.mu.x, a - bp[-1], "left")
        hi = np.searchsorted(self.mu.x, b - bp[0], "right")
        pts = (self.mu.x[lo:hi, None] + bp[None, :]).ravel()
        pts = pts[(pts > a) & (pts < b)]
        return np.unique(np.concatenate([[a, b], pts]))


def compensated_sum(values):
    """Correctly rounded sum of a complex array (Shewchuk summation via ``math.fsum``)."""
    v = np.asarray(values, dtype=complex)
    return complex(math.fsum(v.real), math.fsum(v.imag))
