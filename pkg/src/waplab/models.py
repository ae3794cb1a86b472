"""Generators for the example point sets and patch-level point-set certifiers.

Supported families
------------------
``lattice``           a Z + b (optionally weighted)
``crystal``           L + F for a lattice L and a finite set F
``cps``               cut-and-project (model) sets; ``fibonacci`` is built in
``perturbedInteger``  {n + 1/n : n != 0} together with 0
``nullPair``          sum over m != 0 of delta_{m + 1/m} - delta_m
``mixed2D``           {(n + 1/n, 2m)} together with {(n sqrt 2, 2m + 1)}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, ResultTooLargeError
from .measures import MERGE_TOL, Box, DiracComb, _normalize, _ranges_to_pairs, scale

TAU = (1 + math.sqrt(5)) / 2
SQRT2 = math.sqrt(2)
DEFAULT_ENUM_CAP = 20_000_000
FLC_TOL = 1e-6
RESOLVED = 1000


def _box_for(patch, dim):
    if patch.dim != dim:
        raise DimensionMismatchError(f"patch must be {dim}-dimensional")
    return patch


def gen_lattice(a, b, patch, weight=1.0):
    """Atoms of weight ``weight`` at every point of ``a Z + b`` inside a 1-D patch."""
    if not a > 0:
        raise ValueError(f"lattice spacing must be positive (a ≤ 0 given: a={a})")
    _box_for(patch, 1)
    lo, hi = patch.lo[0], patch.hi[0]
    j = np.arange(math.floor((lo - b) / a) - 1, math.ceil((hi - b) / a) + 2)
    x = a * j + b
    x = x[(x >= lo) & (x < hi)]
    return DiracComb(x, weight, patch)


def _lattice_points_in_box(B, box, offset=None, cap=DEFAULT_ENUM_CAP):
    """All points ``B c + offset`` (integer ``c``) inside ``box``, by coefficient bounds."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    D = B.shape[0]
    offset = np.zeros(D) if offset is None else np.asarray(offset, dtype=float)
    Binv = np.linalg.inv(B)
    lo = np.asarray(box.lo) - offset
    hi = np.asarray(box.hi) - offset
    cmin = np.sum(np.minimum(Binv * lo, Binv * hi), axis=1)
    cmax = np.sum(np.maximum(Binv * lo, Binv * hi), axis=1)
    ranges = [np.arange(math.floor(a) - 1, math.ceil(b) + 2) for a, b in zip(cmin, cmax)]
    # eliminate the coefficient with the widest range, enumerate the others
    e = int(np.argmax([r.size for r in ranges]))
    free = [i for i in range(D) if i != e]
    size = math.prod(ranges[i].size for i in free) if free else 1
    if size > cap:
        raise ResultTooLargeError(f"coefficient bound overflow: {size} combinations exceed cap {cap}")
    if free:
        grids = np.meshgrid(*[ranges[i] for i in free], indexing="ij")
        C = np.stack([g.ravel() for g in grids], axis=1).astype(float)
        partial = C @ B[:, free].T
    else:
        C = np.zeros((1, 0))
        partial = np.zeros((1, D))
    be = B[:, e]
    low = np.full(C.shape[0], -np.inf)
    high = np.full(C.shape[0], np.inf)
    for r in range(D):
        if be[r] == 0:
            ok = (partial[:, r] >= lo[r]) & (partial[:, r] < hi[r])
            low[~ok] = np.inf
            continue
        u = (lo[r] - partial[:, r]) / be[r]
        v = (hi[r] - partial[:, r]) / be[r]
        low = np.maximum(low, np.minimum(u, v))
        high = np.minimum(high, np.maximum(u, v))
    finite = np.isfinite(low) & np.isfinite(high) & (high >= low)
    lo_idx = np.where(finite, np.floor(np.where(finite, low, 0)) - 1, 0).astype(np.int64)
    hi_idx = np.where(finite, np.ceil(np.where(finite, high, 0)) + 2, 0).astype(np.int64)
    total = int(np.maximum(hi_idx - lo_idx, 0).sum())
    if total > cap:
        raise ResultTooLargeError(f"coefficient bound overflow: {total} candidates exceed cap {cap}")
    rows, ce = _ranges_to_pairs(lo_idx, hi_idx)
    ce = ce.astype(float)
    Z = partial[rows] + ce[:, None] * be[None, :] + offset
    return Z[box.contains(Z)]


def gen_crystal(L, F, patch, weight=1.0):
    """``delta_L * delta_F`` on the patch; coincident points merge (weights add)."""
    d = patch.dim
    L = np.asarray(L, dtype=float).reshape(d, d)
    if abs(np.linalg.det(L)) < 1e-12:
        raise ValueError("degenerate lattice basis")
    F = np.asarray(F, dtype=float).reshape(-1, d)
    if F.shape[0] == 0:
        raise ValueError("F must be nonempty")
    pts = [_lattice_points_in_box(L, patch, offset=f) for f in F]
    return DiracComb(np.vstack(pts), weight, patch)


@dataclass(frozen=True)
class CPSScheme:
    """Cut-and-project data: lattice in R^d x R^m (basis as columns) and a window.

    ``window`` is a tuple of disjoint boxes in R^m (a box or a union of intervals).
    """

    phys_dim: int
    internal_dim: int
    basis: tuple
    window: tuple

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        D = self.phys_dim + self.internal_dim
        if B.shape != (D, D):
            raise ValueError(f"basis must be {D}x{D}")
        if abs(np.linalg.det(B)) < 1e-12:
            raise ValueError("lattice basis is degenerate")
        w = self.window if isinstance(self.window, tuple) else (self.window,)
        if any(b.dim != self.internal_dim for b in w):
            raise DimensionMismatchError("window boxes must live in the internal space")
        object.__setattr__(self, "basis", tuple(map(tuple, B)))
        object.__setattr__(self, "window", w)

    @property
    def matrix(self):
        return np.asarray(self.basis)

    @property
    def window_volume(self):
        return sum(b.volume for b in self.window)

    @property
    def density(self):
        return self.window_volume / abs(np.linalg.det(self.matrix))

    def in_window(self, y):
        y = np.asarray(y, dtype=float).reshape(-1, self.internal_dim)
        ok = np.zeros(y.shape[0], dtype=bool)
        for b in self.window:
            ok |= b.contains(y)
        return ok

    def with_window(self, window):
        return CPSScheme(self.phys_dim, self.internal_dim, self.basis,
                         window if isinstance(window, tuple) else (window,))

    def to_dict(self):
        return {"physDim": self.phys_dim, "internalDim": self.internal_dim,
                "basis": [list(r) for r in self.basis],
                "window": [b.to_pairs() for b in self.window]}

    @classmethod
    def from_dict(cls, d):
        if d == "fibonacci" or d.get("name") == "fibonacci":
            return fibonacci_scheme()
        win = d["window"]
        if np.asarray(win, dtype=float).ndim == 2:
            win = [win]
        return cls(int(d["physDim"]), int(d["internalDim"]), tuple(map(tuple, d["basis"])),
                   tuple(Box.from_pairs(w) for w in win))


def fibonacci_scheme():
    """Lattice spanned by (1, 1) and (tau, 1 - tau), window [-1, tau - 1)."""
    return CPSScheme(1, 1, ((1.0, TAU), (1.0, 1.0 - TAU)), (Box.interval(-1.0, TAU - 1.0),))


def gen_cut_project(scheme, patch, cap=DEFAULT_ENUM_CAP):
    """Model set: physical parts of lattice points whose internal part is in the window."""
    d = scheme.phys_dim
    _box_for(patch, d)
    if scheme.window_volume <= 0:
        return DiracComb.empty(patch)
    B = scheme.matrix
    pts = []
    for w in scheme.window:
        region = Box(patch.lo + w.lo, patch.hi + w.hi)
        pts.append(_lattice_points_in_box(B, region, cap=cap))
    Z = np.vstack(pts)
    Z = Z[patch.contains(Z[:, :d]) & scheme.in_window(Z[:, d:])]
    phys = Z[:, :d]
    if phys.shape[0] > 1:
        _check_injective(phys)
    return DiracComb(phys, 1.0, patch)


def _check_injective(phys):
    if phys.shape[1] == 1:
        x = np.sort(phys[:, 0])
        gap = np.min(np.diff(x))
    else:
        from scipy.spatial import cKDTree
        gap = cKDTree(phys).query(phys, k=2, p=np.inf)[0][:, 1].min()
    if gap <= MERGE_TOL:
        raise ValueError("projection collision: two lattice points project within merge tolerance")


def _perturbed_positions(lo, hi):
    n = np.arange(math.floor(lo) - 3, math.ceil(hi) + 3)
    n = n[n != 0].astype(float)
    x = n + 1.0 / n
    return n, x


def gen_perturbed_integer(patch):
    """``{n + 1/n : n != 0}`` together with ``0``."""
    _box_for(patch, 1)
    _, x = _perturbed_positions(*patch.lo, *patch.hi)
    x = np.concatenate([x, [0.0]])
    return DiracComb(x[patch.contains(x)], 1.0, patch)


def gen_null_pair(patch):
    """``sum_{m != 0} (delta_{m + 1/m} - delta_m)`` restricted to the patch."""
    _box_for(patch, 1)
    m, x = _perturbed_positions(*patch.lo, *patch.hi)
    pos = np.concatenate([x, m])
    w = np.concatenate([np.ones(x.size), -np.ones(m.size)])
    keep = patch.contains(pos)
    return DiracComb(pos[keep], w[keep], patch)


def _rows(patch, parity):
    ylo, yhi = patch.lo[1], patch.hi[1]
    m = np.arange(math.floor(ylo / 2) - 1, math.ceil(yhi / 2) + 2)
    y = 2.0 * m + parity
    return y[(y >= ylo) & (y < yhi)]


def _grid(xs, ys):
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def gen_mixed_2d(patch):
    """``{(n + 1/n, 2m) : n != 0}`` together with ``{(n sqrt 2, 2m + 1)}``."""
    _box_for(patch, 2)
    _, xe = _perturbed_positions(patch.lo[0], patch.hi[0])
    k = np.arange(math.floor(patch.lo[0] / SQRT2) - 1, math.ceil(patch.hi[0] / SQRT2) + 2)
    pts = np.vstack([_grid(xe, _rows(patch, 0)), _grid(k * SQRT2, _rows(patch, 1))])
    return DiracComb(pts[patch.contains(pts)], 1.0, patch)


def gen_mixed_2d_strong(patch):
    """``[Z x 2Z]`` together with ``[Z sqrt 2 x (2Z + 1)]``."""
    _box_for(patch, 2)
    j = np.arange(math.floor(patch.lo[0]) - 1, math.ceil(patch.hi[0]) + 2).astype(float)
    k = np.arange(math.floor(patch.lo[0] / SQRT2) - 1, math.ceil(patch.hi[0] / SQRT2) + 2)
    pts = np.vstack([_grid(j, _rows(patch, 0)), _grid(k * SQRT2, _rows(patch, 1))])
    return DiracComb(pts[patch.contains(pts)], 1.0, patch)


# --------------------------------------------------------------------------
# Descriptors

TAGS = ("lattice", "crystal", "cps", "perturbedInteger", "nullPair", "mixed2D")


@dataclass
class ModelDescriptor:
    """A model family (``tag``) with its per-tag parameters.

    ``lattice``: ``a``, ``b``, optional ``weight``.  ``crystal``: ``basis``
    (d x d, columns), ``points``, optional ``weight``.  ``cps``: ``scheme``
    (``"fibonacci"`` or an explicit scheme dict).  The other tags take no
    parameters.  ``patch`` (``[[lo, hi], ...]``) is optional.
    """

    tag: str
    params: dict = field(default_factory=dict)
    patch: Box | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown model tag {self.tag!r}; expected one of {TAGS}")
        if self.tag == "lattice" and not float(self.params.get("a", 1.0)) > 0:
            raise ValueError(f"lattice spacing must be positive (a ≤ 0 given: a={self.params['a']})")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        tag = d.pop("tag")
        if tag == "fibonacci":
            tag, d = "cps", {**d, "scheme": "fibonacci"}
        patch = d.pop("patch", None)
        return cls(tag, d, None if patch is None else Box.from_pairs(patch))

    def to_dict(self):
        out = {"tag": self.tag, **self.params}
        if self.patch is not None:
            out["patch"] = self.patch.to_pairs()
        return out

    @property
    def dim(self):
        if self.tag == "mixed2D":
            return 2
        if self.tag == "crystal":
            return int(np.asarray(self.params["basis"], dtype=float).reshape(-1).size ** 0.5)
        if self.tag == "cps":
            return self.scheme().phys_dim
        return 1

    def scheme(self):
        s = self.params.get("scheme", "fibonacci")
        return CPSScheme.from_dict(s)

    def build(self, patch=None):
        patch = patch or self.patch
        if patch is None:
            raise ValueError("model needs a patch")
        p = self.params
        if self.tag == "lattice":
            return gen_lattice(float(p.get("a", 1.0)), float(p.get("b", 0.0)), patch,
                               complex(p.get("weight", 1.0)))
        if self.tag == "crystal":
            return gen_crystal(p["basis"], p["points"], patch, complex(p.get("weight", 1.0)))
        if self.tag == "cps":
            mu = gen_cut_project(self.scheme(), patch)
            w = complex(p.get("weight", 1.0))
            return mu if w == 1 else scale(mu, w)
        if self.tag == "perturbedInteger":
            return gen_perturbed_integer(patch)
        if self.tag == "nullPair":
            return gen_null_pair(patch)
        return gen_mixed_2d(patch)


# --------------------------------------------------------------------------
# Certification


@dataclass
class CertificationReport:
    """Patch-level verdicts; a finite patch can support FLC or Meyer, not prove them."""

    atoms: int
    uniformly_discrete: bool
    r: float
    relatively_dense: bool
    R: float
    flc: bool
    difference_clusters: int
    difference_clusters_core: int
    meyer: bool
    difference_separation: float
    difference_separation_core: float
    cutoff: float
    meyer_cutoff: float
    label: str = "patch-certified"


def _difference_vectors(pos, cutoff):
    """All ``p - q`` with ``|p - q| <= cutoff`` (Euclidean), including 0 and both signs."""
    if pos.shape[1] == 1:
        x = pos[:, 0]
        hi = np.searchsorted(x, x + cutoff * (1 + 1e-12), "right")
        i, j = _ranges_to_pairs(np.arange(x.size), hi)
        d = x[j] - x[i]
        d = d[d <= cutoff + FLC_TOL]
        return np.concatenate([d, -d[d > 0]])[:, None]
    from scipy.spatial import cKDTree
    pairs = cKDTree(pos).query_pairs(cutoff + FLC_TOL, output_type="ndarray")
    if pairs.size == 0:
        return np.zeros((1, pos.shape[1]))
    d = pos[pairs[:, 1]] - pos[pairs[:, 0]]
    return np.vstack([np.zeros((1, pos.shape[1])), d, -d])


def _clusters(vectors, tol):
    """Representatives of difference clusters.

    In one dimension clusters are formed greedily from the left: a value more
    than ``tol`` above the current leader opens a new cluster, so accumulating
    sequences are not chained into a single cluster.
    """
    v = np.asarray(vectors, dtype=float)
    if v.shape[1] > 1:
        reps, _ = _normalize(v, np.ones(len(v), dtype=complex), tol)
        return reps
    x = np.sort(v[:, 0])
    leaders = []
    current = -math.inf
    # only values that are far from their left neighbour can be ambiguous
    for val in x[np.concatenate([[True], np.diff(x) > 0])]:
        if val - current > tol:
            leaders.append(val)
            current = val
    return np.asarray(leaders)[:, None]


def _min_separation(reps):
    if reps.shape[0] < 2:
        return math.inf
    if reps.shape[1] == 1:
        return float(np.min(np.diff(reps[:, 0])))
    from scipy.spatial import cKDTree
    return float(cKDTree(reps).query(reps, k=2)[0][:, 1].min())


def _covering_radius(pos, patch, margin):
    lo = np.asarray(patch.lo) + margin
    hi = np.asarray(patch.hi) - margin
    if np.any(lo >= hi):
        return math.inf
    if pos.shape[1] == 1:
        x = pos[:, 0]
        mids = (x[1:] + x[:-1]) / 2
        inside = (mids >= lo[0]) & (mids < hi[0])
        cand = list((np.diff(x) / 2)[inside])
        for e in (lo[0], hi[0]):
            cand.append(np.min(np.abs(x - e)))
        return float(max(cand))
    from scipy.spatial import cKDTree
    tree = cKDTree(pos)
    step = max(np.min(tree.query(pos, k=2)[0][:, 1]) / 4, np.prod(hi - lo) ** 0.5 / 1000)
    axes = [np.arange(a, b, step) for a, b in zip(lo, hi)]
    grid = _grid(*axes)
    return float(tree.query(grid)[0].max())


def _core(patch):
    c = patch.center
    half = patch.widths / 4
    return Box(tuple(c - half), tuple(c + half))


def certify_point_set(mu, cutoff=None, meyer_cutoff=None, margin=None, tol=FLC_TOL):
    """Uniform discreteness, relative denseness, FLC and Meyer verdicts on a patch.

    FLC is supported when the distinct difference vectors of length at most
    ``cutoff`` found on the central half of the patch already exhaust those of
    the whole patch, and distinct differences are separated by more than
    ``RESOLVED * tol`` (so they are not an accumulating sequence smeared at
    the tolerance scale).  Meyer is supported when, in addition, the smallest
    separation between distinct differences up to ``meyer_cutoff`` does not
    shrink from the central half to the whole patch.
    """
    if len(mu) == 0:
        raise ValueError("cannot certify an empty comb")
    pos = mu.positions
    d = mu.dim
    if len(mu) > 1:
        if d == 1:
            r = float(np.min(np.diff(pos[:, 0])))
        else:
            from scipy.spatial import cKDTree
            r = float(cKDTree(pos).query(pos, k=2)[0][:, 1].min())
    else:
        r = math.inf
    spacing = (mu.patch.volume / len(mu)) ** (1 / d)
    if margin is None:
        full_R = _covering_radius(pos, mu.patch, 0.0)
        margin = full_R
    R = _covering_radius(pos, mu.patch, margin)
    cutoff = 5 * spacing if cutoff is None else float(cutoff)
    meyer_cutoff = 4 * cutoff if meyer_cutoff is None else float(meyer_cutoff)

    core = _core(mu.patch)
    core_pos = pos[core.contains(pos)]

    reps = _clusters(_difference_vectors(pos, cutoff), tol)
    n_full = reps.shape[0]
    n_core = _clusters(_difference_vectors(core_pos, cutoff), tol).shape[0] if len(core_pos) else 0
    # clusters packed at the tolerance scale mean the difference set accumulates
    flc = n_full == n_core and _min_separation(reps) > RESOLVED * tol

    s_full = _min_separation(_clusters(_difference_vectors(pos, meyer_cutoff), tol))
    s_core = (_min_separation(_clusters(_difference_vectors(core_pos, meyer_cutoff), tol))
              if len(core_pos) else math.inf)
    ud = bool(r > MERGE_TOL)
    rd = bool(math.isfinite(R))
    meyer = bool(flc and rd and s_full > RESOLVED * tol and s_full >= s_core - tol)
    return CertificationReport(len(mu), ud, r, rd, R, bool(flc), int(n_full), int(n_core),
                               meyer, s_full, s_core, cutoff, meyer_cutoff)


# --------------------------------------------------------------------------
# Peak candidates


def _dual_points(B, bounds, cap=DEFAULT_ENUM_CAP):
    """Points of the dual lattice ``B^{-T} Z^D`` inside the box ``[-bounds, bounds]``."""
    Bd = np.linalg.inv(np.asarray(B, dtype=float)).T
    bounds = np.asarray(bounds, dtype=float)
    box = Box(tuple(-bounds), tuple(np.nextafter(bounds, np.inf)))
    return _lattice_points_in_box(Bd, box, cap=cap)


def dual_frequencies(model, norm_bound, internal_cutoff=0.5):
    """Candidate Bragg frequencies for lattice, crystal and cut-and-project models.

    Lattices and crystals give the dual lattice points with ``|k| <= norm_bound``;
    a cut-and-project model gives the physical parts of dual lattice points with
    physical norm at most ``norm_bound`` and internal norm at most
    ``internal_cutoff``.  Frequencies are returned sorted.
    """
    tag = model.tag
    if tag == "lattice":
        a = float(model.params.get("a", 1.0))
        j = np.arange(-math.floor(norm_bound * a + 1e-9), math.floor(norm_bound * a + 1e-9) + 1)
        return [(float(v) / a,) for v in j]
    if tag == "crystal":
        d = model.dim
        L = np.asarray(model.params["basis"], dtype=float).reshape(d, d)
        K = _dual_points(L, [norm_bound] * d)
        K = K[np.linalg.norm(K, axis=1) <= norm_bound + 1e-12]
        return sorted(tuple(map(float, k)) for k in K)
    if tag == "cps":
        s = model.scheme()
        d, m = s.phys_dim, s.internal_dim
        K = _dual_points(s.matrix, [norm_bound] * d + [internal_cutoff] * m)
        keep = ((np.linalg.norm(K[:, :d], axis=1) <= norm_bound + 1e-12)
                & (np.linalg.norm(K[:, d:], axis=1) <= internal_cutoff + 1e-12))
        return sorted(tuple(map(float, k)) for k in K[keep, :d])
    raise ValueError(f"no dual frequencies for model tag {tag!r}")

