"""Affine flats, slab fitting, projection covering numbers and porosity.

Flat fitting is heuristic (principal components); every dimension it
reports is a certified *upper bound*: the returned slack is a direct
max-distance computation, not an estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial import cKDTree

from .grid import GridSet, covering_count

__all__ = [
    "AffineFlat",
    "FlatFit",
    "PorosityResult",
    "orthonormal_complement",
    "fit_flat",
    "min_dimension",
    "dimension_threshold",
    "projection_covering",
    "subspace_net",
    "grassmannian_inf_covering",
    "porosity_check",
    "porous_covering_bound",
]

ORTHO_TOL = 1e-12


def _canonical_signs(frame: np.ndarray) -> np.ndarray:
    # flip each row so its largest-magnitude entry is positive (determinism)
    frame = frame.copy()
    for i, row in enumerate(frame):
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            frame[i] = -row
    return frame


class AffineFlat:
    """A k-flat ``offset + span(frame)``; ``frame`` rows are orthonormal."""

    __slots__ = ("frame", "offset")

    def __init__(self, frame, offset):
        offset = np.asarray(offset, dtype=np.float64).reshape(-1)
        d = offset.shape[0]
        frame = np.asarray(frame, dtype=np.float64)
        if frame.size == 0:
            frame = np.zeros((0, d))
        frame = frame.reshape(-1, d)
        gram = frame @ frame.T
        if not np.allclose(gram, np.eye(frame.shape[0]), atol=ORTHO_TOL, rtol=0):
            raise ValueError("frame is not orthonormal to 1e-12")
        frame.setflags(write=False)
        offset.setflags(write=False)
        self.frame = frame
        self.offset = offset

    @classmethod
    def from_vectors(cls, vectors, offset=None, d=None) -> "AffineFlat":
        """Orthonormalize ``vectors`` (rows) by QR and build the flat."""
        vectors = np.asarray(vectors, dtype=np.float64)
        if d is None:
            d = vectors.shape[-1] if vectors.size else len(offset)
        if offset is None:
            offset = np.zeros(d)
        if vectors.size == 0:
            return cls(np.zeros((0, d)), offset)
        vectors = vectors.reshape(-1, d)
        q, r = np.linalg.qr(vectors.T)
        rank = int(np.sum(np.abs(np.diag(r)) > 1e-12))
        if rank < vectors.shape[0]:
            raise ValueError("spanning vectors are linearly dependent")
        frame = _canonical_signs(q.T[: vectors.shape[0]])
        # re-orthonormalize after the sign flip to keep the 1e-12 invariant tight
        q2, _ = np.linalg.qr(frame.T)
        frame = _canonical_signs(q2.T)
        return cls(frame, offset)

    @classmethod
    def linear(cls, vectors, d=None) -> "AffineFlat":
        return cls.from_vectors(vectors, None, d)

    @classmethod
    def axes(cls, d: int, idx, offset=None) -> "AffineFlat":
        frame = np.eye(d)[list(idx)]
        return cls(frame, np.zeros(d) if offset is None else offset)

    @property
    def dim_k(self) -> int:
        return self.frame.shape[0]

    @property
    def d(self) -> int:
        return self.offset.shape[0]

    def coordinates(self, pts) -> np.ndarray:
        """Intrinsic coordinates of the orthogonal projection of ``pts``."""
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, self.d)
        return (pts - self.offset) @ self.frame.T

    def residuals(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, self.d)
        rel = pts - self.offset
        return rel - (rel @ self.frame.T) @ self.frame

    def distance(self, pts) -> np.ndarray:
        return np.linalg.norm(self.residuals(pts), axis=1)

    def complement(self) -> "AffineFlat":
        """Orthogonal complement of the direction space, as a linear flat."""
        return AffineFlat(orthonormal_complement(self.frame, self.d), np.zeros(self.d))

    def to_dict(self) -> dict:
        return {"k": self.dim_k, "frame": self.frame.tolist(), "offset": self.offset.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "AffineFlat":
        flat = cls(data["frame"], data["offset"])
        if flat.dim_k != int(data.get("k", flat.dim_k)):
            raise ValueError("flat 'k' disagrees with its frame")
        return flat

    def __repr__(self) -> str:
        return f"AffineFlat(k={self.dim_k}, d={self.d})"


def orthonormal_complement(frame, d: int) -> np.ndarray:
    """Rows spanning the orthogonal complement of ``span(frame)`` in R^d."""
    frame = np.asarray(frame, dtype=np.float64).reshape(-1, d)
    k = frame.shape[0]
    if k == 0:
        return np.eye(d)
    if k == d:
        return np.zeros((0, d))
    # axis-aligned frames get axis-aligned complements (exact binning later)
    if np.all((frame == 0) | (np.abs(frame) == 1)):
        used = {int(np.argmax(np.abs(row))) for row in frame}
        return np.eye(d)[[i for i in range(d) if i not in used]]
    _, _, vt = np.linalg.svd(frame, full_matrices=True)
    comp = _canonical_signs(vt[k:])
    q, _ = np.linalg.qr(comp.T)
    return _canonical_signs(q.T)


@dataclass
class FlatFit:
    flat: AffineFlat
    slack: float
    certified: bool = True

    def verify(self, A: GridSet, tol: float = 1e-12) -> bool:
        """Recompute the max distance of ``A`` to the flat and compare to ``slack``."""
        if len(A) == 0:
            return True
        return bool(self.flat.distance(A.real_points()).max() <= self.slack + tol)


def fit_flat(A: GridSet, k: int) -> FlatFit:
    """Best-effort k-flat through the centroid along the top-k principal axes.

    The slack is the exact max point-to-flat distance of that flat.  For
    ``k = 0`` the bounding-box centre is also tried and the smaller slack kept.
    """
    d = A.dim
    if not 0 <= k <= d:
        raise ValueError(f"k must lie in [0, {d}]")
    if len(A) == 0:
        raise ValueError("empty set")
    pts = A.real_points()
    centroid = pts.mean(axis=0)
    if k == d:
        return FlatFit(AffineFlat(np.eye(d), centroid), 0.0)
    if k == 0:
        best = None
        for c in (centroid, 0.5 * (pts.min(axis=0) + pts.max(axis=0))):
            slack = float(np.linalg.norm(pts - c, axis=1).max())
            if best is None or slack < best.slack:
                best = FlatFit(AffineFlat(np.zeros((0, d)), c), slack)
        return best
    centered = pts - centroid
    if len(A) == 1 or not np.any(centered):
        frame = np.eye(d)[:k]
    else:
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        frame = vt[:k]
        if frame.shape[0] < k:
            # fewer points than directions: pad with any orthogonal ones
            frame = np.vstack([frame, orthonormal_complement(frame, d)[: k - frame.shape[0]]])
    flat = AffineFlat.from_vectors(frame, centroid)
    return FlatFit(flat, float(flat.distance(pts).max()))


def dimension_threshold(d: int, L: int) -> float:
    """``(sqrt(d) + 1) * 2**-L``, the neighbourhood radius used for D_L."""
    return (math.sqrt(d) + 1.0) * 2.0 ** (-L)


def min_dimension(A: GridSet, L: int | None = None) -> tuple[int, FlatFit]:
    """Certified upper bound on D_L(A) for a 2^-L-set ``A``.

    Returns the smallest ``j`` whose principal-component fit has slack at
    most ``(sqrt(d) + 1) 2^-L``, with that fit.
    """
    if L is None:
        L = A.scale_exp
    thr = dimension_threshold(A.dim, L)
    for j in range(A.dim + 1):
        fit = fit_flat(A, j)
        if fit.slack <= thr:
            return j, fit
    raise AssertionError("unreachable: the full-dimensional fit has zero slack")


def projection_covering(A: GridSet, V: AffineFlat, k: int) -> int:
    """Covering number at scale 2^-k of the projection of ``A`` onto ``V``.

    ``V`` is taken as a linear subspace (its offset is ignored); the
    projection is binned in ``V``'s intrinsic orthonormal coordinates.
    """
    if len(A) == 0:
        raise ValueError("empty set")
    if k < 0:
        raise ValueError("level must be nonnegative")
    if V.d != A.dim:
        raise ValueError("dimension mismatch")
    if V.dim_k == 0:
        return 1
    frame = V.frame
    if V.dim_k == A.dim and np.array_equal(np.abs(frame), np.eye(A.dim)) and k <= A.scale_exp:
        return covering_count(A, k)
    coords = A.real_points() @ frame.T
    bins = np.floor(coords * float(1 << k)).astype(np.int64)
    return int(np.unique(bins, axis=0).shape[0])


def _direction_net_d3(net_res: int) -> np.ndarray:
    # polar x azimuth grid on the upper hemisphere
    dirs = [[0.0, 0.0, 1.0]]
    for i in range(1, net_res + 1):
        theta = 0.5 * math.pi * i / net_res
        n_az = max(1, int(round(2 * net_res * math.sin(theta))))
        for j in range(n_az):
            phi = math.pi * j / n_az
            dirs.append([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
    return np.asarray(dirs)


def subspace_net(d: int, dim: int, net_res: int = 32) -> list[AffineFlat]:
    """Deterministic net of ``dim``-dimensional linear subspaces of R^d.

    Coordinate subspaces always come first.  Tilted members: an angle grid
    in d=2, a hemisphere grid of lines / plane normals in d=3, and seeded
    random orthonormal frames otherwise.
    """
    if not 0 <= dim <= d:
        raise ValueError("subspace dimension out of range")
    flats = [AffineFlat.axes(d, idx) for idx in combinations(range(d), dim)]
    if dim in (0, d) or net_res <= 0:
        return flats
    if d == 2:
        for i in range(net_res):
            th = math.pi * i / net_res
            v = np.array([math.cos(th), math.sin(th)])
            if np.any(np.isclose(np.abs(v), 1.0, atol=1e-15)):
                continue
            flats.append(AffineFlat.linear([v]))
    elif d == 3:
        for v in _direction_net_d3(net_res):
            if np.sum(np.abs(v) > 1e-12) <= 1:
                continue
            line = AffineFlat.linear([v])
            flats.append(line if dim == 1 else line.complement())
    else:
        rng = np.random.default_rng(20240917 + 97 * d + dim)
        for _ in range(net_res * d):
            q, _ = np.linalg.qr(rng.standard_normal((d, dim)))
            flats.append(AffineFlat.linear(q.T))
    return flats


def grassmannian_inf_covering(A: GridSet, codim_target: int, k: int, net_res: int = 32):
    """Minimum projection covering number over a net of (d - codim_target)-subspaces.

    Returns ``(value, minimizer)``.  The value upper-bounds the true infimum;
    ties go to the earliest net member.
    """
    d = A.dim
    if not 0 <= codim_target <= d:
        raise ValueError("codim_target must lie in [0, d]")
    target = d - codim_target
    best_val, best_flat = None, None
    for flat in subspace_net(d, target, net_res):
        val = projection_covering(A, flat, k)
        if best_val is None or val < best_val:
            best_val, best_flat = val, flat
            if val == 1:
                break
    return best_val, best_flat


# ---------------------------------------------------------------------------
# porosity


@dataclass
class PorosityResult:
    porous: bool
    k: int
    rho: float
    eta: float
    net_res: int
    checked: int = 0
    counterexample: dict | None = None
    semantics: str = "net"

    def __bool__(self) -> bool:
        return self.porous

    def to_dict(self) -> dict:
        return {
            "porous": self.porous,
            "k": self.k,
            "rho": self.rho,
            "eta": self.eta,
            "net_res": self.net_res,
            "checked": self.checked,
            "counterexample": self.counterexample,
            "semantics": self.semantics,
        }


def _radii(m: int, eta: float) -> list[int]:
    """Dyadic radii 2^-j in [eta, 1], in lattice units of 2^-m."""
    out = []
    j = 0
    while 2.0 ** (-j) >= eta and j <= m + 1:
        out.append(2.0 ** (m - j))
        j += 1
    return out


def _line_gaps(t: np.ndarray, w: np.ndarray, radii, rho):
    """Scan a line for a ball with no free sub-ball.

    ``t``/``w`` are centres and half-widths of the chords ``X' ∩ W``.  For each
    radius, the blocked set is a union of open intervals; a centre fails when
    its closed window ``[c - r, c + r]`` sits inside one merged interval.
    Returns ``(checked, (c, r))`` for the first failure or ``(checked, None)``.
    """
    order = np.argsort(t, kind="stable")
    t = t[order]
    w = w[order]
    checked = 0
    for r in radii:
        pad = w + rho * r
        lo = t - pad
        hi = t + pad
        # merge open intervals; touching endpoints leave a free point
        starts, ends = [], []
        cur_lo, cur_hi = lo[0], hi[0]
        for a, b in zip(lo[1:], hi[1:]):
            if a < cur_hi:
                cur_hi = max(cur_hi, b)
            else:
                starts.append(cur_lo)
                ends.append(cur_hi)
                cur_lo, cur_hi = a, b
        starts.append(cur_lo)
        ends.append(cur_hi)
        starts = np.asarray(starts)
        ends = np.asarray(ends)
        cands = np.arange(math.floor(starts[0]), math.ceil(ends[-1]) + 1, dtype=np.float64)
        checked += cands.size
        idx = np.searchsorted(starts, cands - r, side="left") - 1
        valid = idx >= 0
        covered = np.zeros(cands.size, dtype=bool)
        covered[valid] = (starts[idx[valid]] < cands[valid] - r) & (ends[idx[valid]] > cands[valid] + r)
        if covered.any():
            return checked, (float(cands[np.argmax(covered)]), r)
    return checked, None


def _flat_sampled(xw: np.ndarray, w: np.ndarray, radii, rho):
    """Grid-sampled version of the free-ball search on a flat of dimension >= 2."""
    tree = cKDTree(xw)
    kdim = xw.shape[1]
    checked = 0
    lo = np.floor(xw.min(axis=0))
    hi = np.ceil(xw.max(axis=0))
    wmax = float(w.max())
    for r in radii:
        # ball centres on the integer grid of W near the set
        axes = [np.arange(lo[i] - r, hi[i] + r + 1) for i in range(kdim)]
        centres = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        step = max(rho * r / 2.0, 0.25)
        n = int(math.ceil(r / step))
        offs1 = np.arange(-n, n + 1) * step
        offs = np.stack([g.ravel() for g in np.meshgrid(*([offs1] * kdim), indexing="ij")], axis=1)
        offs = offs[np.linalg.norm(offs, axis=1) <= r + 1e-12]
        for c in centres:
            checked += 1
            ys = c + offs
            near = tree.query_ball_point(ys, rho * r + wmax)
            free = False
            for y, idxs in zip(ys, near):
                if not idxs:
                    free = True
                    break
                idxs = np.asarray(idxs)
                if np.all(np.linalg.norm(xw[idxs] - y, axis=1) >= rho * r + w[idxs]):
                    free = True
                    break
            if not free:
                return checked, (c.tolist(), r)
    return checked, None


def porosity_check(X: GridSet, k: int, rho: float, eta: float, net_res: int = 8) -> PorosityResult:
    """Search for a violation of (k, rho)-porosity between scales ``eta`` and 1.

    ``X`` stands for the union of closed balls of radius 2^-(m+1) around its
    points.  Flats come from :func:`subspace_net` translated through every
    point of ``X``; ball centres sit on the 2^-m grid of each flat and radii
    run over dyadic ``r`` in ``[eta, 1]``.  A reported counterexample is a true
    violation for that flat when ``k = 1`` (interval arithmetic); for ``k >= 2``
    the free sub-ball search is grid-sampled.
    """
    d, m = X.dim, X.scale_exp
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}]")
    if not (0 < rho < 1 and 0 < eta < 1):
        raise ValueError("rho and eta must lie in (0, 1)")
    semantics = "exact-on-net" if k == 1 else "sampled"
    res = PorosityResult(True, k, float(rho), float(eta), net_res, semantics=semantics)
    if len(X) == 0:
        return res
    radii = _radii(m, eta)
    half = 0.5
    pts = X.points.astype(np.float64)
    scale = 2.0 ** (-m)
    for net_idx, V in enumerate(subspace_net(d, k, net_res)):
        if k == d:
            offsets = pts[:1]
        else:
            # one flat through each point, deduplicated by its transverse position
            comp = orthonormal_complement(V.frame, d)
            trans = np.round(pts @ comp.T, 9)
            _, first = np.unique(trans, axis=0, return_index=True)
            offsets = pts[np.sort(first)]
        for o in offsets:
            W = AffineFlat(V.frame, o)
            delta = W.distance(pts)
            near = delta <= half + 1e-12
            coords = W.coordinates(pts[near])
            w = np.sqrt(np.maximum(half * half - delta[near] ** 2, 0.0))
            if k == 1:
                checked, bad = _line_gaps(coords[:, 0], w, radii, rho)
            else:
                checked, bad = _flat_sampled(coords, w, radii, rho)
            res.checked += checked
            if bad is not None:
                c, r = bad
                c_local = np.atleast_1d(np.asarray(c, dtype=np.float64))
                centre = (o + c_local @ V.frame) * scale
                res.porous = False
                res.counterexample = {
                    "net_index": net_idx,
                    "flat": AffineFlat(V.frame, o * scale).to_dict(),
                    "center": centre.tolist(),
                    "radius": r * scale,
                }
                return res
    return res


def porous_covering_bound(k: int, rho: float, L: int, c_d: float, slack: float) -> float:
    """``k - c_d rho^k / log2(1/rho) + slack / L``."""
    if k < 1 or L < 1:
        raise ValueError("k and L must be positive")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    return k - c_d * rho**k / math.log2(1.0 / rho) + slack / L
