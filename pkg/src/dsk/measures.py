"""Discrete measures on the dyadic lattice.

Two weight backends are supported: exact rationals (``Fraction``) and
float64.  Rational weights keep energy identities exact; entropies and
non-integer L^q norms are always computed in floating point with a fixed
summation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from numbers import Integral, Rational

import numpy as np
from scipy.optimize import linprog
from scipy.signal import fftconvolve

from .geometry import AffineFlat, orthonormal_complement
from .grid import DyadicCube, GridSet, pack_keys, _key_bits

__all__ = [
    "GridMeasure",
    "EntropyProfile",
    "Concentration",
    "Saturation",
    "lq_norm",
    "lq_norm_power",
    "convolve",
    "entropy",
    "cube_masses",
    "local_measure",
    "entropy_decomposition",
    "is_concentrated",
    "is_saturated",
]

FLOAT_NORM_TOL = 1e-9
DENSE_BOX_LIMIT = 1 << 24


def _to_fraction(w) -> Fraction:
    if isinstance(w, Fraction):
        return w
    if isinstance(w, (Integral, Rational)):
        return Fraction(w)
    if isinstance(w, str):
        return Fraction(w)
    return Fraction(float(w))


class GridMeasure:
    """Positive weights on lattice points of ``2**-m Z^d``.

    ``backend`` is ``"rational"`` (weights are ``Fraction``) or ``"float"``.
    ``normalized`` records whether total mass is 1 (exactly, or to 1e-9).
    """

    __slots__ = ("dim", "scale_exp", "span", "_points", "_weights", "backend", "normalized")

    def __init__(self, dim, scale_exp, points, weights, *, backend=None, span=1, normalized=None):
        support = GridSet(dim, scale_exp, points, span)
        pts = np.asarray(points, dtype=np.int64).reshape(-1, dim) if len(support) else np.zeros((0, dim), np.int64)
        if len(pts) != len(weights):
            raise ValueError("points and weights differ in length")
        if backend is None:
            backend = "float" if any(isinstance(w, (float, np.floating)) for w in weights) else "rational"
        if backend not in ("rational", "float"):
            raise ValueError("backend must be 'rational' or 'float'")
        if backend == "rational":
            w = np.empty(len(weights), dtype=object)
            w[:] = [_to_fraction(x) for x in weights]
        else:
            w = np.asarray([float(x) for x in weights], dtype=np.float64)
        if len(w) and any(x <= 0 for x in w):
            raise ValueError("all weights must be positive")
        # merge duplicates and sort lexicographically
        keys = pack_keys(pts, support.key_bits)
        order = np.argsort(keys, kind="stable")
        keys, pts, w = keys[order], pts[order], w[order]
        if len(keys) and np.any(keys[1:] == keys[:-1]):
            uniq, start = np.unique(keys, return_index=True)
            bounds = list(start) + [len(keys)]
            merged = [sum(w[a:b][1:], w[a]) for a, b in zip(bounds[:-1], bounds[1:])]
            pts = pts[start]
            w = np.asarray(merged, dtype=w.dtype) if backend == "float" else _obj(merged)
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        w.setflags(write=False)
        self.dim = support.dim
        self.scale_exp = support.scale_exp
        self.span = support.span
        self._points = pts
        self._weights = w
        self.backend = backend
        total = self.mass()
        is_one = (total == 1) if backend == "rational" else abs(total - 1.0) <= FLOAT_NORM_TOL
        if normalized is None:
            normalized = bool(is_one)
        elif normalized and not is_one:
            raise ValueError(f"weights sum to {total}, not 1")
        self.normalized = bool(normalized)

    # -- constructors ---------------------------------------------------
    @classmethod
    def counting(cls, A: GridSet, backend="rational") -> "GridMeasure":
        """Unnormalized counting measure on ``A``."""
        w = [1] * len(A) if backend == "rational" else [1.0] * len(A)
        return cls(A.dim, A.scale_exp, A.points, w, backend=backend, span=A.span, normalized=len(A) == 1)

    @classmethod
    def uniform(cls, A: GridSet, backend="rational") -> "GridMeasure":
        n = len(A)
        if n == 0:
            raise ValueError("empty support")
        w = [Fraction(1, n)] * n if backend == "rational" else [1.0 / n] * n
        return cls(A.dim, A.scale_exp, A.points, w, backend=backend, span=A.span)

    @classmethod
    def point_mass(cls, dim, scale_exp, point=None) -> "GridMeasure":
        point = (0,) * dim if point is None else tuple(point)
        return cls(dim, scale_exp, [point], [Fraction(1)])

    # -- accessors ------------------------------------------------------
    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def __len__(self) -> int:
        return self._points.shape[0]

    def __repr__(self) -> str:
        return (
            f"GridMeasure(d={self.dim}, m={self.scale_exp}, atoms={len(self)}, "
            f"backend={self.backend}, normalized={self.normalized})"
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridMeasure):
            return NotImplemented
        return (
            (self.dim, self.scale_exp, self.span, self.backend)
            == (other.dim, other.scale_exp, other.span, other.backend)
            and np.array_equal(self._points, other._points)
            and list(self._weights) == list(other._weights)
        )

    def __hash__(self):
        return hash((self.dim, self.scale_exp, self._points.tobytes(), tuple(self._weights)))

    def mass(self):
        if self.backend == "rational":
            return sum(self._weights, Fraction(0))
        return math.fsum(self._weights)

    def support(self) -> GridSet:
        return GridSet(self.dim, self.scale_exp, self._points, self.span, _canonical=True)

    def float_weights(self) -> np.ndarray:
        if self.backend == "float":
            return self._weights
        return np.asarray([float(w) for w in self._weights], dtype=np.float64)

    def real_points(self) -> np.ndarray:
        return self._points.astype(np.float64) / float(1 << self.scale_exp)

    def as_dict(self) -> dict:
        return {tuple(int(c) for c in p): w for p, w in zip(self._points, self._weights)}

    def normalize(self) -> "GridMeasure":
        total = self.mass()
        return GridMeasure(
            self.dim, self.scale_exp, self._points, [w / total for w in self._weights],
            backend=self.backend, span=self.span, normalized=None,
        )

    def restrict(self, A: GridSet) -> "GridMeasure":
        """``mu|_A`` (unnormalized)."""
        bits = max(_key_bits(self.span << self.scale_exp), A.key_bits)
        mask = np.isin(pack_keys(self._points, bits), pack_keys(A.points, bits))
        return GridMeasure(
            self.dim, self.scale_exp, self._points[mask], list(self._weights[mask]),
            backend=self.backend, span=self.span, normalized=None,
        )

    def weight_of(self, point) -> Fraction | float:
        p = np.asarray(point, dtype=np.int64)
        hit = np.nonzero(np.all(self._points == p, axis=1))[0]
        if hit.size == 0:
            return Fraction(0) if self.backend == "rational" else 0.0
        return self._weights[int(hit[0])]

    def to_float(self) -> "GridMeasure":
        return GridMeasure(self.dim, self.scale_exp, self._points, list(self.float_weights()),
                           backend="float", span=self.span, normalized=None)

    def to_rational(self) -> "GridMeasure":
        return GridMeasure(self.dim, self.scale_exp, self._points, [_to_fraction(w) for w in self._weights],
                           backend="rational", span=self.span, normalized=None)

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        atoms = []
        for p, w in zip(self._points.tolist(), self._weights):
            if self.backend == "rational":
                atoms.append([p, w.numerator, w.denominator])
            else:
                atoms.append([p, format(float(w), ".17g")])
        out = {"d": self.dim, "m": self.scale_exp, "atoms": atoms}
        if self.span != 1:
            out["span"] = self.span
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GridMeasure":
        missing = [k for k in ("d", "m", "atoms") if k not in data]
        if missing:
            raise ValueError(f"GridMeasure JSON missing field(s): {', '.join(missing)}")
        pts, ws = [], []
        backend = "rational"
        for atom in data["atoms"]:
            if len(atom) == 3:
                pts.append(atom[0])
                ws.append(Fraction(int(atom[1]), int(atom[2])))
            elif len(atom) == 2:
                pts.append(atom[0])
                ws.append(float(atom[1]))
                backend = "float"
            else:
                raise ValueError("atom must be [coords, num, den] or [coords, decimal]")
        if backend == "float":
            ws = [float(w) for w in ws]
        return cls(data["d"], data["m"], pts, ws, backend=backend, span=data.get("span", 1))


def _obj(values) -> np.ndarray:
    arr = np.empty(len(values), dtype=object)
    arr[:] = list(values)
    return arr


# ---------------------------------------------------------------------------
# norms and convolution


def lq_norm_power(mu: GridMeasure, q: int):
    """``sum_x mu(x)^q`` for integer ``q``; exact under the rational backend."""
    if not isinstance(q, Integral) or q < 1:
        raise ValueError("q must be a positive integer")
    if mu.backend == "rational":
        return sum((w**q for w in mu.weights), Fraction(0))
    return math.fsum(w**q for w in mu.weights)


def lq_norm(mu: GridMeasure, q: float) -> float:
    """``(sum_x mu(x)^q)^(1/q)``; ``q = 1`` gives the total mass."""
    if q < 1:
        raise ValueError("q must be >= 1")
    if len(mu) == 0:
        raise ValueError("empty measure")
    if q == 1:
        return float(mu.mass())
    if float(q).is_integer():
        return float(lq_norm_power(mu, int(q))) ** (1.0 / q)
    w = mu.float_weights()
    top = float(w.max())
    # scale out the max to avoid underflow for large q
    return top * math.fsum((w / top) ** q) ** (1.0 / q)


def _same_lattice(mu: GridMeasure, nu: GridMeasure) -> None:
    if mu.dim != nu.dim or mu.scale_exp != nu.scale_exp:
        raise ValueError("dimension/scale mismatch")


def _common_integer_weights(weights) -> tuple[list[int], int]:
    den = reduce(math.lcm, (w.denominator for w in weights), 1)
    return [int(w * den) for w in weights], den


def _convolve_direct(mu: GridMeasure, nu: GridMeasure, span: int) -> tuple[np.ndarray, list]:
    d = mu.dim
    bits = _key_bits(span << mu.scale_exp)
    sums = (mu.points[:, None, :] + nu.points[None, :, :]).reshape(-1, d)
    keys = pack_keys(sums, bits)
    uniq, inverse = np.unique(keys, return_inverse=True)
    pts = sums[np.unique(inverse, return_index=True)[1]]
    if mu.backend == "float" or nu.backend == "float":
        prod = np.outer(mu.float_weights(), nu.float_weights()).ravel()
        acc = np.zeros(uniq.size)
        # deterministic order: np.add.at accumulates in index order
        np.add.at(acc, inverse, prod)
        return pts, list(acc)
    a, da = _common_integer_weights(mu.weights)
    b, db = _common_integer_weights(nu.weights)
    bound = max(a) * max(b) * min(len(a), len(b))
    if bound < (1 << 62):
        prod = np.outer(np.asarray(a, np.int64), np.asarray(b, np.int64)).ravel()
        acc = np.zeros(uniq.size, dtype=np.int64)
        np.add.at(acc, inverse, prod)
        ints = acc.tolist()
    else:
        prod = [x * y for x in a for y in b]
        ints = [0] * uniq.size
        for i, v in zip(inverse.tolist(), prod):
            ints[i] += v
    den = da * db
    return pts, [Fraction(v, den) for v in ints]


def _convolve_fft(mu: GridMeasure, nu: GridMeasure) -> tuple[np.ndarray, list]:
    d = mu.dim
    lo_a, lo_b = mu.points.min(axis=0), nu.points.min(axis=0)
    shape_a = mu.points.max(axis=0) - lo_a + 1
    shape_b = nu.points.max(axis=0) - lo_b + 1
    if int(np.prod(shape_a + shape_b - 1)) > DENSE_BOX_LIMIT:
        raise ValueError("bounding box too large for the dense path")
    exact = mu.backend == "rational" and nu.backend == "rational"
    if exact:
        a, da = _common_integer_weights(mu.weights)
        b, db = _common_integer_weights(nu.weights)
        if max(a) * max(b) * min(len(a), len(b)) >= (1 << 50):
            raise ValueError("integer weights too large for an exact dense path")
        wa, wb = np.asarray(a, np.float64), np.asarray(b, np.float64)
    else:
        wa, wb = mu.float_weights(), nu.float_weights()
    grid_a = np.zeros(tuple(shape_a))
    grid_b = np.zeros(tuple(shape_b))
    grid_a[tuple((mu.points - lo_a).T)] = wa
    grid_b[tuple((nu.points - lo_b).T)] = wb
    ind_a = (grid_a != 0).astype(np.float64)
    ind_b = (grid_b != 0).astype(np.float64)
    conv = fftconvolve(grid_a, grid_b)
    supp = fftconvolve(ind_a, ind_b) > 0.5
    idx = np.argwhere(supp)
    pts = idx + lo_a + lo_b
    vals = conv[supp]
    if exact:
        den = da * db
        return pts, [Fraction(int(v), den) for v in np.rint(vals)]
    return pts, list(vals)


def convolve(mu: GridMeasure, nu: GridMeasure, method: str = "auto") -> GridMeasure:
    """``(mu * nu)(z) = sum_{x + y = z} mu(x) nu(y)``.

    ``method`` is ``"direct"`` (sparse pairwise, exact), ``"fft"`` (dense
    bounding box) or ``"auto"``.  The result's ``span`` is the sum of spans.
    """
    _same_lattice(mu, nu)
    if len(mu) == 0 or len(nu) == 0:
        raise ValueError("empty measure")
    span = mu.span + nu.span
    if method == "auto":
        box = int(np.prod(np.ptp(mu.points, axis=0) + np.ptp(nu.points, axis=0) + 1))
        rational = mu.backend == "rational" or nu.backend == "rational"
        method = "fft" if (not rational and box <= DENSE_BOX_LIMIT and len(mu) * len(nu) > 4 * box) else "direct"
    if method == "direct":
        pts, w = _convolve_direct(mu, nu, span)
    elif method == "fft":
        pts, w = _convolve_fft(mu, nu)
    else:
        raise ValueError(f"unknown method {method!r}")
    backend = "rational" if (mu.backend == nu.backend == "rational") else "float"
    if backend == "float":
        keep = [i for i, x in enumerate(w) if x > 0]
        pts, w = pts[keep], [w[i] for i in keep]
    return GridMeasure(mu.dim, mu.scale_exp, pts, w, backend=backend, span=span)


# ---------------------------------------------------------------------------
# entropy


def cube_masses(mu: GridMeasure, k: int) -> tuple[np.ndarray, list]:
    """Level-``k`` cubes charged by ``mu`` (sorted) and their masses."""
    if not 0 <= k <= mu.scale_exp:
        raise ValueError(f"level {k} outside [0, {mu.scale_exp}]")
    ids = mu.points >> (mu.scale_exp - k)
    bits = _key_bits(mu.span << k)
    keys = pack_keys(ids, bits)
    uniq, start, inverse = np.unique(keys, return_index=True, return_inverse=True)
    if mu.backend == "rational":
        acc = [Fraction(0)] * uniq.size
        for i, w in zip(inverse.tolist(), mu.weights):
            acc[i] += w
    else:
        acc = np.zeros(uniq.size)
        np.add.at(acc, inverse, mu.weights)
        acc = list(acc)
    return ids[start], acc


def _shannon_bits(masses) -> float:
    return math.fsum(-p * math.log2(p) for p in (float(x) for x in masses) if p > 0)


def entropy(mu: GridMeasure, k: int) -> float:
    """Normalized dyadic entropy ``(1/k) H(mu, D_k)`` in bits."""
    if not mu.normalized:
        raise ValueError("entropy requires a normalized measure")
    if not 1 <= k <= mu.scale_exp:
        raise ValueError(f"level must lie in [1, {mu.scale_exp}]")
    _, masses = cube_masses(mu, k)
    return _shannon_bits(masses) / k


def local_measure(mu: GridMeasure, x, k: int) -> GridMeasure:
    """``mu^{x,k}``: the normalized blow-up of ``mu`` on the level-``k`` cube of ``x``."""
    if not 0 <= k <= mu.scale_exp:
        raise ValueError(f"level {k} outside [0, {mu.scale_exp}]")
    if isinstance(x, DyadicCube):
        cube = x
        if cube.level != k:
            raise ValueError("cube level disagrees with k")
    else:
        cube = DyadicCube.containing(x, mu.scale_exp, k)
    shift = mu.scale_exp - k
    coords = np.asarray(cube.coords, dtype=np.int64)
    inside = np.all((mu.points >> shift) == coords, axis=1)
    if not inside.any():
        raise ValueError("zero-mass cube")
    w = mu.weights[inside]
    total = sum(w[1:], w[0]) if mu.backend == "rational" else math.fsum(w)
    pts = mu.points[inside] - (coords << shift)
    return GridMeasure(mu.dim, shift, pts, [v / total for v in w], backend=mu.backend)


@dataclass
class EntropyProfile:
    """Both sides of the global/local entropy identity.

    ``locals[i]`` lists ``(cube coords, mu(I), H_L(mu^I))`` over the cubes
    ``I`` of level ``i`` charged by ``mu``.
    """

    L: int
    S: int
    total: float
    locals: dict[int, list[tuple[tuple[int, ...], float, float]]] = field(default_factory=dict)

    @property
    def local_average(self) -> float:
        per_level = [math.fsum(w * h for _, w, h in rows) for _, rows in sorted(self.locals.items())]
        return math.fsum(per_level) / self.S

    @property
    def discrepancy(self) -> float:
        return abs(self.total - self.local_average)


def entropy_decomposition(mu: GridMeasure, L: int) -> EntropyProfile:
    """Compute ``H_{LS}(mu)`` and the average of ``H_L(mu^{x,i})`` over ``i in L[S]``."""
    if not mu.normalized:
        raise ValueError("entropy requires a normalized measure")
    if L < 1 or mu.scale_exp % L:
        raise ValueError(f"L={L} does not divide m={mu.scale_exp}")
    S = mu.scale_exp // L
    if S == 0:
        raise ValueError("need m >= L")
    profile = EntropyProfile(L, S, entropy(mu, mu.scale_exp))
    for s in range(S):
        level = s * L
        cubes, masses = cube_masses(mu, level)
        rows = []
        for c, w in zip(cubes, masses):
            cube = DyadicCube(level, tuple(int(v) for v in c))
            loc = local_measure(mu, cube, level)
            rows.append((cube.coords, float(w), entropy(loc, L)))
        profile.locals[level] = rows
    return profile


# ---------------------------------------------------------------------------
# concentration and saturation


def _frame(V, d) -> np.ndarray:
    if isinstance(V, AffineFlat):
        return V.frame
    arr = np.asarray(V, dtype=np.float64)
    return arr.reshape(-1, d) if arr.size else np.zeros((0, d))


def _linf_distance_to_span(z: np.ndarray, frame: np.ndarray) -> float:
    k, d = frame.shape
    if k == 0:
        return float(np.abs(z).max())
    if k == d:
        return 0.0
    # minimize s subject to -s <= z_i - (F^T t)_i <= s
    c = np.zeros(k + 1)
    c[-1] = 1.0
    Ft = frame.T
    A_ub = np.vstack([np.hstack([-Ft, -np.ones((d, 1))]), np.hstack([Ft, -np.ones((d, 1))])])
    b_ub = np.concatenate([-z, z])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * k + [(0, None)], method="highs")
    return float(res.fun)


@dataclass
class Concentration:
    concentrated: bool
    witness: np.ndarray | None
    mass: float
    eps: float
    norm: str = "l2"
    semantics: str = "witness-restricted"

    def __bool__(self) -> bool:
        return self.concentrated


def is_concentrated(mu: GridMeasure, V, eps: float, norm: str = "l2") -> Concentration:
    """Is ``mu(x + V^(eps)) >= 1 - eps`` for some ``x``?

    ``x`` ranges over the atoms of ``mu`` and its barycenter only; the
    neighbourhood is open, in the ``l2`` (default) or ``linf`` norm.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if norm not in ("l2", "linf"):
        raise ValueError("norm must be 'l2' or 'linf'")
    d = mu.dim
    frame = _frame(V, d)
    pts = mu.real_points()
    w = mu.float_weights()
    total = math.fsum(w)
    cands = np.vstack([pts, (w @ pts) / total])
    best_mass, best_x = -1.0, None
    for x in cands:
        rel = pts - x
        if norm == "l2":
            resid = rel - (rel @ frame.T) @ frame
            inside = np.linalg.norm(resid, axis=1) < eps
        else:
            inside = np.array([_linf_distance_to_span(z, frame) < eps for z in rel])
        captured = math.fsum(w[inside]) / total
        if captured > best_mass:
            best_mass, best_x = captured, x
        if captured >= 1 - eps:
            return Concentration(True, x.copy(), captured, eps, norm)
    return Concentration(False, None if best_x is None else best_x.copy(), best_mass, eps, norm)


@dataclass
class Saturation:
    saturated: bool
    deficit: float
    entropy_total: float
    entropy_projection: float
    dim_v: int
    C: float
    L: int

    def __bool__(self) -> bool:
        return self.saturated


def projection_entropy(mu: GridMeasure, basis: np.ndarray, L: int) -> float:
    """``H_L`` of the pushforward of ``mu`` to the coordinates ``x @ basis.T``."""
    if basis.shape[0] == 0:
        return 0.0
    coords = mu.real_points() @ basis.T
    bins = np.floor(coords * float(1 << L)).astype(np.int64)
    _, inverse = np.unique(bins, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    if mu.backend == "rational":
        acc = [Fraction(0)] * (int(inverse.max()) + 1)
        for i, wt in zip(inverse.tolist(), mu.weights):
            acc[i] += wt
        total = sum(acc, Fraction(0))
        masses = [a / total for a in acc]
    else:
        acc = np.zeros(int(inverse.max()) + 1)
        np.add.at(acc, inverse, mu.weights)
        masses = list(acc / acc.sum())
    return _shannon_bits(masses) / L


def is_saturated(mu: GridMeasure, V, L: int, C: float | None = None) -> Saturation:
    """Test ``H_L(mu) >= H_L(pi_{V^perp} mu) + dim V - C/L``.

    The projection is binned into level-``L`` cubes of a fixed orthonormal
    basis of ``V^perp`` anchored at the origin.  ``deficit`` is
    ``dim V + H_L(pi mu) - H_L(mu)``; saturation means ``deficit <= C/L``.
    """
    d = mu.dim
    if not 1 <= L <= mu.scale_exp:
        raise ValueError(f"L must lie in [1, {mu.scale_exp}]")
    if C is None:
        C = 4.0 * d
    frame = _frame(V, d)
    mu_n = mu if mu.normalized else mu.normalize()
    h_total = entropy(mu_n, L)
    h_proj = projection_entropy(mu_n, orthonormal_complement(frame, d), L)
    deficit = frame.shape[0] + h_proj - h_total
    return Saturation(deficit <= C / L, deficit, h_total, h_proj, frame.shape[0], float(C), L)
