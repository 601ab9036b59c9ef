"""Dyadic lattice geometry: cubes, 2^-m-sets, covering numbers, renormalization.

Points of a :class:`GridSet` are stored as integer lattice coordinates; the
point ``p`` encodes ``2**-m * p``.  Everything in this module is exact.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "DyadicCube",
    "GridSet",
    "UniformProfile",
    "NonUniform",
    "covering_count",
    "cubes_at",
    "child_counts",
    "is_uniform",
    "renormalize_set",
    "group_by_cube",
    "truncate_set",
    "neighborhood_count",
    "MAX_KEY_BITS",
]

MAX_KEY_BITS = 62


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Half-open cube ``2**-level * (coords + [0, 1)**d)``."""

    level: int
    coords: tuple[int, ...]

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("cube level must be nonnegative")
        side = 1 << self.level
        if any(c < 0 or c >= side for c in self.coords):
            raise ValueError(f"cube coords {self.coords} out of range for level {self.level}")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @classmethod
    def unit(cls, d: int) -> "DyadicCube":
        return cls(0, (0,) * d)

    @classmethod
    def containing(cls, point: Sequence[int], m: int, level: int) -> "DyadicCube":
        """Level-``level`` cube holding the lattice point ``point`` of scale ``m``."""
        shift = m - level
        return cls(level, tuple(int(p) >> shift for p in point))

    def lower_corner(self, m: int) -> np.ndarray:
        """Lower corner in lattice units of scale ``m``."""
        return np.asarray(self.coords, dtype=np.int64) << (m - self.level)

    def child(self, offset: Sequence[int], depth: int) -> "DyadicCube":
        """Sub-cube ``depth`` levels finer at relative position ``offset``."""
        return DyadicCube(
            self.level + depth,
            tuple((c << depth) + int(o) for c, o in zip(self.coords, offset)),
        )

    def contains_point(self, point: Sequence[int], m: int) -> bool:
        return DyadicCube.containing(point, m, self.level) == self


@dataclass(frozen=True)
class UniformProfile:
    """Branching data ``(L, S, (R_s))`` certifying (L,S)-uniformity."""

    L: int
    S: int
    branching: tuple[int, ...]

    def __post_init__(self):
        if self.L < 1 or self.S < 0:
            raise ValueError("need L >= 1 and S >= 0")
        if len(self.branching) != self.S:
            raise ValueError("branching must have one entry per scale")
        if any(r < 1 for r in self.branching):
            raise ValueError("branching numbers must be positive")

    @property
    def size(self) -> int:
        return math.prod(self.branching)

    def validate_for(self, d: int) -> None:
        cap = 1 << (d * self.L)
        if any(r > cap for r in self.branching):
            raise ValueError(f"branching number exceeds 2^(dL) = {cap}")


@dataclass(frozen=True)
class NonUniform:
    """First violation found by :func:`is_uniform`; falsy."""

    s: int
    cube: DyadicCube
    counts: tuple[int, ...]

    def __bool__(self) -> bool:
        return False


def _key_bits(extent: int) -> int:
    return max(1, (extent - 1).bit_length())


def pack_keys(points: np.ndarray, bits: int) -> np.ndarray:
    """Pack integer rows into int64 keys whose order is lexicographic."""
    points = np.asarray(points, dtype=np.int64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-d array")
    if points.shape[1] * bits > MAX_KEY_BITS + 1:
        raise ValueError("lattice too large for 64-bit keys")
    keys = np.zeros(points.shape[0], dtype=np.int64)
    for j in range(points.shape[1]):
        keys = (keys << bits) | points[:, j]
    return keys


def unpack_keys(keys: np.ndarray, d: int, bits: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty((keys.shape[0], d), dtype=np.int64)
    mask = (1 << bits) - 1
    for j in range(d - 1, -1, -1):
        out[:, j] = keys & mask
        keys = keys >> bits
    return out


class GridSet:
    """A finite subset of the lattice ``2**-m Z^d`` in ``[0, span)^d``.

    ``span`` is 1 for ordinary 2^-m-sets; sumsets of ``k`` such sets carry
    ``span = k`` because their coordinates reach ``k * 2**m``.
    """

    __slots__ = ("dim", "scale_exp", "span", "_points", "_hash")

    def __init__(self, dim: int, scale_exp: int, points=(), span: int = 1, *, _canonical=False):
        dim = int(dim)
        scale_exp = int(scale_exp)
        span = int(span)
        if dim < 1:
            raise ValueError("dimension must be at least 1")
        if scale_exp < 0:
            raise ValueError("scale exponent must be nonnegative")
        if span < 1:
            raise ValueError("span must be positive")
        extent = span << scale_exp
        if dim * _key_bits(extent) > MAX_KEY_BITS:
            raise ValueError(f"d*m too large: need d*log2(extent) <= {MAX_KEY_BITS}")
        arr = np.asarray(points, dtype=np.int64)
        if arr.size == 0:
            arr = np.zeros((0, dim), dtype=np.int64)
        if arr.ndim == 1 and dim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[1] != dim:
            raise ValueError(f"points must have shape (n, {dim})")
        if not _canonical:
            if arr.size and (arr.min() < 0 or arr.max() >= extent):
                raise ValueError("point coordinates out of range")
            if arr.shape[0]:
                arr = np.unique(arr, axis=0)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self.dim = dim
        self.scale_exp = scale_exp
        self.span = span
        self._points = arr
        self._hash = None

    # -- basic protocol -------------------------------------------------
    @property
    def points(self) -> np.ndarray:
        """Read-only ``(n, d)`` array of lattice coordinates, lexicographically sorted."""
        return self._points

    @property
    def extent(self) -> int:
        return self.span << self.scale_exp

    def __len__(self) -> int:
        return self._points.shape[0]

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        for row in self._points:
            yield tuple(int(v) for v in row)

    def __contains__(self, point) -> bool:
        p = np.asarray(point, dtype=np.int64).reshape(1, -1)
        if p.shape[1] != self.dim:
            return False
        return bool(np.isin(self.keys(), self._pack(p)).any()) if len(self) else False

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridSet):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.scale_exp == other.scale_exp
            and self.span == other.span
            and np.array_equal(self._points, other._points)
        )

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.dim, self.scale_exp, self.span, self._points.tobytes()))
        return self._hash

    def __repr__(self) -> str:
        extra = f", span={self.span}" if self.span != 1 else ""
        return f"GridSet(d={self.dim}, m={self.scale_exp}, n={len(self)}{extra})"

    # -- helpers --------------------------------------------------------
    @property
    def key_bits(self) -> int:
        return _key_bits(self.extent)

    def _pack(self, pts: np.ndarray) -> np.ndarray:
        return pack_keys(pts, self.key_bits)

    def keys(self) -> np.ndarray:
        return self._pack(self._points)

    def real_points(self) -> np.ndarray:
        """Float coordinates ``p / 2**m`` (exact for m <= 52)."""
        return self._points.astype(np.float64) / float(1 << self.scale_exp)

    def with_points(self, pts) -> "GridSet":
        return GridSet(self.dim, self.scale_exp, pts, self.span)

    def take(self, mask) -> "GridSet":
        """Subset selected by a boolean mask or index array (already canonical)."""
        return GridSet(self.dim, self.scale_exp, self._points[mask], self.span, _canonical=True)

    def issubset(self, other: "GridSet") -> bool:
        if (self.dim, self.scale_exp) != (other.dim, other.scale_exp):
            return False
        if len(self) == 0:
            return True
        bits = max(self.key_bits, other.key_bits)
        return bool(np.isin(pack_keys(self._points, bits), pack_keys(other._points, bits)).all())

    def translate(self, shift: Sequence[int]) -> "GridSet":
        return self.with_points(self._points + np.asarray(shift, dtype=np.int64))

    @classmethod
    def full(cls, dim: int, scale_exp: int) -> "GridSet":
        n = 1 << scale_exp
        axes = np.meshgrid(*([np.arange(n, dtype=np.int64)] * dim), indexing="ij")
        pts = np.stack([a.ravel() for a in axes], axis=1)
        return cls(dim, scale_exp, pts, _canonical=True)

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        out = {"d": self.dim, "m": self.scale_exp, "points": self._points.tolist()}
        if self.span != 1:
            out["span"] = self.span
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GridSet":
        missing = [k for k in ("d", "m", "points") if k not in data]
        if missing:
            raise ValueError(f"GridSet JSON missing field(s): {', '.join(missing)}")
        return cls(data["d"], data["m"], data["points"], data.get("span", 1))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "GridSet":
        return cls.from_dict(json.loads(text))


def _check_level(A: GridSet, k: int) -> None:
    if not 0 <= k <= A.scale_exp:
        raise ValueError(f"level {k} outside [0, {A.scale_exp}]")


def cubes_at(A: GridSet, k: int) -> np.ndarray:
    """Lattice coordinates of the level-``k`` cubes meeting ``A`` (sorted, unique)."""
    _check_level(A, k)
    if len(A) == 0:
        return np.zeros((0, A.dim), dtype=np.int64)
    return np.unique(A.points >> (A.scale_exp - k), axis=0)


def covering_count(A: GridSet, k: int) -> int:
    """``|A|_{2^-k}``: the number of level-``k`` dyadic cubes meeting ``A``."""
    if len(A) == 0:
        raise ValueError("empty set")
    _check_level(A, k)
    if k == A.scale_exp:
        return len(A)
    bits = max(1, k + (A.span - 1).bit_length())
    keys = pack_keys(A.points >> (A.scale_exp - k), bits)
    return int(np.unique(keys).size)


def child_counts(A: GridSet, level: int, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """For each level-``level`` cube meeting ``A``, count its level-``level+depth`` children.

    Returns ``(cubes, counts)`` with cubes as a sorted ``(n, d)`` coordinate array.
    """
    _check_level(A, level + depth)
    kids = cubes_at(A, level + depth)
    parents = kids >> depth
    cubes, counts = np.unique(parents, axis=0, return_counts=True)
    return cubes, counts


def group_by_cube(A: GridSet, level: int):
    """Split ``A`` by level-``level`` cube.

    Returns ``(cubes, groups)``: sorted cube coordinates and, for each, the
    indices of its points in lexicographic order.
    """
    _check_level(A, level)
    ids = A.points >> (A.scale_exp - level)
    keys = pack_keys(ids, max(1, level + (A.span - 1).bit_length()))
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    cut = np.nonzero(sorted_keys[1:] != sorted_keys[:-1])[0] + 1
    groups = np.split(order, cut) if len(order) else []
    cubes = ids[[g[0] for g in groups]] if groups else np.zeros((0, A.dim), dtype=np.int64)
    return cubes, groups


def is_uniform(A: GridSet, L: int) -> UniformProfile | NonUniform:
    """Return the branching profile of ``A`` if it is (L, m/L)-uniform.

    Otherwise returns a falsy :class:`NonUniform` naming the first scale ``s``
    and cube whose child count disagrees with the first cube at that scale.
    """
    if L < 1 or A.scale_exp % L:
        raise ValueError(f"L={L} does not divide m={A.scale_exp}")
    if len(A) == 0:
        raise ValueError("empty set")
    S = A.scale_exp // L
    branching = []
    for s in range(S):
        cubes, counts = child_counts(A, s * L, L)
        bad = np.nonzero(counts != counts[0])[0]
        if bad.size:
            i = int(bad[0])
            return NonUniform(
                s,
                DyadicCube(s * L, tuple(int(c) for c in cubes[i])),
                (int(counts[0]), int(counts[i])),
            )
        branching.append(int(counts[0]))
    return UniformProfile(L, S, tuple(branching))


def renormalize_set(A: GridSet, cube: DyadicCube) -> GridSet:
    """``A^I``: blow up ``A ∩ I`` to the unit cube; result has scale ``m - level``."""
    if cube.dim != A.dim:
        raise ValueError("cube dimension mismatch")
    _check_level(A, cube.level)
    shift = A.scale_exp - cube.level
    coords = np.asarray(cube.coords, dtype=np.int64)
    inside = np.all((A.points >> shift) == coords, axis=1)
    if not inside.any():
        raise ValueError("empty intersection with cube")
    pts = A.points[inside] - (coords << shift)
    return GridSet(A.dim, shift, pts, _canonical=True)


def truncate_set(A: GridSet, level: int) -> GridSet:
    """The 2^-level-set of cube corners whose level-``level`` cube meets ``A``."""
    _check_level(A, level)
    return GridSet(A.dim, level, cubes_at(A, level), _canonical=True)


def _as_fraction(r) -> Fraction:
    if isinstance(r, float):
        return Fraction(r)
    return Fraction(r)


def neighborhood_count(A: GridSet, r, k: int, norm: str = "l2") -> int:
    """``|A^(r)|_{2^-k}`` over the lattice of cubes inside ``[0, 1)^d``.

    ``A^(r)`` is the closed ``r``-neighbourhood in the ``l2`` (default) or
    ``linf`` norm.  Cubes are half-open, so touching a cube only along its
    open upper faces does not count as meeting it.  Exact rational arithmetic.
    """
    if norm not in ("l2", "linf"):
        raise ValueError("norm must be 'l2' or 'linf'")
    r = _as_fraction(r)
    if r <= 0:
        raise ValueError("radius must be positive")
    if k < 0:
        raise ValueError("level must be nonnegative")
    if len(A) == 0:
        return 0
    d, m = A.dim, A.scale_exp
    # Common integer unit 1/(den * 2**M).
    M = max(m, k)
    den = r.denominator
    unit_pts = A.points.astype(object) * (den << (M - m))
    cube_side = den << (M - k)
    rad = r.numerator << M
    n_cubes = 1 << k
    reach = -(-rad // cube_side) + 1
    hit: set[tuple[int, ...]] = set()
    for a in unit_pts:
        base = [int(c) // cube_side for c in a]
        ranges = [
            range(max(0, b - reach), min(n_cubes, b + reach + 1)) for b in base
        ]
        for q in product(*ranges):
            if q in hit:
                continue
            # per coordinate gap to [lo, hi) and whether the nearest point is the open face
            total = 0
            ok = True
            strict = False
            for ai, qi in zip(a, q):
                lo = qi * cube_side
                hi = lo + cube_side
                if ai < lo:
                    g = lo - ai
                elif ai >= hi:
                    g = ai - hi
                    strict = True
                else:
                    g = 0
                if norm == "linf":
                    if g > rad or (g == rad and ai >= hi):
                        ok = False
                        break
                else:
                    total += g * g
            if not ok:
                continue
            if norm == "l2":
                lim = rad * rad
                if total > lim or (total == lim and strict):
                    continue
            hit.add(q)
    return len(hit)


def from_iterable(d: int, m: int, points: Iterable[Sequence[int]]) -> GridSet:
    return GridSet(d, m, list(points))
