"""Sumsets, additive energy, scale-r energy and the Plunnecke-Ruzsa checker."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import fftconvolve

from ._validation import check_same_lattice
from .errors import TheoremCheckFailed
from .grid import GridSet, _key_bits, pack_keys
from .measures import GridMeasure, convolve, lq_norm_power

__all__ = [
    "EnergyResult",
    "ScaleEnergy",
    "PRReport",
    "TheoremCheckFailed",
    "sumset",
    "iterated_sumset",
    "representation_counts",
    "additive_energy",
    "scale_energy",
    "pr_check",
    "small_doubling_certificate",
    "energy_by_convolution",
]

DENSE_BOX_LIMIT = 1 << 24
PAIR_LIMIT = 1 << 22


def _box(A: GridSet, B: GridSet):
    lo = A.points.min(axis=0) + B.points.min(axis=0)
    hi = A.points.max(axis=0) + B.points.max(axis=0)
    return lo, hi - lo + 1


def _dense_sum_counts(A: GridSet, B: GridSet):
    """Representation counts of ``A + B`` on the dense bounding box (via FFT)."""
    lo_a, lo_b = A.points.min(axis=0), B.points.min(axis=0)
    ga = np.zeros(tuple(A.points.max(axis=0) - lo_a + 1))
    gb = np.zeros(tuple(B.points.max(axis=0) - lo_b + 1))
    ga[tuple((A.points - lo_a).T)] = 1.0
    gb[tuple((B.points - lo_b).T)] = 1.0
    counts = np.rint(fftconvolve(ga, gb)).astype(np.int64)
    return lo_a + lo_b, counts


def representation_counts(A: GridSet, B: GridSet | None = None, method: str = "auto"):
    """``r(s) = #{(a, b): a + b = s}`` as ``(sums, counts)`` with sums sorted.

    ``method`` is ``"hash"`` (pairwise sums grouped by packed key),
    ``"fft"`` (dense bounding box) or ``"auto"``.
    """
    if B is None:
        B = A
    check_same_lattice(A, B)
    if len(A) == 0 or len(B) == 0:
        raise ValueError("empty set")
    if method == "auto":
        _, shape = _box(A, B)
        box = int(np.prod(shape))
        pairs = len(A) * len(B)
        method = "fft" if box <= DENSE_BOX_LIMIT and (pairs > PAIR_LIMIT or pairs > 4 * box) else "hash"
    span = A.span + B.span
    if method == "hash":
        if len(A) * len(B) > 4 * PAIR_LIMIT:
            raise ValueError("too many pairs for the hash path")
        bits = _key_bits(span << A.scale_exp)
        d = A.dim
        sums = (A.points[:, None, :] + B.points[None, :, :]).reshape(-1, d)
        keys, first, counts = np.unique(pack_keys(sums, bits), return_index=True, return_counts=True)
        return sums[first], counts.astype(np.int64)
    if method == "fft":
        _, shape = _box(A, B)
        if int(np.prod(shape)) > DENSE_BOX_LIMIT:
            raise ValueError("bounding box too large for the dense path")
        lo, grid = _dense_sum_counts(A, B)
        idx = np.argwhere(grid > 0)
        return idx + lo, grid[grid > 0]
    raise ValueError(f"unknown method {method!r}")


def sumset(A: GridSet, B: GridSet, method: str = "auto") -> GridSet:
    """``A + B`` with extended range (``span = A.span + B.span``)."""
    sums, _ = representation_counts(A, B, method)
    return GridSet(A.dim, A.scale_exp, sums, A.span + B.span)


def iterated_sumset(A: GridSet, k: int, method: str = "auto") -> GridSet:
    """``kA = A + ... + A`` (k summands)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if A.dim * _key_bits((k * A.span) << A.scale_exp) > 62:
        raise OverflowError("iterated sumset exceeds the 64-bit key range")
    out = A
    for _ in range(k - 1):
        out = sumset(out, A, method)
    return out


@dataclass(frozen=True)
class EnergyResult:
    """Exact additive energy of a set of size ``size`` at scale exponent ``m``."""

    quadruples: int
    size: int
    m: int

    @property
    def normalized(self) -> Fraction:
        return Fraction(self.quadruples, self.size**3)

    @property
    def sigma_star(self) -> float:
        """``sigma`` with ``E = 2^(-sigma m) |X|^3``."""
        if self.m == 0:
            return math.nan
        return -math.log2(self.quadruples / self.size**3) / self.m

    def to_dict(self) -> dict:
        return {
            "quadruples": str(self.quadruples),
            "size": self.size,
            "m": self.m,
            "normalized": float(self.normalized),
            "sigma_star": self.sigma_star,
        }


def additive_energy(X: GridSet, method: str = "auto") -> EnergyResult:
    """Count quadruples with ``x1 + y1 = x2 + y2`` as ``sum_s r(s)^2``."""
    if len(X) == 0:
        raise ValueError("empty set")
    _, counts = representation_counts(X, X, method)
    q = int(np.dot(counts.astype(object), counts.astype(object)))
    return EnergyResult(q, len(X), X.scale_exp)


def energy_by_convolution(X: GridSet) -> int:
    """``||1_X * 1_X||_2^2`` through the exact measure convolution."""
    mu = GridMeasure.counting(X)
    val = lq_norm_power(convolve(mu, mu, method="direct"), 2)
    assert val.denominator == 1
    return int(val)


@dataclass(frozen=True)
class ScaleEnergy:
    value: Fraction | float
    conv_norm_sq: Fraction | float
    radius: Fraction

    @property
    def ratio(self) -> float:
        return float(self.value) / float(self.conv_norm_sq)


def _pairwise_slab_sum(pts: np.ndarray, w, r_num: int, r_den: int):
    """``sum w(z1) w(z2)`` over pairs with ``|z1 - z2| <= r_num / r_den`` (Euclidean).

    The distance test is exact integer arithmetic; rational weights are
    summed exactly through a common denominator.
    """
    pts = pts.astype(object)
    exact = isinstance(w[0], Fraction)
    if exact:
        ints, den = _common_denominator(w)
        vec = np.asarray(ints, dtype=object)
    else:
        vec = np.asarray(w, dtype=np.float64)
    lim = r_num * r_num
    den2 = r_den * r_den
    total = 0
    for start in range(0, len(pts), 256):
        diff = pts[start:start + 256, None, :] - pts[None, :, :]
        close = np.sum(diff * diff, axis=2) * den2 <= lim
        part = close.astype(vec.dtype) @ vec
        total += vec[start:start + 256] @ part
    if exact:
        return Fraction(int(total), den * den)
    return float(total)


def _common_denominator(w) -> tuple[list[int], int]:
    den = math.lcm(*(x.denominator for x in w))
    return [int(x * den) for x in w], den


def scale_energy(mu: GridMeasure, nu: GridMeasure, r) -> ScaleEnergy:
    """``E_r(mu, nu) = (mu^2 x nu^2){ |x1 + y1 - x2 - y2| <= r }``.

    Computed as ``sum_{|z1 - z2| <= r} c(z1) c(z2)`` with ``c = mu * nu``,
    alongside ``||c||_2^2`` (on the lattice ``mu^(m) = mu``).
    """
    if mu.dim != nu.dim or mu.scale_exp != nu.scale_exp:
        raise ValueError("dimension/scale mismatch")
    r = Fraction(r)
    m = mu.scale_exp
    if r < Fraction(1, 1 << m):
        raise ValueError("r must be at least 2^-m")
    conv = convolve(mu, nu, method="direct")
    w = list(conv.weights)
    # radius in lattice units: r * 2^m
    ru = r * (1 << m)
    value = _pairwise_slab_sum(conv.points.astype(np.int64), w, ru.numerator, ru.denominator)
    norm_sq = lq_norm_power(conv, 2)
    return ScaleEnergy(value, norm_sq, r)


@dataclass
class PRReport:
    K: Fraction
    size: int
    sizes: dict[int, int]
    bounds: dict[int, Fraction]

    @property
    def slack(self) -> Fraction:
        k = max(self.sizes)
        return self.bounds[k] - self.sizes[k]

    def to_dict(self) -> dict:
        return {
            "K": str(self.K),
            "size": self.size,
            "sizes": {str(k): v for k, v in self.sizes.items()},
            "bounds": {str(k): str(v) for k, v in self.bounds.items()},
            "slack": str(self.slack),
        }


def pr_check(A: GridSet, k: int, method: str = "auto") -> PRReport:
    """Verify ``|jA| <= K^j |A|`` for ``2 <= j <= k`` with ``K = |A+A|/|A|``.

    Raises :class:`TheoremCheckFailed` on violation (that would be a bug).
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(A) == 0:
        raise ValueError("empty set")
    n = len(A)
    K = None
    sizes, bounds = {}, {}
    current = A
    for j in range(2, k + 1):
        current = sumset(current, A, method)
        sizes[j] = len(current)
        if j == 2:
            K = Fraction(len(current), n)
        bounds[j] = K**j * n
        if sizes[j] > bounds[j]:
            raise TheoremCheckFailed("PR", f"|{j}A| = {sizes[j]} exceeds K^{j}|A| = {bounds[j]}")
    return PRReport(K, n, sizes, bounds)


def small_doubling_certificate(A: GridSet, method: str = "auto") -> float:
    """Smallest ``sigma`` with ``|A + A| <= 2^(sigma m) |A|``."""
    if len(A) == 0:
        raise ValueError("empty set")
    if A.scale_exp < 1:
        raise ValueError("need m >= 1")
    return math.log2(len(sumset(A, A, method)) / len(A)) / A.scale_exp
