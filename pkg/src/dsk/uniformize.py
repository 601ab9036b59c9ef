"""Uniformization: large (L, S)-uniform subsets with their size guarantees.

Every construction checks its own postconditions (subset, uniformity, size
bound) in exact arithmetic and raises :class:`GuaranteeViolation` if one
fails.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_gridset, check_scale_split
from .errors import GuaranteeViolation
from .geometry import min_dimension
from .grid import GridSet, UniformProfile, child_counts, is_uniform, pack_keys, _key_bits

__all__ = [
    "ValueFunction",
    "UniformizationResult",
    "CenteringResult",
    "uniform_subset",
    "uniform_subset_general",
    "uniform_subset_subspace",
    "center_by_translation",
    "collapse_branching",
    "in_middle_third",
    "children_set",
    "UniformSubset",
]


@dataclass(frozen=True)
class ValueFunction:
    """``F_s``: a map from 2^-L-sets to codes in ``[0, V)``."""

    name: str
    evaluate: Callable[[GridSet], int]
    V: int

    def __call__(self, Y: GridSet) -> int:
        code = int(self.evaluate(Y))
        if not 0 <= code < self.V:
            raise ValueError(f"value function {self.name!r} returned {code}, outside [0, {self.V})")
        return code

    @classmethod
    def constant(cls) -> "ValueFunction":
        return cls("constant", lambda Y: 0, 1)

    @classmethod
    def dimension(cls, d: int) -> "ValueFunction":
        """``D_L`` of the child set, with ``V = d + 1``."""
        return cls("dimension", lambda Y: min_dimension(Y, Y.scale_exp)[0], d + 1)

    @classmethod
    def parity(cls) -> "ValueFunction":
        """Parity of the number of points."""
        return cls("parity", lambda Y: len(Y) % 2, 2)


@dataclass
class UniformizationResult:
    subset: GridSet
    profile: UniformProfile
    size_ratio: Fraction
    guarantee: Fraction
    per_scale_values: tuple[int, ...] | None = None
    mode: str = "plain"

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "L": self.profile.L,
            "S": self.profile.S,
            "branching": list(self.profile.branching),
            "size": len(self.subset),
            "size_ratio": str(self.size_ratio),
            "guarantee": str(self.guarantee),
            "guarantee_met": self.size_ratio >= self.guarantee,
        }
        if self.per_scale_values is not None:
            out["per_scale_values"] = list(self.per_scale_values)
        return out


def children_set(P: np.ndarray, m: int, level: int, L: int, parent: np.ndarray) -> GridSet:
    """``A^I_L`` for the level-``level`` cube ``parent`` (coordinates) of the points ``P``."""
    d = P.shape[1]
    inside = np.all((P >> (m - level)) == parent, axis=1)
    kids = np.unique(P[inside] >> (m - level - L), axis=0) - (parent << L)
    return GridSet(d, L, kids, _canonical=True)


def _group(keys: np.ndarray):
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    return uniq, inverse.reshape(-1), counts


def _band_prune(P: np.ndarray, m: int, L: int, s: int):
    """One bottom-up step at scale ``s``: keep the best dyadic band of child counts.

    Returns ``(kept point mask, R, parent keys of survivors)``.
    """
    d = P.shape[1]
    cshift = m - (s + 1) * L
    child_ids = P >> cshift
    ckeys = pack_keys(child_ids, _key_bits(1 << ((s + 1) * L)))
    cuniq, cinv, cmass = _group(ckeys)
    first = np.zeros(len(cuniq), dtype=np.int64)
    first[cinv[::-1]] = np.arange(len(P) - 1, -1, -1)
    parents = child_ids[first] >> L
    pkeys = pack_keys(parents, _key_bits(max(2, 1 << (s * L))))
    puniq, pinv, pcount = _group(pkeys)
    # rank children inside each parent: heaviest first, then lexicographic
    order = np.lexsort((cuniq, -cmass, pinv))
    rank = np.empty(len(cuniq), dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(pcount)[:-1]))
    rank[order] = np.arange(len(cuniq)) - np.repeat(starts, pcount)
    band = np.array([int(c).bit_length() - 1 for c in pcount], dtype=np.int64)
    best = None
    for j in range(d * L + 1):
        in_band = band == j
        if not in_band.any():
            continue
        r = int(pcount[in_band].min())
        keep_child = in_band[pinv] & (rank < r)
        mass = int(cmass[keep_child].sum())
        if best is None or mass > best[0]:
            best = (mass, r, keep_child)
    _, R, keep_child = best
    return keep_child[cinv], R


def _pigeonhole_values(P: np.ndarray, m: int, L: int, s: int, fn: ValueFunction):
    """Keep the level-``sL`` cubes whose child set takes the heaviest ``fn`` value."""
    level = s * L
    parents = P >> (m - level)
    pkeys = pack_keys(parents, _key_bits(max(2, 1 << level)))
    puniq, pinv, pmass = _group(pkeys)
    first = np.zeros(len(puniq), dtype=np.int64)
    first[pinv[::-1]] = np.arange(len(P) - 1, -1, -1)
    codes = np.array(
        [fn(children_set(P, m, level, L, parents[i])) for i in first], dtype=np.int64
    )
    totals = np.bincount(codes, weights=pmass, minlength=fn.V)
    v = int(np.argmax(totals))  # argmax returns the smallest code on ties
    return (codes == v)[pinv], v


def _finish(A: GridSet, P: np.ndarray, L: int, guarantee: Fraction, mode: str, values=None):
    out = GridSet(A.dim, A.scale_exp, P, _canonical=False)
    if not out.issubset(A):
        raise GuaranteeViolation(mode, "output is not a subset of the input")
    profile = is_uniform(out, L)
    if not profile:
        raise GuaranteeViolation(mode, f"output is not uniform: {profile}")
    ratio = Fraction(len(out), len(A))
    if ratio < guarantee:
        raise GuaranteeViolation(mode, f"size ratio {ratio} below guarantee {guarantee}")
    return UniformizationResult(out, profile, ratio, guarantee, values, mode)


def uniform_subset(A: GridSet, L: int) -> UniformizationResult:
    """(L, S)-uniform ``A' ⊆ A`` with ``|A'| >= (2Ld)^-S |A|``.

    Bottom-up over scales: at each level-sL cube, child counts are grouped
    into dyadic bands ``[2^j, 2^(j+1))``; the band keeping the most points
    after trimming every cube to the band minimum wins.  The bands ``j = 0``
    and ``j = dL`` hold a single count and lose nothing to trimming, which is
    what gives the factor ``1/(2dL)`` per scale.
    """
    A = check_gridset(A)
    S = check_scale_split(A.scale_exp, L)
    return _uniformize(A, L, [None] * S, Fraction(1, (2 * L * A.dim) ** S), "plain")


def _uniformize(A: GridSet, L: int, fns: Sequence[ValueFunction | None], guarantee, mode):
    S = len(fns)
    m = A.scale_exp
    P = A.points
    values = [None] * S
    for s in range(S - 1, -1, -1):
        keep, _ = _band_prune(P, m, L, s)
        P = P[keep]
        if fns[s] is not None:
            keep, v = _pigeonhole_values(P, m, L, s, fns[s])
            P = P[keep]
            values[s] = v
    vals = None if all(v is None for v in values) else tuple(values)
    return _finish(A, P, L, guarantee, mode, vals)


def uniform_subset_general(A: GridSet, L: int, fns: Sequence[ValueFunction]) -> UniformizationResult:
    """Uniform subset on which each ``F_s`` is constant over the child sets ``A'^I_L``.

    ``|A'| >= (2LVd)^-S |A|`` with ``V`` the largest code bound.  Band pruning
    and value pigeonholing are interleaved scale by scale (finest first), so
    later steps only delete whole subtrees and never disturb either property.
    """
    A = check_gridset(A)
    S = check_scale_split(A.scale_exp, L)
    fns = list(fns)
    if len(fns) != S:
        raise ValueError(f"need one value function per scale ({S}), got {len(fns)}")
    V = max(f.V for f in fns) if fns else 1
    res = _uniformize(A, L, fns, Fraction(1, (2 * L * V * A.dim) ** S), "valuefn")
    _check_constancy(res.subset, L, fns)
    return res


def _check_constancy(B: GridSet, L: int, fns) -> None:
    m = B.scale_exp
    for s, fn in enumerate(fns):
        cubes, _ = child_counts(B, s * L, L)
        codes = {fn(children_set(B.points, m, s * L, L, c)) for c in cubes}
        if len(codes) != 1:
            raise GuaranteeViolation("valuefn", f"F_{s} takes values {sorted(codes)}")


def uniform_subset_subspace(A: GridSet, L: int) -> UniformizationResult:
    """Uniform subset with ``D_L(A'^I_L)`` constant at every scale.

    ``per_scale_values`` holds the dimension sequence;
    ``|A'| >= (2d(d+1)L)^-S |A|``.
    """
    A = check_gridset(A)
    S = check_scale_split(A.scale_exp, L)
    fn = ValueFunction.dimension(A.dim)
    res = uniform_subset_general(A, L, [fn] * S)
    res.mode = "subspace"
    return res


# ---------------------------------------------------------------------------
# centering


@dataclass
class CenteringResult:
    subset: GridSet
    shift: tuple[Fraction, ...]
    size_ratio: Fraction
    guarantee: Fraction
    L: int
    S: int

    def translated(self) -> list[tuple[Fraction, ...]]:
        """Exact points of ``A' + y``."""
        m = self.subset.scale_exp
        return [tuple(Fraction(int(c), 1 << m) + y for c, y in zip(p, self.shift)) for p in self.subset.points]

    def to_dict(self) -> dict:
        return {
            "mode": "center",
            "L": self.L,
            "S": self.S,
            "size": len(self.subset),
            "shift": [str(y) for y in self.shift],
            "size_ratio": str(self.size_ratio),
            "guarantee": str(self.guarantee),
            "guarantee_met": self.size_ratio >= self.guarantee,
        }


def in_middle_third(x: Sequence[Fraction], level: int) -> bool:
    """Whether ``x`` lies in the concentric third of its level-``level`` dyadic cube."""
    scale = 1 << level
    for xi in x:
        xi = Fraction(xi)
        if not 0 <= xi < 1:
            return False
        frac = xi * scale - math.floor(xi * scale)
        if not Fraction(1, 3) <= frac < Fraction(2, 3):
            return False
    return True


def _window_counts(u_mod: np.ndarray, M: int, lo: int, hi: int, base_shift: np.ndarray, step: int, n_choices: int):
    """Survivor counts for every shift ``base_shift + step * k`` with ``k`` in ``[0, n_choices)^d``.

    ``u_mod`` holds ``u mod M`` per point and coordinate; a point survives a
    shift when every shifted coordinate lands in ``[lo, hi)`` mod ``M``.
    """
    n, d = u_mod.shape
    k = np.arange(n_choices, dtype=np.int64)
    ok = []
    for i in range(d):
        val = (u_mod[:, i:i + 1] + base_shift[i] + step * k[None, :]) % M
        ok.append(((val >= lo) & (val < hi)).astype(np.int64))
    letters = "abcdefghijklmnopqrstuvw"[:d]
    expr = ",".join(f"z{c}" for c in letters) + "->" + letters
    counts = np.einsum(expr, *ok)
    return counts, ok


def center_by_translation(A: GridSet, L: int) -> CenteringResult:
    """Subset ``A'`` and shift ``y in [-1/3, 1/3)^d`` centring ``A' + y`` at every scale.

    Every point of ``A' + y`` lies in the middle third of its level-sL cube
    for ``s = 0, ..., S-1``, and ``|A'| >= 3^(-2dS) |A|``.  The shift is
    ``t / (3 * 2^m)`` with integer ``t``; its residues are fixed fine to
    coarse, each time keeping the choice with the most survivors.

    For ``L = 1`` and ``S >= 2`` no point can be centred at two consecutive
    scales (the middle thirds of a cube and of its halves are disjoint), so
    the size bound fails and :class:`GuaranteeViolation` is raised.
    """
    A = check_gridset(A)
    S = check_scale_split(A.scale_exp, L)
    d, m = A.dim, A.scale_exp
    three_p = 3 * A.points
    if np.any(three_p < (1 << m)) or np.any(three_p >= (2 << m)):
        raise ValueError("input must lie in [1/3, 2/3)^d")
    guarantee = Fraction(1, 3 ** (2 * d * S))
    if S == 0:
        return CenteringResult(A, (Fraction(0),) * d, Fraction(1), guarantee, L, S)
    alive = np.ones(len(A), dtype=bool)
    tau = np.zeros(d, dtype=np.int64)
    for s in range(S - 1, -1, -1):
        N = 1 << (L * (S - s))
        M = 3 * N
        if s == S - 1:
            step, n_choices = 1, M
        else:
            step, n_choices = M // (1 << L), 1 << L
        u = three_p[alive] % M
        counts, _ = _window_counts(u, M, N, 2 * N, tau, step, n_choices)
        flat = int(np.argmax(counts))  # first maximum = lexicographically least choice
        k = np.array(np.unravel_index(flat, counts.shape), dtype=np.int64)
        tau = tau + step * k
        val = (three_p + tau) % M
        alive &= np.all((val >= N) & (val < 2 * N), axis=1)
    full = 3 << m
    t = np.where(tau >= (2 << m), tau - full, tau)
    sub = A.take(alive)
    shift = tuple(Fraction(int(ti), full) for ti in t)
    res = CenteringResult(sub, shift, Fraction(len(sub), len(A)), guarantee, L, S)
    _verify_centering(res)
    return res


def _verify_centering(res: CenteringResult) -> None:
    if res.size_ratio < res.guarantee:
        raise GuaranteeViolation(
            "center", f"size ratio {res.size_ratio} below 3^(-2dS) = {res.guarantee} (L={res.L}, S={res.S})"
        )
    if not all(Fraction(-1, 3) <= y < Fraction(1, 3) for y in res.shift):
        raise GuaranteeViolation("center", f"shift {res.shift} outside [-1/3, 1/3)^d")
    for x in res.translated():
        for s in range(res.S):
            if not in_middle_third(x, s * res.L):
                raise GuaranteeViolation("center", f"point {x} not centred at scale {s}")


# ---------------------------------------------------------------------------
# collapsing


def collapse_branching(A: GridSet, L: int, scales) -> UniformizationResult:
    """Collapse the branching of a uniform set to 1 at each ``s`` in ``scales``.

    In every level-sL cube with ``s`` in ``scales`` only the lexicographically
    least child subtree is kept.  Checked exactly: ``R'_s = 1`` on ``scales``
    and ``R_s`` elsewhere, ``|A'| = |A| / prod R_s``, and off ``scales`` the
    child sets ``A'^I_L`` equal those of ``A``.
    """
    A = check_gridset(A)
    S = check_scale_split(A.scale_exp, L)
    prof = is_uniform(A, L)
    if not prof:
        raise ValueError(f"input not uniform: {prof}")
    scales = sorted({int(s) for s in scales})
    if any(not 0 <= s < S for s in scales):
        raise ValueError(f"scales must lie in [0, {S})")
    m = A.scale_exp
    P = A.points
    for s in scales:
        child = P >> (m - (s + 1) * L)
        parent = child >> L
        keys_p = pack_keys(parent, _key_bits(max(2, 1 << (s * L))))
        keys_c = pack_keys(child, _key_bits(1 << ((s + 1) * L)))
        # least child key per parent
        order = np.lexsort((keys_c, keys_p))
        kp, kc = keys_p[order], keys_c[order]
        head = np.concatenate(([True], kp[1:] != kp[:-1]))
        least = dict(zip(kp[head].tolist(), kc[head].tolist()))
        P = P[np.array([least[a] == b for a, b in zip(keys_p.tolist(), keys_c.tolist())], dtype=bool)]
    guarantee = Fraction(1, math.prod(prof.branching[s] for s in scales))
    res = _finish(A, P, L, guarantee, "collapse")
    expected = tuple(1 if s in scales else r for s, r in enumerate(prof.branching))
    if res.profile.branching != expected:
        raise GuaranteeViolation("collapse", f"branching {res.profile.branching} != {expected}")
    if res.size_ratio != guarantee:
        raise GuaranteeViolation("collapse", f"size ratio {res.size_ratio} != {guarantee}")
    for s in range(S):
        if s in scales:
            continue
        cubes, _ = child_counts(res.subset, s * L, L)
        for c in cubes:
            if children_set(res.subset.points, m, s * L, L, c) != children_set(A.points, m, s * L, L, c):
                raise GuaranteeViolation("collapse", f"child set changed off the collapsed scales at s={s}")
    return res


# ---------------------------------------------------------------------------
# estimator wrapper


class UniformSubset(TransformerMixin, BaseEstimator):
    """Transformer returning a uniform subset of a :class:`GridSet`.

    ``mode`` is one of ``plain``, ``subspace``, ``valuefn`` (needs
    ``value_fn``), ``center`` or ``collapse`` (needs ``scales``).
    """

    def __init__(self, L=2, mode="plain", value_fn=None, scales=()):
        self.L = L
        self.mode = mode
        self.value_fn = value_fn
        self.scales = scales

    def fit(self, X, y=None):
        A = check_gridset(X)
        S = check_scale_split(A.scale_exp, self.L)
        if self.mode == "plain":
            res = uniform_subset(A, self.L)
        elif self.mode == "subspace":
            res = uniform_subset_subspace(A, self.L)
        elif self.mode == "valuefn":
            if self.value_fn is None:
                raise ValueError("mode 'valuefn' needs value_fn")
            res = uniform_subset_general(A, self.L, [self.value_fn] * S)
        elif self.mode == "center":
            res = center_by_translation(A, self.L)
        elif self.mode == "collapse":
            res = collapse_branching(A, self.L, self.scales)
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        self.result_ = res
        self.subset_ = res.subset
        self.guarantee_ = res.guarantee
        self.size_ratio_ = res.size_ratio
        self.profile_ = getattr(res, "profile", None)
        return self

    def transform(self, X):
        if not hasattr(self, "subset_"):
            raise ValueError("call fit first")
        A = check_gridset(X)
        if A != self.result_.subset and not self.result_.subset.issubset(A):
            raise ValueError("transform expects the set passed to fit")
        return self.subset_
