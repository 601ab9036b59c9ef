"""Deterministic corpus of structured 2^-m-sets and measures with known ground truth.

Randomness goes through numpy's ``default_rng`` (PCG64) seeded with the CorpusSpec's
64-bit seed, so a spec always produces the same set on every platform.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .geometry import AffineFlat
from .grid import GridSet
from .measures import GridMeasure

__all__ = [
    "FAMILIES",
    "CorpusSpec",
    "generate",
    "generate_measure",
    "cantor_mask",
    "ground_truth",
    "default_corpus",
]

FAMILIES = ("full", "singleton", "ap", "gap", "flat", "cantor_dyadic", "product", "random", "plane_union")
BRUTE_FORCE_LIMIT = 1 << 22


@dataclass
class CorpusSpec:
    """Family name plus the parameters it uses; unused fields are ignored."""

    family: str
    d: int = 1
    m: int = 4
    k: int | None = None
    n: int | None = None
    seed: int = 0
    mask: str | list[int] | None = None
    base: list[int] | None = None
    generators: list[list[int]] | None = None
    lengths: list[int] | None = None
    frame: list[list[float]] | None = None
    offset: list[float] | None = None
    factors: list["CorpusSpec"] | None = None
    planes: list[dict] | None = None

    def to_dict(self) -> dict:
        out = {"family": self.family, "d": self.d, "m": self.m}
        for name in ("k", "n", "mask", "base", "generators", "lengths", "frame", "offset", "planes"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val
        if self.family in ("random", "gap") or self.seed:
            out["seed"] = self.seed
        if self.factors is not None:
            out["factors"] = [f.to_dict() for f in self.factors]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusSpec":
        data = dict(data)
        if "family" not in data:
            raise KeyError("spec is missing 'family'")
        if data["family"] not in FAMILIES:
            raise ValueError(f"unknown family {data['family']!r}")
        factors = data.pop("factors", None)
        if factors is not None:
            data["factors"] = [cls.from_dict(f) for f in factors]
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown spec fields {sorted(unknown)}")
        return cls(**data)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def cantor_mask(m: int, mask) -> list[int]:
    """Binary digit positions (1 = most significant) forced to vanish."""
    if mask in (None, "odd"):
        return list(range(1, m + 1, 2))
    if mask == "even":
        return list(range(2, m + 1, 2))
    pos = sorted({int(p) for p in mask})
    if any(not 1 <= p <= m for p in pos):
        raise ValueError(f"mask positions must lie in [1, {m}]")
    return pos


def _cantor_1d(m: int, mask) -> np.ndarray:
    zero = set(cantor_mask(m, mask))
    free = [p for p in range(1, m + 1) if p not in zero]
    vals = [0]
    for p in free:
        bit = 1 << (m - p)
        vals = vals + [v + bit for v in vals]
    return np.sort(np.asarray(vals, dtype=np.int64))


def _flat_points(d: int, m: int, flat: AffineFlat) -> np.ndarray:
    """Lattice points within ``sqrt(d) 2^-m`` of ``flat`` (lattice units)."""
    n = 1 << m
    rad = math.sqrt(d) * (1 + 1e-12)
    off = flat.offset * n
    if n**d <= BRUTE_FORCE_LIMIT:
        grids = np.meshgrid(*([np.arange(n)] * d), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
    else:
        # sample the flat at half-cell spacing inside the thickened cube, then snap
        k = flat.dim_k
        reach = math.sqrt(d) * (n + 2)
        centre_t = (np.full(d, n / 2.0) - off) @ flat.frame.T
        axes = [np.arange(c - reach, c + reach + 0.5, 0.5) for c in centre_t]
        ts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1) if k else np.zeros((1, 0))
        xs = off + ts @ flat.frame
        xs = xs[np.all((xs >= -rad - 1) & (xs <= n + rad), axis=1)]
        base = np.unique(np.floor(xs).astype(np.int64), axis=0)
        steps = np.asarray(list(product(range(-2, 3), repeat=d)), dtype=np.int64)
        pts = np.unique((base[:, None, :] + steps[None, :, :]).reshape(-1, d), axis=0)
        pts = pts[np.all((pts >= 0) & (pts < n), axis=1)]
    shifted = AffineFlat(flat.frame, off)
    keep = shifted.distance(pts.astype(np.float64)) <= rad
    return pts[keep]


def _spec_flat(spec: CorpusSpec) -> AffineFlat:
    d = spec.d
    offset = np.zeros(d) if spec.offset is None else np.asarray(spec.offset, dtype=np.float64)
    if spec.frame is not None:
        return AffineFlat.from_vectors(spec.frame, offset, d)
    k = spec.k if spec.k is not None else 1
    return AffineFlat.axes(d, range(k), offset)


def generate(spec: CorpusSpec | dict) -> GridSet:
    """Build the set described by ``spec`` (exact, deterministic)."""
    if isinstance(spec, dict):
        spec = CorpusSpec.from_dict(spec)
    d, m, fam = spec.d, spec.m, spec.family
    n = 1 << m
    if fam == "full":
        return GridSet.full(d, m)
    if fam == "singleton":
        pt = spec.base if spec.base is not None else [0] * d
        return GridSet(d, m, [pt])
    if fam == "ap":
        count = spec.n if spec.n is not None else n
        if not 1 <= count <= n:
            raise ValueError(f"ap length must lie in [1, {n}]")
        pts = np.zeros((count, d), dtype=np.int64)
        pts[:, 0] = np.arange(count)
        return GridSet(d, m, pts)
    if fam == "gap":
        if spec.generators is None or spec.lengths is None:
            raise ValueError("gap needs generators and lengths")
        base = np.asarray(spec.base if spec.base is not None else [0] * d, dtype=np.int64)
        gens = np.asarray(spec.generators, dtype=np.int64).reshape(-1, d)
        if len(gens) != len(spec.lengths):
            raise ValueError("one length per generator")
        coeffs = np.asarray(list(product(*[range(int(l)) for l in spec.lengths])), dtype=np.int64)
        pts = base + coeffs @ gens
        if pts.min() < 0 or pts.max() >= n:
            raise ValueError("gap leaves the lattice range")
        return GridSet(d, m, pts)
    if fam == "flat":
        return GridSet(d, m, _flat_points(d, m, _spec_flat(spec)))
    if fam == "plane_union":
        if not spec.planes:
            raise ValueError("plane_union needs planes")
        parts = []
        for pl in spec.planes:
            sub = CorpusSpec("flat", d, m, k=pl.get("k"), frame=pl.get("frame"), offset=pl.get("offset"))
            parts.append(_flat_points(d, m, _spec_flat(sub)))
        return GridSet(d, m, np.concatenate(parts))
    if fam == "cantor_dyadic":
        vals = _cantor_1d(m, spec.mask)
        grids = np.meshgrid(*([vals] * d), indexing="ij")
        return GridSet(d, m, np.stack([g.ravel() for g in grids], axis=1))
    if fam == "product":
        if not spec.factors:
            raise ValueError("product needs factors")
        sets = [generate(f) for f in spec.factors]
        if any(s.scale_exp != m for s in sets):
            raise ValueError("product factors must share m")
        if sum(s.dim for s in sets) != d:
            raise ValueError("factor dimensions must add up to d")
        pts = sets[0].points
        for s in sets[1:]:
            pts = np.concatenate(
                [np.repeat(pts, len(s), axis=0), np.tile(s.points, (len(pts), 1))], axis=1
            )
        return GridSet(d, m, pts)
    if fam == "random":
        total = n**d
        count = spec.n if spec.n is not None else min(total, 32)
        if not 1 <= count <= total:
            raise ValueError(f"random size must lie in [1, {total}]")
        rng = np.random.default_rng(spec.seed)
        flat_idx = rng.choice(total, size=count, replace=False)
        pts = np.stack(np.unravel_index(flat_idx, (n,) * d), axis=1)
        return GridSet(d, m, pts)
    raise ValueError(f"unknown family {fam!r}")


def generate_measure(spec: CorpusSpec | dict, weights: str = "uniform", seed: int = 0, depth: int = 4) -> GridMeasure:
    """Normalized measure on ``generate(spec)``.

    ``weights="dyadic"`` draws ``2^-j`` with ``j`` uniform in ``[0, depth)``
    per atom and normalizes exactly in rationals.
    """
    A = generate(spec)
    if len(A) == 0:
        raise ValueError("empty base set")
    if weights == "uniform":
        return GridMeasure.uniform(A)
    if weights == "dyadic":
        rng = np.random.default_rng(seed)
        js = rng.integers(0, depth, size=len(A))
        raw = [Fraction(1, 1 << int(j)) for j in js]
        total = sum(raw)
        return GridMeasure(A.dim, A.scale_exp, A.points, [w / total for w in raw])
    raise ValueError(f"unknown weight rule {weights!r}")


def ground_truth(spec: CorpusSpec) -> dict:
    """Properties known in closed form for the family."""
    d, m = spec.d, spec.m
    out: dict = {}
    if spec.family == "full":
        out.update(size=1 << (d * m), dimension=d)
    elif spec.family == "singleton":
        out.update(size=1, dimension=0, energy=1)
    elif spec.family == "ap":
        count = spec.n if spec.n is not None else 1 << m
        out.update(size=count, energy=(2 * count**3 + count) // 3, dimension=1 if count > 1 else 0)
    elif spec.family == "cantor_dyadic":
        free = m - len(cantor_mask(m, spec.mask))
        out.update(size=1 << (d * free))
        if spec.mask in (None, "odd") and d == 1 and m % 2 == 0:
            out.update(energy=6 ** (m // 2), sigma_star=0.5 * math.log2(4 / 3), porous_k=1, porous_rho=1 / 16)
    elif spec.family == "flat":
        k = spec.k if spec.k is not None else 1
        if spec.frame is None and not spec.offset:
            out.update(dimension=k, size=(1 << (k * m)) * (1 << (d - k)))
    elif spec.family == "random":
        out.update(size=spec.n if spec.n is not None else min(1 << (d * m), 32))
    return out


def default_corpus(seed: int = 0) -> list[CorpusSpec]:
    """Small deterministic corpus covering every family."""
    specs = [
        CorpusSpec("full", 1, 6),
        CorpusSpec("full", 2, 4),
        CorpusSpec("singleton", 2, 6),
        CorpusSpec("ap", 1, 6, n=20),
        CorpusSpec("gap", 2, 6, base=[1, 2], generators=[[3, 1], [1, 5]], lengths=[5, 4]),
        CorpusSpec("cantor_dyadic", 1, 8, mask="odd"),
        CorpusSpec("cantor_dyadic", 2, 6, mask="odd"),
        CorpusSpec("flat", 2, 6, k=1),
        CorpusSpec("flat", 2, 6, frame=[[1.0, 2.0]], offset=[0.1, 0.05]),
        CorpusSpec("flat", 3, 4, k=2),
        CorpusSpec(
            "product",
            2,
            6,
            factors=[CorpusSpec("full", 1, 6), CorpusSpec("cantor_dyadic", 1, 6, mask="odd")],
        ),
        CorpusSpec("random", 1, 8, n=40, seed=seed),
        CorpusSpec("random", 2, 5, n=40, seed=seed + 1),
        CorpusSpec("random", 3, 4, n=30, seed=seed + 2),
        CorpusSpec(
            "plane_union",
            2,
            6,
            planes=[{"k": 1, "offset": [0.0, 0.0]}, {"k": 1, "offset": [0.0, 0.5]}],
        ),
    ]
    return specs
