"""Multi-scale structure analysis and theorem-conclusion checkers.

Checkers verify given witnesses exactly; the witness search lives in
:func:`analyze_structure` and is heuristic (principal-component flats).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import lsq_linear
from sklearn.base import BaseEstimator

from ._validation import check_gridset, check_scale_split
from .geometry import (
    AffineFlat,
    dimension_threshold,
    fit_flat,
    grassmannian_inf_covering,
    porosity_check,
    projection_covering,
)
from .grid import GridSet, cubes_at, group_by_cube, is_uniform, truncate_set
from .measures import GridMeasure, lq_norm, lq_norm_power
from .sumsets import additive_energy
from .uniformize import children_set, in_middle_third, uniform_subset_subspace

__all__ = [
    "REPORT_SCHEMA",
    "CubeRecord",
    "ScaleRecord",
    "StructureReport",
    "ClauseResult",
    "Ledger",
    "analyze_structure",
    "check_theorem2",
    "check_theorem1_conclusions",
    "energy_structure_experiment",
    "flattening_check",
    "StructureAnalyzer",
]

REPORT_SCHEMA = "structure-report/1"
FLOAT_TOL = 1e-12


def pow2_ge(value: Fraction, exponent: Fraction) -> bool:
    """Exact test of ``value >= 2**exponent`` for rational ``value > 0`` and ``exponent``."""
    value, exponent = Fraction(value), Fraction(exponent)
    if value <= 0:
        return False
    p, q = exponent.numerator, exponent.denominator
    lhs = value**q
    rhs = Fraction(2) ** p
    return lhs >= rhs


# ---------------------------------------------------------------------------
# structure report


@dataclass
class CubeRecord:
    coords: tuple[int, ...]
    dim: int
    fit_slack: float
    flat: AffineFlat
    containment_slack: float
    contained: bool
    projection: int
    saturation_ratio: float

    @classmethod
    def from_dict(cls, data: dict) -> "CubeRecord":
        return cls(
            tuple(int(v) for v in data["coords"]),
            int(data["dim"]),
            float(data["fit_slack"]),
            AffineFlat.from_dict(data["flat"]),
            float(data["containment_slack"]),
            bool(data["contained"]),
            int(data["projection_covering"]),
            float(data["saturation_ratio"]),
        )

    def to_dict(self) -> dict:
        return {
            "coords": list(self.coords),
            "dim": self.dim,
            "fit_slack": self.fit_slack,
            "flat": self.flat.to_dict(),
            "containment_slack": self.containment_slack,
            "contained": self.contained,
            "projection_covering": self.projection,
            "saturation_ratio": self.saturation_ratio,
        }


@dataclass
class ScaleRecord:
    s: int
    k: int
    R: int
    log_ok: bool
    cubes: list[CubeRecord] = field(default_factory=list)

    @property
    def min_saturation(self) -> float:
        return min(c.saturation_ratio for c in self.cubes)

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "k": self.k,
            "R": self.R,
            "log_ok": self.log_ok,
            "min_saturation_ratio": self.min_saturation,
            "cubes": [c.to_dict() for c in self.cubes],
        }


@dataclass
class StructureReport:
    """Per-scale witnesses ``(k_s, W_I)`` for a uniform set."""

    L: int
    S: int
    d: int
    delta: Fraction
    net_res: int
    scales: list[ScaleRecord]

    @property
    def k(self) -> tuple[int, ...]:
        return tuple(r.k for r in self.scales)

    @property
    def branching(self) -> tuple[int, ...]:
        return tuple(r.R for r in self.scales)

    @property
    def delta_achieved(self) -> float:
        """Smallest ``delta`` with ``log R_s >= L (k_s - delta)`` at every scale."""
        if not self.scales:
            return 0.0
        return max(0.0, max(r.k - math.log2(r.R) / self.L for r in self.scales))

    def flat_for(self, s: int, coords) -> AffineFlat:
        for c in self.scales[s].cubes:
            if c.coords == tuple(coords):
                return c.flat
        raise KeyError(f"no cube {tuple(coords)} at scale {s}")

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "L": self.L,
            "S": self.S,
            "d": self.d,
            "delta": str(self.delta),
            "net_res": self.net_res,
            "k": list(self.k),
            "branching": list(self.branching),
            "delta_achieved": self.delta_achieved,
            "scales": [r.to_dict() for r in self.scales],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StructureReport":
        if data.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {data.get('schema')!r}")
        scales = [
            ScaleRecord(
                int(r["s"]),
                int(r["k"]),
                int(r["R"]),
                bool(r["log_ok"]),
                [CubeRecord.from_dict(c) for c in r["cubes"]],
            )
            for r in data["scales"]
        ]
        return cls(int(data["L"]), int(data["S"]), int(data["d"]), Fraction(data["delta"]), int(data["net_res"]), scales)


def _cube_views(A: GridSet, level: int):
    """Yield ``(cube coords, A^I)`` for every level-``level`` cube ``I`` meeting ``A``."""
    cubes, groups = group_by_cube(A, level)
    shift = A.scale_exp - level
    for c, g in zip(cubes, groups):
        yield tuple(int(v) for v in c), GridSet(A.dim, shift, A.points[g] - (c << shift), _canonical=True)


def analyze_structure(A: GridSet, L: int, delta=Fraction(1, 4), net_res: int = 32) -> StructureReport:
    """Find per-scale dimensions ``k_s`` and flats for a uniform set.

    ``k_s`` is the least ``k`` such that, for every ``I`` of level ``sL``,
    the child set ``A^I_L`` has a principal-component ``k``-flat within
    ``(sqrt(d) + 1) 2^-L`` and ``A^I`` itself has one within ``2^-L``
    (that is ``2^-(s+1)L`` before blowing up).  ``k = d`` always qualifies.
    Flats are reported in renormalized coordinates of ``I``.  The saturation
    ratio is ``R_s / (2^((k_s - delta) L) |pi_W A^I|_{2^-L})`` with ``W``
    the best member of a ``(d - k_s)``-subspace net.
    """
    A = check_gridset(A)
    S = check_scale_split(A.scale_exp, L)
    prof = is_uniform(A, L)
    if not prof:
        raise ValueError(f"input not (L, S)-uniform: {prof}; run uniformize first")
    delta = Fraction(delta).limit_denominator(1 << 20) if isinstance(delta, float) else Fraction(delta)
    d, m = A.dim, A.scale_exp
    thr = dimension_threshold(d, L)
    radius = 2.0 ** (-L)
    scales = []
    cache: dict = {}
    for s in range(S):
        level = s * L
        views = list(_cube_views(A, level))
        # minimal k working for every cube
        common = set(range(d + 1))
        kids = []
        for _, Z in views:
            Y = truncate_set(Z, L)
            kids.append(Y)
            key = ("dims", Y.points.tobytes())
            if key not in cache:
                cache[key] = {j for j in range(d + 1) if fit_flat(Y, j).slack <= thr}
            common &= cache[key]
            # the flat must also hold A^I itself within 2^-L
            key = ("hold", Z.scale_exp, Z.points.tobytes())
            if key not in cache:
                cache[key] = {j for j in range(d + 1) if fit_flat(Z, j).slack <= radius + FLOAT_TOL}
            common &= cache[key]
        k_s = min(common) if common else d
        R = prof.branching[s]
        log_ok = pow2_ge(Fraction(R), L * (k_s - delta))
        rec = ScaleRecord(s, k_s, R, log_ok)
        for (c, Z), Y in zip(views, kids):
            ckey = ("cube", k_s, Z.scale_exp, Z.points.tobytes())
            if ckey not in cache:
                fit = fit_flat(Z, k_s)
                proj, _ = grassmannian_inf_covering(Z, k_s, L, net_res)
                cache[ckey] = (fit, proj, fit_flat(Y, k_s).slack)
            fit, proj, child_slack = cache[ckey]
            ratio = R / (2.0 ** ((k_s - float(delta)) * L) * proj)
            rec.cubes.append(
                CubeRecord(c, k_s, child_slack, fit.flat, fit.slack, fit.slack <= radius + FLOAT_TOL, int(proj), ratio)
            )
        scales.append(rec)
    return StructureReport(L, S, d, delta, net_res, scales)


# ---------------------------------------------------------------------------
# ledgers


@dataclass
class ClauseResult:
    clause: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"clause": self.clause, "passed": self.passed, "detail": self.detail}


@dataclass
class Ledger:
    theorem: str
    clauses: list[ClauseResult] = field(default_factory=list)

    def add(self, clause: str, passed: bool, detail: str = "") -> None:
        self.clauses.append(ClauseResult(clause, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def __bool__(self) -> bool:
        return self.passed

    def failing(self) -> list[str]:
        return [c.clause for c in self.clauses if not c.passed]

    def __getitem__(self, clause: str) -> ClauseResult:
        for c in self.clauses:
            if c.clause == clause:
                return c
        raise KeyError(clause)

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "passed": self.passed,
            "clauses": [c.to_dict() for c in self.clauses],
        }


def _as_fraction(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(x).limit_denominator(1 << 20)
    return Fraction(x)


def check_theorem2(
    A_prime: GridSet,
    L: int,
    delta,
    report: StructureReport,
    original_size: int | None = None,
) -> Ledger:
    """Verify the three conclusions for ``A'`` and the witnesses in ``report``.

    (i) uniformity with the report's branching; (ii) ``|A'| >= 2^(-delta m) |A|``
    (skipped without ``original_size``); (iii) ``log R_s >= L (k_s - delta)``
    and every ``A' ∩ I`` within ``2^-(s+1)L`` of its reported flat.
    """
    A_prime = check_gridset(A_prime)
    S = check_scale_split(A_prime.scale_exp, L)
    delta = _as_fraction(delta)
    m = A_prime.scale_exp
    ledger = Ledger("2")
    prof = is_uniform(A_prime, L)
    ok = bool(prof) and prof.branching == report.branching
    ledger.add("i", ok, f"profile={getattr(prof, 'branching', prof)}, report={report.branching}")
    if original_size is not None:
        ratio = Fraction(original_size, len(A_prime))
        ok = pow2_ge(Fraction(1) / ratio, -delta * m)
        ledger.add("ii", ok, f"|A'|={len(A_prime)}, |A|={original_size}")
    problems = []
    if len(report.scales) != S:
        problems.append("report has the wrong number of scales")
    for rec in report.scales:
        if not pow2_ge(Fraction(rec.R), L * (rec.k - delta)):
            problems.append(f"s={rec.s}: log R={math.log2(rec.R):.4f} < L(k-delta)={float(L * (rec.k - delta)):.4f}")
        flats = {c.coords: c.flat for c in rec.cubes}
        seen: dict = {}
        for c, Z in _cube_views(A_prime, rec.s * L):
            flat = flats.get(c)
            if flat is None:
                problems.append(f"s={rec.s}: no flat for cube {c}")
                continue
            if flat.dim_k != rec.k:
                problems.append(f"s={rec.s}: flat dimension {flat.dim_k} != k_s={rec.k}")
            key = (id(flat), Z.points.tobytes())
            if key not in seen:
                seen[key] = float(flat.distance(Z.real_points()).max())
            if seen[key] > 2.0 ** (-L) + FLOAT_TOL:
                problems.append(f"s={rec.s}: cube {c} slack {seen[key]:.4g} > 2^-L")
    ledger.add("iii", not problems, "; ".join(problems[:5]))
    return ledger


def _flat_for(flats, s: int, coords) -> AffineFlat:
    entry = flats[s]
    if isinstance(entry, AffineFlat):
        return entry
    return entry[tuple(int(c) for c in coords)]


def _cube_flat_distance(flat: AffineFlat, lo: np.ndarray, hi: np.ndarray) -> float:
    """Euclidean distance from the flat to the closed box ``[lo, hi]``."""
    d = flat.d
    P = np.eye(d) - flat.frame.T @ flat.frame
    res = lsq_linear(P, P @ flat.offset, bounds=(lo, hi), method="bvls")
    return float(np.linalg.norm(P @ res.x - P @ flat.offset))


def _comparable(weights, name: str, ledger: Ledger, clause: str) -> None:
    w = list(weights)
    hi, lo = max(w), min(w)
    ok = hi <= 2 * lo
    ledger.add(clause, ok, "" if ok else f"{name}: max {hi} > 2 * min {lo}")


def check_theorem1_conclusions(
    mu: GridMeasure,
    nu: GridMeasure,
    A: GridSet,
    B: GridSet,
    L: int,
    delta,
    ks,
    W_flats,
    V_flats,
    q=2,
    shifts: tuple | None = None,
) -> Ledger:
    """Evaluate clauses A1-A4, B1-B4 and C for given witnesses.

    ``W_flats[s]`` / ``V_flats[s]`` are either one flat used for every cube
    of scale ``s`` or a mapping from cube coordinates to flats.  ``W`` flats
    are linear ``(d - k_s)``-subspaces; ``V`` flats are affine ``k_s``-flats.
    ``shifts = (y_A, y_B)`` translates the sets before clause C (default: none).
    """
    A = check_gridset(A, name="A")
    B = check_gridset(B, name="B")
    S = check_scale_split(A.scale_exp, L)
    if B.scale_exp != A.scale_exp or mu.scale_exp != A.scale_exp or nu.scale_exp != A.scale_exp:
        raise ValueError("all inputs must share the scale exponent")
    if not A.issubset(mu.support()):
        raise ValueError("A is not contained in supp(mu)")
    if not B.issubset(nu.support()):
        raise ValueError("B is not contained in supp(nu)")
    ks = list(ks)
    if len(ks) != S:
        raise ValueError(f"need one k_s per scale ({S})")
    delta = _as_fraction(delta)
    m, d = A.scale_exp, A.dim
    ledger = Ledger("1")
    muA = mu.restrict(A)
    # A1
    exact = mu.backend == "rational" and float(q).is_integer()
    if exact:
        q = int(q)
        ratio = Fraction(lq_norm_power(muA, q)) / Fraction(lq_norm_power(mu, q))
        ok = pow2_ge(ratio, -delta * m * q)
    else:
        ok = math.log2(lq_norm(muA, q)) >= math.log2(lq_norm(mu, q)) - float(delta) * m - FLOAT_TOL
    ledger.add("A1", ok, f"q={q}")
    _comparable([mu.weight_of(p) for p in A], "mu on A", ledger, "A2")
    profA = is_uniform(A, L)
    ledger.add("A3", bool(profA), str(profA))
    problems = []
    if profA:
        for s in range(S):
            level = s * L
            cubes, groups = group_by_cube(A, level)
            for c, g in zip(cubes, groups):
                W = _flat_for(W_flats, s, c)
                if W.dim_k != d - ks[s]:
                    problems.append(f"s={s}: W has dimension {W.dim_k}, expected {d - ks[s]}")
                    continue
                cov = projection_covering(GridSet(d, m, A.points[g], _canonical=True), W, (s + 1) * L)
                if not pow2_ge(Fraction(profA.branching[s], cov), (ks[s] - delta) * L):
                    problems.append(f"s={s}: R={profA.branching[s]} < 2^((k-delta)L) * {cov}")
    ledger.add("A4", bool(profA) and not problems, "; ".join(problems[:5]))
    # B clauses
    nuB = nu.restrict(B)
    massB = nuB.mass()
    if nu.backend == "rational":
        ok = pow2_ge(Fraction(massB), -delta * m)
    else:
        ok = math.log2(massB) >= -float(delta) * m - FLOAT_TOL
    ledger.add("B1", ok, f"nu(B)={massB}")
    _comparable([nu.weight_of(p) for p in B], "nu on B", ledger, "B2")
    profB = is_uniform(B, L)
    ledger.add("B3", bool(profB), str(profB))
    problems = []
    for s in range(S):
        level, fine = s * L, (s + 1) * L
        side = 2.0 ** (-fine)
        tol = math.sqrt(d) * side + FLOAT_TOL
        half_diag = 0.5 * math.sqrt(d) * side
        cubes, groups = group_by_cube(B, level)
        for c, g in zip(cubes, groups):
            V = _flat_for(V_flats, s, c)
            if V.dim_k != ks[s]:
                problems.append(f"s={s}: V has dimension {V.dim_k}, expected {ks[s]}")
                continue
            fine_cubes = np.unique(B.points[g] >> (m - fine), axis=0)
            centre_dist = V.distance((fine_cubes + 0.5) * side)
            for q_cube, cd in zip(fine_cubes, centre_dist):
                if cd <= tol:
                    continue
                if cd - half_diag > tol:
                    dist = cd - half_diag
                else:
                    lo = q_cube * side
                    dist = _cube_flat_distance(V, lo, lo + side)
                if dist > tol:
                    problems.append(f"s={s}: cube {tuple(int(v) for v in q_cube)} at distance {dist:.4g}")
    ledger.add("B4", not problems, "; ".join(problems[:5]))
    # C
    yA, yB = shifts if shifts is not None else ((0,) * d, (0,) * d)
    bad = None
    for X, y in ((A, yA), (B, yB)):
        y = [Fraction(v) for v in y]
        for p in X.points:
            x = [Fraction(int(c), 1 << m) + yi for c, yi in zip(p, y)]
            for s in range(S):
                if not in_middle_third(x, s * L):
                    bad = (tuple(str(v) for v in x), s)
                    break
            if bad:
                break
        if bad:
            break
    ledger.add("C", bad is None, "" if bad is None else f"point {bad[0]} off-centre at s={bad[1]}")
    return ledger


# ---------------------------------------------------------------------------
# experiments


def energy_structure_experiment(X: GridSet, L: int, delta, sigma: float, net_res: int = 32) -> dict:
    """Empirical run of the energy-to-structure implication.

    If ``E(X, X) >= 2^(-sigma m) |X|^3`` the set is uniformized (with constant
    child-set dimension) and analysed.  A failed clause is reported as a
    miss of this greedy pipeline, not as a counterexample.
    """
    X = check_gridset(X)
    check_scale_split(X.scale_exp, L)
    energy = additive_energy(X)
    m = X.scale_exp
    triggered = energy.sigma_star <= sigma if m else True
    out = {
        "semantics": "empirical",
        "energy": energy.to_dict(),
        "sigma": sigma,
        "triggered": bool(triggered),
    }
    if not triggered:
        out["status"] = "below threshold"
        return out
    res = uniform_subset_subspace(X, L)
    report = analyze_structure(res.subset, L, delta, net_res)
    ledger = check_theorem2(res.subset, L, delta, report, original_size=len(X))
    out.update(
        {
            "subset_size": len(res.subset),
            "uniformization": res.to_dict(),
            "k": list(report.k),
            "branching": list(report.branching),
            "delta_achieved": report.delta_achieved,
            "ledger": ledger.to_dict(),
            "status": "structure found" if ledger.passed else "miss",
        }
    )
    return out


def flattening_check(X: GridSet, k: int, rho: float, lam: float, net_res: int = 8) -> dict:
    """Porosity, size hypothesis and the measured flattening exponent of ``X``."""
    X = check_gridset(X)
    m = X.scale_exp
    por = porosity_check(X, k, rho, 2.0 ** (-m), net_res)
    out = {"k": k, "rho": rho, "lambda": lam, "m": m, "size": len(X), "porosity": por.to_dict()}
    if not por.porous:
        out["status"] = "not porous"
        return out
    need = (k - 1 + lam) * m
    size_ok = math.log2(len(X)) >= need
    energy = additive_energy(X)
    out.update(
        {
            "size_hypothesis": size_ok,
            "size_exponent_needed": need,
            "energy": energy.to_dict(),
            "sigma_star": energy.sigma_star,
            "status": "ok" if size_ok else "size hypothesis fails",
        }
    )
    return out


class StructureAnalyzer(BaseEstimator):
    """Estimator wrapper: ``fit`` stores ``report_`` and ``k_``."""

    def __init__(self, L=3, delta=0.25, net_res=32):
        self.L = L
        self.delta = delta
        self.net_res = net_res

    def fit(self, X, y=None):
        A = check_gridset(X)
        self.report_ = analyze_structure(A, self.L, self.delta, self.net_res)
        self.k_ = self.report_.k
        self.branching_ = self.report_.branching
        return self

    def score(self, X, y=None) -> float:
        """``-delta_achieved`` (higher is more structured)."""
        return -self.fit(X).report_.delta_achieved
