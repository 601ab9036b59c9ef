from fractions import Fraction

import numpy as np
import pytest

from conftest import random_set
from dsk.analysis import (
    CubeRecord,
    StructureAnalyzer,
    StructureReport,
    analyze_structure,
    check_theorem1_conclusions,
    check_theorem2,
    energy_structure_experiment,
    flattening_check,
    pow2_ge,
)
from dsk.generators import CorpusSpec, generate
from dsk.geometry import AffineFlat
from dsk.grid import GridSet
from dsk.measures import GridMeasure
from dsk.uniformize import center_by_translation, uniform_subset


def flat_set(d, m, k):
    return generate(CorpusSpec("flat", d, m, k=k))


def test_pow2_ge():
    assert pow2_ge(Fraction(4), Fraction(2))
    assert not pow2_ge(Fraction(3), Fraction(2))
    assert pow2_ge(Fraction(3), Fraction(3, 2))  # 9 >= 8
    assert not pow2_ge(Fraction(2), Fraction(3, 2))
    assert pow2_ge(Fraction(1, 4), Fraction(-2))


@pytest.mark.parametrize("k", [0, 1, 2])
def test_flat_recovery_d2(k):
    A = flat_set(2, 6, k)
    U = uniform_subset(A, 2).subset
    rep = analyze_structure(U, 2, Fraction(1, 5), net_res=16)
    assert all(ks == k for ks in rep.k[1:])
    assert check_theorem2(U, 2, Fraction(1, 5), rep, len(A)).passed


def test_full_lattice_report():
    A = GridSet.full(2, 6)
    rep = analyze_structure(A, 3, net_res=8)
    assert rep.k == (2, 2)
    for rec in rep.scales:
        assert all(c.saturation_ratio >= 1 for c in rec.cubes)


def test_singleton_report():
    rep = analyze_structure(GridSet(2, 6, [[3, 40]]), 2)
    assert rep.k == (0, 0, 0)


def test_inflated_report_fails_iii():
    A = flat_set(2, 6, 1)
    U = uniform_subset(A, 2).subset
    rep = analyze_structure(U, 2, Fraction(1, 4), net_res=8)
    bad = StructureReport.from_dict(rep.to_dict())
    for rec in bad.scales:
        rec.k = 2
    led = check_theorem2(U, 2, Fraction(1, 4), bad)
    assert not led.passed and "iii" in led.failing()


def test_vacuous_delta_passes_iii(rng):
    A = uniform_subset(random_set(rng, 2, 6, 50), 2).subset
    rep = analyze_structure(A, 2, 2, net_res=8)
    assert check_theorem2(A, 2, 2, rep)["iii"].passed


def test_report_roundtrip():
    A = flat_set(2, 6, 1)
    rep = analyze_structure(uniform_subset(A, 3).subset, 3, net_res=8)
    again = StructureReport.from_dict(rep.to_dict())
    assert again.to_dict() == rep.to_dict()
    rec = rep.scales[0].cubes[0]
    assert CubeRecord.from_dict(rec.to_dict()).to_dict() == rec.to_dict()


def test_report_schema_checked():
    with pytest.raises(ValueError):
        StructureReport.from_dict({"schema": "other"})


def test_theorem1_line_witness():
    full = GridSet(2, 6, [[i, 0] for i in range(64)])
    mu = GridMeasure.uniform(full)
    W = [AffineFlat.axes(2, [1])] * 3
    V = [AffineFlat.axes(2, [0])] * 3
    led = check_theorem1_conclusions(mu, mu, full, full, 2, Fraction(1, 4), [1, 1, 1], W, V)
    for clause in ("A1", "A2", "A3", "A4", "B1", "B2", "B3", "B4"):
        assert led[clause].passed, clause
    # a line through the origin is not centred at any scale
    assert led.failing() == ["C"]


def test_theorem1_mass_ratio_fails_a2():
    A = GridSet(1, 2, [[0], [2]])
    mu = GridMeasure(1, 2, A.points, [Fraction(3, 4), Fraction(1, 4)])
    led = check_theorem1_conclusions(mu, mu, A, A, 1, Fraction(1, 2), [0, 0], [AffineFlat.axes(1, [0])] * 2, [AffineFlat(np.zeros((0, 1)), [0.25])] * 2)
    assert not led["A2"].passed
    assert "A2" in led.failing()


def test_theorem1_centred_sets():
    m, L = 6, 2
    line = GridSet(2, m, [[i, 32] for i in range(22, 43)])
    cent = center_by_translation(line, L)
    U = uniform_subset(cent.subset, L).subset
    mu = GridMeasure.uniform(U)
    centre = U.real_points().mean(axis=0)
    W = [AffineFlat.axes(2, [0, 1]), AffineFlat.axes(2, [1]), AffineFlat.axes(2, [1])]
    V = [AffineFlat(np.zeros((0, 2)), centre), AffineFlat.axes(2, [0], [0, 0.5]), AffineFlat.axes(2, [0], [0, 0.5])]
    led = check_theorem1_conclusions(
        mu, mu, U, U, L, Fraction(1, 2), [0, 1, 1], W, V, shifts=(cent.shift, cent.shift)
    )
    assert led.passed, led.to_dict()


def test_energy_experiment_ap():
    X = GridSet(1, 6, [[i] for i in range(64)])
    out = energy_structure_experiment(X, 2, Fraction(1, 4), 0.5, net_res=8)
    assert out["energy"]["quadruples"] == str((2 * 64**3 + 64) // 3)
    assert out["status"] == "structure found"
    assert out["k"] == [1, 1, 1]


def test_energy_experiment_sparse(rng):
    X = random_set(rng, 2, 6, 20)
    out = energy_structure_experiment(X, 2, Fraction(1, 4), 0.05)
    assert out["status"] == "below threshold" and "k" not in out


def test_energy_experiment_product():
    spec = CorpusSpec("product", 2, 6, factors=[CorpusSpec("full", 1, 6), CorpusSpec("cantor_dyadic", 1, 6)])
    out = energy_structure_experiment(generate(spec), 3, Fraction(1, 4), 0.5, net_res=8)
    assert out["triggered"]
    assert all(k >= 1 for k in out["k"])


def test_flattening_examples():
    cantor = generate(CorpusSpec("cantor_dyadic", 1, 8))
    out = flattening_check(cantor, 1, 1 / 16, 0.3)
    assert out["porosity"]["porous"] and out["sigma_star"] > 0.1
    # a point is porous for k=1 yet far too small for the size hypothesis
    pt = GridSet(1, 8, [[100]])
    out = flattening_check(pt, 1, 1 / 16, 0.3)
    assert out["status"] == "size hypothesis fails"
    assert flattening_check(GridSet.full(1, 6), 1, 1 / 2, 0.3)["status"] == "not porous"


def test_structure_analyzer():
    est = StructureAnalyzer(L=3, net_res=8)
    A = uniform_subset(flat_set(2, 6, 1), 3).subset
    est.fit(A)
    assert est.k_[-1] == 1
    assert est.get_params() == {"L": 3, "delta": 0.25, "net_res": 8}
    assert est.score(A) <= 0
