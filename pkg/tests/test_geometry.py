import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gridsets
from dsk.generators import CorpusSpec, generate
from dsk.geometry import (
    AffineFlat,
    dimension_threshold,
    fit_flat,
    grassmannian_inf_covering,
    min_dimension,
    orthonormal_complement,
    porosity_check,
    porous_covering_bound,
    projection_covering,
    subspace_net,
)
from dsk.grid import GridSet, covering_count


def x_axis(m, length=None):
    n = length if length is not None else 1 << m
    return GridSet(2, m, [[i, 0] for i in range(n)])


def test_fit_axis_line():
    assert fit_flat(x_axis(4), 1).slack == pytest.approx(0, abs=1e-12)


def test_fit_two_points():
    A = GridSet(3, 4, [[1, 2, 3], [9, 4, 15]])
    assert fit_flat(A, 1).slack == pytest.approx(0, abs=1e-12)


def test_fit_full_lattice_line():
    fit = fit_flat(GridSet.full(2, 3), 1)
    assert fit.slack > 0.25
    assert fit.verify(GridSet.full(2, 3))


@given(gridsets(max_size=20), st.integers(0, 3))
def test_fit_slack_certified(A, k):
    k = min(k, A.dim)
    fit = fit_flat(A, k)
    assert fit.flat.dim_k == k
    assert fit.verify(A)
    dist = fit.flat.distance(A.real_points())
    assert np.max(dist) == pytest.approx(fit.slack, abs=1e-12)


def test_min_dimension_examples():
    assert min_dimension(GridSet(2, 4, [[3, 3]]))[0] == 0
    assert min_dimension(x_axis(4))[0] <= 1


def test_min_dimension_full_lattice_angle_net():
    A = GridSet.full(2, 4)
    k, _ = min_dimension(A, 4)
    assert k == 2
    # oracle: the best line of any angle on a pi/256 grid still misses the threshold
    pts = A.real_points()
    thr = dimension_threshold(2, 4)
    for i in range(256):
        th = math.pi * i / 256
        normal = np.array([-math.sin(th), math.cos(th)])
        proj = pts @ normal
        assert (proj.max() - proj.min()) / 2 > thr


def test_projection_examples():
    A = GridSet.full(2, 4)
    assert projection_covering(A, AffineFlat.axes(2, [0, 1]), 3) == covering_count(A, 3)
    assert projection_covering(x_axis(4), AffineFlat.axes(2, [1]), 4) == 1
    diag = AffineFlat.linear([[1.0, 1.0]])
    val = projection_covering(GridSet.full(2, 4), diag, 4)
    assert 2**4 <= val <= 2 * 2**4 * 2


def test_grassmannian_examples():
    A = GridSet(2, 4, [[1, 5], [7, 0], [3, 3]])
    assert grassmannian_inf_covering(A, 0, 3)[0] == covering_count(A, 3)
    val, flat = grassmannian_inf_covering(x_axis(4), 1, 4)
    assert val == 1
    assert np.allclose(np.abs(flat.frame), [[0.0, 1.0]])


def test_grassmannian_product_drops_full_factor():
    spec = CorpusSpec("product", 2, 6, factors=[CorpusSpec("cantor_dyadic", 1, 6), CorpusSpec("full", 1, 6)])
    A = generate(spec)
    val, flat = grassmannian_inf_covering(A, 1, 6)
    assert np.allclose(np.abs(flat.frame), [[1.0, 0.0]])
    assert val == 8


def test_subspace_net_orthonormal():
    for d, k in [(2, 1), (3, 1), (3, 2), (4, 2)]:
        for V in subspace_net(d, k, 6):
            assert np.allclose(V.frame @ V.frame.T, np.eye(k), atol=1e-12)
            C = orthonormal_complement(V.frame, d)
            assert np.allclose(C @ V.frame.T, 0, atol=1e-12)


def test_porosity_empty():
    assert porosity_check(GridSet(1, 4), 1, 0.5, 0.1).porous


def test_porosity_full_lattice_fails():
    m = 6
    res = porosity_check(GridSet.full(1, m), 1, 0.5, 2.0 ** (-m + 2))
    assert not res.porous and res.counterexample is not None


@pytest.mark.parametrize("m", [6, 8])
def test_porosity_cantor(m):
    A = generate(CorpusSpec("cantor_dyadic", 1, m, mask="odd"))
    assert porosity_check(A, 1, 1 / 16, 2.0**-m).porous


def test_porous_bound_examples():
    assert porous_covering_bound(2, 0.25, 8, 0.0, 3.0) == pytest.approx(2 + 3 / 8)
    assert porous_covering_bound(1, 0.5, 10**9, 1.0, 0.0) == pytest.approx(0.5)


def test_flat_json_roundtrip():
    f = AffineFlat.from_vectors([[1.0, 2.0, 0.0]], [0.1, 0.2, 0.3])
    g = AffineFlat.from_dict(f.to_dict())
    assert np.allclose(f.frame, g.frame) and np.allclose(f.offset, g.offset)
