from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gridsets, random_set
from dsk.grid import (
    DyadicCube,
    GridSet,
    NonUniform,
    UniformProfile,
    covering_count,
    cubes_at,
    from_iterable,
    group_by_cube,
    is_uniform,
    neighborhood_count,
    pack_keys,
    renormalize_set,
    truncate_set,
    unpack_keys,
)


def test_covering_singleton():
    assert covering_count(GridSet(1, 3, [[0]]), 2) == 1


def test_covering_full():
    assert covering_count(GridSet.full(1, 3), 2) == 4


def test_covering_three_points():
    # 0, 1/8, 1/2 at level 1 lie in cubes 0, 0, 1
    assert covering_count(GridSet(1, 3, [[0], [1], [4]]), 1) == 2


def test_uniform_full_profile():
    assert is_uniform(GridSet.full(1, 4), 2) == UniformProfile(2, 2, (4, 4))


def test_uniform_spread_points():
    A = GridSet(1, 4, [[0], [4], [8], [12]])
    assert is_uniform(A, 2).branching == (4, 1)


def test_uniform_three_children_is_uniform():
    A = GridSet(1, 4, [[0], [4], [8]])
    assert is_uniform(A, 2).branching == (3, 1)


def test_not_uniform():
    A = GridSet(1, 4, [[0], [1], [4], [8]])
    res = is_uniform(A, 2)
    assert isinstance(res, NonUniform) and not res
    assert res.s == 1


def test_renormalize_full():
    A = GridSet.full(2, 4)
    out = renormalize_set(A, DyadicCube(1, (1, 0)))
    assert out == GridSet.full(2, 3)


def test_renormalize_affine():
    A = GridSet(1, 3, [[5]])
    assert renormalize_set(A, DyadicCube(1, (1,))) == GridSet(1, 2, [[1]])


def test_renormalize_quadrant():
    A = GridSet(2, 3, [[5, 6], [1, 1]])
    assert renormalize_set(A, DyadicCube(1, (1, 1))) == GridSet(2, 2, [[1, 2]])


def test_renormalize_empty_raises():
    with pytest.raises(ValueError):
        renormalize_set(GridSet(1, 3, [[0]]), DyadicCube(1, (1,)))


def test_truncate():
    A = GridSet(1, 3, [[0], [1]])
    assert truncate_set(A, 3) == A
    assert truncate_set(A, 1) == GridSet(1, 1, [[0]])
    assert truncate_set(GridSet(1, 3, [[0], [4]]), 1) == GridSet(1, 1, [[0], [1]])


def test_neighborhood_examples():
    # 9/16 is the centre of its level-3 cube; a small ball stays inside it
    assert neighborhood_count(GridSet(1, 4, [[9]]), Fraction(1, 64), 3) == 1
    # at level 4 the same point is a cube corner, so the ball straddles two cubes
    assert neighborhood_count(GridSet(1, 4, [[9]]), Fraction(1, 64), 4) == 2
    assert neighborhood_count(GridSet(1, 3, [[0]]), 1, 0) == 1
    assert neighborhood_count(GridSet(1, 3, [[0]]), Fraction(1, 4), 2) == 2


def test_dyadic_cube_validation():
    with pytest.raises(ValueError):
        DyadicCube(1, (2,))
    c = DyadicCube.containing((5, 2), 3, 1)
    assert c == DyadicCube(1, (1, 0))
    assert c.contains_point((5, 2), 3)


def test_out_of_range_rejected():
    with pytest.raises(ValueError):
        GridSet(1, 2, [[4]])


def test_json_roundtrip():
    A = GridSet(2, 3, [[1, 2], [7, 0]])
    assert GridSet.from_json(A.to_json()) == A
    assert from_iterable(2, 3, [(7, 0), (1, 2)]) == A


@given(gridsets())
def test_pack_roundtrip(A):
    keys = pack_keys(A.points, A.key_bits)
    assert np.array_equal(unpack_keys(keys, A.dim, A.key_bits), A.points)


@given(gridsets(), st.integers(0, 5))
def test_covering_monotone(A, k):
    k = min(k, A.scale_exp)
    assert 1 <= covering_count(A, k) <= len(A)
    if k:
        assert covering_count(A, k - 1) <= covering_count(A, k)


@given(gridsets(max_m=4))
def test_group_by_cube_partitions(A):
    level = A.scale_exp // 2
    cubes, groups = group_by_cube(A, level)
    assert np.array_equal(cubes, cubes_at(A, level))
    assert sorted(np.concatenate(groups).tolist()) == list(range(len(A)))


def test_random_full_consistency(rng):
    A = random_set(rng, 2, 4, 60)
    total = 0
    for c in cubes_at(A, 2):
        total += len(renormalize_set(A, DyadicCube(2, tuple(int(v) for v in c))))
    assert total == len(A)
