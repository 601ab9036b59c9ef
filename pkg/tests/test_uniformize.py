from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_set
from dsk.errors import GuaranteeViolation
from dsk.generators import CorpusSpec, generate
from dsk.grid import GridSet, is_uniform
from dsk.uniformize import (
    UniformSubset,
    ValueFunction,
    center_by_translation,
    children_set,
    collapse_branching,
    in_middle_third,
    uniform_subset,
    uniform_subset_general,
    uniform_subset_subspace,
)


@st.composite
def split_sets(draw, dims=(1, 2), Ls=(1, 2, 3), Ss=(1, 2, 3)):
    d = draw(st.sampled_from(dims))
    L = draw(st.sampled_from(Ls))
    S = draw(st.sampled_from(Ss))
    m = L * S
    if d * m > 12:
        S = max(1, 12 // (d * L))
        m = L * S
    n = 1 << m
    pts = draw(st.lists(st.tuples(*[st.integers(0, n - 1)] * d), min_size=1, max_size=60))
    return GridSet(d, m, pts), L


def middle_third_set(rng, d, m, size):
    lo = -(-(1 << m) // 3)
    hi = (2 << m) // 3
    if 3 * hi >= (2 << m):
        hi -= 1
    side = hi - lo + 1
    total = side**d
    idx = rng.choice(total, size=min(size, total), replace=False)
    pts = np.stack(np.unravel_index(idx, (side,) * d), axis=1) + lo
    return GridSet(d, m, pts)


@given(split_sets())
def test_uniform_subset_property(case):
    A, L = case
    res = uniform_subset(A, L)
    assert res.subset.issubset(A)
    assert is_uniform(res.subset, L) == res.profile
    assert res.size_ratio >= Fraction(1, (2 * L * A.dim) ** (A.scale_exp // L))


def test_uniform_input_kept():
    A = GridSet.full(2, 4)
    res = uniform_subset(A, 2)
    assert res.subset == A and res.size_ratio == 1


def test_singleton_profile():
    res = uniform_subset(GridSet(2, 6, [[5, 9]]), 2)
    assert res.profile.branching == (1, 1, 1)


def test_random_200_points(rng):
    A = random_set(rng, 1, 6, 200)
    res = uniform_subset(A, 2)
    assert len(res.subset) >= 4
    assert is_uniform(res.subset, 2)


def test_constant_value_function_reduces(rng):
    A = random_set(rng, 2, 6, 120)
    plain = uniform_subset(A, 2)
    general = uniform_subset_general(A, 2, [ValueFunction.constant()] * 3)
    assert general.subset == plain.subset


@given(split_sets(Ls=(1, 2), Ss=(2, 3)))
def test_parity_constancy(case):
    A, L = case
    S = A.scale_exp // L
    fn = ValueFunction.parity()
    res = uniform_subset_general(A, L, [fn] * S)
    m = A.scale_exp
    for s in range(S):
        parents = np.unique(res.subset.points >> (m - s * L), axis=0)
        codes = {fn(children_set(res.subset.points, m, s * L, L, p)) for p in parents}
        assert len(codes) == 1
    assert res.size_ratio >= Fraction(1, (2 * L * 2 * A.dim) ** S)


def test_dimension_function_matches_subspace(rng):
    A = random_set(rng, 2, 6, 150)
    a = uniform_subset_general(A, 2, [ValueFunction.dimension(2)] * 3)
    b = uniform_subset_subspace(A, 2)
    assert a.subset == b.subset and a.per_scale_values == b.per_scale_values


def test_subspace_on_line():
    A = generate(CorpusSpec("flat", 2, 9, k=1))
    line = GridSet(2, 9, A.points[A.points[:, 1] == 0])
    res = uniform_subset_subspace(line, 3)
    assert all(v in (0, 1) for v in res.per_scale_values)
    assert res.per_scale_values[-1] == 1


def test_subspace_full_lattice():
    res = uniform_subset_subspace(GridSet.full(2, 6), 3)
    assert res.per_scale_values == (2, 2)


def test_subspace_singleton():
    res = uniform_subset_subspace(GridSet(2, 6, [[1, 2]]), 2)
    assert res.per_scale_values == (0, 0, 0)


def test_value_function_range_checked():
    bad = ValueFunction("bad", lambda Y: 5, 2)
    with pytest.raises(ValueError):
        bad(GridSet(1, 2, [[0]]))


def test_center_singleton():
    res = center_by_translation(GridSet(2, 6, [[32, 32]]), 2)
    assert len(res.subset) == 1


def test_center_middle_third_lattice():
    # lattice points of [1/3, 2/3) at m=4: 6/16 .. 10/16
    A = GridSet(1, 4, [[i] for i in range(6, 11)])
    res = center_by_translation(A, 2)
    assert len(res.subset) >= 1
    assert res.size_ratio >= Fraction(1, 81)
    for x in res.translated():
        assert in_middle_third(x, 0) and in_middle_third(x, 2)


@pytest.mark.parametrize("d,L,S", [(1, 2, 2), (1, 3, 3), (2, 2, 2), (2, 3, 2), (1, 2, 4)])
def test_center_random(rng, d, L, S):
    A = middle_third_set(rng, d, L * S, 80)
    res = center_by_translation(A, L)
    assert res.size_ratio >= res.guarantee
    assert all(Fraction(-1, 3) <= y < Fraction(1, 3) for y in res.shift)
    for x in res.translated():
        assert all(in_middle_third(x, s * L) for s in range(S))


def test_center_l1_impossible(rng):
    A = middle_third_set(rng, 1, 3, 3)
    with pytest.raises(GuaranteeViolation):
        center_by_translation(A, 1)


def test_center_rejects_outside():
    with pytest.raises(ValueError):
        center_by_translation(GridSet(1, 4, [[0]]), 2)


def test_in_middle_third():
    assert in_middle_third((Fraction(1, 2),), 0)
    assert not in_middle_third((Fraction(1, 3) - Fraction(1, 100),), 0)
    assert in_middle_third((Fraction(5, 8),), 2)  # cube [1/2, 3/4), middle [7/12, 2/3)


def test_collapse_examples():
    A = GridSet.full(1, 4)
    assert collapse_branching(A, 2, []).subset == A
    res = collapse_branching(A, 2, [0])
    assert res.profile.branching == (1, 4)
    assert len(res.subset) == 4
    assert len(collapse_branching(A, 2, [0, 1]).subset) == 1


@given(split_sets(Ls=(1, 2), Ss=(2, 3)), st.data())
def test_collapse_property(case, data):
    A, L = case
    U = uniform_subset(A, L).subset
    S = A.scale_exp // L
    scales = data.draw(st.sets(st.integers(0, S - 1)))
    res = collapse_branching(U, L, scales)
    prof = is_uniform(U, L)
    assert len(res.subset) * np.prod([prof.branching[s] for s in scales], dtype=np.int64) == len(U)


def test_collapse_rejects_nonuniform():
    with pytest.raises(ValueError):
        collapse_branching(GridSet(1, 4, [[0], [1], [4], [8]]), 2, [0])


def test_estimator_shape(rng):
    A = random_set(rng, 2, 6, 100)
    est = UniformSubset(L=2)
    out = est.fit_transform(A)
    assert out == est.subset_ and est.size_ratio_ >= est.guarantee_
    assert est.get_params()["L"] == 2
    est.set_params(mode="subspace")
    assert est.fit(A).result_.mode == "subspace"
    with pytest.raises(ValueError):
        UniformSubset(L=2).transform(A)


def test_estimator_clone():
    from sklearn.base import clone

    est = UniformSubset(L=3, mode="collapse", scales=(0,))
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert not hasattr(twin, "subset_")
