import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freeprodlab.hilbert import (DimensionCapError, FreeProductSpace, alternating_sequences,
                                 build_free_product_space, embed_subspace, factor_inclusion,
                                 free_product_dimension, hermitian_parts, make_pointed,
                                 pointed_from_json)


def brute_force_word_count(cdims, depth):
    # enumerate every tag sequence and keep the alternating ones
    total = 1
    for L in range(1, depth + 1):
        for tags in itertools.product(range(len(cdims)), repeat=L):
            if all(tags[j] != tags[j + 1] for j in range(L - 1)):
                total += int(np.prod([cdims[t] for t in tags]))
    return total


def random_unit(rng, n):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


@pytest.mark.parametrize("depth,expected", [(0, 1), (1, 4), (2, 8), (3, 14)])
def test_dimension_frozen_values_dims_2_3(depth, expected):
    # centered dims (1, 2): 1 + (1+2) + (1*2+2*1) + (1*2*1+2*1*2)
    assert free_product_dimension([1, 2], depth) == expected
    H, K = make_pointed(2), make_pointed(3)
    assert build_free_product_space([H, K], depth).dim == expected


@given(st.lists(st.integers(0, 3), min_size=2, max_size=3), st.integers(0, 5))
def test_dimension_matches_brute_force(cdims, depth):
    assert free_product_dimension(cdims, depth) == brute_force_word_count(cdims, depth)


def test_alternating_sequences_skips_empty_factors():
    seqs = list(alternating_sequences(3, 2, [0, 2]))
    assert seqs == [(0, 2), (2, 0)]


def test_householder_swap_frozen():
    xi = np.array([1.0, 1.0]) / np.sqrt(2)
    H = make_pointed(2, xi)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(H.basis_rotation, [[s, s], [s, -s]], atol=1e-15)
    np.testing.assert_allclose(H.basis_rotation @ xi, [1, 0], atol=1e-15)


def test_identity_rotation_when_xi_is_e0():
    H = make_pointed(3)
    assert np.array_equal(H.basis_rotation, np.eye(3))
    A = np.arange(9.0).reshape(3, 3) + 1j
    assert np.array_equal(H.rotate(A), A)


@settings(max_examples=30)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_rotation_is_unitary_and_maps_xi_to_e0(n, seed):
    rng = np.random.default_rng(seed)
    xi = random_unit(rng, n)
    H = make_pointed(n, xi)
    R = H.basis_rotation
    np.testing.assert_allclose(R @ R.conj().T, np.eye(n), atol=1e-12)
    e0 = np.zeros(n)
    e0[0] = 1
    np.testing.assert_allclose(R @ xi, e0, atol=1e-12)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    assert abs(H.state(A) - xi.conj() @ A @ xi) < 1e-12
    assert abs(H.rotate(A)[0, 0] - H.state(A)) < 1e-12


@settings(max_examples=30)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_rotate_is_exactly_star_compatible(n, seed):
    rng = np.random.default_rng(seed)
    H = make_pointed(n, random_unit(rng, n))
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    assert np.array_equal(H.rotate(A.conj().T), H.rotate(A).conj().T)


def test_hermitian_parts():
    A = np.array([[1, 2j], [3, 4 + 1j]])
    Hp, Kp = hermitian_parts(A)
    np.testing.assert_allclose(Hp + 1j * Kp, A)
    np.testing.assert_allclose(Hp, Hp.conj().T)
    np.testing.assert_allclose(Kp, Kp.conj().T)


def test_make_pointed_validation():
    with pytest.raises(ValueError):
        make_pointed(2, [1.0, 1.0])
    with pytest.raises(ValueError):
        make_pointed(0)
    with pytest.raises(ValueError):
        make_pointed(2, [1.0, 0.0, 0.0])


def test_json_roundtrip():
    H = make_pointed(2, np.array([0.6, 0.8j]))
    H2 = pointed_from_json(H.to_json())
    assert H2.dim == 2
    np.testing.assert_allclose(H2.xi, H.xi)
    assert pointed_from_json({"dim": 3}).dim == 3


def test_space_structure():
    space = build_free_product_space([make_pointed(2), make_pointed(3)], 3)
    assert space.words[0] == ()
    assert space.grading(0) == (0, -1)
    assert list(space.lengths) == sorted(space.lengths)
    for w in space.words:
        assert all(w[j][0] != w[j + 1][0] for j in range(len(w) - 1))
    assert len(space.interior(1)) == free_product_dimension([1, 2], 2)
    assert space.manifest()[1] == {"position": 1, "tags": [0], "indices": [0]}


def test_dimension_cap():
    with pytest.raises(DimensionCapError):
        FreeProductSpace([make_pointed(4), make_pointed(4)], 12, dim_cap=1000)
    with pytest.raises(ValueError):
        FreeProductSpace([make_pointed(2)], 2)


def test_tensor_vector():
    space = build_free_product_space([make_pointed(2), make_pointed(3)], 2)
    v = space.tensor_vector([1, 0], [np.array([2.0, 3.0]), np.array([5.0])])
    assert v[space.index[((1, 0), (0, 0))]] == 10
    assert v[space.index[((1, 1), (0, 0))]] == 15
    assert np.count_nonzero(v) == 2
    assert not space.tensor_vector([0, 1, 0], [np.ones(1), np.ones(2), np.ones(1)]).any()
    assert space.tensor_vector([], [])[0] == 1


def test_factor_inclusion_snaps_to_integers():
    sub = make_pointed(2)
    full = make_pointed(3)
    M = factor_inclusion(sub, full)
    np.testing.assert_array_equal(M, np.eye(3)[:, :2])


def test_embed_subspace_is_isometry():
    rng = np.random.default_rng(0)
    xi = random_unit(rng, 2)
    sub = build_free_product_space([make_pointed(2, xi), make_pointed(2)], 3)
    full = build_free_product_space([make_pointed(3, np.r_[xi, 0]), make_pointed(2)], 3)
    V = embed_subspace(sub, full)
    G = (V.conj().T @ V).toarray()
    np.testing.assert_allclose(G, np.eye(sub.dim), atol=1e-12)
