import numpy as np
import pytest

from freeprodlab.fock import (FockSpace, catalan, creation, fock_as_pointed, semicircle_moments,
                              vacuum_state, verify_compression_relation)


def test_catalan_values():
    assert [catalan(k) for k in range(8)] == [1, 1, 2, 5, 14, 42, 132, 429]


def test_fock_dimension():
    assert FockSpace(1, 5).dim == 6
    assert FockSpace(2, 3).dim == 1 + 2 + 4 + 8
    with pytest.raises(ValueError):
        FockSpace(0, 2)


def test_semicircle_moments_are_catalan():
    rows = semicircle_moments(5, 8)
    assert [r["catalan"] for r in rows] == [1, 2, 5, 14, 42]
    assert all(r["residual"] == 0 for r in rows)
    assert [round(r["moment"]) for r in rows] == [1, 2, 5, 14, 42]


def test_truncation_too_shallow_undercounts():
    # depth 2 cannot see paths reaching height 3
    rows = semicircle_moments(3, 2)
    assert rows[2]["moment"] < 5


def test_creation_relations():
    F = FockSpace(3, 3)
    ls = [creation(F, i) for i in range(3)]
    inner = F.projection_upto(2)
    for i in range(3):
        for j in range(3):
            prod = (ls[i].conj().T @ ls[j] @ inner).toarray()
            expected = inner.toarray() if i == j else np.zeros((F.dim, F.dim))
            np.testing.assert_array_equal(prod, expected)
    # sum of range projections plus vacuum projection is the identity
    total = sum((l @ l.conj().T).toarray() for l in ls)
    total[0, 0] += 1
    np.testing.assert_array_equal(total, F.projection_upto(3).toarray())
    with pytest.raises(IndexError):
        creation(F, 3)


def test_vacuum_state_and_pointed():
    F = FockSpace(2, 2)
    l = creation(F, 1)
    assert vacuum_state((l.conj().T @ l).toarray()) == 1
    assert vacuum_state((l @ l.conj().T).toarray()) == 0
    assert fock_as_pointed(F).dim == F.dim


@pytest.mark.parametrize("n", [1, 2])
def test_compression_relation(n):
    rng = np.random.default_rng(n)
    xi = rng.normal(size=2) + 1j * rng.normal(size=2)
    xi /= np.linalg.norm(xi)
    samples = [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3)]
    assert verify_compression_relation(samples, xi, n, 2, 4) < 1e-12
