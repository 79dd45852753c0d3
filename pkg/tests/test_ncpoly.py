import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from freeprodlab.freeprod import identity_operator, lift_left_operator, vector_state
from freeprodlab.hilbert import build_free_product_space, make_pointed
from freeprodlab.ncpoly import (Letter, NCPoly, center_decompose, default_tag, eval_poly, eval_word,
                                involution)


def rmat(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def test_default_tag_is_alphabetic_prefix():
    assert default_tag("a1") == "a"
    assert default_tag("xy12") == "xy"
    with pytest.raises(ValueError):
        default_tag("1a")


def test_parse_basic_terms():
    p = NCPoly.parse("2.0*a1.b2'.a3 - 1.5 + (1-0.5j)*a1")
    assert p.degree == 3
    assert p.scalar_part() == -1.5
    assert p.symbols() == {"a1": "a", "b2": "b", "a3": "a"}
    assert sorted(p.tags()) == ["a", "b"]
    coeffs = dict((tuple(str(l) for l in w), c) for c, w in p.terms)
    assert coeffs[("a1", "b2'", "a3")] == 2.0
    assert coeffs[("a1",)] == 1 - 0.5j


def test_parse_signs_and_double_star():
    assert NCPoly.parse("x + -2*y") == NCPoly.parse("x - 2*y")
    assert NCPoly.parse("a''") == NCPoly.parse("a")
    assert NCPoly.parse("-a + a") == NCPoly()
    assert str(NCPoly()) == "0"


@pytest.mark.parametrize("bad", ["", "a +", "2*", "a..b", "a # b", "3 a"])
def test_parse_errors(bad):
    with pytest.raises(ValueError):
        NCPoly.parse(bad)


def test_explicit_tags_override_prefix():
    p = NCPoly.parse("u.v", tags={"u": "left", "v": "right"})
    assert p.symbols() == {"u": "left", "v": "right"}


def test_involution_reverses_and_conjugates():
    p = NCPoly.parse("(2+1j)*a.b'")
    q = NCPoly.parse("(2-1j)*b.a'")
    assert p.involution() == q
    assert involution(p) == q
    assert p.star == q


def test_arithmetic():
    a, b = NCPoly.generator("a"), NCPoly.generator("b")
    assert (a + b) * (a - b) == a * a - a * b + b * a - b * b
    assert a ** 3 == NCPoly.parse("a.a.a")
    assert 2 * a - a == a
    assert 1 - a == NCPoly.parse("1 - a")
    assert hash(a * b) == hash(NCPoly.parse("a.b"))


def test_eval_dense_and_sparse_agree():
    rng = np.random.default_rng(0)
    X, Y = rmat(rng, 3), rmat(rng, 3)
    p = NCPoly.parse("x.y' - 0.5*y.y + 2")
    expected = X @ Y.conj().T - 0.5 * Y @ Y + 2 * np.eye(3)
    np.testing.assert_allclose(eval_poly(p, {"x": X, "y": Y}), expected, atol=1e-12)
    S = eval_poly(p, {"x": sp.csc_matrix(X), "y": sp.csc_matrix(Y)})
    np.testing.assert_allclose(S.toarray() if sp.issparse(S) else S, expected, atol=1e-12)


def test_eval_word_and_missing_generator():
    rng = np.random.default_rng(1)
    X = rmat(rng, 2)
    w = (Letter("x", "x", False), Letter("x", "x", True))
    np.testing.assert_allclose(eval_word(w, {"x": X}), X @ X.conj().T)
    with pytest.raises(KeyError):
        eval_poly(NCPoly.parse("x.z"), {"x": X})


def test_center_decompose_reconstructs_and_scalar_is_free_state():
    # the scalar part of the centered decomposition is the free-product state
    rng = np.random.default_rng(2)
    xi = np.array([1, 1j, 0]) / np.sqrt(2)
    eta = np.array([0.6, 0.8])
    H, K = make_pointed(3, xi), make_pointed(2, eta)
    space = build_free_product_space([H, K], 6)
    asg = {"a": {"a1": rmat(rng, 3), "a2": rmat(rng, 3)}, "b": {"b1": rmat(rng, 2)}}
    p = NCPoly.parse("a1.b1.a2.b1' + 0.5*b1.a1' - a2.a1 + 3")
    dec = center_decompose(p, {"a": xi, "b": eta}, asg)
    flat = {**asg["a"], **asg["b"]}
    tag_index = {"a": 0, "b": 1}

    def lift(tag, M):
        return lift_left_operator(M, tag_index[tag], space).matrix

    M = dec.evaluate(asg, lift=lift, identity=identity_operator(space).matrix)
    direct = eval_poly(p, {n: lift(default_tag(n), A) for n, A in flat.items()})
    assert abs(vector_state(M) - vector_state(direct)) < 1e-12
    assert abs(dec.scalar - vector_state(direct)) < 1e-12
    for cw in dec.words:
        tags = [f.tag for f in cw.factors]
        assert all(tags[k] != tags[k + 1] for k in range(len(tags) - 1))
        for f in cw.factors:
            assert abs(f.state) < 1e-12


def test_center_decompose_single_factor_matrix_identity():
    rng = np.random.default_rng(3)
    xi = np.array([1.0, 0, 0])
    A = {"a": {"a1": rmat(rng, 3)}}
    p = NCPoly.parse("a1.a1' + 2*a1")
    dec = center_decompose(p, {"a": xi}, A)
    P = eval_poly(p, A["a"])
    np.testing.assert_allclose(dec.evaluate(A), P, atol=1e-12)
    assert abs(dec.scalar - xi @ P @ xi) < 1e-12


def test_center_decompose_missing_state():
    with pytest.raises(KeyError):
        center_decompose(NCPoly.parse("a.b"), {"a": np.array([1.0])}, {"a": {"a": np.eye(1)}})


# property tests

names = st.sampled_from(["a1", "a2", "b1"])
letters = st.builds(lambda n, s: Letter(n, default_tag(n), s), names, st.booleans())
coeffs = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)
polys = st.lists(st.tuples(coeffs, st.lists(letters, max_size=3).map(tuple)), max_size=4).map(NCPoly)


@given(polys)
def test_str_parse_roundtrip(p):
    assert NCPoly.parse(str(p)) == p


@given(polys)
def test_involution_is_an_involution(p):
    assert p.involution().involution() == p


@settings(max_examples=40, deadline=None)
@given(polys, polys, st.integers(0, 2**32 - 1))
def test_eval_is_a_star_homomorphism(p, q, seed):
    rng = np.random.default_rng(seed)
    asg = {n: rmat(rng, 3) for n in ("a1", "a2", "b1")}
    P, Q = eval_poly(p, asg), eval_poly(q, asg)
    scale = 1 + np.abs(P).max() * np.abs(Q).max()
    np.testing.assert_allclose(eval_poly(p * q, asg), P @ Q, atol=1e-9 * scale)
    np.testing.assert_allclose(eval_poly(p.involution(), asg), P.conj().T, atol=1e-9 * (1 + np.abs(P).max()))
