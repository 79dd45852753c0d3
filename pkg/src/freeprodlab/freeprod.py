"""Left actions on the truncated free product, the vector state, and the
compression onto a sub free product.

Truncation drops any component whose word would be longer than the depth.
Identities are therefore exact only on an *interior*: columns indexed by words
short enough that no intermediate product reaches the cutoff.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .hilbert import FreeProductSpace, PointedSpace, build_free_product_space, embed_subspace, make_pointed
from .ncpoly import NCPoly, eval_poly


@dataclass(frozen=True, eq=False)
class FreeOperator:
    """Sparse operator on a free-product space.

    ``depth_guard`` bounds how much a single application can increase word
    length; it adds up under composition.
    """

    space: FreeProductSpace
    matrix: sp.csc_matrix
    source: dict = field(default_factory=lambda: {"kind": "composite"})
    depth_guard: int = 1

    def __matmul__(self, other: "FreeOperator") -> "FreeOperator":
        return FreeOperator(self.space, (self.matrix @ other.matrix).tocsc(), {"kind": "composite"},
                            self.depth_guard + other.depth_guard)

    def __add__(self, other: "FreeOperator") -> "FreeOperator":
        return FreeOperator(self.space, (self.matrix + other.matrix).tocsc(), {"kind": "composite"},
                            max(self.depth_guard, other.depth_guard))

    def __sub__(self, other: "FreeOperator") -> "FreeOperator":
        return self + (-1.0) * other

    def __rmul__(self, c) -> "FreeOperator":
        return FreeOperator(self.space, (c * self.matrix).tocsc(), self.source, self.depth_guard)

    @property
    def H(self) -> "FreeOperator":
        return FreeOperator(self.space, self.matrix.conj().T.tocsc(), {"kind": "adjoint"}, self.depth_guard)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def interior(self) -> np.ndarray:
        return self.space.interior(self.depth_guard)


def _as_matrix(T):
    if isinstance(T, FreeOperator):
        return T.matrix
    return T


def lift_left_operator(A, i: int, space: FreeProductSpace) -> FreeOperator:
    """Matrix of ``A`` acting on factor ``i`` of the free product.

    Per column: a word not starting with ``i`` (including ``xi_0``) maps to
    ``<A xi, xi> w + (A xi)° (x) w``; a word ``h (x) rest`` starting with ``i``
    maps to ``<A h, xi> rest + (A h)° (x) rest``.
    """
    if not 0 <= i < len(space.factors):
        raise ValueError(f"unknown factor {i}")
    factor: PointedSpace = space.factors[i]
    A = np.asarray(A, dtype=complex)
    if A.shape != (factor.dim, factor.dim):
        raise ValueError(f"factor {i} has dim {factor.dim}, got matrix of shape {A.shape}")
    Ar = factor.rotate(A)
    a, c, r, B = Ar[0, 0], Ar[1:, 0], Ar[0, 1:], Ar[1:, 1:]
    c_nz = np.flatnonzero(c)
    index, D = space.index, space.depth
    rows: list[int] = []
    cols: list[int] = []
    vals: list[complex] = []
    for j, w in enumerate(space.words):
        if w and w[0][0] == i:
            k = w[0][1]
            rest = w[1:]
            if r[k] != 0:
                rows.append(index[rest]); cols.append(j); vals.append(r[k])
            for m in np.flatnonzero(B[:, k]):
                rows.append(index[((i, int(m)),) + rest]); cols.append(j); vals.append(B[m, k])
        else:
            if a != 0:
                rows.append(j); cols.append(j); vals.append(a)
            if len(w) < D:
                for m in c_nz:
                    rows.append(index[((i, int(m)),) + w]); cols.append(j); vals.append(c[m])
    M = sp.csc_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(space.dim, space.dim))
    M.sort_indices()
    return FreeOperator(space, M, {"kind": "lift", "factor": i, "matrix": A}, 1)


def identity_operator(space: FreeProductSpace) -> FreeOperator:
    return FreeOperator(space, sp.identity(space.dim, dtype=complex, format="csc"), {"kind": "identity"}, 0)


def vector_state(T) -> complex:
    """``<T xi_0, xi_0>``."""
    M = _as_matrix(T)
    return complex(M[0, 0])


def lift_assignment(assignment: Mapping[str, np.ndarray], tag_index: Mapping[str, int],
                    space: FreeProductSpace, tags: Mapping[str, str] | None = None) -> dict[str, sp.csc_matrix]:
    """Lift every named factor matrix into the free product.

    ``tags`` maps a generator name to its tag (default: alphabetic prefix);
    ``tag_index`` maps tags to factor positions.
    """
    from .ncpoly import default_tag

    tags = tags or {}
    return {name: lift_left_operator(M, tag_index[tags.get(name) or default_tag(name)], space).matrix
            for name, M in assignment.items()}


def eval_in_free_product(p: NCPoly, assignment: Mapping[str, np.ndarray], tag_index: Mapping[str, int],
                         space: FreeProductSpace) -> FreeOperator:
    """Evaluate ``p`` with each generator lifted from its factor."""
    lifted = lift_assignment(assignment, tag_index, space, p.symbols())
    if not lifted:
        return p.scalar_part() * identity_operator(space)
    M = eval_poly(p, lifted)
    return FreeOperator(space, sp.csc_matrix(M), {"kind": "composite"}, max(p.degree, 1))


# exactness scenario ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExactnessScenario:
    """Block model ``A1 = M_a (+) M_b`` with ideal ``J = 0 (+) M_b``.

    The first factor space is ``H1 = H10 (+) H11`` where ``H10 = C^a`` carries
    ``q`` (the ``M_a`` block) and ``H11`` carries a faithful copy of the
    algebra.  With ``h11="minimal"`` (default) ``H11 = C^b``, which suffices
    for faithfulness since the ``M_a`` block is already faithful on ``H10``;
    ``h11="full"`` uses ``H11 = C^a (+) C^b``.
    """

    a: int = 2
    b: int = 1
    dim2: int = 2
    xi1: np.ndarray = None
    xi2: np.ndarray = None
    h11: str = "minimal"

    def __post_init__(self):
        if self.h11 not in ("minimal", "full"):
            raise ValueError("h11 must be 'minimal' or 'full'")
        if self.xi1 is None:
            object.__setattr__(self, "xi1", np.eye(self.a, dtype=complex)[0])
        if self.xi2 is None:
            object.__setattr__(self, "xi2", np.eye(self.dim2, dtype=complex)[0])
        object.__setattr__(self, "xi1", np.asarray(self.xi1, dtype=complex))
        object.__setattr__(self, "xi2", np.asarray(self.xi2, dtype=complex))

    @property
    def dim1(self) -> int:
        return self.a + (self.b if self.h11 == "minimal" else self.a + self.b)

    def pi1(self, A_block, B_block) -> np.ndarray:
        """Faithful representation of ``(A, B) in M_a (+) M_b`` on ``H1``."""
        A_block = np.asarray(A_block, dtype=complex).reshape(self.a, self.a)
        B_block = np.asarray(B_block, dtype=complex).reshape(self.b, self.b)
        blocks = [A_block, B_block] if self.h11 == "minimal" else [A_block, A_block, B_block]
        out = np.zeros((self.dim1, self.dim1), dtype=complex)
        o = 0
        for blk in blocks:
            n = blk.shape[0]
            out[o:o + n, o:o + n] = blk
            o += n
        return out

    def q(self, A_block, B_block) -> np.ndarray:
        return np.asarray(A_block, dtype=complex).reshape(self.a, self.a)

    def ideal(self, B_block) -> np.ndarray:
        return self.pi1(np.zeros((self.a, self.a)), B_block)

    def spaces(self) -> tuple[PointedSpace, PointedSpace, PointedSpace]:
        """``(H1, H10, H2)`` as pointed spaces; ``xi1`` sits in ``H10``."""
        xi_full = np.zeros(self.dim1, dtype=complex)
        xi_full[: self.a] = self.xi1
        return (make_pointed(self.dim1, xi_full), make_pointed(self.a, self.xi1),
                make_pointed(self.dim2, self.xi2))

    def full_space(self, depth: int) -> FreeProductSpace:
        H1, _, H2 = self.spaces()
        return build_free_product_space([H1, H2], depth)

    def sub_space(self, depth: int) -> FreeProductSpace:
        _, H10, H2 = self.spaces()
        return build_free_product_space([H10, H2], depth)

    def random_element(self, rng: np.random.Generator, centered: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Random ``(A, B) in M_a (+) M_b``; centered means ``<pi1 xi1, xi1> = 0``."""
        A = rng.normal(size=(self.a, self.a)) + 1j * rng.normal(size=(self.a, self.a))
        B = rng.normal(size=(self.b, self.b)) + 1j * rng.normal(size=(self.b, self.b))
        if centered:
            A = A - (self.xi1.conj() @ A @ self.xi1) * np.eye(self.a)
        return A, B

    def random_factor2(self, rng: np.random.Generator, centered: bool = False) -> np.ndarray:
        C = rng.normal(size=(self.dim2, self.dim2)) + 1j * rng.normal(size=(self.dim2, self.dim2))
        if centered:
            C = C - (self.xi2.conj() @ C @ self.xi2) * np.eye(self.dim2)
        return C


def compression_pi(T, scenario: ExactnessScenario, depth: int | None = None) -> sp.csc_matrix:
    """``V^* T V`` with ``V`` the inclusion of the ``(H10, H2)`` free product."""
    full = T.space if isinstance(T, FreeOperator) else None
    if full is None:
        if depth is None:
            raise ValueError("depth is required for a bare matrix")
        full = scenario.full_space(depth)
    depth = full.depth
    sub = scenario.sub_space(depth)
    M = _as_matrix(T)
    if M.shape != (full.dim, full.dim):
        raise ValueError("operator does not live on the scenario's full space")
    V = embed_subspace(sub, scenario.full_space(depth))
    return (V.conj().T @ M @ V).tocsc()


# ideal words -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IdealWord:
    """``left . J . right`` with centered alternating ``left`` and ``right``.

    ``left`` and ``right`` are lists of ``(factor, matrix)`` read left to right.
    ``left`` must end in factor 1 and ``right`` must start in factor 1, so the
    word alternates around the ideal element ``J`` in factor 0.
    """

    left: tuple
    J: np.ndarray
    right: tuple

    def __post_init__(self):
        for part in (self.left, self.right):
            tags = [t for t, _ in part]
            if any(tags[k] == tags[k + 1] for k in range(len(tags) - 1)):
                raise ValueError("ideal word is not alternating")
        if self.left and self.left[-1][0] != 1:
            raise ValueError("the factor left of J must be factor 1")
        if self.right and self.right[0][0] != 1:
            raise ValueError("the factor right of J must be factor 1")

    def matrix(self, space: FreeProductSpace) -> sp.csc_matrix:
        ops = [lift_left_operator(M, t, space).matrix for t, M in self.left]
        ops.append(lift_left_operator(self.J, 0, space).matrix)
        ops += [lift_left_operator(M, t, space).matrix for t, M in self.right]
        out = ops[0]
        for M in ops[1:]:
            out = out @ M
        return out.tocsc()

    def oracle_apply(self, space: FreeProductSpace, word) -> np.ndarray:
        """Image of a basis word computed from the closed form.

        The right part absorbs the leading components one at a time through
        ``<c, R^* xi>``, the next component ``eta`` must lie in factor 0 and
        is sent to ``J eta``, and the left part prepends ``L xi`` for each of
        its letters.  Every other summand is annihilated.
        """
        if isinstance(word, (int, np.integer)):
            word = space.words[int(word)]
        word = tuple(word)
        if word not in space.index:
            raise ValueError(f"malformed word {word!r}")
        out = np.zeros(space.dim, dtype=complex)
        q = len(self.right)
        if len(word) < q + 1:
            return out
        coef = 1.0 + 0j
        # right[-1] acts first, on the leading component
        for pos, (t, M) in enumerate(reversed(self.right)):
            tag, k = word[pos]
            if tag != t:
                return out
            coef *= space.factors[t].rotate(M)[0, k + 1]
            if coef == 0:
                return out
        tag, k = word[q]
        if tag != 0:
            return out
        tail = word[q + 1:]
        Jr = space.factors[0].rotate(self.J)
        comps = [space.factors[t].rotate(M)[1:, 0] for t, M in self.left]
        comps.append(Jr[1:, k + 1])
        tags = [t for t, _ in self.left] + [0]
        new_len = len(tags) + len(tail)
        if new_len > space.depth:
            return out
        # prefix (x) tail: expand the prefix and append the fixed tail
        prefix = space.tensor_vector(tags, comps) if len(tags) <= space.depth else None
        for j in np.flatnonzero(prefix):
            w = space.words[j] + tail
            out[space.index[w]] += coef * prefix[j]
        return out


def ideal_word(form: str, A: Sequence, B: Sequence, A_right: Sequence, B_right: Sequence, J) -> IdealWord:
    """Assemble the four ideal-word shapes.

    ``form`` is one of

    * ``"T"``:  ``A1 B1 ... An Bn  J  B'm A'm ... B'1 A'1``
    * ``"R"``:  ``B1 A2 ... An Bn  J  B'm A'm ... B'1 A'1``
    * ``"T'"``: ``A1 B1 ... An Bn  J  B'm A'm ... A'2 B'1``
    * ``"R'"``: ``B1 A2 ... An Bn  J  B'm A'm ... A'2 B'1``

    ``A`` and ``A_right`` hold factor-0 matrices, ``B`` and ``B_right``
    factor-1 matrices; lists are indexed from 1 in the pattern above.
    """
    n, m = len(B), len(B_right)
    if form in ("T", "T'"):
        if len(A) != n:
            raise ValueError("form T needs as many A as B on the left")
        left = [x for k in range(n) for x in ((0, A[k]), (1, B[k]))]
    elif form in ("R", "R'"):
        if len(A) != max(n - 1, 0):
            raise ValueError("form R needs one fewer A than B on the left")
        left = [(1, B[0])] if n else []
        for k in range(1, n):
            left += [(0, A[k - 1]), (1, B[k])]
    else:
        raise ValueError(f"unknown form {form!r}")
    if form in ("T", "R"):
        if len(A_right) != m:
            raise ValueError("this form needs as many A' as B' on the right")
        right = [x for k in reversed(range(m)) for x in ((1, B_right[k]), (0, A_right[k]))]
    else:
        if len(A_right) != max(m - 1, 0):
            raise ValueError("this form needs one fewer A' than B' on the right")
        right = []
        for k in reversed(range(1, m)):
            right += [(1, B_right[k]), (0, A_right[k - 1])]
        if m:
            right.append((1, B_right[0]))
    return IdealWord(tuple(left), np.asarray(J, dtype=complex), tuple(right))


def ideal_word_action_oracle(space: FreeProductSpace, word_op: IdealWord, target) -> np.ndarray:
    return word_op.oracle_apply(space, target)
