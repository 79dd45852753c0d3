"""Truncated Toeplitz-Pimsner model for two pointed factors.

The space is spanned by alternating words ``h_1 (x) ... (x) h_n`` with
``1 <= n <= depth`` over the *full* factor spaces.  Components are stored in
rotated coordinates, so index 0 of factor ``i`` is ``xi_i`` itself and index
``k + 1`` is the ``k``-th centered basis vector.  Basis order: leading tag,
then length, then component indices.

``S`` prepends the distinguished vector of the factor opposite to the
leading tag.  Gauge phases, the length-block expectation, Fejér sums, and the
corner map into the free product all live here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .hilbert import FreeProductSpace, PointedSpace, factor_inclusion


PWord = tuple[tuple[int, int], ...]


class PimsnerSpace:
    def __init__(self, factors: Sequence[PointedSpace], depth: int):
        if len(factors) != 2:
            raise ValueError("the Pimsner model takes exactly two factors")
        if depth < 1:
            raise ValueError("depth must be at least 1")
        self.factors = tuple(factors)
        self.depth = int(depth)
        words: list[PWord] = []
        for lead in (0, 1):
            for L in range(1, self.depth + 1):
                tags = [(lead + j) % 2 for j in range(L)]
                for ks in itertools.product(*(range(self.factors[t].dim) for t in tags)):
                    words.append(tuple(zip(tags, ks)))
        self.words = tuple(words)
        self.index = {w: j for j, w in enumerate(self.words)}
        self.lengths = np.array([len(w) for w in self.words], dtype=np.int64)
        self.leading = np.array([w[0][0] for w in self.words], dtype=np.int64)

    @property
    def dim(self) -> int:
        return len(self.words)

    def summand(self, lead: int, length: int) -> np.ndarray:
        """Positions of the summand of words with given leading tag and length."""
        return np.flatnonzero((self.leading == lead) & (self.lengths == length))

    def interior(self, margin: int) -> np.ndarray:
        return np.flatnonzero(self.lengths <= self.depth - margin)

    def _diag(self, mask) -> sp.csc_matrix:
        return sp.diags(np.asarray(mask, dtype=complex), format="csc")

    def projection(self, lead: int | None = None, length: int | None = None,
                   max_length: int | None = None) -> sp.csc_matrix:
        mask = np.ones(self.dim, dtype=bool)
        if lead is not None:
            mask &= self.leading == lead
        if length is not None:
            mask &= self.lengths == length
        if max_length is not None:
            mask &= self.lengths <= max_length
        return self._diag(mask)

    @cached_property
    def S(self) -> sp.csc_matrix:
        return build_S(self)


def build_S(space: PimsnerSpace) -> sp.csc_matrix:
    rows, cols = [], []
    for j, w in enumerate(space.words):
        if len(w) < space.depth:
            rows.append(space.index[((1 - w[0][0], 0),) + w])
            cols.append(j)
    return sp.csc_matrix((np.ones(len(rows), dtype=complex), (rows, cols)), shape=(space.dim, space.dim))


def act_diag(A1, A2, space: PimsnerSpace) -> sp.csc_matrix:
    """``A1 (+) A2`` acting on the leading component; ``None`` means zero."""
    rot = []
    for f, A in zip(space.factors, (A1, A2)):
        if A is None:
            rot.append(None)
            continue
        A = np.asarray(A, dtype=complex)
        if A.shape != (f.dim, f.dim):
            raise ValueError(f"expected a {f.dim}x{f.dim} matrix, got {A.shape}")
        rot.append(f.rotate(A))
    rows, cols, vals = [], [], []
    for j, w in enumerate(space.words):
        t, k = w[0]
        M = rot[t]
        if M is None:
            continue
        for m in np.flatnonzero(M[:, k]):
            rows.append(space.index[((t, int(m)),) + w[1:]])
            cols.append(j)
            vals.append(M[m, k])
    return sp.csc_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(space.dim, space.dim))


def act(A, i: int, space: PimsnerSpace) -> sp.csc_matrix:
    """An element of the ``i``-th factor algebra (zero on the other summand)."""
    return act_diag(A, None, space) if i == 0 else act_diag(None, A, space)


def _maxabs(M) -> float:
    if sp.issparse(M):
        return float(np.max(np.abs(M.data), initial=0.0)) if M.nnz else 0.0
    return float(np.max(np.abs(M), initial=0.0))


def verify_sstar_relations(space: PimsnerSpace, samples) -> dict[str, float]:
    """Entrywise residuals of the relations between ``S`` and the factor actions.

    ``samples`` is a list of ``(A, B, i)`` with ``A, B`` matrices on factor
    ``i``.  With ``j`` the other factor:

    * ``S^* A S = <A xi_i, xi_i> P_j`` on columns of length at most ``depth - 1``
    * ``A S B = 0``, ``A S^* B = 0``
    * ``P_j S A = S A``, ``A S^* P_j = A S^*``
    """
    S = space.S
    Sh = S.conj().T.tocsc()
    inner = space.interior(1)
    out = {"S*AS": 0.0, "ASB": 0.0, "AS*B": 0.0, "PSA": 0.0, "AS*P": 0.0}
    for A, B, i in samples:
        j = 1 - i
        Ah, Bh = act(A, i, space), act(B, i, space)
        Pj = space.projection(lead=j)
        tau = space.factors[i].state(A)
        out["S*AS"] = max(out["S*AS"], _maxabs((Sh @ Ah @ S - tau * Pj)[:, inner]))
        out["ASB"] = max(out["ASB"], _maxabs(Ah @ S @ Bh))
        out["AS*B"] = max(out["AS*B"], _maxabs(Ah @ Sh @ Bh))
        out["PSA"] = max(out["PSA"], _maxabs(Pj @ S @ Ah - S @ Ah))
        out["AS*P"] = max(out["AS*P"], _maxabs(Ah @ Sh @ Pj - Ah @ Sh))
    return out


# gauge action ----------------------------------------------------------------

def gauge_unitary(space: PimsnerSpace, theta: float) -> sp.csc_matrix:
    return sp.diags(np.exp(-1j * space.lengths * theta), format="csc")


def gauge_apply(T, theta: float, space: PimsnerSpace):
    """``U_theta^* T U_theta``."""
    U = gauge_unitary(space, theta)
    out = U.conj().T @ T @ U
    return out.tocsc() if sp.issparse(out) else out


def cond_expectation(T, space: PimsnerSpace):
    """Keep entries whose row and column words have equal length."""
    if sp.issparse(T):
        C = sp.coo_matrix(T)
        keep = space.lengths[C.row] == space.lengths[C.col]
        return sp.csc_matrix((C.data[keep], (C.row[keep], C.col[keep])), shape=C.shape)
    T = np.asarray(T)
    mask = space.lengths[:, None] == space.lengths[None, :]
    return np.where(mask, T, 0)


def gauge_average(T, space: PimsnerSpace, samples: int | None = None):
    """Average of ``alpha_theta(T)`` over ``samples`` equispaced angles (default ``2 depth + 3``)."""
    N = samples or 2 * space.depth + 3
    acc = None
    for s in range(N):
        G = gauge_apply(T, 2 * np.pi * s / N, space)
        acc = G if acc is None else acc + G
    return acc / N


def cond_expectation_selftest(T, space: PimsnerSpace, samples: int | None = None) -> float:
    """Residual between the masked expectation and the root-of-unity average."""
    N = samples or 2 * space.depth + 3
    if N < 2 * space.depth + 1:
        raise ValueError(f"need at least {2 * space.depth + 1} samples")
    diff = gauge_average(T, space, N) - cond_expectation(T, space)
    return _maxabs(diff)


@dataclass(frozen=True)
class FejerWeights:
    n: int

    @property
    def weights(self) -> np.ndarray:
        return 1.0 - np.arange(self.n + 1) / (self.n + 1)

    def kernel(self, theta: float) -> float:
        j = np.arange(-self.n, self.n + 1)
        return float(np.real(np.sum((1 - np.abs(j) / (self.n + 1)) * np.exp(1j * j * theta))))

    def table(self) -> list[dict]:
        return [{"j": j, "weight": float(w)} for j, w in enumerate(self.weights)]


def fejer_partial(T, n: int, space: PimsnerSpace):
    """``sum_j w_j (S^*)^j E(S^j T) + sum_{j>=1} w_j E(T (S^*)^j) S^j`` with truncated ``S``."""
    if n < 0:
        raise ValueError("order must be nonnegative")
    S = space.S
    Sh = S.conj().T.tocsc()
    w = FejerWeights(n).weights
    T = sp.csc_matrix(T)
    out = w[0] * cond_expectation(T, space)
    Sj = sp.identity(space.dim, dtype=complex, format="csc")
    Shj = Sj
    for j in range(1, n + 1):
        Sj = (S @ Sj).tocsc()
        Shj = (Sh @ Shj).tocsc()
        out = out + w[j] * (Shj @ cond_expectation((Sj @ T).tocsc(), space))
        out = out + w[j] * (cond_expectation((T @ Shj).tocsc(), space) @ Sj)
    return out.tocsc()


def parity_blocks(space: PimsnerSpace) -> tuple[np.ndarray, np.ndarray]:
    """Positions of words ending in factor 0 and of words ending in factor 1.

    Both spans are invariant under ``S``, ``S^*`` and the factor actions.
    """
    ends0 = (space.leading + space.lengths) % 2 == 1
    return np.flatnonzero(ends0), np.flatnonzero(~ends0)


# corner embedding ------------------------------------------------------------

class CornerEmbedding:
    """``P = I - S^2 S^*^2``, ``U = P (S + S^*) P``, ``psi_i(A) = P A P + U A U``."""

    def __init__(self, space: PimsnerSpace):
        self.space = space
        S = space.S
        Sh = S.conj().T
        self.P = (sp.identity(space.dim, dtype=complex, format="csc") - S @ S @ Sh @ Sh).tocsc()
        self.U = (self.P @ (S + Sh) @ self.P).tocsc()

    def psi(self, A, i: int, tol: float = 1e-10) -> sp.csc_matrix:
        f = self.space.factors[i]
        A = np.asarray(A, dtype=complex)
        if abs(f.state(A)) > tol * max(1.0, np.abs(A).max()):
            raise ValueError(f"factor is not centered (state {f.state(A):.3e})")
        Ah = act(A, i, self.space)
        return (self.P @ Ah @ self.P + self.U @ Ah @ self.U).tocsc()

    def psi_on_word(self, word: Sequence[tuple[int, np.ndarray]], tol: float = 1e-10) -> sp.csc_matrix:
        """Product of ``psi`` images over an alternating list of ``(factor, matrix)``."""
        tags = [t for t, _ in word]
        if any(tags[k] == tags[k + 1] for k in range(len(tags) - 1)):
            raise ValueError("word is not alternating")
        out = self.P
        for t, A in word:
            out = (out @ self.psi(A, t, tol)).tocsc()
        return out


def corner_psi(A, i: int, space: PimsnerSpace) -> sp.csc_matrix:
    return CornerEmbedding(space).psi(A, i)


def psi_on_word(word, space: PimsnerSpace) -> sp.csc_matrix:
    return CornerEmbedding(space).psi_on_word(word)


def corner_identification(fp: FreeProductSpace, space: PimsnerSpace) -> sp.csc_matrix:
    """0/1 isometry from the free-product basis onto the words beginning and ending in factor 0.

    ``xi_0`` goes to ``xi_1``; a free-product word gets ``xi_1`` inserted at
    the front unless it starts in factor 0, and at the back unless it ends
    in factor 0.
    """
    if len(fp.factors) != 2 or any(a is not b for a, b in zip(fp.factors, space.factors)):
        raise ValueError("free product and Pimsner space must share their factor objects")
    if space.depth < fp.depth + 2:
        raise ValueError(f"Pimsner depth {space.depth} must be at least free-product depth + 2 = {fp.depth + 2}")
    rows, cols = [], []
    for j, w in enumerate(fp.words):
        rows.append(space.index[to_corner_word(w)])
        cols.append(j)
    return sp.csc_matrix((np.ones(len(rows), dtype=complex), (rows, cols)), shape=(space.dim, fp.dim))


def to_corner_word(w) -> PWord:
    if not w:
        return ((0, 0),)
    body = [(t, k + 1) for t, k in w]
    if body[0][0] != 0:
        body.insert(0, (0, 0))
    if body[-1][0] != 0:
        body.append((0, 0))
    return tuple(body)


def sigma_compression(T, fp: FreeProductSpace, space: PimsnerSpace) -> sp.csc_matrix:
    V = corner_identification(fp, space)
    return (V.conj().T @ sp.csc_matrix(T) @ V).tocsc()


def pimsner_inclusion(sub: PimsnerSpace, full: PimsnerSpace) -> sp.csc_matrix:
    """Isometry of the model over a pointed subspace of factor 0 into the full model."""
    if sub.depth != full.depth:
        raise ValueError("depth mismatch")
    Ms = [factor_inclusion(s, f) for s, f in zip(sub.factors, full.factors)]
    rows, cols, vals = [], [], []
    for j, w in enumerate(sub.words):
        comps = [Ms[t][:, k] for t, k in w]
        tags = [t for t, _ in w]
        for ks in itertools.product(*(np.flatnonzero(c) for c in comps)):
            coef = 1.0 + 0j
            for c, k in zip(comps, ks):
                coef *= c[k]
            rows.append(full.index[tuple(zip(tags, ks))])
            cols.append(j)
            vals.append(coef)
    return sp.csc_matrix((vals, (rows, cols)), shape=(full.dim, sub.dim))


def pi_prime(T, sub: PimsnerSpace, full: PimsnerSpace) -> sp.csc_matrix:
    """Compression of ``T`` to the model built on the quotient's factor spaces."""
    W = pimsner_inclusion(sub, full)
    return (W.conj().T @ sp.csc_matrix(T) @ W).tocsc()
