"""Truncated full Fock space and free creation operators."""

from __future__ import annotations

import itertools
from math import comb
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .hilbert import FreeProductSpace, PointedSpace, build_free_product_space, make_pointed
from .freeprod import lift_left_operator


class FockSpace:
    """Words over ``{0, ..., n-1}`` of length at most ``depth``; position 0 is the vacuum."""

    def __init__(self, n: int, depth: int):
        if n < 1 or depth < 0:
            raise ValueError("need n >= 1 and depth >= 0")
        self.n = int(n)
        self.depth = int(depth)
        words = [w for L in range(self.depth + 1) for w in itertools.product(range(self.n), repeat=L)]
        self.words = tuple(words)
        self.index = {w: j for j, w in enumerate(self.words)}
        self.lengths = np.array([len(w) for w in self.words], dtype=np.int64)

    @property
    def dim(self) -> int:
        return len(self.words)

    def projection_upto(self, length: int) -> sp.csc_matrix:
        d = (self.lengths <= length).astype(complex)
        return sp.diags(d, format="csc")


def creation(space: FockSpace, i: int) -> sp.csc_matrix:
    """``l_i``: prepend letter ``i`` (0-based), killing words of maximal length."""
    if not 0 <= i < space.n:
        raise IndexError(f"letter {i} out of range for n={space.n}")
    rows, cols = [], []
    for j, w in enumerate(space.words):
        if len(w) < space.depth:
            rows.append(space.index[(i,) + w])
            cols.append(j)
    return sp.csc_matrix((np.ones(len(rows), dtype=complex), (rows, cols)), shape=(space.dim, space.dim))


def vacuum_state(T) -> complex:
    return complex(T[0, 0])


def catalan(k: int) -> int:
    return comb(2 * k, k) // (k + 1)


def semicircle_moments(k_max: int, depth: int) -> list[dict]:
    """``<(l + l^*)^m Omega, Omega>`` for ``m <= 2 k_max`` against Catalan numbers."""
    F = FockSpace(1, depth)
    l = creation(F, 0)
    X = (l + l.conj().T).tocsc()
    v = np.zeros(F.dim, dtype=complex)
    v[0] = 1.0
    rows = []
    for m in range(1, 2 * k_max + 1):
        v = X @ v
        if m % 2 == 0:
            k = m // 2
            val = complex(v[0])
            rows.append({"k": k, "moment": val.real, "catalan": catalan(k), "residual": abs(val - catalan(k))})
    return rows


def fock_as_pointed(space: FockSpace) -> PointedSpace:
    """The Fock space as a pointed space with the vacuum as distinguished vector."""
    return make_pointed(space.dim)


def verify_compression_relation(samples: Sequence[np.ndarray], xi, n: int, fock_depth: int, depth: int) -> float:
    """Max residual of ``l_i^* A l_j - delta_ij tau(A) P`` inside the free product.

    The free product is ``(C^d, xi) * (Fock(C^n), Omega)`` at ``depth``; every
    matrix in ``samples`` acts on the first factor and ``tau`` is the vector
    state of ``xi``.  ``P`` is the identity on the interior: columns whose
    free-product length is at most ``depth - 2`` and whose Fock components all
    have length at most ``fock_depth - 1``.  Columns are compared there.
    """
    xi = np.asarray(xi, dtype=complex)
    H = make_pointed(len(xi), xi)
    F = FockSpace(n, fock_depth)
    K = fock_as_pointed(F)
    space = build_free_product_space([H, K], depth)
    lhat = [lift_left_operator(creation(F, i).toarray(), 1, space).matrix for i in range(n)]
    cols = _fock_interior(space, F, depth - 2)
    P = sp.identity(space.dim, dtype=complex, format="csc")[:, cols]
    worst = 0.0
    for A in samples:
        A = np.asarray(A, dtype=complex)
        Ahat = lift_left_operator(A, 0, space).matrix
        tau = H.state(A)
        for i in range(n):
            for j in range(n):
                R = (lhat[i].conj().T @ Ahat @ lhat[j])[:, cols]
                if i == j:
                    R = R - tau * P
                worst = max(worst, float(np.max(np.abs(R.toarray()), initial=0.0)))
    return worst


def _fock_interior(space: FreeProductSpace, F: FockSpace, max_len: int) -> np.ndarray:
    keep = []
    for j, w in enumerate(space.words):
        if len(w) > max_len:
            continue
        # centered index k of the Fock factor is Fock basis position k + 1
        if all(F.lengths[k + 1] <= F.depth - 1 for t, k in w if t == 1):
            keep.append(j)
    return np.array(keep, dtype=np.int64)
