"""Pointed Hilbert spaces and the truncated free-product word basis.

A pointed space is ``(C^d, xi)`` together with a unitary ``R`` such that
``R xi = e_0``.  In rotated coordinates the centered subspace is spanned by
``e_1, ..., e_{d-1}``; we call ``k`` (0-based) the *centered index* of
``e_{k+1}``.

A word of the free product is a tuple of ``(tag, k)`` pairs with alternating
tags, ``tag`` a 0-based factor index and ``k`` a centered index.  The empty
word is the distinguished vector ``xi_0`` and sits at position 0.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

DEFAULT_DIM_CAP = 2_000_000

Word = tuple[tuple[int, int], ...]


class DimensionCapError(ValueError):
    """Raised when a truncated space would exceed the configured dimension cap."""


def hermitian_parts(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``A = H + iK`` with ``H``, ``K`` Hermitian.

    The split is exact under adjoints: the parts of ``A^*`` are ``(H, -K)``
    bit for bit, which is what makes rotated lifts commute with ``*``.
    """
    A = np.asarray(A, dtype=complex)
    Ah = A.conj().T
    return (A + Ah) / 2, (A - Ah) / 2j


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return (M + M.conj().T) / 2


@dataclass(frozen=True, eq=False)
class PointedSpace:
    """``C^dim`` with a distinguished unit vector ``xi``.

    ``basis_rotation`` is a unitary with ``basis_rotation @ xi = e_0``.
    """

    dim: int
    xi: np.ndarray
    basis_rotation: np.ndarray
    _identity_rotation: bool = field(default=False, repr=False)

    @property
    def centered_dim(self) -> int:
        return self.dim - 1

    def rotate(self, A) -> np.ndarray:
        """Return ``R A R^*``: the matrix of ``A`` in the basis ``xi, e_1, ...``."""
        A = np.asarray(A, dtype=complex)
        if A.shape != (self.dim, self.dim):
            raise ValueError(f"expected a {self.dim}x{self.dim} matrix, got {A.shape}")
        if self._identity_rotation:
            return A.copy()
        R = self.basis_rotation
        H, K = hermitian_parts(A)
        Hr = _symmetrize(R @ H @ R.conj().T)
        Kr = _symmetrize(R @ K @ R.conj().T)
        return Hr + 1j * Kr

    def rotate_vector(self, v) -> np.ndarray:
        return self.basis_rotation @ np.asarray(v, dtype=complex)

    def state(self, A) -> complex:
        """Vector state ``<A xi, xi>``."""
        A = np.asarray(A, dtype=complex)
        return complex(self.xi.conj() @ A @ self.xi)

    def to_json(self) -> dict:
        return {"dim": self.dim, "xi": [[float(z.real), float(z.imag)] for z in self.xi]}


def make_pointed(dim: int, xi=None, tol: float = 1e-9) -> PointedSpace:
    """Build a pointed space, rotating ``xi`` onto ``e_0`` by a Householder map.

    ``xi`` defaults to ``e_0``.  When ``xi = e_0`` the rotation is the identity.
    """
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim!r}")
    dim = int(dim)
    if xi is None:
        xi = np.zeros(dim, dtype=complex)
        xi[0] = 1.0
    xi = np.asarray(xi, dtype=complex).reshape(-1)
    if xi.shape != (dim,):
        raise ValueError(f"xi has length {xi.shape[0]}, expected {dim}")
    nrm = np.linalg.norm(xi)
    if abs(nrm - 1.0) > tol:
        raise ValueError(f"xi must be a unit vector (norm {nrm:.3e})")
    xi = xi / nrm
    e0 = np.zeros(dim, dtype=complex)
    e0[0] = 1.0
    if np.array_equal(xi, e0):
        R = np.eye(dim, dtype=complex)
        return PointedSpace(dim, xi, R, True)
    # phase so that <xi', e_0> is real and nonnegative; the reflection through
    # (xi' + e_0) sends xi' to -e_0, and |xi' + e_0| >= 1 keeps it stable
    alpha = xi[0] / abs(xi[0]) if abs(xi[0]) > 0 else 1.0
    u = np.conj(alpha) * xi + e0
    H = np.eye(dim, dtype=complex) - 2.0 * np.outer(u, u.conj()) / np.vdot(u, u).real
    R = -np.conj(alpha) * H
    return PointedSpace(dim, xi, R, False)


def pointed_from_json(obj: dict) -> PointedSpace:
    xi = obj.get("xi")
    if xi is not None:
        xi = [complex(*z) if isinstance(z, (list, tuple)) else complex(z) for z in xi]
    return make_pointed(int(obj["dim"]), xi)


def alternating_sequences(num_factors: int, length: int, allowed: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """Lexicographic alternating tag sequences of the given length."""
    if length == 0:
        yield ()
        return
    for seq in itertools.product(allowed, repeat=length):
        if all(seq[j] != seq[j + 1] for j in range(length - 1)):
            yield seq


def free_product_dimension(centered_dims: Sequence[int], depth: int) -> int:
    """``1 + sum over alternating sequences of the product of centered dims``.

    Computed by a transfer recursion, so it is cheap even when the space is not.
    """
    n = len(centered_dims)
    # ending[i] = total weight of alternating sequences of current length ending in tag i
    ending = list(centered_dims)
    total = 1 + sum(ending) if depth >= 1 else 1
    for _ in range(2, depth + 1):
        s = sum(ending)
        ending = [(s - ending[i]) * centered_dims[i] for i in range(n)]
        total += sum(ending)
    return total


class FreeProductSpace:
    """Truncated free product of pointed spaces, words of length at most ``depth``."""

    def __init__(self, factors: Sequence[PointedSpace], depth: int, dim_cap: int = DEFAULT_DIM_CAP):
        if len(factors) < 2:
            raise ValueError("a free product needs at least two factors")
        if depth < 0:
            raise ValueError("depth must be nonnegative")
        self.factors = tuple(factors)
        self.depth = int(depth)
        cdims = [f.centered_dim for f in self.factors]
        total = free_product_dimension(cdims, self.depth)
        if total > dim_cap:
            raise DimensionCapError(f"free product dimension {total} exceeds cap {dim_cap}")
        allowed = [i for i, d in enumerate(cdims) if d > 0]
        words: list[Word] = [()]
        for L in range(1, self.depth + 1):
            for tags in alternating_sequences(len(cdims), L, allowed):
                for ks in itertools.product(*(range(cdims[t]) for t in tags)):
                    words.append(tuple(zip(tags, ks)))
        assert len(words) == total
        self.words: tuple[Word, ...] = tuple(words)
        self.index: dict[Word, int] = {w: j for j, w in enumerate(self.words)}
        self.lengths = np.array([len(w) for w in self.words], dtype=np.int64)
        self.leading = np.array([w[0][0] if w else -1 for w in self.words], dtype=np.int64)

    @property
    def dim(self) -> int:
        return len(self.words)

    def grading(self, position: int) -> tuple[int, int]:
        """``(word length, leading tag)``; the leading tag of ``xi_0`` is -1."""
        return int(self.lengths[position]), int(self.leading[position])

    def interior(self, margin: int) -> np.ndarray:
        """Positions of words of length at most ``depth - margin``."""
        return np.flatnonzero(self.lengths <= self.depth - margin)

    def tensor_vector(self, tags: Sequence[int], components: Sequence[np.ndarray]) -> np.ndarray:
        """Coordinates of ``c_1 (x) ... (x) c_L`` for centered vectors ``c_j``.

        ``components[j]`` is given in centered coordinates of factor ``tags[j]``.
        Returns zero when the word would exceed the depth.
        """
        out = np.zeros(self.dim, dtype=complex)
        if len(tags) > self.depth:
            return out
        if not tags:
            out[0] = 1.0
            return out
        supports = [np.flatnonzero(np.asarray(c)) for c in components]
        for ks in itertools.product(*supports):
            coef = 1.0 + 0j
            for c, k in zip(components, ks):
                coef *= c[k]
            out[self.index[tuple(zip(tags, ks))]] += coef
        return out

    def manifest(self) -> list[dict]:
        return [
            {"position": j, "tags": [t for t, _ in w], "indices": [k for _, k in w]}
            for j, w in enumerate(self.words)
        ]


def build_free_product_space(factors: Sequence[PointedSpace], depth: int,
                             dim_cap: int = DEFAULT_DIM_CAP) -> FreeProductSpace:
    return FreeProductSpace(factors, depth, dim_cap)


def factor_inclusion(sub: PointedSpace, full: PointedSpace, inclusion=None, tol: float = 1e-12) -> np.ndarray:
    """Matrix of the inclusion ``sub -> full`` in rotated coordinates of both.

    ``inclusion`` defaults to the coordinate inclusion into the leading
    ``sub.dim`` coordinates.  Entries within ``tol`` of an integer are snapped,
    so block-compatible rotations give an exact 0/1 matrix.
    """
    if inclusion is None:
        if sub.dim > full.dim:
            raise ValueError("sub factor is larger than the full factor")
        inclusion = np.zeros((full.dim, sub.dim), dtype=complex)
        inclusion[: sub.dim, : sub.dim] = np.eye(sub.dim)
    inclusion = np.asarray(inclusion, dtype=complex)
    if inclusion.shape != (full.dim, sub.dim):
        raise ValueError("inclusion has the wrong shape")
    if np.linalg.norm(inclusion.conj().T @ inclusion - np.eye(sub.dim)) > 1e-9:
        raise ValueError("inclusion is not an isometry")
    if np.linalg.norm(inclusion @ sub.xi - full.xi) > 1e-9:
        raise ValueError("inclusion does not carry the distinguished vector to the distinguished vector")
    M = full.basis_rotation @ inclusion @ sub.basis_rotation.conj().T
    snapped = np.round(M.real) + 1j * np.round(M.imag)
    if np.max(np.abs(M - snapped), initial=0.0) <= tol:
        M = snapped
    return M


def embed_subspace(sub: FreeProductSpace, full: FreeProductSpace, inclusions=None) -> sp.csc_matrix:
    """Isometry of the sub free product into the full one, word by word.

    ``inclusions`` is an optional per-factor list of isometries (``None``
    entries mean coordinate inclusion).
    """
    if len(sub.factors) != len(full.factors):
        raise ValueError("sub and full have different numbers of factors")
    if sub.depth != full.depth:
        raise ValueError("sub and full have different depths")
    if inclusions is None:
        inclusions = [None] * len(sub.factors)
    blocks = []
    for s, f, J in zip(sub.factors, full.factors, inclusions):
        M = factor_inclusion(s, f, J)
        if np.max(np.abs(M[1:, 0]), initial=0.0) > 1e-9 or np.max(np.abs(M[0, 1:]), initial=0.0) > 1e-9:
            raise ValueError("inclusion does not respect the centered decomposition")
        blocks.append(M[1:, 1:])
    rows, cols, vals = [0], [0], [1.0 + 0j]
    for j, w in enumerate(sub.words[1:], start=1):
        tags = [t for t, _ in w]
        comps = [blocks[t][:, k] for t, k in w]
        supports = [np.flatnonzero(c) for c in comps]
        for ks in itertools.product(*supports):
            coef = 1.0 + 0j
            for c, k in zip(comps, ks):
                coef *= c[k]
            rows.append(full.index[tuple(zip(tags, ks))])
            cols.append(j)
            vals.append(coef)
    return sp.csc_matrix((vals, (rows, cols)), shape=(full.dim, sub.dim))

