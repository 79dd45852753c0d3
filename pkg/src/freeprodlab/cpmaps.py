"""Completely positive maps between matrix algebras.

A map is stored through its Choi matrix ``C = sum_ij E_ij (x) phi(E_ij)``,
indexed as ``C[(i, a), (j, b)] = phi(E_ij)[a, b]``.  Maps defined on a
*-subalgebra are stored as ``phi o E`` with ``E`` the Hilbert-Schmidt
projection onto the subalgebra, which is itself completely positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .freeprod import FreeOperator, identity_operator, lift_left_operator
from .hilbert import FreeProductSpace, PointedSpace, make_pointed
from .ncpoly import NCPoly, center_decompose

RANK_CUT = 1e-12


def _orthonormal_basis(mats: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    k, n, _ = mats.shape
    flat = mats.reshape(k, n * n).T
    U, s, _ = np.linalg.svd(flat, full_matrices=False)
    r = int(np.sum(s > tol * max(s[0], 1.0))) if s.size else 0
    return U[:, :r].T.reshape(r, n, n)


class MatrixAlgebra:
    """A *-subalgebra of ``M_n`` described by a spanning set of matrices."""

    def __init__(self, basis, check: bool = True, tol: float = 1e-10):
        basis = np.asarray(basis, dtype=complex)
        if basis.ndim == 2:
            basis = basis[None]
        self.n = basis.shape[1]
        self.basis = basis
        self.onb = _orthonormal_basis(basis)
        if check:
            self._check_closure(tol)
        G = sum(b @ b.conj().T for b in self.onb)
        w, U = np.linalg.eigh((G + G.conj().T) / 2)
        keep = w > RANK_CUT * max(w[-1], 1.0)
        self.unit = U[:, keep] @ U[:, keep].conj().T

    @property
    def dim(self) -> int:
        return self.onb.shape[0]

    def coefficients(self, T) -> np.ndarray:
        """Hilbert-Schmidt coefficients ``<b, T> = tr(b^* T)`` on the orthonormal basis."""
        T = np.asarray(T, dtype=complex)
        return np.einsum("kij,ij->k", self.onb.conj(), T)

    def project(self, T) -> np.ndarray:
        return np.einsum("k,kij->ij", self.coefficients(T), self.onb)

    def membership_residual(self, T) -> float:
        T = np.asarray(T, dtype=complex)
        return float(np.linalg.norm(T - self.project(T)))

    def contains(self, T, tol: float = 1e-10) -> bool:
        return self.membership_residual(T) <= tol * max(1.0, np.linalg.norm(T))

    def _check_closure(self, tol: float):
        for a in self.onb:
            if not self.contains(a.conj().T, tol):
                raise ValueError("basis is not closed under the adjoint")
            for b in self.onb:
                if not self.contains(a @ b, tol):
                    raise ValueError("basis is not closed under multiplication")

    def random_element(self, rng: np.random.Generator) -> np.ndarray:
        c = rng.normal(size=self.dim) + 1j * rng.normal(size=self.dim)
        return np.einsum("k,kij->ij", c, self.onb)

    def is_unital(self, tol: float = 1e-10) -> bool:
        return np.linalg.norm(self.unit - np.eye(self.n)) <= tol

    # constructors

    @classmethod
    def full(cls, n: int) -> "MatrixAlgebra":
        return cls(_matrix_units(n, [(i, j) for i in range(n) for j in range(n)]), check=False)

    @classmethod
    def diagonal(cls, n: int) -> "MatrixAlgebra":
        return cls(_matrix_units(n, [(i, i) for i in range(n)]), check=False)

    @classmethod
    def scalars(cls, n: int) -> "MatrixAlgebra":
        return cls(np.eye(n, dtype=complex)[None], check=False)

    @classmethod
    def block_diagonal(cls, sizes: Sequence[int], n: int | None = None) -> "MatrixAlgebra":
        """``M_{s1} (+) M_{s2} (+) ...`` on the leading coordinates of ``C^n``.

        With ``n`` larger than ``sum(sizes)`` the algebra is not unital in ``M_n``.
        """
        n = n or sum(sizes)
        pairs, o = [], 0
        for s in sizes:
            pairs += [(o + i, o + j) for i in range(s) for j in range(s)]
            o += s
        return cls(_matrix_units(n, pairs), check=False)

    @classmethod
    def amplified(cls, k: int, r: int) -> "MatrixAlgebra":
        """``M_k (x) I_r`` inside ``M_{kr}``."""
        units = _matrix_units(k, [(i, j) for i in range(k) for j in range(k)])
        return cls(np.array([np.kron(u, np.eye(r)) for u in units]), check=False)

    def conjugated(self, U) -> "MatrixAlgebra":
        U = np.asarray(U, dtype=complex)
        return MatrixAlgebra(np.array([U @ b @ U.conj().T for b in self.basis]), check=False)


def _matrix_units(n: int, pairs) -> np.ndarray:
    out = np.zeros((len(pairs), n, n), dtype=complex)
    for k, (i, j) in enumerate(pairs):
        out[k, i, j] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class FiniteState:
    """``A -> tr(density A)`` on an algebra."""

    algebra: MatrixAlgebra
    density: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.density, dtype=complex)
        object.__setattr__(self, "density", rho)
        if abs(np.trace(rho) - 1) > 1e-12:
            raise ValueError("density must have trace 1")
        if np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0] < -1e-12:
            raise ValueError("density must be positive semidefinite")

    @classmethod
    def vector(cls, algebra: MatrixAlgebra, xi) -> "FiniteState":
        xi = np.asarray(xi, dtype=complex)
        return cls(algebra, np.outer(xi, xi.conj()))

    @classmethod
    def trace(cls, algebra: MatrixAlgebra) -> "FiniteState":
        return cls(algebra, np.eye(algebra.n, dtype=complex) / algebra.n)

    def __call__(self, A) -> complex:
        return complex(np.trace(self.density @ np.asarray(A, dtype=complex)))


@dataclass(frozen=True, eq=False)
class GNS:
    """GNS data: orthonormal representatives ``f_s`` of the quotient and the cyclic vector."""

    state: FiniteState
    representatives: np.ndarray
    vector: np.ndarray

    @property
    def dim(self) -> int:
        return self.representatives.shape[0]

    def represent(self, A) -> np.ndarray:
        """``pi(A)[s, t] = state(f_s^* A f_t)``."""
        A = np.asarray(A, dtype=complex)
        F = self.representatives
        rho = self.state.density
        return np.einsum("sji,jk,tkl,li->st", F.conj(), A, F, rho)


def gns(state: FiniteState, tol: float = 1e-10) -> GNS:
    """Left-regular representation on ``algebra / null space`` via the Gram matrix."""
    B = state.algebra.onb
    G = np.array([[state(bl.conj().T @ bk) for bk in B] for bl in B])
    G = (G + G.conj().T) / 2
    w, U = np.linalg.eigh(G)
    if w[0] < -tol * max(w[-1], 1.0):
        raise ValueError(f"Gram matrix is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    keep = w > RANK_CUT * w[-1]
    coeffs = U[:, keep] / np.sqrt(w[keep])
    F = np.einsum("ks,kij->sij", coeffs, B)
    e = state.algebra.unit
    v = np.array([state(f.conj().T @ e) for f in F])
    return GNS(state, F, v)


class UCPMap:
    """Linear map from (a subalgebra of) ``M_n`` to ``M_m`` stored by its Choi matrix."""

    def __init__(self, domain: MatrixAlgebra, codim: int, choi):
        self.domain = domain
        self.n = domain.n
        self.m = int(codim)
        C = np.asarray(choi, dtype=complex)
        if C.shape != (self.n * self.m, self.n * self.m):
            raise ValueError("Choi matrix has the wrong shape")
        self.choi = C

    # constructors

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], domain: MatrixAlgebra | int,
                      codim: int) -> "UCPMap":
        """Map ``f`` (linear on the domain) extended by the Hilbert-Schmidt projection."""
        if isinstance(domain, int):
            domain = MatrixAlgebra.full(domain)
        n, m = domain.n, codim
        images = np.array([np.asarray(f(b), dtype=complex) for b in domain.onb])
        C = np.zeros((n, m, n, m), dtype=complex)
        for i in range(n):
            for j in range(n):
                # E(E_ij) = sum_k conj(b_k[i, j]) b_k
                C[i, :, j, :] = np.einsum("k,kab->ab", domain.onb[:, i, j].conj(), images)
        return cls(domain, m, C.reshape(n * m, n * m))

    @classmethod
    def from_kraus(cls, kraus, domain: MatrixAlgebra | None = None) -> "UCPMap":
        """``T -> sum K T K^*`` with each ``K`` of shape ``(m, n)``."""
        kraus = [np.asarray(K, dtype=complex) for K in kraus]
        m, n = kraus[0].shape
        C = np.zeros((n * m, n * m), dtype=complex)
        for K in kraus:
            v = K.T.reshape(-1)  # v[(i, a)] = K[a, i]
            C += np.outer(v, v.conj())
        out = cls(MatrixAlgebra.full(n), m, C)
        if domain is not None:
            out = cls.from_function(out.apply, domain, m)
        return out

    @classmethod
    def conjugation(cls, W) -> "UCPMap":
        """``T -> W^* T W``."""
        W = np.asarray(W, dtype=complex)
        return cls.from_kraus([W.conj().T])

    # evaluation and derived data

    def apply(self, T) -> np.ndarray:
        T = np.asarray(T, dtype=complex)
        C = self.choi.reshape(self.n, self.m, self.n, self.m)
        return np.einsum("ij,iajb->ab", T, C)

    __call__ = apply

    def kraus(self) -> list[np.ndarray]:
        w, U = np.linalg.eigh((self.choi + self.choi.conj().T) / 2)
        keep = w > RANK_CUT * max(w[-1], 0.0) if w[-1] > 0 else np.zeros_like(w, dtype=bool)
        out = []
        for lam, u in zip(w[keep][::-1], U[:, keep].T[::-1]):
            v = np.sqrt(lam) * u
            k = int(np.argmax(np.abs(v)))
            v = v * (abs(v[k]) / v[k])  # largest entry real positive
            out.append(v.reshape(self.n, self.m).T)
        return out

    def choi_min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.choi + self.choi.conj().T) / 2)[0])

    def unital_residual(self) -> float:
        return float(np.linalg.norm(self.apply(self.domain.unit) - np.eye(self.m)))

    def kraus_roundtrip_residual(self) -> float:
        K = self.kraus()
        C2 = UCPMap.from_kraus(K).choi if K else np.zeros_like(self.choi)
        return float(np.linalg.norm(C2 - self.choi))

    def check(self) -> dict[str, float]:
        return {"choi_min_eigenvalue": self.choi_min_eigenvalue(),
                "unital_residual": self.unital_residual(),
                "kraus_roundtrip_residual": self.kraus_roundtrip_residual()}


@dataclass(frozen=True, eq=False)
class Dilation:
    """``phi(T) = V^* (T (x) I_r) V``."""

    V: np.ndarray
    multiplicity: int
    n: int

    @property
    def dim(self) -> int:
        return self.n * self.multiplicity

    def represent(self, T) -> np.ndarray:
        return np.kron(np.asarray(T, dtype=complex), np.eye(self.multiplicity))

    def compress(self, T) -> np.ndarray:
        return self.V.conj().T @ self.represent(T) @ self.V


def stinespring(phi: UCPMap, tol: float = 1e-10) -> Dilation:
    """Minimal dilation from the Choi eigendecomposition."""
    lam_min = phi.choi_min_eigenvalue()
    if lam_min < -tol:
        raise ValueError(f"map is not completely positive (Choi eigenvalue {lam_min:.3e})")
    K = phi.kraus()
    r = len(K)
    # V[(i, k), a] = conj(K_k[a, i]), matching kron(T, I_r)
    V = np.stack([Kk.conj().T for Kk in K], axis=1).reshape(phi.n * r, phi.m)
    return Dilation(V, r, phi.n)


def hs_projection(sub: MatrixAlgebra) -> UCPMap:
    """Hilbert-Schmidt projection onto ``sub``; completely positive, sends ``I`` to the unit of ``sub``."""
    return UCPMap.from_function(lambda b: b, sub, sub.n)


def trace_conditional_expectation(sub: MatrixAlgebra) -> UCPMap:
    """Trace-preserving conditional expectation of ``M_n`` onto a unital subalgebra."""
    if not sub.is_unital():
        raise ValueError("subalgebra does not contain the identity")
    E = hs_projection(sub)
    return UCPMap(MatrixAlgebra.full(sub.n), sub.n, E.choi)


def linear_extension(basis: Sequence[np.ndarray], images: Sequence[np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Linear map sending ``basis[k]`` to ``images[k]`` (least squares on the span)."""
    B = np.array([np.asarray(b, dtype=complex).reshape(-1) for b in basis]).T
    Im = np.array([np.asarray(x, dtype=complex) for x in images])

    def f(T):
        c, *_ = np.linalg.lstsq(B, np.asarray(T, dtype=complex).reshape(-1), rcond=None)
        return np.einsum("k,kab->ab", c, Im)

    return f


class PreconditionError(ValueError):
    def __init__(self, message: str, residuals: dict):
        super().__init__(f"{message}: {residuals}")
        self.residuals = residuals


def extend_state_preserving(phi: UCPMap, xi, eta, tol: float = 1e-9, state_tol: float = 1e-10) -> UCPMap:
    """Extend ``phi`` from its subalgebra to all of ``M_n`` keeping ``<psi(T) eta, eta> = <T xi, xi>``.

    Let ``phi o E = V^* pi V`` with ``pi(T) = T (x) I``.  The map
    ``W: A xi -> pi(A) V eta`` is an isometry from ``span(A xi)`` onto
    ``K0 = span(pi(A) V eta)``, and

        psi(T) = V^* (W T W^* + (1 - Q0) pi(E(T)) (1 - Q0)) V

    with ``Q0`` the projection onto ``K0``.  On the subalgebra this is
    ``V^* pi(A) V``; at ``eta`` only the first term survives.
    """
    xi = np.asarray(xi, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    A = phi.domain
    e = A.unit
    res_range = float(np.linalg.norm(e @ xi - xi))
    states = [abs(eta.conj() @ phi.apply(b) @ eta - xi.conj() @ b @ xi) for b in A.onb]
    res_state = float(max(states))
    if res_range > tol or res_state > state_tol:
        raise PreconditionError("extension preconditions fail",
                                {"xi_in_range": res_range, "state_compatibility": res_state})
    dil = stinespring(phi)
    V = dil.V
    eta1 = V @ eta
    X = np.stack([b @ xi for b in A.onb], axis=1)
    Y = np.stack([dil.represent(b) @ eta1 for b in A.onb], axis=1)
    W = Y @ np.linalg.pinv(X, rcond=1e-10)
    Q0 = W @ W.conj().T
    Qp = np.eye(dil.dim) - Q0
    E = hs_projection(A)
    n, m = phi.n, phi.m
    C = np.zeros((n, m, n, m), dtype=complex)
    for i in range(n):
        for j in range(n):
            Eij = np.zeros((n, n), dtype=complex)
            Eij[i, j] = 1.0
            inner = W @ Eij @ W.conj().T + Qp @ dil.represent(E.apply(Eij)) @ Qp
            C[i, :, j, :] = V.conj().T @ inner @ V
    return UCPMap(MatrixAlgebra.full(n), m, C.reshape(n * m, n * m))


def extension_report(phi: UCPMap, psi: UCPMap, xi, eta, rng: np.random.Generator, samples: int = 20) -> dict:
    xi = np.asarray(xi, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    restriction = max(float(np.linalg.norm(psi.apply(b) - phi.apply(b))) for b in phi.domain.onb)
    state = 0.0
    for _ in range(samples):
        T = rng.normal(size=(psi.n, psi.n)) + 1j * rng.normal(size=(psi.n, psi.n))
        state = max(state, abs(eta.conj() @ psi.apply(T) @ eta - xi.conj() @ T @ xi))
    return {"choi_min_eigenvalue": psi.choi_min_eigenvalue(),
            "unital_residual": psi.unital_residual(),
            "restriction_residual": restriction,
            "state_residual": float(state)}


def random_compatible_case(rng: np.random.Generator, algebra: MatrixAlgebra, m: int, r: int = 2):
    """Random ``(phi, xi, eta)`` with ``phi(A) = W^* (A (x) I_r) W`` and ``W eta = xi (x) u``.

    ``W`` is an isometry into ``range(e) (x) C^r``, so ``phi`` is unital on
    the subalgebra and ``<phi(A) eta, eta> = <A xi, xi>``.
    """
    n = algebra.n
    e = algebra.unit
    w, U = np.linalg.eigh(e)
    R = U[:, w > 0.5]
    if R.shape[1] * r < m:
        raise ValueError("dilation space too small for the requested codomain")
    c = rng.normal(size=R.shape[1]) + 1j * rng.normal(size=R.shape[1])
    xi = R @ (c / np.linalg.norm(c))
    u = rng.normal(size=r) + 1j * rng.normal(size=r)
    u /= np.linalg.norm(u)
    first = np.kron(xi, u)
    ambient = np.kron(R, np.eye(r))
    G = ambient @ (rng.normal(size=(ambient.shape[1], m)) + 1j * rng.normal(size=(ambient.shape[1], m)))
    G[:, 0] = first
    Q, _ = np.linalg.qr(G)
    Q[:, 0] = first  # qr may flip the phase of the first column
    eta_vec = rng.normal(size=m) + 1j * rng.normal(size=m)
    eta_vec /= np.linalg.norm(eta_vec)
    Rm = make_pointed(m, eta_vec).basis_rotation
    Wm = Q @ Rm
    phi = UCPMap.from_function(lambda A: Wm.conj().T @ np.kron(A, np.eye(r)) @ Wm, algebra, m)
    return phi, xi, eta_vec


# free products of maps ------------------------------------------------------

def check_state_compatibility(phi: UCPMap, source: PointedSpace, target: PointedSpace) -> float:
    return float(max(abs(target.state(phi.apply(b)) - source.state(b)) for b in phi.domain.onb))


def free_product_ucp(maps: Mapping[str, UCPMap], p: NCPoly, assignment: Mapping[str, np.ndarray],
                     source_spaces: Mapping[str, PointedSpace], target: FreeProductSpace,
                     tag_index: Mapping[str, int], tol: float = 1e-10) -> FreeOperator:
    """Evaluate the free product of the per-factor maps on ``p``.

    ``p`` is center-decomposed against the source states; every centered
    factor ``A°`` is sent to ``phi(A°)``, re-centered in the target (it is
    centered there up to rounding by compatibility), lifted into ``target``
    and multiplied out.  The scalar part goes to a multiple of the identity.
    """
    for tag, phi in maps.items():
        tgt = target.factors[tag_index[tag]]
        res = check_state_compatibility(phi, source_spaces[tag], tgt)
        if res > tol:
            raise PreconditionError("state incompatibility", {tag: res})
    by_tag: dict[str, dict[str, np.ndarray]] = {}
    for name, tag in p.symbols().items():
        by_tag.setdefault(tag, {})[name] = np.asarray(assignment[name], dtype=complex)
    dec = center_decompose(p, {t: source_spaces[t].xi for t in by_tag}, by_tag)

    def lift(tag, M):
        i = tag_index[tag]
        img = maps[tag].apply(M)
        img = img - target.factors[i].state(img) * np.eye(img.shape[0])
        return lift_left_operator(img, i, target).matrix

    ident = identity_operator(target).matrix
    M = dec.evaluate(by_tag, lift=lift, identity=ident)
    return FreeOperator(target, sp.csc_matrix(M), {"kind": "composite"}, max(p.degree, 1))
