"""Operator norms, state 2-norms, and a duality lower bound."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .ncpoly import NCPoly, eval_poly

# fixed seed for the power-iteration start vector
POWER_SEED = 20_240_607
DENSE_MAX_DIM = 512


@dataclass(frozen=True)
class NormResult:
    value: float
    method: str
    iterations: int
    residual: float

    def to_json(self) -> dict:
        return {"value": self.value, "method": self.method, "iterations": self.iterations,
                "residual": self.residual}


class NormConvergenceError(RuntimeError):
    def __init__(self, message: str, last: NormResult):
        super().__init__(message)
        self.last = last


def _dense(T) -> np.ndarray:
    return T.toarray() if sp.issparse(T) else np.asarray(T, dtype=complex)


def op_norm(T, tol: float = 1e-9, max_iter: int = 100_000, method: str = "auto",
            seed: int = POWER_SEED) -> NormResult:
    """Largest singular value.

    ``method="auto"`` uses a dense Hermitian eigensolve of ``T^* T`` when the
    dimension is at most 512 and power iteration on ``T^* T`` otherwise.
    """
    if hasattr(T, "matrix"):
        T = T.matrix
    n, m = T.shape
    if n != m:
        raise ValueError("op_norm expects a square matrix")
    if method == "auto":
        method = "dense-eigensolve" if n <= DENSE_MAX_DIM else "power-iteration"
    if n == 0:
        return NormResult(0.0, method, 0, 0.0)
    if method == "dense-eigensolve":
        M = _dense(T)
        G = M.conj().T @ M
        ev = np.linalg.eigvalsh((G + G.conj().T) / 2)
        return NormResult(float(np.sqrt(max(ev[-1], 0.0))), method, 1, 0.0)
    if method != "power-iteration":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    v = np.ones(n, dtype=complex) + 1e-3 * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    Th = T.conj().T
    lam_prev = 0.0
    for it in range(1, max_iter + 1):
        w = Th @ (T @ v)
        lam = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0:
            return NormResult(0.0, method, it, 0.0)
        v = w / nw
        resid = abs(lam - lam_prev) / max(lam, 1e-300)
        if it > 1 and resid <= tol * 1e-2:
            return NormResult(float(np.sqrt(max(nw, 0.0))), method, it, resid)
        lam_prev = lam
    last = NormResult(float(np.sqrt(max(lam_prev, 0.0))), method, max_iter, resid)
    raise NormConvergenceError(f"power iteration did not converge (residual {resid:.2e})", last)


def two_norm(T, xi0=None) -> float:
    """``<T^* T xi0, xi0>^(1/2) = |T xi0|``; ``xi0`` defaults to ``e_0``."""
    if hasattr(T, "matrix"):
        T = T.matrix
    n = T.shape[0]
    if xi0 is None:
        xi0 = np.zeros(n, dtype=complex)
        xi0[0] = 1.0
    return float(np.linalg.norm(T @ np.asarray(xi0, dtype=complex)))


def norm_lower_bound_duality(p: NCPoly, assignment: Mapping[str, object], xi0,
                             witnesses: Sequence[tuple[NCPoly, NCPoly]]) -> float:
    """``max |<p(X) p2(X) xi0, p1(X) xi0>| / (|p1(X) xi0| |p2(X) xi0|)``.

    Each term is a normalized matrix coefficient of ``p(X)``, hence at most
    its operator norm; equivalently the state of ``p1^* p p2`` divided by the
    two 2-norms.
    """
    if hasattr(xi0, "__len__"):
        xi0 = np.asarray(xi0, dtype=complex)
    P = eval_poly(p, assignment)
    best = 0.0
    for p1, p2 in witnesses:
        u = eval_poly(p1, assignment) @ xi0
        v = eval_poly(p2, assignment) @ xi0
        n1, n2 = np.linalg.norm(u), np.linalg.norm(v)
        if n1 == 0 or n2 == 0:
            raise ValueError(f"degenerate witness ({p1}, {p2}) has zero 2-norm")
        best = max(best, abs(np.vdot(u, P @ v)) / (n1 * n2))
    return float(best)
