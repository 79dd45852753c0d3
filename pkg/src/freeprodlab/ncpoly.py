"""Non-commutative *-polynomials over tagged generators.

Each generator belongs to a free factor, identified by its *tag*.  By default
the tag of ``a1`` is its alphabetic prefix ``a``, so ``a1.a2'.b1`` alternates
between factors ``a`` and ``b``.

Text form: ``2.0*a1.b2'.a3 + (1-0.5j)*b1 - 3``.  Factors are joined with
``.``, a trailing ``'`` is the adjoint.  See ``docs/ncpoly_grammar.md``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

import numpy as np
import scipy.sparse as sp

Number = Union[int, float, complex]

_PREFIX = re.compile(r"[A-Za-z_]+")


def default_tag(name: str) -> str:
    m = _PREFIX.match(name)
    if not m:
        raise ValueError(f"generator name {name!r} must start with a letter")
    return m.group(0)


@dataclass(frozen=True)
class Letter:
    """A generator or its adjoint."""

    name: str
    tag: str
    star: bool = False

    def adjoint(self) -> "Letter":
        return Letter(self.name, self.tag, not self.star)

    def __str__(self) -> str:
        return self.name + ("'" if self.star else "")


Monomial = tuple[Letter, ...]


def _sort_key(word: Monomial):
    return (len(word), tuple((l.tag, l.name) for l in word), tuple(l.star for l in word))


class NCPoly:
    """Immutable linear combination of monomials with complex coefficients.

    Terms are merged, zero coefficients dropped, and kept in canonical order
    ``(length, symbols, star flags)``.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Iterable[tuple[Number, Iterable[Letter]]] = ()):
        acc: dict[Monomial, complex] = {}
        for c, w in terms:
            w = tuple(w)
            acc[w] = acc.get(w, 0j) + complex(c)
        self._terms = tuple((acc[w], w) for w in sorted(acc, key=_sort_key) if acc[w] != 0)

    # construction -----------------------------------------------------------

    @classmethod
    def generator(cls, name: str, tag: str | None = None) -> "NCPoly":
        return cls([(1, (Letter(name, tag or default_tag(name)),))])

    @classmethod
    def constant(cls, c: Number) -> "NCPoly":
        return cls([(c, ())])

    @classmethod
    def parse(cls, text: str, tags: Mapping[str, str] | None = None) -> "NCPoly":
        return _Parser(text, tags or {}).parse()

    # access -----------------------------------------------------------------

    @property
    def terms(self) -> tuple[tuple[complex, Monomial], ...]:
        return self._terms

    @property
    def degree(self) -> int:
        return max((len(w) for _, w in self._terms), default=0)

    def symbols(self) -> dict[str, str]:
        """Map generator name to tag."""
        return {l.name: l.tag for _, w in self._terms for l in w}

    def tags(self) -> list[str]:
        return sorted({l.tag for _, w in self._terms for l in w})

    def scalar_part(self) -> complex:
        return next((c for c, w in self._terms if not w), 0j)

    # algebra ----------------------------------------------------------------

    def _coerce(self, other) -> "NCPoly":
        if isinstance(other, NCPoly):
            return other
        if isinstance(other, (int, float, complex, np.number)):
            return NCPoly.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return NCPoly(self._terms + other._terms)

    __radd__ = __add__

    def __neg__(self):
        return NCPoly((-c, w) for c, w in self._terms)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return NCPoly((c1 * c2, w1 + w2) for c1, w1 in self._terms for c2, w2 in other._terms)

    def __rmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other * self

    def __pow__(self, k: int):
        out = NCPoly.constant(1)
        for _ in range(k):
            out = out * self
        return out

    def involution(self) -> "NCPoly":
        return NCPoly((np.conj(c), tuple(l.adjoint() for l in reversed(w))) for c, w in self._terms)

    @property
    def star(self) -> "NCPoly":
        return self.involution()

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self._terms == other._terms

    def __hash__(self):
        return hash(self._terms)

    def __repr__(self):
        return f"NCPoly({str(self)!r})"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for c, w in self._terms:
            coef = _format_coeff(c)
            parts.append(coef if not w else f"{coef}*" + ".".join(str(l) for l in w))
        return " + ".join(parts)


def _format_coeff(c: complex) -> str:
    if c.imag == 0:
        return repr(float(c.real))
    return "(" + repr(complex(c)).strip("()") + ")"


def involution(p: NCPoly) -> NCPoly:
    return p.involution()


# parsing --------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?j?)"
    r"|(?P<cplx>\([^()]*\))"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[+\-*.']))"
)


class _Parser:
    def __init__(self, text: str, tags: Mapping[str, str]):
        self.tags = tags
        self.tokens: list[tuple[str, str]] = []
        pos = 0
        text = text.strip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ValueError(f"cannot parse polynomial at {text[pos:]!r}")
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind)))
            pos = m.end()
            while pos < len(text) and text[pos].isspace():
                pos += 1
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def parse(self) -> NCPoly:
        if not self.tokens:
            raise ValueError("empty polynomial")
        terms = []
        sign = 1
        kind, val = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            sign = -1 if val == "-" else 1
        while True:
            c, w = self.term()
            terms.append((sign * c, w))
            kind, val = self.peek()
            if kind is None:
                break
            if kind == "op" and val in "+-":
                self.take()
                sign = -1 if val == "-" else 1
                k2, v2 = self.peek()
                if k2 == "op" and v2 in "+-":  # "+ -1.0*a"
                    self.take()
                    sign *= -1 if v2 == "-" else 1
                continue
            raise ValueError(f"unexpected token {val!r}")
        return NCPoly(terms)

    def term(self):
        kind, val = self.peek()
        coef = 1 + 0j
        if kind in ("num", "cplx"):
            self.take()
            coef = complex(val.replace(" ", ""))
            k2, v2 = self.peek()
            if not (k2 == "op" and v2 == "*"):
                return coef, ()
            self.take()
        return coef, self.word()

    def word(self):
        letters = [self.letter()]
        while self.peek() == ("op", "."):
            self.take()
            letters.append(self.letter())
        return tuple(letters)

    def letter(self) -> Letter:
        kind, name = self.take()
        if kind != "ident":
            raise ValueError(f"expected a generator name, got {name!r}")
        star = False
        while self.peek() == ("op", "'"):
            self.take()
            star = not star
        return Letter(name, self.tags.get(name) or default_tag(name), star)


# evaluation -----------------------------------------------------------------

def _adjoint(M):
    return M.conj().T if not sp.issparse(M) else M.conj().T.tocsc()


def eval_poly(p: NCPoly, assignment: Mapping[str, object]):
    """Evaluate ``p`` with generator names mapped to square matrices.

    Dense inputs give a dense result; if any input is sparse the result is a
    sparse CSC matrix.
    """
    names = p.symbols()
    missing = sorted(set(names) - set(assignment))
    if missing:
        raise KeyError(f"unassigned generators: {missing}")
    mats = {n: assignment[n] for n in names}
    shapes = {tuple(M.shape) for M in mats.values()}
    if not shapes:
        ref = next(iter(assignment.values()), None)
        if ref is None:
            raise ValueError("cannot infer dimension for a constant polynomial without an assignment")
        shapes = {tuple(ref.shape)}
        use_sparse = sp.issparse(ref)
    else:
        use_sparse = any(sp.issparse(M) for M in mats.values())
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch among assigned matrices: {sorted(shapes)}")
    (n, m), = shapes
    if n != m:
        raise ValueError("assigned matrices must be square")
    if use_sparse:
        mats = {k: sp.csc_matrix(v, dtype=complex) for k, v in mats.items()}
        ident = sp.identity(n, dtype=complex, format="csc")
        total = sp.csc_matrix((n, n), dtype=complex)
    else:
        mats = {k: np.asarray(v, dtype=complex) for k, v in mats.items()}
        ident = np.eye(n, dtype=complex)
        total = np.zeros((n, n), dtype=complex)
    adj = {}
    for c, w in p.terms:
        prod = None
        for l in w:
            if l.star:
                if l.name not in adj:
                    adj[l.name] = _adjoint(mats[l.name])
                M = adj[l.name]
            else:
                M = mats[l.name]
            prod = M if prod is None else prod @ M
        total = total + c * (ident if prod is None else prod)
    return total


def eval_word(word: Monomial, assignment: Mapping[str, object]):
    return eval_poly(NCPoly([(1, word)]), assignment)


# centered decomposition -----------------------------------------------------

State = Union[Callable[[np.ndarray], complex], np.ndarray]


@dataclass(frozen=True)
class CenteredFactor:
    """``prod(parts) - offset * I`` with all parts in one factor.

    ``parts`` holds letters and nested centered factors; ``state`` records the
    state of the factor's value, zero up to rounding.
    """

    parts: tuple
    tag: str
    offset: complex
    state: complex

    def value(self, assignment: Mapping[str, np.ndarray]) -> np.ndarray:
        M = None
        for part in self.parts:
            if isinstance(part, Letter):
                A = np.asarray(assignment[part.name], dtype=complex)
                A = A.conj().T if part.star else A
            else:
                A = part.value(assignment)
            M = A if M is None else M @ A
        if self.offset != 0:
            M = M - self.offset * np.eye(M.shape[0])
        return M

    def __str__(self) -> str:
        inner = ".".join(str(p) for p in self.parts)
        return f"({inner})°"


@dataclass(frozen=True)
class CenteredWord:
    coeff: complex
    factors: tuple[CenteredFactor, ...]

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(f.tag for f in self.factors)

    def __str__(self) -> str:
        return f"{_format_coeff(self.coeff)}*" + ".".join(str(f) for f in self.factors)


@dataclass(frozen=True)
class CenteredDecomposition:
    """``scalar * 1 + sum of coeff * (alternating product of centered factors)``."""

    scalar: complex
    words: tuple[CenteredWord, ...]

    def evaluate(self, assignments: Mapping[str, Mapping[str, np.ndarray]], lift=None, identity=None):
        """Recompose the decomposition into an operator.

        ``assignments[tag]`` maps the generator names of that factor to
        matrices.  ``lift(tag, M)`` moves a factor matrix to a common space
        (default: no change); ``identity`` is the unit of that space.
        """
        if lift is None:
            lift = lambda tag, M: M
        total = None
        for cw in self.words:
            prod = None
            for f in cw.factors:
                L = lift(f.tag, f.value(assignments[f.tag]))
                prod = L if prod is None else prod @ L
            total = cw.coeff * prod if total is None else total + cw.coeff * prod
        if identity is None:
            some = next(M for a in assignments.values() for M in a.values())
            identity = np.eye(np.asarray(some).shape[0], dtype=complex)
        return self.scalar * identity if total is None else total + self.scalar * identity


class _Run:
    __slots__ = ("parts", "tag", "value", "centered")

    def __init__(self, parts, tag, value, centered):
        self.parts, self.tag, self.value, self.centered = parts, tag, value, centered


def _state_fn(state: State) -> Callable[[np.ndarray], complex]:
    if callable(state):
        return state
    xi = np.asarray(state, dtype=complex)
    return lambda A: complex(xi.conj() @ A @ xi)


def center_decompose(p: NCPoly, states: Mapping[str, State],
                     assignments: Mapping[str, Mapping[str, np.ndarray]],
                     atol: float = 1e-12) -> CenteredDecomposition:
    """Rewrite ``p`` as a scalar plus alternating words of centered factors.

    Same-tag runs are fused first.  Each fused factor ``A`` whose state exceeds
    ``atol * max(1, |A|)`` is split as ``tau(A) 1 + A°``; splitting can make new
    same-tag neighbours, which are fused and centered again.

    ``states[tag]`` is a callable or a state vector; ``assignments[tag]`` maps
    the generator names of that tag to matrices on the factor space.
    """
    fns = {}
    for tag in p.tags():
        if tag not in states:
            raise KeyError(f"no state supplied for tag {tag!r}")
        fns[tag] = _state_fn(states[tag])
    scalar = [0j]
    out: list[CenteredWord] = []

    def letter_value(l: Letter):
        A = np.asarray(assignments[l.tag][l.name], dtype=complex)
        return A.conj().T if l.star else A

    def fuse(runs):
        fused = []
        for r in runs:
            if fused and fused[-1].tag == r.tag:
                prev = fused.pop()
                r = _Run(prev.parts + r.parts, r.tag, prev.value @ r.value, False)
            fused.append(r)
        return fused

    def finish(run: _Run, tau: complex) -> CenteredFactor:
        if len(run.parts) == 1 and isinstance(run.parts[0], CenteredFactor):
            return run.parts[0]
        return CenteredFactor(run.parts, run.tag, 0j, tau)

    def expand(runs, coeff):
        runs = fuse(runs)
        taus = []
        for j, r in enumerate(runs):
            tau = fns[r.tag](r.value)
            scale = max(1.0, float(np.max(np.abs(r.value), initial=0.0)))
            if r.centered or abs(tau) <= atol * scale:
                taus.append(tau)
                continue
            n = r.value.shape[0]
            cf = CenteredFactor(r.parts, r.tag, tau, 0j)
            centered = _Run((cf,), r.tag, r.value - tau * np.eye(n), True)
            expand(runs[:j] + runs[j + 1:], coeff * tau)
            expand(runs[:j] + [centered] + runs[j + 1:], coeff)
            return
        if not runs:
            scalar[0] += coeff
            return
        out.append(CenteredWord(coeff, tuple(finish(r, t) for r, t in zip(runs, taus))))

    for c, w in p.terms:
        expand([_Run((l,), l.tag, letter_value(l), False) for l in w], c)
    # record the numeric state of each centered factor
    fixed = []
    for cw in out:
        factors = []
        for f in cw.factors:
            v = f.value(assignments[f.tag])
            factors.append(CenteredFactor(f.parts, f.tag, f.offset, fns[f.tag](v)))
        fixed.append(CenteredWord(cw.coeff, tuple(factors)))
    return CenteredDecomposition(scalar[0], tuple(fixed))
