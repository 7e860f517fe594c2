"""Monomials, polynomials, order ideals and borders.

Monomials are dense exponent vectors compared in degree-lexicographic order:
total degree first, then lexicographically with the first variable ranking
lowest, so that ``x0 < x1`` and ``x0**2 < x0*x1 < x1**2``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

__all__ = [
    "Monomial",
    "MonomialBasis",
    "Polynomial",
    "OrderIdeal",
    "compare",
    "deglex_key",
    "eval_monomial",
    "eval_poly",
    "mse",
    "border",
    "admissible_border",
    "evaluate_monomials",
    "monomials_of_degree",
]


@dataclass(frozen=True)
class Monomial:
    """A monomial ``prod_j x_j ** exponents[j]``."""

    exponents: tuple[int, ...]
    degree: int = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in {exps}")
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "degree", sum(exps))

    @classmethod
    def one(cls, n: int) -> "Monomial":
        return cls((0,) * n)

    @classmethod
    def variable(cls, i: int, n: int) -> "Monomial":
        exps = [0] * n
        exps[i] = 1
        return cls(tuple(exps))

    @property
    def n_vars(self) -> int:
        return len(self.exponents)

    def divides(self, other: "Monomial") -> bool:
        _check_same_n(self, other)
        return all(a <= b for a, b in zip(self.exponents, other.exponents))

    def times_variable(self, i: int) -> "Monomial":
        exps = list(self.exponents)
        exps[i] += 1
        return Monomial(tuple(exps))

    def divisors_one_step(self) -> list["Monomial"]:
        """The monomials ``self / x_i`` for every variable present."""
        out = []
        for i, e in enumerate(self.exponents):
            if e > 0:
                exps = list(self.exponents)
                exps[i] -= 1
                out.append(Monomial(tuple(exps)))
        return out

    def __lt__(self, other: "Monomial") -> bool:
        return compare(self, other) < 0

    def __le__(self, other: "Monomial") -> bool:
        return compare(self, other) <= 0

    def __gt__(self, other: "Monomial") -> bool:
        return compare(self, other) > 0

    def __ge__(self, other: "Monomial") -> bool:
        return compare(self, other) >= 0

    def __str__(self) -> str:
        parts = []
        for i, e in enumerate(self.exponents):
            if e == 1:
                parts.append(f"x{i}")
            elif e > 1:
                parts.append(f"x{i}^{e}")
        return "*".join(parts) if parts else "1"


def _check_same_n(a: Monomial, b: Monomial) -> None:
    if len(a.exponents) != len(b.exponents):
        raise ValueError(
            f"variable count mismatch: {len(a.exponents)} vs {len(b.exponents)}"
        )


def deglex_key(m: Monomial) -> tuple:
    return (m.degree, tuple(-e for e in m.exponents))


def compare(a: Monomial, b: Monomial) -> int:
    """Return -1, 0 or 1 as ``a`` is smaller, equal or larger in deglex."""
    _check_same_n(a, b)
    ka, kb = deglex_key(a), deglex_key(b)
    return (ka > kb) - (ka < kb)


def evaluate_monomials(exponents: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Evaluate monomials (rows of ``exponents``, S x n) at points Z (m x n).

    Returns the m x S evaluation matrix.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    E = np.asarray(exponents, dtype=int).reshape(-1, Z.shape[1])
    out = np.ones((Z.shape[0], E.shape[0]))
    if E.size == 0:
        return out
    for j in range(Z.shape[1]):
        col = E[:, j]
        max_e = int(col.max())
        if max_e == 0:
            continue
        # powers[k] = z_j ** k, built by repeated multiplication
        powers = np.ones((max_e + 1, Z.shape[0]))
        for k in range(1, max_e + 1):
            powers[k] = powers[k - 1] * Z[:, j]
        out *= powers[col].T
    return out


def eval_monomial(m: Monomial, z: Sequence[float]) -> float:
    z = np.asarray(z, dtype=float).ravel()
    if z.shape[0] != m.n_vars:
        raise DataError(f"point has dimension {z.shape[0]}, expected {m.n_vars}")
    return float(evaluate_monomials(np.array([m.exponents]), z[None, :])[0, 0])


class MonomialBasis:
    """Strictly increasing (deglex) tuple of monomials with index lookup."""

    def __init__(self, monomials: Iterable[Monomial], n_vars: int | None = None):
        mons = sorted(set(monomials), key=deglex_key)
        if n_vars is None:
            if not mons:
                raise ValueError("n_vars required for an empty basis")
            n_vars = mons[0].n_vars
        for m in mons:
            if m.n_vars != n_vars:
                raise ValueError(
                    f"monomial {m} has {m.n_vars} variables, expected {n_vars}"
                )
        self.n_vars = n_vars
        self.monomials: tuple[Monomial, ...] = tuple(mons)
        self._index = {m: i for i, m in enumerate(self.monomials)}

    def __len__(self) -> int:
        return len(self.monomials)

    def __getitem__(self, i: int) -> Monomial:
        return self.monomials[i]

    def __iter__(self):
        return iter(self.monomials)

    def __contains__(self, m: Monomial) -> bool:
        return m in self._index

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MonomialBasis)
            and self.n_vars == other.n_vars
            and self.monomials == other.monomials
        )

    def index(self, m: Monomial) -> int:
        try:
            return self._index[m]
        except KeyError:
            raise KeyError(f"monomial {m} not in basis") from None

    @property
    def exponent_matrix(self) -> np.ndarray:
        if not self.monomials:
            return np.zeros((0, self.n_vars), dtype=int)
        return np.array([m.exponents for m in self.monomials], dtype=int)

    @property
    def max_degree(self) -> int:
        return max((m.degree for m in self.monomials), default=0)

    def evaluate(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.n_vars:
            raise DataError(
                f"points have dimension {Z.shape[1]}, basis expects {self.n_vars}"
            )
        return evaluate_monomials(self.exponent_matrix, Z)


class Polynomial:
    """Sparse polynomial: coefficients attached to indices of a basis.

    The leading term is the term of highest deglex order, which is the term
    with the largest basis index since the basis is sorted.
    """

    def __init__(self, basis: MonomialBasis, indices, coeffs):
        indices = np.asarray(indices, dtype=int).ravel()
        coeffs = np.asarray(coeffs, dtype=float).ravel()
        if indices.shape != coeffs.shape:
            raise ValueError("indices and coefficients differ in length")
        if indices.size == 0:
            raise ValueError("polynomial needs at least one term")
        if np.any(indices < 0) or np.any(indices >= len(basis)):
            raise DataError("dangling monomial index")
        if len(np.unique(indices)) != indices.size:
            raise ValueError("duplicate monomial index")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("non-finite coefficient")
        order = np.argsort(indices)
        self.basis = basis
        self.indices = indices[order]
        self.coeffs = coeffs[order]

    @classmethod
    def from_terms(cls, terms: dict[Monomial, float], basis: MonomialBasis | None = None):
        if basis is None:
            basis = MonomialBasis(terms)
        idx = [basis.index(m) for m in terms]
        return cls(basis, idx, list(terms.values()))

    @property
    def n_vars(self) -> int:
        return self.basis.n_vars

    @property
    def leading_index(self) -> int:
        return int(self.indices[-1])

    @property
    def leading_monomial(self) -> Monomial:
        return self.basis[self.leading_index]

    @property
    def leading_coefficient(self) -> float:
        return float(self.coeffs[-1])

    @property
    def degree(self) -> int:
        return self.leading_monomial.degree

    @property
    def monomials(self) -> list[Monomial]:
        return [self.basis[i] for i in self.indices]

    def terms(self) -> dict[Monomial, float]:
        return {self.basis[i]: float(c) for i, c in zip(self.indices, self.coeffs)}

    def tail_l1(self) -> float:
        """l1 norm of the non-leading coefficients."""
        return float(np.abs(self.coeffs[:-1]).sum())

    def evaluate(self, Z: np.ndarray) -> np.ndarray:
        """Evaluate at every row of Z; returns an m-vector."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.n_vars:
            raise DataError(
                f"points have dimension {Z.shape[1]}, polynomial expects {self.n_vars}"
            )
        E = self.basis.exponent_matrix[self.indices]
        return evaluate_monomials(E, Z) @ self.coeffs

    def __call__(self, z) -> float:
        return eval_poly(self, z)

    def __str__(self) -> str:
        return " + ".join(f"{c:.6g}*{m}" for m, c in self.terms().items())

    def __repr__(self) -> str:
        return f"Polynomial({self})"


def eval_poly(p: Polynomial, z: Sequence[float]) -> float:
    z = np.asarray(z, dtype=float).ravel()
    return float(p.evaluate(z[None, :])[0])


def mse(p: Polynomial, Z: np.ndarray) -> float:
    """Mean of squared evaluations over the rows of Z."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[0] == 0 or np.asarray(Z).size == 0:
        raise DataError("mse of an empty point set")
    v = p.evaluate(Z)
    return float(np.mean(v * v))


class OrderIdeal:
    """A set of monomials closed under division."""

    def __init__(self, members: Iterable[Monomial], n_vars: int):
        mons = frozenset(members)
        for m in mons:
            if m.n_vars != n_vars:
                raise ValueError(f"monomial {m} has wrong variable count")
        for m in mons:
            for t in m.divisors_one_step():
                if t not in mons:
                    raise ValueError(f"not an order ideal: {m} in set but divisor {t} missing")
        self.n_vars = n_vars
        self.members = mons

    @classmethod
    def initial(cls, n: int) -> "OrderIdeal":
        return cls([Monomial.one(n)], n)

    def __contains__(self, m: Monomial) -> bool:
        return m in self.members

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.sorted())

    def sorted(self) -> list[Monomial]:
        return sorted(self.members, key=deglex_key)

    def up_to_degree(self, d: int) -> list[Monomial]:
        return [m for m in self.sorted() if m.degree <= d]

    def add(self, m: Monomial) -> "OrderIdeal":
        return OrderIdeal(self.members | {m}, self.n_vars)


def monomials_of_degree(d: int, n: int) -> list[Monomial]:
    """All degree-d monomials in n variables, deglex-sorted."""
    out = []
    for combo in itertools.combinations_with_replacement(range(n), d):
        exps = [0] * n
        for i in combo:
            exps[i] += 1
        out.append(Monomial(tuple(exps)))
    out.sort(key=deglex_key)
    return out


def border(O: OrderIdeal | Iterable[Monomial], d: int, n: int) -> list[Monomial]:
    """Degree-d monomials outside O that are divisible by some other member of O.

    Enumerates every degree-d monomial, so only practical for small n. Since
    ``1`` is in every nonempty order ideal this equals ``T_d \\ O``. A plain
    iterable is checked for closure first.
    """
    if not isinstance(O, OrderIdeal):
        O = OrderIdeal(O, n)
    if O.n_vars != n:
        raise ValueError(f"order ideal has {O.n_vars} variables, expected {n}")
    low = O.up_to_degree(d)
    out = []
    for u in monomials_of_degree(d, n):
        if u in O:
            continue
        if any(t != u and t.divides(u) for t in low):
            out.append(u)
    return out


def admissible_border(O: OrderIdeal | Iterable[Monomial], d: int, n: int) -> list[Monomial]:
    """Degree-d border terms whose every degree-(d-1) divisor lies in O.

    These are the candidates the generator algorithms test: adding any one
    of them to O keeps O closed under division. Built from ``x_i * t`` for
    degree-(d-1) members t, so cost scales with |O|, not with the number
    of degree-d monomials.
    """
    members = O.members if isinstance(O, OrderIdeal) else frozenset(O)
    prev = [t for t in members if t.degree == d - 1]
    cands = set()
    for t in prev:
        if t.n_vars != n:
            raise ValueError("variable count mismatch")
        for i in range(n):
            u = t.times_variable(i)
            if u in members or u in cands:
                continue
            if all(s in members for s in u.divisors_one_step()):
                cands.add(u)
    return sorted(cands, key=deglex_key)
