"""ABM and OAVI: degree-by-degree construction of approximately vanishing
generators and the order ideal of non-vanishing monomials.

Both algorithms walk the admissible border of the current order ideal in
deglex order. A border term either becomes the leading term of a new
generator (its evaluations are approximately a combination of the order
ideal's evaluations) or joins the order ideal.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import solvers
from .errors import ConfigError, DataError
from .polycore import (
    Monomial,
    MonomialBasis,
    OrderIdeal,
    Polynomial,
    admissible_border,
)

log = logging.getLogger(__name__)

__all__ = [
    "Algorithm",
    "VanishConfig",
    "GeneratorSet",
    "abm_fit",
    "oavi_fit",
    "fit",
    "subsample",
    "vanishing_threshold",
    "EXACT_FLOOR",
    "NORMALIZATION_FLOOR",
]

# MSE values below this are roundoff; psi = 0 means "vanish up to roundoff"
EXACT_FLOOR = 1e-20
# ABM eigenvectors with a smaller leading entry are not normalized
NORMALIZATION_FLOOR = 1e-8
# tail coefficients below this (relative to the largest) are roundoff and dropped
COEFFICIENT_CUTOFF = 1e-13


class Algorithm(str, enum.Enum):
    ABM = "abm"
    OAVI_FW = "oavi-fw"
    OAVI_AGD = "oavi-agd"


@dataclass(frozen=True)
class VanishConfig:
    psi: float = 0.1
    tau: float = 10.0
    max_degree: int = 5
    algorithm: Algorithm = Algorithm.ABM
    subsample: int | None = None
    seed: int = 0
    solver_tolerance: float = 1e-6
    solver_max_iters: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not np.isfinite(self.psi) or self.psi < 0:
            raise ConfigError(f"psi must be >= 0, got {self.psi}")
        if not self.tau >= 2:
            raise ConfigError(f"tau must be >= 2, got {self.tau}")
        if int(self.max_degree) != self.max_degree or self.max_degree < 1:
            raise ConfigError(f"max_degree must be an integer >= 1, got {self.max_degree}")
        if self.subsample is not None and self.subsample < 1:
            raise ConfigError(f"subsample must be >= 1, got {self.subsample}")
        if self.solver_tolerance <= 0 or self.solver_max_iters < 1:
            raise ConfigError("solver tolerance and iteration cap must be positive")


@dataclass
class GeneratorSet:
    generators: list[Polynomial]
    order_ideal: OrderIdeal
    basis: MonomialBasis
    class_label: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return self.basis.n_vars

    def __len__(self) -> int:
        return len(self.generators)

    def used_monomials(self) -> set[Monomial]:
        out = set()
        for g in self.generators:
            out.update(g.monomials)
        return out


def vanishing_threshold(psi: float) -> float:
    return max(psi, EXACT_FLOOR)


def subsample(Z: np.ndarray, m_prime: int, seed: int) -> np.ndarray:
    """Uniform sample of ``m_prime`` rows without replacement, in original order."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    m = Z.shape[0]
    if not 1 <= m_prime <= m:
        raise ConfigError(f"subsample size {m_prime} outside [1, {m}]")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(m, size=m_prime, replace=False))
    return Z[idx]


def _check_points(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2 or Z.shape[0] == 0 or Z.shape[1] == 0:
        raise DataError("empty point set")
    if not np.all(np.isfinite(Z)):
        raise DataError("non-finite point coordinates")
    if np.abs(Z).max() > 1.0:
        log.warning("points outside [-1, 1]; rescale first for stable results")
    return Z


class _Columns:
    """Growing m x l matrix of order-ideal evaluations."""

    def __init__(self, m: int):
        self._data = np.empty((m, 16))
        self.n = 0

    def append(self, col: np.ndarray) -> None:
        if self.n == self._data.shape[1]:
            grown = np.empty((self._data.shape[0], 2 * self.n))
            grown[:, : self.n] = self._data
            self._data = grown
        self._data[:, self.n] = col
        self.n += 1

    @property
    def matrix(self) -> np.ndarray:
        return self._data[:, : self.n]

    def __getitem__(self, j: int) -> np.ndarray:
        return self._data[:, j]


def _clean(y: np.ndarray) -> np.ndarray:
    if y.size == 0:
        return y
    y = y.copy()
    y[np.abs(y) <= COEFFICIENT_CUTOFF * max(1.0, np.abs(y).max())] = 0.0
    return y


def _refine(prob: solvers.LsProblem, y: np.ndarray, full: bool = False) -> np.ndarray:
    """Unconstrained least squares on the support of y (or on all columns).

    Adopted only if it stays inside the l1 ball and lowers the objective.
    Sharpens the oracle answer to roundoff when the optimum is interior.
    """
    cols = np.arange(y.size) if full else np.flatnonzero(y)
    if cols.size == 0:
        return y
    z, *_ = np.linalg.lstsq(prob.A[:, cols], -prob.b, rcond=None)
    if np.abs(z).sum() > prob.radius:
        return y
    cand = np.zeros_like(y)
    cand[cols] = z
    if solvers.ls_objective(prob, cand) < solvers.ls_objective(prob, y):
        return cand
    return y


def _run(Z: np.ndarray, cfg: VanishConfig, class_label: int) -> GeneratorSet:
    start = time.perf_counter()
    Z = _check_points(Z)
    if cfg.subsample is not None and cfg.subsample < Z.shape[0]:
        Z = subsample(Z, cfg.subsample, cfg.seed)
    m, n = Z.shape
    threshold = vanishing_threshold(cfg.psi)

    one = Monomial.one(n)
    order = [one]
    members = {one}
    col_of = {one: 0}
    cols = _Columns(m)
    cols.append(np.ones(m))

    # (leading term, tail coefficients over the first len(tail) order-ideal terms)
    raw_gens: list[tuple[Monomial, np.ndarray]] = []
    fit_values: list[float] = []
    skipped = 0
    nonconverged = 0

    for d in range(1, cfg.max_degree + 1):
        cands = admissible_border(members, d, n)
        if not cands:
            break
        for u in cands:
            i = next(k for k, e in enumerate(u.exponents) if e > 0)
            t = u.divisors_one_step()[0]
            b = Z[:, i] * cols[col_of[t]]
            A = cols.matrix
            if cfg.algorithm is Algorithm.ABM:
                AB = np.column_stack([b, A])
                eig = solvers.smallest_eig(AB.T @ AB)
                if eig.lam <= m * threshold:
                    s = eig.vector
                    if abs(s[0]) < NORMALIZATION_FLOOR:
                        skipped += 1
                        log.debug("skipping %s: leading eigenvector entry %.3g", u, s[0])
                        continue
                    raw_gens.append((u, _clean(s[1:] / s[0])))
                    fit_values.append(eig.lam)
                    continue
            else:
                prob = solvers.LsProblem(
                    A, b, cfg.tau - 1.0, cfg.solver_tolerance, cfg.solver_max_iters
                )
                oracle = (
                    solvers.l1_ls_frank_wolfe
                    if cfg.algorithm is Algorithm.OAVI_FW
                    else solvers.l1_ls_agd
                )
                res = oracle(prob)
                y = _clean(_refine(prob, res.y))
                r = A @ y + b
                err = float(r @ r) / m
                if err > threshold:
                    y_full = _clean(_refine(prob, y, full=True))
                    r = A @ y_full + b
                    if float(r @ r) / m <= threshold:
                        y, err = y_full, float(r @ r) / m
                converged = res.converged or solvers.dual_gap(prob, y) <= prob.tolerance
                if not converged:
                    nonconverged += 1
                elif err <= threshold:
                    raw_gens.append((u, y))
                    fit_values.append(err)
                    continue
            col_of[u] = len(order)
            order.append(u)
            members.add(u)
            cols.append(b)

    leading = [u for u, _ in raw_gens]
    basis = MonomialBasis(order + leading, n_vars=n)
    order_idx = np.array([basis.index(o) for o in order], dtype=int)
    generators = []
    for u, tail in raw_gens:
        nz = np.flatnonzero(tail)
        idx = np.concatenate([order_idx[nz], [basis.index(u)]])
        coef = np.concatenate([tail[nz], [1.0]])
        generators.append(Polynomial(basis, idx, coef))

    gs = GeneratorSet(
        generators=generators,
        order_ideal=OrderIdeal(members, n),
        basis=basis,
        class_label=class_label,
    )
    gs.stats = {
        "points": m,
        "order_ideal": len(order),
        "polynomials": len(generators),
        "monomials": len(gs.used_monomials()),
        "skipped": skipped,
        "nonconverged": nonconverged,
        "fit_values": fit_values,
        "seconds": time.perf_counter() - start,
    }
    return gs


def abm_fit(Z, cfg: VanishConfig, class_label: int = 0) -> GeneratorSet:
    """Approximate Buchberger-Moeller.

    A border term u with evaluation b is tested through the smallest
    eigenpair of ``B = [b, A]^T [b, A]``. The unit eigenvector s has
    ``||[b, A] s||^2 = lambda``, so accepting ``lambda <= m * psi`` accepts
    polynomials whose unnormalized MSE is at most psi. Accepted vectors are
    rescaled to leading coefficient 1.
    """
    if Algorithm(cfg.algorithm) is not Algorithm.ABM:
        cfg = VanishConfig(**{**cfg.__dict__, "algorithm": Algorithm.ABM})
    return _run(Z, cfg, class_label)


def oavi_fit(Z, cfg: VanishConfig, class_label: int = 0) -> GeneratorSet:
    """Oracle approximate vanishing ideal algorithm.

    For a border term u the tail coefficients solve
    ``min_{||y||_1 <= tau - 1} (1/m) ||A y + u(Z)||^2`` with the configured
    oracle (Frank-Wolfe or accelerated projected gradient); ``u + sum y_j o_j``
    is kept when its MSE on Z is at most psi.
    """
    if Algorithm(cfg.algorithm) is Algorithm.ABM:
        cfg = VanishConfig(**{**cfg.__dict__, "algorithm": Algorithm.OAVI_FW})
    return _run(Z, cfg, class_label)


def fit(Z, cfg: VanishConfig, class_label: int = 0) -> GeneratorSet:
    """Dispatch on ``cfg.algorithm``."""
    return _run(Z, cfg, class_label)
