"""Spectral complexity of polynomial-layer networks.

A polynomial layer ``z -> C m(z)`` is rewritten as a two-layer network
``W_C . sigma . W_M``: each degree-d monomial gets a block of 2^d rows in
W_M (one per subset of its variables, counted with multiplicity) and the
InEx activation turns the block's subset sums back into the monomial by
inclusion-exclusion. This puts the classifier in the form needed for
spectrally-normalized margin bounds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .polycore import Monomial
from .solvers import matrix_norms

__all__ = [
    "subset_order",
    "inex_activate",
    "encode_monomial",
    "EncodedLayer",
    "encode_layer",
    "spectral_complexity",
    "SpectralReport",
    "theorem_report",
    "margins",
    "margin_loss",
    "margin_loss_from_logits",
    "generalization_bound",
]


@lru_cache(maxsize=None)
def subset_order(d: int) -> tuple[tuple[int, ...], ...]:
    """All subsets of range(d), by cardinality then lexicographically."""
    return tuple(
        s for k in range(d + 1) for s in itertools.combinations(range(d), k)
    )


@lru_cache(maxsize=None)
def _signs(d: int) -> np.ndarray:
    return np.array([(-1.0) ** (d - len(s)) for s in subset_order(d)])


def inex_activate(d: int, z) -> float | np.ndarray:
    """Inclusion-exclusion power sum ``(1/d!) sum_j (-1)^(d-|I_j|) z_j^d``.

    ``z`` holds the 2^d subset sums (last axis) in :func:`subset_order`.
    When ``z_j = sum_{i in I_j} x_i`` the result is ``x_1 * ... * x_d``.
    """
    if d < 1:
        raise ValueError("degree must be >= 1")
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != 2**d:
        raise ValueError(f"expected {2**d} subset sums, got {z.shape[-1]}")
    out = (z**d) @ _signs(d) / math.factorial(d)
    return float(out) if out.ndim == 0 else out


def encode_monomial(m: Monomial) -> np.ndarray:
    """The 2^d x n block whose InEx activation reproduces monomial m."""
    d = m.degree
    if d < 1:
        raise ValueError("constant monomials are not encoded; they use the constant channel")
    # variable i repeated alpha_i times
    dup = [i for i, a in enumerate(m.exponents) for _ in range(a)]
    W = np.zeros((2**d, m.n_vars))
    for j, subset in enumerate(subset_order(d)):
        for q in subset:
            W[j, dup[q]] += 1.0
    return W


@dataclass
class EncodedLayer:
    W_M: np.ndarray  # s x n
    W_C: np.ndarray  # N x S (columns follow the layer basis)
    blocks: list[tuple[int, int, int, int]]  # (basis column, degree, row start, row stop)
    constant_column: int | None = None

    @property
    def max_degree(self) -> int:
        return max((b[1] for b in self.blocks), default=0)

    @property
    def n_monomials(self) -> int:
        return self.W_C.shape[1]

    @property
    def n_polys(self) -> int:
        return self.W_C.shape[0]

    def activations(self, Z) -> np.ndarray:
        """``sigma(W_M z)`` for every row of Z, with the constant channel filled in."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        U = Z @ self.W_M.T
        out = np.empty((Z.shape[0], self.n_monomials))
        for col, d, r0, r1 in self.blocks:
            out[:, col] = inex_activate(d, U[:, r0:r1])
        if self.constant_column is not None:
            out[:, self.constant_column] = 1.0
        return out

    def forward(self, Z) -> np.ndarray:
        """Pre-absolute-value polynomial evaluations ``W_C sigma(W_M z)``."""
        return self.activations(Z) @ self.W_C.T


def encode_layer(layer) -> EncodedLayer:
    """Encode a :class:`~vanideal.avinn.PolynomialLayer` as (W_M, W_C)."""
    blocks, rows = [], []
    start = 0
    const_col = None
    for col, mono in enumerate(layer.basis):
        if mono.degree == 0:
            const_col = col
            continue
        W = encode_monomial(mono)
        rows.append(W)
        blocks.append((col, mono.degree, start, start + W.shape[0]))
        start += W.shape[0]
    W_M = np.vstack(rows) if rows else np.zeros((0, layer.n_vars))
    return EncodedLayer(W_M, layer.coeff_matrix.copy(), blocks, const_col)


def _norm_pair(W) -> tuple[float, float]:
    spec, two_one = matrix_norms(W)
    if spec == 0.0:
        raise NumericalError("zero spectral norm; ratio term undefined")
    return spec, two_one


def spectral_complexity(layers: Sequence[tuple[np.ndarray, float]]) -> float:
    """``(prod rho_i ||W_i||_2) * (sum (||W_i^T||_{2,1} / ||W_i||_2)^(2/3))^(3/2)``."""
    if not layers:
        raise ValueError("need at least one layer")
    prod, total = 1.0, 0.0
    for W, rho in layers:
        if not rho > 0:
            raise ValueError(f"Lipschitz constants must be > 0, got {rho}")
        spec, two_one = _norm_pair(W)
        prod *= rho * spec
        total += (two_one / spec) ** (2.0 / 3.0)
    return prod * total**1.5


@dataclass
class SpectralReport:
    d: int
    tau: float
    N: int
    S: int
    spectral_norms: dict = field(default_factory=dict)
    two_one_norms: dict = field(default_factory=dict)
    lipschitz: dict = field(default_factory=dict)
    lambda1: float = 0.0
    lambda2: float = 0.0
    measured_product: float = 0.0
    bound_product: float = 0.0
    measured_sum: float = 0.0
    bound_sum: float = 0.0
    lemma_checks: dict = field(default_factory=dict)
    R_avinn: float = 0.0
    R_phi: float | None = None
    kappa: float | None = None
    identity_residual: float | None = None
    width: int = 0
    gamma: float | None = None
    margin_loss: float | None = None
    generalization_bound: float | None = None
    bound_constant: float = 1.0

    @property
    def product_ok(self) -> bool:
        return self.measured_product <= self.bound_product * (1 + 1e-12)

    @property
    def sum_ok(self) -> bool:
        return self.measured_sum <= self.bound_sum * (1 + 1e-12)

    @property
    def all_ok(self) -> bool:
        return self.product_ok and self.sum_ok and all(self.lemma_checks.values())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["checks"] = {
            "product_bound": self.product_ok,
            "sum_bound": self.sum_ok,
            **self.lemma_checks,
        }
        out["bound_constant_note"] = "big-O constant set to 1; reported, not certified"
        return out


def _ratio_term(spec: float, two_one: float) -> float:
    return (two_one / spec) ** (2.0 / 3.0)


def refresh_bounds(rep: SpectralReport) -> SpectralReport:
    """Recompute both theorem bounds from the report's d, tau, N, S and lambdas."""
    d, N, S = rep.d, rep.N, rep.S
    rep.bound_product = 2.0**d * d * rep.tau * rep.lambda1 * math.sqrt(N * S)
    rep.bound_sum = 2.0 ** (2 * d / 3) * S ** (2 / 3) + N ** (2 / 3) * S ** (1 / 3) + rep.lambda2 ** (2 / 3)
    return rep


def theorem_report(
    truncated_layers: Sequence[tuple[np.ndarray, float]],
    encoded: EncodedLayer,
    head: np.ndarray,
    full_layers: Sequence[tuple[np.ndarray, float]] | None = None,
    d: int | None = None,
    tau: float | None = None,
    N: int | None = None,
    S: int | None = None,
) -> SpectralReport:
    """Norms, bound checks and the complexity ratio for an encoded classifier.

    ``truncated_layers`` are the (W, rho) pairs kept in front of the
    polynomial layer (may be empty); ``full_layers`` is the network it
    replaces, whose first ``len(truncated_layers)`` entries must coincide
    with ``truncated_layers``. Defaults: d is the largest monomial degree,
    tau the largest row l1 norm of W_C, N and S the shape of W_C.
    """
    W_M, W_C, W_F = encoded.W_M, encoded.W_C, np.atleast_2d(np.asarray(head, dtype=float))
    if W_F.shape[1] != W_C.shape[0]:
        raise DataError(f"head has {W_F.shape[1]} columns, layer has {W_C.shape[0]} outputs")
    d = encoded.max_degree if d is None else d
    if d < 1:
        raise NumericalError("layer has no non-constant monomials; W_M is empty")
    tau = float(np.abs(W_C).sum(axis=1).max()) if tau is None else float(tau)
    N = W_C.shape[0] if N is None else N
    S = W_C.shape[1] if S is None else S
    S_M = len(encoded.blocks)

    names = ("W_M", "W_C", "W_F")
    norms = {}
    for name, W in zip(names, (W_M, W_C, W_F)):
        norms[name] = _norm_pair(W)
    rep = SpectralReport(d=d, tau=tau, N=N, S=S)
    rep.spectral_norms = {k: v[0] for k, v in norms.items()}
    rep.two_one_norms = {k: v[1] for k, v in norms.items()}
    rep.lipschitz = {"W_M": float(d), "W_C": 1.0, "W_F": 1.0}
    rep.lambda1 = norms["W_F"][0]
    rep.lambda2 = norms["W_F"][1] / norms["W_F"][0]
    rep.measured_product = float(np.prod([norms[k][0] for k in names]))
    rep.measured_sum = float(sum(_ratio_term(*norms[k]) for k in names))
    refresh_bounds(rep)

    sM, tM = norms["W_M"]
    sC, tC = norms["W_C"]
    slack = 1 + 1e-12
    rep.lemma_checks = {
        "W_M_spectral": sM <= 2 ** (d / 2) * d * math.sqrt(S_M) * slack,
        "W_M_ratio": tM / sM <= 2**d * S_M * slack,
        "W_C_spectral": sC <= math.sqrt(N) * tau * slack,
        "W_C_ratio": tC / sC <= N * math.sqrt(S) * slack,
    }

    appended = [(W_M, float(d)), (W_C, 1.0), (W_F, 1.0)]
    trunc = list(truncated_layers)
    rep.R_avinn = spectral_complexity(trunc + appended)
    rep.width = max(W.shape[0] for W, _ in trunc + appended)

    if full_layers is not None:
        full = list(full_layers)
        Lp = len(trunc)
        if Lp > len(full):
            raise ConfigError("more truncated layers than full layers")
        for (Wt, rt), (Wf, rf) in zip(trunc, full[:Lp]):
            if np.shape(Wt) != np.shape(Wf) or not np.allclose(Wt, Wf) or rt != rf:
                raise ConfigError("truncated layers must be a prefix of the full network")
        rep.R_phi = spectral_complexity(full)
        removed = full[Lp:]
        num = float(np.prod([rho * _norm_pair(W)[0] for W, rho in appended]))
        den = float(np.prod([rho * _norm_pair(W)[0] for W, rho in removed])) if removed else 1.0
        sum_new = sum(_ratio_term(*_norm_pair(W)) for W, _ in trunc + appended)
        sum_old = sum(_ratio_term(*_norm_pair(W)) for W, _ in full)
        rep.kappa = num / den * (sum_new / sum_old) ** 1.5
        rep.identity_residual = abs(rep.kappa * rep.R_phi - rep.R_avinn) / rep.R_avinn
    return rep


def margins_from_logits(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    labels = np.asarray(labels, dtype=int)
    idx = np.arange(labels.size)
    correct = logits[idx, labels]
    other = logits.copy()
    other[idx, labels] = -np.inf
    return correct - other.max(axis=1)


def margin_loss_from_logits(logits, labels, gamma: float) -> float:
    """Fraction of samples whose margin is at most gamma."""
    if not gamma > 0:
        raise ConfigError(f"gamma must be > 0, got {gamma}")
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("margin loss of an empty dataset")
    return float(np.mean(margins_from_logits(logits, labels) <= gamma))


def margins(model, data) -> np.ndarray:
    return margins_from_logits(model.logits(data.points), data.labels)


def margin_loss(model, data, gamma: float) -> float:
    if len(data) == 0:
        raise DataError("margin loss of an empty dataset")
    return margin_loss_from_logits(model.logits(data.points), data.labels, gamma)


def generalization_bound(
    report: SpectralReport,
    data_norm: float,
    m: int,
    delta: float,
    gamma: float | None = None,
    margin_loss_value: float | None = None,
    constant: float = 1.0,
) -> float:
    """``L_gamma + C * (||X|| R / (gamma sqrt(m))) ln(width) + sqrt(ln(1/delta) / m)``.

    gamma and the empirical margin loss default to the values stored in the
    report. The constant C is not known; 1 is used unless given.
    """
    gamma = report.gamma if gamma is None else gamma
    lg = report.margin_loss if margin_loss_value is None else margin_loss_value
    if gamma is None or not gamma > 0:
        raise ConfigError(f"gamma must be > 0, got {gamma}")
    if not 0 < delta < 1:
        raise ConfigError(f"delta must be in (0, 1), got {delta}")
    if m < 1:
        raise ConfigError("m must be >= 1")
    if lg is None:
        raise ConfigError("margin loss value required")
    complexity = constant * data_norm * report.R_avinn / (gamma * math.sqrt(m)) * math.log(max(report.width, 1))
    confidence = math.sqrt(math.log(1.0 / delta) / m)
    return float(lg + complexity + confidence)


__all__ += ["margins_from_logits", "refresh_bounds"]
