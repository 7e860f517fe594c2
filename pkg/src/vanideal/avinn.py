"""Polynomial-layer classifier built from per-class vanishing generators.

Pipeline: fit generators per class, prune the least discriminative ones,
stack the survivors into a layer ``z -> |C m(z)|`` (m(z) the shared monomial
evaluations, C the coefficient matrix), and train a linear head on top.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import comb, log_softmax

from .errors import ConfigError, DataError, NumericalError
from .features import Dataset, Preprocessor, fit_preprocessor
from .polycore import Monomial, MonomialBasis, Polynomial
from .rng import seed_for, stream
from .vanishing import GeneratorSet, VanishConfig, fit

log = logging.getLogger(__name__)

__all__ = [
    "PolynomialLayer",
    "Classifier",
    "PruneReport",
    "TrainConfig",
    "fit_class_generators",
    "prune_score",
    "prune",
    "build_layer",
    "transform",
    "train_head",
    "predict",
    "random_monomial_layer",
    "identity_layer",
]


@dataclass
class PolynomialLayer:
    basis: MonomialBasis
    coeff_matrix: np.ndarray  # N x S
    class_sizes: list[int]
    # "abs" for polynomial layers; "identity" only for the linear-head baseline
    activation: str = "abs"

    def __post_init__(self):
        if self.activation not in ("abs", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        self.coeff_matrix = np.atleast_2d(np.asarray(self.coeff_matrix, dtype=float))
        if self.coeff_matrix.shape[1] != len(self.basis):
            raise ValueError("coefficient matrix columns must match the basis size")
        if sum(self.class_sizes) != self.coeff_matrix.shape[0]:
            raise ValueError("class sizes must add up to the number of rows")

    @property
    def n_polys(self) -> int:
        return self.coeff_matrix.shape[0]

    @property
    def n_monomials(self) -> int:
        return len(self.basis)

    @property
    def n_vars(self) -> int:
        return self.basis.n_vars

    @property
    def class_offsets(self) -> list[tuple[int, int]]:
        ends = np.cumsum(self.class_sizes)
        return [(int(e - s), int(e)) for s, e in zip(self.class_sizes, ends)]

    @property
    def support(self) -> np.ndarray:
        return self.coeff_matrix != 0

    def monomial_values(self, Z) -> np.ndarray:
        return self.basis.evaluate(Z)

    def pre_activation(self, Z) -> np.ndarray:
        return self.monomial_values(Z) @ self.coeff_matrix.T

    def __call__(self, Z) -> np.ndarray:
        pre = self.pre_activation(Z)
        return np.abs(pre) if self.activation == "abs" else pre

    def polynomial(self, i: int) -> Polynomial:
        nz = np.flatnonzero(self.coeff_matrix[i])
        return Polynomial(self.basis, nz, self.coeff_matrix[i, nz])


def transform(layer: PolynomialLayer, z) -> np.ndarray:
    """Feature vector ``(|p_1(z)|, ..., |p_N(z)|)`` for one point or a batch."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        if z.shape[0] != layer.n_vars:
            raise DataError(f"point has dimension {z.shape[0]}, layer expects {layer.n_vars}")
        return layer(z[None, :])[0]
    return layer(z)


def build_layer(sets: list[GeneratorSet]) -> PolynomialLayer:
    """Stack generator sets (in list order) over the union of their monomials."""
    if not sets:
        raise ValueError("need at least one generator set")
    n = sets[0].n_vars
    for gs in sets:
        if gs.n_vars != n:
            raise DataError(f"generator sets disagree on variable count ({gs.n_vars} vs {n})")
    used = set()
    for gs in sets:
        used |= gs.used_monomials()
    basis = MonomialBasis(used, n_vars=n)
    rows = []
    for gs in sets:
        for g in gs.generators:
            row = np.zeros(len(basis))
            for mono, c in g.terms().items():
                row[basis.index(mono)] = c
            rows.append(row)
    C = np.array(rows) if rows else np.zeros((0, len(basis)))
    return PolynomialLayer(basis, C, [len(gs) for gs in sets])


def fit_class_generators(
    data: Dataset, cfg: VanishConfig, n_classes: int | None = None, workers: int = 1
) -> list[GeneratorSet]:
    """One generator set per class, fitted on that class's points only.

    Each class draws its subsample from its own named random stream, so the
    result does not depend on ``workers``.
    """
    K = data.n_classes if n_classes is None else n_classes
    parts = data.class_points(K)
    for k, Zk in enumerate(parts):
        if Zk.shape[0] == 0:
            raise DataError(f"class {k} has no training points")

    def one(k: int) -> GeneratorSet:
        Zk = parts[k]
        sub = cfg.subsample if cfg.subsample is not None and cfg.subsample < Zk.shape[0] else None
        cfg_k = replace(cfg, subsample=sub, seed=seed_for(cfg.seed, "class", k))
        return fit(Zk, cfg_k, class_label=k)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(one, range(K)))
    return [one(k) for k in range(K)]


def prune_score(p: Polynomial, own_class: int, class_points: list[np.ndarray]) -> float:
    """Smallest mean absolute value of p over the other classes.

    Low scores mean p also (nearly) vanishes on some other class, so it does
    not help to tell the classes apart.
    """
    others = [Z for k, Z in enumerate(class_points) if k != own_class and len(Z)]
    if len(class_points) < 2 or not others:
        raise ConfigError("pruning scores need at least two classes")
    return float(min(np.mean(np.abs(p.evaluate(Z))) for Z in others))


@dataclass
class PruneReport:
    scores: list[list[float]]
    retained: list[list[int]]
    monomials_before: int
    monomials_after: int
    polynomials_before: int
    polynomials_after: int


def prune(
    sets: list[GeneratorSet], keep_fraction: float, class_points: list[np.ndarray]
) -> tuple[list[GeneratorSet], PruneReport]:
    """Keep the ``ceil(keep_fraction * n_k)`` highest-scoring generators per class.

    Ties keep construction order; every nonempty class keeps at least one.
    """
    if not 0 < keep_fraction <= 1:
        raise ConfigError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    scores, retained, out = [], [], []
    for k, gs in enumerate(sets):
        n_k = len(gs.generators)
        if keep_fraction == 1 or n_k == 0:
            s = [prune_score(g, k, class_points) for g in gs.generators] if len(sets) > 1 else []
            keep = list(range(n_k))
        else:
            s = [prune_score(g, k, class_points) for g in gs.generators]
            n_keep = max(1, math.ceil(keep_fraction * n_k - 1e-12))
            order = sorted(range(n_k), key=lambda i: -s[i])
            keep = sorted(order[:n_keep])
        scores.append(s)
        retained.append(keep)
        new = GeneratorSet(
            generators=[gs.generators[i] for i in keep],
            order_ideal=gs.order_ideal,
            basis=gs.basis,
            class_label=gs.class_label,
            stats=dict(gs.stats),
        )
        new.stats["polynomials"] = len(keep)
        new.stats["monomials"] = len(new.used_monomials())
        out.append(new)

    def n_mon(ss):
        used = set()
        for g in ss:
            used |= g.used_monomials()
        return len(used)

    report = PruneReport(
        scores=scores,
        retained=retained,
        monomials_before=n_mon(sets),
        monomials_after=n_mon(out),
        polynomials_before=sum(len(g) for g in sets),
        polynomials_after=sum(len(g) for g in out),
    )
    return out, report


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    momentum: float = 0.9
    epochs: int = 20
    batch: int = 64
    finetune_coeffs: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (self.lr >= 0 and np.isfinite(self.lr)):
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 0 or self.batch < 1:
            raise ConfigError("epochs must be >= 0 and batch >= 1")


@dataclass
class Classifier:
    layer: PolynomialLayer
    weights: np.ndarray  # K x N
    bias: np.ndarray  # K
    preprocessor: Preprocessor | None = None
    history: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.bias = np.asarray(self.bias, dtype=float).ravel()
        if self.weights.shape[1] != self.layer.n_polys:
            raise ValueError("head columns must match the layer width")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ValueError("bias length must match the number of classes")

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def features(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = self.preprocessor(X) if self.preprocessor is not None else X
        return self.layer(Z)

    def logits(self, X) -> np.ndarray:
        return self.features(X) @ self.weights.T + self.bias

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum: ties go to the lowest class id
        return np.argmax(self.logits(X), axis=1)


def predict(model: Classifier, z_raw) -> int:
    z = np.asarray(z_raw, dtype=float).ravel()
    return int(model.predict(z[None, :])[0])


def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    lp = log_softmax(logits, axis=1)
    return float(-lp[np.arange(labels.size), labels].mean())


def train_head(
    layer: PolynomialLayer,
    data: Dataset,
    hyper: TrainConfig = TrainConfig(),
    n_classes: int | None = None,
    preprocessor: Preprocessor | None = None,
) -> Classifier:
    """Softmax regression on the layer output by mini-batch SGD with momentum.

    ``data.points`` must already be preprocessed. Features are divided by
    their training RMS during optimization; the scale is folded back into
    the returned weights, so the classifier computes exactly
    ``W |C m(z)| + b``. With ``finetune_coeffs`` the nonzero entries of C
    are trained jointly (zero pattern frozen; d|x|/dx = 0 at x = 0).
    """
    K = data.n_classes if n_classes is None else n_classes
    y = data.labels
    if len(data) == 0:
        raise DataError("no training points")
    if y.max() >= K:
        raise DataError(f"label {y.max()} outside [0, {K})")
    M = layer.monomial_values(data.points)
    C = layer.coeff_matrix.copy()
    mask = C != 0
    act = np.abs if layer.activation == "abs" else (lambda x: x)
    pre = M @ C.T
    if not np.all(np.isfinite(pre)):
        raise NumericalError("non-finite layer output on training data")
    scale = np.sqrt(np.mean(pre * pre, axis=0))
    scale[~(scale > 1e-12)] = 1.0

    N = C.shape[0]
    W = np.zeros((K, N))
    b = np.zeros(K)
    vW, vb, vC = np.zeros_like(W), np.zeros_like(b), np.zeros_like(C)
    m = len(data)
    onehot = np.eye(K)[y]
    history = []

    def full_loss() -> float:
        h = act(M @ C.T) / scale
        return _cross_entropy(h @ W.T + b, y)

    for epoch in range(hyper.epochs):
        perm = stream(hyper.seed, "epoch", epoch).permutation(m)
        for start in range(0, m, hyper.batch):
            idx = perm[start : start + hyper.batch]
            Mb = M[idx]
            pb = Mb @ C.T
            h = act(pb) / scale
            logits = h @ W.T + b
            lp = log_softmax(logits, axis=1)
            delta = (np.exp(lp) - onehot[idx]) / idx.size
            gW = delta.T @ h
            gb = delta.sum(axis=0)
            vW = hyper.momentum * vW + gW
            vb = hyper.momentum * vb + gb
            if hyper.finetune_coeffs:
                dact = np.sign(pb) if layer.activation == "abs" else 1.0
                gpre = (delta @ W) * dact / scale
                gC = (gpre.T @ Mb) * mask
                vC = hyper.momentum * vC + gC
                C -= hyper.lr * vC
            W -= hyper.lr * vW
            b -= hyper.lr * vb
        loss = full_loss()
        if not np.isfinite(loss):
            raise NumericalError(
                f"training loss is {loss} after epoch {epoch}; "
                f"max |W| = {np.abs(W).max():.3g}, lr = {hyper.lr}"
            )
        history.append(loss)
        log.debug("epoch %d loss %.6f", epoch, loss)

    new_layer = PolynomialLayer(layer.basis, C, list(layer.class_sizes), layer.activation)
    return Classifier(new_layer, W / scale, b, preprocessor, history)


def identity_layer(n_vars: int) -> PolynomialLayer:
    """Pass-through layer ``z -> z``; a head on it is a plain linear classifier."""
    basis = MonomialBasis([Monomial.variable(i, n_vars) for i in range(n_vars)], n_vars)
    return PolynomialLayer(basis, np.eye(n_vars), [n_vars], activation="identity")


def _count_monomials(n: int, d: int) -> int:
    return int(comb(n + d - 1, d, exact=True))


def random_monomial_layer(
    n_polys: int,
    basis_size: int,
    degree_cap: int,
    n_vars: int,
    seed: int,
    class_sizes: list[int] | None = None,
    include_constant: bool = False,
) -> PolynomialLayer:
    """Layer over ``basis_size`` distinct monomials drawn uniformly from all
    monomials of degree 1..degree_cap, with standard normal coefficients.

    With ``include_constant`` the constant monomial takes one of the
    ``basis_size`` slots and the rest are drawn as above.
    """
    if min(n_polys, basis_size, degree_cap, n_vars) < 1:
        raise ConfigError("random monomial layer sizes must be positive")
    counts = np.array([_count_monomials(n_vars, d) for d in range(1, degree_cap + 1)], dtype=float)
    total = counts.sum() + include_constant
    if basis_size > total:
        log.warning("only %d monomials of degree <= %d exist; using all", total, degree_cap)
        basis_size = int(total)
    rng = stream(seed, "random-monomials")
    chosen: set[Monomial] = set()
    ordered: list[Monomial] = []
    if include_constant:
        chosen.add(Monomial.one(n_vars))
        ordered.append(Monomial.one(n_vars))
    while len(ordered) < basis_size:
        d = int(rng.choice(degree_cap, p=counts / counts.sum())) + 1
        # stars and bars: a uniform d-subset of n+d-1 slots is a uniform multiset
        slots = np.sort(rng.choice(n_vars + d - 1, size=d, replace=False))
        vars_ = slots - np.arange(d)
        exps = np.bincount(vars_, minlength=n_vars)
        mono = Monomial(tuple(int(e) for e in exps))
        if mono not in chosen:
            chosen.add(mono)
            ordered.append(mono)
    basis = MonomialBasis(ordered, n_vars)
    C = rng.standard_normal((n_polys, len(basis)))
    sizes = [n_polys] if class_sizes is None else list(class_sizes)
    return PolynomialLayer(basis, C, sizes)


def random_layer_like(ref: PolynomialLayer, seed: int, degree_cap: int | None = None) -> PolynomialLayer:
    """Random-monomial layer with the same N, S and class layout as ``ref``.

    The constant monomial is kept if ``ref`` uses it. The degree cap defaults
    to the largest degree in ``ref`` and is raised only when too few
    monomials exist below it.
    """
    const = Monomial.one(ref.n_vars) in ref.basis
    cap = max(ref.basis.max_degree if degree_cap is None else degree_cap, 1)
    need = ref.n_monomials - const
    while sum(_count_monomials(ref.n_vars, d) for d in range(1, cap + 1)) < need:
        cap += 1
    return random_monomial_layer(
        ref.n_polys, ref.n_monomials, cap, ref.n_vars, seed, ref.class_sizes, include_constant=const
    )


def evaluate_layer_naive(layer: PolynomialLayer, z) -> np.ndarray:
    """Per-polynomial evaluation; slow reference for :func:`transform`."""
    z = np.asarray(z, dtype=float).ravel()
    out = []
    for i in range(layer.n_polys):
        v = float(layer.polynomial(i).evaluate(z[None, :])[0]) if np.any(layer.coeff_matrix[i]) else 0.0
        out.append(abs(v) if layer.activation == "abs" else v)
    return np.array(out)


@dataclass
class FitResult:
    model: Classifier
    generator_sets: list[GeneratorSet]  # after pruning; these make up the layer
    fitted_sets: list[GeneratorSet]  # before pruning
    prune_report: PruneReport


def fit_avinn(
    train: Dataset,
    vanish: VanishConfig = VanishConfig(),
    hyper: TrainConfig = TrainConfig(),
    keep_fraction: float = 1.0,
    pca_dims: int | None = 128,
    rescale: bool = True,
    n_classes: int | None = None,
    workers: int = 1,
    prune_data: Dataset | None = None,
) -> FitResult:
    """Preprocess, fit generators per class, prune, build the layer, train the head.

    Pruning scores are computed on ``prune_data`` (raw, e.g. a validation
    split) when given, otherwise on the training points.
    """
    if not 0 < keep_fraction <= 1:
        raise ConfigError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    if len(train) == 0:
        raise DataError("no training points")
    K = train.n_classes if n_classes is None else n_classes
    pre = fit_preprocessor(train.points, pca_dims, rescale)
    Z = Dataset(pre(train.points), train.labels)
    fitted = fit_class_generators(Z, vanish, K, workers)
    if K > 1:
        score_on = Z if prune_data is None else Dataset(pre(prune_data.points), prune_data.labels)
        kept, report = prune(fitted, keep_fraction, score_on.class_points(K))
    elif keep_fraction == 1:
        n_mon = len(set().union(*(g.used_monomials() for g in fitted)))
        n_pol = sum(len(g) for g in fitted)
        kept, report = fitted, PruneReport([[]], [list(range(n_pol))], n_mon, n_mon, n_pol, n_pol)
    else:
        raise ConfigError("pruning needs at least two classes")
    layer = build_layer(kept)
    model = train_head(layer, Z, hyper, K, pre)
    return FitResult(model, kept, fitted, report)


__all__ += ["random_layer_like", "evaluate_layer_naive", "FitResult", "fit_avinn"]
