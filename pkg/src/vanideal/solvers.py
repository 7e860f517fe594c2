"""Numerical kernels: smallest eigenpairs, l1-constrained least squares,
l1-ball projection and matrix norms.

The least-squares problems all have the form::

    minimize    (1/m) * ||A y + b||_2^2
    subject to  ||y||_1 <= radius
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError

__all__ = [
    "LsProblem",
    "EigResult",
    "LsResult",
    "smallest_eig",
    "l1_project",
    "l1_ls_frank_wolfe",
    "l1_ls_agd",
    "l1_ls_projected_gradient",
    "ls_objective",
    "dual_gap",
    "matrix_norms",
    "spectral_norm",
    "two_one_norm_transpose",
]

DENSE_EIG_LIMIT = 512


@dataclass(frozen=True)
class EigResult:
    lam: float
    vector: np.ndarray


@dataclass
class LsProblem:
    A: np.ndarray
    b: np.ndarray
    radius: float
    tolerance: float = 1e-6
    max_iters: int = 10_000

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError(f"A has {self.A.shape[0]} rows, b has {self.b.shape[0]}")
        if self.A.shape[0] < 1 or self.A.shape[1] < 1:
            raise ValueError("LsProblem needs m >= 1 and l >= 1")
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise NumericalError("non-finite entries in least-squares problem")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n_coef(self) -> int:
        return self.A.shape[1]


@dataclass
class LsResult:
    """Solution plus convergence diagnostics."""

    y: np.ndarray
    objective: float
    gap: float
    iterations: int
    converged: bool
    history: list[float] | None = None


def smallest_eig(B: np.ndarray) -> EigResult:
    """Smallest eigenvalue and a unit eigenvector of a symmetric PSD matrix."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {B.shape}")
    if not np.all(np.isfinite(B)):
        raise NumericalError("non-finite entries in eigenproblem")
    B = 0.5 * (B + B.T)
    try:
        if B.shape[0] <= DENSE_EIG_LIMIT:
            w, V = np.linalg.eigh(B)
        else:
            w, V = scipy.linalg.eigh(B, subset_by_index=[0, 0])
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    v = V[:, 0]
    v = v / np.linalg.norm(v)
    return EigResult(float(w[0]), v)


def l1_project(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball (sort-based thresholding)."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    v = np.asarray(v, dtype=float)
    if np.abs(v).sum() <= radius:
        return v.copy()
    if radius == 0:
        return np.zeros_like(v)
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u * k > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def ls_objective(prob: LsProblem, y: np.ndarray) -> float:
    r = prob.A @ y + prob.b
    return float(r @ r) / prob.m


def _gradient(prob: LsProblem, y: np.ndarray) -> np.ndarray:
    return (2.0 / prob.m) * (prob.A.T @ (prob.A @ y + prob.b))


def dual_gap(prob: LsProblem, y: np.ndarray) -> float:
    """Frank-Wolfe gap ``<g, y - v>`` with v the best l1-ball vertex.

    Upper-bounds ``f(y) - f*`` for feasible y.
    """
    g = _gradient(prob, y)
    return float(g @ y + prob.radius * np.abs(g).max())


def _trivial(prob: LsProblem) -> LsResult | None:
    zero = np.zeros(prob.n_coef)
    if prob.radius == 0 or not np.any(prob.A):
        return LsResult(zero, ls_objective(prob, zero), 0.0, 0, True)
    gap0 = dual_gap(prob, zero)
    if gap0 <= prob.tolerance:
        return LsResult(zero, ls_objective(prob, zero), gap0, 0, True)
    return None


def l1_ls_frank_wolfe(prob: LsProblem, record: bool = False) -> LsResult:
    """Away-step Frank-Wolfe over the vertices ``+-radius * e_i``.

    Exact line search (the objective is quadratic). Iterates are convex
    combinations of at most ``iterations + 1`` vertices, so solutions are
    sparse. Ties in the linear minimization oracle go to the lowest index.
    """
    triv = _trivial(prob)
    if triv is not None:
        return triv
    m, ell, r = prob.m, prob.n_coef, prob.radius
    G = (prob.A.T @ prob.A) / m
    c = (prob.A.T @ prob.b) / m
    const = float(prob.b @ prob.b) / m

    def atom(j: int) -> tuple[int, float]:
        # vertex j < ell is +r e_j, j >= ell is -r e_{j-ell}
        return (j, r) if j < ell else (j - ell, -r)

    # start at the best vertex for the gradient at 0 (gradient = 2c)
    i0 = int(np.argmax(np.abs(c)))
    j0 = i0 + ell if c[i0] > 0 else i0
    weights = {j0: 1.0}
    y = np.zeros(ell)
    i, s = atom(j0)
    y[i] = s
    Gy = G @ y

    history = [] if record else None
    gap = np.inf
    it = 0
    for it in range(1, prob.max_iters + 1):
        g = 2.0 * (Gy + c)
        if record:
            history.append(float(y @ Gy + 2 * c @ y + const))
        # forward (Frank-Wolfe) vertex
        i_fw = int(np.argmax(np.abs(g)))
        j_fw = i_fw + ell if g[i_fw] > 0 else i_fw
        v = np.zeros(ell)
        v[i_fw] = -r * np.sign(g[i_fw]) if g[i_fw] != 0 else r
        gap = float(g @ y - g @ v)
        if gap <= prob.tolerance:
            break
        # away vertex: active atom with the largest <g, atom>
        active = sorted(weights)
        scores = [atom(j)[1] * g[atom(j)[0]] for j in active]
        j_aw = active[int(np.argmax(scores))]
        i_aw, s_aw = atom(j_aw)
        aw_gain = float(g @ y - s_aw * g[i_aw])  # <g, y - a>, negative of progress
        fw_gain = gap

        if fw_gain >= -aw_gain:
            d = v - y
            gmax = 1.0
            mode = "fw"
        else:
            a = np.zeros(ell)
            a[i_aw] = s_aw
            d = y - a
            alpha = weights[j_aw]
            gmax = alpha / (1.0 - alpha) if alpha < 1.0 else np.inf
            mode = "away"
        Gd = G @ d
        curv = float(d @ Gd)
        slope = float(g @ d)
        if curv <= 0:
            step = gmax
        else:
            step = min(gmax, -slope / (2.0 * curv))
        step = max(step, 0.0)
        if not np.isfinite(step):
            raise NumericalError("Frank-Wolfe step is not finite")

        if mode == "fw":
            for j in list(weights):
                weights[j] *= 1.0 - step
            weights[j_fw] = weights.get(j_fw, 0.0) + step
            if step >= 1.0:
                weights = {j_fw: 1.0}
        else:
            for j in list(weights):
                weights[j] *= 1.0 + step
            weights[j_aw] -= step
            if step >= gmax or weights[j_aw] <= 1e-15:
                del weights[j_aw]
        weights = {j: w for j, w in weights.items() if w > 0.0}
        y = y + step * d
        Gy = Gy + step * Gd
        # keep the iterate consistent with its atom representation
        if it % 100 == 0:
            y = np.zeros(ell)
            for j, w in weights.items():
                ii, ss = atom(j)
                y[ii] += w * ss
            Gy = G @ y
    converged = gap <= prob.tolerance
    return LsResult(y, ls_objective(prob, y), float(gap), it, converged, history)


def _lipschitz(prob: LsProblem) -> float:
    # gradient Lipschitz constant: 2/m * sigma_max(A)^2
    return 2.0 / prob.m * float(np.linalg.norm(prob.A, 2)) ** 2


def l1_ls_agd(prob: LsProblem, record: bool = False) -> LsResult:
    """Projected Nesterov acceleration (FISTA) with function-value restart.

    Stops once the Frank-Wolfe gap of the iterate drops below the tolerance.
    """
    triv = _trivial(prob)
    if triv is not None:
        return triv
    L = _lipschitz(prob)
    step = 1.0 / L
    y = np.zeros(prob.n_coef)
    x_prev = y.copy()
    t = 1.0
    f_prev = ls_objective(prob, y)
    history = [] if record else None
    gap = np.inf
    it = 0
    for it in range(1, prob.max_iters + 1):
        x = l1_project(y - step * _gradient(prob, y), prob.radius)
        f = ls_objective(prob, x)
        if record:
            history.append(f)
        if f > f_prev:
            # restart momentum
            t = 1.0
            y = x_prev.copy()
            x = l1_project(y - step * _gradient(prob, y), prob.radius)
            f = ls_objective(prob, x)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x + ((t - 1.0) / t_next) * (x - x_prev)
        x_prev, t, f_prev = x, t_next, f
        if it % 5 == 0 or it == prob.max_iters:
            gap = dual_gap(prob, x)
            if gap <= prob.tolerance:
                break
    x = x_prev
    gap = dual_gap(prob, x)
    return LsResult(x, ls_objective(prob, x), gap, it, gap <= prob.tolerance, history)


def l1_ls_projected_gradient(prob: LsProblem) -> LsResult:
    """Plain projected gradient with step 1/L; slow but simple."""
    zero = np.zeros(prob.n_coef)
    if prob.radius == 0 or not np.any(prob.A):
        return LsResult(zero, ls_objective(prob, zero), 0.0, 0, True)
    step = 1.0 / _lipschitz(prob)
    y = zero
    gap = np.inf
    it = 0
    for it in range(1, prob.max_iters + 1):
        y = l1_project(y - step * _gradient(prob, y), prob.radius)
        if it % 10 == 0:
            gap = dual_gap(prob, y)
            if gap <= prob.tolerance:
                break
    gap = dual_gap(prob, y)
    return LsResult(y, ls_objective(prob, y), gap, it, gap <= prob.tolerance)


def spectral_norm(W: np.ndarray, tol: float = 1e-12, max_iters: int = 20_000) -> float:
    """Largest singular value by power iteration on W^T W."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if not np.all(np.isfinite(W)):
        raise NumericalError("non-finite matrix entries")
    if W.size == 0 or not np.any(W):
        return 0.0
    M = W.T @ W if W.shape[0] >= W.shape[1] else W @ W.T
    # start from the largest column/row of M for a deterministic, non-orthogonal start
    v = M[:, int(np.argmax(np.linalg.norm(M, axis=0)))].copy()
    nv = np.linalg.norm(v)
    if not nv > 0 or not np.isfinite(nv):
        # W^T W under- or overflowed
        return float(np.linalg.norm(W, 2))
    v /= nv
    mu = 0.0
    for _ in range(max_iters):
        Mv = M @ v
        mu = float(v @ Mv)
        res = np.linalg.norm(Mv - mu * v)
        if res <= tol * max(mu, 1e-300):
            break
        v = Mv / np.linalg.norm(Mv)
    else:
        # power iteration stalls on clustered top singular values
        return float(np.linalg.norm(W, 2))
    return float(np.sqrt(max(mu, 0.0)))


def two_one_norm_transpose(W: np.ndarray) -> float:
    """||W^T||_{2,1}: sum of the Euclidean norms of the rows of W."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    return float(np.linalg.norm(W, axis=1).sum())


def matrix_norms(W: np.ndarray) -> tuple[float, float]:
    """Return ``(||W||_2, ||W^T||_{2,1})``."""
    return spectral_norm(W), two_one_norm_transpose(W)
