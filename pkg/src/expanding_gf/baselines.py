"""Comparison methods: batch filter, online random-feature kernel learning,
inductive transfer (with and without node features) and weighted k-NN."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .filtering import design_row
from .graph import AttachmentVector, ExpandingGraph, GraphError
from .online import DivergenceError

log = logging.getLogger(__name__)

MAX_CONDITION = 1e14


class IllConditionedError(np.linalg.LinAlgError):
    def __init__(self, cond: float):
        super().__init__(f"normal equations are ill-conditioned (cond ~ {cond:.3g})")
        self.cond = cond


class EmptyAttachmentError(ValueError):
    """The incoming node has no neighbours to average over."""


def ridge_solve(B: np.ndarray, y: np.ndarray, mu: float) -> np.ndarray:
    """Solve ``(B^T B + mu I) u = B^T y``."""
    B = np.asarray(B, dtype=float)
    y = np.asarray(y, dtype=float)
    M = B.T @ B + mu * np.eye(B.shape[1])
    rhs = B.T @ y
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise IllConditionedError(cond)
    u = np.linalg.solve(M, rhs)
    res = np.linalg.norm(M @ u - rhs)
    scale = max(1.0, np.linalg.norm(rhs), np.linalg.norm(M, 2) * np.linalg.norm(u))
    if res > 1e-8 * scale:
        log.warning("ridge residual %.3g (cond %.3g)", res, cond)
    return u


@dataclass
class BatchProblem:
    design_rows: np.ndarray
    targets: np.ndarray
    mu_b: float

    def __post_init__(self):
        self.design_rows = np.atleast_2d(np.asarray(self.design_rows, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
        if self.design_rows.shape[0] != self.targets.shape[0]:
            raise ValueError("row count and target count differ")
        if self.mu_b <= 0:
            raise ValueError("mu_b must be positive")
        if not (np.all(np.isfinite(self.design_rows)) and np.all(np.isfinite(self.targets))):
            raise ValueError("non-finite entries in batch problem")

    def objective(self, h: np.ndarray) -> float:
        r = self.design_rows @ h - self.targets
        return float(r @ r + self.mu_b * (h @ h))


def batch_filter(p: BatchProblem) -> np.ndarray:
    """Ridge least-squares taps over the whole stream."""
    return ridge_solve(p.design_rows, p.targets, p.mu_b)


# -- weighted k-NN ------------------------------------------------------------------

def wknn_predict(a: AttachmentVector, x: np.ndarray) -> float:
    """Attachment-weighted mean of the neighbours' signal."""
    if a.is_empty:
        raise EmptyAttachmentError("attachment has no neighbours")
    x = np.asarray(x, dtype=float)
    if x.shape[0] != a.dim:
        raise GraphError(f"signal length {x.shape[0]} != attachment dim {a.dim}")
    w = a.weights / a.weights.sum()
    return float(w @ x[a.indices])


# -- inductive transfer --------------------------------------------------------------

def pretrain_it1(g0: ExpandingGraph, x0: np.ndarray, observed_mask: np.ndarray, mu: float, K: int,
                 target_mask: np.ndarray | None = None) -> np.ndarray:
    """Fit taps on the starting graph from a partially observed signal.

    The filter input is ``x0`` with unobserved entries zeroed, the design is
    ``[x_in | A x_in | ... | A^K x_in]`` and the targets are ``x0`` at the
    entries of ``target_mask`` (by default the unobserved ones, i.e. the
    filter learns to interpolate). ``x0`` may hold one signal per column.
    """
    x0 = np.asarray(x0, dtype=float)
    observed = np.asarray(observed_mask, dtype=bool)
    if observed.shape != x0.shape:
        raise ValueError("observed_mask must match the shape of x0")
    if not observed.any():
        raise ValueError("observed_mask is empty")
    target = ~observed if target_mask is None else np.asarray(target_mask, dtype=bool)
    if target.shape != x0.shape:
        raise ValueError("target_mask must match the shape of x0")
    if not target.any():
        raise ValueError("no target entries to fit")
    z = np.where(observed, x0, 0.0)
    cols = [z[target]]
    for _ in range(K):
        z = g0.shift(z)
        cols.append(z[target])
    D = np.column_stack(cols)
    return ridge_solve(D, x0[target], mu)


def it1_predict(a: AttachmentVector, Ax: np.ndarray, h_pretrained: np.ndarray) -> float:
    return float(design_row(a, Ax) @ h_pretrained)


@dataclass
class SmoothingContext:
    """Kernel-ridge weights from an incoming node's features to existing nodes.

    ``kernel_matrix`` may be supplied when the Gram matrix of
    ``feature_matrix`` is already known.
    """

    feature_matrix: np.ndarray
    kernel: str = "linear"
    sigma2: float = 1.0
    lam: float = 1.0
    kernel_matrix: np.ndarray | None = None
    check_psd: bool = True
    _factor: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kernel not in ("linear", "gaussian"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        self.feature_matrix = np.atleast_2d(np.asarray(self.feature_matrix, dtype=float))
        if self.kernel_matrix is None:
            self.kernel_matrix = self._kernel(self.feature_matrix)
        if self.check_psd:
            lo = float(np.linalg.eigvalsh(self.kernel_matrix).min())
            if lo < -1e-8 * max(1.0, float(np.abs(self.kernel_matrix).max())):
                raise np.linalg.LinAlgError(f"kernel matrix is not PSD (min eigenvalue {lo:.3g})")

    def _kernel(self, F: np.ndarray, G: np.ndarray | None = None) -> np.ndarray:
        G = F if G is None else G
        lin = F @ G.T
        if self.kernel == "linear":
            return lin
        d2 = (F * F).sum(1)[:, None] + (G * G).sum(1)[None, :] - 2.0 * lin
        return np.exp(-np.maximum(d2, 0.0) / (2.0 * self.sigma2))

    def kernel_row(self, new_features: np.ndarray) -> np.ndarray:
        return self._kernel(np.atleast_2d(np.asarray(new_features, dtype=float)),
                            self.feature_matrix)[0]

    def solve(self, k: np.ndarray) -> np.ndarray:
        if self._factor is None:
            n = self.kernel_matrix.shape[0]
            self._factor = sla.cho_factor(self.kernel_matrix + self.lam * np.eye(n))
        return sla.cho_solve(self._factor, k)


def it2_smoothing_vector(ctx: SmoothingContext, new_features: np.ndarray) -> np.ndarray:
    """``m^T = k^T (K + lam I)^{-1}`` over the existing nodes."""
    return ctx.solve(ctx.kernel_row(new_features))


def it2_predict(m: np.ndarray, Ax: np.ndarray, h_pretrained: np.ndarray) -> float:
    m = np.asarray(m, dtype=float)
    if m.shape[0] != Ax.shape[0]:
        raise GraphError(f"smoothing vector length {m.shape[0]} != shifted matrix rows {Ax.shape[0]}")
    return float(m @ Ax @ h_pretrained)


# -- online kernel learning with random Fourier features -----------------------------

class RandomFeatureMap:
    """``z(a) = sqrt(2/D) cos(Omega a + b)`` approximating a Gaussian kernel.

    Rows of ``Omega`` are ``N(0, I / sigma2)``; inputs longer than
    ``dim_in`` are truncated, shorter ones are zero-padded.
    """

    def __init__(self, dim_in: int, D: int, sigma2: float, seed=None):
        if D < 1 or dim_in < 1 or sigma2 <= 0:
            raise ValueError("dim_in, D and sigma2 must be positive")
        rng = np.random.default_rng(seed)
        self.dim_in = dim_in
        self.D = D
        self.sigma2 = sigma2
        self.omegas = rng.standard_normal((D, dim_in)) / math.sqrt(sigma2)
        self.phases = rng.uniform(0.0, 2.0 * math.pi, D)
        self._c = math.sqrt(2.0 / D)

    def __call__(self, a) -> np.ndarray:
        if isinstance(a, AttachmentVector):
            keep = a.indices < self.dim_in
            proj = self.omegas[:, a.indices[keep]] @ a.weights[keep]
        else:
            a = np.asarray(a, dtype=float)
            n = min(a.shape[-1], self.dim_in)
            proj = a[..., :n] @ self.omegas[:, :n].T
        return self._c * np.cos(proj + self.phases)


@dataclass
class OklState:
    theta: np.ndarray
    eta_okl: float
    mu_okl: float

    @classmethod
    def zeros(cls, D: int, eta_okl: float, mu_okl: float) -> "OklState":
        return cls(np.zeros(D), eta_okl, mu_okl)


def okl_predict(s: OklState, fmap: RandomFeatureMap, a: AttachmentVector) -> float:
    return float(s.theta @ fmap(a))


def okl_update(s: OklState, fmap: RandomFeatureMap, a: AttachmentVector, x_true: float) -> OklState:
    z = fmap(a)
    grad = (float(s.theta @ z) - x_true) * z + 2.0 * s.mu_okl * s.theta
    theta = s.theta - s.eta_okl * grad
    if not np.all(np.isfinite(theta)):
        raise DivergenceError(-1, "non-finite OKL weights")
    return OklState(theta, s.eta_okl, s.mu_okl)
