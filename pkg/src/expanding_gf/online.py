"""Online gradient descent for FIR filters over an expanding graph.

Each incoming node contributes the loss

    l_t(h) = 1/2 (a_t^T A_x h - x_t)^2 + mu ||h||^2

whose gradient is ``(a_t^T A_x h - x_t) A_x^T a_t + 2 mu h``. Because the
loss only touches ``A_x`` and ``a_t`` through the design row
``g_t = A_x^T a_t``, a stream can be replayed from its rows alone; that is
how regret and hyperparameter searches are evaluated.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .filtering import build_shifted_matrix, design_row
from .graph import AttachmentVector, ExpandingGraph, GraphError


class DivergenceError(RuntimeError):
    """The iterate left the finite range; usually a step size that is too large."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"online learner diverged at step {step}: {detail}")
        self.step = step


@dataclass
class OnlineLearnerConfig:
    eta: float
    mu: float
    K: int = 5
    projection_radius: float | None = None
    h_init: np.ndarray | None = None
    divergence_limit: float = 1e9

    def __post_init__(self):
        if self.eta < 0 or not math.isfinite(self.eta):
            raise ValueError(f"eta must be a finite nonnegative number, got {self.eta}")
        if self.mu < 0 or not math.isfinite(self.mu):
            raise ValueError(f"mu must be a finite nonnegative number, got {self.mu}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.projection_radius is not None and self.projection_radius <= 0:
            raise ValueError("projection_radius must be positive when given")
        if self.h_init is not None:
            h = np.asarray(self.h_init, dtype=float)
            if h.shape != (self.K + 1,):
                raise ValueError(f"h_init must have length {self.K + 1}")

    def initial_taps(self) -> np.ndarray:
        if self.h_init is None:
            return np.zeros(self.K + 1)
        return np.array(self.h_init, dtype=float)


@dataclass
class OnlineLearnerState:
    h: np.ndarray
    step: int = 0
    loss_history: list = field(default_factory=list)
    prediction_history: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    h_norms: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    step_madds: list = field(default_factory=list)
    pending: tuple | None = None

    @classmethod
    def initial(cls, config: OnlineLearnerConfig) -> "OnlineLearnerState":
        return cls(h=config.initial_taps())

    def replay(self) -> "Replay":
        K1 = self.h.shape[0]
        rows = np.array(self.rows, dtype=float).reshape(-1, K1)
        return Replay(rows, np.array(self.targets, dtype=float))

    @property
    def predictions(self) -> np.ndarray:
        return np.array([p for p, _ in self.prediction_history])

    @property
    def truths(self) -> np.ndarray:
        return np.array([x for _, x in self.prediction_history])


@dataclass
class Replay:
    """Design rows ``g_t = A_x^T a_t`` and targets of a finished stream."""

    rows: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
        if self.rows.shape[0] != self.targets.shape[0]:
            raise ValueError("rows and targets differ in length")

    def __len__(self):
        return self.targets.shape[0]

    def prefix(self, T: int) -> "Replay":
        return Replay(self.rows[:T], self.targets[:T])

    def losses(self, h: np.ndarray, mu: float) -> np.ndarray:
        r = self.rows @ h - self.targets
        return 0.5 * r * r + mu * float(h @ h)

    @classmethod
    def from_events(cls, events: Iterable[tuple[AttachmentVector, np.ndarray, float]]) -> "Replay":
        rows, targets = [], []
        for a, Ax, x in events:
            rows.append(design_row(a, Ax))
            targets.append(x)
        return cls(np.array(rows), np.array(targets))


# -- per-step loss and gradient -----------------------------------------------

def loss(h, a: AttachmentVector, Ax: np.ndarray, x_true: float, mu: float) -> float:
    return loss_row(h, design_row(a, Ax), x_true, mu)


def gradient(h, a: AttachmentVector, Ax: np.ndarray, x_true: float, mu: float) -> np.ndarray:
    return gradient_row(h, design_row(a, Ax), x_true, mu)


def loss_row(h, row: np.ndarray, x_true: float, mu: float) -> float:
    h = np.asarray(h, dtype=float)
    if h.shape != row.shape:
        raise GraphError(f"{h.shape[0]} taps for a design row of length {row.shape[0]}")
    r = float(row @ h) - x_true
    return 0.5 * r * r + mu * float(h @ h)


def gradient_row(h, row: np.ndarray, x_true: float, mu: float) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape != row.shape:
        raise GraphError(f"{h.shape[0]} taps for a design row of length {row.shape[0]}")
    return (float(row @ h) - x_true) * row + 2.0 * mu * h


# -- the learner -------------------------------------------------------------------

def predict(state: OnlineLearnerState, row: np.ndarray) -> float:
    """Record and return the prediction for the next node; the truth comes later."""
    if state.pending is not None:
        raise RuntimeError("previous prediction has not been resolved")
    y = float(row @ state.h)
    state.pending = (row, y)
    return y


def reveal(state: OnlineLearnerState, config: OnlineLearnerConfig, x_true: float) -> float:
    """Incur the loss of the pending prediction and take one projected OGD step."""
    if state.pending is None:
        raise RuntimeError("reveal() called before predict()")
    row, y = state.pending
    state.pending = None
    h = state.h
    r = y - x_true
    hh = float(h @ h)
    state.loss_history.append(0.5 * r * r + config.mu * hh)
    state.prediction_history.append((y, float(x_true)))
    grad = r * row + 2.0 * config.mu * h
    gnorm = float(np.linalg.norm(grad))
    state.step += 1
    if not math.isfinite(gnorm):
        raise DivergenceError(state.step, "non-finite gradient")
    h = h - config.eta * grad
    if config.projection_radius is not None:
        nrm = float(np.linalg.norm(h))
        if nrm > config.projection_radius:
            h = h * (config.projection_radius / nrm)
    if not np.all(np.abs(h) <= config.divergence_limit):
        raise DivergenceError(state.step, f"|h| exceeded {config.divergence_limit:g}")
    state.h = h
    state.grad_norms.append(gnorm)
    state.h_norms.append(float(np.linalg.norm(h)))
    state.rows.append(row)
    state.targets.append(float(x_true))
    return state.loss_history[-1]


def ogd_step(state: OnlineLearnerState, config: OnlineLearnerConfig,
             a: AttachmentVector, Ax: np.ndarray, x_true: float) -> OnlineLearnerState:
    predict(state, design_row(a, Ax))
    reveal(state, config, x_true)
    return state


def run_replay(replay: Replay, config: OnlineLearnerConfig,
               snapshot_interval: int | None = None) -> OnlineLearnerState:
    """Run OGD over stored design rows; identical iterates to :func:`run_online`."""
    state = OnlineLearnerState.initial(config)
    for t in range(len(replay)):
        predict(state, replay.rows[t])
        reveal(state, config, replay.targets[t])
        if snapshot_interval and state.step % snapshot_interval == 0:
            state.snapshots.append((state.step, state.h.copy()))
    return state


def replay_grid_sse(replay: Replay, etas, mus, divergence_limit: float = 1e9):
    """OGD over a replay for many ``(eta, mu)`` pairs at once.

    Returns ``(sse, diverged)``: the summed squared prediction error per
    pair and a mask of the pairs whose taps left ``divergence_limit``.
    """
    etas = np.asarray(etas, dtype=float)[:, None]
    mus2 = 2.0 * np.asarray(mus, dtype=float)[:, None]
    C = etas.shape[0]
    H = np.zeros((C, replay.rows.shape[1]))
    sse = np.zeros(C)
    diverged = np.zeros(C, dtype=bool)
    with np.errstate(all="ignore"):
        for g, x in zip(replay.rows, replay.targets):
            r = H @ g - x
            sse += r * r
            H -= etas * (r[:, None] * g + mus2 * H)
            bad = ~(np.abs(H).max(axis=1) <= divergence_limit)
            if bad.any():
                diverged |= bad
                H[bad] = 0.0
    sse[diverged] = np.nan
    return sse, diverged


def run_online(g0: ExpandingGraph, x0: np.ndarray, stream: Sequence, config: OnlineLearnerConfig,
               snapshot_interval: int | None = None):
    """Process a stream of ``TrainingEvent``s node by node.

    For each event: build ``A_x`` on the current graph, predict, reveal the
    truth and update, then attach the node and append its signal. Returns
    ``(state, grown_graph, grown_signal)``; ``g0`` and ``x0`` are not modified.
    ``state.step_madds`` holds the multiply-adds spent per step.
    """
    g = g0.copy()
    x = np.array(x0, dtype=float)
    state = OnlineLearnerState.initial(config)
    K1 = config.K + 1
    for ev in stream:
        before = g.madds
        Ax = build_shifted_matrix(g, x, config.K)
        row = design_row(ev.attachment, Ax)
        predict(state, row)
        reveal(state, config, ev.x_true)
        # prediction (P*K1), gradient and update (~3*K1)
        state.step_madds.append(g.madds - before + ev.attachment.nnz * K1 + 3 * K1)
        if snapshot_interval and state.step % snapshot_interval == 0:
            state.snapshots.append((state.step, state.h.copy()))
        g.attach_node(ev.attachment)
        x = np.append(x, ev.x_true)
    return state, g, x


def compute_replay(g0: ExpandingGraph, x0: np.ndarray, stream: Sequence, K: int):
    """Design rows of a stream without learning. Returns ``(replay, grown_signal)``."""
    g = g0.copy()
    x = np.array(x0, dtype=float)
    rows = np.zeros((len(stream), K + 1))
    targets = np.zeros(len(stream))
    for t, ev in enumerate(stream):
        rows[t] = design_row(ev.attachment, build_shifted_matrix(g, x, K))
        targets[t] = ev.x_true
        g.attach_node(ev.attachment)
        x = np.append(x, ev.x_true)
    return Replay(rows, targets), x


# -- regret ----------------------------------------------------------------------

@dataclass
class RegretReport:
    total_regret: float
    normalized_regret: float
    T: int
    bound: float | None = None
    lipschitz_estimate: float | None = None


def static_regret(loss_history: Sequence[float], u: np.ndarray, replay: Replay, mu: float,
                  eta: float | None = None, lipschitz: float | None = None) -> RegretReport:
    """``sum_t l_t(h_t) - l_t(u)`` over a replay.

    When ``eta`` and ``lipschitz`` are given the report also carries the
    corresponding upper bound.
    """
    losses = np.asarray(loss_history, dtype=float)
    T = len(replay)
    if losses.shape[0] != T:
        raise ValueError(f"{losses.shape[0]} online losses for a replay of length {T}")
    if T == 0:
        raise ValueError("empty replay")
    total = float(losses.sum() - replay.losses(np.asarray(u, dtype=float), mu).sum())
    bound = None
    if eta is not None and lipschitz is not None:
        bound = regret_bound(float(np.linalg.norm(u)), eta, lipschitz, T)
    return RegretReport(total, total / T, T, bound, lipschitz)


def regret_bound(u_norm: float, eta: float, L: float, T: int) -> float:
    """``||u||^2 / (2 eta) + eta L^2 T / 2``."""
    return u_norm ** 2 / (2.0 * eta) + 0.5 * eta * L ** 2 * T


def lipschitz_estimate(replay: Replay, projection_radius: float, mu: float) -> float:
    """Gradient-norm bound over the ball ``||h|| <= projection_radius``.

    Per step, ``|g.h - x| <= ||g|| L_h + |x|``, so
    ``C = max_t (||g_t|| L_h + |x_t|) ||g_t||`` and the result is ``C + 2 mu L_h``.
    """
    if len(replay) == 0:
        raise ValueError("empty replay")
    gn = np.linalg.norm(replay.rows, axis=1)
    C = float(np.max((gn * projection_radius + np.abs(replay.targets)) * gn))
    return C + 2.0 * mu * projection_radius


def write_trace_csv(path, state: OnlineLearnerState, method: str | None = None) -> None:
    """Per-step ``step,prediction,truth,loss,h_norm`` (plus ``method`` when given)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        header = ["step", "prediction", "truth", "loss", "h_norm"]
        if method is not None:
            header.append("method")
        w.writerow(header)
        for t, ((p, x), l, hn) in enumerate(zip(state.prediction_history, state.loss_history,
                                               state.h_norms), 1):
            row = [t, repr(p), repr(x), repr(l), repr(hn)]
            if method is not None:
                row.append(method)
            w.writerow(row)
