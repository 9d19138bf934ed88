"""Synthetic expanding-graph streams.

An Erdos-Renyi starting graph receives ``T`` nodes, each attaching to ``P``
existing nodes drawn uniformly at random, with every edge weighted by the
median normalized weight of the starting graph. The incoming signal is
produced in one of three ways:

* ``filter``: output of a filter pretrained on the starting graph,
* ``wmean``:  weighted mean of the neighbours' signal,
* ``kernel``: a random function in the Gaussian RKHS over attachment vectors.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .baselines import pretrain_it1, wknn_predict
from .filtering import build_shifted_matrix, predict_incoming
from .graph import AttachmentVector, ExpandingGraph, GraphError, normalize

MODES = ("kernel", "filter", "wmean")


@dataclass(frozen=True)
class TrainingEvent:
    attachment: AttachmentVector
    x_true: float


@dataclass
class SyntheticConfig:
    N: int = 100
    p: float = 0.2
    P: int = 5
    T: int = 1000
    K: int = 5
    mode: str = "filter"
    seed: int = 0
    mask_fraction: float = 0.8
    generator_mu: float = 1.0
    kernel_centers: int = 50
    kernel_sigma2: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if not 1 <= self.P <= self.N:
            raise ValueError("P must lie in [1, N]")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass
class SyntheticStream:
    g0: ExpandingGraph
    x0: np.ndarray
    events: list
    config: SyntheticConfig
    h_star: np.ndarray | None = None

    def digest(self) -> str:
        return stream_digest(self.events)


def erdos_renyi(N: int, p: float, seed=None) -> ExpandingGraph:
    """Symmetric unweighted G(N, p), normalized by its spectral radius.

    An edgeless sample is returned unnormalized.
    """
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(N, k=1)
    keep = rng.random(iu.size) < p
    r, c = iu[keep], ju[keep]
    A = sp.coo_matrix((np.ones(2 * r.size), (np.r_[r, c], np.r_[c, r])), shape=(N, N))
    g = ExpandingGraph(A)
    if g.m == 0:
        return g
    return normalize(g)


def median_weight(g: ExpandingGraph) -> float:
    """Median weight of the starting-graph edges."""
    rows, cols, vals = g.edges
    base = (rows < g.n0) & (cols < g.n0)
    if not base.any():
        raise GraphError("starting graph has no edges")
    return float(np.median(vals[base]))


def sample_attachment(g: ExpandingGraph, P: int, rng: np.random.Generator,
                      weight: float | None = None) -> AttachmentVector:
    """``P`` distinct existing nodes, uniformly without replacement, equal weights."""
    if P > g.n:
        raise ValueError(f"cannot draw {P} neighbours from {g.n} nodes")
    w = median_weight(g) if weight is None else weight
    idx = rng.choice(g.n, size=P, replace=False)
    return AttachmentVector(g.n, idx, np.full(P, w))


def initial_signal(g0: ExpandingGraph, seed=None) -> np.ndarray:
    """Low-pass smoothed white noise, ``sum_{k<3} 0.5^k A^k w``, rescaled to unit variance."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(g0.n)
    x = w.copy()
    z = w
    for k in (1, 2):
        z = g0.shift(z)
        x = x + 0.5 ** k * z
    x = x - x.mean()
    return x / x.std()


def gen_wmean(a: AttachmentVector, x_existing: np.ndarray) -> float:
    return wknn_predict(a, x_existing)


def _grow(g: ExpandingGraph, x: np.ndarray, a: AttachmentVector, value: float) -> np.ndarray:
    g.attach_node(a)
    return np.append(x, value)


def gen_filter_mode(g0: ExpandingGraph, x0: np.ndarray, mask_fraction: float, K: int, mu: float,
                    attachments: Sequence[AttachmentVector] | None = None, rng=None,
                    n_events: int | None = None, P: int | None = None):
    """Events whose signal is the output of a filter pretrained on ``g0``.

    The pretrained taps use ``x0`` observed at a random ``mask_fraction`` of
    the nodes. Attachments are taken from ``attachments`` when given,
    otherwise ``n_events`` of them are sampled on the growing graph.
    Returns ``(events, h_star)``.
    """
    rng = np.random.default_rng(rng)
    n_obs = int(round(mask_fraction * g0.n))
    mask = np.zeros(g0.n, dtype=bool)
    mask[rng.choice(g0.n, size=n_obs, replace=False)] = True
    h_star = pretrain_it1(g0, x0, mask, mu, K)
    g, x = g0.copy(), np.array(x0, dtype=float)
    w = median_weight(g0)
    events = []
    count = len(attachments) if attachments is not None else n_events
    for t in range(count):
        a = attachments[t] if attachments is not None else sample_attachment(g, P, rng, w)
        value = predict_incoming(a, build_shifted_matrix(g, x, K), h_star)
        events.append(TrainingEvent(a, value))
        x = _grow(g, x, a, value)
    return events, h_star


def kernel_centers(dim: int, J: int, P: int, weight: float, rng) -> np.ndarray:
    """``J`` attachment-like centers: ``P`` random coordinates of ``dim`` set to ``weight``."""
    C = np.zeros((J, dim))
    for j in range(J):
        C[j, rng.choice(dim, size=P, replace=False)] = weight
    return C


def kernel_value(a: AttachmentVector, centers: np.ndarray, alphas: np.ndarray, sigma2: float) -> float:
    """``sum_j alpha_j exp(-||a - c_j||^2 / (2 sigma2))`` with ``a`` zero-padded."""
    d = a.dense(centers.shape[1])
    d2 = ((centers - d) ** 2).sum(1)
    return float(alphas @ np.exp(-d2 / (2.0 * sigma2)))


def gen_kernel_mode(attachments: Sequence[AttachmentVector], centers: np.ndarray,
                    alphas: np.ndarray, sigma2: float = 1.0) -> list:
    return [TrainingEvent(a, kernel_value(a, centers, alphas, sigma2)) for a in attachments]


def generate_stream(config: SyntheticConfig) -> SyntheticStream:
    """Starting graph, initial signal and event stream, all determined by ``config``."""
    ss = np.random.SeedSequence(config.seed)
    s_graph, s_signal, s_attach, s_gen = ss.spawn(4)
    g0 = erdos_renyi(config.N, config.p, s_graph)
    if g0.m == 0:
        raise GraphError("sampled starting graph has no edges")
    x0 = initial_signal(g0, s_signal)
    rng = np.random.default_rng(s_attach)
    w = median_weight(g0)
    h_star = None
    if config.mode == "filter":
        events, h_star = gen_filter_mode(g0, x0, config.mask_fraction, config.K,
                                         config.generator_mu, rng=rng, n_events=config.T,
                                         P=config.P)
    elif config.mode == "wmean":
        g, x = g0.copy(), x0.copy()
        events = []
        for _ in range(config.T):
            a = sample_attachment(g, config.P, rng, w)
            value = gen_wmean(a, x)
            events.append(TrainingEvent(a, value))
            x = _grow(g, x, a, value)
    else:
        g = g0.copy()
        attachments = []
        for _ in range(config.T):
            a = sample_attachment(g, config.P, rng, w)
            attachments.append(a)
            g.attach_node(a)
        grng = np.random.default_rng(s_gen)
        dim = config.N + config.T
        C = kernel_centers(dim, config.kernel_centers, config.P, w, grng)
        alphas = grng.standard_normal(config.kernel_centers)
        events = gen_kernel_mode(attachments, C, alphas, config.kernel_sigma2)
    return SyntheticStream(g0, x0, events, config, h_star)


# -- serialization -------------------------------------------------------------------

def format_events(events: Sequence[TrainingEvent]) -> str:
    """``t<TAB>x_true<TAB>i1:w1,i2:w2,...`` per line, ``t`` starting at 1."""
    lines = []
    for t, ev in enumerate(events, 1):
        a = ev.attachment
        pairs = ",".join(f"{i}:{w!r}" for i, w in zip(a.indices.tolist(), a.weights.tolist()))
        lines.append(f"{t}\t{ev.x_true!r}\t{pairs}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_events(path, events: Sequence[TrainingEvent]) -> None:
    Path(path).write_text(format_events(events))


def read_events(path, n0: int) -> list:
    """Parse an event file; attachment dims are ``n0 + t - 1``."""
    events = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected t<TAB>x_true<TAB>attachment")
        t = int(parts[0])
        idx, w = [], []
        if parts[2]:
            for pair in parts[2].split(","):
                i, _, v = pair.partition(":")
                idx.append(int(i))
                w.append(float(v))
        events.append(TrainingEvent(AttachmentVector(n0 + t - 1, idx, w), float(parts[1])))
    return events


def stream_digest(events: Sequence[TrainingEvent]) -> str:
    return hashlib.sha256(format_events(events).encode()).hexdigest()
