"""Cold-start rating prediction on MovieLens100K.

Starting users form a directed 15-NN cosine-similarity graph. Every other
user then arrives in turn: half of their ratings decide who they attach to,
the other half are predicted one item at a time. The graph signal for an
item is the column of existing users' ratings, zero where unrated.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .baselines import SmoothingContext, pretrain_it1
from .graph import AttachmentVector, ExpandingGraph, GraphError, normalize

log = logging.getLogger(__name__)

MIN_ITEM_RATINGS = 10


class RatingsFormatError(ValueError):
    pass


@dataclass
class RatingsCorpus:
    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    n_users: int
    n_items: int
    user_ids: np.ndarray
    item_ids: np.ndarray
    raw_ratings: int = 0
    raw_items: int = 0

    def matrix(self) -> np.ndarray:
        """Dense user x item ratings, 0 where missing."""
        X = np.zeros((self.n_users, self.n_items))
        X[self.users, self.items] = self.values
        return X


def load_ratings(path, min_item_ratings: int = MIN_ITEM_RATINGS) -> RatingsCorpus:
    """Parse ``user<TAB>item<TAB>rating<TAB>timestamp`` lines and drop rare items."""
    users, items, values = [], [], []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) < 3:
                raise RatingsFormatError(f"{path}:{lineno}: expected user, item, rating, timestamp")
            try:
                u, i, r = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise RatingsFormatError(f"{path}:{lineno}: {exc}") from None
            users.append(u)
            items.append(i)
            values.append(r)
    if not users:
        raise RatingsFormatError(f"{path}: no ratings")
    users, items, values = np.array(users), np.array(items), np.array(values)
    item_vals, counts = np.unique(items, return_counts=True)
    kept = item_vals[counts >= min_item_ratings]
    sel = np.isin(items, kept)
    user_ids, uidx = np.unique(users, return_inverse=True)
    item_ids, iidx = np.unique(items[sel], return_inverse=True)
    log.info("%d ratings, %d users, %d/%d items kept", sel.sum(), user_ids.size,
             item_ids.size, item_vals.size)
    return RatingsCorpus(uidx[sel], iidx, values[sel], user_ids.size, item_ids.size,
                         user_ids, item_ids, raw_ratings=users.size, raw_items=item_vals.size)


def cosine_similarity(u, v) -> float:
    """Cosine of two rating vectors (missing = 0); 0 if either is all-zero."""
    if sp.issparse(u):
        u = u.toarray().ravel()
    if sp.issparse(v):
        v = v.toarray().ravel()
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(u @ v / (nu * nv))


def cosine_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    na[na == 0] = 1.0
    nb[nb == 0] = 1.0
    return (A @ B.T) / np.outer(na, nb)


def top_k(sims: np.ndarray, k: int, exclude: int | None = None) -> np.ndarray:
    """Indices of the ``k`` largest positive similarities, ties to the lower index."""
    s = np.array(sims, dtype=float)
    if exclude is not None:
        s[exclude] = -np.inf
    order = np.lexsort((np.arange(s.size), -s))[:k]
    return order[s[order] > 0]


def build_knn_graph(X: np.ndarray, k: int = 15, starting_users: Sequence[int] | None = None,
                    normalized: bool = True) -> ExpandingGraph:
    """Directed k-NN graph over ``starting_users`` (rows of ``X``).

    Row ``i`` holds the ``k`` most similar other users as in-edges weighted
    by cosine similarity. The graph is normalized by its spectral radius
    unless ``normalized=False``; ``scale`` records the divisor.
    """
    rows = np.arange(X.shape[0]) if starting_users is None else np.asarray(starting_users)
    n = rows.size
    if k >= n:
        raise GraphError(f"k={k} needs more than {n} starting users")
    S = cosine_matrix(X[rows], X[rows])
    r_idx, c_idx, w = [], [], []
    for i in range(n):
        nb = top_k(S[i], k, exclude=i)
        if nb.size == 0:
            log.warning("starting user %d has no similar users", int(rows[i]))
        elif nb.size < k:
            log.warning("starting user %d has only %d similar users", int(rows[i]), nb.size)
        r_idx.extend([i] * nb.size)
        c_idx.extend(nb.tolist())
        w.extend(S[i, nb].tolist())
    g = ExpandingGraph(sp.coo_matrix((w, (r_idx, c_idx)), shape=(n, n)))
    return normalize(g) if normalized else g


@dataclass
class UserStreamEvent:
    user: int
    attachment: AttachmentVector
    known_items: np.ndarray
    known_values: np.ndarray
    target_items: np.ndarray
    target_values: np.ndarray


def split_ratings(items: np.ndarray, values: np.ndarray, rng: np.random.Generator):
    perm = rng.permutation(items.size)
    half = items.size // 2
    k, t = perm[:half], perm[half:]
    return items[k], values[k], items[t], values[t]


def build_user_stream(X: np.ndarray, starting_users: Sequence[int], online_users: Sequence[int],
                      seed=None, k: int = 15, scale: float = 1.0) -> list:
    """Per-user events; attachment weights are cosine similarities divided by ``scale``.

    Candidates are the starting users and every user processed before; a
    processed user's full rating vector is visible to the ones after.
    """
    rng = np.random.default_rng(seed)
    present = list(starting_users)
    norms = np.linalg.norm(X, axis=1)
    events = []
    for u in online_users:
        rated = np.flatnonzero(X[u])
        if rated.size < 2:
            log.warning("user %d has %d ratings; skipped", u, rated.size)
            continue
        ki, kv, ti, tv = split_ratings(rated, X[u, rated], rng)
        known = np.zeros(X.shape[1])
        known[ki] = kv
        P = X[present]
        denom = norms[present] * np.linalg.norm(known)
        sims = np.divide(P @ known, denom, out=np.zeros(len(present)), where=denom > 0)
        nb = top_k(sims, k)
        a = AttachmentVector(len(present), nb, sims[nb] / scale)
        events.append(UserStreamEvent(u, a, ki, kv, ti, tv))
        present.append(u)
    return events


def item_signal(X_nodes: np.ndarray, n_current: int, item: int) -> np.ndarray:
    """Ratings of ``item`` by the first ``n_current`` graph nodes (0 if unrated)."""
    if not 0 <= item < X_nodes.shape[1]:
        raise KeyError(f"unknown item {item}")
    return X_nodes[:n_current, item].copy()


def ad_at_10(top_lists: Sequence[Sequence[int]], n_items: int) -> float:
    """Fraction of the catalog appearing in at least one top-10 list."""
    seen = set()
    for lst in top_lists:
        if len(lst) > 10:
            raise ValueError("recommendation lists hold at most 10 items")
        seen.update(int(i) for i in lst)
    return len(seen) / n_items


def top10_lists(event_ids: np.ndarray, items: np.ndarray, scores: np.ndarray) -> list:
    """Ten highest-scored items per user among that user's targets."""
    out = []
    for e in np.unique(event_ids):
        sel = np.flatnonzero(event_ids == e)
        order = sel[np.lexsort((items[sel], -scores[sel]))][:10]
        out.append(items[order].tolist())
    return out


# -- one realization -----------------------------------------------------------------

@dataclass
class It2Setting:
    kernel: str
    sigma2: float
    lam: float

    @property
    def key(self) -> str:
        if self.kernel == "linear":
            return f"linear/lam={self.lam:g}"
        return f"gaussian(s2={self.sigma2:g})/lam={self.lam:g}"


@dataclass
class MovieLensRealization:
    """Everything methods need to be scored on one split, precomputed once.

    Per target rating ``j``: ``event_of[j]`` (index into ``events``),
    ``items[j]``, ``truths[j]``, the design row ``rows[j]``, the WKNN
    prediction, and one smoothed row per IT2 setting.
    """

    g0: ExpandingGraph
    X0: np.ndarray
    events: list
    node_users: np.ndarray
    event_of: np.ndarray
    items: np.ndarray
    truths: np.ndarray
    rows: np.ndarray
    wknn: np.ndarray
    it2_rows: dict = field(default_factory=dict)
    n_items: int = 0

    @property
    def n_targets(self) -> int:
        return self.truths.size

    def attachment_per_target(self) -> list:
        return [self.events[e].attachment for e in self.event_of]

    def pretrain_masks(self, seed=None) -> tuple[np.ndarray, np.ndarray]:
        """Observed/target masks over the starting users' ratings with as many
        targets as there are online targets (capped at half the ratings)."""
        rng = np.random.default_rng(seed)
        rated = np.argwhere(self.X0 != 0)
        n_t = min(self.n_targets, rated.shape[0] // 2)
        pick = rng.choice(rated.shape[0], size=n_t, replace=False)
        target = np.zeros(self.X0.shape, dtype=bool)
        target[rated[pick, 0], rated[pick, 1]] = True
        observed = (self.X0 != 0) & ~target
        return observed, target

    def pretrain(self, mu: float, K: int, seed=None) -> np.ndarray:
        observed, target = self.pretrain_masks(seed)
        return pretrain_it1(self.g0, self.X0, observed, mu, K, target_mask=target)


def prepare_realization(corpus: RatingsCorpus, seed=None, n_start: int = 500, k: int = 15,
                        K: int = 5, it2_settings: Sequence[It2Setting] = ()) -> MovieLensRealization:
    ss = np.random.SeedSequence(seed)
    s_users, s_split = ss.spawn(2)
    rng = np.random.default_rng(s_users)
    X = corpus.matrix()
    perm = rng.permutation(corpus.n_users)
    start, online = perm[:n_start], perm[n_start:]
    g0 = build_knn_graph(X, k, start)
    events = build_user_stream(X, start, online, s_split, k, scale=g0.scale)
    node_users = np.concatenate([start, [ev.user for ev in events]])
    Xn = X[node_users]
    gram = Xn @ Xn.T
    sq = np.diag(gram).copy()

    g = g0.copy()
    event_of, items, truths, rows, wknn = [], [], [], [], []
    it2 = {s.key: [] for s in it2_settings}
    for e, ev in enumerate(events):
        N = g.n
        a = ev.attachment
        S = Xn[:N][:, ev.target_items]
        rows_e = np.zeros((S.shape[1], K + 1))
        shifts = [S]
        for _ in range(K - 1):
            shifts.append(g.shift(shifts[-1]))
        for kk, Sk in enumerate(shifts):
            rows_e[:, kk + 1] = a.weights @ Sk[a.indices]
        if a.is_empty:
            wk = np.zeros(S.shape[1])
        else:
            wk = (a.weights @ S[a.indices]) / a.weights.sum()
        if it2_settings:
            known = np.zeros(Xn.shape[1])
            known[ev.known_items] = ev.known_values
            lin = Xn[:N] @ known
            d2 = np.maximum(sq[:N] + known @ known - 2.0 * lin, 0.0)
            if any(s.kernel == "gaussian" for s in it2_settings):
                d2K = np.maximum(sq[:N, None] + sq[None, :N] - 2.0 * gram[:N, :N], 0.0)
            for s in it2_settings:
                if s.kernel == "linear":
                    kmat, kvec = gram[:N, :N], lin
                else:
                    kmat, kvec = np.exp(-d2K / (2 * s.sigma2)), np.exp(-d2 / (2 * s.sigma2))
                ctx = SmoothingContext(Xn[:N], s.kernel, s.sigma2, s.lam, kernel_matrix=kmat,
                                       check_psd=False)
                m = ctx.solve(kvec)
                q = np.zeros((S.shape[1], K + 1))
                for kk, Sk in enumerate(shifts):
                    q[:, kk + 1] = m @ Sk
                it2[s.key].append(q)
        event_of.append(np.full(S.shape[1], e))
        items.append(ev.target_items)
        truths.append(ev.target_values)
        rows.append(rows_e)
        wknn.append(wk)
        g.attach_node(a)
    return MovieLensRealization(
        g0=g0, X0=Xn[:n_start].copy(), events=events, node_users=node_users,
        event_of=np.concatenate(event_of), items=np.concatenate(items),
        truths=np.concatenate(truths), rows=np.vstack(rows), wknn=np.concatenate(wknn),
        it2_rows={k_: np.vstack(v) for k_, v in it2.items()}, n_items=corpus.n_items)
