"""Append-only expanding graphs.

A node that arrives at time t only receives edges from nodes that already
exist, so every appended row of the adjacency matrix is strictly lower
triangular. Row ``i`` stores the weights of edges directed *into* node ``i``;
appending a node therefore appends a row and an all-zero column.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class GraphError(ValueError):
    """Raised on malformed graph input or a dimension mismatch."""


@dataclass(frozen=True)
class AttachmentVector:
    """Sparse in-edge weights of an incoming node.

    ``indices`` are existing node ids, ``weights`` the matching positive
    edge weights, ``dim`` the node count of the graph it attaches to.
    """

    dim: int
    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if idx.shape != w.shape:
            raise GraphError("indices and weights must have the same length")
        if idx.size:
            if idx.min() < 0 or idx.max() >= self.dim:
                raise GraphError(f"attachment index out of range for dim {self.dim}")
            if len(np.unique(idx)) != idx.size:
                raise GraphError("duplicate attachment indices")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise GraphError("attachment weights must be finite and positive")
        order = np.argsort(idx, kind="stable")
        object.__setattr__(self, "indices", idx[order])
        object.__setattr__(self, "weights", w[order])

    @classmethod
    def from_dense(cls, a: Sequence[float]) -> "AttachmentVector":
        a = np.asarray(a, dtype=float).reshape(-1)
        if np.any(a < 0):
            raise GraphError("attachment weights must be nonnegative")
        nz = np.flatnonzero(a)
        return cls(a.size, nz, a[nz])

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def is_empty(self) -> bool:
        return self.indices.size == 0

    def dense(self, dim: int | None = None) -> np.ndarray:
        """Dense copy, optionally zero-padded (or truncated) to ``dim``."""
        dim = self.dim if dim is None else dim
        out = np.zeros(dim)
        keep = self.indices < dim
        out[self.indices[keep]] = self.weights[keep]
        return out

    def scaled(self, factor: float) -> "AttachmentVector":
        return AttachmentVector(self.dim, self.indices, self.weights * factor)


class RadiusEstimate(NamedTuple):
    value: float
    iterations: int
    used_fallback: bool


class ExpandingGraph:
    """Weighted directed graph that grows one node at a time.

    Edges are kept in COO arrays with amortised growth; a CSR view is built
    lazily and cached until the next attachment. ``madds`` counts the
    multiply-adds spent in :meth:`shift`.
    """

    def __init__(self, adjacency, n0: int | None = None):
        A = sp.coo_matrix(adjacency, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise GraphError(f"adjacency must be square, got {A.shape}")
        if n0 is not None and n0 != A.shape[0]:
            raise GraphError(f"adjacency is {A.shape[0]}x{A.shape[0]}, expected n0={n0}")
        A.sum_duplicates()
        A.eliminate_zeros()
        if not np.all(np.isfinite(A.data)):
            raise GraphError("adjacency has non-finite entries")
        order = np.lexsort((A.col, A.row))
        m = A.nnz
        cap = max(16, 2 * m)
        self._rows = np.empty(cap, dtype=np.int64)
        self._cols = np.empty(cap, dtype=np.int64)
        self._vals = np.empty(cap)
        self._rows[:m] = A.row[order]
        self._cols[:m] = A.col[order]
        self._vals[:m] = A.data[order]
        self.n0 = A.shape[0]
        self.n = A.shape[0]
        self.m = m
        self.m0 = m
        self.scale = 1.0
        self.madds = 0
        self._csr = None

    # -- storage -----------------------------------------------------------
    def _reserve(self, extra: int):
        need = self.m + extra
        if need <= self._vals.size:
            return
        cap = max(need, 2 * self._vals.size)
        for name in ("_rows", "_cols", "_vals"):
            old = getattr(self, name)
            new = np.empty(cap, dtype=old.dtype)
            new[: self.m] = old[: self.m]
            setattr(self, name, new)

    @property
    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(dst, src, weight) arrays of the stored edges (views)."""
        return self._rows[: self.m], self._cols[: self.m], self._vals[: self.m]

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """In-neighbours of node ``i`` and the corresponding weights."""
        csr = self.csr()
        lo, hi = csr.indptr[i], csr.indptr[i + 1]
        return csr.indices[lo:hi].copy(), csr.data[lo:hi].copy()

    def csr(self) -> sp.csr_matrix:
        if self._csr is None or self._csr.shape[0] != self.n:
            rows, cols, vals = self.edges
            self._csr = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        return self._csr

    def dense(self) -> np.ndarray:
        return self.csr().toarray()

    def copy(self) -> "ExpandingGraph":
        g = ExpandingGraph.__new__(ExpandingGraph)
        g.__dict__.update(self.__dict__)
        g._rows = self._rows.copy()
        g._cols = self._cols.copy()
        g._vals = self._vals.copy()
        g._csr = None
        g.madds = 0
        return g

    # -- growth ------------------------------------------------------------
    def attach_node(self, a: AttachmentVector) -> int:
        """Append a node with in-edges ``a`` and return its index."""
        if a.dim != self.n:
            raise GraphError(f"attachment dim {a.dim} != graph size {self.n}")
        new = self.n
        k = a.nnz
        self._reserve(k)
        self._rows[self.m : self.m + k] = new
        self._cols[self.m : self.m + k] = a.indices
        self._vals[self.m : self.m + k] = a.weights
        self.m += k
        self.n += 1
        self._csr = None
        if a.is_empty:
            log.debug("node %d attached without edges", new)
        return new

    # -- operators ---------------------------------------------------------
    def shift(self, x: np.ndarray) -> np.ndarray:
        """Apply the adjacency matrix to a signal (or to each column of a matrix)."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n:
            raise GraphError(f"signal length {x.shape[0]} != graph size {self.n}")
        ncols = 1 if x.ndim == 1 else x.shape[1]
        self.madds += self.m * ncols
        return self.csr() @ x

    def to_edgelist(self, path) -> None:
        write_edgelist(self, path)


def new_graph(adjacency, n0: int | None = None) -> ExpandingGraph:
    return ExpandingGraph(adjacency, n0)


def attach_node(g: ExpandingGraph, a: AttachmentVector) -> int:
    return g.attach_node(a)


def shift(g: ExpandingGraph, x: np.ndarray) -> np.ndarray:
    return g.shift(x)


def _is_symmetric(A: sp.csr_matrix, tol: float = 1e-12) -> bool:
    diff = A - A.T
    if diff.nnz == 0:
        return True
    return float(np.abs(diff.data).max()) <= tol * max(1.0, float(np.abs(A.data).max()))


def estimate_spectral_radius(
    g: ExpandingGraph, tol: float = 1e-9, max_iters: int = 5000, fallback: bool = True
) -> RadiusEstimate:
    """Largest absolute eigenvalue by power iteration.

    The estimate is ``||A v||`` for the normalised iterate ``v``, which also
    converges when ``+rho`` and ``-rho`` are both eigenvalues. If the
    iteration stalls on a non-symmetric matrix the largest singular value is
    returned instead (an upper bound) and ``used_fallback`` is set.
    """
    if g.n == 0:
        raise GraphError("empty graph")
    A = g.csr()
    if A.nnz == 0:
        return RadiusEstimate(0.0, 0, False)
    rng = np.random.default_rng(0)
    v = rng.random(g.n) + 0.5
    v /= np.linalg.norm(v)
    prev = 0.0
    for it in range(1, max_iters + 1):
        w = A @ v
        est = float(np.linalg.norm(w))
        if est == 0.0:
            # nilpotent (e.g. strictly triangular); all eigenvalues are zero
            return RadiusEstimate(0.0, it, False)
        if abs(est - prev) <= tol * est:
            return RadiusEstimate(est, it, False)
        prev = est
        v = w / est
    if _is_symmetric(A):
        # symmetric matrices converge; reaching here means max_iters was too small
        if not fallback:
            raise GraphError(f"power iteration did not converge in {max_iters} iterations")
        return RadiusEstimate(prev, max_iters, False)
    if not fallback:
        raise GraphError(f"power iteration did not converge in {max_iters} iterations")
    if g.n <= 2000:
        sigma = float(np.linalg.norm(A.toarray(), 2))
    else:
        from scipy.sparse.linalg import svds

        sigma = float(svds(A, k=1, return_singular_vectors=False)[0])
    log.warning("power iteration stalled; using largest singular value %.6g", sigma)
    return RadiusEstimate(sigma, max_iters, True)


def spectral_radius(g: ExpandingGraph, tol: float = 1e-9, max_iters: int = 5000) -> float:
    return estimate_spectral_radius(g, tol, max_iters).value


def normalize(g: ExpandingGraph, tol: float = 1e-9, max_iters: int = 5000) -> ExpandingGraph:
    """Copy of ``g`` with all weights divided by its spectral radius.

    ``scale`` on the result accumulates the divisor so that later attachment
    weights can be expressed in the same units.
    """
    rho = spectral_radius(g, tol, max_iters)
    if rho <= 0:
        raise GraphError("cannot normalize a graph with zero spectral radius")
    out = g.copy()
    out._vals[: out.m] /= rho
    out.scale = g.scale * rho
    out._csr = None
    return out


# -- serialization ------------------------------------------------------------

def write_edgelist(g: ExpandingGraph, path) -> None:
    """``#nodes <n>`` header, then ``src<TAB>dst<TAB>weight`` sorted by (dst, src)."""
    rows, cols, vals = g.edges
    order = np.lexsort((cols, rows))
    lines = [f"#nodes {g.n}", f"#n0 {g.n0}"]
    lines += [f"{c}\t{r}\t{v!r}" for r, c, v in zip(rows[order], cols[order], vals[order].tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path) -> ExpandingGraph:
    """Inverse of :func:`write_edgelist`.

    Nodes beyond ``#n0`` are re-attached one at a time so the result has the
    same growth history.
    """
    n = n0 = None
    src, dst, w = [], [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition(" ")
            if key == "nodes":
                n = int(val)
            elif key == "n0":
                n0 = int(val)
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise GraphError(f"{path}:{lineno}: expected src<TAB>dst<TAB>weight")
        src.append(int(parts[0]))
        dst.append(int(parts[1]))
        w.append(float(parts[2]))
    if n is None:
        raise GraphError(f"{path}: missing '#nodes' header")
    n0 = n if n0 is None else n0
    src, dst, w = np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(w)
    base = (dst < n0) & (src < n0)
    g = ExpandingGraph(sp.coo_matrix((w[base], (dst[base], src[base])), shape=(n0, n0)))
    for node in range(n0, n):
        sel = dst == node
        g.attach_node(AttachmentVector(node, src[sel], w[sel]))
    return g
