"""FIR graph filters on expanding graphs.

The prediction at an incoming node only needs the shifted-signal matrix
``A_x = [0, x, A x, ..., A^{K-1} x]`` of the graph it attaches to: the new
node's output under taps ``h`` is ``a^T A_x h``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import AttachmentVector, ExpandingGraph, GraphError

DEFAULT_GRID_SIZE = 201


def _check_signal(g: ExpandingGraph, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != g.n:
        raise GraphError(f"signal length {x.shape[0]} != graph size {g.n}")
    if not np.all(np.isfinite(x)):
        raise GraphError("signal has non-finite entries")
    return x


def build_shifted_matrix(g: ExpandingGraph, x: np.ndarray, K: int) -> np.ndarray:
    """Return the ``N x (K+1)`` matrix ``[0 | x | A x | ... | A^{K-1} x]``.

    Uses K-1 sparse shifts. ``x`` may also be ``N x S`` (one column per
    signal), in which case the result is ``(K+1) x N x S``.
    """
    if K < 1:
        raise GraphError(f"filter order must be >= 1, got {K}")
    x = _check_signal(g, x)
    cols = [np.zeros_like(x), x]
    for _ in range(K - 1):
        cols.append(g.shift(cols[-1]))
    if x.ndim == 1:
        return np.column_stack(cols)
    return np.stack(cols)


def design_row(a: AttachmentVector, Ax: np.ndarray) -> np.ndarray:
    """``A_x^T a``: the regression row of one incoming node."""
    if a.dim != Ax.shape[0]:
        raise GraphError(f"attachment dim {a.dim} != shifted matrix rows {Ax.shape[0]}")
    return a.weights @ Ax[a.indices]


def predict_incoming(a: AttachmentVector, Ax: np.ndarray, h: np.ndarray) -> float:
    """Filter output at the incoming node, ``a^T A_x h``. Independent of ``h[0]``."""
    h = np.asarray(h, dtype=float)
    if h.shape[0] != Ax.shape[1]:
        raise GraphError(f"{h.shape[0]} taps for a shifted matrix with {Ax.shape[1]} columns")
    return float(design_row(a, Ax) @ h)


def filter_full(g: ExpandingGraph, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``sum_k h_k A^k x`` accumulated over a running shift."""
    x = _check_signal(g, x)
    h = np.asarray(h, dtype=float)
    y = h[0] * x
    z = x
    for hk in h[1:]:
        z = g.shift(z)
        y = y + hk * z
    return y


@dataclass
class FrequencyResponse:
    grid: np.ndarray
    values: np.ndarray


def polyval_taps(h: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Horner evaluation of ``sum_k h_k lam^k``."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam)
    for hk in np.asarray(h, dtype=float)[::-1]:
        out = out * lam + hk
    return out


def frequency_response(h: np.ndarray, grid_size: int = DEFAULT_GRID_SIZE) -> FrequencyResponse:
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    grid = np.linspace(-1.0, 1.0, grid_size)
    return FrequencyResponse(grid, polyval_taps(h, grid))


def write_frequency_csv(path, snapshots: list[tuple[int, np.ndarray]],
                        grid_size: int = DEFAULT_GRID_SIZE) -> int:
    """Write ``lambda,response,step`` rows for each ``(step, taps)`` snapshot.

    Returns the number of data rows written.
    """
    rows = 0
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "response", "step"])
        for step, h in snapshots:
            fr = frequency_response(h, grid_size)
            for lam, val in zip(fr.grid.tolist(), fr.values.tolist()):
                w.writerow([repr(lam), repr(val), step])
                rows += 1
    return rows
