"""Turbine graphs: semantic (DTW nearest neighbours) and geographic (distance kernel)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import FarmDataset, Normalizer, Segment, segment_slots
from .schema import PATV_FEATURE, SLOTS_PER_DAY


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class AdjacencyGraph:
    kind: str  # "semantic" | "geographic"
    matrix: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def to_text(self) -> str:
        head = " ".join([self.kind, str(self.n)] + [f"{k}={v!r}" for k, v in self.params.items()])
        rows = (" ".join(str(int(v)) for v in row) for row in self.matrix)
        return head + "\n" + "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AdjacencyGraph":
        lines = text.strip("\n").split("\n")
        head = lines[0].split()
        kind, n = head[0], int(head[1])
        params = {}
        for tok in head[2:]:
            k, _, v = tok.partition("=")
            params[k] = int(v) if v.lstrip("-").isdigit() else float(v)
        if len(lines) - 1 != n:
            raise GraphError(f"graph header says {n} rows, found {len(lines) - 1}")
        matrix = np.array([[float(x) for x in line.split()] for line in lines[1:]])
        if matrix.shape != (n, n):
            raise GraphError(f"graph matrix has shape {matrix.shape}, expected {(n, n)}")
        return cls(kind=kind, matrix=matrix, params=params)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "AdjacencyGraph":
        return cls.from_text(Path(path).read_text())


# -- DTW ---------------------------------------------------------------------

def _check_band(la: int, lb: int, band: int | None) -> None:
    if band is not None and band < abs(la - lb):
        raise ValueError(f"band {band} narrower than length difference {abs(la - lb)}")


def dtw_distance(a: Sequence[float], b: Sequence[float], band: int | None = None) -> float:
    """DTW with absolute-difference cost and an optional Sakoe-Chiba radius."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if not a or not b:
        raise ValueError("dtw_distance needs two nonempty series")
    la, lb = len(a), len(b)
    _check_band(la, lb, band)
    inf = math.inf
    prev = [inf] * (lb + 1)
    prev[0] = 0.0
    for i in range(1, la + 1):
        cur = [inf] * (lb + 1)
        lo, hi = 1, lb
        if band is not None:
            lo, hi = max(1, i - band), min(lb, i + band)
        ai = a[i - 1]
        for j in range(lo, hi + 1):
            best = min(prev[j], cur[j - 1], prev[j - 1])
            cur[j] = abs(ai - b[j - 1]) + best
        prev = cur
    return prev[lb]


def pairwise_dtw(series: np.ndarray, band: int | None = None) -> np.ndarray:
    """Symmetric (N, N) DTW distance matrix, vectorised over turbine pairs."""
    series = np.asarray(series, dtype=np.float64)
    n, length = series.shape
    if length == 0:
        raise ValueError("dtw needs nonempty series")
    _check_band(length, length, band)
    ii, jj = np.triu_indices(n, k=1)
    out = np.zeros((n, n))
    if ii.size == 0:
        return out
    a, b = series[ii], series[jj]  # (P, L)
    p = ii.size
    prev = np.full((p, length + 1), np.inf)
    prev[:, 0] = 0.0
    for i in range(1, length + 1):
        cost = np.abs(a[:, i - 1 : i] - b)  # (P, L)
        cur = np.full((p, length + 1), np.inf)
        lo, hi = 1, length
        if band is not None:
            lo, hi = max(1, i - band), min(length, i + band)
        diag_up = np.minimum(prev[:, lo : hi + 1], prev[:, lo - 1 : hi])
        for j in range(lo, hi + 1):
            cur[:, j] = cost[:, j - 1] + np.minimum(diag_up[:, j - lo], cur[:, j - 1])
        prev = cur
    d = prev[:, length]
    out[ii, jj] = d
    out[jj, ii] = d
    return out


def semantic_graph(
    series: np.ndarray, m: int = 5, band: int | None = None, distances: np.ndarray | None = None
) -> AdjacencyGraph:
    """Each turbine links to its ``m`` DTW-nearest others, then OR-symmetrised.

    Equal distances go to the lower turbine index.
    """
    d = pairwise_dtw(series, band) if distances is None else np.array(distances, dtype=np.float64)
    n = d.shape[0]
    if not 0 < m < n:
        raise GraphError(f"need 0 < M < N, got M={m}, N={n}")
    a = directed_knn(d, m)
    a = np.maximum(a, a.T)
    params = {"M": m} if band is None else {"M": m, "band": band}
    return AdjacencyGraph(kind="semantic", matrix=a, params=params)


def directed_knn(distances: np.ndarray, m: int) -> np.ndarray:
    """Row i marks its m nearest other turbines (before symmetrisation)."""
    d = np.array(distances, dtype=np.float64)
    np.fill_diagonal(d, np.inf)
    nearest = np.argsort(d, axis=1, kind="stable")[:, :m]
    a = np.zeros_like(d)
    a[np.repeat(np.arange(d.shape[0]), m), nearest.ravel()] = 1.0
    return a


def dtw_source_series(ds: FarmDataset, normalizer: Normalizer, train_segments: Sequence[Segment]) -> np.ndarray:
    """Per-turbine daily mean of z-scored (imputed) Patv over the training days, (N, days)."""
    slots = segment_slots(train_segments)
    if slots.size % SLOTS_PER_DAY:
        raise GraphError("training segments must cover whole days")
    patv = normalizer.apply_patv(ds.features[slots, :, PATV_FEATURE])  # (S, N)
    daily = patv.reshape(-1, SLOTS_PER_DAY, patv.shape[1]).mean(axis=1)
    return daily.T.copy()


# -- geographic --------------------------------------------------------------

def geographic_graph(coords: np.ndarray, eps: float = 0.8) -> AdjacencyGraph:
    """Binary graph with an edge where exp(-d^2 / sigma^2) >= eps.

    sigma is the population standard deviation of the distinct-pair distances;
    co-located turbines always connect.
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if n < 2:
        raise GraphError("geographic graph needs at least 2 turbines")
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff * diff).sum(-1))
    if np.all(coords == coords[0]):
        raise GraphError("all turbine coordinates are identical (sigma = 0)")
    iu = np.triu_indices(n, k=1)
    sigma = float(np.std(dist[iu]))
    # sigma == 0 with distinct points: every pair sits infinitely far out on the kernel
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(dist == 0.0, 0.0, (dist * dist) / (sigma * sigma))
    a = (np.exp(-scaled) >= eps).astype(np.float64)
    np.fill_diagonal(a, 0.0)
    return AdjacencyGraph(kind="geographic", matrix=a, params={"eps": float(eps), "sigma": sigma})


def sym_normalize(a: np.ndarray) -> np.ndarray:
    """D^-1/2 A D^-1/2 with zero-degree rows and columns left at 0."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphError(f"sym_normalize needs a square matrix, got {a.shape}")
    deg = a.sum(axis=1)
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    return dinv[:, None] * a * dinv[None, :]
