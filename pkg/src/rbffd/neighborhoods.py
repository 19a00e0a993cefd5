"""Per-node supports via exact k-nearest-neighbor search.

Queries run on a kd-tree (scipy's cKDTree, median splits); equal-distance
neighbors are deterministically ordered by node index, and rows whose tie
group might extend past the fetched candidates fall back to an exact scan,
so results match a brute-force search including tie-breaking.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError
from .geometry import NodeSet

# extra neighbors fetched beyond n to detect cutoff ties cheaply
_TIE_PAD = 8


@dataclass(frozen=True)
class StencilSet:
    """Per-node lists of the n nearest node indices.

    `neighbors[i]` holds node i's `n` nearest neighbors (node i itself
    first), sorted by nondecreasing distance with distance ties broken by
    lower node index.
    """

    n: int
    neighbors: np.ndarray  # (N, n) int64


def recommended_support_size(degree: int, dim: int = 2, safety: int = 1) -> int:
    """Support size binomial(degree + dim, degree), times a safety factor.

    `safety` is 1 for the bare binomial count and 2 for the doubled size
    commonly used in practice.
    """
    if degree < 0 or dim < 1:
        raise ParameterError(f"invalid degree={degree} or dim={dim}")
    if safety not in (1, 2):
        raise ParameterError(f"safety factor must be 1 or 2, got {safety}")
    return safety * math.comb(degree + dim, degree)


def build_stencils(nodes: NodeSet, n: int) -> StencilSet:
    """Find the n exact nearest neighbors of every node.

    Parameters
    ----------
    nodes : NodeSet
    n : int
        Support size, 1 <= n <= N. Every node is its own nearest
        neighbor, so entry 0 of each row is the node itself.

    Returns
    -------
    StencilSet

    Raises
    ------
    ParameterError
        If n is outside [1, N].
    """
    total = nodes.n_total
    if not 1 <= n <= total:
        raise ParameterError(f"support size n={n} outside [1, N={total}]")
    positions = nodes.positions
    tree = cKDTree(positions)
    k_query = min(total, n + _TIE_PAD)
    dist, idx = tree.query(positions, k=k_query, workers=-1)
    if dist.ndim == 1:  # scipy returns flat arrays for k=1
        dist = dist[:, None]
        idx = idx[:, None]

    # normalize tie order: sort each row by (distance, index)
    order = np.lexsort((idx, dist))
    dist = np.take_along_axis(dist, order, axis=1)
    idx = np.take_along_axis(idx, order, axis=1)

    if k_query < total:
        # rows whose cutoff tie group may extend beyond the fetched
        # candidates are resolved by an exact scan
        ambiguous = np.flatnonzero(dist[:, n - 1] == dist[:, k_query - 1])
        for i in ambiguous:
            idx[i, :n] = _exact_row(positions, int(i), n)

    neighbors = np.ascontiguousarray(idx[:, :n], dtype=np.int64)
    return StencilSet(n=n, neighbors=neighbors)


def average_spacing(nodes: NodeSet) -> float:
    """Mean nearest-neighbor distance of the node set."""
    tree = cKDTree(nodes.positions)
    dist, _ = tree.query(nodes.positions, k=2, workers=-1)
    return float(dist[:, 1].mean())


def save_stencils_csv(stencils: StencilSet, path) -> None:
    """Write stencils as CSV rows node_index,neighbor_0,...,neighbor_{n-1}."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_index"] + [f"neighbor_{j}" for j in range(stencils.n)])
        for i, row in enumerate(stencils.neighbors):
            writer.writerow([i] + [int(v) for v in row])


def load_stencils_csv(path) -> StencilSet:
    """Read a stencil set written by save_stencils_csv."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for rec in reader:
            rows.append([int(v) for v in rec[1:]])
    neighbors = np.asarray(rows, dtype=np.int64)
    return StencilSet(n=len(header) - 1, neighbors=neighbors)


def _exact_row(positions: np.ndarray, i: int, n: int) -> np.ndarray:
    diff = positions - positions[i]
    dist = np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2)
    order = np.lexsort((np.arange(len(positions)), dist))
    return order[:n]
