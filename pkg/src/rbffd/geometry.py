"""Unit-disk node sets and the manufactured Poisson solution/forcing pair.

The domain is the unit disk (radius 1, centered at the origin). Node sets
consist of an equidistant ring of boundary nodes plus a quasi-uniform
scattered interior fill produced by an advancing-front procedure with a
minimum-separation acceptance rule.
"""

from __future__ import annotations

import csv
import math
import random
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

# Boundary membership tolerance on | ||p|| - 1 |. Boundary nodes are
# constructed on the circle, so this only absorbs rounding.
BOUNDARY_TOL = 1e-12

# Advancing-front parameters: candidates are placed on a ring of radius
# _CANDIDATE_FACTOR*h around each front node and accepted when at least
# _ACCEPT_FACTOR*h away from every accepted node. The candidate factor is
# calibrated so the produced node count tracks node_count_for_spacing(h).
_ACCEPT_FACTOR = 0.8
_CANDIDATE_FACTOR = 0.95
_CANDIDATES_PER_NODE = 12


@dataclass(frozen=True)
class NodeSet:
    """Scattered discretization nodes on the unit disk.

    Attributes
    ----------
    positions : (N, 2) float64 array
        Node coordinates; boundary ring first, interior fill after, in
        generation order (deterministic for fixed spacing and seed).
    is_boundary : (N,) bool array
        True for nodes on the unit circle.
    h : float
        Target inter-node spacing the set was generated for.
    """

    positions: np.ndarray
    is_boundary: np.ndarray
    h: float

    @property
    def n_total(self) -> int:
        return self.positions.shape[0]

    @property
    def n_boundary(self) -> int:
        return int(self.is_boundary.sum())

    @property
    def n_interior(self) -> int:
        return self.n_total - self.n_boundary

    @property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary)

    @property
    def boundary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.is_boundary)


def closed_form_solution(points):
    """Analytic solution sin(pi*x)*sin(pi*y), vectorized over points.

    `points` may be a single (2,) coordinate pair or an (N, 2) array;
    the result has the matching leading shape.
    """
    p = np.asarray(points, dtype=float)
    return np.sin(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1])


def forcing(points):
    """Forcing field 2*pi^2*sin(pi*x)*sin(pi*y) matching the solution."""
    return 2.0 * np.pi**2 * closed_form_solution(points)


def node_count_for_spacing(h: float) -> int:
    """Estimate the node count a spacing `h` produces on the unit disk.

    Area term pi/h^2 plus perimeter term 2*pi/h, rounded to nearest.
    """
    _check_spacing(h)
    return int(math.floor(math.pi / h**2 + 2.0 * math.pi / h + 0.5))


def spacing_for_node_count(n: int) -> float:
    """Invert node_count_for_spacing: pick h so the estimate equals `n`."""
    if n < 30:
        raise ParameterError(f"target node count {n} is too small (need >= 30)")
    return 1.0 / (math.sqrt(1.0 + n / math.pi) - 1.0)


def generate_unit_disk_nodes(h: float, seed: int = 0) -> NodeSet:
    """Generate a scattered node set on the unit disk with spacing `h`.

    Boundary nodes are placed equidistantly on the unit circle at arc
    spacing close to `h`. The interior is filled by an advancing front
    seeded from the boundary ring: each front node emits candidates on a
    ring of radius 0.95*h at seeded random angles, and a candidate is
    accepted when it lies strictly inside the disk and at least 0.8*h
    from every already-accepted node. The result is deterministic for a
    fixed (h, seed).

    Parameters
    ----------
    h : float
        Target spacing, 0 < h < 0.5.
    seed : int
        Seed for the candidate-angle stream.

    Returns
    -------
    NodeSet

    Raises
    ------
    ParameterError
        If `h` is outside (0, 0.5).
    """
    _check_spacing(h)
    rng = random.Random(seed)

    n_boundary = int(math.floor(2.0 * math.pi / h + 0.5))
    xs = []
    ys = []
    for k in range(n_boundary):
        theta = 2.0 * math.pi * k / n_boundary
        xs.append(math.cos(theta))
        ys.append(math.sin(theta))

    accept = _ACCEPT_FACTOR * h
    accept2 = accept * accept
    cell = accept / math.sqrt(2.0)
    # cell -> node index hash grid; cell size keeps at most one node per
    # cell, so a 5x5 block covers the acceptance radius.
    grid: dict[tuple[int, int], int] = {}

    def cell_of(x: float, y: float) -> tuple[int, int]:
        return (int((x + 1.0) / cell), int((y + 1.0) / cell))

    def fits(x: float, y: float) -> bool:
        cx, cy = cell_of(x, y)
        for gx in range(cx - 2, cx + 3):
            for gy in range(cy - 2, cy + 3):
                j = grid.get((gx, gy))
                if j is not None:
                    dx = x - xs[j]
                    dy = y - ys[j]
                    if dx * dx + dy * dy < accept2:
                        return False
        return True

    for i in range(n_boundary):
        grid[cell_of(xs[i], ys[i])] = i

    front = deque(range(n_boundary))
    ring = _CANDIDATE_FACTOR * h
    inside2 = (1.0 - 1e-9) ** 2
    two_pi = 2.0 * math.pi
    while front:
        i = front.popleft()
        bx = xs[i]
        by = ys[i]
        for _ in range(_CANDIDATES_PER_NODE):
            a = two_pi * rng.random()
            x = bx + ring * math.cos(a)
            y = by + ring * math.sin(a)
            if x * x + y * y >= inside2:
                continue
            if fits(x, y):
                j = len(xs)
                xs.append(x)
                ys.append(y)
                grid[cell_of(x, y)] = j
                front.append(j)

    positions = np.column_stack([np.asarray(xs), np.asarray(ys)])
    is_boundary = np.zeros(len(xs), dtype=bool)
    is_boundary[:n_boundary] = True
    nodes = NodeSet(positions=positions, is_boundary=is_boundary, h=h)
    if nodes.n_interior < 1 or nodes.n_boundary < 3:
        raise ParameterError(
            f"degenerate node set for h={h}: "
            f"{nodes.n_interior} interior / {nodes.n_boundary} boundary nodes"
        )
    return nodes


def save_nodes_csv(nodes: NodeSet, path) -> None:
    """Write the node set as CSV with header x,y,kind."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "kind"])
        for (x, y), b in zip(nodes.positions, nodes.is_boundary):
            writer.writerow([f"{x:.17g}", f"{y:.17g}", "boundary" if b else "interior"])


def load_nodes_csv(path, h: float = float("nan")) -> NodeSet:
    """Read a node set written by save_nodes_csv."""
    xs, ys, kinds = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            xs.append(float(row["x"]))
            ys.append(float(row["y"]))
            kinds.append(row["kind"] == "boundary")
    positions = np.column_stack([np.asarray(xs), np.asarray(ys)])
    return NodeSet(positions=positions, is_boundary=np.asarray(kinds, dtype=bool), h=h)


def _check_spacing(h: float) -> None:
    if not (0.0 < h < 0.5):
        raise ParameterError(f"spacing h={h} outside the valid range (0, 0.5)")
