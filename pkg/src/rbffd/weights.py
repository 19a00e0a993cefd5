"""Laplacian stencil weights from cubic polyharmonic splines with monomials.

Each interior node gets one weight row, obtained by solving the local
saddle system

    [ A  P ] [ w ]   [ lphi ]
    [ P' 0 ] [ l ] = [ lpoly ]

where A holds pairwise radial values phi(r) = r^3 over the support, P the
monomials up to the augmentation degree, and the right-hand side the
Laplacian of each basis function at the stencil center. Supports are
shifted to the center and scaled by their radius before solving; the
resulting weights are scaled back by 1/radius^2.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStencilError, ParameterError
from .geometry import NodeSet
from .neighborhoods import StencilSet

# past this condition number the local solve carries no trustworthy digits
COND_LIMIT = 1e14

# upper bound on scratch array elements per assembly chunk
_CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True)
class MonomialBasis:
    """Bivariate monomials x^a*y^b with a+b <= degree, graded-lex ordered.

    Within each total degree the x-exponent descends, so the degree-2
    basis reads 1, x, y, x^2, x*y, y^2.
    """

    degree: int
    exponents: np.ndarray  # (M, 2) int

    @classmethod
    def of_degree(cls, degree: int) -> "MonomialBasis":
        if degree < 0:
            raise ParameterError(f"monomial degree must be >= 0, got {degree}")
        pairs = [
            (a, t - a)
            for t in range(degree + 1)
            for a in range(t, -1, -1)
        ]
        return cls(degree=degree, exponents=np.asarray(pairs, dtype=np.int64))

    @property
    def size(self) -> int:
        """Number of monomials, (degree+1)(degree+2)/2."""
        return self.exponents.shape[0]

    def laplacian_at_origin(self) -> np.ndarray:
        """Laplacian of each monomial evaluated at the origin."""
        out = np.zeros(self.size)
        for k, (a, b) in enumerate(self.exponents):
            if (a, b) == (2, 0) or (a, b) == (0, 2):
                out[k] = 2.0
        return out


@dataclass(frozen=True)
class ShapeStore:
    """Per-interior-node Laplacian weight rows.

    `weights[k]` applies to the field values at
    `stencils.neighbors[interior_nodes[k]]`.
    """

    degree: int
    interior_nodes: np.ndarray  # (Ni,) int64
    weights: np.ndarray  # (Ni, n) float64
    stencils: StencilSet

    @property
    def n_rows(self) -> int:
        return self.weights.shape[0]


def phs3(r):
    """Cubic polyharmonic radial function r^3."""
    return np.asarray(r, dtype=float) ** 3


def laplacian_phs3(r):
    """Laplacian of r^3 in two dimensions: 9*r."""
    return 9.0 * np.asarray(r, dtype=float)


def compute_laplacian_weights(center, support, degree: int) -> np.ndarray:
    """Weights approximating the Laplacian at `center` from `support` values.

    Parameters
    ----------
    center : (2,) array
        Stencil center; must equal support[0].
    support : (n, 2) array
        Pairwise-distinct support points, center first.
    degree : int
        Highest augmented monomial degree; requires
        n >= (degree+1)(degree+2)/2.

    Returns
    -------
    (n,) float64 array of weights (units 1/length^2).

    Raises
    ------
    ParameterError
        On a too-small support or center/support mismatch.
    DegenerateStencilError
        When the local system's condition estimate exceeds 1e14.
    """
    support = np.asarray(support, dtype=float)
    center = np.asarray(center, dtype=float)
    basis = MonomialBasis.of_degree(degree)
    n = support.shape[0]
    if n < basis.size:
        raise ParameterError(
            f"support size {n} below the {basis.size} monomials of degree {degree}"
        )
    if not np.array_equal(support[0], center):
        raise ParameterError("support[0] must be the stencil center")
    weights, cond = _weights_batch(support[None, :, :], basis)
    if cond[0] > COND_LIMIT or not np.isfinite(cond[0]):
        raise DegenerateStencilError(
            f"degenerate stencil at ({center[0]:.6g}, {center[1]:.6g}): "
            f"condition estimate {cond[0]:.3e}",
            position=(float(center[0]), float(center[1])),
        )
    return weights[0]


def assemble_shapes(
    nodes: NodeSet,
    stencils: StencilSet,
    degree: int,
    workers: int = 1,
) -> ShapeStore:
    """Compute Laplacian weight rows for every interior node.

    Independent per-node solves run in index chunks; `workers` > 1
    distributes chunks over a thread pool (the solves release the GIL in
    LAPACK). Results are written by node index, so the output does not
    depend on scheduling.

    Raises
    ------
    ParameterError
        If the support size is below the monomial count.
    DegenerateStencilError
        Naming the first offending node, with its coordinates.
    """
    basis = MonomialBasis.of_degree(degree)
    n = stencils.n
    if n < basis.size:
        raise ParameterError(
            f"support size {n} below the {basis.size} monomials of degree {degree}"
        )
    interior = nodes.interior_indices
    n_rows = interior.size
    weights = np.empty((n_rows, n))
    size = n + basis.size
    chunk = max(32, min(4096, _CHUNK_BUDGET // (size * size)))
    spans = [(lo, min(lo + chunk, n_rows)) for lo in range(0, n_rows, chunk)]

    def run_span(span):
        lo, hi = span
        rows = stencils.neighbors[interior[lo:hi]]
        supports = nodes.positions[rows]
        w, cond = _weights_batch(supports, basis)
        bad = np.flatnonzero(~(cond <= COND_LIMIT))
        if bad.size:
            k = int(bad[0])
            node = int(interior[lo + k])
            x, y = nodes.positions[node]
            raise DegenerateStencilError(
                f"degenerate stencil at node {node} ({x:.6g}, {y:.6g}): "
                f"condition estimate {cond[k]:.3e}",
                node_index=node,
                position=(float(x), float(y)),
            )
        weights[lo:hi] = w

    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_span, spans))
    else:
        for span in spans:
            run_span(span)

    return ShapeStore(
        degree=degree,
        interior_nodes=interior.astype(np.int64),
        weights=weights,
        stencils=stencils,
    )


def save_shapes_csv(shapes: ShapeStore, path) -> None:
    """Write weight rows as CSV node_index,w_0,...,w_{n-1} (17 digits)."""
    n = shapes.weights.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write("node_index," + ",".join(f"w_{j}" for j in range(n)) + "\n")
        for node, row in zip(shapes.interior_nodes, shapes.weights):
            fh.write(str(int(node)) + "," + ",".join(f"{v:.17g}" for v in row) + "\n")


def _weights_batch(supports: np.ndarray, basis: MonomialBasis):
    """Solve the saddle systems for a (C, n, 2) stack of supports.

    Returns (C, n) weights and (C,) condition estimates. Rows with a
    condition estimate above COND_LIMIT get NaN weights; callers decide
    how to report them.
    """
    count, n, _ = supports.shape
    m_size = basis.size
    size = n + m_size

    local = supports - supports[:, :1, :]
    radius = np.sqrt((local**2).sum(-1)).max(axis=1)  # (C,)
    scaled = local / radius[:, None, None]

    diff = scaled[:, :, None, :] - scaled[:, None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    mat = np.zeros((count, size, size))
    mat[:, :n, :n] = dist**3

    ax = basis.exponents[:, 0]
    ay = basis.exponents[:, 1]
    mono = scaled[:, :, 0:1] ** ax * scaled[:, :, 1:2] ** ay  # (C, n, M)
    mat[:, :n, n:] = mono
    mat[:, n:, :n] = mono.transpose(0, 2, 1)

    rhs = np.zeros((count, size))
    center_dist = np.sqrt((scaled**2).sum(-1))
    rhs[:, :n] = 9.0 * center_dist
    rhs[:, n:] = basis.laplacian_at_origin()

    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(mat)
    good = cond <= COND_LIMIT
    weights = np.full((count, n), np.nan)
    if good.all():
        sol = np.linalg.solve(mat, rhs[:, :, None])[:, :, 0]
        weights = sol[:, :n] / radius[:, None] ** 2
    elif good.any():
        sol = np.linalg.solve(mat[good], rhs[good][:, :, None])[:, :, 0]
        weights[good] = sol[:, :n] / radius[good][:, None] ** 2
    return weights, cond
