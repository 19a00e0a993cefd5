"""Explicit pseudo-time marching for the Poisson problem.

The steady Poisson solution is reached as the long-time limit of
u <- u + dt*(f + Lu) with Dirichlet values held on the boundary, where L
is the assembled stencil Laplacian. The update kernel is numba-compiled,
parallelized over disjoint chunks of interior nodes, and keeps a fixed
per-node summation order, so results are bitwise independent of the
thread count. Per step the loop swaps the two field buffers instead of
copying; a copy-back mode with identical semantics exists for validation.
"""

from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from numba import njit, prange

from .errors import InstabilityError, ParameterError, SteadyStateTimeout
from .geometry import NodeSet, closed_form_solution, forcing, generate_unit_disk_nodes, spacing_for_node_count
from .neighborhoods import StencilSet, build_stencils
from .weights import MonomialBasis, ShapeStore, assemble_shapes

DEFAULT_CHUNK = 1024

# dt picked automatically as this fraction of the Gershgorin bound
_AUTO_DT_SAFETY = 0.5


@dataclass
class SolveConfig:
    """Parameters of one solver run.

    Exactly one of `h` (spacing) or `nodes` (target node count) selects
    the discretization. `dt=None` resolves to half the stability bound of
    the assembled weights. `mode` is "fixed" (run `steps` steps) or
    "steady" (march until the residual max|u2-u1|/dt drops below `tol`,
    capped at `max_steps`).
    """

    degree: int = 2
    support_size: int = 15
    h: Optional[float] = None
    nodes: Optional[int] = None
    dt: Optional[float] = None
    steps: int = 0
    mode: str = "fixed"
    tol: float = 1e-9
    seed: int = 0
    threads: int = 1
    chunk_size: int = DEFAULT_CHUNK
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.mode not in ("fixed", "steady"):
            raise ParameterError(f"mode must be 'fixed' or 'steady', got {self.mode!r}")
        if (self.h is None) == (self.nodes is None):
            raise ParameterError("exactly one of h or nodes must be set")
        if self.dt is not None and not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.steps < 0:
            raise ParameterError(f"steps must be >= 0, got {self.steps}")
        if self.mode == "steady" and not self.tol > 0:
            raise ParameterError(f"steady tolerance must be positive, got {self.tol}")
        needed = MonomialBasis.of_degree(self.degree).size
        if self.support_size < needed:
            raise ParameterError(
                f"support size {self.support_size} below the {needed} "
                f"monomials of degree {self.degree}"
            )
        if self.threads < 1 or self.chunk_size < 1:
            raise ParameterError("threads and chunk_size must be >= 1")

    def spacing(self) -> float:
        return self.h if self.h is not None else spacing_for_node_count(self.nodes)

    def as_dict(self, dt_effective: Optional[float] = None) -> dict:
        return {
            "m": self.degree,
            "n": self.support_size,
            "h": self.h,
            "nodes": self.nodes,
            "dt": dt_effective if dt_effective is not None else self.dt,
            "steps": self.steps,
            "mode": self.mode,
            "tol": self.tol,
            "seed": self.seed,
            "threads": self.threads,
            "chunk_size": self.chunk_size,
        }


@dataclass
class SolveReport:
    """Outcome of a time loop run."""

    field: np.ndarray
    steps: int
    wall_time_s: float
    linf: float
    l2: float
    residual: Optional[float]
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "steps": self.steps,
            "wall_time_s": self.wall_time_s,
            "linf": self.linf,
            "l2": self.l2,
            "residual": self.residual,
            "config": self.config,
        }


def prepare_problem(config: SolveConfig):
    """Generate nodes, build stencils, and assemble weights for a config."""
    nodes = generate_unit_disk_nodes(config.spacing(), config.seed)
    stencils = build_stencils(nodes, config.support_size)
    shapes = assemble_shapes(nodes, stencils, config.degree, workers=config.threads)
    return nodes, stencils, shapes


def apply_dirichlet(nodes: NodeSet, values: np.ndarray) -> np.ndarray:
    """Return a copy of `values` with boundary entries set to the analytic solution."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != nodes.n_total:
        raise ParameterError("field length does not match the node set")
    out = values.copy()
    bidx = nodes.boundary_indices
    out[bidx] = closed_form_solution(nodes.positions[bidx])
    return out


def explicit_step(u1: np.ndarray, shapes: ShapeStore, f: np.ndarray, dt: float) -> np.ndarray:
    """One explicit update u2 = u1 + dt*(f + Lu1) on interior nodes.

    `f` holds per-node forcing values (length N). Boundary entries are
    carried over unchanged; `u1` is not modified.

    Raises
    ------
    InstabilityError
        If any updated value is non-finite.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = u1.copy()
    interior = shapes.interior_nodes
    rows = np.ascontiguousarray(shapes.stencils.neighbors[interior])
    f_int = np.ascontiguousarray(np.asarray(f, dtype=float)[interior])
    flags = np.zeros(_chunk_count(interior.size, DEFAULT_CHUNK), dtype=np.uint8)
    _step_kernel(u1, u2, interior, rows, shapes.weights, f_int, dt, DEFAULT_CHUNK, flags)
    if flags.any():
        max_abs = float(np.max(np.abs(u2)))
        raise InstabilityError(
            f"explicit step produced non-finite values (max |u| = {max_abs})",
            max_abs=max_abs,
        )
    return u2


def run_time_loop(
    config: SolveConfig,
    nodes: NodeSet,
    shapes: ShapeStore,
    copy_back: bool = False,
) -> SolveReport:
    """March the explicit iteration and report errors against the analytic solution.

    Starts from zero on the interior and exact Dirichlet values on the
    boundary. Only the step loop itself is timed. With `copy_back=True`
    each step copies the updated buffer back instead of swapping; results
    are identical value-for-value (validation mode).
    """
    interior = shapes.interior_nodes
    rows = np.ascontiguousarray(shapes.stencils.neighbors[interior])
    weights = shapes.weights
    f_int = np.ascontiguousarray(forcing(nodes.positions[interior]))

    u1 = apply_dirichlet(nodes, np.zeros(nodes.n_total))
    u2 = u1.copy()
    dt = config.dt if config.dt is not None else _AUTO_DT_SAFETY * stability_bound(shapes)
    chunk = config.chunk_size
    flags = np.zeros(_chunk_count(interior.size, chunk), dtype=np.uint8)
    steady = config.mode == "steady"
    limit = config.steps if not steady else config.max_steps

    residual = None
    steps_done = 0
    with _active_threads(config.threads):
        t_start = time.perf_counter()
        for step in range(limit):
            _step_kernel(u1, u2, interior, rows, weights, f_int, dt, chunk, flags)
            if flags.any():
                max_abs = float(np.max(np.abs(u2)))
                raise InstabilityError(
                    f"time loop unstable at step {step} (max |u| = {max_abs})",
                    step=step,
                    max_abs=max_abs,
                )
            steps_done = step + 1
            if steady:
                residual = float(np.max(np.abs(u2 - u1))) / dt
            elif steps_done == limit:
                residual = float(np.max(np.abs(u2 - u1))) / dt
            if copy_back:
                u1[:] = u2
            else:
                u1, u2 = u2, u1
            if steady and residual <= config.tol:
                break
        wall = time.perf_counter() - t_start

    if steady and steps_done == config.max_steps and (residual is None or residual > config.tol):
        raise SteadyStateTimeout(
            f"no steady state after {steps_done} steps (residual {residual})",
            steps=steps_done,
            residual=residual,
        )

    linf, l2 = error_norms(u1, nodes)
    return SolveReport(
        field=u1,
        steps=steps_done,
        wall_time_s=wall,
        linf=linf,
        l2=l2,
        residual=residual,
        config=config.as_dict(dt_effective=dt),
    )


def error_norms(values: np.ndarray, nodes: NodeSet):
    """(linf, l2) of values minus the analytic solution over all nodes."""
    if len(values) != nodes.n_total:
        raise ParameterError("field length does not match the node set")
    diff = np.asarray(values, dtype=float) - closed_form_solution(nodes.positions)
    linf = float(np.max(np.abs(diff)))
    l2 = float(math.sqrt(float((diff**2).mean())))
    return linf, l2


def stability_bound(shapes: ShapeStore) -> float:
    """Largest safe explicit time step, min over rows of 2/sum|w|."""
    if shapes.n_rows == 0:
        raise ParameterError("empty shape store")
    row_sums = np.abs(shapes.weights).sum(axis=1)
    return float(2.0 / row_sums.max())


def effective_threads(requested: int) -> int:
    """Clamp a requested thread count to what numba can launch."""
    return max(1, min(requested, numba.config.NUMBA_NUM_THREADS))


def save_solution_csv(nodes: NodeSet, values: np.ndarray, path) -> None:
    """Write per-node solution rows x,y,kind,u,exact,abs_error."""
    exact = closed_form_solution(nodes.positions)
    with open(path, "w", newline="") as fh:
        fh.write("x,y,kind,u,exact,abs_error\n")
        for (x, y), b, u, ex in zip(nodes.positions, nodes.is_boundary, values, exact):
            kind = "boundary" if b else "interior"
            fh.write(
                f"{x:.17g},{y:.17g},{kind},{u:.17g},{ex:.17g},{abs(u - ex):.17g}\n"
            )


def save_report_json(report: SolveReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, allow_nan=False)
        fh.write("\n")


@contextmanager
def _active_threads(requested: int):
    previous = numba.get_num_threads()
    numba.set_num_threads(effective_threads(requested))
    try:
        yield
    finally:
        numba.set_num_threads(previous)


def _chunk_count(n_rows: int, chunk: int) -> int:
    return max(1, (n_rows + chunk - 1) // chunk)


@njit(parallel=True, cache=True)
def _step_kernel(u1, u2, interior, rows, weights, f_int, dt, chunk, flags):
    n_rows = interior.shape[0]
    n_chunks = (n_rows + chunk - 1) // chunk
    width = rows.shape[1]
    for c in prange(n_chunks):
        lo = c * chunk
        hi = min(lo + chunk, n_rows)
        bad = False
        for k in range(lo, hi):
            acc = 0.0
            for j in range(width):
                acc += weights[k, j] * u1[rows[k, j]]
            value = u1[interior[k]] + dt * (f_int[k] + acc)
            u2[interior[k]] = value
            if not np.isfinite(value):
                bad = True
        flags[c] = 1 if bad else 0
