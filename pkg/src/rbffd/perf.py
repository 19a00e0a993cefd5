"""Byte accounting, cache-peak prediction, and time-loop benchmarking.

The memory model counts the working set of one explicit step: per node,
4+n double-precision values (coordinates plus both field buffers plus n
stencil weights) and, with every node counted as interior, 1+n integers
(interior index plus stencil entries). The node count at which that
working set fills a cache of the given capacity predicts where per-node
throughput peaks.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, replace
from typing import Optional

from .errors import ParameterError
from .solver import (
    SolveConfig,
    effective_threads,
    prepare_problem,
    run_time_loop,
)

DEFAULT_CACHE_BYTES = 5_500_000
DEFAULT_SUPPORT_SIZES = (12, 15, 20, 30, 45, 60)

DOUBLE_BYTES = 8
INT_BYTES = 4


@dataclass(frozen=True)
class MemoryModel:
    """Working-set accounting for one support size."""

    support_size: int
    cache_bytes: int = DEFAULT_CACHE_BYTES
    double_bytes: int = DOUBLE_BYTES
    int_bytes: int = INT_BYTES

    def per_node_bytes(self) -> int:
        """Bytes per node when every node counts as interior."""
        n = self.support_size
        return self.double_bytes * (4 + n) + self.int_bytes * (1 + n)

    def footprint_bytes(self, n_total: int, n_interior: int) -> int:
        return estimate_memory_bytes(n_total, n_interior, self.support_size)

    def cache_peak_nodes(self) -> int:
        return cache_peak_n(self.support_size, self.cache_bytes)


@dataclass(frozen=True)
class TimingReport:
    """Minimum-of-repeats timing of one time-loop configuration."""

    n_total: int
    n_interior: int
    support_size: int
    degree: int
    steps: int
    threads: int
    loop_seconds: float
    ns_per_step_node: Optional[float]
    field_digest: str

    @classmethod
    def from_run(cls, n_total, n_interior, support_size, degree, steps, threads,
                 loop_seconds, final_field):
        rate = None
        if steps >= 1:
            rate = 1e9 * loop_seconds / (steps * n_interior)
        digest = hashlib.sha256(final_field.tobytes()).hexdigest()
        return cls(
            n_total=n_total,
            n_interior=n_interior,
            support_size=support_size,
            degree=degree,
            steps=steps,
            threads=threads,
            loop_seconds=loop_seconds,
            ns_per_step_node=rate,
            field_digest=digest,
        )


def estimate_memory_bytes(n_total: int, n_interior: int, support_size: int) -> int:
    """Working-set bytes: 8*N*(4+n) + 4*(N_i + N*n)."""
    if not 0 <= n_interior <= n_total:
        raise ParameterError(f"need 0 <= N_i <= N, got N_i={n_interior}, N={n_total}")
    if support_size < 1:
        raise ParameterError(f"support size must be >= 1, got {support_size}")
    return DOUBLE_BYTES * n_total * (4 + support_size) + INT_BYTES * (
        n_interior + n_total * support_size
    )


def cache_peak_n(support_size: int, cache_bytes: int = DEFAULT_CACHE_BYTES) -> int:
    """Node count at which the working set (with N_i = N) fills the cache."""
    if support_size < 1:
        raise ParameterError(f"support size must be >= 1, got {support_size}")
    if cache_bytes <= 0:
        raise ParameterError(f"cache size must be positive, got {cache_bytes}")
    per_node = DOUBLE_BYTES * (4 + support_size) + INT_BYTES * (1 + support_size)
    return int(math.floor(cache_bytes / per_node + 0.5))


def speedup(t_base: float, t_accel: float) -> float:
    """Ratio t_base / t_accel of two loop timings."""
    if not (t_base > 0 and t_accel > 0):
        raise ParameterError(f"timings must be positive, got {t_base}, {t_accel}")
    return t_base / t_accel


def benchmark_time_loop(config: SolveConfig, thread_counts, repeats: int = 3):
    """Time the fixed-step loop for each thread count, same problem throughout.

    The problem (nodes, stencils, weights) is prepared once; each thread
    count then runs the identical loop `repeats` times and keeps the
    minimum loop time. Numerical results are bitwise identical across
    thread counts; each report carries a digest of the final field so
    that can be checked from the output.
    """
    if repeats < 1:
        raise ParameterError(f"repeats must be >= 1, got {repeats}")
    if config.mode != "fixed":
        raise ParameterError("benchmarking requires fixed-step mode")
    thread_counts = list(thread_counts)
    if not thread_counts:
        raise ParameterError("need at least one thread count")

    nodes, stencils, shapes = prepare_problem(config)
    reports = []
    for threads in thread_counts:
        best = None
        final = None
        for _ in range(repeats):
            run_cfg = replace(config, threads=threads)
            report = run_time_loop(run_cfg, nodes, shapes)
            if best is None or report.wall_time_s < best:
                best = report.wall_time_s
            final = report.field
        reports.append(
            TimingReport.from_run(
                n_total=nodes.n_total,
                n_interior=nodes.n_interior,
                support_size=config.support_size,
                degree=config.degree,
                steps=config.steps,
                threads=effective_threads(threads),
                loop_seconds=best,
                final_field=final,
            )
        )
    return reports


def save_benchmark_csv(reports, path) -> None:
    """Write timing rows N,n,m,threads,steps,loop_seconds,ns_per_step_node."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "n", "m", "threads", "steps", "loop_seconds", "ns_per_step_node"])
        for r in reports:
            rate = "" if r.ns_per_step_node is None else f"{r.ns_per_step_node:.6g}"
            writer.writerow(
                [r.n_total, r.support_size, r.degree, r.threads, r.steps,
                 f"{r.loop_seconds:.9g}", rate]
            )


def save_memory_model_csv(rows, path) -> None:
    """Write memory-model rows n,per_node_bytes,cache_peak_N."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "per_node_bytes", "cache_peak_N"])
        for model in rows:
            writer.writerow(
                [model.support_size, model.per_node_bytes(), model.cache_peak_nodes()]
            )
