"""Meshless RBF-FD Poisson solver on scattered unit-disk nodes.

Pipeline: generate nodes -> build stencils -> assemble Laplacian weights
-> march the explicit iteration; plus a working-set memory model and a
time-loop benchmark harness.
"""

from .errors import (
    DegenerateStencilError,
    InstabilityError,
    ParameterError,
    SteadyStateTimeout,
)
from .geometry import (
    NodeSet,
    closed_form_solution,
    forcing,
    generate_unit_disk_nodes,
    node_count_for_spacing,
    spacing_for_node_count,
)
from .neighborhoods import StencilSet, build_stencils, recommended_support_size
from .perf import (
    MemoryModel,
    TimingReport,
    benchmark_time_loop,
    cache_peak_n,
    estimate_memory_bytes,
    speedup,
)
from .solver import (
    SolveConfig,
    SolveReport,
    apply_dirichlet,
    error_norms,
    explicit_step,
    prepare_problem,
    run_time_loop,
    stability_bound,
)
from .weights import (
    MonomialBasis,
    ShapeStore,
    assemble_shapes,
    compute_laplacian_weights,
    laplacian_phs3,
    phs3,
)

__version__ = "0.1.0"
