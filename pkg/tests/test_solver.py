import json
import math

import numpy as np
import pytest

from rbffd.errors import InstabilityError, ParameterError, SteadyStateTimeout
from rbffd.geometry import (
    NodeSet,
    closed_form_solution,
    forcing,
    generate_unit_disk_nodes,
    spacing_for_node_count,
)
from rbffd.neighborhoods import StencilSet, build_stencils
from rbffd.solver import (
    SolveConfig,
    apply_dirichlet,
    error_norms,
    explicit_step,
    run_time_loop,
    save_report_json,
    save_solution_csv,
    stability_bound,
)
from rbffd.weights import ShapeStore, assemble_shapes

from oracles import direct_steady_solution, python_explicit_step


@pytest.fixture(scope="module")
def small_problem():
    nodes = generate_unit_disk_nodes(spacing_for_node_count(300), seed=2)
    stencils = build_stencils(nodes, 12)
    shapes = assemble_shapes(nodes, stencils, 2)
    return nodes, stencils, shapes


def steady_config(**overrides):
    base = dict(degree=2, support_size=12, nodes=300, mode="steady", tol=1e-9, seed=2)
    base.update(overrides)
    return SolveConfig(**base)


def hand_problem():
    """5 nodes: 4 boundary corners and 1 interior center with crafted weights."""
    positions = np.array(
        [[0.6, 0.0], [0.0, 0.6], [-0.6, 0.0], [0.0, -0.6], [0.05, 0.02]]
    )
    boundary = np.array([True, True, True, True, False])
    nodes = NodeSet(positions=positions, is_boundary=boundary, h=0.6)
    neighbors = np.array(
        [[0, 1, 2, 3, 4], [1, 0, 2, 3, 4], [2, 0, 1, 3, 4], [3, 0, 1, 2, 4], [4, 0, 1, 2, 3]],
        dtype=np.int64,
    )
    stencils = StencilSet(n=5, neighbors=neighbors)
    weights = np.array([[-11.0, 2.5, 2.5, 3.0, 3.0]])
    shapes = ShapeStore(
        degree=2,
        interior_nodes=np.array([4], dtype=np.int64),
        weights=weights,
        stencils=stencils,
    )
    return nodes, shapes


def test_config_validation():
    with pytest.raises(ParameterError):
        SolveConfig(nodes=300, h=0.1)  # both set
    with pytest.raises(ParameterError):
        SolveConfig()  # neither set
    with pytest.raises(ParameterError):
        SolveConfig(nodes=300, dt=-1e-6)
    with pytest.raises(ParameterError):
        SolveConfig(nodes=300, steps=-1)
    with pytest.raises(ParameterError):
        SolveConfig(nodes=300, mode="implicit")
    with pytest.raises(ParameterError):
        SolveConfig(nodes=300, degree=2, support_size=5)


def test_apply_dirichlet_sets_boundary(small_problem):
    nodes, _, _ = small_problem
    field = apply_dirichlet(nodes, np.zeros(nodes.n_total))
    bidx = nodes.boundary_indices
    assert np.array_equal(field[bidx], closed_form_solution(nodes.positions[bidx]))
    assert np.all(field[nodes.interior_indices] == 0.0)


def test_apply_dirichlet_idempotent(small_problem):
    nodes, _, _ = small_problem
    once = apply_dirichlet(nodes, np.zeros(nodes.n_total))
    twice = apply_dirichlet(nodes, once)
    assert np.array_equal(once, twice)


def test_dirichlet_value_at_unit_x_axis_node(small_problem):
    # node (1, 0) exists (first boundary node) and carries sin(pi)*sin(0) = 0
    nodes, _, _ = small_problem
    assert np.allclose(nodes.positions[0], [1.0, 0.0])
    field = apply_dirichlet(nodes, np.full(nodes.n_total, 0.5))
    assert field[0] == 0.0


def test_explicit_step_dt_zero_is_identity(small_problem):
    nodes, _, shapes = small_problem
    u1 = apply_dirichlet(nodes, np.zeros(nodes.n_total))
    u2 = explicit_step(u1, shapes, forcing(nodes.positions), 0.0)
    assert np.array_equal(u2, u1)


def test_explicit_step_matches_hand_evaluation():
    nodes, shapes = hand_problem()
    u1 = np.array([0.1, -0.2, 0.3, 0.4, 0.25])
    f = forcing(nodes.positions)
    dt = 3e-3
    u2 = explicit_step(u1, shapes, f, dt)
    acc = (
        -11.0 * u1[4] + 2.5 * u1[0] + 2.5 * u1[1] + 3.0 * u1[2] + 3.0 * u1[3]
    )
    expected = u1[4] + dt * (f[4] + acc)
    assert u2[4] == pytest.approx(expected, rel=1e-15)
    assert np.array_equal(u2[:4], u1[:4])


def test_explicit_step_leaves_input_unchanged(small_problem):
    nodes, _, shapes = small_problem
    u1 = apply_dirichlet(nodes, np.zeros(nodes.n_total))
    snapshot = u1.copy()
    explicit_step(u1, shapes, forcing(nodes.positions), 1e-5)
    assert np.array_equal(u1, snapshot)


def test_explicit_step_matches_python_loop(small_problem):
    nodes, stencils, shapes = small_problem
    rng = np.random.default_rng(0)
    u1 = apply_dirichlet(nodes, rng.normal(size=nodes.n_total))
    f = forcing(nodes.positions)
    dt = 1e-4
    got = explicit_step(u1, shapes, f, dt)
    interior = shapes.interior_nodes
    expected = python_explicit_step(
        u1, interior, stencils.neighbors[interior], shapes.weights, f[interior], dt
    )
    assert np.array_equal(got, expected)


def test_exact_solution_is_near_fixed_point(small_problem):
    nodes, stencils, shapes = small_problem
    u_exact = closed_form_solution(nodes.positions)
    f = forcing(nodes.positions)
    dt = 1e-5
    u2 = explicit_step(u_exact, shapes, f, dt)
    # independent residual bound: f + L u* via einsum, not the kernel
    interior = shapes.interior_nodes
    gathered = u_exact[stencils.neighbors[interior]]
    residual = f[interior] + np.einsum("ij,ij->i", shapes.weights, gathered)
    bound = dt * np.abs(residual).max()
    assert np.abs(u2 - u_exact).max() <= bound * (1 + 1e-12)


def test_explicit_step_detects_blowup(small_problem):
    nodes, _, shapes = small_problem
    huge = np.full(nodes.n_total, 1e308)
    with pytest.raises(InstabilityError) as excinfo:
        explicit_step(huge, shapes, forcing(nodes.positions), 1.0)
    assert excinfo.value.max_abs is not None


def test_run_time_loop_unstable_dt_raises(small_problem):
    nodes, _, shapes = small_problem
    config = steady_config(mode="fixed", steps=500, dt=1.0)
    with pytest.raises(InstabilityError) as excinfo:
        run_time_loop(config, nodes, shapes)
    assert "step" in str(excinfo.value)


def test_run_time_loop_zero_steps(small_problem):
    nodes, _, shapes = small_problem
    config = steady_config(mode="fixed", steps=0, dt=1e-5)
    report = run_time_loop(config, nodes, shapes)
    initial = apply_dirichlet(nodes, np.zeros(nodes.n_total))
    assert report.steps == 0
    assert report.residual is None
    assert report.wall_time_s < 0.1
    assert (report.linf, report.l2) == error_norms(initial, nodes)


def test_run_time_loop_matches_step_composition(small_problem):
    nodes, _, shapes = small_problem
    steps = 50
    config = steady_config(mode="fixed", steps=steps, dt=1e-4)
    report = run_time_loop(config, nodes, shapes)
    u = apply_dirichlet(nodes, np.zeros(nodes.n_total))
    f = forcing(nodes.positions)
    for _ in range(steps):
        u = explicit_step(u, shapes, f, 1e-4)
    assert np.array_equal(report.field, u)


def test_swap_equals_copy_back(small_problem):
    nodes, _, shapes = small_problem
    config = steady_config(mode="fixed", steps=120, dt=1e-4)
    swap = run_time_loop(config, nodes, shapes)
    copy = run_time_loop(config, nodes, shapes, copy_back=True)
    assert np.array_equal(swap.field, copy.field)
    assert swap.steps == copy.steps
    assert swap.residual == copy.residual


def test_thread_count_does_not_change_bits(small_problem):
    nodes, _, shapes = small_problem
    fields = []
    for threads in (1, 2, 8):
        config = steady_config(mode="fixed", steps=100, dt=1e-4, threads=threads)
        fields.append(run_time_loop(config, nodes, shapes).field)
    assert np.array_equal(fields[0], fields[1])
    assert np.array_equal(fields[0], fields[2])


def test_boundary_held_fixed_through_loop(small_problem):
    nodes, _, shapes = small_problem
    config = steady_config(mode="fixed", steps=200, dt=1e-4)
    report = run_time_loop(config, nodes, shapes)
    bidx = nodes.boundary_indices
    assert np.array_equal(
        report.field[bidx], closed_form_solution(nodes.positions[bidx])
    )


def test_residual_monotone_after_startup(small_problem):
    nodes, stencils, shapes = small_problem
    dt = 0.5 * stability_bound(shapes)
    u = apply_dirichlet(nodes, np.zeros(nodes.n_total))
    f = forcing(nodes.positions)
    total = 3000
    updates = []
    for _ in range(total):
        new = explicit_step(u, shapes, f, dt)
        updates.append(np.abs(new - u).max())
        u = new
    tail = np.asarray(updates[max(1, total // 100) :])
    assert np.all(np.diff(tail) <= 1e-12 * tail[:-1])


def test_steady_state_matches_direct_solve(small_problem):
    nodes, _, shapes = small_problem
    report = run_time_loop(steady_config(), nodes, shapes)
    direct = direct_steady_solution(nodes, shapes)
    assert np.abs(report.field - direct).max() <= 1e-6
    assert report.linf <= 0.1  # coarse ~300-node set, loose sanity bound
    assert report.residual <= 1e-9


def test_steady_state_timeout(small_problem):
    nodes, _, shapes = small_problem
    config = steady_config(max_steps=5)
    with pytest.raises(SteadyStateTimeout) as excinfo:
        run_time_loop(config, nodes, shapes)
    assert excinfo.value.residual is not None
    assert excinfo.value.steps == 5


def test_run_determinism_except_walltime(small_problem):
    nodes, _, shapes = small_problem
    config = steady_config(mode="fixed", steps=300, dt=1e-4)
    first = run_time_loop(config, nodes, shapes)
    second = run_time_loop(config, nodes, shapes)
    assert np.array_equal(first.field, second.field)
    assert first.steps == second.steps
    assert first.linf == second.linf
    assert first.l2 == second.l2
    assert first.residual == second.residual


def test_error_norms_reference_cases(small_problem):
    nodes, _, _ = small_problem
    exact = closed_form_solution(nodes.positions)
    assert error_norms(exact, nodes) == (0.0, 0.0)
    linf, l2 = error_norms(exact + 0.1, nodes)
    assert linf == pytest.approx(0.1, rel=1e-12)
    assert l2 == pytest.approx(0.1, rel=1e-12)
    rng = np.random.default_rng(1)
    noisy = exact + rng.normal(scale=0.01, size=len(exact))
    linf, l2 = error_norms(noisy, nodes)
    assert l2 <= linf


def test_stability_bound_five_point_stencil():
    # classical 5-point weights at spacing h: sum|w| = 8/h^2, bound = h^2/4
    h = 0.05
    nodes, shapes = hand_problem()
    weights = np.array([[-4.0, 1.0, 1.0, 1.0, 1.0]]) / h**2
    five_point = ShapeStore(
        degree=2,
        interior_nodes=shapes.interior_nodes,
        weights=weights,
        stencils=shapes.stencils,
    )
    assert stability_bound(five_point) == pytest.approx(h**2 / 4, rel=1e-12)


def test_stability_bound_scales_with_spacing():
    coarse = generate_unit_disk_nodes(0.2, seed=5)
    fine = generate_unit_disk_nodes(0.1, seed=5)
    bounds = []
    for nodes in (coarse, fine):
        stencils = build_stencils(nodes, 12)
        shapes = assemble_shapes(nodes, stencils, 2)
        bounds.append(stability_bound(shapes))
    assert bounds[0] / bounds[1] == pytest.approx(4.0, rel=0.5)


def test_stability_bound_dominates_reference_dt():
    nodes = generate_unit_disk_nodes(spacing_for_node_count(1027), seed=1)
    stencils = build_stencils(nodes, 15)
    shapes = assemble_shapes(nodes, stencils, 2)
    assert stability_bound(shapes) > 10 * 1e-6


def test_solution_csv_format(tmp_path, small_problem):
    nodes, _, shapes = small_problem
    report = run_time_loop(steady_config(mode="fixed", steps=10, dt=1e-5), nodes, shapes)
    path = tmp_path / "solution.csv"
    save_solution_csv(nodes, report.field, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,kind,u,exact,abs_error"
    assert len(lines) == nodes.n_total + 1
    cells = lines[1].split(",")
    assert cells[2] in ("interior", "boundary")
    assert float(cells[5]) == abs(float(cells[3]) - float(cells[4]))


def test_report_json_schema(tmp_path, small_problem):
    nodes, _, shapes = small_problem
    report = run_time_loop(steady_config(mode="fixed", steps=5, dt=1e-5), nodes, shapes)
    path = tmp_path / "report.json"
    save_report_json(report, path)
    loaded = json.loads(path.read_text())
    assert set(loaded) == {"steps", "wall_time_s", "linf", "l2", "residual", "config"}
    assert loaded["steps"] == 5
    assert loaded["config"]["m"] == 2
