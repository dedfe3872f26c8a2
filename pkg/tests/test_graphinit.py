import itertools
import math

import numpy as np
import pytest

from irsplan import audit
from irsplan.errors import GraphInfeasibleError, InfeasibleEndpointError
from irsplan.graphinit import build_graph, select_initial, shortest_path
from irsplan.scenario import (Obstacle, los_class, motion_energy,
                              scenario_overrides)
from irsplan.snrmodel import rate

from conftest import straight_line


def tiny_scenario(base, *, workspace, q_start, q_goal, n_slots, v_max=1.5,
                  obstacles=()):
    return scenario_overrides(base, workspace=workspace, q_start=q_start,
                              q_goal=q_goal, n_slots=n_slots, v_max=v_max,
                              obstacles=obstacles, min_avg_rate=0.0)


def enumerate_paths_oracle(graph):
    """Brute-force minimum cost over every layer-respecting node sequence."""
    sc = graph.scenario
    grid = graph.node_positions().reshape(-1, 2)
    free = graph.free.reshape(-1)
    nodes = [grid[i] for i in range(len(grid)) if free[i]]
    rates = graph.node_rate.reshape(-1)[free.nonzero()[0]] if graph.mode == "MR" else None
    if graph.mode == "MR":
        cap = float(max(rates.max(), graph.rate_start, graph.rate_goal))

    def edge_cost(a, b, rate_b):
        step = float(np.linalg.norm(np.asarray(b) - np.asarray(a)))
        if step > sc.max_step + 1e-9:
            return None
        if graph.mode == "ME":
            return (sc.motor_v2 * step**2 / sc.slot_duration
                    + sc.motor_v1 * step + sc.motor_v0 * sc.slot_duration)
        return cap - rate_b

    best = math.inf
    k_inner = sc.n_slots - 1
    for combo in itertools.product(range(len(nodes)), repeat=k_inner):
        total = 0.0
        prev = sc.q_start
        ok = True
        for idx in combo:
            cost = edge_cost(prev, nodes[idx],
                             rates[idx] if rates is not None else None)
            if cost is None:
                ok = False
                break
            total += cost
            prev = nodes[idx]
        if not ok:
            continue
        cost = edge_cost(prev, sc.q_goal,
                         graph.rate_goal if graph.mode == "MR" else None)
        if cost is None:
            continue
        best = min(best, total + cost)
    return best


def path_cost(graph, traj):
    sc = graph.scenario
    if graph.mode == "ME":
        return motion_energy(traj, sc)
    rates = []
    grid = graph.node_positions()
    cap = float(max(graph.node_rate[graph.free].max(), graph.rate_start,
                    graph.rate_goal))
    total = 0.0
    for k in range(1, len(traj)):
        if np.allclose(traj[k], sc.q_goal):
            total += cap - graph.rate_goal
        else:
            iy = int(round((traj[k][1] - graph.ys[0]) / graph.spacing))
            ix = int(round((traj[k][0] - graph.xs[0]) / graph.spacing))
            total += cap - graph.node_rate[iy, ix]
    return total


# ---------------------------------------------------------------------------


def test_obstacle_free_me_path_is_discretized_straight_line(empty_scenario, toy_model):
    sc = scenario_overrides(empty_scenario, min_avg_rate=0.0)
    graph = build_graph(sc, model=toy_model, mode="ME", grid_spacing=1.0)
    traj = shortest_path(graph)
    # straight segment oracle: every waypoint within one grid diagonal
    direction = (sc.q_goal - sc.q_start) / np.linalg.norm(sc.q_goal - sc.q_start)
    for q in traj:
        offset = q - sc.q_start
        along = offset @ direction
        assert np.linalg.norm(offset - along * direction) <= math.sqrt(2.0)
    ideal_step = np.linalg.norm(sc.q_goal - sc.q_start) / sc.n_slots
    ideal = sc.n_slots * (sc.motor_v2 * ideal_step**2 + sc.motor_v1 * ideal_step
                          + sc.motor_v0)
    assert motion_energy(traj, sc) <= ideal * 1.02


@pytest.mark.parametrize("mode", ["ME", "MR"])
@pytest.mark.parametrize("case", range(4))
def test_dp_equals_exhaustive_enumeration_on_toy_graphs(empty_scenario, toy_model,
                                                        mode, case):
    rng = np.random.default_rng(case)
    k = int(rng.integers(2, 5))
    # 2x2 grid of nodes (spacing 1) inside a tiny workspace
    sc = tiny_scenario(
        empty_scenario, workspace=(0.0, 1.0, 0.0, 1.0),
        q_start=[0.2, 0.1], q_goal=[0.9, 0.8], n_slots=k,
        v_max=float(rng.uniform(1.2, 2.5)),
    )
    graph = build_graph(sc, model=toy_model, mode=mode, grid_spacing=1.0)
    traj = shortest_path(graph)
    oracle = enumerate_paths_oracle(graph)
    assert path_cost(graph, traj) == pytest.approx(oracle, rel=1e-12)


def test_single_slot_path(empty_scenario, toy_model):
    sc = tiny_scenario(empty_scenario, workspace=(0, 4, 0, 4), q_start=[0.5, 0.5],
                       q_goal=[2.0, 0.5], n_slots=1, v_max=2.0)
    graph = build_graph(sc, model=toy_model, mode="ME")
    traj = shortest_path(graph)
    assert np.allclose(traj, [[0.5, 0.5], [2.0, 0.5]])


def test_unreachable_goal_raises(empty_scenario, toy_model):
    sc = tiny_scenario(empty_scenario, workspace=(0, 20, 0, 4), q_start=[0.5, 2.0],
                       q_goal=[19.5, 2.0], n_slots=3, v_max=1.0)  # 3 m reach < 19 m
    graph = build_graph(sc, model=toy_model, mode="ME")
    with pytest.raises(GraphInfeasibleError):
        shortest_path(graph)


def test_endpoint_inside_obstacle_raises(empty_scenario, toy_model):
    # the Scenario constructor already rejects such endpoints, so smuggle the
    # obstacle in behind the frozen dataclass to exercise the graph's own check
    blocker = Obstacle.from_extents([10.0, 15.0], 8.0, 8.0, height=2.0)
    bad = scenario_overrides(empty_scenario, q_start=[10.0, 15.0])
    object.__setattr__(bad, "obstacles", (blocker,))
    with pytest.raises(InfeasibleEndpointError):
        build_graph(bad, model=toy_model, mode="ME")


def test_graph_nodes_respect_safety_margin(desk_scenario, fitted_model):
    graph = build_graph(desk_scenario, model=fitted_model, mode="ME")
    grid = graph.node_positions().reshape(-1, 2)
    free = graph.free.reshape(-1)
    for obs in desk_scenario.obstacles:
        diff = grid[free] - obs.center
        margins = np.einsum("ni,ij,nj->n", diff, obs.shape_inv, diff)
        assert margins.min() >= desk_scenario.safety_level


def test_edges_respect_step_bound(desk_scenario, fitted_model):
    graph = build_graph(desk_scenario, model=fitted_model, mode="ME")
    lengths = np.linalg.norm(graph.offsets.astype(float), axis=1) * graph.spacing
    assert lengths.max() <= desk_scenario.max_step + 1e-9
    assert (graph.offsets == 0).all(axis=1).any()   # waiting move available


def test_mr_path_rate_at_least_me_path_rate(desk_scenario, fitted_model):
    sc = scenario_overrides(desk_scenario, min_avg_rate=0.0)
    me = shortest_path(build_graph(sc, model=fitted_model, mode="ME"))
    mr = shortest_path(build_graph(sc, model=fitted_model, mode="MR"))
    links_me = [los_class(q, sc) for q in me]
    links_mr = [los_class(q, sc) for q in mr]
    assert rate(fitted_model, links_mr, mr, sc) >= rate(fitted_model, links_me, me, sc)


def test_select_initial_prefers_me_when_rate_unconstrained(desk_scenario, fitted_model):
    sc = scenario_overrides(desk_scenario, min_avg_rate=0.0)
    selection = select_initial(sc, fitted_model)
    assert selection.feasible and selection.label == "ME"
    assert audit.check_p3(selection.trajectory, sc, fitted_model).ok


def test_select_initial_declares_infeasible_when_rate_unattainable(
        desk_scenario, fitted_model):
    sc = scenario_overrides(desk_scenario, min_avg_rate=9e9)
    selection = select_initial(sc, fitted_model)
    assert not selection.feasible
    assert selection.trajectory is None and selection.label is None


def test_desk_m0_at_2p5_gbps_selects_max_rate_initialization(desk_scenario):
    from irsplan.radiomap import build_map
    from irsplan.snrmodel import fit

    sc = scenario_overrides(desk_scenario, n_irs_elements=0, min_avg_rate=2.5e9)
    built = build_map(sc, nx=50, ny=30, draws_per_cell=100, seed=21)
    model = fit(built, sc)
    selection = select_initial(sc, model)
    assert selection.feasible and selection.label == "MR"
    assert audit.check_p3(selection.trajectory, sc, model).ok


def test_grid_refinement_never_raises_me_energy(desk_scenario, fitted_model):
    sc = scenario_overrides(desk_scenario, min_avg_rate=0.0)
    coarse = shortest_path(build_graph(sc, model=fitted_model, mode="ME",
                                       grid_spacing=1.0))
    fine = shortest_path(build_graph(sc, model=fitted_model, mode="ME",
                                     grid_spacing=0.5))
    assert motion_energy(fine, sc) <= motion_energy(coarse, sc) + 1e-9
