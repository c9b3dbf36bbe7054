from __future__ import annotations

from dataclasses import replace

import pytest

from tierplace import (
    Layer,
    Link,
    Node,
    Scenario,
    SearchSpaceTooLarge,
    ServiceSpec,
    Slot,
    SolverConfig,
    Topology,
    choose_dc,
    choose_predeploy,
    compare,
    evaluate,
    solve_anneal,
    solve_exhaustive,
    solve_greedy,
)
from _instances import random_instance, reports_close


def _objective(solution):
    return (solution.report.mean_latency_ms, solution.report.total_cost)


def _with_deploy_cost(spec, deploy_cost):
    stages = list(spec.pipeline.stages)
    stages[0] = replace(stages[0], deploy_cost=deploy_cost)
    return replace(spec, pipeline=replace(spec.pipeline, stages=tuple(stages)))


def test_exhaustive_mini_returns_p1(mini, mini_spec, p1):
    solution = solve_exhaustive(mini.topology, mini_spec)
    assert not solution.best_effort
    assert solution.placement == p1
    assert solution.report.mean_latency_ms == pytest.approx(92.0, rel=1e-9)
    assert solution.report.total_cost == pytest.approx(1.9716, rel=1e-9)
    assert solution.states_examined == 26


def test_exhaustive_mini_expensive_deploy_prefers_cloud(mini, mini_spec, p1, p2):
    # With deploy at 2.0 per gateway the pre-installed variant costs 5.8716
    # and busts the budget; the all-cloud placement keeps the 92 ms optimum.
    spec = _with_deploy_cost(mini_spec, 2.0)
    assert evaluate(mini.topology, spec, p1).total_cost == pytest.approx(5.8716, rel=1e-9)
    solution = solve_exhaustive(mini.topology, spec)
    assert solution.placement == p2
    assert _objective(solution) == (pytest.approx(92.0), pytest.approx(2.81))


def test_exhaustive_mini_tiny_budget_is_infeasible(mini, mini_spec):
    solution = solve_exhaustive(mini.topology, replace(mini_spec, budget=0.1))
    assert solution.best_effort


def test_exhaustive_state_count_matches_hand_enumeration(mini, mini_spec):
    # Single-DC variant: termini are dc1 and (edge1, dc1). Layer vectors per
    # terminus: Device/Gateway/Edge/Cloud (DC) and Device/Gateway/Edge
    # (edge). The Gateway vector fans out over 2^2 predeploy subsets:
    # (3 + 4) + (2 + 4) = 13 states.
    t = mini.topology
    single = Topology(
        [n for n in t.node_list if n.id != "dc2"],
        t.tree_link_list,
        [l for l in t.dc_link_list if l.dst != "dc2"],
    )
    solution = solve_exhaustive(single, mini_spec)
    assert solution.states_examined == 13
    assert solution.report.mean_latency_ms == pytest.approx(92.0, rel=1e-9)


def test_exhaustive_respects_max_states(mini, mini_spec):
    with pytest.raises(SearchSpaceTooLarge, match="search space too large"):
        solve_exhaustive(mini.topology, mini_spec, SolverConfig(max_states=5))


def _brute_force_best(topology, spec):
    """Independent enumeration (product + monotone filter + bitmask subsets)
    of every legal placement; used to cross-check the oracle's own loop."""
    from itertools import product

    from tierplace import InvalidPlacement, Placement, derive_active_streams, min_alloc

    streams = derive_active_streams(topology, spec.scenario)
    clouds = [n.id for n in topology.clouds()]
    edges_used = {
        topology.parent_of(topology.parent_of(d).id).id
        for active in streams
        for d in active
    }
    termini = []
    if spec.pipeline.has_aggregation:
        termini += [(dc, dc) for dc in clouds]
        for edge in topology.edges():
            if edges_used <= {edge.id}:
                termini += [(edge.id, dc) for dc in topology.dcs_of_edge(edge.id)]
    else:
        termini += [(None, dc) for dc in clouds]
    visited = sorted({topology.parent_of(d).id for active in streams for d in active})

    pre = spec.pipeline.pre_count
    best = None
    for agg, sink in termini:
        cap = int(topology.node(agg).layer) if agg else int(Layer.CLOUD)
        if agg is None:
            alloc = 0
        else:
            alloc = min_alloc(
                topology, spec, Placement(layer_of=(Layer.DEVICE,) * pre, agg_node=agg, sink_dc=sink)
            )
        for combo in product(range(4), repeat=pre):
            if any(combo[i] > combo[i + 1] for i in range(pre - 1)):
                continue
            if pre and combo[-1] > cap:
                continue
            vector = tuple(Layer(v) for v in combo)
            masks = range(2 ** len(visited)) if Layer.GATEWAY in vector else (0,)
            for mask in masks:
                predeploy = frozenset(
                    g for i, g in enumerate(visited) if mask >> i & 1
                )
                placement = Placement(
                    layer_of=vector, agg_node=agg, sink_dc=sink, predeploy=predeploy, alloc=alloc
                )
                try:
                    report = evaluate(topology, spec, placement)
                except InvalidPlacement:
                    continue
                if not report.feasible or report.total_cost > spec.budget:
                    continue
                key = (report.mean_latency_ms, report.total_cost, placement.encode())
                if best is None or key < best[0]:
                    best = (key, placement, report)
    return best


def test_exhaustive_matches_independent_brute_force(mini, mini_spec):
    cases = [(mini.topology, mini_spec)]
    for seed in (2, 8, 21):
        cases.append(random_instance(seed, max_gateways=4, max_slots=3))
    for topology, spec in cases:
        expected = _brute_force_best(topology, spec)
        solution = solve_exhaustive(topology, spec)
        assert expected is not None and not solution.best_effort
        assert solution.placement == expected[1]
        assert solution.report == expected[2]


def test_greedy_matches_oracle_on_mini(mini, mini_spec, p1):
    solution = solve_greedy(mini.topology, mini_spec)
    assert not solution.best_effort
    assert solution.placement == p1


def test_greedy_expensive_deploy_matches_oracle(mini, mini_spec):
    spec = _with_deploy_cost(mini_spec, 2.0)
    exact = solve_exhaustive(mini.topology, spec)
    greedy = solve_greedy(mini.topology, spec)
    assert greedy.placement.predeploy == frozenset()
    assert _objective(greedy) == _objective(exact)


def test_greedy_never_beats_oracle():
    for seed in range(15):
        topology, spec = random_instance(seed)
        exact = solve_exhaustive(topology, spec)
        greedy = solve_greedy(topology, spec)
        assert not exact.best_effort
        assert not greedy.best_effort
        assert _objective(greedy) >= _objective(exact)


def test_greedy_infeasible_budget(mini, mini_spec):
    solution = solve_greedy(mini.topology, replace(mini_spec, budget=0.01))
    assert solution.best_effort


def test_anneal_finds_mini_optimum(mini, mini_spec):
    cfg = SolverConfig(kind="anneal", seed=42, time_budget_ms=500.0)
    solution = solve_anneal(mini.topology, mini_spec, cfg)
    assert not solution.best_effort
    assert solution.report.mean_latency_ms == pytest.approx(92.0, rel=1e-9)
    assert solution.report.total_cost == pytest.approx(1.9716, rel=1e-9)


def test_anneal_is_deterministic(mini, mini_spec):
    cfg = SolverConfig(kind="anneal", seed=7, time_budget_ms=10_000.0)
    a = solve_anneal(mini.topology, mini_spec, cfg)
    b = solve_anneal(mini.topology, mini_spec, cfg)
    assert a.placement == b.placement
    assert a.report == b.report
    assert a.states_examined == b.states_examined


def test_anneal_solutions_respect_constraints():
    for seed in (3, 11, 27):
        topology, spec = random_instance(seed, max_gateways=10)
        cfg = SolverConfig(kind="anneal", seed=seed, time_budget_ms=800.0)
        solution = solve_anneal(topology, spec, cfg)
        assert not solution.best_effort
        recheck = evaluate(topology, spec, solution.placement)
        assert reports_close(recheck, solution.report)
        assert recheck.feasible
        assert recheck.total_cost <= spec.budget


def test_anneal_never_beats_oracle():
    for seed in (0, 6, 14):
        topology, spec = random_instance(seed)
        exact = solve_exhaustive(topology, spec)
        anneal = solve_anneal(
            topology, spec, SolverConfig(kind="anneal", seed=99, time_budget_ms=600.0)
        )
        assert not anneal.best_effort
        assert _objective(anneal) >= _objective(exact)


def test_solutions_reevaluate_exactly():
    for seed in range(8):
        topology, spec = random_instance(seed)
        for solver in (solve_exhaustive, solve_greedy):
            solution = solver(topology, spec)
            again = evaluate(topology, spec, solution.placement)
            assert again == solution.report


def test_budget_monotonicity():
    for seed in range(6):
        topology, spec = random_instance(seed)
        budgets = [spec.budget * f for f in (0.8, 1.0, 1.5)]
        latencies = []
        for budget in budgets:
            solution = solve_exhaustive(topology, replace(spec, budget=budget))
            if not solution.best_effort:
                latencies.append(solution.report.mean_latency_ms)
        assert latencies == sorted(latencies, reverse=True)


def test_choose_dc_mini(mini, mini_spec):
    assert choose_dc(mini.topology, mini_spec) == "dc1"


def _two_edge_topology(lat1, lat2):
    # Three cameras behind edgeA (weight 3), one behind edgeB (weight 1).
    nodes = [
        Node("camA1", Layer.DEVICE, parent="gwA", location=(0.0, 0.0)),
        Node("camA2", Layer.DEVICE, parent="gwA", location=(1.0, 0.0)),
        Node("camA3", Layer.DEVICE, parent="gwA", location=(2.0, 0.0)),
        Node("camB1", Layer.DEVICE, parent="gwB", location=(50.0, 0.0)),
        Node("gwA", Layer.GATEWAY, parent="edgeA", capacity_cpu=4.0),
        Node("gwB", Layer.GATEWAY, parent="edgeB", capacity_cpu=4.0),
        Node("edgeA", Layer.EDGE, capacity_cpu=8.0),
        Node("edgeB", Layer.EDGE, capacity_cpu=8.0),
        Node("dc1", Layer.CLOUD, capacity_cpu=100.0, cpu_cost_rate=0.2),
        Node("dc2", Layer.CLOUD, capacity_cpu=100.0, cpu_cost_rate=0.2),
    ]
    tree = [
        Link("camA1", "gwA"),
        Link("camA2", "gwA"),
        Link("camA3", "gwA"),
        Link("camB1", "gwB"),
        Link("gwA", "edgeA"),
        Link("gwB", "edgeB"),
    ]
    dc = [
        Link("edgeA", "dc1", latency_ms=lat1[0]),
        Link("edgeB", "dc1", latency_ms=lat1[1]),
        Link("edgeA", "dc2", latency_ms=lat2[0]),
        Link("edgeB", "dc2", latency_ms=lat2[1]),
    ]
    return Topology(nodes, tree, dc)


def test_choose_dc_weighted_edges(mini):
    topology = _two_edge_topology(lat1=(10.0, 50.0), lat2=(30.0, 5.0))
    slots = [
        Slot.explicit(["camA1", "camB1"]),
        Slot.explicit(["camA2"]),
        Slot.explicit(["camA3"]),
    ]
    scenario = Scenario(slot_seconds=3600.0, slots=tuple(slots), source_rate_mbps=4.0)
    spec = ServiceSpec(pipeline=mini.pipeline, scenario=scenario, budget=1000.0)
    # dc1: 3*10 + 1*50 = 80; dc2: 3*30 + 1*5 = 95.
    assert choose_dc(topology, spec) == "dc1"


def test_choose_dc_tie_breaks_by_id(mini):
    topology = _two_edge_topology(lat1=(10.0, 10.0), lat2=(10.0, 10.0))
    scenario = Scenario(
        slot_seconds=3600.0, slots=(Slot.explicit(["camA1"]),), source_rate_mbps=4.0
    )
    spec = ServiceSpec(pipeline=mini.pipeline, scenario=scenario, budget=1000.0)
    assert choose_dc(topology, spec) == "dc1"


def test_choose_predeploy_ample_budget(mini, mini_spec, p3):
    chosen = choose_predeploy(mini.topology, mini_spec, p3, remaining_budget=10.0)
    assert chosen == frozenset({"gw1", "gw2"})


def test_choose_predeploy_zero_benefit(mini, mini_spec, p3):
    stages = list(mini_spec.pipeline.stages)
    stages[0] = replace(stages[0], dispatch_penalty_ms=0.0, deploy_cost=0.5, dispatch_cost=0.01)
    spec = replace(mini_spec, pipeline=replace(mini_spec.pipeline, stages=tuple(stages)))
    assert choose_predeploy(mini.topology, spec, p3, remaining_budget=10.0) == frozenset()


def test_choose_predeploy_free_deploy_takes_all(mini, mini_spec, p3):
    stages = list(mini_spec.pipeline.stages)
    stages[0] = replace(stages[0], deploy_cost=0.0)
    spec = replace(mini_spec, pipeline=replace(mini_spec.pipeline, stages=tuple(stages)))
    assert choose_predeploy(mini.topology, spec, p3, remaining_budget=0.0) == frozenset(
        {"gw1", "gw2"}
    )


def test_choose_predeploy_respects_budget(mini, mini_spec, p3):
    # Each gateway nets 0.05 - 0.02 = 0.03; only one fits in 0.04.
    chosen = choose_predeploy(mini.topology, mini_spec, p3, remaining_budget=0.04)
    assert chosen == frozenset({"gw1"})


def test_compare_runs_all_solvers(mini, mini_spec):
    rows = compare(
        mini.topology,
        mini_spec,
        [
            SolverConfig(kind="exhaustive"),
            SolverConfig(kind="greedy"),
            SolverConfig(kind="anneal", seed=42, time_budget_ms=300.0),
        ],
    )
    assert [row.kind for row in rows] == ["exhaustive", "greedy", "anneal"]
    assert rows[0].optimal and not rows[1].optimal and not rows[2].optimal
    assert all(row.solution is not None for row in rows)


def test_compare_single_config(mini, mini_spec):
    rows = compare(mini.topology, mini_spec, [SolverConfig(kind="greedy")])
    assert len(rows) == 1


def test_compare_infeasible_instance(mini, mini_spec):
    spec = replace(mini_spec, budget=0.01)
    rows = compare(
        mini.topology,
        spec,
        [
            SolverConfig(kind="exhaustive"),
            SolverConfig(kind="greedy"),
            SolverConfig(kind="anneal", seed=1, time_budget_ms=200.0),
        ],
    )
    assert all(row.solution.best_effort for row in rows)
    assert not any(row.optimal for row in rows)


def test_compare_annotates_solver_errors(mini, mini_spec):
    rows = compare(
        mini.topology,
        mini_spec,
        [SolverConfig(kind="exhaustive", max_states=5), SolverConfig(kind="greedy")],
    )
    assert rows[0].solution is None
    assert "search space too large" in rows[0].error
    assert rows[1].solution is not None


def test_no_aggregation_pipeline_end_to_end(mini, mini_spec):
    # K = 1, aggregation index 2: no merged stage, the placement names only
    # a sink DC and the reservation stays 0.
    pipeline = replace(mini_spec.pipeline, stages=(mini_spec.pipeline.stages[0],))
    spec = replace(mini_spec, pipeline=pipeline)
    exact = solve_exhaustive(mini.topology, spec)
    assert exact.placement.agg_node is None
    assert exact.placement.sink_dc == "dc1"
    assert exact.placement.alloc == 0
    assert exact.report.mean_latency_ms == pytest.approx(72.0, rel=1e-9)
    greedy = solve_greedy(mini.topology, spec)
    assert _objective(greedy) == _objective(exact)
    anneal = solve_anneal(
        mini.topology, spec, SolverConfig(kind="anneal", seed=5, time_budget_ms=400.0)
    )
    assert _objective(anneal) == _objective(exact)
    from tierplace import simulate, summarize

    assert summarize(simulate(mini.topology, spec, exact.placement)) == exact.report


def test_exhaustive_and_greedy_are_deterministic(mini, mini_spec):
    a, b = solve_exhaustive(mini.topology, mini_spec), solve_exhaustive(mini.topology, mini_spec)
    assert (a.placement, a.report, a.states_examined) == (b.placement, b.report, b.states_examined)
    c, d = solve_greedy(mini.topology, mini_spec), solve_greedy(mini.topology, mini_spec)
    assert (c.placement, c.report) == (d.placement, d.report)
