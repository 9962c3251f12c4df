"""
Tests for the multi-agent RRT* planner and its steering extensions.
"""

import math

import numpy as np
import pytest

from orca_rrt import planner as planner_module
from orca_rrt.environment_resolver import load_environment
from orca_rrt.exceptions import SamplingStarvationError, TreeConsistencyError
from orca_rrt.orca import SimParams, simulate
from orca_rrt.planner import (
    ExtensionKind,
    JointState,
    Planner,
    PlannerParams,
    PlanTree,
    edge_cost,
    extend,
    joint_dist,
    lower_bound_cost,
    near,
    near_radius,
    nearest,
    plan,
    sample,
)
from orca_rrt.traj import AgentSpec, ProblemInstance, Trajectory, check_cf
from orca_rrt.visnav import GraphCache, build, shortest_path


def random_tree(rng, size, agents=2):
    tree = PlanTree(JointState(rng.uniform(0, 1000, size=(agents, 2))))
    for _ in range(size - 1):
        tree.add(JointState(rng.uniform(0, 1000, size=(agents, 2))), 0, (), 0.0)
    return tree


def line_edge(x, y):
    return tuple(Trajectory.line(a, b, 1.0) for a, b in zip(x, y))


class TestJointDist:
    """Test suite for the joint-space metric."""

    def test_identical_states(self):
        """Test that a state is at distance zero from itself."""
        s = JointState(((1, 2), (3, 4)))
        assert joint_dist(s, s) == 0.0

    def test_single_displacement(self):
        """Test one agent displaced by (3, 4)."""
        a = JointState(((0, 0), (10, 10)))
        b = JointState(((3, 4), (10, 10)))
        assert joint_dist(a, b) == pytest.approx(5.0)

    def test_swap(self):
        """Test that swapping two agents ten apart costs twenty."""
        a = JointState(((0, 0), (10, 0)))
        b = JointState(((10, 0), (0, 0)))
        assert joint_dist(a, b) == pytest.approx(20.0)

    def test_size_mismatch(self):
        """Test that states of different sizes are rejected."""
        with pytest.raises(ValueError, match="differ in size"):
            joint_dist(JointState(((0, 0),)), JointState(((0, 0), (1, 1))))

    def test_lower_bound_cost_uses_speeds(self):
        """Test the straight-line travel time bound."""
        a = JointState(((0, 0), (0, 0)))
        b = JointState(((3, 4), (0, 10)))
        assert lower_bound_cost(a, b, [1.0, 2.0]) == pytest.approx(10.0)


class TestNearNeighbours:
    """Test suite for nearest and near vertex queries."""

    def test_near_radius_formula(self):
        """Test the radius for two agents, 100 vertices and gamma 1000."""
        assert near_radius(1000, 100, 2) == pytest.approx(463.3, abs=0.05)

    def test_single_vertex_has_empty_neighbourhood(self):
        """Test that a lone root has no near vertices."""
        tree = PlanTree(JointState(((0, 0),)))
        assert near(tree, JointState(((1, 1),)), 1000) == []
        assert nearest(tree, JointState(((900, 900),))) == 0

    def test_nearest_exact_match(self):
        """Test that an existing vertex state finds that vertex."""
        rng = np.random.default_rng(2)
        tree = random_tree(rng, 50)
        assert nearest(tree, tree[17].state) == 17
        assert tree.find(tree[17].state) == 17

    def test_match_linear_scan(self):
        """Test nearest and near against exhaustive scans on a random tree."""
        rng = np.random.default_rng(8)
        tree = random_tree(rng, 1000)
        gamma = 4000.0
        radius = near_radius(gamma, len(tree), 2)
        for _ in range(20):
            s = JointState(rng.uniform(0, 1000, size=(2, 2)))
            dists = [joint_dist(v.state, s) for v in tree.vertices]
            assert joint_dist(tree[nearest(tree, s)].state, s) == pytest.approx(min(dists))
            expected = sorted((d, k) for k, d in enumerate(dists) if d < radius)
            assert near(tree, s, gamma) == [k for _, k in expected]


class TestSample:
    """Test suite for the joint-state sampler."""

    def test_uniform_mean(self, empty_env):
        """Test that single-agent samples centre on the middle of the world."""
        inst = ProblemInstance(empty_env, (AgentSpec((100, 100), (900, 900), 50),))
        rng = np.random.default_rng(0)
        points = np.array([sample(inst, rng, 0.0)[0] for _ in range(10**5)])
        assert points.min() > 50.0
        assert points.max() < 950.0
        np.testing.assert_allclose(points.mean(axis=0), [500.0, 500.0], rtol=0.01)

    def test_samples_are_valid(self, door_env):
        """Test that every drawn joint state satisfies the state invariants."""
        inst = ProblemInstance(
            door_env,
            (
                AgentSpec((200, 200), (800, 800), 60),
                AgentSpec((800, 200), (200, 800), 60),
                AgentSpec((500, 150), (500, 850), 60),
            ),
        )
        rng = np.random.default_rng(1)
        for _ in range(200):
            assert sample(inst, rng, 0.0).is_valid(inst)

    def test_goal_bias_near_one(self, swap_instance):
        """Test that a bias of 0.999 almost always returns the joint goal."""
        rng = np.random.default_rng(3)
        goal = JointState(swap_instance.goals)
        hits = sum(sample(swap_instance, rng, 0.999) == goal for _ in range(1000))
        assert hits >= 990

    @pytest.mark.parametrize("bias", [1.0, -0.1])
    def test_goal_bias_range(self, swap_instance, bias):
        """Test that the bias must lie in [0, 1)."""
        with pytest.raises(ValueError, match="goal_bias"):
            sample(swap_instance, np.random.default_rng(0), bias)

    def test_starvation(self, empty_env, monkeypatch):
        """Test the diagnostic for agents that barely fit into the world."""
        monkeypatch.setattr(planner_module, "DRAW_REJECTION_LIMIT", 50)
        monkeypatch.setattr(planner_module, "STARVATION_LIMIT", 200)
        crowded = ProblemInstance(
            empty_env,
            (
                AgentSpec((246, 246), (754, 246), 245),
                AgentSpec((754, 246), (246, 754), 245),
                AgentSpec((246, 754), (246, 246), 245),
            ),
        )
        with pytest.raises(SamplingStarvationError) as info:
            sample(crowded, np.random.default_rng(0), 0.0)
        assert info.value.rejections >= 200


class TestExtend:
    """Test suite for the three steering extensions."""

    def test_line_parallel_moves(self, parallel_instance):
        """Test that far-apart parallel moves are accepted."""
        x, y = JointState(parallel_instance.starts), JointState(parallel_instance.goals)
        edge = extend(ExtensionKind.LINE, x, y, parallel_instance)
        assert edge is not None
        assert edge_cost(edge) == pytest.approx(1600.0)

    def test_line_swap_rejected(self, swap_instance):
        """Test that swapping along one segment is a mutual collision."""
        x, y = JointState(swap_instance.starts), JointState(swap_instance.goals)
        assert extend(ExtensionKind.LINE, x, y, swap_instance) is None

    def test_line_through_obstacle_rejected(self, square_env):
        """Test that a straight move through an obstacle is rejected."""
        inst = ProblemInstance(square_env, (AgentSpec((200, 500), (800, 500), 50),))
        x, y = JointState(inst.starts), JointState(inst.goals)
        assert extend(ExtensionKind.LINE, x, y, inst) is None

    def test_vg_goes_around(self, square_env):
        """Test that the visibility-graph extension follows the shortest path."""
        inst = ProblemInstance(square_env, (AgentSpec((200, 500), (800, 500), 50),))
        x, y = JointState(inst.starts), JointState(inst.goals)
        edge = extend(ExtensionKind.VISIBILITY_GRAPH, x, y, inst)
        expected = shortest_path(build(square_env, 50), (200, 500), (800, 500)).length
        assert edge_cost(edge) == pytest.approx(expected)
        assert edge[0].final_point == (800.0, 500.0)

    def test_vg_mutual_collision_rejected(self, swap_instance):
        """Test that straight shortest paths colliding head-on are rejected."""
        x, y = JointState(swap_instance.starts), JointState(swap_instance.goals)
        assert extend(ExtensionKind.VISIBILITY_GRAPH, x, y, swap_instance) is None

    def test_orca_reaches_targets_exactly(self, swap_instance):
        """Test that an accepted ORCA bundle ends exactly in the target state."""
        x, y = JointState(swap_instance.starts), JointState(swap_instance.goals)
        edge = extend(ExtensionKind.ORCA, x, y, swap_instance)
        assert edge is not None
        assert tuple(tr.final_point for tr in edge) == y.positions
        assert check_cf(edge, swap_instance)

    def test_orca_corridor_rejected(self, corridor_swap):
        """Test that ORCA alone cannot swap two agents through a corridor."""
        x, y = JointState(corridor_swap.starts), JointState(corridor_swap.goals)
        assert extend(ExtensionKind.ORCA, x, y, corridor_swap) is None


class TestPlanTree:
    """Test suite for tree bookkeeping."""

    def build_chain(self):
        a = JointState(((100, 100),))
        b = JointState(((200, 100),))
        c = JointState(((300, 100),))
        tree = PlanTree(a)
        i = tree.add(b, 0, line_edge(a, b), 100.0)
        j = tree.add(c, i, line_edge(b, c), 100.0)
        return tree, i, j

    def test_costs_accumulate(self):
        """Test that vertex costs sum the edge costs from the root."""
        tree, _, j = self.build_chain()
        assert tree[j].cost == pytest.approx(200.0)
        assert tree.path_to(j) == [0, 1, 2]
        tree.audit()

    def test_reparent_propagates_costs(self):
        """Test that moving a vertex updates the costs of its subtree."""
        tree, i, j = self.build_chain()
        d = JointState(((200, 300),))
        k = tree.add(d, j, line_edge(tree[j].state, d), math.hypot(100, 200))
        tree.reparent(j, 0, line_edge(tree[0].state, tree[j].state), 200.0)
        assert tree[j].parent == 0
        assert tree[k].cost == pytest.approx(200.0 + math.hypot(100, 200))
        assert j not in tree[i].children
        tree.audit()

    def test_reparent_cycle_rejected(self):
        """Test that a vertex cannot move under its own descendant."""
        tree, i, j = self.build_chain()
        with pytest.raises(TreeConsistencyError, match="cycle"):
            tree.reparent(i, j, line_edge(tree[j].state, tree[i].state), 100.0)

    def test_audit_detects_cost_drift(self):
        """Test that a tampered cost fails the audit."""
        tree, _, j = self.build_chain()
        tree[j].cost += 1.0
        with pytest.raises(TreeConsistencyError, match="cost"):
            tree.audit()

    def test_positions_grow(self):
        """Test that the position buffer grows past its initial capacity."""
        tree = random_tree(np.random.default_rng(0), 200, agents=1)
        assert tree.positions.shape == (200, 1, 2)


class TestPlannerParams:
    """Test suite for planner parameters."""

    def test_from_mapping(self):
        """Test building params from a config mapping."""
        params = PlannerParams.from_mapping({"goal_bias": 0.05, "gamma": None})
        assert params.goal_bias == 0.05
        assert params.gamma is None

    def test_unknown_key(self):
        """Test that unknown keys are reported."""
        with pytest.raises(ValueError, match="max_neer"):
            PlannerParams.from_mapping({"max_neer": 5})

    def test_default_gamma(self, swap_instance):
        """Test the default neighbourhood constant."""
        planner = Planner(swap_instance, ExtensionKind.LINE)
        assert planner.gamma == pytest.approx(2 * math.hypot(1000, 1000) * 2)


class TestPlanner:
    """Test suite for the anytime planning loop."""

    @pytest.mark.parametrize("kind", list(ExtensionKind))
    def test_single_agent_is_optimal_at_once(self, single_agent_instance, kind):
        """Test that one agent in an empty world is solved by the first extension."""
        emissions = list(plan(single_agent_instance, kind, iterations=1))
        assert len(emissions) == 1
        assert emissions[0].iteration == 1
        assert emissions[0].solution.cost == pytest.approx(400.0, rel=1e-6)

    def test_start_equals_goal(self, empty_env):
        """Test that a solved instance emits the zero-cost solution."""
        inst = ProblemInstance(empty_env, (AgentSpec((300, 300), (300, 300), 50),))
        emissions = list(plan(inst, ExtensionKind.LINE, iterations=10))
        assert [e.solution.cost for e in emissions] == [0.0]

    def test_needs_a_limit(self, swap_instance):
        """Test that planning without budget or iteration count is refused."""
        with pytest.raises(ValueError, match="budget"):
            list(plan(swap_instance, ExtensionKind.LINE))

    def test_emissions_strictly_decrease(self, swap_instance):
        """Test anytime monotonicity and CF of every emitted solution."""
        emissions = list(plan(swap_instance, ExtensionKind.LINE, seed=4, iterations=300))
        costs = [e.solution.cost for e in emissions]
        assert all(b < a for a, b in zip(costs, costs[1:]))
        for e in emissions:
            assert check_cf(e.solution.trajectories, swap_instance)

    def test_tree_cost_underestimates_composed_cost(self, parallel_instance):
        """Test that agents waiting for a slower bundle make the solution dearer than the tree."""
        planner = Planner(parallel_instance, ExtensionKind.LINE)
        tree = planner.tree
        middle = JointState.of([(500, 200), (100, 800)])
        first = (Trajectory.line((100, 200), (500, 200), 1.0), Trajectory.stationary((100, 800)))
        second = (Trajectory.line((500, 200), (900, 200), 1.0), Trajectory.line((100, 800), (900, 800), 1.0))
        k = tree.add(middle, 0, first, edge_cost(first))
        planner.goal_index = tree.add(planner.x_goal, k, second, edge_cost(second))
        assert tree[planner.goal_index].cost == pytest.approx(1600.0)
        assert planner.solution().cost == pytest.approx(2000.0)

    def test_tree_stays_consistent(self, swap_instance):
        """Test a full tree audit after every iteration."""
        params = PlannerParams(audit_every=1)
        planner = Planner(swap_instance, ExtensionKind.LINE, params, seed=2)
        list(planner.plan(iterations=150))
        assert planner.iterations == 150
        planner.tree.audit()

    def test_stored_edges_revalidate(self, swap_instance):
        """Test that every stored edge bundle is collision-free on its own."""
        planner = Planner(swap_instance, ExtensionKind.LINE, seed=6)
        list(planner.plan(iterations=150))
        for vertex in planner.tree.vertices[1:]:
            parent = planner.tree[vertex.parent]
            sub = ProblemInstance(
                swap_instance.env,
                tuple(
                    AgentSpec(a, b, agent.radius)
                    for a, b, agent in zip(parent.state, vertex.state, swap_instance.agents)
                ),
            )
            assert check_cf(vertex.edge, sub)

    def test_deterministic_per_seed(self, swap_instance):
        """Test that equal seeds grow identical trees and emissions."""
        runs = []
        for _ in range(2):
            planner = Planner(swap_instance, ExtensionKind.LINE, seed=9)
            costs = [e.solution.cost for e in planner.plan(iterations=120)]
            runs.append((costs, [v.state for v in planner.tree.vertices]))
        assert runs[0] == runs[1]

    def test_first_orca_extension_is_plain_orca(self, swap_instance):
        """Test that the first ORCA-RRT* emission equals a plain ORCA run."""
        graphs = GraphCache(swap_instance.env)
        sim_params = SimParams()
        emission = next(
            plan(swap_instance, ExtensionKind.ORCA, iterations=1, sim_params=sim_params, graphs=graphs)
        )
        outcome = simulate(
            swap_instance, swap_instance.starts, swap_instance.goals, sim_params, graphs
        )
        assert outcome.reached
        assert emission.solution.trajectories == outcome.trajectories

    @pytest.mark.slow
    def test_orca_rrt_solves_corridor_swap(self, corridor_swap):
        """Test that intermediate samples let ORCA-RRT* solve what ORCA cannot."""
        assert not simulate(corridor_swap, corridor_swap.starts, corridor_swap.goals).reached
        graphs = GraphCache(corridor_swap.env)
        solved = 0
        for seed in range(5):
            emissions = list(
                plan(corridor_swap, ExtensionKind.ORCA, budget=5.0, seed=seed, graphs=graphs)
            )
            if emissions:
                solved += 1
                assert check_cf(emissions[-1].solution.trajectories, corridor_swap)
        assert solved >= 4

    @pytest.mark.slow
    def test_orca_rrt_solves_corridor_teams(self, corridor_teams):
        """Test the two-team corridor exchange in at least three of five seeds."""
        assert not simulate(corridor_teams, corridor_teams.starts, corridor_teams.goals).reached
        graphs = GraphCache(corridor_teams.env)
        solved = 0
        for seed in range(5):
            emissions = list(
                plan(corridor_teams, ExtensionKind.ORCA, budget=10.0, seed=seed, graphs=graphs)
            )
            solved += bool(emissions)
        assert solved >= 3

    @pytest.mark.slow
    def test_anytime_costs_improve(self):
        """Test that the final cost never exceeds the first over many seeds."""
        cross = load_environment("cross")
        inst = ProblemInstance(
            cross,
            (
                AgentSpec((200, 500), (800, 500), 50),
                AgentSpec((800, 520), (200, 520), 50),
                AgentSpec((500, 200), (510, 800), 50),
                AgentSpec((520, 800), (500, 200), 50),
            ),
        )
        graphs = GraphCache(cross)
        first, last = [], []
        for seed in range(20):
            emissions = list(plan(inst, ExtensionKind.ORCA, budget=5.0, seed=seed, graphs=graphs))
            costs = [e.solution.cost for e in emissions]
            assert all(b < a for a, b in zip(costs, costs[1:]))
            if costs:
                first.append(costs[0])
                last.append(costs[-1])
        assert first
        assert np.median(last) <= np.median(first)


class TestExtensionParams:
    """Test suite for the simulator settings of intermediate ORCA extensions."""

    def test_defaults_tighten_simulation(self, swap_instance):
        """Test that intermediate extensions use a coarser step and shorter caps."""
        planner = Planner(swap_instance, ExtensionKind.ORCA)
        ext = planner.extension_sim_params
        assert (ext.dt, ext.step_factor, ext.stall_time) == (1.0, 3.0, 50.0)
        assert ext.tau_agent == planner.sim_params.tau_agent

    def test_simulator_caps_are_not_loosened(self, swap_instance):
        """Test that tighter simulator caps win over the extension caps."""
        sim_params = SimParams(step_factor=2.0, stall_time=20.0)
        params = PlannerParams(extension_dt=None)
        planner = Planner(swap_instance, ExtensionKind.ORCA, params, sim_params)
        ext = planner.extension_sim_params
        assert (ext.dt, ext.step_factor, ext.stall_time) == (0.25, 2.0, 20.0)

    @pytest.mark.parametrize(
        "field", ["extension_dt", "extension_step_factor", "extension_stall_time"]
    )
    def test_nonpositive_values(self, field):
        """Test that extension settings must be positive."""
        with pytest.raises(ValueError, match=field):
            PlannerParams(**{field: 0.0})

    def test_root_to_goal_uses_simulator_params(self, swap_instance, monkeypatch):
        """Test which simulator settings each extension receives."""
        seen = []

        def fake_extend(kind, x, y, inst, sim_params, graphs, deadline):
            seen.append(sim_params)
            return None

        monkeypatch.setattr(planner_module, "extend", fake_extend)
        planner = Planner(swap_instance, ExtensionKind.ORCA)
        planner._extend(planner.x_init, planner.x_goal)
        planner._extend(planner.x_goal, planner.x_init)
        assert seen == [planner.sim_params, planner.extension_sim_params]

    def test_rejected_extension_is_not_retried(self, swap_instance, monkeypatch):
        """Test that a rejected pair of states is not simulated again."""
        calls = []

        def fake_extend(kind, x, y, inst, sim_params, graphs, deadline):
            calls.append((x, y))
            return None

        monkeypatch.setattr(planner_module, "extend", fake_extend)
        planner = Planner(swap_instance, ExtensionKind.ORCA)
        for _ in range(3):
            assert planner._extend(planner.x_init, planner.x_goal) is None
        assert calls == [(planner.x_init, planner.x_goal)]
