import csv

import numpy as np
import pytest

from erpomdp import (
    AlphaPolicy,
    AlphaVector,
    GridSpec,
    build_gridworld,
    default_grid_spec,
    geometric_discount_check,
    linear_cost_vectors,
    monte_carlo,
    run_episode,
    sample_horizon,
    solve,
    SolverConfig,
    validate_model,
)
from erpomdp.harness import (
    DIRECTIONS,
    load_grid_spec,
    save_grid_spec,
    write_criteria_csv,
    write_episode_csv,
)

from helpers import fully_observable_model, random_model


def stay_policy(num_states, stay_action):
    return AlphaPolicy([AlphaVector(np.zeros(num_states), action=stay_action)])


class TestGridSpec:
    def test_wall_symmetry(self):
        spec = GridSpec(width=3, height=3, goal=0, walls={(0, "S")})
        # (0,'S') blocks cell 0 downward and cell 1 upward (column-major)
        assert (0, "S") in spec.walls and (1, "N") in spec.walls
        assert spec.has_wall(0, "S") and spec.has_wall(1, "N")

    def test_boundary_always_blocked(self):
        spec = GridSpec(width=2, height=2, goal=0)
        assert spec.has_wall(0, "N") and spec.has_wall(0, "W")
        assert not spec.has_wall(0, "S") and not spec.has_wall(0, "E")

    def test_invalid_wall_reference(self):
        with pytest.raises(ValueError, match="cell"):
            GridSpec(width=2, height=2, goal=0, walls={(9, "N")})
        with pytest.raises(ValueError, match="direction"):
            GridSpec(width=2, height=2, goal=0, walls={(0, "Q")})

    def test_goal_inside(self):
        with pytest.raises(ValueError, match="goal"):
            GridSpec(width=2, height=2, goal=4)

    def test_file_round_trip(self, tmp_path):
        spec = GridSpec(width=4, height=3, goal=5, walls={(0, "S"), (4, "E")},
                        false_wall_prob=0.3, miss_prob=0.1)
        path = tmp_path / "grid.json"
        save_grid_spec(path, spec)
        loaded = load_grid_spec(path)
        assert loaded.width == 4 and loaded.height == 3 and loaded.goal == 5
        assert loaded.walls == spec.walls
        assert loaded.false_wall_prob == 0.3 and loaded.miss_prob == 0.1


class TestBuildGridworld:
    def test_default_maze_dimensions(self):
        spec = default_grid_spec()
        model = build_gridworld(spec)
        assert model.num_states == 144
        assert model.num_actions == 5
        assert model.num_obs == 16
        validate_model(model)

    def test_enclosed_cell_sees_all_walls(self):
        # box in the center cell of a 3x3 grid
        spec = GridSpec(width=3, height=3, goal=0,
                        walls={(4, d) for d in DIRECTIONS}, miss_prob=0.0)
        model = build_gridworld(spec)
        assert model.initial_observation[4, 15] == pytest.approx(1.0, abs=1e-15)

    def test_open_center_no_detection_probability(self):
        spec = GridSpec(width=5, height=5, goal=0, false_wall_prob=0.2)
        model = build_gridworld(spec)
        center = spec.cell(2, 2)
        assert model.initial_observation[center, 0] == pytest.approx(0.4096, abs=1e-12)

    def test_transitions_are_point_masses_and_walls_block(self):
        spec = default_grid_spec()
        model = build_gridworld(spec)
        for u in range(5):
            row_max = model.transition[u].max(axis=1)
            assert np.all(row_max == 1.0)
        for x in range(model.num_states):
            for u, d in enumerate(DIRECTIONS):
                target = int(np.argmax(model.transition[u, x]))
                if spec.has_wall(x, d):
                    assert target == x
                else:
                    assert target == spec.neighbor(x, d)
            assert int(np.argmax(model.transition[4, x])) == x

    def test_observation_rows_product_form(self):
        spec = default_grid_spec()
        model = build_gridworld(spec)
        assert np.abs(model.observation.sum(axis=2) - 1.0).max() <= 1e-12
        # factorization check on one cell: independent per-direction bits
        x = spec.cell(5, 5)
        detect = np.array([
            1.0 - spec.miss_prob if spec.has_wall(x, d) else spec.false_wall_prob
            for d in DIRECTIONS
        ])
        for y in range(16):
            bits = [(y >> i) & 1 for i in range(4)]
            want = np.prod([d if b else 1 - d for b, d in zip(bits, detect)])
            assert model.initial_observation[x, y] == pytest.approx(want, abs=1e-15)


class TestSampleHorizon:
    def test_mass_at_zero(self):
        rng = np.random.default_rng(0)
        draws = np.array([sample_horizon(0.5, rng) for _ in range(100000)])
        p0 = np.mean(draws == 0)
        sigma = np.sqrt(0.5 * 0.5 / len(draws))
        assert abs(p0 - 0.5) <= 3 * sigma

    def test_mean_high_gamma(self):
        rng = np.random.default_rng(1)
        gamma = 0.99
        draws = rng.geometric(1 - gamma, size=100000) - 1
        se = draws.std(ddof=1) / np.sqrt(len(draws))
        assert abs(draws.mean() - gamma / (1 - gamma)) <= 3 * se

    def test_seed_reproducible(self):
        a = [sample_horizon(0.7, np.random.default_rng(5)) for _ in range(1)]
        b = [sample_horizon(0.7, np.random.default_rng(5)) for _ in range(1)]
        assert a == b

    def test_gamma_range(self):
        with pytest.raises(ValueError):
            sample_horizon(1.0, np.random.default_rng(0))


class TestRunEpisode:
    def test_stay_in_goal_costs_nothing(self):
        spec = GridSpec(width=2, height=2, goal=0)
        model = build_gridworld(spec)
        model.prior = np.zeros(4)
        model.prior[0] = 1.0
        policy = stay_policy(4, stay_action=4)
        record, ledger, cost = run_episode(model, policy, 5, np.random.default_rng(0))
        assert cost == 0.0
        assert all(s == 0 for s in record.states)
        assert ledger.joint_sum == ledger.smoother_sum + ledger.io_sum

    def test_horizon_zero_still_charges_one_step(self):
        rng = np.random.default_rng(2)
        model = fully_observable_model(rng, num_states=3, num_actions=2)
        model.stage_cost = np.ones((3, 2))
        policy = stay_policy(3, stay_action=0)
        record, _ledger, cost = run_episode(model, policy, 0, np.random.default_rng(1))
        assert cost == 1.0
        assert record.horizon == 0
        assert len(record.states) == 1 and len(record.beliefs) == 1

    def test_record_lengths_and_filter_consistency(self):
        rng = np.random.default_rng(3)
        model = random_model(rng, num_states=3, num_actions=2, num_obs=3, costs=True)
        policy = stay_policy(3, stay_action=1)
        record, _l, _c = run_episode(model, policy, 7, np.random.default_rng(4))
        record.check_lengths()
        from erpomdp import filter_update, initial_belief

        belief = initial_belief(model, record.observations[0])
        assert np.array_equal(belief, record.beliefs[0])
        for k in range(7):
            belief = filter_update(model, belief, record.actions[k], record.observations[k + 1])
            assert np.array_equal(belief, record.beliefs[k + 1])


class TestMonteCarlo:
    def test_single_episode_zero_se(self):
        rng = np.random.default_rng(5)
        model = random_model(rng, num_states=2, num_actions=2, num_obs=2, costs=True)
        policy = stay_policy(2, stay_action=0)
        report = monte_carlo(model, policy, episodes=1, horizon=3, seed=9)
        assert report.goal_cost.se == 0.0
        assert report.io_entropy.se == 0.0
        assert report.episodes == 1

    def test_fully_observable_noiseless(self):
        rng = np.random.default_rng(6)
        model = fully_observable_model(rng, num_states=3, num_actions=2, costs=False)
        policy = stay_policy(3, stay_action=0)
        report = monte_carlo(model, policy, episodes=20, horizon=4, seed=10)
        assert report.smoother_entropy.mean == pytest.approx(0.0, abs=1e-12)
        assert report.map_error_prob.mean == 0.0

    def test_seed_determinism(self):
        rng = np.random.default_rng(7)
        model = random_model(rng, num_states=2, num_actions=2, num_obs=2, costs=True)
        policy = stay_policy(2, stay_action=1)
        a = monte_carlo(model, policy, episodes=50, horizon=5, seed=33)
        b = monte_carlo(model, policy, episodes=50, horizon=5, seed=33)
        for name in ("goal_cost", "io_entropy", "smoother_entropy", "joint_entropy"):
            assert getattr(a, name).mean == getattr(b, name).mean
            assert getattr(a, name).se == getattr(b, name).se
        assert np.array_equal(a.per_episode["map_error"], b.per_episode["map_error"])

    def test_geometric_horizon_stats(self):
        rng = np.random.default_rng(8)
        model = random_model(rng, num_states=2, num_actions=2, num_obs=2,
                             discount=0.9, costs=True)
        policy = stay_policy(2, stay_action=0)
        report = monte_carlo(model, policy, episodes=3000, horizon=0, seed=4, geometric=True)
        horizons = report.per_episode["horizon"]
        se = horizons.std(ddof=1) / np.sqrt(len(horizons))
        assert abs(horizons.mean() - 9.0) <= 3 * se


class TestGeometricDiscountCheck:
    def test_one_state_analytic(self):
        from erpomdp import PomdpModel

        model = PomdpModel(
            num_states=1, num_actions=1, num_obs=1,
            transition=[[[1.0]]], observation=[[[1.0]]], initial_observation=[[1.0]],
            prior=[1.0], stage_cost=[[1.0]], terminal_cost=[0.0], discount=0.5,
        )
        policy = stay_policy(1, stay_action=0)
        out = geometric_discount_check(model, policy, truncation=40, episodes=20000, seed=0)
        expected = 0.5 / 0.5  # gamma/(1-gamma)
        assert out.discounted_estimate == pytest.approx(expected, abs=1e-9)
        sigma = np.hypot(out.geometric_se, out.discounted_se)
        assert abs(out.geometric_estimate - expected) <= 3 * sigma

    def test_truncation_bound_scale(self):
        rng = np.random.default_rng(9)
        model = random_model(rng, num_states=2, num_actions=2, num_obs=2,
                             discount=0.5, beta=1.0, lam=1.0, costs=True)
        policy = stay_policy(2, stay_action=0)
        out = geometric_discount_check(model, policy, truncation=40, episodes=100, seed=1)
        from erpomdp.entropy import stage_cost_bound

        assert out.truncation_bound == pytest.approx(
            0.5**40 * stage_cost_bound(model) / 0.5, rel=1e-12
        )

    def test_random_model_agreement(self):
        rng = np.random.default_rng(10)
        model = random_model(rng, num_states=2, num_actions=2, num_obs=2,
                             discount=0.5, beta=0.5, lam=0.5, costs=True)
        policy = AlphaPolicy([
            AlphaVector(np.array([0.0, 1.0]), action=0),
            AlphaVector(np.array([1.0, 0.0]), action=1),
        ])
        out = geometric_discount_check(model, policy, truncation=40, episodes=20000, seed=2)
        sigma = np.hypot(out.geometric_se, out.discounted_se)
        assert abs(out.geometric_estimate - out.discounted_estimate) <= 3 * sigma + out.truncation_bound


class TestCsvWriters:
    def test_criteria_and_episode_files(self, tmp_path):
        rng = np.random.default_rng(11)
        model = random_model(rng, num_states=2, num_actions=2, num_obs=2, costs=True)
        policy = stay_policy(2, stay_action=0)
        report = monte_carlo(model, policy, episodes=3, horizon=2, seed=0)
        cpath = tmp_path / "criteria.csv"
        epath = tmp_path / "episodes.csv"
        write_criteria_csv(cpath, {"base": report}, comment="manifest: m.json")
        write_episode_csv(epath, {"base": report})
        lines = cpath.read_text().splitlines()
        assert lines[0] == "# manifest: m.json"
        rows = list(csv.DictReader(lines[1:]))
        assert len(rows) == 7
        assert {r["criterion"] for r in rows} >= {"goal_cost", "io_entropy", "smoother_entropy"}
        assert all(r["unit"] == "bits" for r in rows if r["criterion"].endswith("entropy"))
        erows = list(csv.reader(epath.read_text().splitlines()))
        assert erows[0] == ["policy", "episode", "metric", "value"]
        assert len(erows) == 1 + 7 * 3
