"""Experiment orchestration: grid-world construction, episode simulation,
Monte Carlo criteria aggregation, and the geometric/discounted cost check.

Grid cells are enumerated top-to-bottom within a column, columns left to
right, so ``cell = col * height + row`` with row 0 at the top; the
bottom-right cell is the last index.  Movement actions are N, S, E, W, stay
(indices 0..4), all deterministic, with blocked moves leaving the agent in
place.  The wall sensor reports one bit per compass direction
(observation = sum of bit<<dir over N,S,E,W): a present wall is detected
with probability ``1 - miss_prob``, an absent one is falsely detected with
probability ``false_wall_prob``, independently across directions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .entropy import (
    _belief_entropy_batch,
    _obs_entropy_term_batch,
    _smoother_increment_batch,
    _stage_cost_G_batch,
    stage_cost_bound,
)
from .estimation import EntropyLedger, accumulate_ledger, viterbi_map
from .model import (
    PomdpModel,
    TrajectoryRecord,
    _categorical_rows,
    _filter_update_batch,
    filter_update,
    initial_belief,
    sample_step,
    validate_model,
)
from .solver import AlphaPolicy, _policy_actions_batch, policy_action

DIRECTIONS = ("N", "S", "E", "W")
_DIR_OFFSETS = {"N": (0, -1), "S": (0, 1), "E": (1, 0), "W": (-1, 0)}
_OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}

__all__ = [
    "GridSpec",
    "CriteriaReport",
    "Stat",
    "GeometricCheck",
    "build_gridworld",
    "default_grid_spec",
    "load_grid_spec",
    "save_grid_spec",
    "sample_horizon",
    "run_episode",
    "monte_carlo",
    "geometric_discount_check",
    "write_criteria_csv",
    "write_episode_csv",
]


@dataclass
class GridSpec:
    """Maze geometry and sensor parameters.

    ``walls`` holds (cell, direction) pairs for internal walls; the outer
    boundary always blocks and need not be listed.  The set is symmetrized
    on construction so an edge blocks both ways.
    """

    width: int
    height: int
    goal: int
    walls: set = field(default_factory=set)
    false_wall_prob: float = 0.2
    miss_prob: float = 0.0

    def __post_init__(self):
        n = self.width * self.height
        if not (0 <= self.goal < n):
            raise ValueError(f"goal cell {self.goal} outside grid of {n} cells")
        if not (0.0 <= self.false_wall_prob <= 1.0 and 0.0 <= self.miss_prob <= 1.0):
            raise ValueError("sensor probabilities must lie in [0, 1]")
        normalized = set()
        for cell, d in self.walls:
            cell = int(cell)
            if d not in DIRECTIONS:
                raise ValueError(f"invalid wall direction {d!r}")
            if not (0 <= cell < n):
                raise ValueError(f"wall references cell {cell} outside grid of {n} cells")
            normalized.add((cell, d))
            nbr = self.neighbor(cell, d)
            if nbr is not None:
                normalized.add((nbr, _OPPOSITE[d]))
        self.walls = normalized

    def cell(self, col: int, row: int) -> int:
        return col * self.height + row

    def col_row(self, cell: int):
        return divmod(cell, self.height)

    def neighbor(self, cell: int, d: str):
        """Adjacent cell in direction d, or None at the grid edge."""
        col, row = self.col_row(cell)
        dc, dr = _DIR_OFFSETS[d]
        col, row = col + dc, row + dr
        if 0 <= col < self.width and 0 <= row < self.height:
            return self.cell(col, row)
        return None

    def has_wall(self, cell: int, d: str) -> bool:
        return self.neighbor(cell, d) is None or (cell, d) in self.walls


def build_gridworld(spec: GridSpec, discount: float = 0.99, beta: float = 0.0, lam: float = 0.0) -> PomdpModel:
    """Tabular model of the maze: deterministic moves, 4-bit wall sensor,
    uniform start, unit cost off the goal cell."""
    n = spec.width * spec.height
    num_actions = len(DIRECTIONS) + 1  # N, S, E, W, stay
    num_obs = 2 ** len(DIRECTIONS)

    transition = np.zeros((num_actions, n, n))
    for x in range(n):
        for u, d in enumerate(DIRECTIONS):
            nbr = spec.neighbor(x, d)
            target = x if (nbr is None or spec.has_wall(x, d)) else nbr
            transition[u, x, target] = 1.0
        transition[num_actions - 1, x, x] = 1.0

    sensor = np.zeros((n, num_obs))
    for x in range(n):
        detect = np.array(
            [
                1.0 - spec.miss_prob if spec.has_wall(x, d) else spec.false_wall_prob
                for d in DIRECTIONS
            ]
        )
        for y in range(num_obs):
            bits = [(y >> i) & 1 for i in range(len(DIRECTIONS))]
            sensor[x, y] = np.prod([d if b else 1.0 - d for b, d in zip(bits, detect)])

    cost = np.ones((n, num_actions))
    cost[spec.goal, :] = 0.0

    model = PomdpModel(
        num_states=n,
        num_actions=num_actions,
        num_obs=num_obs,
        transition=transition,
        observation=np.tile(sensor[None, :, :], (num_actions, 1, 1)),
        initial_observation=sensor.copy(),
        prior=np.full(n, 1.0 / n),
        stage_cost=cost,
        terminal_cost=np.zeros(n),
        discount=discount,
        beta=beta,
        lam=lam,
    )
    validate_model(model)
    return model


# ---------------------------------------------------------------------------
# Grid spec files
# ---------------------------------------------------------------------------


def save_grid_spec(path, spec: GridSpec) -> None:
    doc = {
        "width": spec.width,
        "height": spec.height,
        "goal": spec.goal,
        "walls": sorted([cell, d] for cell, d in spec.walls),
        "false_wall_prob": spec.false_wall_prob,
        "miss_prob": spec.miss_prob,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_grid_spec(path) -> GridSpec:
    doc = json.loads(Path(path).read_text())
    return GridSpec(
        width=int(doc["width"]),
        height=int(doc["height"]),
        goal=int(doc["goal"]),
        walls={(int(c), str(d)) for c, d in doc.get("walls", [])},
        false_wall_prob=float(doc.get("false_wall_prob", 0.2)),
        miss_prob=float(doc.get("miss_prob", 0.0)),
    )


def default_grid_spec() -> GridSpec:
    """The 12x12 maze shipped with the package."""
    with resources.files("erpomdp.data").joinpath("default_maze.json").open() as fh:
        doc = json.load(fh)
    return GridSpec(
        width=int(doc["width"]),
        height=int(doc["height"]),
        goal=int(doc["goal"]),
        walls={(int(c), str(d)) for c, d in doc.get("walls", [])},
        false_wall_prob=float(doc.get("false_wall_prob", 0.2)),
        miss_prob=float(doc.get("miss_prob", 0.0)),
    )


# ---------------------------------------------------------------------------
# Episode simulation
# ---------------------------------------------------------------------------


def sample_horizon(gamma: float, rng: np.random.Generator) -> int:
    """Geometric horizon with P(T = 0) = 1 - gamma and mean gamma/(1 - gamma)."""
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma {gamma!r} out of (0,1)")
    return int(rng.geometric(1.0 - gamma)) - 1


def run_episode(model: PomdpModel, policy: AlphaPolicy, horizon: int, rng: np.random.Generator):
    """Simulate one episode of the policy through the filter.

    Returns (record, ledger, undiscounted cost).  The cost sums the stage
    cost over steps 0..horizon inclusive, querying the policy once more at
    the final belief (that last action is not executed or recorded).
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    x = int(rng.choice(model.num_states, p=model.prior))
    y = int(rng.choice(model.num_obs, p=model.initial_observation[x]))
    pi = initial_belief(model, y)
    record = TrajectoryRecord(states=[x], observations=[y], actions=[], beliefs=[pi])
    cost = 0.0
    for k in range(horizon + 1):
        u = policy_action(policy, pi)
        cost += float(model.stage_cost[x, u])
        if k == horizon:
            break
        x, y = sample_step(model, x, u, rng)
        pi = filter_update(model, pi, u, y)
        record.actions.append(u)
        record.states.append(x)
        record.observations.append(y)
        record.beliefs.append(pi)
    ledger = accumulate_ledger(model, record)
    return record, ledger, cost


@dataclass
class Stat:
    mean: float
    se: float


@dataclass
class CriteriaReport:
    """Monte Carlo means with standard errors for the evaluation criteria.

    Entropy fields are in bits.  ``per_episode`` keeps the raw per-episode
    values for long-format output.
    """

    goal_cost: Stat
    io_entropy: Stat
    smoother_entropy: Stat
    joint_entropy: Stat
    belief_entropy_sum: Stat
    map_error_prob: Stat
    solve_time_seconds: Stat
    episodes: int
    per_episode: dict = field(default_factory=dict, repr=False)

    FIELDS = (
        "goal_cost",
        "io_entropy",
        "smoother_entropy",
        "joint_entropy",
        "belief_entropy_sum",
        "map_error_prob",
        "solve_time_seconds",
    )
    UNITS = {
        "goal_cost": "cost",
        "io_entropy": "bits",
        "smoother_entropy": "bits",
        "joint_entropy": "bits",
        "belief_entropy_sum": "bits",
        "map_error_prob": "probability",
        "solve_time_seconds": "seconds",
    }


def _stat(values: np.ndarray) -> Stat:
    n = len(values)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Stat(mean, se)


def monte_carlo(
    model: PomdpModel,
    policy: AlphaPolicy,
    episodes: int,
    horizon: int,
    seed: int,
    geometric: bool = False,
) -> CriteriaReport:
    """Aggregate run_episode plus the whole-trajectory MAP error indicator.

    Each episode owns a child random stream derived from (seed, index), so
    the report is reproducible and independent of evaluation order.  With
    ``geometric=True`` the horizon is redrawn per episode from the model's
    discount parameter.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(episodes)
    cols = {
        "goal_cost": np.zeros(episodes),
        "io_entropy": np.zeros(episodes),
        "smoother_entropy": np.zeros(episodes),
        "joint_entropy": np.zeros(episodes),
        "belief_entropy_sum": np.zeros(episodes),
        "map_error": np.zeros(episodes),
        "horizon": np.zeros(episodes, dtype=np.int64),
    }
    for i in range(episodes):
        rng = np.random.default_rng(streams[i])
        T = sample_horizon(model.discount, rng) if geometric else horizon
        record, ledger, cost = run_episode(model, policy, T, rng)
        if ledger.joint_sum != ledger.smoother_sum + ledger.io_sum:
            raise AssertionError("per-episode ledger decomposition violated")
        decoded = viterbi_map(model, record.observations, record.actions)
        cols["goal_cost"][i] = cost
        cols["io_entropy"][i] = ledger.io_sum
        cols["smoother_entropy"][i] = ledger.smoother_sum
        cols["joint_entropy"][i] = ledger.joint_sum
        cols["belief_entropy_sum"][i] = ledger.belief_entropy_sum
        cols["map_error"][i] = 0.0 if decoded == record.states else 1.0
        cols["horizon"][i] = T
    return CriteriaReport(
        goal_cost=_stat(cols["goal_cost"]),
        io_entropy=_stat(cols["io_entropy"]),
        smoother_entropy=_stat(cols["smoother_entropy"]),
        joint_entropy=_stat(cols["joint_entropy"]),
        belief_entropy_sum=_stat(cols["belief_entropy_sum"]),
        map_error_prob=_stat(cols["map_error"]),
        solve_time_seconds=Stat(float(policy.metadata.get("solve_time_seconds", 0.0)), 0.0),
        episodes=episodes,
        per_episode=cols,
    )


# ---------------------------------------------------------------------------
# Geometric-horizon vs discounted accumulation
# ---------------------------------------------------------------------------


@dataclass
class GeometricCheck:
    geometric_estimate: float
    geometric_se: float
    discounted_estimate: float
    discounted_se: float
    truncation_bound: float


def _initial_batch(model: PomdpModel, rng: np.random.Generator, n: int):
    xs = _categorical_rows(np.tile(model.prior, (n, 1)), rng)
    ys = _categorical_rows(model.initial_observation[xs], rng)
    beliefs = model.prior[None, :] * model.initial_observation[:, ys].T
    beliefs /= beliefs.sum(axis=1, keepdims=True)
    return xs, ys, beliefs


def _step_batch(model: PomdpModel, xs, beliefs, us, rng):
    nxt = np.empty_like(xs)
    ys = np.empty_like(xs)
    for u in range(model.num_actions):
        sel = np.flatnonzero(us == u)
        if sel.size == 0:
            continue
        nxt[sel] = _categorical_rows(model.transition[u][xs[sel]], rng)
        ys[sel] = _categorical_rows(model.observation[u][nxt[sel]], rng)
    return nxt, ys, _filter_update_batch(model, beliefs, us, ys)


def _undiscounted_stage_batch(model: PomdpModel, beliefs, us) -> np.ndarray:
    """Per-row c + beta*pair-increment + lambda*observation-entropy (no discount weights)."""
    out = np.zeros(beliefs.shape[0])
    for u in range(model.num_actions):
        sel = np.flatnonzero(us == u)
        if sel.size == 0:
            continue
        rows = beliefs[sel]
        val = rows @ model.stage_cost[:, u]
        if model.beta > 0.0:
            val = val + model.beta * _smoother_increment_batch(model, rows, u)
        if model.lam > 0.0:
            val = val + model.lam * _obs_entropy_term_batch(model, rows, u)
        out[sel] = val
    return out


def geometric_discount_check(
    model: PomdpModel,
    policy: AlphaPolicy,
    truncation: int,
    episodes: int,
    seed: int,
) -> GeometricCheck:
    """Estimate the total cost two ways: accumulate the undiscounted stage
    forms over a sampled geometric horizon, and accumulate the discounted
    stage cost over a truncated infinite horizon.  The two means agree up to
    Monte Carlo noise plus the reported truncation bound.
    """
    g = model.discount
    ss = np.random.SeedSequence(seed).spawn(2)

    # Geometric-horizon accumulation.
    rng = np.random.default_rng(ss[0])
    Ts = rng.geometric(1.0 - g, size=episodes) - 1
    xs, _ys, beliefs = _initial_batch(model, rng, episodes)
    totals_geo = np.zeros(episodes)
    for k in range(int(Ts.max()) + 1):
        terminal = Ts == k
        if np.any(terminal):
            rows = beliefs[terminal]
            term = rows @ model.terminal_cost
            if model.beta > 0.0:
                term = term + model.beta * _belief_entropy_batch(rows)
            totals_geo[terminal] += term
        active = np.flatnonzero(Ts > k)
        if active.size == 0:
            break
        us = _policy_actions_batch(policy, beliefs[active])
        totals_geo[active] += _undiscounted_stage_batch(model, beliefs[active], us)
        nxt, ys, new_beliefs = _step_batch(model, xs[active], beliefs[active], us, rng)
        xs[active] = nxt
        beliefs[active] = new_beliefs

    # Truncated discounted accumulation (independent episodes).
    rng = np.random.default_rng(ss[1])
    xs, _ys, beliefs = _initial_batch(model, rng, episodes)
    totals_disc = np.zeros(episodes)
    for k in range(truncation):
        us = _policy_actions_batch(policy, beliefs)
        stage = np.zeros(episodes)
        for u in range(model.num_actions):
            sel = np.flatnonzero(us == u)
            if sel.size:
                stage[sel] = _stage_cost_G_batch(model, beliefs[sel], u)
        totals_disc += (g**k) * stage
        xs, ys, beliefs = _step_batch(model, xs, beliefs, us, rng)

    bound = (g**truncation) * stage_cost_bound(model) / (1.0 - g)
    return GeometricCheck(
        geometric_estimate=float(totals_geo.mean()),
        geometric_se=_stat(totals_geo).se,
        discounted_estimate=float(totals_disc.mean()),
        discounted_se=_stat(totals_disc).se,
        truncation_bound=float(bound),
    )


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------


def write_criteria_csv(path, reports: dict, comment: str | None = None) -> None:
    """One row per (policy label, criterion): mean, standard error, unit."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["policy", "criterion", "mean", "stderr", "unit"])
        for label, report in reports.items():
            for name in CriteriaReport.FIELDS:
                stat = getattr(report, name)
                writer.writerow(
                    [label, name, format(stat.mean, ".17g"), format(stat.se, ".17g"),
                     CriteriaReport.UNITS[name]]
                )


def write_episode_csv(path, reports: dict, comment: str | None = None) -> None:
    """Long format for plotting: one row per (policy, episode, metric)."""
    metrics = (
        "goal_cost",
        "io_entropy",
        "smoother_entropy",
        "joint_entropy",
        "belief_entropy_sum",
        "map_error",
        "horizon",
    )
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["policy", "episode", "metric", "value"])
        for label, report in reports.items():
            for name in metrics:
                values = report.per_episode.get(name)
                if values is None:
                    continue
                for i, v in enumerate(values):
                    writer.writerow([label, i, name, format(float(v), ".17g")])
