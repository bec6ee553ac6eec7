"""Point-based value iteration over belief space for minimization belief MDPs.

The stage cost arrives as a min-of-hyperplanes set per action (a single
hyperplane in the linear case), so every backup manipulates vectors only:

    beta_b(x) = a*_u(x) + g * sum_y sum_x' B[u,x',y] A[u,x,x'] a_y(x')

with ``a*_u`` the cost plane minimizing ``<b, .>`` for action ``u``, ``a_y``
the value vector minimizing the back-projected inner product at ``b``, and
``u`` chosen to minimize ``<b, beta_b>``.  Ties break on the lowest index
everywhere so runs are reproducible bit for bit.

The value function is represented as the minimum over a vector set,
initialized at zero, which is a valid lower bound once the cost planes are
shifted to have nonnegative components (the shift is recorded and removed
from the final vectors).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .entropy import AlphaVector, PwlcApproximation, load_alpha_vectors, save_alpha_vectors
from .errors import ErpomdpError
from .model import PomdpModel, initial_belief

DEDUP_L1_TOL = 1e-9

__all__ = [
    "SolverConfig",
    "AlphaPolicy",
    "expand_beliefs",
    "bellman_backup",
    "solve",
    "policy_action",
    "save_policy",
    "load_policy",
]


@dataclass
class SolverConfig:
    belief_set_size: int = 200
    expansion_rounds: int = 30
    bellman_residual_tol: float = 1e-6
    max_iterations: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.bellman_residual_tol <= 0.0:
            raise ValueError("bellman_residual_tol must be positive")
        if self.belief_set_size < 1 or self.max_iterations < 1:
            raise ValueError("belief_set_size and max_iterations must be >= 1")
        if self.expansion_rounds < 0:
            raise ValueError("expansion_rounds must be >= 0")

    def to_dict(self) -> dict:
        return {
            "belief_set_size": self.belief_set_size,
            "expansion_rounds": self.expansion_rounds,
            "bellman_residual_tol": self.bellman_residual_tol,
            "max_iterations": self.max_iterations,
            "seed": self.seed,
        }


@dataclass
class AlphaPolicy:
    """A value function / policy as the min over hyperplanes with attached actions."""

    vectors: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.vectors:
            raise ValueError("AlphaPolicy needs at least one vector")
        self._weights = np.stack([av.weights for av in self.vectors])
        if not np.all(np.isfinite(self._weights)):
            raise ValueError("non-finite alpha-vector weights")
        self._actions = np.array([av.action for av in self.vectors], dtype=np.int64)

    @property
    def weight_matrix(self) -> np.ndarray:
        return self._weights

    @property
    def action_array(self) -> np.ndarray:
        return self._actions

    def value(self, belief: np.ndarray) -> float:
        return float((self._weights @ belief).min())

    def value_batch(self, beliefs: np.ndarray) -> np.ndarray:
        return (beliefs @ self._weights.T).min(axis=1)


def policy_action(policy: AlphaPolicy, belief: np.ndarray) -> int:
    """Action of the minimizing vector; exact ties go to the lowest action index."""
    values = policy.weight_matrix @ belief
    mask = values == values.min()
    return int(policy.action_array[mask].min())


def _policy_actions_batch(policy: AlphaPolicy, beliefs: np.ndarray) -> np.ndarray:
    values = beliefs @ policy.weight_matrix.T
    mins = values.min(axis=1, keepdims=True)
    masked = np.where(values == mins, policy.action_array[None, :], np.iinfo(np.int64).max)
    return masked.min(axis=1)


def _dedup_add(pool: list, candidate: np.ndarray) -> bool:
    """Append candidate unless an existing belief is within DEDUP_L1_TOL in L1."""
    if pool:
        dists = np.abs(np.stack(pool) - candidate[None, :]).sum(axis=1)
        if float(dists.min()) < DEDUP_L1_TOL:
            return False
    pool.append(candidate)
    return True


def expand_beliefs(model: PomdpModel, seeds, config: SolverConfig) -> np.ndarray:
    """Grow a belief set by simulating random actions/observations through the filter.

    Returns the (deduplicated) seeds plus reachable beliefs, capped at
    ``config.belief_set_size``; the result depends only on the seed.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=np.float64))
    if seeds.shape[0] == 0:
        raise ValueError("need at least one seed belief")
    rng = np.random.default_rng(config.seed)
    pool: list = []
    for s in seeds:
        if len(pool) >= config.belief_set_size:
            break
        _dedup_add(pool, s)
    for _ in range(config.expansion_rounds):
        if len(pool) >= config.belief_set_size:
            break
        for i in range(len(pool)):
            if len(pool) >= config.belief_set_size:
                break
            b = pool[i]
            u = int(rng.integers(model.num_actions))
            pred = (b @ model.transition[u]) @ model.observation[u]
            y = int(rng.choice(model.num_obs, p=pred))
            nxt = (b @ model.transition[u]) * model.observation[u][:, y]
            z = nxt.sum()
            if z <= 0.0:
                continue
            _dedup_add(pool, nxt / z)
    return np.stack(pool)


def _stack_cost_planes(model: PomdpModel, cost_planes) -> list:
    """Normalize the cost-plane argument to one weight matrix per action."""
    if isinstance(cost_planes, PwlcApproximation):
        return [cost_planes.plane_matrix(u).copy() for u in range(model.num_actions)]
    cost_planes = list(cost_planes)
    if cost_planes and isinstance(cost_planes[0], AlphaVector):
        grouped = [[] for _ in range(model.num_actions)]
        for av in cost_planes:
            grouped[av.action].append(av.weights)
    else:
        grouped = [[av.weights for av in per_action] for per_action in cost_planes]
    if any(len(g) == 0 for g in grouped):
        raise ErpomdpError("every action needs at least one cost plane")
    return [np.stack(g) for g in grouped]


def _backup_batch(model: PomdpModel, plane_stacks: list, value_W: np.ndarray, beliefs: np.ndarray):
    """Backup every belief in one sweep; returns (vectors, actions) arrays.

    The scalar :func:`bellman_backup` runs through this same kernel with a
    one-row batch, so batched and per-belief results are bit-identical.
    """
    g = model.discount
    nb = beliefs.shape[0]
    best_vals = np.full(nb, np.inf)
    best_W = np.zeros((nb, model.num_states))
    best_u = np.zeros(nb, dtype=np.int64)
    for u in range(model.num_actions):
        cost_vals = beliefs @ plane_stacks[u].T
        acc = plane_stacks[u][cost_vals.argmin(axis=1)].copy()
        for y in range(model.num_obs):
            M = model.transition[u] * model.observation[u][:, y][None, :]
            projected = value_W @ M.T  # row a = M @ value_W[a]
            choice = (beliefs @ projected.T).argmin(axis=1)
            acc += g * projected[choice]
        u_vals = np.einsum("bx,bx->b", beliefs, acc)
        better = u_vals < best_vals
        best_vals[better] = u_vals[better]
        best_W[better] = acc[better]
        best_u[better] = u
    return best_W, best_u


def bellman_backup(model: PomdpModel, cost_planes, value: AlphaPolicy, belief: np.ndarray) -> AlphaVector:
    """One-point Bellman backup; ``<belief, result>`` equals the Bellman minimum."""
    stacks = _stack_cost_planes(model, cost_planes)
    W, actions = _backup_batch(model, stacks, value.weight_matrix, np.atleast_2d(belief))
    return AlphaVector(W[0], action=int(actions[0]), tag="backup")


def solve(model: PomdpModel, cost_planes, config: SolverConfig, extra_seeds=None) -> AlphaPolicy:
    """Run point-based value iteration until the Bellman residual over the
    belief set drops below tolerance or the iteration cap is hit.

    Non-convergence is reported in the metadata, not raised.  The belief set
    is seeded with the initial beliefs of every possible first observation
    (plus any ``extra_seeds``) and expanded by random reachable sampling.
    """
    t0 = time.perf_counter()
    stacks = _stack_cost_planes(model, cost_planes)

    # Shift costs so the zero vector is a valid lower bound; removed at the end.
    low = min(float(S.min()) for S in stacks)
    shift = -low if low < 0.0 else 0.0
    if shift > 0.0:
        stacks = [S + shift for S in stacks]

    p_y0 = model.prior @ model.initial_observation
    seeds = [initial_belief(model, y0) for y0 in range(model.num_obs) if p_y0[y0] > 0.0]
    if extra_seeds is not None:
        seeds.extend(np.atleast_2d(np.asarray(extra_seeds, dtype=np.float64)))
    beliefs = expand_beliefs(model, np.stack(seeds), config)

    value_W = np.zeros((1, model.num_states))
    value_actions = np.zeros(1, dtype=np.int64)
    old_vals = np.zeros(beliefs.shape[0])
    residual_history = []
    min_increment = np.inf
    iterations = 0
    residual = np.inf
    for iterations in range(1, config.max_iterations + 1):
        new_W, new_actions = _backup_batch(model, stacks, value_W, beliefs)
        all_vals = beliefs @ new_W.T
        keep = np.unique(all_vals.argmin(axis=1))
        value_W = new_W[keep]
        value_actions = new_actions[keep]
        new_vals = (beliefs @ value_W.T).min(axis=1)
        increments = new_vals - old_vals
        min_increment = min(min_increment, float(increments.min()))
        residual = float(np.abs(increments).max())
        residual_history.append(residual)
        old_vals = new_vals
        if residual <= config.bellman_residual_tol:
            break

    if shift > 0.0:
        value_W = value_W - shift / (1.0 - model.discount)

    converged = residual <= config.bellman_residual_tol
    vectors = [
        AlphaVector(value_W[i], action=int(value_actions[i]), tag=f"b{int(k)}")
        for i, k in enumerate(keep)
    ]
    metadata = {
        "config": config.to_dict(),
        "iterations": iterations,
        "residual": residual,
        "converged": converged,
        "belief_count": int(beliefs.shape[0]),
        "vector_count": len(vectors),
        "cost_shift": shift,
        "min_value_increment": min_increment,
        "residual_history": residual_history,
        "solve_time_seconds": time.perf_counter() - t0,
    }
    return AlphaPolicy(vectors=vectors, metadata=metadata)


# ---------------------------------------------------------------------------
# Policy files: alpha-vector format plus one '#'-prefixed JSON metadata line
# ---------------------------------------------------------------------------


def save_policy(path, policy: AlphaPolicy) -> None:
    meta = dict(policy.metadata)
    meta.pop("residual_history", None)  # keep the header a single line
    save_alpha_vectors(path, policy.vectors, comments=[json.dumps(meta, sort_keys=True)])


def load_policy(path) -> AlphaPolicy:
    metadata = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                try:
                    metadata = json.loads(line[1:].strip())
                except json.JSONDecodeError:
                    continue
                break
    vectors = load_alpha_vectors(path)
    return AlphaPolicy(vectors=vectors, metadata=metadata)
