"""Offline trajectory estimation and entropy accounting.

Two complementary tools live here:

* Per-episode accounting (:func:`accumulate_ledger`, :func:`viterbi_map`)
  that turns a realized trajectory into the entropy quantities of interest
  and the most probable state sequence.

* An exponential-time oracle (:func:`brute_force_entropies`) that enumerates
  the full joint pmf of a small instance and computes every entropy exactly,
  plus :func:`expected_belief_sums`, the filter-based accumulation whose
  expectation must match the oracle.  The oracle touches only the raw
  kernels, never the filter, so the two routes are independent checks of
  each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .entropy import belief_entropy, entropy_bits, joint_stage_cost, obs_entropy_term, smoother_increment
from .errors import TooLarge, ZeroLikelihood
from .model import (
    PomdpModel,
    TrajectoryRecord,
    filter_update,
    initial_belief,
)

ATOM_GUARD = 10_000_000

__all__ = [
    "EntropyLedger",
    "ExactEntropies",
    "PolicyTable",
    "viterbi_map",
    "initial_obs_entropy",
    "accumulate_ledger",
    "brute_force_entropies",
    "expected_belief_sums",
    "identity_residuals",
]


@dataclass
class EntropyLedger:
    """Accumulated entropy terms of one episode (all in bits).

    ``joint_sum`` is constructed as ``smoother_sum + io_sum`` exactly, which
    is the decomposition the toolkit relies on everywhere.
    """

    smoother_sum: float
    io_sum: float
    belief_entropy_sum: float
    joint_sum: float

    def __post_init__(self):
        if self.joint_sum != self.smoother_sum + self.io_sum:
            raise ValueError("joint_sum must equal smoother_sum + io_sum exactly")


def initial_obs_entropy(model: PomdpModel) -> float:
    """Entropy of the very first observation's marginal distribution."""
    return entropy_bits(model.prior @ model.initial_observation)


def viterbi_map(model: PomdpModel, observations, actions) -> list:
    """Most probable state sequence given observations and applied actions.

    Log-domain dynamic program with -inf for impossible transitions; ties
    break to the lowest state index at every step.
    """
    observations = list(observations)
    actions = list(actions)
    T = len(observations) - 1
    if len(actions) != T:
        raise ValueError(f"got {len(actions)} actions for {T + 1} observations; expected {T}")
    with np.errstate(divide="ignore"):
        delta = np.log(model.prior) + np.log(model.initial_observation[:, observations[0]])
        if not np.isfinite(delta.max()):
            raise ZeroLikelihood("initial observation impossible under the prior")
        back = []
        for k in range(T):
            u, y = actions[k], observations[k + 1]
            scores = delta[:, None] + np.log(model.transition[u])
            back.append(scores.argmax(axis=0))
            delta = scores.max(axis=0) + np.log(model.observation[u][:, y])
            if not np.isfinite(delta.max()):
                raise ZeroLikelihood(f"observation sequence impossible at step {k + 1}")
    path = [int(delta.argmax())]
    for ptr in reversed(back):
        path.append(int(ptr[path[-1]]))
    return path[::-1]


def accumulate_ledger(model: PomdpModel, record: TrajectoryRecord) -> EntropyLedger:
    """Entropy ledger of one filtered trajectory.

    ``smoother_sum`` is the terminal belief entropy plus the per-step pair
    increments; ``io_sum`` is the first-observation entropy plus the
    per-step predictive observation entropies.
    """
    record.check_lengths()
    T = record.horizon
    smoother = belief_entropy(record.beliefs[T])
    io = initial_obs_entropy(model)
    belief_sum = 0.0
    for k in range(T):
        smoother += smoother_increment(model, record.beliefs[k], record.actions[k])
        io += obs_entropy_term(model, record.beliefs[k], record.actions[k])
        belief_sum += belief_entropy(record.beliefs[k])
    belief_sum += belief_entropy(record.beliefs[T])
    return EntropyLedger(
        smoother_sum=smoother,
        io_sum=io,
        belief_entropy_sum=belief_sum,
        joint_sum=smoother + io,
    )


# ---------------------------------------------------------------------------
# Explicit policy tables over information states (for the exact oracle)
# ---------------------------------------------------------------------------


class PolicyTable:
    """Stochastic policy given as one conditional table per time step.

    ``tables[k]`` has shape (N_y,)*(k+1) + (N_u,)*k + (N_u,) and holds
    P(U_k = u | y_0..y_k, u_0..u_{k-1}) in its last axis.
    """

    def __init__(self, num_obs: int, num_actions: int, tables: list):
        self.num_obs = num_obs
        self.num_actions = num_actions
        self.tables = [np.asarray(t, dtype=np.float64) for t in tables]
        for k, t in enumerate(self.tables):
            want = (num_obs,) * (k + 1) + (num_actions,) * (k + 1)
            if t.shape != want:
                raise ValueError(f"policy table {k}: shape {t.shape} != expected {want}")
            if not np.allclose(t.sum(axis=-1), 1.0, atol=1e-9):
                raise ValueError(f"policy table {k}: rows do not sum to 1")

    @property
    def horizon(self) -> int:
        return len(self.tables)

    def pmf(self, ys, us) -> np.ndarray:
        return self.tables[len(us)][tuple(ys) + tuple(us)]

    @classmethod
    def random_stochastic(cls, num_obs, num_actions, horizon, rng) -> "PolicyTable":
        tables = []
        for k in range(horizon):
            shape = (num_obs,) * (k + 1) + (num_actions,) * k
            rows = rng.dirichlet(np.ones(num_actions), size=int(np.prod(shape, dtype=np.int64)))
            tables.append(rows.reshape(shape + (num_actions,)))
        return cls(num_obs, num_actions, tables)

    @classmethod
    def random_deterministic(cls, num_obs, num_actions, horizon, rng) -> "PolicyTable":
        tables = []
        for k in range(horizon):
            shape = (num_obs,) * (k + 1) + (num_actions,) * k
            n_rows = int(np.prod(shape, dtype=np.int64))
            rows = np.zeros((n_rows, num_actions))
            rows[np.arange(n_rows), rng.integers(num_actions, size=n_rows)] = 1.0
            tables.append(rows.reshape(shape + (num_actions,)))
        return cls(num_obs, num_actions, tables)

    @classmethod
    def uniform(cls, num_obs, num_actions, horizon) -> "PolicyTable":
        tables = []
        for k in range(horizon):
            shape = (num_obs,) * (k + 1) + (num_actions,) * k
            tables.append(np.full(shape + (num_actions,), 1.0 / num_actions))
        return cls(num_obs, num_actions, tables)

    def save(self, path) -> None:
        doc = {
            "num_obs": self.num_obs,
            "num_actions": self.num_actions,
            "horizon": self.horizon,
            "tables": [t.tolist() for t in self.tables],
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> "PolicyTable":
        doc = json.loads(Path(path).read_text())
        return cls(int(doc["num_obs"]), int(doc["num_actions"]), doc["tables"])


# ---------------------------------------------------------------------------
# Exhaustive enumeration oracle
# ---------------------------------------------------------------------------


@dataclass
class ExactEntropies:
    """Exact entropies (bits) of a small instance under an explicit policy.

    ``causal_obs``/``causal_control`` are the causally conditioned sums over
    per-step conditional entropies given only the information available at
    that step.  ``kernel_cost`` is the expected accumulated one-step
    (state, observation) pair entropy; together with ``initial_pair`` and
    ``causal_control`` it reconstructs the joint entropy.
    """

    smoother: float
    io: float
    joint: float
    causal_obs: float
    causal_control: float
    initial_pair: float
    kernel_cost: float


def _check_guard(model: PomdpModel, horizon: int) -> None:
    atoms = (
        model.num_states ** (horizon + 1)
        * model.num_obs ** (horizon + 1)
        * max(model.num_actions, 1) ** horizon
    )
    if atoms > ATOM_GUARD:
        raise TooLarge(f"enumeration would visit {atoms} atoms (guard {ATOM_GUARD})")


def _joint_atoms(model: PomdpModel, policy: PolicyTable, horizon: int) -> dict:
    """Full joint pmf over (x^T, y^T, u^{T-1}) histories as a dict on the support."""
    _check_guard(model, horizon)
    A, B = model.transition, model.observation
    atoms: dict = {}

    def extend(xs, ys, us, p):
        k = len(us)
        if k == horizon:
            atoms[(xs, ys, us)] = atoms.get((xs, ys, us), 0.0) + p
            return
        mu = policy.pmf(ys, us)
        for u in range(model.num_actions):
            pu = p * mu[u]
            if pu == 0.0:
                continue
            for x1 in range(model.num_states):
                pa = pu * A[u, xs[-1], x1]
                if pa == 0.0:
                    continue
                for y1 in range(model.num_obs):
                    pb = pa * B[u, x1, y1]
                    if pb > 0.0:
                        extend(xs + (x1,), ys + (y1,), us + (u,), pb)

    for x0 in range(model.num_states):
        for y0 in range(model.num_obs):
            p0 = model.prior[x0] * model.initial_observation[x0, y0]
            if p0 > 0.0:
                extend((x0,), (y0,), (), p0)
    return atoms


def _marginal_entropy(dist: dict) -> float:
    return entropy_bits(np.array(list(dist.values())))


def _bin_by(atoms: dict, key) -> dict:
    out: dict = {}
    for k, p in atoms.items():
        kk = key(k)
        out[kk] = out.get(kk, 0.0) + p
    return out


def brute_force_entropies(model: PomdpModel, policy: PolicyTable, horizon: int) -> ExactEntropies:
    """Exact entropy quantities by enumerating the joint pmf of a small instance.

    Works for any explicit stochastic policy table; raises :class:`TooLarge`
    when the atom count exceeds the guard.
    """
    _check_guard(model, horizon)
    if policy.horizon < horizon:
        raise ValueError(f"policy covers {policy.horizon} steps, horizon is {horizon}")
    atoms = _joint_atoms(model, policy, horizon)

    joint = _marginal_entropy(atoms)
    io_dist = _bin_by(atoms, lambda k: (k[1], k[2]))
    io = _marginal_entropy(io_dist)
    smoother = joint - io

    # Causally conditioned sums from prefix marginals.
    causal_obs = 0.0
    causal_control = 0.0
    for k in range(horizon + 1):
        h_yk_ukm1 = _marginal_entropy(_bin_by(io_dist, lambda t, k=k: (t[0][: k + 1], t[1][:k])))
        h_ykm1_ukm1 = _marginal_entropy(_bin_by(io_dist, lambda t, k=k: (t[0][:k], t[1][:k]))) if k > 0 else 0.0
        causal_obs += h_yk_ukm1 - h_ykm1_ukm1
    for k in range(horizon):
        h_yk_uk = _marginal_entropy(_bin_by(io_dist, lambda t, k=k: (t[0][: k + 1], t[1][: k + 1])))
        h_yk_ukm1 = _marginal_entropy(_bin_by(io_dist, lambda t, k=k: (t[0][: k + 1], t[1][:k])))
        causal_control += h_yk_uk - h_yk_ukm1

    initial_pair = _marginal_entropy(_bin_by(atoms, lambda t: (t[0][0], t[1][0])))

    kernel_table = np.array(
        [
            [joint_stage_cost(model, x, u) for u in range(model.num_actions)]
            for x in range(model.num_states)
        ]
    )
    kernel_cost = 0.0
    for (xs, _ys, us), p in atoms.items():
        for k in range(horizon):
            kernel_cost += p * kernel_table[xs[k], us[k]]

    return ExactEntropies(
        smoother=smoother,
        io=io,
        joint=joint,
        causal_obs=causal_obs,
        causal_control=causal_control,
        initial_pair=initial_pair,
        kernel_cost=kernel_cost,
    )


def expected_belief_sums(model: PomdpModel, policy: PolicyTable, horizon: int):
    """Exact expectations of the filter-based entropy accumulations.

    Returns ``(smoother_form, io_form)``: the expected terminal belief
    entropy plus pair increments, and the first-observation entropy plus
    expected predictive observation entropies.  These must equal the
    oracle's ``smoother`` and ``causal_obs``.
    """
    _check_guard(model, horizon)
    atoms = _joint_atoms(model, policy, horizon)
    histories = _bin_by(atoms, lambda t: (t[1], t[2]))
    smoother_form = 0.0
    io_form = initial_obs_entropy(model)
    for (ys, us), p in histories.items():
        pi = initial_belief(model, ys[0])
        for k in range(horizon):
            smoother_form += p * smoother_increment(model, pi, us[k])
            io_form += p * obs_entropy_term(model, pi, us[k])
            pi = filter_update(model, pi, us[k], ys[k + 1])
        smoother_form += p * belief_entropy(pi)
    return smoother_form, io_form


def identity_residuals(model: PomdpModel, policy: PolicyTable, horizon: int) -> dict:
    """Residuals of the four decomposition identities (all should be ~0).

    * ``io_split``: input-output entropy vs the sum of its causal parts.
    * ``joint_kernel``: joint entropy vs initial pair + control entropy +
      accumulated kernel pair entropy.
    * ``smoother_filter``: smoother entropy vs the filter-based accumulation.
    * ``causal_obs_filter``: causal observation entropy vs the filter-based
      accumulation.
    """
    exact = brute_force_entropies(model, policy, horizon)
    smoother_form, io_form = expected_belief_sums(model, policy, horizon)
    return {
        "io_split": exact.io - (exact.causal_obs + exact.causal_control),
        "joint_kernel": exact.joint - (exact.initial_pair + exact.causal_control + exact.kernel_cost),
        "smoother_filter": exact.smoother - smoother_form,
        "causal_obs_filter": exact.causal_obs - io_form,
    }
