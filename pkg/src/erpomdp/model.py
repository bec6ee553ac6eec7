"""Tabular POMDP model container, exact Bayesian belief filtering, and sampling.

Kernel layout (action-major, dense, row-stochastic):

* ``transition[u, x, x']``         -- P(X_{k+1} = x' | X_k = x, U_k = u)
* ``observation[u, x', y]``        -- P(Y_{k+1} = y | X_{k+1} = x', U_k = u)
* ``initial_observation[x, y]``    -- P(Y_0 = y | X_0 = x)

Beliefs are plain 1-D float64 arrays on the probability simplex.  The model
is immutable after validation and safe to share across workers; every
operation here is pure except :func:`sample_step`, which draws from an
explicitly passed generator.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ImpossibleObservation, ModelValidationError

ROW_SUM_TOL = 1e-12

__all__ = [
    "PomdpModel",
    "TrajectoryRecord",
    "validate_model",
    "validate_belief",
    "initial_belief",
    "filter_update",
    "predict_joint",
    "obs_predictive",
    "sample_step",
    "load_model",
    "save_model",
]


@dataclass
class PomdpModel:
    """Tabular model with entropy-regularization weights.

    Parameters
    ----------
    transition : array, shape (num_actions, num_states, num_states)
        Controlled state kernel, rows over the next state.
    observation : array, shape (num_actions, num_states, num_obs)
        Observation kernel given the current state and previous action.
    initial_observation : array, shape (num_states, num_obs)
        Likelihood of the very first observation given the initial state.
    prior : array, shape (num_states,)
        Initial state pmf.
    stage_cost : array, shape (num_states, num_actions)
    terminal_cost : array, shape (num_states,)
    discount : float
        Geometric-horizon parameter, strictly inside (0, 1).
    beta, lam : float
        Nonnegative weights on the state-trajectory uncertainty cost and the
        observation/control compressibility cost respectively.
    """

    num_states: int
    num_actions: int
    num_obs: int
    transition: np.ndarray
    observation: np.ndarray
    initial_observation: np.ndarray
    prior: np.ndarray
    stage_cost: np.ndarray
    terminal_cost: np.ndarray
    discount: float
    beta: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.observation = np.asarray(self.observation, dtype=np.float64)
        self.initial_observation = np.asarray(self.initial_observation, dtype=np.float64)
        self.prior = np.asarray(self.prior, dtype=np.float64)
        self.stage_cost = np.asarray(self.stage_cost, dtype=np.float64)
        self.terminal_cost = np.asarray(self.terminal_cost, dtype=np.float64)

    def copy_with(self, **overrides) -> "PomdpModel":
        """Return a copy with some fields replaced (arrays are shared)."""
        fields = {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "num_obs": self.num_obs,
            "transition": self.transition,
            "observation": self.observation,
            "initial_observation": self.initial_observation,
            "prior": self.prior,
            "stage_cost": self.stage_cost,
            "terminal_cost": self.terminal_cost,
            "discount": self.discount,
            "beta": self.beta,
            "lam": self.lam,
        }
        fields.update(overrides)
        return PomdpModel(**fields)


@dataclass
class TrajectoryRecord:
    """One realized episode: states, observations, actions, and filtered beliefs.

    For horizon ``T`` the lengths are ``T+1`` states/observations/beliefs and
    ``T`` actions; ``beliefs[k]`` is the posterior after seeing ``observations[:k+1]``
    and ``actions[:k]``.
    """

    states: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    beliefs: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def check_lengths(self):
        T = self.horizon
        ok = (
            len(self.states) == T + 1
            and len(self.observations) == T + 1
            and len(self.beliefs) == T + 1
        )
        if not ok:
            raise ValueError(
                "inconsistent trajectory lengths: "
                f"{len(self.states)} states, {len(self.observations)} observations, "
                f"{len(self.actions)} actions, {len(self.beliefs)} beliefs"
            )


def _check_rows(name: str, table: np.ndarray) -> np.ndarray:
    """Validate one stochastic table; return it with rows normalized exactly."""
    if not np.all(np.isfinite(table)):
        raise ModelValidationError(f"{name}: non-finite entry")
    if np.any(table < -ROW_SUM_TOL) or np.any(table > 1.0 + ROW_SUM_TOL):
        idx = np.unravel_index(
            int(np.argmax(np.maximum(-table, table - 1.0))), table.shape
        )
        raise ModelValidationError(f"{name}: entry {table[idx]!r} at {idx} outside [0, 1]")
    rows = table.reshape(-1, table.shape[-1])
    sums = rows.sum(axis=1)
    bad = np.abs(sums - 1.0) > ROW_SUM_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ModelValidationError(f"{name}: row {i} sum {sums[i]!r} (expected 1 within {ROW_SUM_TOL})")
    out = np.clip(table, 0.0, None)
    out = out / out.reshape(-1, table.shape[-1]).sum(axis=1).reshape(
        table.shape[:-1] + (1,)
    )
    return out


def validate_model(model: PomdpModel) -> None:
    """Check every structural invariant; raise ModelValidationError otherwise.

    Rows within ``ROW_SUM_TOL`` of 1 are renormalized in place; anything
    further off is rejected rather than silently fixed.
    """
    nx, nu, ny = model.num_states, model.num_actions, model.num_obs
    if min(nx, nu, ny) < 1:
        raise ModelValidationError("num_states/num_actions/num_obs must be positive")
    shapes = {
        "transition": (model.transition, (nu, nx, nx)),
        "observation": (model.observation, (nu, nx, ny)),
        "initial_observation": (model.initial_observation, (nx, ny)),
        "prior": (model.prior, (nx,)),
        "stage_cost": (model.stage_cost, (nx, nu)),
        "terminal_cost": (model.terminal_cost, (nx,)),
    }
    for name, (arr, want) in shapes.items():
        if arr.shape != want:
            raise ModelValidationError(f"{name}: shape {arr.shape} != expected {want}")
    model.transition = _check_rows("transition", model.transition)
    model.observation = _check_rows("observation", model.observation)
    model.initial_observation = _check_rows("initial_observation", model.initial_observation)
    model.prior = _check_rows("prior", model.prior[None, :])[0]
    for name in ("stage_cost", "terminal_cost"):
        if not np.all(np.isfinite(getattr(model, name))):
            raise ModelValidationError(f"{name}: non-finite entry")
    if not (0.0 < model.discount < 1.0):
        raise ModelValidationError(f"discount {model.discount!r} out of (0,1)")
    if model.beta < 0.0 or model.lam < 0.0:
        raise ModelValidationError("beta and lambda must be nonnegative")


def validate_belief(belief: np.ndarray, num_states: int | None = None) -> np.ndarray:
    belief = np.asarray(belief, dtype=np.float64)
    if belief.ndim != 1 or (num_states is not None and belief.shape != (num_states,)):
        raise ValueError(f"belief shape {belief.shape} invalid")
    if np.any(belief < 0.0) or abs(float(belief.sum()) - 1.0) > ROW_SUM_TOL:
        raise ValueError(f"belief off the simplex (sum {belief.sum()!r})")
    return belief


def initial_belief(model: PomdpModel, y0: int) -> np.ndarray:
    """Posterior over the initial state after the first observation ``y0``."""
    num = model.initial_observation[:, y0] * model.prior
    z = num.sum()
    if z <= 0.0:
        raise ImpossibleObservation(f"initial observation {y0} has zero probability under the prior")
    return num / z


def filter_update(model: PomdpModel, belief: np.ndarray, u: int, y: int) -> np.ndarray:
    """One Bayes step: predict through the state kernel, correct by the likelihood of ``y``."""
    predicted = belief @ model.transition[u]
    num = model.observation[u, :, y] * predicted
    z = num.sum()
    if z <= 0.0:
        raise ImpossibleObservation(f"observation {y} impossible after action {u} from this belief")
    return num / z


def predict_joint(model: PomdpModel, belief: np.ndarray, u: int) -> np.ndarray:
    """Joint pmf over (current state, next state); entry [x, x'] = A[u,x,x'] * belief[x]."""
    return model.transition[u] * belief[:, None]


def obs_predictive(model: PomdpModel, belief: np.ndarray, u: int) -> np.ndarray:
    """Predictive pmf of the next observation given the belief and action."""
    return (belief @ model.transition[u]) @ model.observation[u]


def sample_step(model: PomdpModel, x: int, u: int, rng: np.random.Generator):
    """Draw (next state, next observation) from the generative kernels."""
    x1 = int(rng.choice(model.num_states, p=model.transition[u, x]))
    y1 = int(rng.choice(model.num_obs, p=model.observation[u, x1]))
    return x1, y1


def _filter_update_batch(model: PomdpModel, beliefs: np.ndarray, us: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized filter step for a batch of (belief, action, observation) rows.

    Matches :func:`filter_update` elementwise; rows with a zero normalizer
    raise just like the scalar path.
    """
    out = np.empty_like(beliefs)
    for u in range(model.num_actions):
        sel = np.flatnonzero(us == u)
        if sel.size == 0:
            continue
        predicted = beliefs[sel] @ model.transition[u]
        num = predicted * model.observation[u].T[ys[sel]]
        z = num.sum(axis=1)
        if np.any(z <= 0.0):
            bad = sel[int(np.argmax(z <= 0.0))]
            raise ImpossibleObservation(f"observation {ys[bad]} impossible after action {u} in batch row {bad}")
        out[sel] = num / z[:, None]
    return out


def _categorical_rows(prob_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample one index per row from a matrix of pmfs."""
    cdf = np.cumsum(prob_rows, axis=1)
    draws = rng.random(prob_rows.shape[0])
    return (draws[:, None] < cdf).argmax(axis=1)


# ---------------------------------------------------------------------------
# Model file format (JSON; the schema document lives in docs/model_schema.json)
# ---------------------------------------------------------------------------

_SCALAR_FIELDS = ("num_states", "num_actions", "num_obs", "discount", "beta", "lambda")
_ARRAY_FIELDS = (
    "transition",
    "observation",
    "initial_observation",
    "prior",
    "stage_cost",
    "terminal_cost",
)


def load_model(path) -> PomdpModel:
    """Read and validate a model file; rows are renormalized within tolerance."""
    raw = json.loads(Path(path).read_text())
    missing = [k for k in _SCALAR_FIELDS + _ARRAY_FIELDS if k not in raw]
    if missing:
        raise ModelValidationError(f"model file missing fields: {', '.join(missing)}")
    model = PomdpModel(
        num_states=int(raw["num_states"]),
        num_actions=int(raw["num_actions"]),
        num_obs=int(raw["num_obs"]),
        transition=raw["transition"],
        observation=raw["observation"],
        initial_observation=raw["initial_observation"],
        prior=raw["prior"],
        stage_cost=raw["stage_cost"],
        terminal_cost=raw["terminal_cost"],
        discount=float(raw["discount"]),
        beta=float(raw["beta"]),
        lam=float(raw["lambda"]),
    )
    validate_model(model)
    return model


def save_model(path, model: PomdpModel) -> None:
    doc = {
        "num_states": model.num_states,
        "num_actions": model.num_actions,
        "num_obs": model.num_obs,
        "transition": model.transition.tolist(),
        "observation": model.observation.tolist(),
        "initial_observation": model.initial_observation.tolist(),
        "prior": model.prior.tolist(),
        "stage_cost": model.stage_cost.tolist(),
        "terminal_cost": model.terminal_cost.tolist(),
        "discount": model.discount,
        "beta": model.beta,
        "lambda": model.lam,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def model_hash(model: PomdpModel) -> str:
    """Stable content hash used to match policy files to models."""
    h = hashlib.sha256()
    h.update(f"{model.num_states},{model.num_actions},{model.num_obs}".encode())
    for arr in (
        model.transition,
        model.observation,
        model.initial_observation,
        model.prior,
        model.stage_cost,
        model.terminal_cost,
    ):
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    h.update(np.float64([model.discount, model.beta, model.lam]).tobytes())
    return h.hexdigest()[:16]
