"""Entropy stage costs on the belief simplex and their two alpha-vector forms.

All entropies are in bits.  The cost of interest has four pieces: a linear
expected-cost term, the belief entropy, the one-step state-pair entropy
increment, and the predictive observation entropy.  The combined stage cost

    G(pi, u) = (1-g)*beta*G1(pi) + g*beta*G2(pi, u) + g*lambda*G3(pi, u)
               + sum_x pi(x) * ((1-g)*c_T(x) + g*c(x, u))

is concave in the belief, so tangent hyperplanes at interior base points
upper-bound it and yield a piecewise-linear-concave surrogate usable by
alpha-vector solvers.  When beta == lambda the whole cost collapses to a
single exact hyperplane per action (see :func:`linear_cost_vectors`).

The convention 0*log(0) = 0 applies throughout; gradients additionally
require beliefs bounded away from the boundary (``INTERIOR_FLOOR``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BoundaryBelief, WeightMismatch
from .model import PomdpModel, obs_predictive, predict_joint

INTERIOR_FLOOR = 1e-4
_LOG2E = 1.0 / np.log(2.0)  # d/dp [p*log2(p)] = log2(p) + 1/ln(2)

__all__ = [
    "AlphaVector",
    "PwlcApproximation",
    "entropy_bits",
    "belief_entropy",
    "smoother_increment",
    "obs_entropy_term",
    "joint_stage_cost",
    "stage_cost_G",
    "grad_G",
    "build_pwlc",
    "linear_cost_vectors",
    "sparsity",
    "default_base_points",
    "clamp_interior",
    "stage_cost_bound",
    "save_base_points",
    "load_base_points",
    "save_alpha_vectors",
    "load_alpha_vectors",
]


def entropy_bits(p, axis=None) -> np.ndarray | float:
    """Shannon entropy in bits of a pmf (any shape; zero entries contribute 0)."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log2(p), 0.0)
    out = -terms.sum(axis=axis)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class AlphaVector:
    """A hyperplane ``<pi, weights>`` with an attached action and origin label."""

    weights: np.ndarray
    action: int
    tag: str = ""

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)

    def value(self, belief: np.ndarray) -> float:
        return float(belief @ self.weights)


@dataclass
class PwlcApproximation:
    """Tangent planes to the stage cost at a finite base-point set.

    ``planes[u]`` lists one :class:`AlphaVector` per base point; the surrogate
    is the minimum over the planes and touches the true cost at each base
    point from above.
    """

    base_points: np.ndarray
    planes: list  # planes[u] -> list[AlphaVector]
    _stacks: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.base_points = np.asarray(self.base_points, dtype=np.float64)
        if not self._stacks:
            self._stacks = [
                np.stack([av.weights for av in per_action]) for per_action in self.planes
            ]

    def plane_matrix(self, u: int) -> np.ndarray:
        """All plane weight vectors for action ``u`` as a (num planes, N_x) array."""
        return self._stacks[u]

    def evaluate(self, belief: np.ndarray, u: int) -> float:
        return float((self._stacks[u] @ belief).min())

    def evaluate_batch(self, beliefs: np.ndarray, u: int) -> np.ndarray:
        return (beliefs @ self._stacks[u].T).min(axis=1)


# ---------------------------------------------------------------------------
# Stage-cost pieces
# ---------------------------------------------------------------------------


def belief_entropy(belief: np.ndarray) -> float:
    """Entropy of the belief itself; 0 at vertices, log2(N_x) at the barycenter."""
    return entropy_bits(belief)


def smoother_increment(model: PomdpModel, belief: np.ndarray, u: int) -> float:
    """Entropy of the predicted (current, next) state pair minus that of the next state.

    Equals the conditional entropy of the current state given the next one
    under the one-step prediction, hence lies in [0, log2(N_x)].
    """
    joint = predict_joint(model, belief, u)
    return entropy_bits(joint) - entropy_bits(joint.sum(axis=0))


def obs_entropy_term(model: PomdpModel, belief: np.ndarray, u: int) -> float:
    """Entropy of the predictive observation distribution."""
    return entropy_bits(obs_predictive(model, belief, u))


def joint_stage_cost(model: PomdpModel, x: int, u: int) -> float:
    """Entropy of the one-step (next state, observation) pair from state ``x``."""
    pair = model.transition[u, x][:, None] * model.observation[u]
    return entropy_bits(pair)


def _linear_term(model: PomdpModel, u: int) -> np.ndarray:
    g = model.discount
    return (1.0 - g) * model.terminal_cost + g * model.stage_cost[:, u]


def stage_cost_G(model: PomdpModel, belief: np.ndarray, u: int) -> float:
    """Full nonlinear belief-MDP stage cost for one action."""
    g, b, lam = model.discount, model.beta, model.lam
    total = float(belief @ _linear_term(model, u))
    if b > 0.0:
        total += (1.0 - g) * b * belief_entropy(belief)
        total += g * b * smoother_increment(model, belief, u)
    if lam > 0.0:
        total += g * lam * obs_entropy_term(model, belief, u)
    return total


def clamp_interior(belief: np.ndarray, floor: float = INTERIOR_FLOOR) -> np.ndarray:
    """Push a belief at least ``floor`` away from every face and renormalize."""
    clamped = np.maximum(belief, floor)
    return clamped / clamped.sum()


def grad_G(model: PomdpModel, belief: np.ndarray, u: int) -> np.ndarray:
    """Analytic gradient of :func:`stage_cost_G` in the belief coordinates.

    The gradient is taken in the unconstrained coordinates; any component
    along the all-ones direction is irrelevant on the simplex and cancels in
    the tangent-plane construction.  Raises :class:`BoundaryBelief` when a
    coordinate is below ``INTERIOR_FLOOR``, where the entropy terms blow up.
    """
    if float(belief.min()) < INTERIOR_FLOOR:
        raise BoundaryBelief(
            f"belief coordinate {belief.min()!r} below interior floor {INTERIOR_FLOOR}"
        )
    g, b, lam = model.discount, model.beta, model.lam
    grad = _linear_term(model, u).copy()
    if b > 0.0:
        grad += (1.0 - g) * b * (-np.log2(belief) - _LOG2E)
        A = model.transition[u]
        marg = belief @ A
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(
                A > 0.0, np.log2(A * belief[:, None]) - np.log2(marg)[None, :], 0.0
            )
        grad += g * b * (-(A * logs).sum(axis=1))
    if lam > 0.0:
        M = model.transition[u] @ model.observation[u]
        pred = belief @ M
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(M > 0.0, np.log2(pred)[None, :] + _LOG2E, 0.0)
        grad += g * lam * (-(M * logs).sum(axis=1))
    return grad


# ---------------------------------------------------------------------------
# Alpha-vector constructions
# ---------------------------------------------------------------------------


def build_pwlc(model: PomdpModel, base_points) -> PwlcApproximation:
    """Tangent plane of the stage cost at every (base point, action) pair.

    The plane at ``xi`` has weights ``G(xi,u) + grad - <xi, grad>`` (scalar
    terms added to every component), so it touches the cost exactly at ``xi``
    and upper-bounds it elsewhere by concavity.
    """
    pts = np.atleast_2d(np.asarray(base_points, dtype=np.float64))
    planes = []
    for u in range(model.num_actions):
        per_action = []
        for i, xi in enumerate(pts):
            grad = grad_G(model, xi, u)
            offset = stage_cost_G(model, xi, u) - float(xi @ grad)
            per_action.append(AlphaVector(grad + offset, action=u, tag=f"xi{i}"))
        planes.append(per_action)
    return PwlcApproximation(base_points=pts, planes=planes)


def linear_cost_vectors(model: PomdpModel) -> list[AlphaVector]:
    """Exact single-hyperplane stage cost, available when beta == lambda.

    Component x of the action-u vector is
    ``(1-g)*c_T(x) + g*c(x,u) + g*beta*joint_stage_cost(x,u)``.
    """
    if model.beta != model.lam:
        raise WeightMismatch(
            f"linear cost requires beta == lambda, got {model.beta} != {model.lam}"
        )
    g, b = model.discount, model.beta
    vectors = []
    for u in range(model.num_actions):
        kernel_entropy = np.array(
            [joint_stage_cost(model, x, u) for x in range(model.num_states)]
        )
        vectors.append(
            AlphaVector(_linear_term(model, u) + g * b * kernel_entropy, action=u, tag="linear")
        )
    return vectors


def default_base_points(num_states: int) -> np.ndarray:
    """Barycenter plus one near-vertex point per state (small coords 0.001)."""
    if num_states == 1:
        return np.ones((1, 1))
    small = 1e-3
    pts = [np.full(num_states, 1.0 / num_states)]
    for x in range(num_states):
        p = np.full(num_states, small)
        p[x] = 1.0 - small * (num_states - 1)
        pts.append(p)
    return np.stack(pts)


def sparsity(base_points, samples: int, seed: int = 0) -> float:
    """Monte Carlo covering radius of the base-point set in L1 distance.

    Samples beliefs uniformly over the simplex and reports the largest
    distance to the nearest base point.  This is the quantity that controls
    the surrogate's approximation error; it shrinks as the set fills the
    simplex.
    """
    pts = np.atleast_2d(np.asarray(base_points, dtype=np.float64))
    rng = np.random.default_rng(seed)
    worst = 0.0
    remaining = samples
    while remaining > 0:
        n = min(remaining, 4096)
        draws = rng.dirichlet(np.ones(pts.shape[1]), size=n)
        dists = np.abs(draws[:, None, :] - pts[None, :, :]).sum(axis=2).min(axis=1)
        worst = max(worst, float(dists.max()))
        remaining -= n
    return worst


def stage_cost_bound(model: PomdpModel) -> float:
    """Upper bound on |G| over the whole simplex (used for truncation bounds)."""
    lin = np.abs(
        (1.0 - model.discount) * model.terminal_cost[:, None]
        + model.discount * model.stage_cost
    ).max()
    return float(
        lin
        + model.beta * np.log2(max(model.num_states, 2))
        + model.lam * np.log2(max(model.num_obs, 2))
    )


# ---------------------------------------------------------------------------
# Batched variants used by the simulation harness
# ---------------------------------------------------------------------------


def _belief_entropy_batch(beliefs: np.ndarray) -> np.ndarray:
    return entropy_bits(beliefs, axis=1)


def _smoother_increment_batch(model: PomdpModel, beliefs: np.ndarray, u: int) -> np.ndarray:
    joint = beliefs[:, :, None] * model.transition[u][None, :, :]
    return entropy_bits(joint, axis=(1, 2)) - entropy_bits(beliefs @ model.transition[u], axis=1)


def _obs_entropy_term_batch(model: PomdpModel, beliefs: np.ndarray, u: int) -> np.ndarray:
    pred = (beliefs @ model.transition[u]) @ model.observation[u]
    return entropy_bits(pred, axis=1)


def _stage_cost_G_batch(model: PomdpModel, beliefs: np.ndarray, u: int) -> np.ndarray:
    g, b, lam = model.discount, model.beta, model.lam
    total = beliefs @ _linear_term(model, u)
    if b > 0.0:
        total = total + (1.0 - g) * b * _belief_entropy_batch(beliefs)
        total = total + g * b * _smoother_increment_batch(model, beliefs, u)
    if lam > 0.0:
        total = total + g * lam * _obs_entropy_term_batch(model, beliefs, u)
    return total


# ---------------------------------------------------------------------------
# File formats: base points and alpha vectors (17 significant digits
# round-trips float64 exactly)
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_base_points(path, base_points) -> None:
    pts = np.atleast_2d(np.asarray(base_points, dtype=np.float64))
    lines = [" ".join(_fmt(v) for v in row) for row in pts]
    Path(path).write_text("\n".join(lines) + "\n")


def load_base_points(path) -> np.ndarray:
    rows = [
        [float(tok) for tok in line.split()]
        for line in Path(path).read_text().splitlines()
        if line.strip() and not line.startswith("#")
    ]
    return np.asarray(rows, dtype=np.float64)


def save_alpha_vectors(path, vectors: list, comments: list | None = None) -> None:
    """Write vectors as: optional '#' comment lines, a 'N_x count' header,
    then one 'action w_1 ... w_Nx' line per vector."""
    n_states = len(vectors[0].weights)
    lines = [f"# {c}" for c in (comments or [])]
    lines.append(f"{n_states} {len(vectors)}")
    for av in vectors:
        lines.append(" ".join([str(int(av.action))] + [_fmt(w) for w in av.weights]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_alpha_vectors(path) -> list:
    """Read the alpha-vector format; '#' lines are ignored."""
    lines = [
        line for line in Path(path).read_text().splitlines()
        if line.strip() and not line.startswith("#")
    ]
    n_states, count = (int(tok) for tok in lines[0].split())
    vectors = []
    for line in lines[1 : 1 + count]:
        toks = line.split()
        if len(toks) != n_states + 1:
            raise ValueError(f"alpha-vector line has {len(toks) - 1} weights, expected {n_states}")
        vectors.append(AlphaVector(np.array([float(t) for t in toks[1:]]), action=int(toks[0])))
    if len(vectors) != count:
        raise ValueError(f"alpha-vector file declares {count} vectors, found {len(vectors)}")
    return vectors
