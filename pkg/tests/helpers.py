"""Shared test utilities: model generators and independent oracles.

The oracles here deliberately avoid the library's filter/solver code paths:
tabular value iteration works on raw kernels, and the enumeration oracles
multiply kernel entries directly.
"""

import numpy as np

from erpomdp import PomdpModel, validate_model


def random_model(
    rng,
    num_states=2,
    num_actions=2,
    num_obs=2,
    discount=0.7,
    beta=0.0,
    lam=0.0,
    costs=False,
    concentration=1.0,
) -> PomdpModel:
    alpha_x = np.ones(num_states) * concentration
    alpha_y = np.ones(num_obs) * concentration
    model = PomdpModel(
        num_states=num_states,
        num_actions=num_actions,
        num_obs=num_obs,
        transition=rng.dirichlet(alpha_x, size=(num_actions, num_states)),
        observation=rng.dirichlet(alpha_y, size=(num_actions, num_states)),
        initial_observation=rng.dirichlet(alpha_y, size=num_states),
        prior=rng.dirichlet(alpha_x),
        stage_cost=rng.uniform(0.0, 1.0, size=(num_states, num_actions)) if costs else np.zeros((num_states, num_actions)),
        terminal_cost=rng.uniform(0.0, 1.0, size=num_states) if costs else np.zeros(num_states),
        discount=discount,
        beta=beta,
        lam=lam,
    )
    validate_model(model)
    return model


def fully_observable_model(rng, num_states, num_actions, discount=0.9, costs=True) -> PomdpModel:
    """Random MDP wrapped as a POMDP whose observation reveals the state."""
    eye = np.eye(num_states)
    model = PomdpModel(
        num_states=num_states,
        num_actions=num_actions,
        num_obs=num_states,
        transition=rng.dirichlet(np.ones(num_states), size=(num_actions, num_states)),
        observation=np.tile(eye[None, :, :], (num_actions, 1, 1)),
        initial_observation=eye.copy(),
        prior=rng.dirichlet(np.ones(num_states)),
        stage_cost=rng.uniform(0.0, 1.0, size=(num_states, num_actions)) if costs else np.zeros((num_states, num_actions)),
        terminal_cost=np.zeros(num_states),
        discount=discount,
    )
    validate_model(model)
    return model


def tabular_value_iteration(transition, cost, discount, tol=1e-12, max_iter=100000):
    """Independent MDP oracle: V(x) = min_u [cost(x,u) + g * sum_x' A[u,x,x'] V(x')]."""
    num_actions, num_states, _ = transition.shape
    V = np.zeros(num_states)
    for _ in range(max_iter):
        Q = np.stack([cost[:, u] + discount * transition[u] @ V for u in range(num_actions)], axis=1)
        newV = Q.min(axis=1)
        if np.abs(newV - V).max() <= tol:
            return newV
        V = newV
    return V


def enumerate_filter_posterior(model, observations, actions):
    """Exhaustive posterior p(x_T | y^T, u^{T-1}) by summing kernel products
    over every full state sequence.  Independent of the filter."""
    T = len(observations) - 1
    post = np.zeros(model.num_states)

    def walk(k, x, weight):
        if k == T:
            post[x] += weight
            return
        u, y1 = actions[k], observations[k + 1]
        for x1 in range(model.num_states):
            w = weight * model.transition[u, x, x1] * model.observation[u, x1, y1]
            if w > 0.0:
                walk(k + 1, x1, w)

    for x0 in range(model.num_states):
        w0 = model.prior[x0] * model.initial_observation[x0, observations[0]]
        if w0 > 0.0:
            walk(0, x0, w0)
    z = post.sum()
    assert z > 0.0, "conditioning on a zero-probability history"
    return post / z


def enumerate_sequence_logprobs(model, observations, actions):
    """Log-probability of every full state sequence given the realized
    observations and actions (for checking MAP decoders)."""
    T = len(observations) - 1
    out = []

    def walk(k, xs, weight):
        if k == T:
            out.append((tuple(xs), weight))
            return
        u, y1 = actions[k], observations[k + 1]
        for x1 in range(model.num_states):
            walk(k + 1, xs + [x1], weight * model.transition[u, xs[-1], x1] * model.observation[u, x1, y1])

    for x0 in range(model.num_states):
        walk(0, [x0], model.prior[x0] * model.initial_observation[x0, observations[0]])
    return out
