import numpy as np
import pytest

from hindsight import nn
from hindsight.envs import FourRooms
from hindsight.replay import KIND_NEXT_STATE, RelabeledBatch


@pytest.fixture(scope="session")
def four_rooms():
    return FourRooms()


def finite_difference_gradient(net, fn, h=1e-5):
    """Central-difference gradient of the scalar fn(net) in the flat
    parameter vector. Restores the parameters afterwards."""
    base = net.params.copy()
    grad = np.empty_like(base)
    for i in range(base.size):
        net.params[i] = base[i] + h
        up = fn(net)
        net.params[i] = base[i] - h
        down = fn(net)
        net.params[i] = base[i]
        grad[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return np.linalg.norm(a - b) / denom


def random_net_without_kinks(sizes, inputs, rng, margin=1e-4, tries=50):
    """Random net whose hidden pre-activations stay away from the ReLU kink
    for every given input, so finite differences are clean."""
    for _ in range(tries):
        net = nn.init_mlp(sizes, rng)
        _, (pre, _) = nn.forward_many_cached(net, np.atleast_2d(inputs))
        if all(np.abs(z).min() > margin for z in pre[:-1]):
            return net
    raise AssertionError("could not sample a kink-free network")


def random_batch(env, rng, size=16):
    """Synthetic relabeled batch of valid FourRooms transitions."""
    cells = np.array(env.free_cells)
    idx = rng.integers(0, len(cells), size=size)
    states = cells[idx] / 10.0
    actions = rng.integers(0, env.action_count, size=size)
    next_states = env.step_many(states, actions)
    goal_idx = rng.integers(0, len(cells), size=size)
    goals = cells[goal_idx] / 10.0
    kinds = rng.integers(0, 3, size=size)
    # Keep kind labels truthful where it matters for the updates under test.
    goals[kinds == KIND_NEXT_STATE] = next_states[kinds == KIND_NEXT_STATE]
    return RelabeledBatch(states=states.astype(float), actions=actions,
                          next_states=next_states, goals=goals.astype(float),
                          kinds=kinds)
