"""Shared test fixtures: a scripted deterministic model for search tests
and small network factories."""
from __future__ import annotations

import numpy as np
import pytest

from treezero.networks import Network, NetworkOutput


class ScriptedModel:
    """Network stand-in whose hidden states are action-path tuples.

    Values, rewards and priors are deterministic functions of the path
    (seeded draws), individually overridable via the values/rewards/priors
    dicts keyed by path tuple. Board mode zeroes all rewards, mirroring the
    real network.
    """

    def __init__(self, action_size: int, seed: int = 0, values=None,
                 rewards=None, priors=None, mode: str = "mdp",
                 value_shift: float = 0.0):
        self.action_size = action_size
        self.seed = seed
        self.values = values or {}
        self.rewards = rewards or {}
        self.priors = priors or {}
        self.mode = mode
        self.value_shift = value_shift
        self._cache = {}

    def _entry(self, path):
        if path not in self._cache:
            rng = np.random.default_rng([self.seed, len(path)]
                                        + [a + 1 for a in path])
            self._cache[path] = (
                float(rng.uniform(-1.0, 1.0)),
                float(rng.uniform(-0.5, 0.5)),
                rng.dirichlet(np.ones(self.action_size)),
            )
        return self._cache[path]

    def _output(self, path) -> NetworkOutput:
        value, reward, policy = self._entry(path)
        if path in self.values:
            value = float(self.values[path])
        if path in self.rewards:
            reward = float(self.rewards[path])
        if path in self.priors:
            policy = np.asarray(self.priors[path], dtype=np.float64)
        if self.mode == "board":
            reward = 0.0
        return NetworkOutput(value=value + self.value_shift, reward=reward,
                             policy=policy, hidden_state=path)

    def initial_inference(self, obs) -> NetworkOutput:
        return self._output(())

    def recurrent_inference(self, state, action: int) -> NetworkOutput:
        return self._output(tuple(state) + (int(action),))


@pytest.fixture
def scripted_model():
    return ScriptedModel(action_size=3, seed=11)


def make_tiny_network(mode: str = "mdp", obs_size: int = 3, action_size: int = 2,
                      hidden_size: int = 2, support_size: int = 5,
                      seed: int = 0) -> Network:
    if mode == "board":
        support_size = 1
    return Network(obs_size, action_size, hidden_size, support_size, mode,
                   seed=seed)


@pytest.fixture
def tiny_mdp_net():
    return make_tiny_network("mdp")


@pytest.fixture
def tiny_board_net():
    return make_tiny_network("board")
