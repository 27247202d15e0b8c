"""Game histories, simulated trajectories and training-target assembly.

Index conventions: a game of length T stores, per timestep t, the
observation seen before acting, the action a_t, the reward u_t produced by
a_t (mover's perspective for two-player games), the search policy and root
value at t, and optionally the simulated trajectory harvested from the
search tree at t. Value targets use "arrival" indexing internally:
arrival[i] is the reward observed on entering state i, i.e. u_{i-1}.

Targets are precomputed per game at insertion time so batch sampling is a
pure gather.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import mcts
from .mcts import MinMaxBounds, SearchParams, TreeNode
from .networks import Network


def n_step_value(rewards, values, t: int, n: int, discount: float, horizon: int) -> float:
    """Bootstrapped look-ahead value:

        sum_{i=1..n_eff} discount^{i-1} * rewards[t+i]
      + discount^n_eff * values[t + n_eff],   n_eff = min(n, horizon - t)

    `rewards` is arrival-indexed (rewards[i] enters state i; index 0 unused)
    and `values[horizon]` must hold the boundary value (0 for terminal
    states). t == horizon degenerates to values[t].
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= t <= horizon:
        raise ValueError(f"anchor {t} outside horizon {horizon}")
    n_eff = min(n, horizon - t)
    total = 0.0
    scale = 1.0
    for i in range(1, n_eff + 1):
        total += scale * rewards[t + i]
        scale *= discount
    return total + scale * values[t + n_eff]


@dataclass
class SimTrajectory:
    """A greedy tree path replayed on a clone of the recorded env state.

    values has one extra trailing entry (the boundary value used for
    bootstrapping: 0 when the clone terminated, else the deepest tree
    value). policies entries are None where no visit distribution exists
    (budget padding); value_targets is filled in at buffer-insertion time.
    """

    actions: list
    rewards: list
    values: list
    policies: list
    terminal: bool
    to_plays: list
    value_targets: np.ndarray | None = None


class GameHistory:
    def __init__(self):
        self.observations: list[np.ndarray] = []
        self.actions: list[int] = []
        self.rewards: list[float] = []
        self.policies: list[np.ndarray] = []
        self.root_values: list[float] = []
        self.to_plays: list[int] = []
        self.sim_trajectories: list[SimTrajectory | None] = []
        self.value_targets: np.ndarray | None = None

    def __len__(self):
        return len(self.actions)

    def append(self, observation, action: int, reward: float, policy,
               root_value: float, to_play: int, sim: SimTrajectory | None = None):
        self.observations.append(np.asarray(observation, dtype=np.float64))
        self.actions.append(int(action))
        self.rewards.append(float(reward))
        self.policies.append(np.asarray(policy, dtype=np.float64))
        self.root_values.append(float(root_value))
        self.to_plays.append(int(to_play))
        self.sim_trajectories.append(sim)


def _arrival(rewards) -> np.ndarray:
    return np.concatenate([[0.0], np.asarray(rewards, dtype=np.float64)])


def _signed_targets(arrival, values, to_plays, n, discount, horizon) -> np.ndarray:
    """Per-anchor n-step targets with perspective flips for two-player play.

    arrival[i] was earned by the mover at state i-1; values[j] is from the
    perspective of the player to move at state j. Each anchor's target is
    expressed in its own mover's perspective.
    """
    out = np.zeros(horizon + 1)
    for j in range(horizon + 1):
        n_eff = min(n, horizon - j)
        total = 0.0
        scale = 1.0
        for i in range(1, n_eff + 1):
            sign = 1.0 if to_plays[j + i - 1] == to_plays[j] else -1.0
            total += scale * sign * arrival[j + i]
            scale *= discount
        boot = values[j + n_eff]
        if boot != 0.0:
            if to_plays[min(j + n_eff, len(to_plays) - 1)] != to_plays[j]:
                boot = -boot
        out[j] = total + scale * boot
    return out


def game_value_targets(game: GameHistory, n: int, discount: float,
                       two_player: bool) -> np.ndarray:
    """z_j for j = 0..T (z_T = 0: past-terminal anchors are absorbing)."""
    T = len(game)
    arrival = _arrival(game.rewards)
    values = np.concatenate([np.asarray(game.root_values, dtype=np.float64), [0.0]])
    if two_player:
        return _signed_targets(arrival, values, game.to_plays, n, discount, T)
    out = np.zeros(T + 1)
    for j in range(T):
        out[j] = n_step_value(arrival, values, j, n, discount, T)
    return out


def sim_value_targets(sim: SimTrajectory, n: int, discount: float,
                      two_player: bool) -> np.ndarray:
    """z_j for j = 0..L over the simulated path (variable look-ahead:
    n_eff = min(n, L - j), bootstrapping from the stored tree values)."""
    L = len(sim.actions)
    arrival = _arrival(sim.rewards)
    values = np.asarray(sim.values, dtype=np.float64)
    if two_player:
        return _signed_targets(arrival, values, sim.to_plays, n, discount, L)
    out = np.zeros(L + 1)
    for j in range(L + 1):
        out[j] = n_step_value(arrival, values, j, n, discount, L)
    return out


def build_sim_trajectory(env, root: TreeNode, net: Network, params: SearchParams,
                         bounds: MinMaxBounds, min_length: int, max_length: int) -> SimTrajectory:
    """Harvest the greedy path from a fresh search root and replay it on a
    clone of `env` (which must still be at the root's state) for true
    rewards. Replay truncates at termination (boundary value 0) or at the
    first illegal action (boundary value kept from the tree)."""
    two_player = env.two_player
    path = mcts.greedy_path(root, net, params, bounds, min_length, max_length,
                            two_player=two_player)
    clone = env.clone()
    taken: list[int] = []
    rewards: list[float] = []
    to_plays = [root.to_play]
    terminal = False
    for action in path.actions:
        if action not in clone.legal_actions():
            break
        result = clone.step(action)
        taken.append(action)
        rewards.append(result.reward)
        to_plays.append(clone.to_play)
        if result.done:
            terminal = True
            break
    L = len(taken)
    values = [float(v) for v in path.values[:L + 1]]
    if terminal:
        values[L] = 0.0
    return SimTrajectory(
        actions=taken,
        rewards=rewards,
        values=values,
        policies=path.policies[:L],
        terminal=terminal,
        to_plays=to_plays,
    )


@dataclass
class TrainingBatch:
    """Stacked unroll targets. target_rewards[:, 0] and policy rows with
    mask 0 are placeholders that never reach a loss."""

    observations: np.ndarray    # (B, obs)
    actions: np.ndarray         # (B, K) int
    target_values: np.ndarray   # (B, K+1)
    target_rewards: np.ndarray  # (B, K+1)
    target_policies: np.ndarray  # (B, K+1, A)
    policy_mask: np.ndarray     # (B, K+1) in {0, 1}

    def __len__(self):
        return self.observations.shape[0]


class ReplayBuffer:
    """Ring buffer of finished games; anchors sample uniformly over all
    (game, timestep) pairs."""

    def __init__(self, capacity: int, n_steps: int, discount: float,
                 two_player: bool):
        self.games: deque[GameHistory] = deque(maxlen=capacity)
        self.capacity = capacity
        self.n_steps = n_steps
        self.discount = discount
        self.two_player = two_player

    def __len__(self):
        return len(self.games)

    @property
    def num_steps(self) -> int:
        return sum(len(g) for g in self.games)

    def add_game(self, game: GameHistory):
        if len(game) == 0:
            raise ValueError("refusing to store an empty game")
        game.value_targets = game_value_targets(game, self.n_steps, self.discount,
                                                self.two_player)
        for sim in game.sim_trajectories:
            if sim is not None and sim.value_targets is None:
                sim.value_targets = sim_value_targets(sim, self.n_steps,
                                                      self.discount, self.two_player)
        self.games.append(game)

    def sample_anchors(self, rng: np.random.Generator, count: int):
        lengths = np.fromiter((len(g) for g in self.games), dtype=np.int64,
                              count=len(self.games))
        total = int(lengths.sum())
        if total == 0:
            raise ValueError("cannot sample from an empty buffer")
        cuts = np.cumsum(lengths)
        flat = rng.integers(0, total, size=count)
        game_idx = np.searchsorted(cuts, flat, side="right")
        starts = cuts - lengths
        games = list(self.games)
        return [(games[int(gi)], int(fi - starts[gi]))
                for gi, fi in zip(game_idx, flat)]


def _uniform_policy(action_size: int) -> np.ndarray:
    return np.full(action_size, 1.0 / action_size)


def build_real_sample(game: GameHistory, t: int, unroll_steps: int,
                      action_size: int, filler_rng: np.random.Generator) -> TrainingBatch:
    K = unroll_steps
    T = len(game)
    z = game.value_targets
    actions = np.empty(K, dtype=np.int64)
    values = np.zeros(K + 1)
    rewards = np.zeros(K + 1)
    policies = np.empty((K + 1, action_size))
    mask = np.zeros(K + 1)
    for k in range(K + 1):
        j = t + k
        values[k] = z[j] if j <= T else 0.0
        if k >= 1:
            rewards[k] = game.rewards[j - 1] if j <= T else 0.0
        if j < T:
            policies[k] = game.policies[j]
            mask[k] = 1.0
        else:
            policies[k] = _uniform_policy(action_size)
    for k in range(K):
        j = t + k
        actions[k] = game.actions[j] if j < T else int(filler_rng.integers(action_size))
    return TrainingBatch(game.observations[t], actions, values, rewards, policies, mask)


def build_sim_sample(game: GameHistory, t: int, unroll_steps: int,
                     action_size: int, filler_rng: np.random.Generator) -> TrainingBatch:
    sim = game.sim_trajectories[t]
    if sim is None:
        raise RuntimeError(f"no simulated trajectory recorded at t={t}")
    K = unroll_steps
    L = len(sim.actions)
    z = sim.value_targets
    actions = np.empty(K, dtype=np.int64)
    values = np.zeros(K + 1)
    rewards = np.zeros(K + 1)
    policies = np.empty((K + 1, action_size))
    mask = np.zeros(K + 1)
    for k in range(K + 1):
        values[k] = z[k] if k <= L else 0.0
        if k >= 1:
            rewards[k] = sim.rewards[k - 1] if k <= L else 0.0
        if k < L and sim.policies[k] is not None:
            policies[k] = sim.policies[k]
            mask[k] = 1.0
        else:
            policies[k] = _uniform_policy(action_size)
    for k in range(K):
        actions[k] = sim.actions[k] if k < L else int(filler_rng.integers(action_size))
    return TrainingBatch(game.observations[t], actions, values, rewards, policies, mask)


def _stack(samples: list[TrainingBatch]) -> TrainingBatch:
    return TrainingBatch(
        observations=np.stack([s.observations for s in samples]),
        actions=np.stack([s.actions for s in samples]),
        target_values=np.stack([s.target_values for s in samples]),
        target_rewards=np.stack([s.target_rewards for s in samples]),
        target_policies=np.stack([s.target_policies for s in samples]),
        policy_mask=np.stack([s.policy_mask for s in samples]),
    )


def sample_batch(buffer: ReplayBuffer, rng: np.random.Generator, batch_size: int,
                 unroll_steps: int, action_size: int, with_sim: bool,
                 real_filler_rng: np.random.Generator,
                 sim_filler_rng: np.random.Generator, with_real: bool = True):
    """Draw anchors and build the real batch plus, when requested, the
    paired simulated batch at the same anchors."""
    anchors = buffer.sample_anchors(rng, batch_size)
    real = None
    if with_real:
        real = _stack([build_real_sample(g, t, unroll_steps, action_size, real_filler_rng)
                       for g, t in anchors])
    sim = None
    if with_sim:
        sim = _stack([build_sim_sample(g, t, unroll_steps, action_size, sim_filler_rng)
                      for g, t in anchors])
    return real, sim
