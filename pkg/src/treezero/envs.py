"""The three desk-scale environments: cartpole, tic-tac-toe, corner-goal grid.

All environments share a tiny duck-typed interface:

    reset(seed) -> observation        (flat float64 vector)
    step(action) -> StepResult
    legal_actions() -> list[int]
    clone() -> independent copy with identical state

plus class attributes observation_size / action_size / two_player and a
`to_play` property (+1 for single-player envs, alternating +1/-1 for
tic-tac-toe with a mover-canonical observation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class IllegalMove(ValueError):
    pass


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool


class CartPole:
    """Classic cart-pole balance task, Euler-integrated.

    Reward is +1 per step (including the terminating one), so episode
    reward equals episode length. Termination: pole beyond 15 degrees,
    cart beyond 2.4 units, or 500 steps.
    """

    observation_size = 4
    action_size = 2
    two_player = False
    max_steps = 500

    GRAVITY = 9.8
    MASS_CART = 1.0
    MASS_POLE = 0.1
    TOTAL_MASS = MASS_CART + MASS_POLE
    HALF_LENGTH = 0.5
    POLEMASS_LENGTH = MASS_POLE * HALF_LENGTH
    FORCE = 10.0
    DT = 0.02
    THETA_LIMIT = 15.0 * math.pi / 180.0
    X_LIMIT = 2.4

    def __init__(self):
        self.state = np.zeros(4)
        self.steps = 0
        self.done = True

    @property
    def to_play(self) -> int:
        return 1

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.state = rng.uniform(-0.05, 0.05, size=4)
        self.steps = 0
        self.done = False
        return self.state.copy()

    def legal_actions(self):
        return [0, 1]

    def step(self, action: int) -> StepResult:
        if self.done:
            raise RuntimeError("step() on a finished episode")
        if action not in (0, 1):
            raise IllegalMove(f"cartpole action must be 0 or 1, got {action}")
        x, x_dot, theta, theta_dot = self.state
        force = self.FORCE if action == 1 else -self.FORCE
        cos_t = math.cos(theta)
        sin_t = math.sin(theta)
        tmp = (force + self.POLEMASS_LENGTH * theta_dot ** 2 * sin_t) / self.TOTAL_MASS
        theta_acc = (self.GRAVITY * sin_t - cos_t * tmp) / (
            self.HALF_LENGTH * (4.0 / 3.0 - self.MASS_POLE * cos_t ** 2 / self.TOTAL_MASS)
        )
        x_acc = tmp - self.POLEMASS_LENGTH * theta_acc * cos_t / self.TOTAL_MASS
        x += self.DT * x_dot
        x_dot += self.DT * x_acc
        theta += self.DT * theta_dot
        theta_dot += self.DT * theta_acc
        self.state = np.array([x, x_dot, theta, theta_dot])
        self.steps += 1
        self.done = (
            abs(x) > self.X_LIMIT
            or abs(theta) > self.THETA_LIMIT
            or self.steps >= self.max_steps
        )
        return StepResult(self.state.copy(), 1.0, self.done)

    def clone(self) -> "CartPole":
        other = CartPole.__new__(CartPole)
        other.state = self.state.copy()
        other.steps = self.steps
        other.done = self.done
        return other


WIN_LINES = (
    (0, 1, 2), (3, 4, 5), (6, 7, 8),
    (0, 3, 6), (1, 4, 7), (2, 5, 8),
    (0, 4, 8), (2, 4, 6),
)


class TicTacToe:
    """3x3 board. The observation is canonical for the player to move:
    +1 marks own pieces, -1 the opponent's. The winning move returns +20 for
    the mover; terminal_rewards() carries the zero-sum +20/-20 pair."""

    observation_size = 9
    action_size = 9
    two_player = True
    max_steps = 9

    def __init__(self):
        self.cells = np.zeros(9, dtype=np.int8)
        self.player = 1
        self.steps = 0
        self.done = False
        self.winner = 0

    @property
    def to_play(self) -> int:
        return self.player

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.cells[:] = 0
        self.player = 1
        self.steps = 0
        self.done = False
        self.winner = 0
        return self.observation()

    def observation(self) -> np.ndarray:
        return (self.cells * self.player).astype(np.float64)

    def legal_actions(self):
        return [i for i in range(9) if self.cells[i] == 0]

    def step(self, action: int) -> StepResult:
        if self.done:
            raise RuntimeError("step() on a finished episode")
        if not 0 <= action < 9 or self.cells[action] != 0:
            raise IllegalMove(f"cell {action} is not playable")
        mover = self.player
        self.cells[action] = mover
        self.steps += 1
        won = any(all(self.cells[i] == mover for i in line) for line in WIN_LINES)
        if won:
            self.winner = mover
            self.done = True
        elif self.steps == 9:
            self.done = True
        self.player = -mover
        reward = 20.0 if won else 0.0
        return StepResult(self.observation(), reward, self.done)

    def terminal_rewards(self) -> dict[int, float]:
        """Zero-sum outcome per player id (+1 / -1); zeros for a draw."""
        if not self.done or self.winner == 0:
            return {1: 0.0, -1: 0.0}
        return {self.winner: 20.0, -self.winner: -20.0}

    def clone(self) -> "TicTacToe":
        other = TicTacToe.__new__(TicTacToe)
        other.cells = self.cells.copy()
        other.player = self.player
        other.steps = self.steps
        other.done = self.done
        other.winner = self.winner
        return other


class MiniGrid:
    """N x N grid; start top-left, +10 for reaching the opposite corner.

    Actions: 0 = right, 1 = down. Moves are not clamped: stepping past an
    edge walks off the grid for good (the observation goes all-zero and the
    goal is unreachable), so reward requires exactly N-1 rights and N-1
    downs. Episodes end at the goal or after N+N steps.
    """

    two_player = False
    action_size = 2

    def __init__(self, size: int):
        if size < 2:
            raise ValueError("grid size must be at least 2")
        self.size = size
        self.observation_size = size * size
        self.max_steps = 2 * size
        self.row = 0
        self.col = 0
        self.steps = 0
        self.done = False

    @property
    def to_play(self) -> int:
        return 1

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.row = 0
        self.col = 0
        self.steps = 0
        self.done = False
        return self.observation()

    def observation(self) -> np.ndarray:
        obs = np.zeros(self.observation_size)
        if 0 <= self.row < self.size and 0 <= self.col < self.size:
            obs[self.row * self.size + self.col] = 1.0
        return obs

    def legal_actions(self):
        return [0, 1]

    def step(self, action: int) -> StepResult:
        if self.done:
            raise RuntimeError("step() on a finished episode")
        if action == 0:
            self.col += 1
        elif action == 1:
            self.row += 1
        else:
            raise IllegalMove(f"grid action must be 0 (right) or 1 (down), got {action}")
        self.steps += 1
        at_goal = self.row == self.size - 1 and self.col == self.size - 1
        self.done = at_goal or self.steps >= self.max_steps
        return StepResult(self.observation(), 10.0 if at_goal else 0.0, self.done)

    def clone(self) -> "MiniGrid":
        other = MiniGrid.__new__(MiniGrid)
        other.size = self.size
        other.observation_size = self.observation_size
        other.max_steps = self.max_steps
        other.row = self.row
        other.col = self.col
        other.steps = self.steps
        other.done = self.done
        return other


def make_env(name: str, grid_size: int = 4):
    if name == "cartpole":
        return CartPole()
    if name == "tictactoe":
        return TicTacToe()
    if name == "minigrid":
        return MiniGrid(grid_size)
    raise ValueError(f"unknown environment {name!r}")
