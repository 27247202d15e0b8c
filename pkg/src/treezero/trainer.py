"""Self-play generation, the combined four-weight loss, and the train loop.

The loss on a batch anchored at real-game positions is

    alpha' * value(real) + beta' * policy(real)
  + gamma' * value(sim)  + delta' * policy(sim)

where value(.) bundles the reward and value terms of a K-step unroll,
policy(.) the policy terms, the primed weights are the pairwise-normalized
(alpha, beta, gamma_w, delta), and "sim" batches carry targets from greedy
tree paths replayed on environment clones. Weight quadruples follow a
step-indexed schedule; a stage with gamma_w = delta = 0 (and no later
off-policy stage) disables trajectory harvesting entirely.

The loop is strictly sequential: generate games_per_cycle games, then run
batches_per_cycle optimizer steps, evaluating every eval_interval steps.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .envs import make_env
from .mcts import MinMaxBounds, SearchParams, policy_from_visits, run_search
from .networks import (MODE_BOARD, MODE_MDP, SGD, Network, policy_loss,
                       reward_loss, value_loss)
from .replay import ReplayBuffer, GameHistory, TrainingBatch, build_sim_trajectory, sample_batch


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# loss weights

@dataclass(frozen=True)
class LossWeights:
    alpha: float
    beta: float
    gamma_w: float
    delta: float

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.gamma_w, self.delta)
        if any(v < 0 for v in vals):
            raise ValueError(f"loss weights must be non-negative, got {vals}")
        if self.alpha + self.gamma_w <= 0:
            raise ValueError("alpha + gamma_w must be positive")
        if self.beta + self.delta <= 0:
            raise ValueError("beta + delta must be positive")

    @property
    def off_policy_active(self) -> bool:
        return self.gamma_w > 0 or self.delta > 0


def scale_weights(w: LossWeights) -> tuple[float, float, float, float]:
    """Pairwise normalization: value weights sum to 1, policy weights sum
    to 1, and the real/sim ratio within each pair is preserved."""
    value_total = w.alpha + w.gamma_w
    policy_total = w.beta + w.delta
    return (w.alpha / value_total, w.beta / policy_total,
            w.gamma_w / value_total, w.delta / policy_total)


class WeightSchedule:
    """Step-indexed stages of LossWeights; the first stage must start at 0
    and stage starts must strictly increase."""

    def __init__(self, stages: list[tuple[int, LossWeights]]):
        if not stages:
            raise ValueError("schedule needs at least one stage")
        starts = [s for s, _ in stages]
        if starts[0] != 0:
            raise ValueError("first stage must start at step 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("stage starts must strictly increase")
        self.starts = starts
        self.weights = [w for _, w in stages]

    def at(self, step: int) -> LossWeights:
        idx = bisect.bisect_right(self.starts, step) - 1
        return self.weights[idx]

    def sim_needed(self, step: int) -> bool:
        """True if the current or any later stage uses off-policy targets."""
        idx = bisect.bisect_right(self.starts, step) - 1
        return any(w.off_policy_active for w in self.weights[idx:])

    @classmethod
    def from_stages(cls, raw: list) -> "WeightSchedule":
        return cls([(int(s[0]), LossWeights(*map(float, s[1:]))) for s in raw])


# ---------------------------------------------------------------------------
# combined loss

def unroll_losses(net: Network, batch: TrainingBatch, unroll_steps: int,
                  dynamics_grad_scale: float = 0.5):
    """K-step unroll -> (value component, policy component) scalars.

    The value component bundles reward and value losses. Per-step losses
    for k >= 1 are scaled by 1/K and the gradient into each dynamics
    output is halved, so every application of g sees a comparable signal.
    (`dynamics_grad_scale` exists so gradient-checking tests can disable
    the halving; training always uses the default.)
    """
    B = len(batch)
    mode, support = net.mode, net.support_size
    state = net.represent(ad.const(batch.observations))
    value_logits, policy_logits = net.predict(state)
    v_total = ad.mean_vec(value_loss(value_logits, batch.target_values[:, 0], mode, support))
    p_total = ad.weighted_sum(policy_loss(policy_logits, batch.target_policies[:, 0]),
                              batch.policy_mask[:, 0] / B)
    step_scale = 1.0 / unroll_steps
    for k in range(1, unroll_steps + 1):
        state, reward_logits = net.dynamics(state, batch.actions[:, k - 1])
        state = ad.scale_grad(state, dynamics_grad_scale)
        value_logits, policy_logits = net.predict(state)
        v_k = ad.mean_vec(value_loss(value_logits, batch.target_values[:, k], mode, support))
        r_k = reward_loss(reward_logits, batch.target_rewards[:, k], mode, support)
        if r_k is not None:
            v_k = ad.add(v_k, ad.mean_vec(r_k))
        p_k = ad.weighted_sum(policy_loss(policy_logits, batch.target_policies[:, k]),
                              batch.policy_mask[:, k] / B)
        v_total = ad.add(v_total, ad.mul_const(v_k, step_scale))
        p_total = ad.add(p_total, ad.mul_const(p_k, step_scale))
    return v_total, p_total


def combined_loss(net: Network, real_batch, sim_batch, weights: LossWeights,
                  unroll_steps: int):
    """Scaled four-term loss. Batches whose weights are both zero may be
    passed as None; their forward pass is skipped. Returns (loss tensor,
    metrics dict of the unscaled component values)."""
    a, b, g, d = scale_weights(weights)
    metrics = {"loss_real_value": 0.0, "loss_real_policy": 0.0,
               "loss_sim_value": 0.0, "loss_sim_policy": 0.0}
    total = None

    def accumulate(term, weight):
        nonlocal total
        if weight == 0.0:
            return
        piece = ad.mul_const(term, weight)
        total = piece if total is None else ad.add(total, piece)

    if a > 0 or b > 0:
        if real_batch is None:
            raise ValueError("real batch required for nonzero alpha/beta")
        rv, rp = unroll_losses(net, real_batch, unroll_steps)
        metrics["loss_real_value"] = rv.item()
        metrics["loss_real_policy"] = rp.item()
        accumulate(rv, a)
        accumulate(rp, b)
    if g > 0 or d > 0:
        if sim_batch is None:
            raise ValueError("sim batch required for nonzero gamma_w/delta")
        sv, sp = unroll_losses(net, sim_batch, unroll_steps)
        metrics["loss_sim_value"] = sv.item()
        metrics["loss_sim_policy"] = sp.item()
        accumulate(sv, g)
        accumulate(sp, d)
    metrics["loss_total"] = total.item()
    return total, metrics


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class EvalRecord:
    step: int
    eval_mean: float
    eval_min: float
    eval_max: float
    loss_real_value: float
    loss_real_policy: float
    loss_sim_value: float
    loss_sim_policy: float
    alpha: float
    beta: float
    gamma_w: float
    delta: float
    buffer_games: int
    opponent_mean: float | None = None   # second-seat total, two-player only


def play_eval_episode(net: Network, env, params: SearchParams, seed: int):
    """One greedy episode (temperature 0, no noise). Returns the episode
    reward for single-player envs, else (first seat, second seat) totals."""
    obs = env.reset(seed)
    totals = {1: 0.0, -1: 0.0}
    while not env.done:
        mover = env.to_play
        result = run_search(net, obs, params, legal_actions=env.legal_actions(),
                            to_play=mover, two_player=env.two_player)
        action = int(np.argmax(policy_from_visits(result.visit_counts, 0.0)))
        step = env.step(action)
        totals[mover] += step.reward
        obs = step.observation
    if env.two_player:
        return totals[1], totals[-1]
    return totals[1]


def evaluate(net: Network, env_factory, params: SearchParams, episodes: int,
             rng: np.random.Generator):
    """Play `episodes` greedy episodes on fresh envs; returns (rewards,
    opponent_rewards-or-None). Two-player envs self-play both seats."""
    rewards = []
    opponent = []
    for _ in range(episodes):
        env = env_factory()
        seed = int(rng.integers(2 ** 31))
        outcome = play_eval_episode(net, env, params, seed)
        if env.two_player:
            rewards.append(outcome[0])
            opponent.append(outcome[1])
        else:
            rewards.append(outcome)
    return np.asarray(rewards), (np.asarray(opponent) if opponent else None)


# ---------------------------------------------------------------------------
# the training loop

@dataclass
class TrainResult:
    records: list
    solved_at: int | None
    steps: int


class Trainer:
    def __init__(self, config):
        self.config = config
        self.env_factory = lambda: make_env(config.env, config.grid_size)
        proto = self.env_factory()
        self.two_player = proto.two_player
        mode = MODE_BOARD if proto.two_player else MODE_MDP
        self.action_size = proto.action_size
        self.net = Network(proto.observation_size, proto.action_size,
                           config.hidden_size, config.support_size, mode,
                           seed=config.seed)
        self.optimizer = SGD(self.net.parameters(), lr=config.lr,
                             momentum=config.momentum,
                             weight_decay=config.weight_decay,
                             decay_rate=config.lr_decay_rate,
                             decay_steps=config.lr_decay_steps)
        self.buffer = ReplayBuffer(config.buffer_capacity, config.n_steps,
                                   config.discount, proto.two_player)
        self.params = SearchParams(num_simulations=config.num_simulations,
                                   discount=config.discount,
                                   c1=config.c1, c2=config.c2,
                                   noise_alpha=config.dirichlet_alpha,
                                   noise_fraction=config.dirichlet_fraction)
        self.schedule = WeightSchedule.from_stages(config.weight_stages)
        seqs = np.random.SeedSequence(config.seed).spawn(7)
        (self.env_rng, self.act_rng, self.noise_rng, self.anchor_rng,
         self.real_filler_rng, self.sim_filler_rng, self.eval_rng) = \
            [np.random.default_rng(s) for s in seqs]
        self.steps = 0
        self.solved_at: int | None = None
        self._recent_eval_rewards = []

    def acting_temperature(self) -> float:
        """Temperature for converting root visits into the acting policy,
        from the staged schedule when one is configured."""
        stages = self.config.temperature_stages
        if not stages:
            return self.config.temperature
        idx = bisect.bisect_right([s[0] for s in stages], self.steps) - 1
        return float(stages[idx][1])

    # -- generation --

    def self_play_game(self) -> GameHistory:
        env = self.env_factory()
        obs = env.reset(int(self.env_rng.integers(2 ** 31)))
        game = GameHistory()
        harvest = self.schedule.sim_needed(self.steps)
        max_path = self.config.unroll_steps + self.config.n_steps
        while not env.done:
            mover = env.to_play
            bounds = MinMaxBounds()
            result = run_search(self.net, obs, self.params,
                                legal_actions=env.legal_actions(),
                                to_play=mover, two_player=self.two_player,
                                rng=self.noise_rng, add_noise=True,
                                bounds=bounds)
            sim = None
            if harvest:
                sim = build_sim_trajectory(env, result.root, self.net,
                                           self.params, bounds,
                                           self.config.unroll_steps, max_path)
            pi_act = policy_from_visits(result.visit_counts,
                                        self.acting_temperature())
            action = int(self.act_rng.choice(self.action_size, p=pi_act))
            step = env.step(action)
            game.append(obs, action, step.reward, result.policy,
                        result.root_value, mover, sim)
            obs = step.observation
        return game

    # -- optimization --

    def train_one_batch(self) -> dict:
        weights = self.schedule.at(self.steps)
        a, b, g, d = scale_weights(weights)
        with_sim = g > 0 or d > 0
        with_real = a > 0 or b > 0
        real, sim = sample_batch(self.buffer, self.anchor_rng,
                                 self.config.batch_size,
                                 self.config.unroll_steps, self.action_size,
                                 with_sim, self.real_filler_rng,
                                 self.sim_filler_rng, with_real=with_real)
        loss, metrics = combined_loss(self.net, real, sim, weights,
                                      self.config.unroll_steps)
        if not np.isfinite(loss.data):
            raise TrainingDiverged(f"non-finite loss at step {self.steps}: {metrics}")
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        return metrics

    # -- evaluation --

    def evaluate_now(self, loss_means: dict) -> EvalRecord:
        rewards, opponent = evaluate(self.net, self.env_factory, self.params,
                                     self.config.eval_episodes, self.eval_rng)
        weights = self.schedule.at(self.steps)
        self._recent_eval_rewards.append(rewards)
        window = self.config.solved_window_evals
        if len(self._recent_eval_rewards) > window:
            self._recent_eval_rewards = self._recent_eval_rewards[-window:]
        if (self.solved_at is None and self.config.solved_threshold is not None
                and len(self._recent_eval_rewards) == window):
            pooled = np.concatenate(self._recent_eval_rewards)
            if pooled.mean() >= self.config.solved_threshold:
                self.solved_at = self.steps
        return EvalRecord(
            step=self.steps,
            eval_mean=float(rewards.mean()),
            eval_min=float(rewards.min()),
            eval_max=float(rewards.max()),
            loss_real_value=loss_means.get("loss_real_value", 0.0),
            loss_real_policy=loss_means.get("loss_real_policy", 0.0),
            loss_sim_value=loss_means.get("loss_sim_value", 0.0),
            loss_sim_policy=loss_means.get("loss_sim_policy", 0.0),
            alpha=weights.alpha, beta=weights.beta,
            gamma_w=weights.gamma_w, delta=weights.delta,
            buffer_games=len(self.buffer),
            opponent_mean=float(opponent.mean()) if opponent is not None else None,
        )

    # -- the loop --

    def run(self, record_sink=None) -> TrainResult:
        cfg = self.config
        records = []
        accum = {}
        accum_count = 0
        stop = False
        while self.steps < cfg.total_steps and not stop:
            for _ in range(cfg.games_per_cycle):
                self.buffer.add_game(self.self_play_game())
            for _ in range(cfg.batches_per_cycle):
                if self.steps >= cfg.total_steps:
                    break
                metrics = self.train_one_batch()
                self.steps += 1
                for k, v in metrics.items():
                    accum[k] = accum.get(k, 0.0) + v
                accum_count += 1
                if self.steps % cfg.eval_interval == 0:
                    means = {k: v / accum_count for k, v in accum.items()}
                    record = self.evaluate_now(means)
                    records.append(record)
                    if record_sink is not None:
                        record_sink(record)
                    accum, accum_count = {}, 0
                    if self.solved_at is not None and cfg.stop_on_solved:
                        stop = True
                        break
        return TrainResult(records=records, solved_at=self.solved_at,
                           steps=self.steps)
