"""Representation, dynamics and prediction networks plus their training kit.

The model is the usual latent-planning triple:

    h (represent):  observation           -> hidden state
    g (dynamics):   hidden state + action -> next hidden state, reward
    f (predict):    hidden state          -> value, policy logits

Each of the three is a 2-layer perceptron with one ReLU hidden layer of
width 2 * hidden_size. Value and reward heads emit logits over a discrete
support of `support_size` points centered on zero; support_size == 1 means
a raw scalar head trained with squared error ("board" mode, where the
reward head exists but is never trained).

Tensors from autodiff are used for training passes; the infer_* methods are
plain numpy and carry no graph (tree search calls them thousands of times).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MODE_MDP = "mdp"
MODE_BOARD = "board"


# ---------------------------------------------------------------------------
# support codecs

def support_points(size: int) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ValueError(f"support size must be odd and >= 1, got {size}")
    half = (size - 1) // 2
    return np.arange(-half, half + 1, dtype=np.float64)


def scalar_to_support(x, size: int) -> np.ndarray:
    """Two-hot encoding of scalars onto the integer support, clamped at the edges.

    scalar_to_support(2.4, 21) puts 0.6 on point 2 and 0.4 on point 3.
    """
    half = (size - 1) // 2
    x = np.clip(np.asarray(x, dtype=np.float64), -half, half)
    low = np.floor(x)
    frac = x - low
    out = np.zeros(x.shape + (size,), dtype=np.float64)
    low_idx = (low + half).astype(np.int64)
    high_idx = np.minimum(low_idx + 1, size - 1)
    np.put_along_axis(out, low_idx[..., None], (1.0 - frac)[..., None], axis=-1)
    # additive: when low_idx == high_idx (right edge) frac is 0 anyway
    np.put_along_axis(
        out,
        high_idx[..., None],
        np.take_along_axis(out, high_idx[..., None], axis=-1) + frac[..., None],
        axis=-1,
    )
    return out


def support_to_scalar(probs, size: int):
    """Expectation over the support; exact inverse of scalar_to_support in range."""
    probs = np.asarray(probs, dtype=np.float64)
    return probs @ support_points(size)


CONTRACT_EPS = 0.001


def contract_scalar(x):
    """Signed square-root shrink applied to values/rewards before support
    encoding, so returns far beyond the support half-width (Cartpole reaches
    the hundreds) stay distinguishable instead of all clamping to the edge."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * (np.sqrt(np.abs(x) + 1.0) - 1.0) + CONTRACT_EPS * x


def expand_scalar(y):
    """Closed-form inverse of contract_scalar."""
    y = np.asarray(y, dtype=np.float64)
    inner = (np.sqrt(1.0 + 4.0 * CONTRACT_EPS * (np.abs(y) + 1.0 + CONTRACT_EPS))
             - 1.0) / (2.0 * CONTRACT_EPS)
    return np.sign(y) * (inner ** 2 - 1.0)


def normalize_state(state: np.ndarray) -> np.ndarray:
    """Inference-path twin of autodiff.normalize_rows (last axis to [0, 1])."""
    mn = state.min(axis=-1, keepdims=True)
    d = state.max(axis=-1, keepdims=True) - mn
    d = np.where(d < 1e-5, d + 1e-5, d)
    return (state - mn) / d


# ---------------------------------------------------------------------------
# layers and the model

class Dense:
    def __init__(self, in_size: int, out_size: int, rng: np.random.Generator,
                 zero_init: bool = False):
        if zero_init:
            self.w = ad.param(np.zeros((in_size, out_size)))
            self.b = ad.param(np.zeros(out_size))
        else:
            bound = 1.0 / np.sqrt(in_size)
            self.w = ad.param(rng.uniform(-bound, bound, size=(in_size, out_size)))
            self.b = ad.param(rng.uniform(-bound, bound, size=(out_size,)))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add_bias(ad.matmul(x, self.w), self.b)

    def infer(self, x: np.ndarray) -> np.ndarray:
        return x @ self.w.data + self.b.data


@dataclass
class NetworkOutput:
    """Inference-mode result: scalars and probabilities, no graph."""

    value: float
    reward: float
    policy: np.ndarray
    hidden_state: np.ndarray


class Network:
    """The h/g/f triple over a shared hidden size."""

    def __init__(self, obs_size: int, action_size: int, hidden_size: int,
                 support_size: int, mode: str, seed: int = 0):
        if mode not in (MODE_MDP, MODE_BOARD):
            raise ValueError(f"unknown mode {mode!r}")
        self.obs_size = obs_size
        self.action_size = action_size
        self.hidden_size = hidden_size
        self.support_size = support_size
        self.mode = mode
        rng = np.random.default_rng(seed)
        wide = 2 * hidden_size
        self.repr_hidden = Dense(obs_size, wide, rng)
        self.repr_out = Dense(wide, hidden_size, rng)
        self.dyn_hidden = Dense(hidden_size + action_size, wide, rng)
        self.dyn_state = Dense(wide, hidden_size, rng)
        # head output layers start at zero: an untrained model then predicts
        # value 0, reward 0 and a uniform policy, so early search is driven
        # by priors and noise instead of amplified initialization noise
        self.dyn_reward = Dense(wide, support_size, rng, zero_init=True)
        self.pred_hidden = Dense(hidden_size, wide, rng)
        self.pred_value = Dense(wide, support_size, rng, zero_init=True)
        self.pred_policy = Dense(wide, action_size, rng, zero_init=True)
        self._eye = np.eye(action_size, dtype=np.float64)

    # -- training passes (autodiff) --

    def represent(self, obs: Tensor) -> Tensor:
        # hidden states are min-max scaled to [0, 1] per sample, matching
        # the action one-hot range the dynamics input concatenates with
        return ad.normalize_rows(self.repr_out(ad.relu(self.repr_hidden(obs))))

    def dynamics(self, state: Tensor, actions: np.ndarray) -> tuple[Tensor, Tensor]:
        onehot = ad.const(self._eye[np.asarray(actions, dtype=np.int64)])
        hidden = ad.relu(self.dyn_hidden(ad.concat(state, onehot)))
        return ad.normalize_rows(self.dyn_state(hidden)), self.dyn_reward(hidden)

    def predict(self, state: Tensor) -> tuple[Tensor, Tensor]:
        hidden = ad.relu(self.pred_hidden(state))
        return self.pred_value(hidden), self.pred_policy(hidden)

    # -- inference passes (numpy only) --

    def _value_scalar(self, logits: np.ndarray) -> float:
        if self.support_size == 1:
            return float(logits[0])
        return float(expand_scalar(
            support_to_scalar(ad.softmax(logits), self.support_size)))

    def infer_represent(self, obs: np.ndarray) -> np.ndarray:
        h = self.repr_hidden.infer(obs)
        return normalize_state(self.repr_out.infer(np.maximum(h, 0.0)))

    def infer_dynamics(self, state: np.ndarray, action: int):
        x = np.concatenate([state, self._eye[action]])
        h = np.maximum(self.dyn_hidden.infer(x), 0.0)
        return normalize_state(self.dyn_state.infer(h)), self.dyn_reward.infer(h)

    def infer_predict(self, state: np.ndarray):
        h = np.maximum(self.pred_hidden.infer(state), 0.0)
        return self.pred_value.infer(h), self.pred_policy.infer(h)

    def initial_inference(self, obs: np.ndarray) -> NetworkOutput:
        state = self.infer_represent(np.asarray(obs, dtype=np.float64))
        value_logits, policy_logits = self.infer_predict(state)
        return NetworkOutput(
            value=self._value_scalar(value_logits),
            reward=0.0,
            policy=ad.softmax(policy_logits),
            hidden_state=state,
        )

    def recurrent_inference(self, state: np.ndarray, action: int) -> NetworkOutput:
        next_state, reward_logits = self.infer_dynamics(state, action)
        value_logits, policy_logits = self.infer_predict(next_state)
        # the reward head is untrained in board mode; report it as 0 there
        reward = 0.0 if self.mode == MODE_BOARD else self._value_scalar(reward_logits)
        return NetworkOutput(
            value=self._value_scalar(value_logits),
            reward=reward,
            policy=ad.softmax(policy_logits),
            hidden_state=next_state,
        )

    # -- parameter plumbing --

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for name in ("repr_hidden", "repr_out", "dyn_hidden", "dyn_state",
                     "dyn_reward", "pred_hidden", "pred_value", "pred_policy"):
            layer = getattr(self, name)
            out[f"{name}.w"] = layer.w
            out[f"{name}.b"] = layer.b
        return out

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.parameters()
        if set(state) != set(params):
            raise ValueError("parameter name mismatch in state dict")
        for k, v in state.items():
            if params[k].data.shape != v.shape:
                raise ValueError(f"shape mismatch for {k}")
            params[k].data = np.asarray(v, dtype=np.float64).copy()


# ---------------------------------------------------------------------------
# per-step losses

def policy_loss(policy_logits: Tensor, target: np.ndarray) -> Tensor:
    return ad.cross_entropy_logits(policy_logits, target)


def value_loss(value_out: Tensor, target: np.ndarray, mode: str, support_size: int) -> Tensor:
    if mode == MODE_BOARD:
        return ad.squared_error(value_out, target)
    return ad.cross_entropy_logits(
        value_out, scalar_to_support(contract_scalar(target), support_size))


def reward_loss(reward_out: Tensor, target: np.ndarray, mode: str, support_size: int):
    """None in board mode: the reward term is dropped there."""
    if mode == MODE_BOARD:
        return None
    return ad.cross_entropy_logits(
        reward_out, scalar_to_support(contract_scalar(target), support_size))


def loss_terms(value_out: Tensor, reward_out, policy_out: Tensor,
               target_reward: float, target_value: float, target_policy: np.ndarray,
               mode: str, support_size: int) -> tuple[float, float, float]:
    """Single-step (l_r, l_v, l_p) as floats, for one unbatched prediction."""
    tp = np.asarray(target_policy, dtype=np.float64)[None, :]
    l_p = float(policy_loss(policy_out, tp).data[0])
    l_v = float(value_loss(value_out, np.array([target_value]), mode, support_size).data[0])
    if mode == MODE_BOARD or reward_out is None:
        l_r = 0.0
    else:
        l_r = float(reward_loss(reward_out, np.array([target_reward]), mode, support_size).data[0])
    return l_r, l_v, l_p


# ---------------------------------------------------------------------------
# optimizer

class SGD:
    """Momentum SGD with L2 weight decay and a staircase learning rate.

    The decay schedule multiplies the base rate by `decay_rate` every
    `decay_steps` optimizer steps. Parameters that received no gradient in
    the current step are left untouched.
    """

    def __init__(self, params: dict[str, Tensor], lr: float, momentum: float = 0.9,
                 weight_decay: float = 1e-4, decay_rate: float = 0.9,
                 decay_steps: int = 1000):
        self.params = params
        self.base_lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.decay_rate = decay_rate
        self.decay_steps = decay_steps
        self.steps = 0
        self._velocity = {k: np.zeros_like(t.data) for k, t in params.items()}

    @property
    def lr(self) -> float:
        return self.base_lr * self.decay_rate ** (self.steps // self.decay_steps)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def step(self):
        lr = self.lr
        for name, t in self.params.items():
            if t.grad is None:
                continue
            if not np.all(np.isfinite(t.grad)):
                raise ad.GradientError(f"non-finite gradient for {name}")
            g = t.grad + self.weight_decay * t.data
            v = self._velocity[name]
            v *= self.momentum
            v += g
            t.data -= lr * v
        self.steps += 1


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(path, network: Network, meta: dict | None = None):
    payload = {f"param/{k}": v for k, v in network.state_dict().items()}
    payload["version"] = np.array(CHECKPOINT_VERSION)
    payload["obs_size"] = np.array(network.obs_size)
    payload["action_size"] = np.array(network.action_size)
    payload["hidden_size"] = np.array(network.hidden_size)
    payload["support_size"] = np.array(network.support_size)
    payload["mode"] = np.array(network.mode)
    for k, v in (meta or {}).items():
        payload[f"meta/{k}"] = np.asarray(v)
    np.savez(path, **payload)


def load_checkpoint(path) -> tuple[Network, dict]:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        net = Network(
            obs_size=int(z["obs_size"]),
            action_size=int(z["action_size"]),
            hidden_size=int(z["hidden_size"]),
            support_size=int(z["support_size"]),
            mode=str(z["mode"]),
        )
        state = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
        net.load_state_dict(state)
        meta = {k[len("meta/"):]: z[k] for k in z.files if k.startswith("meta/")}
    return net, meta
