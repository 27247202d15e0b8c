"""PUCT tree search over the learned model.

Selection maximizes normalized Q plus the prior-weighted exploration term;
backup maintains per-edge running means of the discounted returns

    ret = reward + discount * value(child)

so an edge's Q includes its own reward. A node's visit count includes the
expansion visit (its prediction value is the node's first value sample),
which keeps sqrt(N(s)) at 1 for fresh nodes and makes priors dominate
until edges are visited. For two-player games values flip sign per ply and
in-tree rewards are zero (board mode reports no model reward).

greedy_path() descends by max visit count to harvest an off-policy action
sequence, topping the tree up with extra simulations when the walk hits an
unvisited frontier before the requested minimum length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .networks import Network


class MinMaxBounds:
    """Running min/max of observed Q values, for [0, 1] normalization."""

    __slots__ = ("min_q", "max_q")

    def __init__(self):
        self.min_q = math.inf
        self.max_q = -math.inf

    def update(self, q: float):
        if q < self.min_q:
            self.min_q = q
        if q > self.max_q:
            self.max_q = q

    def normalize(self, q: float) -> float:
        if self.max_q <= self.min_q:
            return q
        return (q - self.min_q) / (self.max_q - self.min_q)


@dataclass(slots=True)
class EdgeStats:
    action: int
    prior: float
    visit_count: int = 0
    q_value: float = 0.0
    reward: float = 0.0
    child: "TreeNode | None" = None


class TreeNode:
    __slots__ = ("hidden_state", "to_play", "edges", "visit_count", "value_sum",
                 "prediction_value")

    def __init__(self, hidden_state, to_play: int = 1):
        self.hidden_state = hidden_state
        self.to_play = to_play
        self.edges: list[EdgeStats] = []
        self.visit_count = 0
        self.value_sum = 0.0
        self.prediction_value = 0.0

    @property
    def expanded(self) -> bool:
        return bool(self.edges)

    @property
    def value(self) -> float:
        if self.visit_count == 0:
            return self.prediction_value
        return self.value_sum / self.visit_count


@dataclass
class SearchParams:
    num_simulations: int
    discount: float
    c1: float = 1.25
    c2: float = 19652.0
    noise_alpha: float = 0.25
    noise_fraction: float = 0.25


@dataclass
class SearchResult:
    root: TreeNode
    policy: np.ndarray        # visit-count distribution, zero on illegal actions
    visit_counts: np.ndarray
    root_value: float


class SearchRecorder:
    """Collects raw simulation events so tests can replay the statistics."""

    def __init__(self):
        self.simulations = []

    def record(self, path, leaf_value: float):
        self.simulations.append(
            ([(id(node), e.action, e.reward) for node, e in path], leaf_value)
        )


def select_action_ucb(node: TreeNode, bounds: MinMaxBounds, c1: float, c2: float) -> EdgeStats:
    """Pick the edge maximizing normalized Q + prior exploration bonus.

    Ties resolve to the lowest action index (edges are action-ordered and
    only a strictly greater score displaces the incumbent). Unvisited edges
    score a flat 0 for the value term; running 0 through the bounds instead
    would make selection sensitive to uniform value offsets.
    """
    total_edge_visits = sum(e.visit_count for e in node.edges)
    sqrt_n = math.sqrt(node.visit_count)
    explore = c1 + math.log((total_edge_visits + c2 + 1.0) / c2)
    best = None
    best_score = -math.inf
    for e in node.edges:
        q = bounds.normalize(e.q_value) if e.visit_count > 0 else 0.0
        score = q + e.prior * sqrt_n / (1.0 + e.visit_count) * explore
        if score > best_score:
            best_score = score
            best = e
    return best


def expand_node(node: TreeNode, policy: np.ndarray, value: float,
                legal_actions=None):
    """Attach edges (restricted to legal actions when given, with priors
    renormalized) and count the expansion as the node's first visit."""
    if legal_actions is None:
        actions = range(len(policy))
        priors = policy
    else:
        actions = list(legal_actions)
        if not actions:
            raise ValueError("cannot expand a node with no legal actions")
        mass = sum(policy[a] for a in actions)
        if mass <= 0.0:
            priors = {a: 1.0 / len(actions) for a in actions}
        else:
            priors = {a: policy[a] / mass for a in actions}
    node.edges = [EdgeStats(action=a, prior=float(priors[a])) for a in actions]
    node.prediction_value = float(value)
    node.visit_count += 1
    node.value_sum += float(value)


def add_root_noise(node: TreeNode, rng: np.random.Generator,
                   alpha: float, fraction: float):
    noise = rng.dirichlet([alpha] * len(node.edges))
    for e, n in zip(node.edges, noise):
        e.prior = (1.0 - fraction) * e.prior + fraction * float(n)


def backup(path, leaf_value: float, discount: float, bounds: MinMaxBounds,
           two_player: bool = False):
    """Walk the path leaf-to-root applying the running-mean Q update.

    `path` is a list of (node, edge) pairs root-first; `leaf_value` is the
    new leaf's predicted value from the perspective of its player to move.
    """
    g = leaf_value
    for node, edge in reversed(path):
        ret = edge.reward + discount * (-g if two_player else g)
        edge.q_value = (edge.visit_count * edge.q_value + ret) / (edge.visit_count + 1)
        edge.visit_count += 1
        bounds.update(edge.q_value)
        g = ret
        node.visit_count += 1
        node.value_sum += g


def simulate_once(start: TreeNode, net: Network, params: SearchParams,
                  bounds: MinMaxBounds, two_player: bool, recorder=None):
    """One selection -> expansion -> backup pass from `start`."""
    node = start
    path = []
    while True:
        edge = select_action_ucb(node, bounds, params.c1, params.c2)
        path.append((node, edge))
        if edge.child is None:
            break
        node = edge.child
    parent, edge = path[-1]
    out = net.recurrent_inference(parent.hidden_state, edge.action)
    child = TreeNode(out.hidden_state,
                     to_play=-parent.to_play if two_player else parent.to_play)
    expand_node(child, out.policy, out.value)
    edge.reward = out.reward
    edge.child = child
    backup(path, out.value, params.discount, bounds, two_player)
    if recorder is not None:
        recorder.record(path, out.value)


def run_search(net: Network, obs: np.ndarray, params: SearchParams,
               legal_actions=None, to_play: int = 1, two_player: bool = False,
               rng: np.random.Generator | None = None, add_noise: bool = False,
               recorder=None, bounds: MinMaxBounds | None = None) -> SearchResult:
    """Expand the root from `obs` and run exactly num_simulations passes."""
    out = net.initial_inference(obs)
    root = TreeNode(out.hidden_state, to_play=to_play)
    expand_node(root, out.policy, out.value, legal_actions=legal_actions)
    if add_noise:
        if rng is None:
            raise ValueError("root noise requires an rng")
        add_root_noise(root, rng, params.noise_alpha, params.noise_fraction)
    if bounds is None:
        bounds = MinMaxBounds()
    for _ in range(params.num_simulations):
        simulate_once(root, net, params, bounds, two_player, recorder=recorder)
    visits = np.zeros(net.action_size, dtype=np.int64)
    for e in root.edges:
        visits[e.action] = e.visit_count
    total = visits.sum()
    policy = visits / total if total > 0 else visits.astype(np.float64)
    return SearchResult(root=root, policy=policy, visit_counts=visits,
                        root_value=root.value)


def policy_from_visits(visits: np.ndarray, temperature: float) -> np.ndarray:
    """Visit counts -> action distribution, N^(1/tau) normalized.

    temperature 0 is the greedy limit: a one-hot on the max count with ties
    going to the lowest action index.
    """
    visits = np.asarray(visits, dtype=np.float64)
    if visits.sum() <= 0:
        raise ValueError("policy_from_visits needs at least one visit")
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if temperature == 0.0:
        out = np.zeros_like(visits)
        out[int(np.argmax(visits))] = 1.0
        return out
    scaled = (visits / visits.max()) ** (1.0 / temperature)
    return scaled / scaled.sum()


@dataclass
class GreedyPath:
    """Max-visit descent from a search root.

    actions[i] leads from path node i to node i+1; values has one extra
    trailing entry (the deepest node). policies[i] is node i's visit
    distribution, None for entries fabricated by budget-exhausted padding.
    """

    actions: list = field(default_factory=list)
    values: list = field(default_factory=list)
    policies: list = field(default_factory=list)


def greedy_path(root: TreeNode, net: Network, params: SearchParams,
                bounds: MinMaxBounds, min_length: int, max_length: int,
                two_player: bool = False) -> GreedyPath:
    """Follow max-visit edges from the root, at least min_length deep.

    When the walk hits a node with no visited child before min_length, extra
    simulations (batches of num_simulations, capped at 10x overall) are run
    from that node. If the budget runs out the path is padded by repeating
    the last action and the deepest node's prediction value.
    """
    path = GreedyPath(values=[root.value])
    node = root
    budget = 10 * params.num_simulations
    while len(path.actions) < max_length:
        best = None
        for e in node.edges:
            if e.visit_count > 0 and (best is None or e.visit_count > best.visit_count):
                best = e
        if best is None:
            if len(path.actions) >= min_length:
                break
            if budget <= 0:
                while len(path.actions) < min_length:
                    path.actions.append(path.actions[-1] if path.actions else 0)
                    path.policies.append(None)
                    path.values.append(node.prediction_value)
                break
            run = min(params.num_simulations, budget)
            for _ in range(run):
                simulate_once(node, net, params, bounds, two_player)
            budget -= run
            continue
        visits = np.zeros(net.action_size, dtype=np.float64)
        for e in node.edges:
            visits[e.action] = e.visit_count
        path.policies.append(visits / visits.sum())
        path.actions.append(best.action)
        node = best.child
        path.values.append(node.value)
    return path
