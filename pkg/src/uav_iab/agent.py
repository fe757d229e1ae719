"""Deep Q-learning core: a small fully-connected value network trained by
hand-rolled backpropagation, a FIFO replay buffer, adaptive exploration
control, and value-based (direction-aware) action selection."""

import json
from collections import deque
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .config import RunConfig
from .rlenv import DELTAS, N_ACTIONS, decode_action, encode_action

ALL_POS_DELTAS = tuple(product(DELTAS, repeat=3))   # 27 vectors, lexicographic


class DivergedNetworkError(RuntimeError):
    """Forward pass hit non-finite weights."""


@dataclass
class AgentHyperparams:
    learning_rate: float = 5e-5
    gamma: float = 0.95
    batch_size: int = 32
    buffer_capacity: int = 2000
    epsilon_start: float = 1.0
    epsilon_restart: float = 0.1
    epsilon_end: float = 1e-4
    epsilon_decay: float = 0.995
    reward_drop_threshold: float = 0.15
    upper_reward_threshold: float = 0.8
    grouping_threshold: float = 0.0
    train_iterations: int = 40
    steps_per_iteration: int = 25
    validation_iterations: int = 8
    hidden_sizes: tuple = (16, 16)
    target_sync_every: int = 1
    output_init_scale: float = 0.01

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "AgentHyperparams":
        return cls(learning_rate=cfg.learning_rate, gamma=cfg.gamma,
                   batch_size=cfg.batch_size, buffer_capacity=cfg.buffer_capacity,
                   epsilon_start=cfg.epsilon_start, epsilon_restart=cfg.epsilon_restart,
                   epsilon_end=cfg.epsilon_end, epsilon_decay=cfg.epsilon_decay,
                   reward_drop_threshold=cfg.reward_drop_threshold,
                   upper_reward_threshold=cfg.upper_reward_threshold,
                   grouping_threshold=cfg.grouping_threshold,
                   train_iterations=cfg.train_iterations,
                   steps_per_iteration=cfg.steps_per_iteration,
                   validation_iterations=cfg.validation_iterations,
                   hidden_sizes=tuple(cfg.hidden_sizes),
                   target_sync_every=cfg.target_sync_every,
                   output_init_scale=cfg.output_init_scale)


# --- network ----------------------------------------------------------------

@dataclass
class QParams:
    """Online weights of the value network plus the target copy."""
    weights: list                     # [W1, W2, W3] with shapes 4x16, 16x16, 16x81
    biases: list
    target_weights: list = field(default_factory=list)
    target_biases: list = field(default_factory=list)

    def sync_target(self):
        self.target_weights = [w.copy() for w in self.weights]
        self.target_biases = [b.copy() for b in self.biases]

    def layer_sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]


def init_params(rng: np.random.Generator, in_dim: int = 4,
                hidden_sizes=(16, 16), out_dim: int = N_ACTIONS,
                output_init_scale: float = 0.01) -> QParams:
    """Uniform +-1/sqrt(fan_in) init; the output layer is shrunk so early
    greedy choices follow learned differences instead of init noise."""
    sizes = [in_dim, *hidden_sizes, out_dim]
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        bound = 1.0 / np.sqrt(sizes[i])
        scale = output_init_scale if i == len(sizes) - 2 else 1.0
        weights.append(scale * rng.uniform(-bound, bound, size=(sizes[i], sizes[i + 1])))
        biases.append(scale * rng.uniform(-bound, bound, size=sizes[i + 1]))
    p = QParams(weights=weights, biases=biases)
    p.sync_target()
    return p


def _forward(weights, biases, x: np.ndarray):
    """Rectifier hidden layers, linear output; returns (q, activations)."""
    acts = [x]
    h = x
    n = len(weights)
    for i in range(n - 1):
        h = np.maximum(h @ weights[i] + biases[i], 0.0)
        acts.append(h)
    q = h @ weights[-1] + biases[-1]
    return q, acts


def q_forward(params: QParams, state_encoded: np.ndarray,
              use_target: bool = False) -> np.ndarray:
    w = params.target_weights if use_target else params.weights
    b = params.target_biases if use_target else params.biases
    x = np.atleast_2d(np.asarray(state_encoded, dtype=float))
    q, _ = _forward(w, b, x)
    if not np.all(np.isfinite(q)):
        raise DivergedNetworkError("diverged network")
    return q[0] if np.ndim(state_encoded) == 1 else q


def loss_and_grads(weights, biases, states: np.ndarray, actions: np.ndarray,
                   targets: np.ndarray):
    """Sum of squared errors on the acted outputs, with analytic gradients.

    Non-acted outputs receive zero gradient.
    """
    q, acts = _forward(weights, biases, states)
    b_idx = np.arange(len(actions))
    err = q[b_idx, actions] - targets
    loss = float(np.sum(err * err))

    dq = np.zeros_like(q)
    dq[b_idx, actions] = 2.0 * err
    g_w = [None] * len(weights)
    g_b = [None] * len(weights)
    delta = dq
    for i in range(len(weights) - 1, -1, -1):
        g_w[i] = acts[i].T @ delta
        g_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * (acts[i] > 0.0)
    return loss, g_w, g_b


def q_train_step(params: QParams, batch, hp: AgentHyperparams,
                 sync_counter: int = 0) -> float:
    """One plain gradient-descent step toward the bootstrap targets.

    batch = (states, actions, rewards, next_states, terminal); the target
    network provides the bootstrap values and is re-synced per config.
    """
    states, actions, rewards, next_states, terminal = batch
    q_next, _ = _forward(params.target_weights, params.target_biases, next_states)
    y = rewards + hp.gamma * q_next.max(axis=1) * (1.0 - terminal)
    loss, g_w, g_b = loss_and_grads(params.weights, params.biases,
                                    states, actions, y)
    lr = hp.learning_rate
    for i in range(len(params.weights)):
        params.weights[i] -= lr * g_w[i]
        params.biases[i] -= lr * g_b[i]
    if (sync_counter + 1) % hp.target_sync_every == 0:
        params.sync_target()
    return loss


# --- replay buffer ------------------------------------------------------------

class ReplayBuffer:
    """FIFO ring of transitions."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._data = deque(maxlen=capacity)

    def push(self, transition):
        self._data.append(transition)

    def __len__(self):
        return len(self._data)

    def __iter__(self):
        return iter(self._data)

    def sample(self, rng: np.random.Generator, batch_size: int):
        if not self._data:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._data), size=batch_size)
        rows = [self._data[i] for i in idx]
        states = np.array([r[0] for r in rows])
        actions = np.array([r[1] for r in rows], dtype=int)
        rewards = np.array([r[2] for r in rows])
        next_states = np.array([r[3] for r in rows])
        terminal = np.array([r[4] for r in rows], dtype=float)
        return states, actions, rewards, next_states, terminal


# --- value-based action selection --------------------------------------------

@dataclass
class ActionPools:
    same: tuple        # position deltas with positive dot vs. previous move
    opposite: tuple


def action_grouping(prev_pos_delta, beta: float = 0.0) -> ActionPools:
    """Partition the 27 position vectors by the sign of the dot product with
    the previous move: same-consequence (> beta) vs. opposite (<= beta)."""
    px, py, pz = prev_pos_delta
    same, opp = [], []
    for v in ALL_POS_DELTAS:
        if px * v[0] + py * v[1] + pz * v[2] > beta:
            same.append(v)
        else:
            opp.append(v)
    return ActionPools(same=tuple(same), opposite=tuple(opp))


def greedy_action(qvals: np.ndarray) -> int:
    return int(np.argmax(qvals))        # first max = lowest action id


def action_selection(r_p: float, r_t: float, epsilon: float, pools: ActionPools,
                     qvals: np.ndarray, rng: np.random.Generator) -> int:
    """Exploration draws the position delta from the pool matching the last
    reward trend (empty pool falls back to all 27); tilt is always uniform.
    Exploitation is the plain greedy argmax."""
    if rng.random() < epsilon:
        pool = pools.same if r_t >= r_p else pools.opposite
        if not pool:
            pool = ALL_POS_DELTAS
        pos = pool[int(rng.integers(len(pool)))]
        tilt = DELTAS[int(rng.integers(3))]
        return encode_action(tilt, pos)
    return greedy_action(qvals)


def uniform_selection(epsilon: float, qvals: np.ndarray,
                      rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return greedy_action(qvals)


def adaptive_exploration(r_p: float, r_t: float, epsilon: float,
                         hp: AgentHyperparams) -> float:
    """Restart on a reward collapse, pin low in the good zone, decay otherwise."""
    if r_p - r_t > hp.reward_drop_threshold:
        return hp.epsilon_restart
    if r_t > hp.upper_reward_threshold:
        return hp.epsilon_end
    return max(epsilon * hp.epsilon_decay, hp.epsilon_end)


# --- training loop ------------------------------------------------------------

VARIANT_AE_VAS = "ae-vas"
VARIANT_VAS_RETRAINED = "vas-retrained"
VARIANT_BASELINE = "baseline"

TAG_A_INIT = 100
TAG_A_EXPLORE = 101
TAG_A_BATCH = 102


def _agent_rng(agent_seed: int, tag: int, phase: int = 0) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=agent_seed, spawn_key=(tag, phase)))


@dataclass
class TraceRow:
    global_step: int
    phase: int
    iteration: int
    step_in_iteration: int
    state: object
    action_id: int
    reward: float
    epsilon: float
    kpi: object


@dataclass
class TrainingResult:
    trace: list
    params: QParams
    variant: str


def fresh_params(agent_seed: int, phase: int, hp: AgentHyperparams) -> QParams:
    return init_params(_agent_rng(agent_seed, TAG_A_INIT, phase),
                       hidden_sizes=hp.hidden_sizes,
                       output_init_scale=hp.output_init_scale)


def run_training(env, hp: AgentHyperparams, variant: str,
                 agent_seed: int) -> TrainingResult:
    """Full multi-phase run of the chosen algorithm variant.

    ae-vas: adaptive exploration + value-based selection, continual learning.
    vas-retrained: value-based selection, plain decay, model and buffer
        reinitialized at each phase boundary (fresh start per phase).
    baseline: uniform exploration, plain decay, continual learning.
    """
    if variant not in (VARIANT_AE_VAS, VARIANT_VAS_RETRAINED, VARIANT_BASELINE):
        raise ValueError(f"unknown variant {variant!r}")
    rng_x = _agent_rng(agent_seed, TAG_A_EXPLORE)
    rng_b = _agent_rng(agent_seed, TAG_A_BATCH)
    params = fresh_params(agent_seed, 0, hp)
    buffer = ReplayBuffer(hp.buffer_capacity)
    epsilon = hp.epsilon_start
    r_p = 0.0
    r_t = 0.0
    pools = action_grouping((0, 0, 0), hp.grouping_threshold)
    trace = []
    global_step = 0
    sync_counter = 0
    iteration_global = 0

    for phase in range(env.n_phases):
        if phase > 0:
            env.advance_phase()
            if variant == VARIANT_VAS_RETRAINED:
                params = fresh_params(agent_seed, phase, hp)
                buffer = ReplayBuffer(hp.buffer_capacity)
                epsilon = hp.epsilon_start
                r_p = 0.0
                r_t = 0.0
                pools = action_grouping((0, 0, 0), hp.grouping_threshold)
        n_iters = hp.train_iterations if phase == 0 else hp.validation_iterations
        for it in range(n_iters):
            iteration_global += 1
            for t in range(hp.steps_per_iteration):
                s_enc = env.encoded_state()
                qvals = q_forward(params, s_enc)
                if variant == VARIANT_BASELINE:
                    a = uniform_selection(epsilon, qvals, rng_x)
                else:
                    a = action_selection(r_p, r_t, epsilon, pools, qvals, rng_x)
                r_p = r_t
                outcome = env.step(a)
                r_t = outcome.reward
                terminal = t == hp.steps_per_iteration - 1
                buffer.push((s_enc, a, r_t, env.encode(outcome.next_state), terminal))
                if variant != VARIANT_BASELINE:
                    _, pos_delta = decode_action(a)
                    pools = action_grouping(pos_delta, hp.grouping_threshold)
                if len(buffer) >= hp.batch_size:
                    batch = buffer.sample(rng_b, hp.batch_size)
                    q_train_step(params, batch, hp, sync_counter)
                    sync_counter += 1
                if variant == VARIANT_AE_VAS:
                    epsilon = adaptive_exploration(r_p, r_t, epsilon, hp)
                else:
                    epsilon = max(epsilon * hp.epsilon_decay, hp.epsilon_end)
                trace.append(TraceRow(
                    global_step=global_step, phase=phase, iteration=iteration_global,
                    step_in_iteration=t, state=outcome.next_state, action_id=a,
                    reward=r_t, epsilon=epsilon,
                    kpi=getattr(outcome, "kpi", None)))
                global_step += 1
    return TrainingResult(trace=trace, params=params, variant=variant)


# --- serialization ------------------------------------------------------------

def params_to_json(params: QParams) -> str:
    obj = {
        "layer_sizes": params.layer_sizes(),
        "weights": [w.ravel().tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }
    return json.dumps(obj)


def params_from_json(text: str) -> QParams:
    obj = json.loads(text)
    sizes = obj["layer_sizes"]
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        w = np.array(obj["weights"][i], dtype=float).reshape(sizes[i], sizes[i + 1])
        weights.append(w)
        biases.append(np.array(obj["biases"][i], dtype=float))
    p = QParams(weights=weights, biases=biases)
    p.sync_target()
    return p
