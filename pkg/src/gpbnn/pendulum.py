"""Pendulum swing-up with revolution-dependent dynamics and ensemble Q-learning.

The angle update is damped by a factor g(theta) that changes across
revolutions (the bar winds up a thread), so the optimal Q function is only
locally periodic in theta.  Angles are cumulative (not wrapped) with theta=0
upright and theta=pi hanging down; torque is restricted to {-1, 0, +1}.

Agents hold an anchored ensemble of Q networks (one of three architecture
kinds) and explore Thompson-style: one member is sampled per episode and
followed greedily.  Everything is seeded and reproducible.
"""

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import configio, networks
from .kernels import PriorSpec
from .rng import substream
from .warping import PeriodicWarp

__all__ = [
    "EnvParams",
    "PendulumState",
    "PendulumEnv",
    "AgentConfig",
    "EnsembleQAgent",
    "ReplayBuffer",
    "angle_wrap",
    "friction_factor",
    "env_step",
    "build_q_arch",
    "agent_act",
    "agent_update",
    "qvalue_slice",
    "train_run",
    "save_agent",
    "load_agent",
]

TORQUES = (-1.0, 0.0, 1.0)
ARCH_KINDS = ("relu", "periodic", "periodic_x_tanh")


def angle_wrap(x):
    """Wrap an angle to (-pi, pi]."""
    w = (x + np.pi) % (2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w) if isinstance(w, np.ndarray) else (np.pi if w == -np.pi else w)


@dataclass(frozen=True)
class EnvParams:
    dt: float = 0.05
    gravity: float = 10.0
    mass: float = 1.0
    length: float = 1.0
    max_speed: float = 8.0
    episode_len: int = 200
    friction_mode: str = "sigmoid"  # or "literal"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.friction_mode not in ("sigmoid", "literal"):
            raise ValueError(f"unknown friction_mode {self.friction_mode!r}")


@dataclass
class PendulumState:
    theta: float  # cumulative angle, radians; 0 = upright, pi = down
    theta_dot: float


def friction_factor(theta, mode="sigmoid"):
    """Revolution-dependent damping of the angle update.

    ``sigmoid``: 2 / (1 + exp(-theta/3)); smooth and positive with g(0) = 1.
    ``literal``: 2 / (1 - exp(-theta/3)), the singular variant, guarded at
    |1 - exp(-theta/3)| >= 1e-3.
    """
    if mode == "sigmoid":
        return 2.0 / (1.0 + math.exp(-theta / 3.0))
    denom = 1.0 - math.exp(-theta / 3.0)
    if abs(denom) < 1e-3:
        denom = math.copysign(1e-3, denom if denom != 0 else 1.0)
    return 2.0 / denom


def env_step(state: PendulumState, action, params: EnvParams, t=0):
    """One transition; ``done`` fires only at the episode-length cutoff.

    Reward is the canonical swing-up cost on the pre-step state,
    -(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 torque^2).
    """
    if action not in TORQUES:
        raise ValueError(f"action must be one of {TORQUES}, got {action!r}")
    if not (np.isfinite(state.theta) and np.isfinite(state.theta_dot)):
        raise ValueError(f"non-finite state {state}")
    torque = float(action)
    g, m, l = params.gravity, params.mass, params.length
    cost = angle_wrap(state.theta) ** 2 + 0.1 * state.theta_dot**2 + 0.001 * torque**2
    theta_ddot = 3.0 * g / (2.0 * l) * math.sin(state.theta) + 3.0 / (m * l * l) * torque
    theta_dot = state.theta_dot + theta_ddot * params.dt
    theta_dot = float(np.clip(theta_dot, -params.max_speed, params.max_speed))
    theta = state.theta + friction_factor(state.theta, params.friction_mode) * theta_dot * params.dt
    done = (t + 1) >= params.episode_len
    return PendulumState(theta, theta_dot), -cost, done


class PendulumEnv:
    """Stateful wrapper tracking the step counter for episode termination."""

    def __init__(self, params: EnvParams = None):
        self.params = params or EnvParams()
        self.state = None
        self.t = 0

    def reset(self, seed):
        rng = substream(seed)
        self.state = PendulumState(
            theta=float(rng.uniform(-np.pi, np.pi)),
            theta_dot=float(rng.uniform(-1.0, 1.0)),
        )
        self.t = 0
        return self.state

    def step(self, action):
        self.state, reward, done = env_step(self.state, action, self.params, self.t)
        self.t += 1
        return self.state, reward, done


class ReplayBuffer:
    """Fixed-capacity transition store with oldest-first eviction."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._states = np.zeros((capacity, 2))
        self._actions = np.zeros(capacity, dtype=int)
        self._rewards = np.zeros(capacity)
        self._next_states = np.zeros((capacity, 2))
        self._cursor = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, state, action_idx, reward, next_state):
        i = self._cursor
        self._states[i] = (state.theta, state.theta_dot)
        self._actions[i] = action_idx
        self._rewards[i] = reward
        self._next_states[i] = (next_state.theta, next_state.theta_dot)
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size, rng):
        idx = rng.integers(0, self._size, size=min(batch_size, self._size))
        return (
            self._states[idx],
            self._actions[idx],
            self._rewards[idx],
            self._next_states[idx],
        )


# ---------------------------------------------------------------------------
# agents
# ---------------------------------------------------------------------------


@dataclass
class AgentConfig:
    """Q-ensemble hyperparameters.

    The two ambiguous layer variances are both exposed: ``sigma2_w_hidden``
    (hidden-to-hidden, default 1/50) and ``sigma2_w_out`` (output, default
    10.0), in the kernel-level convention (drawn variance is the value
    divided by fan-in).  Targets bootstrap through the time-limit
    termination since it is not a real terminal state.
    """

    kind: str = "periodic_x_tanh"
    n_members: int = 3
    width: int = 50
    gamma: float = 0.98
    replay_capacity: int = 50_000
    batch_size: int = 32
    target_update_interval: int = 100
    update_every: int = 1
    learning_rate: float = 1e-2
    sigma2_n: float = 1.0
    sigma2_w1: float = 1.0
    sigma2_b1: float = 1.0
    sigma2_w_hidden: float = 1.0 / 50.0
    sigma2_b_hidden: float = 1.0 / 50.0
    sigma2_w_out: float = 10.0
    sigma2_b_out: float = 10.0
    tanh_sigma2: float = 0.2  # long-length-scale envelope prior

    def __post_init__(self):
        if self.kind not in ARCH_KINDS:
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        # gamma = 0 (pure myopia) is permitted so the no-bootstrap degenerate
        # case stays expressible; gamma = 1 is not.
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.n_members < 1:
            raise ValueError("n_members must be >= 1")


def build_q_arch(cfg: AgentConfig):
    """Q-network tree for a kind; inputs (theta, theta_dot), one output per torque."""
    relu = networks.Activation("relu")
    layers = (
        networks.LayerSpec(relu, cfg.width, cfg.sigma2_w1, cfg.sigma2_b1),
        networks.LayerSpec(relu, cfg.width, cfg.sigma2_w_hidden, cfg.sigma2_b_hidden),
    )
    warp = PeriodicWarp(2.0 * np.pi, in_dim=2, warp_dims=(0,))
    if cfg.kind == "relu":
        return networks.Deep(layers, in_dim=2, sigma2_w2=cfg.sigma2_w_out,
                             sigma2_b2=cfg.sigma2_b_out, out_dim=len(TORQUES))
    if cfg.kind == "periodic":
        return networks.Deep(layers, in_dim=2, warp=warp, sigma2_w2=cfg.sigma2_w_out,
                             sigma2_b2=cfg.sigma2_b_out, out_dim=len(TORQUES))
    periodic_units = networks.Deep(layers, in_dim=2, warp=warp)
    envelope_units = networks.Basic(
        networks.Activation("tanh"),
        PriorSpec(cfg.tanh_sigma2, cfg.tanh_sigma2, 1.0),
        cfg.width,
        in_dim=2,
        dims=(0,),
    )
    return networks.HiddenMul(
        (periodic_units, envelope_units),
        sigma2_w2=cfg.sigma2_w_out,
        sigma2_b2=cfg.sigma2_b_out,
        out_dim=len(TORQUES),
    )


class EnsembleQAgent:
    """Anchored ensemble of Q networks with per-episode Thompson exploration."""

    def __init__(self, config: AgentConfig, seed=0):
        self.config = config
        self.arch = build_q_arch(config)
        self.prior_var = networks.prior_variances(self.arch)
        std = np.sqrt(self.prior_var)
        dim = std.shape[0]
        m = config.n_members
        self.anchors = np.stack(
            [substream(seed, 1, j).standard_normal(dim) * std for j in range(m)]
        )
        self.members = self.anchors.copy()
        self.targets = self.anchors.copy()
        self._adam_m = np.zeros((m, dim))
        self._adam_v = np.zeros((m, dim))
        self._adam_t = 0
        self._updates = 0
        self.active_member = 0
        self.train_size = 1  # replay size at last update; scales the anchor pull

    def begin_episode(self, seed):
        """Thompson step: sample the member to act greedily with this episode."""
        self.active_member = int(substream(seed).integers(0, self.config.n_members))

    def q_values(self, states, member=None, use_target=False):
        theta = (self.targets if use_target else self.members)[
            self.active_member if member is None else member
        ]
        params = networks.unpack_params(self.arch, theta)
        return networks.forward_batch(self.arch, params, np.atleast_2d(states))

    def q_mean(self, states):
        """Q averaged over ensemble members."""
        qs = [self.q_values(states, member=j) for j in range(self.config.n_members)]
        return np.mean(qs, axis=0)


def agent_act(agent: EnsembleQAgent, state, seed=None):
    """Greedy torque under the episode's active member.

    Passing ``seed`` re-runs Thompson member selection first.  Ties break
    toward the lowest action index (torque order -1, 0, +1).
    """
    if seed is not None:
        agent.begin_episode(seed)
    q = agent.q_values(np.array([[state.theta, state.theta_dot]]))[0]
    return TORQUES[int(np.argmax(q))]


def agent_update(agent: EnsembleQAgent, batch):
    """One anchored gradient step per member on TD targets.

    Targets are r + gamma * max_a Q_target,member(s', a); the anchor pull is
    weighted by 1/N with N the replay size feeding the batches.  Target
    networks refresh every ``target_update_interval`` updates.
    """
    states, action_idx, rewards, next_states = batch
    if states.shape[0] == 0:
        raise ValueError("empty replay batch")
    cfg = agent.config
    n_batch = states.shape[0]
    agent._adam_t += 1
    b1, b2, eps = 0.9, 0.999, 1e-8
    for j in range(cfg.n_members):
        q_next = agent.q_values(next_states, member=j, use_target=True)
        targets = rewards + cfg.gamma * q_next.max(axis=1)
        theta = agent.members[j]
        params = networks.unpack_params(agent.arch, theta)
        q, vjp = networks.value_and_vjp(agent.arch, params, states)
        G = np.zeros_like(q)
        rows = np.arange(n_batch)
        G[rows, action_idx] = 2.0 * (q[rows, action_idx] - targets) / cfg.sigma2_n / n_batch
        grad = networks.pack_params(agent.arch, vjp(G))
        if not np.all(np.isfinite(grad)):
            raise RuntimeError(f"non-finite loss gradient for member {j}")
        grad += 2.0 * (theta - agent.anchors[j]) / agent.prior_var / max(agent.train_size, 1)
        agent._adam_m[j] = b1 * agent._adam_m[j] + (1 - b1) * grad
        agent._adam_v[j] = b2 * agent._adam_v[j] + (1 - b2) * grad * grad
        mhat = agent._adam_m[j] / (1 - b1**agent._adam_t)
        vhat = agent._adam_v[j] / (1 - b2**agent._adam_t)
        agent.members[j] = theta - cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
    agent._updates += 1
    if agent._updates % cfg.target_update_interval == 0:
        agent.targets = agent.members.copy()
    return agent


def qvalue_slice(agent: EnsembleQAgent, theta_grid, theta_dot=0.0, action=0.0):
    """Mean ensemble Q over a theta grid at fixed angular velocity and torque."""
    theta_grid = np.asarray(theta_grid, dtype=float)
    states = np.stack([theta_grid, np.full(theta_grid.shape, theta_dot)], axis=1)
    a_idx = TORQUES.index(float(action))
    return agent.q_mean(states)[:, a_idx]


def train_run(agent_cfg: AgentConfig, episodes, seed, env_params: EnvParams = None,
              out_dir=None):
    """Train an agent for a number of episodes; returns (curve, agent).

    ``curve`` has one (episode, cumulative_reward) row per episode.  When
    ``out_dir`` is given, writes learning_curve.csv and agent.json there.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = PendulumEnv(env_params)
    agent = EnsembleQAgent(agent_cfg, seed=seed)
    buffer = ReplayBuffer(agent_cfg.replay_capacity)
    batch_rng = substream(seed, 2)
    curve = np.zeros((episodes, 2))
    for ep in range(episodes):
        state = env.reset(seed * 1_000_003 + 3 * ep + 1)
        agent.begin_episode(seed * 1_000_003 + 3 * ep + 2)
        total = 0.0
        done = False
        step = 0
        while not done:
            action = agent_act(agent, state)
            next_state, reward, done = env.step(action)
            buffer.push(state, TORQUES.index(action), reward, next_state)
            state = next_state
            total += reward
            if len(buffer) >= agent_cfg.batch_size and step % agent_cfg.update_every == 0:
                agent.train_size = len(buffer)
                agent_update(agent, buffer.sample(agent_cfg.batch_size, batch_rng))
            step += 1
        curve[ep] = (ep, total)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "learning_curve.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "cumulative_reward"])
            for ep, total in curve:
                writer.writerow([int(ep), repr(float(total))])
        save_agent(agent, os.path.join(out_dir, "agent.json"))
    return curve, agent


def save_agent(agent: EnsembleQAgent, path):
    doc = {
        "schema_version": configio.SCHEMA_VERSION,
        "kind": agent.config.kind,
        "agent_config": {
            k: getattr(agent.config, k)
            for k in (
                "kind", "n_members", "width", "gamma", "replay_capacity", "batch_size",
                "target_update_interval", "update_every", "learning_rate", "sigma2_n",
                "sigma2_w1", "sigma2_b1", "sigma2_w_hidden", "sigma2_b_hidden",
                "sigma2_w_out", "sigma2_b_out", "tanh_sigma2",
            )
        },
        "arch": configio.arch_to_config(agent.arch),
        "members": agent.members.tolist(),
        "anchors": agent.anchors.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_agent(path) -> EnsembleQAgent:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != configio.SCHEMA_VERSION:
        raise ValueError(f"unsupported snapshot version {doc.get('schema_version')!r}")
    cfg = AgentConfig(**doc["agent_config"])
    agent = EnsembleQAgent(cfg, seed=0)
    agent.members = np.asarray(doc["members"], dtype=float)
    agent.anchors = np.asarray(doc["anchors"], dtype=float)
    agent.targets = agent.members.copy()
    return agent
