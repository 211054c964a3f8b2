"""Epsilon-greedy Q-learning scheduler over all 2^N user masks.

Q(s, a) is linear in a small state featurisation with one weight vector per
mask. Deliberately small: only the act/learn interface matters to the rest of the
package.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..store import atomic_write
from .env import MimoEnv, MimoEnvConfig, make_step

CHECKPOINT_VERSION = 1


def all_masks(n_users: int) -> np.ndarray:
    idx = np.arange(2 ** n_users)
    return ((idx[:, None] >> np.arange(n_users)[None, :]) & 1).astype(np.int8)


def mask_index(mask) -> int:
    return int(sum(int(b) << u for u, b in enumerate(mask)))


@dataclass(frozen=True)
class AgentConfig:
    lr: float = 0.02
    gamma: float = 0.5
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_episodes: int = 150
    eval_epsilon: float = 0.05
    train_horizon: int = 200
    seed: int = 0

    def epsilon_at(self, episode: int) -> float:
        frac = min(1.0, episode / max(1, self.eps_decay_episodes))
        return self.eps_start + frac * (self.eps_end - self.eps_start)


class QAgent:
    def __init__(self, n_users: int = 7, config: AgentConfig | None = None, seed: int | None = None):
        self.config = config or AgentConfig()
        self.n_users = n_users
        self.masks = all_masks(n_users)
        self.n_actions = len(self.masks)
        self.n_features = 1 + 2 * n_users
        self.weights = np.zeros((self.n_actions, self.n_features))
        self.episodes = 0
        self.rng = np.random.default_rng(self.config.seed if seed is None else seed)

    def features(self, kpis: dict) -> np.ndarray:
        dtu = np.asarray(kpis["DTU"], dtype=float)
        mse = np.asarray(kpis["MSE"], dtype=float)
        return np.concatenate(([1.0], dtu / (1.0 + dtu.max()), -np.log(np.maximum(mse, 1e-6)) / 4.0))

    def q_values(self, kpis: dict) -> np.ndarray:
        return self.weights @ self.features(kpis)

    def act(self, kpis: dict, epsilon: float | None = None) -> list[int]:
        """Pick a mask; the random draw happens every step so runs stay aligned across steering modes."""
        if epsilon is None:
            epsilon = self.config.eval_epsilon
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        explore = self.rng.random() < epsilon
        random_action = int(self.rng.integers(self.n_actions))
        if explore:
            a = random_action
        else:
            a = int(np.argmax(self.q_values(kpis)))
        return self.masks[a].tolist()

    def learn(self, kpis: dict, mask, reward: float, next_kpis: dict) -> float:
        """One Q-learning update; returns the TD error."""
        a = mask_index(mask)
        phi = self.features(kpis)
        target = reward + self.config.gamma * float(np.max(self.weights @ self.features(next_kpis)))
        td = target - float(self.weights[a] @ phi)
        self.weights[a] += self.config.lr * td * phi
        return td

    # -- checkpoints -------------------------------------------------------

    def to_dict(self, env_config: MimoEnvConfig | None = None) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "episodes": self.episodes,
            "n_users": self.n_users,
            "agent_config": asdict(self.config),
            "env_config_hash": env_config.digest() if env_config else None,
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "QAgent":
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
        agent = cls(d["n_users"], AgentConfig(**d["agent_config"]), seed=seed)
        agent.weights = np.asarray(d["weights"], dtype=float)
        agent.episodes = d["episodes"]
        return agent

    def save(self, path: str | Path, env_config: MimoEnvConfig | None = None) -> None:
        atomic_write(path, json.dumps(self.to_dict(env_config), separators=(",", ":")))

    @classmethod
    def load(cls, path: str | Path, seed: int | None = None) -> "QAgent":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f), seed=seed)

    def clone(self, seed: int | None = None) -> "QAgent":
        return QAgent.from_dict(self.to_dict(), seed=seed)


def agent_act(agent: QAgent, state: dict, epsilon: float) -> list[int]:
    return agent.act(state, epsilon)


def agent_learn(agent: QAgent, transition: tuple) -> float:
    return agent.learn(*transition)


def train(env_config: MimoEnvConfig, episodes: int, checkpoints=(50, 100, 200),
          agent_config: AgentConfig | None = None, store=None,
          symbolizer=None) -> tuple[dict[int, dict], list[float]]:
    """Train from scratch; returns ({episode: checkpoint dict}, per-episode returns).

    When ``store`` is given, every training step is symbolized (with
    ``symbolizer``, or a fresh one) and recorded, so the store holds the
    agent's full prior experience, exploratory actions included.
    """
    if store is not None and symbolizer is None:
        from ..symbolizer import SymbolizerState

        symbolizer = SymbolizerState(env_config.schema)
    agent_config = agent_config or AgentConfig(seed=env_config.seed)
    agent = QAgent(env_config.n_users, agent_config)
    horizon = agent_config.train_horizon
    saved: dict[int, dict] = {}
    returns: list[float] = []
    if 0 in checkpoints:
        saved[0] = agent.to_dict(env_config)
    for ep in range(episodes):
        env = MimoEnv(env_config.replace(seed=env_config.seed * 100_003 + ep, horizon=horizon))
        eps = agent_config.epsilon_at(ep)
        kpis = env.observe()
        total = 0.0
        if store is not None:
            symbolizer.reset()
            store.start_sequence()
        for t in range(horizon):
            if store is not None:
                sym_state = symbolizer.symbolize_state(make_step(t, env.state, [0] * env.schema.n_users, 0.0))
            mask = agent.act(kpis, eps)
            _, r = env.step(mask)
            if store is not None:
                store.record(sym_state, symbolizer.symbolize_action({"mask": mask}), mask, r, t)
            nxt = env.observe()
            agent.learn(kpis, mask, r, nxt)
            kpis = nxt
            total += r
        returns.append(total)
        agent.episodes = ep + 1
        if agent.episodes in checkpoints:
            saved[agent.episodes] = agent.to_dict(env_config)
    if store is not None:
        store.start_sequence()
        store.trackers = symbolizer.trackers_to_dict()
    return saved, returns


def moving_average(values, window: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    out = np.empty_like(values)
    for i in range(len(values)):
        out[i] = values[max(0, i - window + 1): i + 1].mean()
    return out
