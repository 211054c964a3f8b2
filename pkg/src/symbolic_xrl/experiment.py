"""Shared protocol for steering experiments (used by the CLI and the acceptance suite).

The knowledge store is the agent's own training experience: every training
step, exploratory ones included, is symbolized and recorded. Evaluation
episodes label with the quartile markers learned during training, so the
steered, unsteered and forced arms of a seed all speak the same symbols.
"""

from __future__ import annotations

from typing import Mapping

from .playground import AgentConfig, MimoEnv, MimoEnvConfig, QAgent, train
from .steering import EpisodeResult, SteeringConfig, run_steered_episode
from .store import ExperienceStore
from .symbolizer import SymbolizerState


def train_with_store(env_config: MimoEnvConfig, episodes: int = 200, checkpoints=(50, 100, 200),
                     agent_config: AgentConfig | None = None, eps_rel: float = 0.01,
                     floor: float = 1e-9) -> tuple[dict[int, dict], list[float], dict]:
    """Train and return (checkpoints, returns, store snapshot)."""
    store = ExperienceStore()
    symbolizer = SymbolizerState(env_config.schema, eps_rel, floor)
    ckpts, returns = train(env_config, episodes, checkpoints, agent_config, store=store, symbolizer=symbolizer)
    return ckpts, returns, store.to_dict()


def run_episode(env_config: MimoEnvConfig, checkpoint: Mapping, config: SteeringConfig, seed: int,
                snapshot: Mapping | None = None, horizon: int | None = None, epsilon: float | None = None,
                eps_rel: float = 0.01, floor: float = 1e-9) -> EpisodeResult:
    """One evaluation episode; env and agent randomness both derive from ``seed``.

    ``accel`` mode always starts from an empty store; other modes copy ``snapshot``.
    """
    env = MimoEnv(env_config.replace(seed=seed))
    agent = QAgent.from_dict(checkpoint, seed=seed)
    symbolizer = SymbolizerState(env.schema, eps_rel, floor)
    if snapshot and snapshot.get("trackers"):
        symbolizer.load_trackers(snapshot["trackers"])
    if config.mode == "accel" or not snapshot or config.mode in ("off", "force"):
        store = ExperienceStore()
    else:
        store = ExperienceStore.from_dict(snapshot)
    T = horizon or env_config.horizon
    return run_steered_episode(env, agent, store, config, T, symbolizer=symbolizer, epsilon=epsilon)


def relative_improvement(steered: float, baseline: float) -> float:
    return (steered - baseline) / abs(baseline)
