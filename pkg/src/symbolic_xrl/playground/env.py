"""Synthetic massive-MIMO user scheduling environment.

Channels are log-normal gains around a per-user large-scale mean, evolving
as AR(1) in the log domain. Users in the same group are strongly
correlated, so co-scheduling them costs SINR.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from ..core import SchemaA2, Step

SPEED_AR = {"low": 0.99, "high": 0.9}


@dataclass(frozen=True)
class MimoEnvConfig:
    n_users: int = 7
    group_sizes: tuple[int, ...] = (3, 2, 2)
    rho_in: float = 0.8
    rho_out: float = 0.1
    speed: str = "high"
    los: bool = False
    noise_power: float = 0.1
    gain_std_los: float = 0.1
    gain_std_nlos: float = 0.25
    mse_scale: float = 1.0
    mse_drift_ar: float = 0.9999
    mse_spread_los: float = 0.15
    mse_spread_nlos: float = 0.35
    mse_noise: float = 0.001
    beta: float = 0.1
    horizon: int = 2500
    seed: int = 0
    layout_seed: int = 0
    ar: float | None = None

    def __post_init__(self):
        if sum(self.group_sizes) != self.n_users:
            raise ValueError("group sizes must sum to n_users")
        if not (0 <= self.rho_in <= 1 and 0 <= self.rho_out <= 1):
            raise ValueError("correlations must lie in [0, 1]")
        if self.ar is None and self.speed not in SPEED_AR:
            raise ValueError(f"unknown speed profile {self.speed!r}")
        if not 0 < self.ar_coefficient < 1:
            raise ValueError("AR coefficient must lie in (0, 1)")
        if self.noise_power <= 0:
            raise ValueError("noise power must be positive")

    @property
    def ar_coefficient(self) -> float:
        return self.ar if self.ar is not None else SPEED_AR[self.speed]

    @property
    def gain_std(self) -> float:
        return self.gain_std_los if self.los else self.gain_std_nlos

    @property
    def mse_spread(self) -> float:
        return self.mse_spread_los if self.los else self.mse_spread_nlos

    @property
    def schema(self) -> SchemaA2:
        return SchemaA2(n_users=self.n_users, group_sizes=tuple(self.group_sizes))

    def replace(self, **changes) -> "MimoEnvConfig":
        d = asdict(self)
        d.update(changes)
        d["group_sizes"] = tuple(d["group_sizes"])
        return MimoEnvConfig(**d)

    def digest(self) -> str:
        d = asdict(self)
        d.pop("seed")
        d.pop("horizon")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class EnvState:
    gain: np.ndarray
    mse: np.ndarray
    dtu: np.ndarray
    group: np.ndarray
    t: int = 0

    def kpis(self) -> dict:
        return {
            "MSE": [float(x) for x in self.mse],
            "DTU": [float(x) for x in self.dtu],
            "G": [int(x) for x in self.group],
        }

    def copy(self) -> "EnvState":
        return EnvState(self.gain.copy(), self.mse.copy(), self.dtu.copy(), self.group.copy(), self.t)


class MimoEnv:
    def __init__(self, config: MimoEnvConfig):
        self.config = config
        self.schema = config.schema
        group = np.array(self.schema.group_of())
        self.correlation = np.where(group[:, None] == group[None, :], config.rho_in, config.rho_out)
        np.fill_diagonal(self.correlation, 0.0)
        self.group = group
        self.reset()

    def reset(self, seed: int | None = None) -> EnvState:
        cfg = self.config
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        # large-scale gains belong to the deployment, not the episode
        self.mean_gain = np.random.default_rng(cfg.layout_seed).uniform(0.4, 2.0, size=cfg.n_users)
        self._log_fade = self.rng.normal(0.0, cfg.gain_std, size=cfg.n_users)
        self._mse_drift = self.rng.normal(0.0, cfg.mse_spread, size=cfg.n_users)
        gain = self.mean_gain * np.exp(self._log_fade)
        self.state = EnvState(gain=gain, mse=self._mse(), dtu=np.zeros(cfg.n_users),
                              group=self.group.copy(), t=0)
        return self.state

    def _mse(self) -> np.ndarray:
        # estimation error follows mobility and large-scale SNR, drifting slowly
        cfg = self.config
        a = cfg.ar_coefficient
        base = cfg.mse_scale * (1 - a * a) * (1 + cfg.gain_std ** 2) / self.mean_gain
        noise = np.abs(self.rng.normal(0.0, cfg.mse_noise, size=cfg.n_users))
        return base * np.exp(self._mse_drift) * (1.0 + noise)

    def rates(self, mask, gain: np.ndarray | None = None) -> np.ndarray:
        """Per-user spectral efficiency log2(1 + SINR) for scheduled users, 0 elsewhere."""
        mask = np.asarray(mask, dtype=float)
        gain = self.state.gain if gain is None else gain
        interference = self.correlation @ (mask * gain)
        sinr = gain / (self.config.noise_power + interference)
        return np.where(mask > 0, np.log2(1.0 + sinr), 0.0)

    def reward(self, mask, state: EnvState | None = None) -> float:
        state = self.state if state is None else state
        mask = np.asarray(mask)
        rate = self.rates(mask, state.gain).sum()
        fairness = (mask * state.dtu).sum() / max(1.0, state.dtu.max())
        return float(rate + self.config.beta * fairness)

    def step(self, mask) -> tuple[EnvState, float]:
        mask = np.asarray(mask, dtype=int)
        if mask.shape != (self.config.n_users,):
            raise ValueError(f"mask must have length {self.config.n_users}, got {mask.shape}")
        r = self.reward(mask)
        cfg = self.config
        a = cfg.ar_coefficient
        s = self.state
        dtu = np.where(mask > 0, 0.0, s.dtu + 1.0)
        self._log_fade = a * self._log_fade + np.sqrt(1 - a * a) * cfg.gain_std * self.rng.normal(size=cfg.n_users)
        gain = self.mean_gain * np.exp(self._log_fade)
        b = cfg.mse_drift_ar
        self._mse_drift = b * self._mse_drift + np.sqrt(1 - b * b) * cfg.mse_spread * self.rng.normal(size=cfg.n_users)
        self.state = EnvState(gain=gain, mse=self._mse(), dtu=dtu, group=self.group.copy(), t=s.t + 1)
        return self.state, r

    def observe(self) -> dict:
        return self.state.kpis()


def make_step(t: int, state: EnvState, mask, reward: float) -> Step:
    return Step(t=t, state=state.kpis(), action={"mask": [int(x) for x in mask]}, reward=float(reward))


def env_step(env: MimoEnv, mask) -> tuple[EnvState, float]:
    return env.step(mask)
