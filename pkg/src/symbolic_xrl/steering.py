"""Runtime action steering from recorded experience.

Modes:

* ``reward-max``: swap the agent's proposal for a recorded action whose mean
  reward in the matched symbolic state is strictly better.
* ``condition``: like reward-max, but every applied action must satisfy the
  active intents; violating proposals are replaced by the best satisfying
  recorded action, or minimally edited when none exists.
* ``accel``: reward-max over a store that starts empty and is filled online.
* ``force``: the direct-forcing baseline, which only edits violating bits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .core import SymbolicSet, canonical_key
from .intent import Intent, IntentError, check_satisfiable, satisfies_all
from .playground.env import MimoEnv, make_step
from .store import ExperienceStore
from .symbolizer import SymbolicTrace, SymbolizerState

MODES = ("off", "reward-max", "condition", "accel", "force")
REASONS = ("no-record", "better-known", "kept", "constraint", "fallback-forced")


@dataclass(frozen=True)
class SteeringConfig:
    mode: str = "reward-max"
    start_frac: float = 0.0
    delta: float = 0.0
    max_distance: float = 1.0
    fallback: bool = True
    intents: tuple[Intent, ...] = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown steering mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 <= self.start_frac <= 1.0:
            raise ValueError(f"start fraction must lie in [0, 1], got {self.start_frac}")
        if not math.isfinite(self.delta) or self.delta < 0:
            raise ValueError(f"hysteresis must be finite and non-negative, got {self.delta}")
        if self.mode in ("condition", "force") and not self.intents:
            raise ValueError(f"mode {self.mode} needs at least one intent")
        check_satisfiable(self.intents)

    def start_step(self, horizon: int) -> int:
        return math.ceil(self.start_frac * horizon)


@dataclass(frozen=True)
class SteeringDecision:
    t: int
    proposed: Any
    applied: Any
    replaced: bool
    reason: str
    est_proposed: float | None = None
    est_applied: float | None = None
    proposed_action: str = ""
    applied_action: str = ""
    matched_state: str | None = None

    def __post_init__(self):
        if not self.replaced and self.applied != self.proposed:
            raise ValueError("unreplaced decision must apply the proposed action")

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "proposed": self.proposed,
            "applied": self.applied,
            "replaced": self.replaced,
            "reason": self.reason,
            "est_proposed": self.est_proposed,
            "est_applied": self.est_applied,
            "proposed_action": self.proposed_action,
            "applied_action": self.applied_action,
            "matched_state": self.matched_state,
        }


def _match_state(store: ExperienceStore, sym_state: SymbolicSet, config: SteeringConfig) -> tuple[str | None, float]:
    key = canonical_key(sym_state)
    if key in store.by_state:
        return key, 0.0
    if config.fallback:
        hit = store.nearest_state(sym_state, config.max_distance)
        if hit is not None:
            return hit
    return None, math.inf


def _keep(t, proposed, reason, est=None, prop_key="", matched=None) -> SteeringDecision:
    return SteeringDecision(t, proposed, proposed, False, reason, est, est, prop_key, prop_key, matched)


def steer_reward_max(store: ExperienceStore, sym_state: SymbolicSet, proposed: Any, proposed_sym: SymbolicSet,
                     config: SteeringConfig, t: int = 0,
                     allowed: Callable[[Any], bool] | None = None) -> SteeringDecision:
    """Replace ``proposed`` by the recorded action with the best mean reward in the matched state.

    ``allowed`` restricts which recorded concrete actions may be applied.
    """
    prop_key = canonical_key(proposed_sym)
    matched, _ = _match_state(store, sym_state, config)
    if matched is None:
        return _keep(t, proposed, "no-record", None, prop_key)
    est_prop = store.mean_reward(matched, prop_key)
    if est_prop is None:
        return _keep(t, proposed, "no-record", None, prop_key, matched)

    best_key, best_mean, best_concrete = prop_key, est_prop, proposed
    for action_key in store.actions_for(matched):
        if action_key == prop_key:
            continue
        agg = store.aggregate(matched, action_key)
        if agg.mean <= best_mean:
            continue
        if allowed is None:
            concrete = agg.best_concrete
        else:
            instance = _best_instance(store, matched, action_key, allowed)
            if instance is None:
                continue
            concrete = instance.concrete
        best_key, best_mean, best_concrete = action_key, agg.mean, concrete

    if best_key != prop_key and best_mean > est_prop + config.delta:
        return SteeringDecision(t, proposed, best_concrete, True, "better-known", est_prop, best_mean,
                                prop_key, best_key, matched)
    return _keep(t, proposed, "kept", est_prop, prop_key, matched)


def _best_instance(store: ExperienceStore, state_key: str, action_key: str | None,
                   allowed: Callable[[Any], bool]) -> Any:
    best, best_r = None, -math.inf
    for exp in store.experiences_for(state_key):
        if action_key is not None and exp.action != action_key:
            continue
        if exp.reward > best_r and allowed(exp.concrete):
            best, best_r = exp, exp.reward
    return best


def direct_force(proposed: Sequence[int], intents: Sequence[Intent], t: int | None = None) -> list[int]:
    """Minimal mask edit satisfying the (active) intents' atoms."""
    mask = [int(b) for b in proposed]
    want: dict[int, bool] = {}
    for intent in intents:
        if t is not None and not intent.active(t):
            continue
        for atom in intent.atoms():
            if want.setdefault(atom.user, atom.scheduled) != atom.scheduled:
                raise IntentError(f"conflicting atoms on user {atom.user}")
    for user, scheduled in want.items():
        mask[user] = int(scheduled)
    return mask


def steer_conditioned(store: ExperienceStore, sym_state: SymbolicSet, proposed: Sequence[int],
                      proposed_sym: SymbolicSet, intents: Sequence[Intent], t: int,
                      config: SteeringConfig) -> SteeringDecision:
    active = [i for i in intents if i.active(t)]

    def ok(mask) -> bool:
        return satisfies_all(mask, active, t)

    if ok(proposed):
        return steer_reward_max(store, sym_state, list(proposed), proposed_sym, config, t, allowed=ok)

    prop_key = canonical_key(proposed_sym)
    key = canonical_key(sym_state)
    candidate = _best_instance(store, key, None, ok) if key in store.by_state else None
    if candidate is None and config.fallback and len(store):
        allowed_ids = np.array([ok(c) for c in store.concretes], dtype=bool)
        hit = store.nearest_state(sym_state, config.max_distance, store.states_with_concrete(allowed_ids))
        if hit is not None:
            key = hit[0]
            candidate = _best_instance(store, key, None, ok)
    if candidate is not None:
        est_prop = store.mean_reward(key, prop_key)
        est_applied = store.mean_reward(key, candidate.action)
        return SteeringDecision(t, list(proposed), list(candidate.concrete), True, "constraint", est_prop,
                                est_applied, prop_key, candidate.action, key)
    forced = direct_force(proposed, active)
    return SteeringDecision(t, list(proposed), forced, True, "fallback-forced", None, None, prop_key, "", None)


@dataclass
class EpisodeResult:
    steps: list
    decisions: list[SteeringDecision]
    rewards: list[float]
    store: ExperienceStore
    symbolizer: SymbolizerState
    sym_states: list[SymbolicSet] = field(default_factory=list)
    sym_actions: list[SymbolicSet] = field(default_factory=list)

    @property
    def cumulative_reward(self) -> float:
        return float(sum(self.rewards))

    def replacements(self) -> dict[str, int]:
        counts = {r: 0 for r in REASONS}
        for d in self.decisions:
            if d.replaced:
                counts[d.reason] += 1
        return counts

    def reason_counts(self) -> dict[str, int]:
        """Decisions per reason, replaced or not."""
        counts = {r: 0 for r in REASONS}
        for d in self.decisions:
            counts[d.reason] += 1
        return counts

    def decision_log(self) -> str:
        return "".join(json.dumps(d.to_json(), separators=(",", ":")) + "\n" for d in self.decisions)

    def symbolic_trace(self) -> SymbolicTrace:
        ts = [s.t for s in self.steps]
        effects = [SymbolicSet(self.sym_states[i + 1].terms, t=ts[i]) for i in range(len(ts) - 1)]
        return SymbolicTrace(list(self.sym_states), list(self.sym_actions), effects, ts)


def run_steered_episode(env: MimoEnv, agent, store: ExperienceStore, config: SteeringConfig, T: int,
                        symbolizer: SymbolizerState | None = None, record: bool = True,
                        epsilon: float | None = None) -> EpisodeResult:
    """Run ``T`` steps: the agent proposes, steering may replace, the applied action is executed and recorded."""
    symbolizer = symbolizer or SymbolizerState(env.schema)
    start = config.start_step(T)
    steps, decisions, rewards = [], [], []
    sym_states, sym_actions = [], []
    store.start_sequence()
    for t in range(T):
        state = env.state
        kpis = state.kpis()
        step_view = make_step(t, state, [0] * env.schema.n_users, 0.0)
        sym_state = symbolizer.symbolize_state(step_view)
        proposed = agent.act(kpis, epsilon)
        applied, replaced = proposed, False
        if config.mode != "off" and t >= start:
            proposed_sym = symbolizer.symbolize_action({"mask": proposed}, commit=False)
            if config.mode in ("reward-max", "accel"):
                decision = steer_reward_max(store, sym_state, proposed, proposed_sym, config, t)
            elif config.mode == "condition":
                decision = steer_conditioned(store, sym_state, proposed, proposed_sym, config.intents, t, config)
            else:
                forced = direct_force(proposed, config.intents, t)
                reason = "fallback-forced" if forced != proposed else "kept"
                decision = SteeringDecision(t, proposed, forced, forced != proposed, reason,
                                            proposed_action=canonical_key(proposed_sym))
            decisions.append(decision)
            applied, replaced = list(decision.applied), decision.replaced
        sym_action = symbolizer.symbolize_action({"mask": applied})
        _, reward = env.step(applied)
        steps.append(make_step(t, state, applied, reward))
        rewards.append(reward)
        sym_states.append(sym_state)
        sym_actions.append(sym_action)
        if record:
            store.record(sym_state, sym_action, applied, reward, t, steered=replaced)
    store.start_sequence()
    store.trackers = symbolizer.trackers_to_dict()
    return EpisodeResult(steps, decisions, rewards, store, symbolizer, sym_states, sym_actions)
