"""Raw steps to FOL terms.

KPIs become ``pred(KPI@slice|group, quartile)`` with pred in inc/dec/const;
A1 PRB allocations become category transitions, scheduling policies
``toPolicy(sched@slice)``; A2 masks become per-group ``sched(g, Q, pct)`` or
``noSched(g)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    PERCENTAGES,
    Schema,
    SchemaA1,
    SchemaA2,
    Step,
    SymbolicSet,
    Term,
    Trajectory,
    render_term,
)
from .p2 import QuartileTracker


def group_label(g: int) -> str:
    return f"g{g}"


def aggregate_a1(step: Step, schema: SchemaA1) -> dict[str, float]:
    """Mean of the M measurements per (KPI, slice)."""
    out = {}
    for k in schema.kpis:
        rows = np.asarray(step.state[k], dtype=float)
        for l, sl in enumerate(schema.slices):
            out[f"{k}@{sl}"] = float(rows[l].mean())
    return out


def aggregate_a2(step: Step, schema: SchemaA2) -> dict[str, float]:
    """Mean over each group's users for every KPI except the group id itself."""
    out = {}
    for k in schema.kpis:
        if k == "G":
            continue
        values = np.asarray(step.state[k], dtype=float)
        for g, users in enumerate(schema.groups):
            if not users:
                raise ValueError(f"group {g} is empty")
            out[f"{k}@{group_label(g)}"] = float(values[list(users)].mean())
    return out


def change_predicate(prev: float, cur: float, eps_rel: float, floor: float) -> str:
    bound = max(eps_rel * abs(prev), floor)
    diff = cur - prev
    if abs(diff) <= bound:
        return "const"
    return "inc" if diff > 0 else "dec"


def symbolize_scalar(subject: str, prev: float, cur: float, tracker: QuartileTracker,
                     eps_rel: float = 0.01, floor: float = 1e-9) -> Term:
    """Term for a scalar stream; ``tracker`` must already have seen ``cur``."""
    return Term(change_predicate(prev, cur, eps_rel, floor), subject, (tracker.label(cur),))


def nearest_percentage(count: int, size: int) -> int:
    """Closest grid point to 100*count/size; ties go up."""
    value = 100.0 * count / size
    best = PERCENTAGES[0]
    for p in PERCENTAGES:
        if abs(value - p) <= abs(value - best) + 1e-12:
            best = p
    return best


def symbolize_action_a1(prev_action: Mapping | None, cur_action: Mapping, schema: SchemaA1) -> SymbolicSet:
    prev_prb = list(prev_action["prb"]) if prev_action else [0] * len(schema.slices)
    terms = []
    for l, sl in enumerate(schema.slices):
        before, after = int(prev_prb[l]), int(cur_action["prb"][l])
        c0, c1 = schema.category(before), schema.category(after)
        if after == before:
            terms.append(Term("const", f"PRB@{sl}", (f"C{c1}",)))
        else:
            pred = "inc" if after > before else "dec"
            terms.append(Term(pred, f"PRB@{sl}", (f"C{c0}", f"C{c1}")))
        policy = cur_action["policy"][l]
        if policy not in schema.policies:
            raise ValueError(f"unknown policy {policy!r}")
        terms.append(Term(f"to{policy}", f"sched@{sl}"))
    return SymbolicSet(terms)


def symbolize_action_a2(mask: Sequence[int], schema: SchemaA2,
                        count_trackers: Sequence[QuartileTracker], commit: bool = True) -> SymbolicSet:
    """Per-group scheduling terms.

    With ``commit=False`` the count trackers are left untouched, which lets a
    caller label a candidate action before deciding whether to apply it.
    """
    if len(mask) != schema.n_users:
        raise ValueError(f"mask length {len(mask)} != {schema.n_users}")
    terms = []
    for g, users in enumerate(schema.groups):
        count = int(sum(int(mask[u]) for u in users))
        tracker = count_trackers[g]
        if commit:
            label = tracker.observe_and_label(count)
        else:
            label = tracker.peek_label(count)
        if count == 0:
            terms.append(Term("noSched", group_label(g)))
        else:
            terms.append(Term("sched", group_label(g), (label, nearest_percentage(count, len(users)))))
    return SymbolicSet(terms)


@dataclass
class SymbolizerState:
    schema: Schema
    eps_rel: float = 0.01
    floor: float = 1e-9
    trackers: dict[str, QuartileTracker] = field(default_factory=dict)
    previous: dict[str, float] = field(default_factory=dict)
    previous_action: Mapping | None = None

    def __post_init__(self):
        if isinstance(self.schema, SchemaA2):
            for g in range(len(self.schema.groups)):
                self.trackers.setdefault(f"count@{group_label(g)}", QuartileTracker(use_max=True, discrete=True))

    def _tracker(self, subject: str) -> QuartileTracker:
        tr = self.trackers.get(subject)
        if tr is None:
            use_max = isinstance(self.schema, SchemaA2) and subject.startswith("DTU@")
            tr = self.trackers[subject] = QuartileTracker(use_max=use_max)
        return tr

    def count_trackers(self) -> list[QuartileTracker]:
        return [self.trackers[f"count@{group_label(g)}"] for g in range(len(self.schema.groups))]

    def symbolize_state(self, step: Step) -> SymbolicSet:
        """Symbolic state of ``step``; updates quartile markers and previous values."""
        if isinstance(self.schema, SchemaA1):
            values = aggregate_a1(step, self.schema)
        else:
            values = aggregate_a2(step, self.schema)
        terms = []
        for subject, cur in values.items():
            tracker = self._tracker(subject)
            tracker.observe(cur)
            prev = self.previous.get(subject, cur)
            terms.append(symbolize_scalar(subject, prev, cur, tracker, self.eps_rel, self.floor))
            self.previous[subject] = cur
        return SymbolicSet(terms)

    def symbolize_action(self, action: Mapping, commit: bool = True) -> SymbolicSet:
        if isinstance(self.schema, SchemaA1):
            sym = symbolize_action_a1(self.previous_action, action, self.schema)
        else:
            sym = symbolize_action_a2(action["mask"], self.schema, self.count_trackers(), commit=commit)
        if commit:
            self.previous_action = action
        return sym

    def reset(self) -> None:
        """Forget previous values and actions; quartile markers are kept unless cleared explicitly."""
        self.previous.clear()
        self.previous_action = None

    def trackers_to_dict(self) -> dict:
        return {k: v.to_dict() for k, v in sorted(self.trackers.items())}

    def load_trackers(self, d: Mapping) -> None:
        self.trackers = {k: QuartileTracker.from_dict(v) for k, v in d.items()}
        self.__post_init__()


@dataclass
class SymbolicTrace:
    states: list[SymbolicSet]
    actions: list[SymbolicSet]
    effects: list[SymbolicSet]
    t: list[int]

    def records(self) -> Iterable[dict]:
        for i, t in enumerate(self.t):
            yield {
                "t": t,
                "state_terms": [render_term(x) for x in self.states[i]],
                "action_terms": [render_term(x) for x in self.actions[i]],
                "effect_terms": [render_term(x) for x in self.effects[i]] if i < len(self.effects) else [],
            }

    def dumps(self) -> str:
        return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in self.records())

    @classmethod
    def loads(cls, text: str) -> "SymbolicTrace":
        from .core import parse_term

        states, actions, effects, ts = [], [], [], []
        for line in text.splitlines():
            if not line.strip():
                continue
            r = json.loads(line)
            ts.append(r["t"])
            states.append(SymbolicSet(map(parse_term, r["state_terms"])))
            actions.append(SymbolicSet(map(parse_term, r["action_terms"])))
            if r.get("effect_terms"):
                effects.append(SymbolicSet(map(parse_term, r["effect_terms"]), t=r["t"]))
        return cls(states, actions, effects, ts)

    def __len__(self):
        return len(self.t)


def symbolize_trajectory(trajectory: Trajectory, state: SymbolizerState | None = None) -> SymbolicTrace:
    """Symbolize every step; the effect of the action at t is the symbolic state at t+1."""
    if state is None:
        state = SymbolizerState(trajectory.schema)
    states, actions = [], []
    for step in trajectory:
        states.append(state.symbolize_state(step))
        actions.append(state.symbolize_action(step.action))
    ts = [s.t for s in trajectory]
    effects = [SymbolicSet(states[i + 1].terms, t=ts[i]) for i in range(len(states) - 1)]
    return SymbolicTrace(states, actions, effects, ts)


def vocabulary_size(name: str) -> int:
    """Closed-form count of distinct symbolic (``*-symb``) or raw (``*-explora``) actions."""
    a1, a2 = SchemaA1(), SchemaA2()
    sizes = {
        # slices x {inc,dec,const} x PRB categories x policies
        "A1-symb": len(a1.slices) * 3 * a1.n_categories * len(a1.policies),
        "A1-explora": comb(a1.prb_total - 1, 2) * len(a1.policies) ** len(a1.slices),
        "A2-symb": len(a2.group_sizes) * 5 * len(PERCENTAGES),
        "A2-explora": 2 ** a2.n_users,
    }
    try:
        return sizes[name]
    except KeyError:
        raise ValueError(f"unknown vocabulary {name!r}; expected one of {sorted(sizes)}") from None
