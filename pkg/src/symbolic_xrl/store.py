"""Experience database keyed by symbolic state, and the action-transition graph."""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

import numpy as np

from .core import QUARTILES, SymbolicSet, _plain, canonical_key

STORE_VERSION = 1


class StoreError(ValueError):
    pass


@dataclass(frozen=True)
class Experience:
    t: int
    state: str
    action: str
    concrete: Any
    reward: float
    steered: bool = False

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "state": self.state,
            "action": self.action,
            "concrete": self.concrete,
            "reward": self.reward,
            "steered": self.steered,
        }


@dataclass
class Aggregate:
    count: int = 0
    total: float = 0.0
    best: float = -math.inf
    best_concrete: Any = None

    @property
    def mean(self) -> float:
        return self.total / self.count

    def add(self, reward: float, concrete: Any) -> None:
        self.count += 1
        self.total += reward
        if reward > self.best:
            self.best = reward
            self.best_concrete = concrete


class KnowledgeGraph:
    """Directed graph over symbolic actions weighted by occurrence and transition counts."""

    def __init__(self):
        self.nodes: dict[str, int] = {}
        self.edges: dict[tuple[str, str], int] = {}
        self.sequences = 0
        self._last: str | None = None

    def start_sequence(self) -> None:
        self._last = None

    def add(self, action: str) -> None:
        if self._last is None:
            self.sequences += 1
        else:
            edge = (self._last, action)
            self.edges[edge] = self.edges.get(edge, 0) + 1
        self.nodes[action] = self.nodes.get(action, 0) + 1
        self._last = action

    def extend(self, actions: Iterable[str]) -> "KnowledgeGraph":
        self.start_sequence()
        for a in actions:
            self.add(a)
        self.start_sequence()
        return self

    def out_total(self, src: str) -> int:
        return sum(c for (s, _), c in self.edges.items() if s == src)

    def probabilities(self) -> dict[tuple[str, str], float]:
        totals: dict[str, int] = {}
        for (s, _), c in self.edges.items():
            totals[s] = totals.get(s, 0) + c
        return {e: c / totals[e[0]] for e, c in self.edges.items()}

    def node_probabilities(self) -> dict[str, float]:
        total = sum(self.nodes.values())
        return {k: v / total for k, v in self.nodes.items()}

    def to_dict(self) -> dict:
        return {
            "nodes": dict(sorted(self.nodes.items())),
            "edges": [[s, d, c] for (s, d), c in sorted(self.edges.items())],
            "sequences": self.sequences,
            "last": self._last,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "KnowledgeGraph":
        kg = cls()
        kg.nodes = dict(d["nodes"])
        kg.edges = {(s, t): c for s, t, c in d["edges"]}
        kg.sequences = d["sequences"]
        kg._last = d.get("last")
        return kg

    def __eq__(self, other):
        return isinstance(other, KnowledgeGraph) and self.to_dict() == other.to_dict()


def build_kg(sequences: Iterable[Iterable[SymbolicSet | str]],
             projection: Callable[[SymbolicSet], str] | None = None) -> KnowledgeGraph:
    """Graph over one or more action sequences; ``projection`` maps an action to its node key."""
    kg = KnowledgeGraph()
    for seq in sequences:
        keys = []
        for a in seq:
            if projection is not None:
                keys.append(projection(a if isinstance(a, SymbolicSet) else SymbolicSet.from_key(a)))
            else:
                keys.append(canonical_key(a))
        kg.extend(keys)
    return kg


# nearest-state encoding: predicate code and quartile ordinal per subject
_PRED_CODE = {"inc": 0, "dec": 1, "const": 2}
_ORDINAL = {q: i + 1 for i, q in enumerate(QUARTILES)}


def state_distance(a: SymbolicSet, b: SymbolicSet) -> float:
    """Sum over shared subjects of predicate mismatch plus quartile ordinal gap / 4."""
    bs = b.by_subject()
    d = 0.0
    for term in a:
        other = bs.get(term.subject)
        if other is None:
            continue
        if term.pred != other.pred:
            d += 1.0
        qa = next((x for x in term.args if x in _ORDINAL), None)
        qb = next((x for x in other.args if x in _ORDINAL), None)
        if qa is not None and qb is not None:
            d += abs(_ORDINAL[qa] - _ORDINAL[qb]) / 4.0
    return d


class ExperienceStore:
    def __init__(self):
        self.experiences: list[Experience] = []
        self.by_state: dict[str, list[int]] = {}
        self.aggregates: dict[tuple[str, str], Aggregate] = {}
        self.actions_by_state: dict[str, list[str]] = {}
        self.kg = KnowledgeGraph()
        self.trackers: dict[str, Any] = {}
        # state index for similarity search
        self._state_keys: list[str] = []
        self._state_row: dict[str, int] = {}
        self._last_seen: list[int] = []
        self._subjects: dict[str, int] = {}
        self._pred = np.full((0, 0), -1, dtype=np.int8)
        self._ord = np.zeros((0, 0), dtype=np.int8)
        # distinct concrete actions and which states have used them
        self.concrete_ids: dict[str, int] = {}
        self.concretes: list[Any] = []
        self._seen = np.zeros((0, 0), dtype=bool)

    def __len__(self) -> int:
        return len(self.experiences)

    def start_sequence(self) -> None:
        self.kg.start_sequence()

    def record(self, sym_state: SymbolicSet | str, sym_action: SymbolicSet | str, concrete: Any,
               reward: float, t: int, steered: bool = False) -> Experience:
        if not math.isfinite(reward):
            raise StoreError(f"non-finite reward {reward!r}")
        exp = Experience(int(t), canonical_key(sym_state), canonical_key(sym_action), _plain(concrete), float(reward),
                         bool(steered))
        self._append(exp)
        return exp

    def _append(self, exp: Experience) -> None:
        idx = len(self.experiences)
        self.experiences.append(exp)
        self.by_state.setdefault(exp.state, []).append(idx)
        pair = (exp.state, exp.action)
        agg = self.aggregates.get(pair)
        if agg is None:
            agg = self.aggregates[pair] = Aggregate()
            self.actions_by_state.setdefault(exp.state, []).append(exp.action)
        agg.add(exp.reward, exp.concrete)
        self.kg.add(exp.action)
        self._index_state(exp.state, idx)
        self._index_concrete(exp)

    def _index_concrete(self, exp: Experience) -> None:
        ckey = json.dumps(exp.concrete, separators=(",", ":"), sort_keys=True)
        cid = self.concrete_ids.get(ckey)
        if cid is None:
            cid = self.concrete_ids[ckey] = len(self.concretes)
            self.concretes.append(exp.concrete)
        rows, cols = self._pred.shape[0], len(self.concretes)
        if self._seen.shape[0] < rows or self._seen.shape[1] < cols:
            r, c = self._seen.shape
            new_cols = c if c >= cols else max(cols, 2 * c, 16)
            seen = np.zeros((max(rows, r), new_cols), dtype=bool)
            seen[:r, :c] = self._seen
            self._seen = seen
        self._seen[self._state_row[exp.state], cid] = True

    def states_with_concrete(self, allowed: np.ndarray) -> np.ndarray:
        """Per recorded state, whether any of its experiences used a concrete action flagged in ``allowed``."""
        n = len(self._state_keys)
        k = len(self.concretes)
        return (self._seen[:n, :k] & np.asarray(allowed, dtype=bool)[None, :k]).any(axis=1)

    def _index_state(self, key: str, idx: int) -> None:
        row = self._state_row.get(key)
        if row is not None:
            self._last_seen[row] = idx
            return
        terms = SymbolicSet.from_key(key)
        for term in terms:
            if term.subject not in self._subjects:
                self._subjects[term.subject] = len(self._subjects)
        n_rows, n_cols = len(self._state_keys) + 1, len(self._subjects)
        if self._pred.shape[1] < n_cols or self._pred.shape[0] < n_rows:
            r, c = self._pred.shape
            cap_rows = r if r >= n_rows else max(n_rows, 2 * r, 64)
            pred = np.full((cap_rows, n_cols), -1, dtype=np.int8)
            ords = np.zeros((cap_rows, n_cols), dtype=np.int8)
            pred[:r, :c] = self._pred
            ords[:r, :c] = self._ord
            self._pred, self._ord = pred, ords
        row = len(self._state_keys)
        for term in terms:
            col = self._subjects[term.subject]
            self._pred[row, col] = _PRED_CODE.get(term.pred, 3)
            self._ord[row, col] = next((_ORDINAL[x] for x in term.args if x in _ORDINAL), 0)
        self._state_keys.append(key)
        self._state_row[key] = row
        self._last_seen.append(idx)

    def experiences_for(self, sym_state: SymbolicSet | str) -> list[Experience]:
        return [self.experiences[i] for i in self.by_state.get(canonical_key(sym_state), [])]

    def mean_reward(self, sym_state: SymbolicSet | str, sym_action: SymbolicSet | str) -> float | None:
        agg = self.aggregates.get((canonical_key(sym_state), canonical_key(sym_action)))
        return agg.mean if agg else None

    def aggregate(self, sym_state, sym_action) -> Aggregate | None:
        return self.aggregates.get((canonical_key(sym_state), canonical_key(sym_action)))

    def actions_for(self, sym_state: SymbolicSet | str) -> list[str]:
        return list(self.actions_by_state.get(canonical_key(sym_state), []))

    def nearest_state(self, sym_state: SymbolicSet | str, max_distance: float = math.inf,
                      eligible: np.ndarray | None = None) -> tuple[str, float] | None:
        """Closest recorded state under :func:`state_distance`; ties go to the most recently seen.

        ``eligible`` optionally restricts the search to a boolean mask over recorded states.
        """
        if not self._state_keys or (eligible is not None and not eligible.any()):
            return None
        query = sym_state if isinstance(sym_state, SymbolicSet) else SymbolicSet.from_key(sym_state)
        n = len(self._state_keys)
        dist = np.zeros(n)
        for term in query:
            col = self._subjects.get(term.subject)
            if col is None:
                continue
            preds = self._pred[:n, col]
            present = preds >= 0
            dist += present & (preds != _PRED_CODE.get(term.pred, 3))
            q = next((_ORDINAL[x] for x in term.args if x in _ORDINAL), 0)
            ords = self._ord[:n, col]
            if q:
                dist += np.where(present & (ords > 0), np.abs(ords.astype(float) - q) / 4.0, 0.0)
        if eligible is not None:
            dist = np.where(eligible, dist, np.inf)
        best = dist.min()
        if best > max_distance:
            return None
        ties = np.flatnonzero(dist == best)
        last = np.asarray(self._last_seen)[ties]
        row = int(ties[np.argmax(last)])
        return self._state_keys[row], float(best)

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": STORE_VERSION,
            "experiences": [e.to_json() for e in self.experiences],
            "trackers": self.trackers,
            "kg": self.kg.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperienceStore":
        if d.get("version") != STORE_VERSION:
            raise StoreError(f"unsupported store version {d.get('version')!r}")
        store = cls()
        try:
            for e in d["experiences"]:
                store._append(Experience(e["t"], e["state"], e["action"], e["concrete"], e["reward"],
                                         e.get("steered", False)))
            store.kg = KnowledgeGraph.from_dict(d["kg"])
            store.trackers = dict(d.get("trackers", {}))
        except (KeyError, TypeError, ValueError) as e:
            raise StoreError(f"corrupt store: {e}") from None
        return store

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)

    def save(self, path: str | Path) -> None:
        atomic_write(path, self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "ExperienceStore":
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise StoreError(f"corrupt store file {path}: {e.msg}") from None
        return cls.from_dict(data)

    def __eq__(self, other):
        return isinstance(other, ExperienceStore) and self.to_dict() == other.to_dict()


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
