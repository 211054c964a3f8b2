"""Probabilistic and graph analytics over symbolic traces.

Everything here is a pure function of its inputs: frequency tables over
state/effect terms, decision-effect density maps, distribution deltas and
deterministic knowledge-graph exports.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence

from .core import SymbolicSet, Term, render_term, subject_group
from .store import KnowledgeGraph, build_kg
from .symbolizer import SymbolicTrace

NORMALIZATIONS = ("joint", "row", "col")

TermFilter = Callable[[Term], bool]
Projection = Callable[[SymbolicSet], "str | None"]


def term_filter(subject: str | None = None, group: str | None = None, kpi: str | None = None) -> TermFilter:
    """Select terms by exact subject, by slice/group qualifier, or by KPI name (the part before ``@``)."""

    def keep(term: Term) -> bool:
        if subject is not None and term.subject != subject:
            return False
        if group is not None and subject_group(term.subject) != group:
            return False
        if kpi is not None and term.subject.split("@", 1)[0] != kpi:
            return False
        return True

    return keep


def project(subject: str | None = None, group: str | None = None, kpi: str | None = None) -> Projection:
    """Map a term set to the key of its matching terms, or None when nothing matches."""
    keep = term_filter(subject, group, kpi)

    def projection(s: SymbolicSet) -> str | None:
        terms = [t for t in s if keep(t)]
        return " & ".join(render_term(t) for t in terms) if terms else None

    return projection


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class FrequencyTable:
    counts: Mapping[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def prob(self, key: str) -> float:
        total = self.total
        return self.counts.get(key, 0) / total if total else 0.0

    def probabilities(self) -> dict[str, float]:
        total = self.total
        return {k: c / total for k, c in self.counts.items()} if total else {}

    def items(self) -> list[tuple[str, int, float]]:
        """Rows ordered by count descending, then key."""
        total = self.total
        return [(k, c, c / total) for k, c in sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))]

    def to_csv(self) -> str:
        return _csv(("key", "count", "prob"), ((k, c, _fmt(p)) for k, c, p in self.items()))

    @classmethod
    def from_keys(cls, keys: Iterable[str]) -> "FrequencyTable":
        counts: dict[str, int] = {}
        for k in keys:
            counts[k] = counts.get(k, 0) + 1
        return cls(counts)


def _term_keys(sets: Iterable[SymbolicSet], keep: TermFilter | None) -> Iterable[str]:
    for s in sets:
        for term in s:
            if keep is None or keep(term):
                yield render_term(term)


def effect_distribution(trace: SymbolicTrace, keep: TermFilter | None = None) -> FrequencyTable:
    """Distribution of effect terms passing ``keep`` (all terms by default)."""
    return FrequencyTable.from_keys(_term_keys(trace.effects, keep))


def state_distribution(traces: SymbolicTrace | Mapping[str, SymbolicTrace],
                       keep: TermFilter | None = None) -> dict[str, FrequencyTable]:
    """State-term distributions, one per labelled trace (e.g. ``"NLOS/high"``); a bare trace is labelled ``all``."""
    if isinstance(traces, SymbolicTrace):
        traces = {"all": traces}
    return {label: FrequencyTable.from_keys(_term_keys(tr.states, keep)) for label, tr in sorted(traces.items())}


@dataclass(frozen=True)
class DensityMap:
    counts: Mapping[tuple[str, str], int]
    normalization: str = "joint"

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}; expected one of {NORMALIZATIONS}")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def rows(self) -> list[str]:
        return sorted({r for r, _ in self.counts})

    @property
    def cols(self) -> list[str]:
        return sorted({c for _, c in self.counts})

    @cached_property
    def _row_totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for (r, _), n in self.counts.items():
            out[r] = out.get(r, 0) + n
        return out

    @cached_property
    def _col_totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for (_, c), n in self.counts.items():
            out[c] = out.get(c, 0) + n
        return out

    def row_totals(self) -> dict[str, int]:
        return dict(self._row_totals)

    def col_totals(self) -> dict[str, int]:
        return dict(self._col_totals)

    def value(self, row: str, col: str) -> float:
        n = self.counts.get((row, col), 0)
        if self.normalization == "joint":
            denom = self.total
        elif self.normalization == "row":
            denom = self._row_totals.get(row, 0)
        else:
            denom = self._col_totals.get(col, 0)
        return n / denom if denom else 0.0

    def cells(self) -> dict[tuple[str, str], float]:
        total = self.total
        rt, ct = self._row_totals, self._col_totals
        denom = {"joint": lambda r, c: total, "row": lambda r, c: rt[r], "col": lambda r, c: ct[c]}[self.normalization]
        return {(r, c): n / denom(r, c) for (r, c), n in sorted(self.counts.items())}

    def row_marginals(self) -> FrequencyTable:
        return FrequencyTable(self.row_totals())

    def col_marginals(self) -> FrequencyTable:
        return FrequencyTable(self.col_totals())

    def to_csv(self) -> str:
        return _csv(("row", "col", "value"), ((r, c, _fmt(v)) for (r, c), v in self.cells().items()))

    def marginals_csv(self) -> str:
        rows = [("row", k, n, _fmt(p)) for k, n, p in self.row_marginals().items()]
        rows += [("col", k, n, _fmt(p)) for k, n, p in self.col_marginals().items()]
        return _csv(("axis", "key", "count", "prob"), rows)


def decision_effect_density(trace: SymbolicTrace, decision: Projection | None = None,
                            effect: Projection | None = None, normalization: str = "joint") -> DensityMap:
    """Co-occurrence of (projected) decisions at t with (projected) effects at t.

    Pairs where either projection yields None are skipped.
    """
    decision = decision or (lambda s: s.key)
    effect = effect or (lambda s: s.key)
    counts: dict[tuple[str, str], int] = {}
    for action, eff in zip(trace.actions, trace.effects):
        r, c = decision(action), effect(eff)
        if r is None or c is None:
            continue
        counts[(r, c)] = counts.get((r, c), 0) + 1
    return DensityMap(counts, normalization)


@dataclass(frozen=True)
class Delta:
    key: str
    before: float
    after: float

    @property
    def delta(self) -> float:
        return self.after - self.before


def compare_distributions(a: FrequencyTable, b: FrequencyTable) -> list[Delta]:
    """Per-key change from ``a`` to ``b`` over the union of keys, largest absolute change first."""
    pa, pb = a.probabilities(), b.probabilities()
    deltas = [Delta(k, pa.get(k, 0.0), pb.get(k, 0.0)) for k in set(pa) | set(pb)]
    return sorted(deltas, key=lambda d: (-abs(d.delta), d.key))


def deltas_csv(deltas: Sequence[Delta]) -> str:
    return _csv(("key", "before", "after", "delta"),
                ((d.key, _fmt(d.before), _fmt(d.after), _fmt(d.delta)) for d in deltas))


def group_kg(trace: SymbolicTrace, group: str = "g0") -> KnowledgeGraph:
    """Graph over the actions restricted to one group (or slice); steps without a matching term are dropped."""
    proj = project(group=group)
    keys = [k for k in map(proj, trace.actions) if k is not None]
    return build_kg([keys])


def _ordered(kg: KnowledgeGraph):
    nodes = sorted(kg.nodes.items(), key=lambda kv: (-kv[1], kv[0]))
    probs = kg.probabilities()
    edges = [(s, d, c, probs[(s, d)]) for (s, d), c in sorted(kg.edges.items())]
    return nodes, edges


def export_kg(kg: KnowledgeGraph, fmt: str = "json") -> str:
    """Deterministic DOT or JSON rendering: nodes by count then key, edges by (src, dst)."""
    nodes, edges = _ordered(kg)
    total = sum(kg.nodes.values())
    if fmt == "json":
        doc = {
            "nodes": [{"id": k, "count": c, "prob": c / total} for k, c in nodes],
            "edges": [{"src": s, "dst": d, "count": c, "prob": p} for s, d, c, p in edges],
        }
        return json.dumps(doc, indent=1) + "\n"
    if fmt == "dot":
        ids = {k: f"n{i}" for i, (k, _) in enumerate(nodes)}
        lines = ["digraph kg {"]
        for k, c in nodes:
            lines.append(f'  {ids[k]} [label="{_dot_escape(k)}\\n{c} ({c / total:.2f})"];')
        for s, d, _, p in edges:
            lines.append(f'  {ids[s]} -> {ids[d]} [label="{p:.2f}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown KG format {fmt!r}; expected dot or json")


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')
