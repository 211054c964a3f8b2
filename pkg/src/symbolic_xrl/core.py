"""Trace data model, schema descriptors and the symbolic term syntax.

Terms are written ``pred(subject,arg,...)``. Subjects are qualified with a
slice (``tx_brate@embb``) or name a user group (``g1``); quartile labels are
``Q1``..``Q4`` or ``MAX``, PRB categories ``C1``..``C10`` and percentages one
of 0, 25, 50, 75, 100.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence, Union

QUARTILES = ("Q1", "Q2", "Q3", "Q4", "MAX")
PERCENTAGES = (0, 25, 50, 75, 100)
CHANGE_PREDICATES = ("inc", "dec", "const")
POLICY_PREDICATES = ("toWF", "toRR", "toPF")
PREDICATES = CHANGE_PREDICATES + POLICY_PREDICATES + ("sched", "noSched")


class TraceError(ValueError):
    """A trajectory failed validation; ``index`` is the offending step."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        prefix = f"step {index}: " if index is not None else ""
        super().__init__(prefix + message)


class TermSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} at position {position}")


# ---------------------------------------------------------------------------
# Schemas


@dataclass(frozen=True)
class SchemaA1:
    """RAN slicing / scheduling agent: 3 slices, 10 measurements per KPI."""

    name: str = "a1"
    slices: tuple[str, ...] = ("embb", "mmtc", "urllc")
    kpis: tuple[str, ...] = ("tx_brate", "tx_pkts", "dl_buffer")
    measurements: int = 10
    prb_total: int = 50
    n_categories: int = 10
    policies: tuple[str, ...] = ("WF", "RR", "PF")

    units = {"tx_brate": "Mbps", "tx_pkts": "packets", "dl_buffer": "bytes"}

    def category(self, prb: int) -> int:
        """1-based category index of a PRB count; each category spans 10% of the range."""
        if not 0 <= prb <= self.prb_total:
            raise ValueError(f"PRB {prb} outside [0, {self.prb_total}]")
        width = self.prb_total / self.n_categories
        return min(int(prb // width) + 1, self.n_categories)

    def category_interval(self, i: int) -> tuple[float, float]:
        width = self.prb_total / self.n_categories
        return ((i - 1) * width, i * width)


@dataclass(frozen=True)
class SchemaA2:
    """Massive-MIMO user scheduling agent: 7 users in correlated groups."""

    name: str = "a2"
    n_users: int = 7
    group_sizes: tuple[int, ...] = (3, 2, 2)
    kpis: tuple[str, ...] = ("MSE", "DTU", "G")

    units = {"MSE": "", "DTU": "timeslots", "G": "group id"}

    def __post_init__(self):
        if sum(self.group_sizes) != self.n_users:
            raise ValueError(f"group sizes {self.group_sizes} do not sum to {self.n_users}")
        if any(s <= 0 for s in self.group_sizes):
            raise ValueError("empty group")

    @property
    def groups(self) -> tuple[tuple[int, ...], ...]:
        """User ids per group, assigned contiguously from user 0."""
        out, start = [], 0
        for size in self.group_sizes:
            out.append(tuple(range(start, start + size)))
            start += size
        return tuple(out)

    def group_of(self) -> list[int]:
        return [g for g, users in enumerate(self.groups) for _ in users]


Schema = Union[SchemaA1, SchemaA2]


def get_schema(name: str, **kwargs) -> Schema:
    if name.lower() == "a1":
        return SchemaA1(**kwargs)
    if name.lower() == "a2":
        return SchemaA2(**kwargs)
    raise ValueError(f"unknown schema {name!r}")


# ---------------------------------------------------------------------------
# Raw trace


@dataclass(frozen=True)
class Step:
    t: int
    state: Mapping[str, Any]
    action: Mapping[str, Any]
    reward: float

    def to_json(self) -> dict:
        return {"t": self.t, "state": _plain(self.state), "action": _plain(self.action), "reward": self.reward}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Step":
        try:
            return cls(t=obj["t"], state=obj["state"], action=obj["action"], reward=obj["reward"])
        except KeyError as e:
            raise TraceError(f"missing field {e.args[0]!r}") from None


def _plain(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    if isinstance(x, Mapping):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[Step, ...]
    schema: Schema

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self) -> Iterator[Step]:
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]


def _finite_array(values, shape: tuple[int, ...], what: str, index: int) -> None:
    if len(shape) == 1:
        if not isinstance(values, (list, tuple)) or len(values) != shape[0]:
            n = len(values) if isinstance(values, (list, tuple)) else "scalar"
            raise TraceError(f"dimension mismatch for {what}: expected {shape[0]}, got {n}", index)
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise TraceError(f"non-finite or non-numeric value in {what}: {v!r}", index)
    else:
        if not isinstance(values, (list, tuple)) or len(values) != shape[0]:
            raise TraceError(f"dimension mismatch for {what}: expected {shape[0]} rows", index)
        for row in values:
            _finite_array(row, shape[1:], what, index)


def _check_step(step: Step, schema: Schema, index: int) -> None:
    if isinstance(step.t, bool) or not isinstance(step.t, int) or step.t < 0:
        raise TraceError(f"t must be a non-negative integer, got {step.t!r}", index)
    if isinstance(step.reward, bool) or not isinstance(step.reward, (int, float)) or not math.isfinite(step.reward):
        raise TraceError(f"non-finite reward {step.reward!r}", index)
    if isinstance(schema, SchemaA2):
        n = schema.n_users
        for k in schema.kpis:
            if k not in step.state:
                raise TraceError(f"missing KPI {k}", index)
            _finite_array(list(step.state[k]), (n,), k, index)
        mask = step.action.get("mask")
        if mask is None:
            raise TraceError("missing action mask", index)
        mask = list(mask)
        if len(mask) != n:
            raise TraceError(f"dimension mismatch for mask: expected {n}, got {len(mask)}", index)
        if any(m not in (0, 1) or isinstance(m, float) and not m.is_integer() for m in mask):
            raise TraceError("mask entries must be 0 or 1", index)
        expected = schema.group_of()
        if [int(g) for g in step.state["G"]] != expected:
            raise TraceError(f"group ids {list(step.state['G'])} do not match schema {expected}", index)
    else:
        shape = (len(schema.slices), schema.measurements)
        for k in schema.kpis:
            if k not in step.state:
                raise TraceError(f"missing KPI {k}", index)
            _finite_array(step.state[k], shape, k, index)
        prb = step.action.get("prb")
        policy = step.action.get("policy")
        if prb is None or policy is None:
            raise TraceError("action needs 'prb' and 'policy'", index)
        if len(prb) != len(schema.slices) or len(policy) != len(schema.slices):
            raise TraceError("dimension mismatch for action", index)
        for p in prb:
            if isinstance(p, bool) or not isinstance(p, int) or not 0 <= p <= schema.prb_total:
                raise TraceError(f"PRB {p!r} outside [0, {schema.prb_total}]", index)
        for p in policy:
            if p not in schema.policies:
                raise TraceError(f"unknown policy {p!r}", index)


def validate_trajectory(steps: Iterable[Step | Mapping], schema: Schema) -> Trajectory:
    """Check every step against ``schema``; raise :class:`TraceError` at the first bad step."""
    steps = [s if isinstance(s, Step) else Step.from_json(s) for s in steps]
    if not steps:
        raise TraceError("empty trajectory")
    prev_t = None
    for i, step in enumerate(steps):
        _check_step(step, schema, i)
        if prev_t is not None and step.t <= prev_t:
            raise TraceError(f"t not strictly increasing ({prev_t} -> {step.t})", i)
        prev_t = step.t
    return Trajectory(tuple(steps), schema)


def read_trace(path: str | Path) -> list[Step]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            if not line.strip():
                continue
            try:
                out.append(Step.from_json(json.loads(line)))
            except json.JSONDecodeError as e:
                raise TraceError(f"bad JSON: {e.msg}", lineno) from None
    return out


def dump_steps(steps: Iterable[Step]) -> str:
    return "".join(json.dumps(s.to_json(), separators=(",", ":")) + "\n" for s in steps)


# ---------------------------------------------------------------------------
# Terms

Arg = Union[str, int]


@dataclass(frozen=True, order=True)
class Term:
    pred: str
    subject: str
    args: tuple[Arg, ...] = ()

    def __post_init__(self):
        _check_args(self.pred, self.args)

    def __str__(self) -> str:
        return render_term(self)


def _check_args(pred: str, args: tuple) -> None:
    if pred not in PREDICATES:
        raise ValueError(f"unknown predicate {pred!r}")
    kinds = tuple(_arg_kind(a) for a in args)
    if pred in CHANGE_PREDICATES:
        legal = {("quartile",), ("category", "category")} if pred != "const" else {("quartile",), ("category",)}
    elif pred == "sched":
        legal = {("quartile", "percentage")}
    else:
        legal = {()}
    if kinds not in legal:
        raise ValueError(f"illegal arguments {args!r} for predicate {pred}")


def _arg_kind(a: Arg) -> str:
    if isinstance(a, int) and not isinstance(a, bool):
        if a in PERCENTAGES:
            return "percentage"
    elif a in QUARTILES:
        return "quartile"
    elif isinstance(a, str) and re.fullmatch(r"C([1-9]|10)", a):
        return "category"
    return "invalid"


def render_term(term: Term) -> str:
    return term.pred + "(" + ",".join([term.subject, *map(str, term.args)]) + ")"


_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*(?:@[A-Za-z0-9_]+)?|\d+|[(),])")


def parse_term(text: str) -> Term:
    """Parse canonical term text; raises :class:`TermSyntaxError` with a position."""
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise TermSyntaxError(f"unexpected character {text[pos]!r}", pos)
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    it = iter(tokens + [("", len(text))])

    def expect(value=None):
        tok, at = next(it)
        if value is not None and tok != value:
            raise TermSyntaxError(f"expected {value!r}, got {tok or 'end of input'!r}", at)
        return tok, at

    pred, at = expect()
    if pred not in PREDICATES:
        raise TermSyntaxError(f"unknown predicate {pred!r}", at)
    expect("(")
    subject, at = expect()
    if not subject or not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*(@[A-Za-z0-9_]+)?", subject):
        raise TermSyntaxError("expected subject", at)
    args: list[Arg] = []
    while True:
        tok, at = expect()
        if tok == ")":
            break
        if tok != ",":
            raise TermSyntaxError(f"expected ',' or ')', got {tok or 'end of input'!r}", at)
        arg, at = expect()
        if arg in ("", ",", ")", "("):
            raise TermSyntaxError("expected argument", at)
        args.append(int(arg) if arg.isdigit() else arg)
    tok, at = next(it)
    if tok:
        raise TermSyntaxError(f"trailing input {tok!r}", at)
    try:
        return Term(pred, subject, tuple(args))
    except ValueError as e:
        raise TermSyntaxError(str(e), at) from None


@dataclass(frozen=True)
class SymbolicSet:
    """A set of terms with exactly one term per subject, kept in subject order.

    Used for symbolic states, actions and effects alike; ``t`` is set on
    effects to the timestep of the action that caused them.
    """

    terms: tuple[Term, ...]
    t: int | None = field(default=None, compare=False)

    def __init__(self, terms: Iterable[Term], t: int | None = None):
        terms = tuple(sorted(terms, key=lambda x: x.subject))
        for a, b in zip(terms, terms[1:]):
            if a.subject == b.subject:
                raise ValueError(f"two terms for subject {a.subject}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "t", t)

    @property
    def key(self) -> str:
        return " & ".join(render_term(x) for x in self.terms)

    def by_subject(self) -> dict[str, Term]:
        return {x.subject: x for x in self.terms}

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def __str__(self):
        return self.key

    @classmethod
    def from_key(cls, key: str, t: int | None = None) -> "SymbolicSet":
        if not key:
            return cls(())
        return cls((parse_term(s) for s in key.split(" & ")), t)


SymbolicState = SymbolicAction = Effect = SymbolicSet


def canonical_key(terms: Iterable[Term] | SymbolicSet | str) -> str:
    if isinstance(terms, str):
        return terms
    if isinstance(terms, SymbolicSet):
        return terms.key
    return SymbolicSet(terms).key


def subject_group(subject: str) -> str:
    """Slice or group qualifier of a subject: ``tx_brate@embb`` -> ``embb``, ``g1`` -> ``g1``."""
    return subject.split("@", 1)[1] if "@" in subject else subject


def parse_terms(texts: Sequence[str]) -> list[Term]:
    return [parse_term(x) for x in texts]
