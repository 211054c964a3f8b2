"""Operator intents over scheduling actions.

Grammar::

    intent := clause ("&" clause)* window?
    clause := atom | "forall" ident "in" set ":" atom
    atom   := ("schedule" | "notSchedule") "(" arg ")"
    set    := "G" digit | "{" nat ("," nat)* "}"
    window := "@" "[" nat "," nat "]"

``arg`` is a user id or the quantified variable. Groups and users are
0-based, matching the schema's group layout.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

from .core import SchemaA2


class IntentError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        super().__init__(message if position is None else f"{message} at position {position}")


@dataclass(frozen=True)
class Atom:
    scheduled: bool  # schedule(u) when True, notSchedule(u) otherwise
    user: int

    def holds(self, mask: Sequence[int]) -> bool:
        return bool(mask[self.user]) == self.scheduled

    def render(self) -> str:
        return f"{'schedule' if self.scheduled else 'notSchedule'}({self.user})"


@dataclass(frozen=True)
class ForAll:
    var: str
    set_text: str
    users: tuple[int, ...]
    scheduled: bool

    def holds(self, mask: Sequence[int]) -> bool:
        return all(bool(mask[u]) == self.scheduled for u in self.users)

    def atoms(self) -> tuple[Atom, ...]:
        return tuple(Atom(self.scheduled, u) for u in self.users)

    def render(self) -> str:
        pred = "schedule" if self.scheduled else "notSchedule"
        return f"forall {self.var} in {self.set_text}: {pred}({self.var})"


Clause = Union[Atom, ForAll]


@dataclass(frozen=True)
class Intent:
    clauses: tuple[Clause, ...]
    window: tuple[int, int] | None = None
    name: str = ""

    def active(self, t: int) -> bool:
        return self.window is None or self.window[0] <= t <= self.window[1]

    def atoms(self) -> tuple[Atom, ...]:
        out: list[Atom] = []
        for c in self.clauses:
            out.extend(c.atoms() if isinstance(c, ForAll) else (c,))
        return tuple(out)

    def holds(self, mask: Sequence[int]) -> bool:
        return all(c.holds(mask) for c in self.clauses)

    def render(self) -> str:
        body = " & ".join(c.render() for c in self.clauses)
        if self.window is not None:
            body += f" @ [{self.window[0]},{self.window[1]}]"
        return body

    def __str__(self):
        return self.render()


_TOKENS = re.compile(r"\s*(?:(?P<num>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<sym>[&@\[\](),:{}]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKENS.match(text, pos)
        if not m or m.end() == pos:
            raise IntentError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, schema: SchemaA2):
        self.tokens = _tokenize(text)
        self.i = 0
        self.schema = schema

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None, value=None):
        tok = self.tokens[self.i]
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value or kind
            raise IntentError(f"expected {want!r}, got {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def user(self, tok) -> int:
        u = int(tok[1])
        if not 0 <= u < self.schema.n_users:
            raise IntentError(f"unknown user {u}", tok[2])
        return u

    def atom(self, var: str | None = None):
        _, pred, at = self.take("ident")
        if pred not in ("schedule", "notSchedule"):
            raise IntentError(f"unknown predicate {pred!r}", at)
        self.take("sym", "(")
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            arg: int | str = self.user(tok)
        elif tok[0] == "ident" and var is not None and tok[1] == var:
            self.take()
            arg = var
        else:
            raise IntentError(f"expected user id{' or ' + var if var else ''}", tok[2])
        self.take("sym", ")")
        return pred == "schedule", arg

    def user_set(self) -> tuple[str, tuple[int, ...]]:
        tok = self.peek()
        if tok[0] == "ident" and re.fullmatch(r"G\d", tok[1]):
            self.take()
            g = int(tok[1][1:])
            if g >= len(self.schema.groups):
                raise IntentError(f"unknown group {tok[1]}", tok[2])
            return tok[1], self.schema.groups[g]
        if tok[1] == "{":
            self.take()
            users = [self.user(self.take("num"))]
            while self.peek()[1] == ",":
                self.take()
                users.append(self.user(self.take("num")))
            self.take("sym", "}")
            return "{" + ",".join(map(str, users)) + "}", tuple(users)
        raise IntentError("expected a group (G<digit>) or a user set", tok[2])

    def clause(self) -> Clause:
        tok = self.peek()
        if tok[0] == "ident" and tok[1] == "forall":
            self.take()
            _, var, _ = self.take("ident")
            self.take("ident", "in")
            set_text, users = self.user_set()
            self.take("sym", ":")
            at = self.peek()[2]
            scheduled, arg = self.atom(var)
            if arg != var:
                raise IntentError(f"quantified atom must use variable {var!r}", at)
            return ForAll(var, set_text, users, scheduled)
        scheduled, arg = self.atom()
        return Atom(scheduled, arg)

    def intent(self, name: str) -> Intent:
        clauses = [self.clause()]
        while self.peek()[1] == "&":
            self.take()
            clauses.append(self.clause())
        window = None
        if self.peek()[1] == "@":
            self.take()
            self.take("sym", "[")
            start_tok = self.take("num")
            self.take("sym", ",")
            end_tok = self.take("num")
            self.take("sym", "]")
            window = (int(start_tok[1]), int(end_tok[1]))
            if window[0] > window[1]:
                raise IntentError(f"bad window: start {window[0]} > end {window[1]}", start_tok[2])
        tok = self.peek()
        if tok[0] != "end":
            raise IntentError(f"unexpected {tok[1]!r}", tok[2])
        return Intent(tuple(clauses), window, name)


def parse_intent(text: str, schema: SchemaA2 | None = None, name: str = "") -> Intent:
    return _Parser(text, schema or SchemaA2()).intent(name or text.strip())


def render_intent(intent: Intent) -> str:
    return intent.render()


def satisfies(mask: Sequence[int], intent: Intent, t: int) -> bool:
    """True when ``intent`` is inactive at ``t`` or its body holds for ``mask``."""
    return not intent.active(t) or intent.holds(mask)


def satisfies_all(mask: Sequence[int], intents: Iterable[Intent], t: int) -> bool:
    return all(satisfies(mask, i, t) for i in intents)


def read_intents(path: str | Path, schema: SchemaA2 | None = None) -> list[Intent]:
    intents = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                intents.append(parse_intent(text, schema, name=f"{Path(path).name}:{lineno}"))
            except IntentError as e:
                raise IntentError(f"{path}:{lineno}: {e}") from None
    return intents


def check_satisfiable(intents: Sequence[Intent]) -> None:
    """Raise if some pair of intents that can be active together demand opposite things of one user."""
    for i, a in enumerate(intents):
        for b in intents[i:]:
            if a.window and b.window and (a.window[1] < b.window[0] or b.window[1] < a.window[0]):
                continue
            want: dict[int, bool] = {}
            for atom in a.atoms() + b.atoms():
                if want.setdefault(atom.user, atom.scheduled) != atom.scheduled:
                    raise IntentError(f"intents demand both schedule({atom.user}) and notSchedule({atom.user})")
