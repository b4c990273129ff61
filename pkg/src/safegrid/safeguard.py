"""Finite-state safeguard machines.

A safeguard watches a sequence of label sets and moves through named
states; some states are accepting, and states from which no accepting
state is reachable form the rejecting sink set.  Entering a sink is a
safety violation.  Machines are described in a small line-oriented text
format (see ``parse_safeguard``) and are immutable once parsed, so they
can be shared freely across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence


class SafeguardError(ValueError):
    """Raised for syntax or structural problems in a safeguard document."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# Guard formulas
# ---------------------------------------------------------------------------

class Guard:
    """Boolean formula over label atoms, evaluated against a label set."""

    def evaluate(self, labels: frozenset[str]) -> bool:
        raise NotImplementedError

    def atoms(self) -> set[str]:
        raise NotImplementedError


@dataclass(frozen=True)
class TrueGuard(Guard):
    def evaluate(self, labels):
        return True

    def atoms(self):
        return set()

    def __str__(self):
        return "true"


@dataclass(frozen=True)
class Atom(Guard):
    name: str

    def evaluate(self, labels):
        return self.name in labels

    def atoms(self):
        return {self.name}

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Not(Guard):
    inner: Guard

    def evaluate(self, labels):
        return not self.inner.evaluate(labels)

    def atoms(self):
        return self.inner.atoms()

    def __str__(self):
        return f"!({self.inner})"


@dataclass(frozen=True)
class And(Guard):
    left: Guard
    right: Guard

    def evaluate(self, labels):
        return self.left.evaluate(labels) and self.right.evaluate(labels)

    def atoms(self):
        return self.left.atoms() | self.right.atoms()

    def __str__(self):
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or(Guard):
    left: Guard
    right: Guard

    def evaluate(self, labels):
        return self.left.evaluate(labels) or self.right.evaluate(labels)

    def atoms(self):
        return self.left.atoms() | self.right.atoms()

    def __str__(self):
        return f"({self.left} or {self.right})"


def _tokenize_guard(text: str, line: int) -> list[str]:
    tokens = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "!&()":
            tokens.append(c)
            i += 1
        elif c.isalpha() or c == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(text[i:j])
            i = j
        else:
            raise SafeguardError(f"unexpected character {c!r} in guard", line)
    return tokens


class _GuardParser:
    """Recursive-descent parser; precedence ! > & > or."""

    def __init__(self, tokens: list[str], line: int):
        self.tokens = tokens
        self.pos = 0
        self.line = line

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def parse(self) -> Guard:
        g = self.expr()
        if self.peek() is not None:
            raise SafeguardError(f"trailing token {self.peek()!r} in guard", self.line)
        return g

    def expr(self) -> Guard:
        g = self.term()
        while self.peek() == "or":
            self.take()
            g = Or(g, self.term())
        return g

    def term(self) -> Guard:
        g = self.factor()
        while self.peek() == "&":
            self.take()
            g = And(g, self.factor())
        return g

    def factor(self) -> Guard:
        tok = self.take()
        if tok is None:
            raise SafeguardError("guard ended unexpectedly", self.line)
        if tok == "!":
            return Not(self.factor())
        if tok == "(":
            g = self.expr()
            if self.take() != ")":
                raise SafeguardError("missing ')' in guard", self.line)
            return g
        if tok == "true":
            return TrueGuard()
        if tok == "else":
            raise SafeguardError("'else' may only be a whole guard, not nested", self.line)
        if tok in ("&", ")", "or"):
            raise SafeguardError(f"unexpected {tok!r} in guard", self.line)
        return Atom(tok)


def parse_guard(text: str, line: int = 0) -> Guard:
    """Parse a guard expression (without the `else` keyword)."""
    return _GuardParser(_tokenize_guard(text, line), line).parse()


# ---------------------------------------------------------------------------
# Safeguard structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Transition:
    source: str
    guard: Guard
    target: str


@dataclass(frozen=True)
class Safeguard:
    """Deterministic finite-state machine over sets of labels.

    ``transitions`` realize a total transition function: for every state
    and every subset of ``labels`` exactly one guard fires (checked by
    ``validate_determinism``).
    """

    name: str
    labels: tuple[str, ...]
    states: tuple[str, ...]
    initial: str
    accepting: frozenset[str]
    transitions: tuple[Transition, ...]
    _step_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def transitions_from(self, state: str) -> list[Transition]:
        return [t for t in self.transitions if t.source == state]

    def state_index(self, state: str) -> int:
        return self.states.index(state)


def all_label_sets(labels: Sequence[str]) -> list[frozenset[str]]:
    """Enumerate the power set of the alphabet (2^L), smallest first."""
    out = [frozenset()]
    for r in range(1, len(labels) + 1):
        out.extend(frozenset(c) for c in combinations(labels, r))
    return out


def parse_safeguard(text: str) -> Safeguard:
    """Parse a safeguard document.

    Format (one directive per line, `#` comments ignored)::

        safeguard <name>
        labels <id> <id> ...
        state <id> [initial] [accepting]
        trans <src> -> <dst> on <guard>

    Guard grammar: ``true | else | atom | !g | g & g | g or g | (g)``
    with precedence ``!`` > ``&`` > ``or``.  An ``else`` guard expands to
    the negated disjunction of the state's other guards.
    """
    name = None
    labels: list[str] = []
    states: list[str] = []
    initial = None
    accepting: set[str] = set()
    raw_transitions: list[tuple[str, str, str, int]] = []  # (src, guard text, dst, line)

    seen_labels_line = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "safeguard":
            if len(parts) != 2:
                raise SafeguardError("expected: safeguard <name>", lineno)
            name = parts[1]
        elif kind == "labels":
            if seen_labels_line:
                raise SafeguardError("duplicate labels line", lineno)
            seen_labels_line = True
            for lab in parts[1:]:
                if lab in labels:
                    raise SafeguardError(f"duplicate label {lab!r}", lineno)
                labels.append(lab)
            if not labels:
                raise SafeguardError("labels line declares no labels", lineno)
        elif kind == "state":
            if len(parts) < 2:
                raise SafeguardError("expected: state <id> [initial] [accepting]", lineno)
            st = parts[1]
            if st in states:
                raise SafeguardError(f"duplicate state name {st!r}", lineno)
            states.append(st)
            for flag in parts[2:]:
                if flag == "initial":
                    if initial is not None:
                        raise SafeguardError("more than one initial state", lineno)
                    initial = st
                elif flag == "accepting":
                    accepting.add(st)
                else:
                    raise SafeguardError(f"unknown state flag {flag!r}", lineno)
        elif kind == "trans":
            try:
                arrow = parts.index("->")
                on = parts.index("on")
            except ValueError:
                raise SafeguardError("expected: trans <src> -> <dst> on <guard>", lineno)
            if arrow != 2 or on != 4 or len(parts) < 6:
                raise SafeguardError("expected: trans <src> -> <dst> on <guard>", lineno)
            src, dst = parts[1], parts[3]
            guard_text = " ".join(parts[5:])
            raw_transitions.append((src, guard_text, dst, lineno))
        else:
            raise SafeguardError(f"unknown directive {kind!r}", lineno)

    if name is None:
        raise SafeguardError("missing 'safeguard <name>' line")
    if not states:
        raise SafeguardError("no states declared")
    if initial is None:
        raise SafeguardError("missing initial state")
    for st in accepting:
        if st not in states:
            raise SafeguardError(f"accepting state {st!r} not declared")

    # Parse guards; defer 'else' expansion until siblings are known.
    parsed: list[tuple[str, Guard | None, str, int]] = []
    for src, guard_text, dst, lineno in raw_transitions:
        if src not in states:
            raise SafeguardError(f"unknown source state {src!r}", lineno)
        if dst not in states:
            raise SafeguardError(f"unknown target state {dst!r}", lineno)
        if guard_text.strip() == "else":
            parsed.append((src, None, dst, lineno))
        else:
            guard = parse_guard(guard_text, lineno)
            for atom in guard.atoms():
                if atom not in labels:
                    raise SafeguardError(f"undeclared label {atom!r} in guard", lineno)
            parsed.append((src, guard, dst, lineno))

    # At most one else per state; expand it to the negation of the
    # disjunction of the state's explicit guards.
    transitions: list[Transition] = []
    for st in states:
        own = [p for p in parsed if p[0] == st]
        elses = [p for p in own if p[1] is None]
        if len(elses) > 1:
            raise SafeguardError(f"state {st!r} has more than one else transition", elses[1][3])
        explicit = [p for p in own if p[1] is not None]
        for src, guard, dst, _ in explicit:
            transitions.append(Transition(src, guard, dst))
        if elses:
            src, _, dst, _ = elses[0]
            if explicit:
                disj: Guard = explicit[0][1]
                for _, g, _, _ in explicit[1:]:
                    disj = Or(disj, g)
                transitions.append(Transition(src, Not(disj), dst))
            else:
                transitions.append(Transition(src, TrueGuard(), dst))

    return Safeguard(
        name=name,
        labels=tuple(labels),
        states=tuple(states),
        initial=initial,
        accepting=frozenset(accepting),
        transitions=tuple(transitions),
    )


# ---------------------------------------------------------------------------
# Determinism report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeterminismDefect:
    state: str
    label_set: frozenset[str]
    firing: int  # number of guards that fire (0 or >= 2)


def validate_determinism(g: Safeguard) -> list[DeterminismDefect]:
    """Exhaustively check that exactly one guard fires per (state, label set).

    Returns the list of defects; an empty list means the machine is
    deterministic and complete.  Feasible for up to 16 labels.
    """
    if len(g.labels) > 16:
        raise SafeguardError("determinism check requires at most 16 labels")
    defects = []
    by_state = {st: g.transitions_from(st) for st in g.states}
    for st in g.states:
        for ls in all_label_sets(g.labels):
            n = sum(1 for t in by_state[st] if t.guard.evaluate(ls))
            if n != 1:
                defects.append(DeterminismDefect(st, ls, n))
    return defects


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def step(g: Safeguard, q: str, labels: Iterable[str]) -> str:
    """Advance one safeguard transition on an observed label set."""
    if q not in g.states:
        raise SafeguardError(f"unknown state {q!r}")
    ls = frozenset(labels)
    for lab in ls:
        if lab not in g.labels:
            raise SafeguardError(f"label {lab!r} outside the declared alphabet")
    key = (q, ls)
    cached = g._step_cache.get(key)
    if cached is not None:
        return cached
    target = None
    for t in g.transitions:
        if t.source == q and t.guard.evaluate(ls):
            if target is not None:
                raise SafeguardError(f"nondeterministic step from {q!r} on {sorted(ls)}")
            target = t.target
    if target is None:
        raise SafeguardError(f"no transition from {q!r} on {sorted(ls)}")
    g._step_cache[key] = target
    return target


def run(g: Safeguard, trace: Iterable[Iterable[str]]) -> list[str]:
    """The state sequence induced by a label trace, starting at the initial state."""
    states = [g.initial]
    for ls in trace:
        states.append(step(g, states[-1], ls))
    return states


def accepts_trace(g: Safeguard, trace: Iterable[Iterable[str]]) -> bool:
    """True iff the induced run ends in an accepting state."""
    return run(g, trace)[-1] in g.accepting


def is_unsafe_run(g: Safeguard, trace: Iterable[Iterable[str]]) -> bool:
    """True iff any prefix of the induced run visits the rejecting sink set."""
    sinks = rejecting_sinks(g)
    q = g.initial
    if q in sinks:
        return True
    for ls in trace:
        q = step(g, q, ls)
        if q in sinks:
            return True
    return False


# ---------------------------------------------------------------------------
# Graph analysis
# ---------------------------------------------------------------------------

def _edge_map(g: Safeguard) -> dict[str, set[str]]:
    """Reachable-successor map: edges realized by at least one label set."""
    edges: dict[str, set[str]] = {st: set() for st in g.states}
    for ls in all_label_sets(g.labels):
        for st in g.states:
            edges[st].add(step(g, st, ls))
    return edges


def rejecting_sinks(g: Safeguard) -> frozenset[str]:
    """States from which no path reaches an accepting state.

    Computed as the complement of backward reachability from the
    accepting set.  Entering any of these states makes acceptance
    impossible, so the runtime treats them as safety violations.
    """
    edges = _edge_map(g)
    reverse: dict[str, set[str]] = {st: set() for st in g.states}
    for src, dsts in edges.items():
        for dst in dsts:
            reverse[dst].add(src)
    can_reach = set(g.accepting)
    frontier = list(g.accepting)
    while frontier:
        st = frontier.pop()
        for pred in reverse[st]:
            if pred not in can_reach:
                can_reach.add(pred)
                frontier.append(pred)
    return frozenset(st for st in g.states if st not in can_reach)


def scc_rejecting_components(g: Safeguard) -> list[frozenset[str]]:
    """Diagnostic: maximal strongly connected components with no accepting state.

    This is the literal cycle-based reading of the sink definition;
    singleton components count only when they carry a self-loop, since a
    run cannot remain in a state without one.  On all shipped machines
    the union of these components equals ``rejecting_sinks``.
    """
    edges = _edge_map(g)
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    counter = [0]
    components: list[frozenset[str]] = []

    def strongconnect(v: str):
        # iterative Tarjan to avoid recursion limits on odd inputs
        work = [(v, iter(sorted(edges[v])))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(edges[w]))))
                    advanced = True
                    break
                elif w in on_stack:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == node:
                        break
                components.append(frozenset(comp))

    for st in g.states:
        if st not in index:
            strongconnect(st)

    out = []
    for comp in components:
        if comp & g.accepting:
            continue
        if len(comp) == 1:
            (only,) = comp
            if only not in edges[only]:
                continue
        out.append(comp)
    return out


def ancestors(g: Safeguard, q: str, k: int) -> list[frozenset[str]]:
    """Ordered ancestor levels of ``q`` up to depth ``k``.

    Level i holds the states with a non-self-loop edge into level i-1,
    excluding ``q`` itself, sink states, and anything already placed in a
    shallower level.  The list stops at the first empty level.
    """
    if q not in g.states:
        raise SafeguardError(f"unknown state {q!r}")
    if k < 1:
        raise ValueError("ancestor depth must be >= 1")
    edges = _edge_map(g)
    sinks = rejecting_sinks(g)
    parents: dict[str, set[str]] = {st: set() for st in g.states}
    for src, dsts in edges.items():
        for dst in dsts:
            if src != dst:
                parents[dst].add(src)
    levels: list[frozenset[str]] = []
    seen = {q}
    current = {q}
    for _ in range(k):
        nxt = set()
        for st in current:
            nxt |= parents[st]
        nxt -= seen
        nxt -= sinks
        nxt.discard(q)
        if not nxt:
            break
        levels.append(frozenset(nxt))
        seen |= nxt
        current = nxt
    return levels
