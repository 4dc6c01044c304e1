"""Queries and reply histories.

A query is a finite tuple over elements and labels.  A history is an answer
function (a partial map from queries to elements) together with a linear
pre-order recording the arrival order of the replies.  Finite linear
pre-orders are exactly ordered partitions, so a history is represented as an
ordered list of non-empty reply rounds; queries in one round arrived
simultaneously, and the initial segments of the history are exactly its round
prefixes.

The derived notions -- issued and pending query sets, coherence,
completeness, attainability -- live here as well.  Issued strips the ``rl``
reply-location marker: when an initial segment causes a combined query
``<q ... rl ...>``, it is the prefix before the first ``rl`` that counts as
issued.  Consequently no query containing ``rl`` can legitimately be
answered, and History rejects such domains outright.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping

from .structures import Element, Label, Location

if TYPE_CHECKING:  # pragma: no cover
    from .structures import StateStruct
    from .syntax import Program


RL = Label("rl")


class HistoryError(Exception):
    """Ill-formed history (empty round, duplicate query, rl in domain)."""


@dataclass(frozen=True)
class Query:
    """A finite tuple over elements and labels."""

    slots: tuple[Element | Label, ...]

    def render(self) -> str:
        return "<" + " ".join(s.render() for s in self.slots) + ">"

    def __repr__(self) -> str:
        return self.render()

    def contains_rl(self) -> bool:
        return RL in self.slots

    def strip_rl(self) -> "Query":
        """The prefix before the first ``rl`` occurrence (self if rl-free)."""
        if RL not in self.slots:
            return self
        return Query(self.slots[: self.slots.index(RL)])

    def split_rl(self) -> tuple["Query", tuple[Element | Label, ...]]:
        """Split at the first ``rl``: (query part, reply-location part)."""
        i = self.slots.index(RL)
        return Query(self.slots[:i]), self.slots[i + 1 :]

    def reply_location(self) -> Location | None:
        """Decode the part after the first ``rl`` as a location, if well formed.

        The location part must be a label (the reply-available symbol) followed
        by elements only.
        """
        if not self.contains_rl():
            return None
        _, tail = self.split_rl()
        if not tail or not isinstance(tail[0], Label):
            return None
        if any(isinstance(s, Label) for s in tail[1:]):
            return None
        return Location(tail[0].name, tuple(tail[1:]))  # type: ignore[arg-type]


Round = tuple[tuple[Query, Element], ...]


def _make_round(replies: Mapping[Query, Element] | Iterable[tuple[Query, Element]]) -> Round:
    pairs = list(replies.items()) if isinstance(replies, Mapping) else list(replies)
    return tuple(sorted(pairs, key=lambda qv: qv[0].render()))


@dataclass(frozen=True)
class History:
    """An answer function plus linear pre-order, as an ordered round list."""

    rounds: tuple[Round, ...] = ()

    def __post_init__(self):
        seen: set[Query] = set()
        for rnd in self.rounds:
            if not rnd:
                raise HistoryError("history round must be non-empty")
            for q, _ in rnd:
                if q in seen:
                    raise HistoryError(f"query {q.render()} answered twice")
                if q.contains_rl():
                    raise HistoryError(
                        f"query {q.render()} contains rl and cannot be answered"
                    )
                seen.add(q)

    @classmethod
    def from_rounds(
        cls, rounds: Iterable[Mapping[Query, Element] | Iterable[tuple[Query, Element]]]
    ) -> "History":
        return cls(tuple(_make_round(r) for r in rounds))

    @property
    def domain(self) -> frozenset[Query]:
        return frozenset(q for rnd in self.rounds for q, _ in rnd)

    def answer(self, q: Query) -> Element | None:
        for rnd in self.rounds:
            for query, val in rnd:
                if query == q:
                    return val
        return None

    def round_of(self, q: Query) -> int:
        """0-based index of the round answering q."""
        for i, rnd in enumerate(self.rounds):
            if any(query == q for query, _ in rnd):
                return i
        raise HistoryError(f"{q.render()} is not in the history domain")

    def prefix(self, k: int) -> "History":
        return History(self.rounds[:k])

    def initial_segments(self) -> list["History"]:
        """All initial segments, from empty to the full history.

        Initial segments of a linear pre-order are downward-closed sets; for a
        round list these are exactly the round prefixes.
        """
        return [self.prefix(k) for k in range(len(self.rounds) + 1)]

    def restrict_before(self, q: Query) -> "History":
        """The initial segment of replies strictly earlier than q's."""
        return self.prefix(self.round_of(q))

    def extend(self, replies: Mapping[Query, Element]) -> "History":
        if not replies:
            raise HistoryError("cannot extend history with an empty round")
        return History(self.rounds + (_make_round(replies),))

    def is_prefix_of(self, other: "History") -> bool:
        return self.rounds == other.rounds[: len(self.rounds)]

    def render_lines(self) -> list[str]:
        return [
            f"round {i + 1}: " + ", ".join(f"{q.render()} -> {v.render()}" for q, v in rnd)
            for i, rnd in enumerate(self.rounds)
        ]

    def render_inline(self) -> str:
        if not self.rounds:
            return "ε"
        return " ".join(
            "{" + ", ".join(f"{q.render()} -> {v.render()}" for q, v in rnd) + "}"
            for rnd in self.rounds
        )

    def __repr__(self) -> str:
        return self.render_inline()


EMPTY = History(())


def issued(program: "Program", state: "StateStruct", history: History) -> frozenset[Query]:
    """All rl-free queries q such that some initial segment of the history
    causes q itself or causes a combined query whose part before the first
    ``rl`` is q.
    """
    from .evaluator import eval_rule  # deferred: evaluator builds on this module

    out: set[Query] = set()
    for seg in history.initial_segments():
        for q in eval_rule(program.rule, state, seg).caused:
            out.add(q.strip_rl())
    return frozenset(out)


def pending(program: "Program", state: "StateStruct", history: History) -> frozenset[Query]:
    return issued(program, state, history) - history.domain


def is_coherent(program: "Program", state: "StateStruct", history: History) -> bool:
    """Every answered query was issued by the strictly earlier part of the
    history."""
    return all(
        q in issued(program, state, history.restrict_before(q))
        for q in history.domain
    )


def is_complete(program: "Program", state: "StateStruct", history: History) -> bool:
    return not pending(program, state, history)


def is_final(program: "Program", state: "StateStruct", history: History) -> bool:
    from .evaluator import eval_rule

    return eval_rule(program.rule, state, history).verdict != "not_final"


def is_attainable(program: "Program", state: "StateStruct", history: History) -> bool:
    """Coherent, and no proper initial segment is final."""
    if not is_coherent(program, state, history):
        return False
    return not any(
        is_final(program, state, seg)
        for seg in history.initial_segments()[:-1]
    )
