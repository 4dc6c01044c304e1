"""Multi-step execution: within-step reply rounds, environment models, the
persistent-query registry, inter-step late-reply delivery, the Halt
convention, deterministic trace recording, and an exhaustive enumerator of
final attainable histories used as a verification oracle.

A step starts from the empty history and ends at the first final history
(which makes every recorded history attainable).  Queries caused with an
``rl`` marker register their reply location with the persistent registry; the
reply -- on-time from within the issuing step, or late via a scenario
directive -- is written into the registered locations at an inter-step
boundary.  A run alternates steps and boundaries until ``Halt`` holds, a step
fails, the environment leaves a non-final step without replies (stuck), or
the step/round limits run out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Iterable, Mapping, Protocol

from .evaluator import RuleOutcome, eval_rule
from .histories import EMPTY, History, Query, is_attainable, is_coherent
from .parser import Directive, Scenario
from .structures import (
    TRUE,
    UNDEF,
    Element,
    Location,
    StateStruct,
    Update,
    apply_updates,
    lookup,
)
from .syntax import Program, query_term_occurrences


class RuntimeFault(Exception):
    """Engine-level error: malformed combined query, bad reply, bad write."""


class EnvReplyError(RuntimeFault):
    """The environment answered a query that is not pending."""


class EnumerationBound(RuntimeFault):
    """The exhaustive search exceeded its node budget."""


# ---------------------------------------------------------------------------
# Trace


@dataclass(frozen=True)
class TraceEvent:
    type: str
    fields: tuple[tuple[str, object], ...] = ()

    def get(self, key: str):
        return dict(self.fields).get(key)


def _ev(type_: str, **fields) -> TraceEvent:
    return TraceEvent(type_, tuple(fields.items()))


class Trace:
    """Replayable event log; rendering is canonical and byte-deterministic."""

    def __init__(self) -> None:
        self.events: list[TraceEvent] = []

    def step_start(self, step: int) -> None:
        self.events.append(_ev("stepStart", step=step))

    def issued(self, query: Query, location: Location | None) -> None:
        self.events.append(
            _ev("queryIssued", query=query.render(),
                location=location.render() if location else None)
        )

    def round(self, number: int, replies: Mapping[Query, Element]) -> None:
        rendered = tuple(
            (q.render(), v.render())
            for q, v in sorted(replies.items(), key=lambda qv: qv[0].render())
        )
        self.events.append(_ev("roundDelivered", round=number, replies=rendered))

    def step_end(self, step: int, verdict: str, updates: Iterable[Update]) -> None:
        rendered = tuple(
            u.render() for u in sorted(updates, key=lambda u: u.location.render())
        )
        self.events.append(_ev("stepEnd", step=step, verdict=verdict, updates=rendered))

    def late(self, query: Query, location: Location, value: Element) -> None:
        self.events.append(
            _ev("lateDelivery", query=query.render(), location=location.render(),
                value=value.render())
        )

    def warning(self, message: str) -> None:
        self.events.append(_ev("warning", message=message))

    def halted(self) -> None:
        self.events.append(_ev("halted"))

    def failed(self) -> None:
        self.events.append(_ev("failed"))

    def stuck(self) -> None:
        self.events.append(_ev("stuck"))

    def render(self) -> str:
        lines = []
        for e in self.events:
            f = dict(e.fields)
            if e.type == "stepStart":
                lines.append(f"STEP {f['step']} BEGIN")
            elif e.type == "queryIssued":
                if f["location"]:
                    lines.append(f"ISSUED {f['query']} -> {f['location']}")
                else:
                    lines.append(f"ISSUED {f['query']}")
            elif e.type == "roundDelivered":
                body = ", ".join(f"{q} = {v}" for q, v in f["replies"])
                lines.append(f"ROUND {f['round']}: {body}")
            elif e.type == "stepEnd":
                body = ", ".join(f["updates"])
                lines.append(f"STEP {f['step']} END {f['verdict']}; updates: {body}"
                             .rstrip())
            elif e.type == "lateDelivery":
                lines.append(f"LATE {f['query']} -> {f['location']} = {f['value']}")
            elif e.type == "warning":
                lines.append(f"WARN {f['message']}")
            elif e.type == "halted":
                lines.append("HALTED")
            elif e.type == "failed":
                lines.append("FAILED")
            elif e.type == "stuck":
                lines.append("STUCK")
        return "\n".join(lines) + ("\n" if lines else "")

    def to_json(self) -> str:
        return json.dumps(
            [{"type": e.type, **dict(e.fields)} for e in self.events], indent=None
        )


# ---------------------------------------------------------------------------
# Persistent-query registry


@dataclass
class RegistryInstance:
    """One issuing of a persistent query: the locations announced for it and
    the delivery status of its reply."""

    query: Query
    step_issued: int
    locations: list[Location] = field(default_factory=list)
    status: str = "awaiting"  # "awaiting" | "delivered"
    value: Element | None = None
    delivered_step: int | None = None
    on_time_value: Element | None = None


class PersistentRegistry:
    def __init__(self) -> None:
        self.instances: list[RegistryInstance] = []

    def register(self, query: Query, location: Location, step: int) -> RegistryInstance:
        """Record a reply location for a query issued in the given step.  Two
        locations announced for the same query in one step share the instance:
        the one reply is written into both."""
        for inst in self.instances:
            if inst.query == query and inst.step_issued == step and inst.status == "awaiting":
                if location not in inst.locations:
                    inst.locations.append(location)
                return inst
        inst = RegistryInstance(query, step, [location])
        self.instances.append(inst)
        return inst

    def mark_on_time(self, query: Query, step: int, value: Element) -> None:
        for inst in self.instances:
            if inst.query == query and inst.step_issued == step and inst.status == "awaiting":
                inst.on_time_value = value

    def oldest_awaiting(self, query: Query) -> RegistryInstance | None:
        for inst in self.instances:  # insertion order = issuing order
            if inst.query == query and inst.status == "awaiting":
                return inst
        return None

    def has_awaiting(self, query: Query) -> bool:
        return self.oldest_awaiting(query) is not None

    def snapshot(self) -> list[dict]:
        return [
            {
                "query": inst.query.render(),
                "locations": [loc.render() for loc in inst.locations],
                "status": inst.status,
                "value": inst.value.render() if inst.value is not None else None,
                "step": inst.step_issued,
            }
            for inst in self.instances
        ]


# ---------------------------------------------------------------------------
# Environment models


class EnvModel(Protocol):
    def next_round(
        self, step: int, round_index: int, pending: frozenset[Query], state: StateStruct
    ) -> Mapping[Query, Element] | None:
        """The next batch of simultaneous replies, or None when the
        environment has nothing more to say in this step."""


class SilentEnv:
    def next_round(self, step, round_index, pending, state):
        return None


class ScriptedEnv:
    """Plays back the within-step directives of a scenario.  Directives are
    grouped by their round numbers; groups arrive as successive rounds."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def next_round(self, step, round_index, pending, state):
        rounds = self.scenario.rounds_for_step(step)
        if round_index > len(rounds):
            return None
        return rounds[round_index - 1]


class RandomEnv:
    """Seed-deterministic environment: each round answers a random non-empty
    subset of the pending queries with values from the alphabet."""

    def __init__(self, seed: int, alphabet: Iterable[Element]):
        import random

        self.rng = random.Random(seed)
        self.alphabet = sorted(alphabet, key=lambda e: e.render())
        if not self.alphabet:
            raise RuntimeFault("random environment needs a non-empty alphabet")

    def next_round(self, step, round_index, pending, state):
        if not pending:
            return None
        ordered = sorted(pending, key=lambda q: q.render())
        chosen = [q for q in ordered if self.rng.random() < 0.5]
        if not chosen:
            chosen = [self.rng.choice(ordered)]
        return {q: self.rng.choice(self.alphabet) for q in chosen}


# ---------------------------------------------------------------------------
# Stepping


@dataclass(frozen=True)
class StepResult:
    final_history: History
    verdict: str  # "success" | "fail" | "stuck" | "limit"
    updates: frozenset[Update]
    issued_with_locations: tuple[tuple[Query, Location], ...]


def _location_of(q_raw: Query, program: Program) -> Location:
    loc = q_raw.reply_location()
    if loc is None:
        raise RuntimeFault(f"malformed reply-location query {q_raw.render()}")
    sig = program.vocabulary.sig(loc.symbol)
    if sig is None or not sig.reply_available:
        raise RuntimeFault(f"{loc.symbol} is not reply-available")
    if len(loc.args) != sig.arity:
        raise RuntimeFault(f"bad location arity in {q_raw.render()}")
    return loc


class StepSession:
    """One step in progress: grows the history round by round and stops at
    the first final history."""

    def __init__(
        self,
        program: Program,
        state: StateStruct,
        registry: PersistentRegistry,
        step_index: int,
        trace: Trace,
    ):
        self.program = program
        self.state = state
        self.registry = registry
        self.step_index = step_index
        self.trace = trace
        self.history: History = EMPTY
        self.issued: set[Query] = set()
        self.registered: set[tuple[Query, Location]] = set()
        self.outcome: RuleOutcome = None  # type: ignore[assignment]
        self._occurrence_budget = len(query_term_occurrences(program))
        self._max_query_len = max(
            (len(t.slots) for t in program.vocabulary.templates.values()), default=0
        )
        trace.step_start(step_index)
        self._evaluate()

    def _evaluate(self) -> None:
        self.outcome = eval_rule(self.program.rule, self.state, self.history)
        by_query: dict[Query, list[Location]] = {}
        for q_raw in self.outcome.caused:
            stripped = q_raw.strip_rl()
            locs = by_query.setdefault(stripped, [])
            if q_raw.contains_rl():
                loc = _location_of(q_raw, self.program)
                if (stripped, loc) not in self.registered:
                    locs.append(loc)
        for stripped in sorted(by_query, key=lambda q: q.render()):
            new_locs = sorted(set(by_query[stripped]), key=lambda l: l.render())
            for loc in new_locs:
                self.registered.add((stripped, loc))
                self.registry.register(stripped, loc, self.step_index)
                self.trace.issued(stripped, loc)
            if not new_locs and stripped not in self.issued:
                self.trace.issued(stripped, None)
            self.issued.add(stripped)
        # Work done in one step is bounded by the program alone.
        assert len(self.issued) <= self._occurrence_budget, "issued-set bound violated"
        assert all(len(q.slots) <= self._max_query_len for q in self.issued), \
            "query-length bound violated"

    @property
    def final(self) -> bool:
        return self.outcome.final

    @property
    def pending(self) -> frozenset[Query]:
        return frozenset(self.issued) - self.history.domain

    def add_round(self, replies: Mapping[Query, Element]) -> None:
        if self.final:
            raise RuntimeFault("step already final; no more rounds")
        if not replies:
            raise RuntimeFault("a reply round must be non-empty")
        pending = self.pending
        for q, v in replies.items():
            if q not in pending:
                raise EnvReplyError(f"{q.render()} is not pending")
            if v == UNDEF and self.registry.has_awaiting(q):
                raise RuntimeFault(
                    f"reply to persistent query {q.render()} must not be undef"
                )
            if v.kind == "atom" and not self.state.element_in_base(v):
                raise EnvReplyError(f"reply {v.render()} is not a state element")
        self.history = self.history.extend(replies)
        self.trace.round(len(self.history.rounds), replies)
        self._evaluate()

    def finish(self, verify: bool = True) -> StepResult:
        if not self.final:
            raise RuntimeFault("step is not final")
        verdict = "success" if self.outcome.verdict == "success" else "fail"
        self.trace.step_end(self.step_index, verdict, self.outcome.updates)
        for q, loc in sorted(self.registered,
                             key=lambda ql: (ql[0].render(), ql[1].render())):
            answer = self.history.answer(q)
            if answer is not None:
                self.registry.mark_on_time(q, self.step_index, answer)
        if verify:
            assert is_coherent(self.program, self.state, self.history)
            assert is_attainable(self.program, self.state, self.history)
        return StepResult(
            self.history,
            verdict,
            self.outcome.updates,
            tuple(sorted(self.registered,
                         key=lambda ql: (ql[0].render(), ql[1].render()))),
        )


def run_step(
    program: Program,
    state: StateStruct,
    env: EnvModel,
    registry: PersistentRegistry,
    step_index: int,
    trace: Trace | None = None,
    max_rounds: int = 100,
    verify: bool = True,
) -> StepResult:
    """Run one step against an environment model: evaluate, ask for reply
    rounds while not final, stop at the first final history."""
    trace = trace if trace is not None else Trace()
    session = StepSession(program, state, registry, step_index, trace)
    while not session.final:
        round_index = len(session.history.rounds) + 1
        if round_index > max_rounds:
            return StepResult(session.history, "limit", frozenset(), ())
        replies = env.next_round(step_index, round_index, session.pending, state)
        if not replies:
            return StepResult(session.history, "stuck", frozenset(), ())
        session.add_round(replies)
    return session.finish(verify=verify)


def deliver_late_replies(
    state: StateStruct,
    registry: PersistentRegistry,
    scenario: Scenario,
    step_index: int,
    consumed: set[int],
    trace: Trace,
    selected: list[Directive] | None = None,
    written: set[Location] | None = None,
) -> StateStruct:
    """Write due replies into their registered locations at the boundary
    after step_index.

    On-time replies (answered within the issuing step) are written first, at
    the end of their issuing step; then due ``afterstep`` directives apply in
    scenario order.  When two writes target one location at the same boundary
    the earlier one wins and a warning is logged; callers that split one
    boundary across calls pass a shared ``written`` set.  Only registered
    reply locations are ever written.
    """
    written = written if written is not None else set()

    def write(inst: RegistryInstance, value: Element) -> None:
        nonlocal state
        if value == UNDEF:
            raise RuntimeFault(
                f"reply to persistent query {inst.query.render()} must not be undef"
            )
        for loc in inst.locations:
            if loc in written:
                trace.warning(
                    f"{loc.render()} already written at this boundary; "
                    f"reply {value.render()} to {inst.query.render()} dropped"
                )
                continue
            sig = state.vocabulary.sig(loc.symbol)
            if sig is None or sig.kind != "dynamic" or sig.relational:
                raise RuntimeFault(
                    f"reply location {loc.render()} must be dynamic and non-relational"
                )
            state = apply_updates(state, [Update(loc, value)])
            written.add(loc)
            trace.late(inst.query, loc, value)
        inst.status = "delivered"
        inst.value = value
        inst.delivered_step = step_index

    for inst in registry.instances:
        if inst.status == "awaiting" and inst.on_time_value is not None:
            write(inst, inst.on_time_value)

    due = selected if selected is not None else scenario.due_after(step_index)
    for directive in due:
        if directive.index in consumed:
            continue
        consumed.add(directive.index)
        inst = registry.oldest_awaiting(directive.query)
        if inst is None:
            trace.warning(
                f"no awaiting persistent query {directive.query.render()}; "
                "late reply dropped"
            )
            continue
        write(inst, directive.value)
    return state


@dataclass
class RunResult:
    trace: Trace
    verdict: str  # "halted" | "failed" | "stuck" | "limits"
    final_state: StateStruct
    steps_taken: int
    step_results: list[StepResult]


def run(
    program: Program,
    state: StateStruct,
    env: EnvModel,
    scenario: Scenario = Scenario(()),
    max_steps: int = 50,
    max_rounds: int = 100,
    verify: bool = True,
) -> RunResult:
    """Execute the program repeatedly until Halt becomes true, a step fails
    or gets stuck, or the limits run out."""
    trace = Trace()
    registry = PersistentRegistry()
    consumed: set[int] = set()
    results: list[StepResult] = []
    step = 1
    while step <= max_steps:
        result = run_step(program, state, env, registry, step, trace, max_rounds,
                          verify=verify)
        results.append(result)
        if result.verdict == "fail":
            trace.failed()
            return RunResult(trace, "failed", state, step, results)
        if result.verdict == "stuck":
            trace.stuck()
            return RunResult(trace, "stuck", state, step, results)
        if result.verdict == "limit":
            return RunResult(trace, "limits", state, step, results)
        state = apply_updates(state, result.updates)
        state = deliver_late_replies(state, registry, scenario, step, consumed, trace)
        if lookup(state, "Halt", ()) == TRUE:
            trace.halted()
            return RunResult(trace, "halted", state, step, results)
        step += 1
    return RunResult(trace, "limits", state, max_steps, results)


# ---------------------------------------------------------------------------
# Exhaustive enumeration of final attainable histories


@dataclass(frozen=True)
class EnumEntry:
    history: History
    verdict: str  # "success" | "fail"
    updates: frozenset[Update]
    pending: frozenset[Query]

    def render(self) -> str:
        updates = ", ".join(
            u.render() for u in sorted(self.updates, key=lambda u: u.location.render())
        )
        pending = ", ".join(sorted(q.render() for q in self.pending))
        return (
            f"{self.history.render_inline()} => {self.verdict}"
            f"; updates: {updates}; pending: {pending}"
        )


def enumerate_attainable(
    program: Program,
    state: StateStruct,
    alphabet: Iterable[Element],
    max_rounds: int = 3,
    max_round_width: int | None = None,
    max_nodes: int = 200_000,
) -> list[EnumEntry]:
    """All final attainable histories reachable with reply rounds drawn from
    non-empty subsets of the pending queries and values from the alphabet,
    stopping each branch at its first final history.  Output is sorted by
    round count, then by rendered form."""
    alphabet = sorted(set(alphabet), key=lambda e: e.render())
    if not alphabet:
        raise RuntimeFault("enumeration needs a non-empty alphabet")
    results: list[EnumEntry] = []
    visited = 0

    def walk(history: History, issued: frozenset[Query]) -> None:
        nonlocal visited
        visited += 1
        if visited > max_nodes:
            raise EnumerationBound(f"enumeration exceeded {max_nodes} histories")
        outcome = eval_rule(program.rule, state, history)
        issued = issued | {q.strip_rl() for q in outcome.caused}
        if outcome.final:
            verdict = "success" if outcome.verdict == "success" else "fail"
            results.append(
                EnumEntry(history, verdict, outcome.updates, issued - history.domain)
            )
            return
        if len(history.rounds) >= max_rounds:
            return  # branch truncated: not final within bounds
        pending = sorted(issued - history.domain, key=lambda q: q.render())
        if not pending:
            raise RuntimeFault(
                "complete history is not final; the step can never end"
            )
        width = len(pending) if max_round_width is None else min(max_round_width,
                                                                 len(pending))
        for size in range(1, width + 1):
            for subset in combinations(pending, size):
                for values in product(alphabet, repeat=size):
                    walk(history.extend(dict(zip(subset, values))), issued)

    walk(EMPTY, frozenset())
    results.sort(key=lambda e: (len(e.history.rounds), e.render()))
    return results
