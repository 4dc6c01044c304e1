"""Semantics of terms, guards, and rules over a state and a history.

Everything here is a pure function of (AST, state, history).  Outcomes carry
the caused queries as raw tuples: a combined symbol causes its full query
including the ``rl`` marker and the reply location; the Issued computation
strips the marker.

A query-term takes as its value the history's answer to the part of its
q-value before the first ``rl`` (for ordinary query-terms that is the q-value
itself).  The environment only ever answers rl-free queries, so this is the
only way a combined term can be evaluated; it also makes a combined
occurrence and a plain occurrence of the same underlying query
interchangeable once the reply is in.

Timing guards quantify over the initial segments of the history, which for
the round-list representation is a finite loop over round prefixes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .histories import History, Query
from .structures import (
    FALSE,
    TRUE,
    Element,
    Location,
    StateStruct,
    Update,
    boolean,
    is_boolean,
    lookup,
)
from .syntax import (
    App,
    CondRule,
    FailRule,
    Guard,
    IssueRule,
    KAnd,
    KOr,
    Lit,
    Not,
    ParRule,
    Program,
    ReplyLoc,
    Rule,
    Term,
    Timing,
    UpdateRule,
    instantiate_template,
)


class EvalError(Exception):
    """The AST violates the evaluator's preconditions (undesugared or
    unvalidated input)."""


@dataclass(frozen=True)
class TermOutcome:
    value: Element | None
    qvalue: Query | None  # only for query-terms with all arguments valued
    caused: frozenset[Query]


@dataclass(frozen=True)
class GuardOutcome:
    value: Element | None  # TRUE or FALSE when present
    caused: frozenset[Query]


@dataclass(frozen=True)
class RuleOutcome:
    caused: frozenset[Query]
    verdict: str  # "not_final" | "success" | "fail"
    updates: frozenset[Update]
    clash: bool = False

    @property
    def final(self) -> bool:
        return self.verdict != "not_final"


_NO_QUERIES: frozenset[Query] = frozenset()


def eval_term(term: Term, state: StateStruct, history: History) -> TermOutcome:
    if isinstance(term, Lit):
        return TermOutcome(term.value, None, _NO_QUERIES)
    if isinstance(term, ReplyLoc):
        raise EvalError("reply-location syntax must be desugared before evaluation")
    if not isinstance(term, App):
        raise EvalError(f"not a term: {term!r}")

    sig = state.vocabulary.sig(term.func)
    if sig is None:
        raise EvalError(f"unknown symbol {term.func}")

    arg_outcomes = [eval_term(a, state, history) for a in term.args]
    if any(o.value is None for o in arg_outcomes):
        caused = frozenset().union(*(o.caused for o in arg_outcomes))
        return TermOutcome(None, None, caused)

    values = tuple(o.value for o in arg_outcomes)
    if sig.kind != "external":
        return TermOutcome(lookup(state, term.func, values), None, _NO_QUERIES)

    template = state.vocabulary.templates.get(term.func)
    if template is None:
        raise EvalError(f"external symbol {term.func} has no template")
    qvalue = instantiate_template(template, values)
    answer = history.answer(qvalue.strip_rl())
    if answer is not None:
        return TermOutcome(answer, qvalue, _NO_QUERIES)
    return TermOutcome(None, qvalue, frozenset({qvalue}))


def _term_defined(term: Term, state: StateStruct, history: History) -> bool:
    return eval_term(term, state, history).value is not None


def eval_guard(guard: Guard, state: StateStruct, history: History) -> GuardOutcome:
    if isinstance(guard, (Lit, App, ReplyLoc)):
        outcome = eval_term(guard, state, history)
        if outcome.value is not None and not is_boolean(outcome.value):
            raise EvalError(
                f"guard term evaluated to non-Boolean {outcome.value.render()}"
            )
        return GuardOutcome(outcome.value, outcome.caused)

    if isinstance(guard, Timing):
        s_out = eval_term(guard.s, state, history)
        t_out = eval_term(guard.t, state, history)
        if s_out.value is not None and t_out.value is not None:
            # True iff s's value arrived no later than t's: whenever an
            # initial segment gives t a value, it gives s one too.
            for seg in history.initial_segments():
                if _term_defined(guard.t, state, seg) and not _term_defined(
                    guard.s, state, seg
                ):
                    return GuardOutcome(FALSE, _NO_QUERIES)
            return GuardOutcome(TRUE, _NO_QUERIES)
        if s_out.value is not None:
            return GuardOutcome(TRUE, _NO_QUERIES)
        if t_out.value is not None:
            return GuardOutcome(FALSE, _NO_QUERIES)
        return GuardOutcome(None, s_out.caused | t_out.caused)

    if isinstance(guard, (KAnd, KOr)):
        left = eval_guard(guard.left, state, history)
        right = eval_guard(guard.right, state, history)
        decided = TRUE if isinstance(guard, KOr) else FALSE
        if left.value == decided or right.value == decided:
            # Kleene short-circuit: decided as soon as one operand suffices,
            # and then no queries are produced.
            return GuardOutcome(decided, _NO_QUERIES)
        if left.value is not None and right.value is not None:
            other = TRUE if decided == FALSE else FALSE
            return GuardOutcome(other, _NO_QUERIES)
        if left.value is None and right.value is None:
            return GuardOutcome(None, left.caused | right.caused)
        unvalued = left if left.value is None else right
        return GuardOutcome(None, unvalued.caused)

    if isinstance(guard, Not):
        inner = eval_guard(guard.inner, state, history)
        if inner.value is None:
            return GuardOutcome(None, inner.caused)
        return GuardOutcome(boolean(inner.value == FALSE), _NO_QUERIES)

    raise EvalError(f"not a guard: {guard!r}")


def eval_rule(rule: Rule, state: StateStruct, history: History) -> RuleOutcome:
    if isinstance(rule, UpdateRule):
        arg_outcomes = [eval_term(a, state, history) for a in rule.args]
        rhs_out = eval_term(rule.rhs, state, history)
        if all(o.value is not None for o in arg_outcomes) and rhs_out.value is not None:
            loc = Location(rule.func, tuple(o.value for o in arg_outcomes))
            return RuleOutcome(
                _NO_QUERIES, "success", frozenset({Update(loc, rhs_out.value)})
            )
        caused = rhs_out.caused.union(*(o.caused for o in arg_outcomes)) if arg_outcomes else rhs_out.caused
        return RuleOutcome(caused, "not_final", frozenset())

    if isinstance(rule, IssueRule):
        if not isinstance(rule.arg, App):
            raise EvalError("issue argument must be an external application")
        outcome = eval_term(rule.arg, state, history)
        if outcome.qvalue is not None:
            # All arguments valued: the rule succeeds, causing its query
            # unless the (stripped) query is already answered.
            return RuleOutcome(outcome.caused, "success", frozenset())
        return RuleOutcome(outcome.caused, "not_final", frozenset())

    if isinstance(rule, FailRule):
        return RuleOutcome(_NO_QUERIES, "fail", frozenset())

    if isinstance(rule, CondRule):
        guard_out = eval_guard(rule.guard, state, history)
        if guard_out.value is None:
            return RuleOutcome(guard_out.caused, "not_final", frozenset())
        branch = rule.then_rule if guard_out.value == TRUE else rule.else_rule
        return eval_rule(branch, state, history)

    if isinstance(rule, ParRule):
        outcomes = [eval_rule(r, state, history) for r in rule.rules]
        caused = _NO_QUERIES.union(*(o.caused for o in outcomes)) if outcomes else _NO_QUERIES
        updates = frozenset().union(*(o.updates for o in outcomes)) if outcomes else frozenset()
        by_location: dict[Location, set[Element]] = {}
        for u in updates:
            by_location.setdefault(u.location, set()).add(u.value)
        clash = any(len(vals) > 1 for vals in by_location.values())
        if not all(o.final for o in outcomes):
            return RuleOutcome(caused, "not_final", updates, clash)
        if clash or any(o.verdict == "fail" for o in outcomes):
            return RuleOutcome(caused, "fail", updates, clash)
        return RuleOutcome(caused, "success", updates, clash)

    raise EvalError(f"not a rule: {rule!r}")


def successor(state: StateStruct, history: History, outcome: RuleOutcome) -> StateStruct:
    """The next state under a successful final history."""
    from .structures import apply_updates

    if outcome.verdict != "success":
        raise EvalError(f"successor requires a successful outcome, got {outcome.verdict}")
    return apply_updates(state, outcome.updates)


def rule_causes(program: Program, state: StateStruct, history: History) -> frozenset[Query]:
    return eval_rule(program.rule, state, history).caused
