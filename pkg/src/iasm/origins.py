"""Origins of caused queries and the blocking/non-blocking context
classification of query-term occurrences.

The origin computation mirrors the evaluator clause by clause: a query caused
by a node is traced down to the query-term occurrences that produce it.  A
query has at least one origin in a node exactly when the node causes it.

The context classifier is purely syntactic: a query-term occurrence is
non-blocking when its path from the rule root passes through a timing guard
operand, a Kleene connective operand, or an issue-rule argument; every other
occurrence is blocking (the step cannot end while its query is unanswered).
The classifier over-approximates the semantic notion soundly; the placement
lint uses it to flag reply locations attached to blocking occurrences, where
a late reply can never matter.
"""

from __future__ import annotations

from .evaluator import eval_guard, eval_rule, eval_term
from .histories import History, Query
from .structures import StateStruct, TRUE
from .syntax import (
    App,
    CondRule,
    Diagnostic,
    FailRule,
    IssueRule,
    KAnd,
    KOr,
    Lit,
    Not,
    ParRule,
    Program,
    Span,
    Timing,
    UpdateRule,
)

TIMING_SUBTERM = "timing-subterm"
KLEENE_SUBTERM = "kleene-subterm"
ISSUE_ARGUMENT = "issue-argument"
BLOCKING_CONTEXT = "blocking-context"


def _caused_by(node, state: StateStruct, history: History) -> frozenset[Query]:
    if isinstance(node, (Lit, App)):
        return eval_term(node, state, history).caused
    if isinstance(node, (Timing, KAnd, KOr, Not)):
        return eval_guard(node, state, history).caused
    return eval_rule(node, state, history).caused


def origins(q: Query, node, state: StateStruct, history: History) -> frozenset[Span]:
    """Spans of the query-term occurrences in node from which q originates,
    with respect to the given state and history.  Empty iff node does not
    cause q."""
    if q not in _caused_by(node, state, history):
        return frozenset()

    if isinstance(node, App):
        outcome = eval_term(node, state, history)
        if outcome.qvalue is not None:
            # All arguments valued: the query-term itself is the unique origin.
            return frozenset({node.span})
        return frozenset().union(
            *(origins(q, a, state, history) for a in node.args)
        )
    if isinstance(node, Timing):
        return origins(q, node.s, state, history) | origins(q, node.t, state, history)
    if isinstance(node, (KAnd, KOr)):
        return origins(q, node.left, state, history) | origins(
            q, node.right, state, history
        )
    if isinstance(node, Not):
        return origins(q, node.inner, state, history)
    if isinstance(node, UpdateRule):
        return frozenset().union(
            *(origins(q, t, state, history) for t in (*node.args, node.rhs))
        )
    if isinstance(node, IssueRule):
        outcome = eval_term(node.arg, state, history)
        if outcome.qvalue is not None:
            return frozenset({node.arg.span})
        return frozenset().union(
            *(origins(q, a, state, history) for a in node.arg.args)
        )
    if isinstance(node, CondRule):
        guard_out = eval_guard(node.guard, state, history)
        if guard_out.value is None:
            return origins(q, node.guard, state, history)
        branch = node.then_rule if guard_out.value == TRUE else node.else_rule
        return origins(q, branch, state, history)
    if isinstance(node, ParRule):
        return frozenset().union(
            *(origins(q, r, state, history) for r in node.rules)
        )
    return frozenset()


def classify_occurrence_contexts(program: Program) -> dict[int, str]:
    """Map each query-term occurrence (by span id) to its context class."""
    vocab = program.vocabulary
    result: dict[int, str] = {}

    def visit_term(node, cls: str | None) -> None:
        if isinstance(node, Lit):
            return
        if isinstance(node, App):
            sig = vocab.sig(node.func)
            if sig is not None and sig.kind == "external":
                result[node.span.sid] = cls or BLOCKING_CONTEXT
            for a in node.args:
                visit_term(a, cls)

    def visit_guard(node, cls: str | None) -> None:
        if isinstance(node, Timing):
            visit_term(node.s, TIMING_SUBTERM)
            visit_term(node.t, TIMING_SUBTERM)
        elif isinstance(node, (KAnd, KOr)):
            visit_guard(node.left, KLEENE_SUBTERM)
            visit_guard(node.right, KLEENE_SUBTERM)
        elif isinstance(node, Not):
            visit_guard(node.inner, cls)
        else:
            visit_term(node, cls)

    def visit_rule(node) -> None:
        if isinstance(node, UpdateRule):
            for t in (*node.args, node.rhs):
                visit_term(t, None)
        elif isinstance(node, IssueRule):
            visit_term(node.arg, ISSUE_ARGUMENT)
        elif isinstance(node, CondRule):
            visit_guard(node.guard, None)
            visit_rule(node.then_rule)
            visit_rule(node.else_rule)
        elif isinstance(node, ParRule):
            for r in node.rules:
                visit_rule(r)
        elif isinstance(node, FailRule):
            pass

    visit_rule(program.rule)
    return result


def check_reply_location_placement(program: Program) -> list[Diagnostic]:
    """Warn about combined [g=:f] occurrences in blocking contexts: the step
    cannot end until such a query is answered, so its reply location is
    useless and the program could read the reply from the history instead."""
    from .syntax import walk

    classes = classify_occurrence_contexts(program)
    diags: list[Diagnostic] = []
    for node in walk(program.rule):
        if isinstance(node, App) and node.func in program.vocabulary.combined:
            if classes.get(node.span.sid) == BLOCKING_CONTEXT:
                diags.append(
                    Diagnostic(
                        "warning",
                        f"reply location on a blocking query {node.func}: the reply "
                        "always arrives within the step",
                        node.span,
                    )
                )
    return diags
