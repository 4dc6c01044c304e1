"""Abstract syntax: vocabulary, templates, rule ASTs, and desugaring of
reply-location syntax into combined external symbols.

Every AST node carries a Span whose id is unique per occurrence; origins and
the context classifier identify occurrences by these ids.

The reply-location form ``<g(u1..um) =: f(t1..tn)>`` desugars into an
application of the combined external symbol ``[g=:f]`` of arity m+n.  The
combined symbol's template is the template of g followed by the ``rl`` marker,
the label of f, and placeholders #(m+1)..#(m+n), so the queries it produces
carry the reply location after the marker.  One combined symbol is created
per (g, f) pair and shared by all occurrences.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Union

from .histories import Query
from .structures import Element, Label

_span_ids = itertools.count(1)


class SyntaxError_(Exception):
    """Raised for unrecoverable vocabulary/desugaring problems."""


@dataclass(frozen=True)
class Span:
    """Occurrence identity plus source extent.  sid is unique per node."""

    sid: int
    start: int = 0
    end: int = 0
    file: str = ""

    def render(self) -> str:
        if self.file:
            return f"{self.file}:{self.start}-{self.end}"
        return f"{self.start}-{self.end}"


def fresh_span(start: int = 0, end: int = 0, file: str = "") -> Span:
    return Span(next(_span_ids), start, end, file)


@dataclass(frozen=True)
class FuncSig:
    name: str
    arity: int
    kind: str  # "static" | "dynamic" | "external"
    relational: bool = False
    reply_available: bool = False


@dataclass(frozen=True)
class Placeholder:
    index: int  # 1-based

    def render(self) -> str:
        return f"#{self.index}"


@dataclass(frozen=True)
class Template:
    """A query skeleton: labels with placeholders #1..#n occurring once each."""

    slots: tuple[Union[Label, Placeholder], ...]

    def placeholder_count(self) -> int:
        return sum(1 for s in self.slots if isinstance(s, Placeholder))

    def render(self) -> str:
        return "<" + " ".join(s.render() for s in self.slots) + ">"


def template_problems(template: Template, arity: int) -> list[str]:
    """Why the template is not a valid template for an arity-n symbol."""
    seen = []
    for s in template.slots:
        if isinstance(s, Placeholder):
            seen.append(s.index)
    problems = []
    if sorted(seen) != list(range(1, arity + 1)):
        problems.append(
            f"placeholders must be #1..#{arity} occurring once each, got "
            + (", ".join(f"#{i}" for i in seen) if seen else "none")
        )
    return problems


def instantiate_template(template: Template, args: tuple[Element, ...]) -> Query:
    """Replace each placeholder #i by args[i-1]; labels pass through."""
    if len(args) != template.placeholder_count():
        raise SyntaxError_(
            f"template {template.render()} expects "
            f"{template.placeholder_count()} arguments, got {len(args)}"
        )
    slots: list[Union[Element, Label]] = []
    for s in template.slots:
        if isinstance(s, Placeholder):
            slots.append(args[s.index - 1])
        else:
            slots.append(s)
    return Query(tuple(slots))


@dataclass(frozen=True)
class CombinedInfo:
    """Bookkeeping for a combined symbol [g=:f]."""

    query_symbol: str  # g
    location_symbol: str  # f
    query_arity: int  # m
    location_arity: int  # n


# Logic names required by the structure conventions, plus arithmetic
# built-ins and the Halt convention symbol.  All are implicitly declared.
_BUILTINS = [
    FuncSig("true", 0, "static", relational=True),
    FuncSig("false", 0, "static", relational=True),
    FuncSig("undef", 0, "static", relational=False),
    FuncSig("Boole", 1, "static", relational=True),
    FuncSig("=", 2, "static", relational=True),
    FuncSig("and", 2, "static", relational=True),
    FuncSig("or", 2, "static", relational=True),
    FuncSig("not", 1, "static", relational=True),
    FuncSig("+", 2, "static", relational=False),
    FuncSig("<", 2, "static", relational=True),
    FuncSig("Halt", 0, "dynamic", relational=True),
]

BUILTIN_NAMES = {sig.name for sig in _BUILTINS}


class Vocabulary:
    """Function symbols, labels, and the template assignment.

    The logic names are always present; the label ``rl`` is always a member
    of the label set.  Immutable by convention once a program is built.
    """

    def __init__(self) -> None:
        self.symbols: dict[str, FuncSig] = {sig.name: sig for sig in _BUILTINS}
        self.labels: set[str] = {"rl"}
        self.templates: dict[str, Template] = {}
        self.combined: dict[str, CombinedInfo] = {}
        self.user_order: list[str] = []
        self.user_labels: list[str] = []

    def clone(self) -> "Vocabulary":
        v = Vocabulary()
        v.symbols = dict(self.symbols)
        v.labels = set(self.labels)
        v.templates = dict(self.templates)
        v.combined = dict(self.combined)
        v.user_order = list(self.user_order)
        v.user_labels = list(self.user_labels)
        return v

    def sig(self, name: str) -> Optional[FuncSig]:
        return self.symbols.get(name)

    def declare(
        self,
        name: str,
        arity: int,
        kind: str,
        relational: bool = False,
        template: Template | None = None,
    ) -> FuncSig:
        if name == "rl":
            raise SyntaxError_("rl is reserved as the reply-location marker")
        if name in self.symbols:
            raise SyntaxError_(f"symbol {name} is already declared")
        if kind not in ("static", "dynamic", "external"):
            raise SyntaxError_(f"bad symbol kind {kind}")
        if kind == "external" and relational:
            raise SyntaxError_("external symbols cannot be relational")
        sig = FuncSig(name, arity, kind, relational=relational)
        self.symbols[name] = sig
        self.user_order.append(name)
        if kind == "external":
            if template is not None:
                self.set_template(name, template)
            else:
                self.ensure_default_template(name)
        elif template is not None:
            raise SyntaxError_(f"only external symbols take templates ({name})")
        return sig

    def set_template(self, name: str, template: Template) -> None:
        self.templates[name] = template
        for s in template.slots:
            if isinstance(s, Label):
                self.labels.add(s.name)

    def ensure_default_template(self, name: str) -> None:
        """Default template for an external symbol: its own name as a label,
        then the placeholders in order."""
        if name in self.templates:
            return
        sig = self.symbols[name]
        slots: list[Union[Label, Placeholder]] = [Label(name)]
        slots += [Placeholder(i) for i in range(1, sig.arity + 1)]
        self.set_template(name, Template(tuple(slots)))

    def ensure_label(self, name: str) -> None:
        self.labels.add(name)

    def mark_reply_available(self, name: str) -> None:
        sig = self.symbols[name]
        self.symbols[name] = replace(sig, reply_available=True)
        self.labels.add(name)

    def state_symbol_names(self) -> set[str]:
        return {n for n, s in self.symbols.items() if s.kind != "external"}

    def external_symbol_names(self) -> set[str]:
        return {n for n, s in self.symbols.items() if s.kind == "external"}


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Lit:
    value: Element
    span: Span


@dataclass(frozen=True)
class App:
    func: str
    args: tuple["Term", ...]
    span: Span


@dataclass(frozen=True)
class ReplyLoc:
    """Raw reply-location sugar ``<g(u) =: f(t)>``; removed by desugaring."""

    query: App
    loc: App
    span: Span


Term = Union[Lit, App, ReplyLoc]


@dataclass(frozen=True)
class Timing:
    s: Term
    t: Term
    span: Span


@dataclass(frozen=True)
class KAnd:
    left: "Guard"
    right: "Guard"
    span: Span


@dataclass(frozen=True)
class KOr:
    left: "Guard"
    right: "Guard"
    span: Span


@dataclass(frozen=True)
class Not:
    inner: "Guard"
    span: Span


Guard = Union[Term, Timing, KAnd, KOr, Not]


@dataclass(frozen=True)
class UpdateRule:
    func: str
    args: tuple[Term, ...]
    rhs: Term
    span: Span


@dataclass(frozen=True)
class IssueRule:
    arg: Term
    span: Span


@dataclass(frozen=True)
class FailRule:
    span: Span


@dataclass(frozen=True)
class CondRule:
    guard: Guard
    then_rule: "Rule"
    else_rule: "Rule"
    span: Span


@dataclass(frozen=True)
class ParRule:
    rules: tuple["Rule", ...]
    span: Span


Rule = Union[UpdateRule, IssueRule, FailRule, CondRule, ParRule]


@dataclass(frozen=True)
class Program:
    vocabulary: Vocabulary
    rule: Rule
    source: str = ""

    def __eq__(self, other):  # vocabulary is compared by content, not identity
        if not isinstance(other, Program):
            return NotImplemented
        return (
            self.rule == other.rule
            and self.vocabulary.symbols == other.vocabulary.symbols
            and self.vocabulary.templates == other.vocabulary.templates
            and self.vocabulary.labels == other.vocabulary.labels
        )


def child_nodes(node) -> Iterator:
    """Immediate AST children, in source order."""
    if isinstance(node, App):
        yield from node.args
    elif isinstance(node, ReplyLoc):
        yield node.query
        yield node.loc
    elif isinstance(node, Timing):
        yield node.s
        yield node.t
    elif isinstance(node, (KAnd, KOr)):
        yield node.left
        yield node.right
    elif isinstance(node, Not):
        yield node.inner
    elif isinstance(node, UpdateRule):
        yield from node.args
        yield node.rhs
    elif isinstance(node, IssueRule):
        yield node.arg
    elif isinstance(node, CondRule):
        yield node.guard
        yield node.then_rule
        yield node.else_rule
    elif isinstance(node, ParRule):
        yield from node.rules


def walk(node) -> Iterator:
    yield node
    for child in child_nodes(node):
        yield from walk(child)


def signature(node):
    """Structural shape of a node with spans erased, for comparisons."""
    if isinstance(node, Lit):
        return ("lit", node.value)
    if isinstance(node, App):
        return ("app", node.func, tuple(signature(a) for a in node.args))
    if isinstance(node, ReplyLoc):
        return ("replyloc", signature(node.query), signature(node.loc))
    if isinstance(node, Timing):
        return ("timing", signature(node.s), signature(node.t))
    if isinstance(node, KAnd):
        return ("kand", signature(node.left), signature(node.right))
    if isinstance(node, KOr):
        return ("kor", signature(node.left), signature(node.right))
    if isinstance(node, Not):
        return ("not", signature(node.inner))
    if isinstance(node, UpdateRule):
        return (
            "update",
            node.func,
            tuple(signature(a) for a in node.args),
            signature(node.rhs),
        )
    if isinstance(node, IssueRule):
        return ("issue", signature(node.arg))
    if isinstance(node, FailRule):
        return ("fail",)
    if isinstance(node, CondRule):
        return (
            "cond",
            signature(node.guard),
            signature(node.then_rule),
            signature(node.else_rule),
        )
    if isinstance(node, ParRule):
        return ("par", tuple(signature(r) for r in node.rules))
    raise TypeError(f"not an AST node: {node!r}")


def query_term_occurrences(program: Program) -> list[App]:
    """External-headed applications, one entry per occurrence."""
    out = []
    for node in walk(program.rule):
        if isinstance(node, App):
            sig = program.vocabulary.sig(node.func)
            if sig is not None and sig.kind == "external":
                out.append(node)
    return out


# ---------------------------------------------------------------------------
# Desugaring


def combined_name(g: str, f: str) -> str:
    return f"[{g}=:{f}]"


def desugar_reply_locations(program: Program) -> Program:
    """Replace every reply-location node by an application of the combined
    symbol, registering the symbol, its template, and the reply-available
    marking on first use.  Programs without reply-location nodes are returned
    unchanged, which makes desugaring idempotent.
    """
    if not any(isinstance(n, ReplyLoc) for n in walk(program.rule)):
        return program

    vocab = program.vocabulary.clone()

    def ensure_combined(node: ReplyLoc) -> str:
        g, f = node.query.func, node.loc.func
        gsig, fsig = vocab.sig(g), vocab.sig(f)
        if gsig is None or gsig.kind != "external":
            raise SyntaxError_(f"{g} must be an external symbol to take a reply location")
        if fsig is None:
            raise SyntaxError_(f"unknown reply-location symbol {f}")
        if fsig.kind != "dynamic":
            raise SyntaxError_(f"reply-location symbol {f} must be dynamic")
        if fsig.relational:
            raise SyntaxError_(
                f"reply-location symbol {f} must not be relational: replies are "
                "arbitrary elements and would break the relational discipline"
            )
        if len(node.query.args) != gsig.arity:
            raise SyntaxError_(f"{g} expects {gsig.arity} arguments")
        if len(node.loc.args) != fsig.arity:
            raise SyntaxError_(f"{f} expects {fsig.arity} arguments")
        name = combined_name(g, f)
        if name not in vocab.symbols:
            m, n = gsig.arity, fsig.arity
            vocab.symbols[name] = FuncSig(name, m + n, "external")
            vocab.combined[name] = CombinedInfo(g, f, m, n)
            vocab.ensure_default_template(g)
            slots = list(vocab.templates[g].slots)
            slots.append(Label("rl"))
            slots.append(Label(f))
            slots += [Placeholder(i) for i in range(m + 1, m + n + 1)]
            vocab.set_template(name, Template(tuple(slots)))
            vocab.mark_reply_available(f)
        return name

    def rewrite(node):
        if isinstance(node, Lit):
            return node
        if isinstance(node, ReplyLoc):
            name = ensure_combined(node)
            args = tuple(rewrite(a) for a in node.query.args) + tuple(
                rewrite(a) for a in node.loc.args
            )
            return App(name, args, node.span)
        if isinstance(node, App):
            return App(node.func, tuple(rewrite(a) for a in node.args), node.span)
        if isinstance(node, Timing):
            return Timing(rewrite(node.s), rewrite(node.t), node.span)
        if isinstance(node, KAnd):
            return KAnd(rewrite(node.left), rewrite(node.right), node.span)
        if isinstance(node, KOr):
            return KOr(rewrite(node.left), rewrite(node.right), node.span)
        if isinstance(node, Not):
            return Not(rewrite(node.inner), node.span)
        if isinstance(node, UpdateRule):
            return UpdateRule(
                node.func,
                tuple(rewrite(a) for a in node.args),
                rewrite(node.rhs),
                node.span,
            )
        if isinstance(node, IssueRule):
            return IssueRule(rewrite(node.arg), node.span)
        if isinstance(node, FailRule):
            return node
        if isinstance(node, CondRule):
            return CondRule(
                rewrite(node.guard),
                rewrite(node.then_rule),
                rewrite(node.else_rule),
                node.span,
            )
        if isinstance(node, ParRule):
            return ParRule(tuple(rewrite(r) for r in node.rules), node.span)
        raise TypeError(f"not an AST node: {node!r}")

    return Program(vocab, rewrite(program.rule), program.source)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    span: Span | None = None

    def render(self) -> str:
        where = f" at {self.span.render()}" if self.span is not None else ""
        return f"{self.severity}: {self.message}{where}"


def _is_boolean_term(node, vocab: Vocabulary) -> bool:
    if not isinstance(node, App):
        return False
    sig = vocab.sig(node.func)
    return sig is not None and sig.relational


def validate_program(program: Program) -> list[Diagnostic]:
    """Static well-formedness diagnostics for a desugared program.

    An empty result means: declared symbols and arities respected, update
    rules target dynamic symbols (with Boolean right-hand sides where the
    target is relational), issue arguments are external-headed, reply-location
    argument terms stay inside the state vocabulary, templates are well
    formed, and rl is not abused as an ordinary symbol.
    """
    vocab = program.vocabulary
    diags: list[Diagnostic] = []

    def err(message: str, span: Span | None = None) -> None:
        diags.append(Diagnostic("error", message, span))

    seen_sids: set[int] = set()
    for node in walk(program.rule):
        span = getattr(node, "span", None)
        if span is not None:
            if span.sid in seen_sids:
                err("duplicate occurrence id; AST nodes must not be shared", span)
            seen_sids.add(span.sid)

        if isinstance(node, ReplyLoc):
            err("reply-location syntax must be desugared before validation", node.span)
        elif isinstance(node, App):
            sig = vocab.sig(node.func)
            if node.func == "rl":
                err("rl is the reply-location marker, not a function symbol", node.span)
            elif sig is None:
                err(f"unknown symbol {node.func}", node.span)
            elif len(node.args) != sig.arity:
                err(
                    f"{node.func} expects {sig.arity} arguments, got {len(node.args)}",
                    node.span,
                )
            if sig is not None and node.func in vocab.combined:
                info = vocab.combined[node.func]
                for loc_arg in node.args[info.query_arity :]:
                    for sub in walk(loc_arg):
                        if isinstance(sub, App):
                            sub_sig = vocab.sig(sub.func)
                            if sub_sig is not None and sub_sig.kind == "external":
                                err(
                                    f"reply-location terms must use only the state "
                                    f"vocabulary; {sub.func} is external",
                                    sub.span,
                                )
        elif isinstance(node, UpdateRule):
            sig = vocab.sig(node.func)
            if sig is None:
                err(f"unknown symbol {node.func}", node.span)
            elif sig.kind != "dynamic":
                err(f"update target {node.func} must be dynamic", node.span)
            elif len(node.args) != sig.arity:
                err(
                    f"{node.func} expects {sig.arity} arguments, got {len(node.args)}",
                    node.span,
                )
            elif sig.relational and not _is_boolean_term(node.rhs, vocab):
                err(
                    f"update of relational {node.func} needs a Boolean term on the right",
                    node.span,
                )
        elif isinstance(node, IssueRule):
            arg = node.arg
            if isinstance(arg, App):
                sig = vocab.sig(arg.func)
                if sig is not None and sig.kind != "external":
                    err("issue argument must be external-headed", node.span)
            elif isinstance(arg, Lit):
                err("issue argument must be external-headed", node.span)
        elif isinstance(node, CondRule):
            guard = node.guard
            if isinstance(guard, (Lit, App, ReplyLoc)) and not _is_boolean_term(
                guard, vocab
            ):
                err(
                    "a guard that is a term must be a Boolean term "
                    "(relational head)",
                    getattr(guard, "span", node.span),
                )

    if "rl" in vocab.symbols:
        err("rl is reserved and cannot be declared as a symbol")

    for name in sorted(vocab.external_symbol_names()):
        template = vocab.templates.get(name)
        sig = vocab.sig(name)
        if template is None:
            err(f"external symbol {name} has no template")
            continue
        for problem in template_problems(template, sig.arity):
            err(f"template of {name}: {problem}")
        has_rl = any(isinstance(s, Label) and s.name == "rl" for s in template.slots)
        if has_rl and name not in vocab.combined:
            err(f"only combined [g=:f] symbols may have rl in their template ({name})")

    return diags
