"""Concrete text syntax for programs (.iasm), states (.state), and
environment scenarios (.env), plus a canonical pretty-printer.

Operator spellings: ``<~`` for the timing pre-order, ``<<`` for its strict
form, ``~`` for timing equivalence, ``/\\`` and ``\\/`` for the Kleene
connectives, ``!`` for guard negation, ``&`` ``|`` for the classical
connectives, and ``<g(u) =: f(t)>`` for a query with a reply location.
``s << t`` is sugar for ``!(t <~ s)``, ``s ~ t`` for ``(s <~ t) /\\ (t <~ s)``,
``skip`` for the empty parallel block, a missing ``else`` for ``else skip``,
and an equality chain ``a = b = c`` for ``(a = b) & (b = c)``.

Elements are integers, quoted atoms, and ``true``/``false``/``undef``.
Line comments start with ``//``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .histories import Query
from .structures import Element, FALSE, Label, StateStruct, TRUE, UNDEF, make_state
from .syntax import (
    App,
    CondRule,
    FailRule,
    IssueRule,
    KAnd,
    KOr,
    Lit,
    Not,
    ParRule,
    Placeholder,
    Program,
    ReplyLoc,
    Span,
    Template,
    Timing,
    UpdateRule,
    Vocabulary,
    fresh_span,
)

KEYWORDS = {
    "rule", "static", "dynamic", "external", "relational", "template", "label",
    "atom", "if", "then", "else", "endif", "par", "endpar", "issue", "fail",
    "skip", "when", "reply", "step", "round", "afterstep",
    "true", "false", "undef",
}

# Two-character operators are matched before their one-character prefixes.
_OPERATORS = [":=", "=:", "<~", "<<", "!=", "/\\", "\\/",
              "<", ">", "(", ")", ",", "=", "~", "!", "&", "|", "+", "#", "/"]

_TERM_INFIX = {"=", "!=", "&", "|", "+", "<"}
_TIMING_OPS = {"<~", "<<", "~"}


class ParseError(Exception):
    def __init__(self, message: str, pos: int = 0, file: str = ""):
        where = f"{file}:{pos}" if file else str(pos)
        super().__init__(f"{message} (at {where})")
        self.message = message
        self.pos = pos
        self.file = file


@dataclass(frozen=True)
class Token:
    kind: str  # "name" | "keyword" | "int" | "atom" | operator text | "eof"
    text: str
    value: object
    start: int
    end: int


def _lex(text: str, file: str = "") -> list[Token]:
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start = i
        if c.isalpha() or c == "_":
            i += 1
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            # Hyphenated names like all-sent; a hyphen joins only when a
            # letter follows, so numeric literals stay separate.
            while i + 1 < n and text[i] == "-" and text[i + 1].isalpha():
                i += 2
                while i < n and (text[i].isalnum() or text[i] == "_"):
                    i += 1
            word = text[start:i]
            kind = "keyword" if word in KEYWORDS else "name"
            tokens.append(Token(kind, word, word, start, i))
            continue
        if c.isdigit() or (c == "-" and i + 1 < n and text[i + 1].isdigit()):
            i += 1
            while i < n and text[i].isdigit():
                i += 1
            tokens.append(Token("int", text[start:i], int(text[start:i]), start, i))
            continue
        if c == "'":
            j = text.find("'", i + 1)
            if j < 0:
                raise ParseError("unterminated atom literal", i, file)
            tokens.append(Token("atom", text[i : j + 1], text[i + 1 : j], start, j + 1))
            i = j + 1
            continue
        for op in _OPERATORS:
            if text.startswith(op, i):
                i += len(op)
                tokens.append(Token(op, op, op, start, i))
                break
        else:
            raise ParseError(f"unexpected character {c!r}", i, file)
    tokens.append(Token("eof", "", None, n, n))
    return tokens


class _Cursor:
    def __init__(self, tokens: list[Token], file: str = ""):
        self.tokens = tokens
        self.pos = 0
        self.file = file

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if not self.at(kind, text):
            want = text or kind
            raise ParseError(f"expected {want!r}, found {tok.text or tok.kind!r}",
                             tok.start, self.file)
        return self.next()

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.peek().start, self.file)


def _literal_element(tok: Token) -> Element:
    if tok.kind == "int":
        return Element("int", tok.value)
    if tok.kind == "atom":
        return Element("atom", tok.value)
    if tok.kind == "keyword" and tok.text in ("true", "false", "undef"):
        return {"true": TRUE, "false": FALSE, "undef": UNDEF}[tok.text]
    raise ParseError(f"expected a literal, found {tok.text!r}", tok.start)


# ---------------------------------------------------------------------------
# Programs


class _ProgramParser:
    def __init__(self, text: str, file: str = ""):
        self.cur = _Cursor(_lex(text, file), file)
        self.file = file
        self.vocab = Vocabulary()
        self.user_labels: list[str] = []

    def span(self, start: int, end: int) -> Span:
        return fresh_span(start, end, self.file)

    def parse(self, text: str) -> Program:
        while self.cur.peek().kind == "keyword" and self.cur.peek().text in (
            "static", "dynamic", "external", "label"
        ):
            self.decl()
        self.cur.expect("keyword", "rule")
        rule = self.rule()
        tok = self.cur.peek()
        if tok.kind != "eof":
            raise self.cur.error(f"unexpected input after rule: {tok.text!r}")
        self.vocab.user_labels = self.user_labels
        return Program(self.vocab, rule, text)

    def decl(self) -> None:
        kw = self.cur.next().text
        if kw == "label":
            name = self.cur.expect("name").text
            self.vocab.ensure_label(name)
            self.user_labels.append(name)
            return
        name_tok = self.cur.expect("name")
        self.cur.expect("/")
        arity = self.cur.expect("int").value
        relational = self.cur.accept("keyword", "relational") is not None
        template = None
        if self.cur.accept("keyword", "template"):
            template = self.template()
        try:
            self.vocab.declare(name_tok.text, arity, kw, relational=relational,
                               template=template)
        except Exception as exc:
            raise ParseError(str(exc), name_tok.start, self.file) from exc

    def template(self) -> Template:
        self.cur.expect("<")
        slots: list[Label | Placeholder] = []
        while not self.cur.at(">"):
            if self.cur.accept("#"):
                slots.append(Placeholder(self.cur.expect("int").value))
            else:
                tok = self.cur.peek()
                if tok.kind in ("name", "keyword"):
                    slots.append(Label(self.cur.next().text))
                else:
                    raise self.cur.error("template slots are names or #i placeholders")
        self.cur.expect(">")
        return Template(tuple(slots))

    # -- rules --------------------------------------------------------------

    def rule(self):
        tok = self.cur.peek()
        if tok.kind == "keyword" and tok.text == "fail":
            self.cur.next()
            return FailRule(self.span(tok.start, tok.end))
        if tok.kind == "keyword" and tok.text == "skip":
            self.cur.next()
            return ParRule((), self.span(tok.start, tok.end))
        if tok.kind == "keyword" and tok.text == "issue":
            self.cur.next()
            arg = self.term()
            if not isinstance(arg, (App, ReplyLoc)):
                raise ParseError("issue argument must be a function application",
                                 tok.start, self.file)
            end = getattr(arg, "span").end
            return IssueRule(arg, self.span(tok.start, end))
        if tok.kind == "keyword" and tok.text == "if":
            self.cur.next()
            guard = self.guard()
            self.cur.expect("keyword", "then")
            then_rule = self.rule()
            if self.cur.accept("keyword", "else"):
                else_rule = self.rule()
            else:
                else_rule = ParRule((), self.span(tok.start, tok.end))
            end_tok = self.cur.expect("keyword", "endif")
            return CondRule(guard, then_rule, else_rule,
                            self.span(tok.start, end_tok.end))
        if tok.kind == "keyword" and tok.text == "par":
            self.cur.next()
            rules = []
            while not self.cur.at("keyword", "endpar"):
                rules.append(self.rule())
            end_tok = self.cur.next()
            return ParRule(tuple(rules), self.span(tok.start, end_tok.end))
        if tok.kind == "name":
            name = self.cur.next().text
            args: list = []
            if self.cur.accept("("):
                args = self.term_list()
                self.cur.expect(")")
            self.cur.expect(":=")
            self.check_symbol(name, len(args), tok)
            rhs = self.term()
            end = getattr(rhs, "span").end
            return UpdateRule(name, tuple(args), rhs, self.span(tok.start, end))
        raise self.cur.error(f"expected a rule, found {tok.text or tok.kind!r}")

    def check_symbol(self, name: str, arity: int, tok: Token) -> None:
        sig = self.vocab.sig(name)
        if sig is None:
            raise ParseError(f"unknown symbol {name}", tok.start, self.file)
        if sig.arity != arity:
            raise ParseError(
                f"{name} expects {sig.arity} arguments, got {arity}",
                tok.start, self.file,
            )

    # -- guards -------------------------------------------------------------

    def guard(self):
        left = self.guard_conj()
        while self.cur.at("\\/"):
            op = self.cur.next()
            right = self.guard_conj()
            left = KOr(left, right, self.span(_start(left), _end(right)))
        return left

    def guard_conj(self):
        left = self.guard_prim()
        while self.cur.at("/\\"):
            self.cur.next()
            right = self.guard_prim()
            left = KAnd(left, right, self.span(_start(left), _end(right)))
        return left

    def guard_prim(self):
        if self.cur.at("!"):
            tok = self.cur.next()
            inner = self.guard_prim()
            return Not(inner, self.span(tok.start, _end(inner)))
        return self.guard_atom()

    def guard_atom(self):
        # A parenthesized guard, a timing comparison between terms, or a
        # Boolean term.  "(" is ambiguous between guard and term grouping, so
        # try the guard reading first and fall back when a term operator
        # follows the closing parenthesis.
        if self.cur.at("("):
            saved = self.cur.pos
            self.cur.next()
            try:
                inner = self.guard()
                self.cur.expect(")")
            except ParseError:
                self.cur.pos = saved
                return self.timing_or_term()
            if self.cur.peek().kind in _TERM_INFIX or self.cur.peek().kind in _TIMING_OPS:
                if isinstance(inner, (Lit, App, ReplyLoc)):
                    self.cur.pos = saved
                    return self.timing_or_term()
                raise self.cur.error("guard cannot be used as a term operand")
            return inner
        return self.timing_or_term()

    def timing_or_term(self):
        s = self.term()
        tok = self.cur.peek()
        if tok.kind in _TIMING_OPS:
            self.cur.next()
            t = self.term()
            span = self.span(_start(s), _end(t))
            if tok.kind == "<~":
                return Timing(s, t, span)
            if tok.kind == "<<":
                # s << t  ==  !(t <~ s)
                return Not(Timing(t, s, self.span(_start(s), _end(t))), span)
            # s ~ t  ==  (s <~ t) /\ (t <~ s)
            return KAnd(
                Timing(s, t, self.span(_start(s), _end(t))),
                Timing(_clone(t), _clone(s), self.span(_start(s), _end(t))),
                span,
            )
        return s

    # -- terms --------------------------------------------------------------

    def term_list(self) -> list:
        terms = [self.term()]
        while self.cur.accept(","):
            terms.append(self.term())
        return terms

    def term(self):
        # Equality chains sit at the lowest precedence: a = b = c means
        # (a = b) & (b = c); a != b means not(a = b).
        first = self.term_or()
        if not (self.cur.at("=") or self.cur.at("!=")):
            return first
        comparisons = []
        left = first
        while self.cur.at("=") or self.cur.at("!="):
            op = self.cur.next()
            right = self.term_or()
            eq = App("=", (left, right), self.span(_start(left), _end(right)))
            if op.kind == "!=":
                eq = App("not", (eq,), self.span(_start(left), _end(right)))
            comparisons.append(eq)
            left = _clone(right)  # the chain reuses the operand; keep ids unique
        result = comparisons[0]
        for nxt in comparisons[1:]:
            result = App("and", (result, nxt), self.span(_start(result), _end(nxt)))
        return result

    def term_or(self):
        left = self.term_and()
        while self.cur.at("|"):
            self.cur.next()
            right = self.term_and()
            left = App("or", (left, right), self.span(_start(left), _end(right)))
        return left

    def term_and(self):
        left = self.term_cmp()
        while self.cur.at("&"):
            self.cur.next()
            right = self.term_cmp()
            left = App("and", (left, right), self.span(_start(left), _end(right)))
        return left

    def term_cmp(self):
        left = self.term_sum()
        while self.cur.at("<"):
            self.cur.next()
            right = self.term_sum()
            left = App("<", (left, right), self.span(_start(left), _end(right)))
        return left

    def term_sum(self):
        left = self.term_atom()
        while self.cur.at("+"):
            self.cur.next()
            right = self.term_atom()
            left = App("+", (left, right), self.span(_start(left), _end(right)))
        return left

    def term_atom(self):
        tok = self.cur.peek()
        if tok.kind == "(":
            self.cur.next()
            inner = self.term()
            self.cur.expect(")")
            return inner
        if tok.kind == "<":
            return self.reply_loc()
        if tok.kind in ("int", "atom"):
            self.cur.next()
            return Lit(_literal_element(tok), self.span(tok.start, tok.end))
        if tok.kind == "keyword" and tok.text in ("true", "false", "undef"):
            self.cur.next()
            return App(tok.text, (), self.span(tok.start, tok.end))
        if tok.kind == "name":
            self.cur.next()
            args: list = []
            if self.cur.accept("("):
                args = self.term_list()
                self.cur.expect(")")
            self.check_symbol(tok.text, len(args), tok)
            end = tok.end if not args else self.cur.tokens[self.cur.pos - 1].end
            return App(tok.text, tuple(args), self.span(tok.start, end))
        raise self.cur.error(f"expected a term, found {tok.text or tok.kind!r}")

    def reply_loc(self):
        open_tok = self.cur.expect("<")
        query = self.named_app()
        self.cur.expect("=:")
        loc = self.named_app()
        end_tok = self.cur.expect(">")
        return ReplyLoc(query, loc, self.span(open_tok.start, end_tok.end))

    def named_app(self) -> App:
        tok = self.cur.expect("name")
        args: list = []
        if self.cur.accept("("):
            args = self.term_list()
            self.cur.expect(")")
        self.check_symbol(tok.text, len(args), tok)
        end = tok.end if not args else self.cur.tokens[self.cur.pos - 1].end
        return App(tok.text, tuple(args), self.span(tok.start, end))


def _start(node) -> int:
    return node.span.start


def _end(node) -> int:
    return node.span.end


def _clone(node):
    """Deep copy of a term with fresh occurrence ids (desugared forms may
    mention a source term twice; occurrences must stay distinct)."""
    span = fresh_span(node.span.start, node.span.end, node.span.file)
    if isinstance(node, Lit):
        return Lit(node.value, span)
    if isinstance(node, App):
        return App(node.func, tuple(_clone(a) for a in node.args), span)
    if isinstance(node, ReplyLoc):
        return ReplyLoc(_clone(node.query), _clone(node.loc), span)
    raise TypeError(f"not a term: {node!r}")


def parse_program(text: str, file: str = "") -> Program:
    """Parse program text into a raw AST; reply-location nodes are kept for
    desugaring."""
    return _ProgramParser(text, file).parse(text)


# ---------------------------------------------------------------------------
# States


def parse_state(text: str, vocabulary: Vocabulary, file: str = "") -> StateStruct:
    cur = _Cursor(_lex(text, file), file)
    atoms: list[str] = []
    dyn: dict[str, dict] = {}
    static_user: dict[str, dict] = {}
    from .syntax import BUILTIN_NAMES

    while cur.at("keyword", "atom"):
        cur.next()
        # Entry lines also start with a name; an atom name is never followed
        # by "=" or "(".
        while cur.peek().kind == "name" and cur.peek(1).kind not in ("=", "("):
            atoms.append(cur.next().text)
    while cur.peek().kind != "eof":
        name_tok = cur.expect("name")
        sig = vocabulary.sig(name_tok.text)
        if sig is None:
            raise ParseError(f"unknown symbol {name_tok.text}", name_tok.start, file)
        if sig.kind == "external":
            raise ParseError(
                f"external symbol {name_tok.text} has no state interpretation",
                name_tok.start, file,
            )
        if name_tok.text in BUILTIN_NAMES and name_tok.text != "Halt":
            raise ParseError(
                f"logic name {name_tok.text} is interpreted, not declared",
                name_tok.start, file,
            )
        args: list[Element] = []
        if cur.accept("("):
            while not cur.at(")"):
                args.append(_literal_element(cur.next()))
                if not cur.at(")"):
                    cur.expect(",")
            cur.expect(")")
        if len(args) != sig.arity:
            raise ParseError(
                f"{name_tok.text} expects {sig.arity} arguments, got {len(args)}",
                name_tok.start, file,
            )
        cur.expect("=")
        val_tok = cur.next()
        value = _literal_element(val_tok)
        for e in (*args, value):
            if e.kind == "atom" and e.value not in atoms:
                raise ParseError(f"unknown element '{e.value}'", val_tok.start, file)
        target = static_user if sig.kind == "static" else dyn
        table = target.setdefault(name_tok.text, {})
        if tuple(args) in table:
            raise ParseError(
                f"duplicate entry for {name_tok.text}", name_tok.start, file
            )
        table[tuple(args)] = value
    try:
        return make_state(vocabulary, atoms, dyn, static_user)
    except Exception as exc:
        raise ParseError(str(exc), 0, file) from exc


# ---------------------------------------------------------------------------
# Scenarios


@dataclass(frozen=True)
class Directive:
    """One environment action: answer a query within a step's round, or
    deliver a late reply at the boundary after a step."""

    query: Query
    value: Element
    kind: str  # "within" | "after"
    step: int
    round: int = 0  # meaningful for "within"
    index: int = 0  # file order; the deterministic tie-break key


@dataclass(frozen=True)
class Scenario:
    directives: tuple[Directive, ...]

    def rounds_for_step(self, step: int) -> list[dict[Query, Element]]:
        """Within-step directives for a step, grouped by round number in
        ascending order."""
        per_round: dict[int, dict[Query, Element]] = {}
        for d in self.directives:
            if d.kind == "within" and d.step == step:
                per_round.setdefault(d.round, {})[d.query] = d.value
        return [per_round[r] for r in sorted(per_round)]

    def due_after(self, step: int) -> list[Directive]:
        """Late-delivery directives scheduled at or before the given boundary,
        in file order."""
        return [d for d in self.directives if d.kind == "after" and d.step <= step]


EMPTY_SCENARIO = Scenario(())


def parse_query_literal(cur: _Cursor) -> Query:
    cur.expect("<")
    slots: list = []
    while not cur.at(">"):
        tok = cur.peek()
        if tok.kind == "name" or (
            tok.kind == "keyword" and tok.text not in ("true", "false", "undef")
        ):
            cur.next()
            slots.append(Label(tok.text))
        else:
            slots.append(_literal_element(cur.next()))
    cur.expect(">")
    if not slots:
        raise cur.error("empty query literal")
    query = Query(tuple(slots))
    if query.contains_rl():
        raise cur.error("query literals must not contain rl")
    return query


def parse_query_text(text: str) -> Query:
    cur = _Cursor(_lex(text))
    q = parse_query_literal(cur)
    if cur.peek().kind != "eof":
        raise cur.error("trailing input after query literal")
    return q


def parse_scenario(text: str, file: str = "") -> Scenario:
    cur = _Cursor(_lex(text, file), file)
    directives: list[Directive] = []
    while cur.peek().kind != "eof":
        start = cur.expect("keyword", "when")
        query = parse_query_literal(cur)
        cur.expect("keyword", "reply")
        value = _literal_element(cur.next())
        if cur.accept("keyword", "step"):
            step = cur.expect("int").value
            cur.expect("keyword", "round")
            rnd = cur.expect("int").value
            if step < 1 or rnd < 1:
                raise ParseError("step and round are 1-based", start.start, file)
            directive = Directive(query, value, "within", step, rnd, len(directives))
        elif cur.accept("keyword", "afterstep"):
            step = cur.expect("int").value
            if step < 1:
                raise ParseError("afterstep is 1-based", start.start, file)
            directive = Directive(query, value, "after", step, 0, len(directives))
        else:
            raise cur.error("expected 'step I round J' or 'afterstep K'")
        for d in directives:
            if d.query == query and d.kind == "within" and directive.kind == "within" \
                    and d.step == directive.step:
                raise ParseError(
                    f"duplicate reply for {query.render()} in step {d.step}",
                    start.start, file,
                )
            if d.query == query and d.kind == "after" and directive.kind == "after" \
                    and d.step == directive.step:
                raise ParseError(
                    f"duplicate late reply for {query.render()} after step {d.step}",
                    start.start, file,
                )
        directives.append(directive)
    return Scenario(tuple(directives))


# ---------------------------------------------------------------------------
# Pretty-printing


def render_term(node) -> str:
    if isinstance(node, Lit):
        return node.value.render()
    if isinstance(node, ReplyLoc):
        return f"<{render_term(node.query)} =: {render_term(node.loc)}>"
    if isinstance(node, App):
        infix = {"=": "=", "and": "&", "or": "|", "+": "+", "<": "<"}
        if node.func in infix and len(node.args) == 2:
            return (
                f"({render_term(node.args[0])} {infix[node.func]} "
                f"{render_term(node.args[1])})"
            )
        if not node.args:
            return node.func
        return f"{node.func}({', '.join(render_term(a) for a in node.args)})"
    raise TypeError(f"not a term: {node!r}")


def render_guard(node) -> str:
    if isinstance(node, Timing):
        return f"({render_term(node.s)} <~ {render_term(node.t)})"
    if isinstance(node, KAnd):
        return f"({render_guard(node.left)} /\\ {render_guard(node.right)})"
    if isinstance(node, KOr):
        return f"({render_guard(node.left)} \\/ {render_guard(node.right)})"
    if isinstance(node, Not):
        return f"!{render_guard(node.inner)}"
    return render_term(node)


def render_rule(node, indent: int = 0, vocabulary: Vocabulary | None = None) -> str:
    pad = "  " * indent
    if isinstance(node, UpdateRule):
        head = node.func
        if node.args:
            head += f"({', '.join(render_term(a) for a in node.args)})"
        return f"{pad}{head} := {render_term(node.rhs)}"
    if isinstance(node, IssueRule):
        return f"{pad}issue {_render_issue_arg(node.arg, vocabulary)}"
    if isinstance(node, FailRule):
        return f"{pad}fail"
    if isinstance(node, CondRule):
        lines = [f"{pad}if {render_guard(_resugar(node.guard, vocabulary))} then"]
        lines.append(render_rule(node.then_rule, indent + 1, vocabulary))
        lines.append(f"{pad}else")
        lines.append(render_rule(node.else_rule, indent + 1, vocabulary))
        lines.append(f"{pad}endif")
        return "\n".join(lines)
    if isinstance(node, ParRule):
        if not node.rules:
            return f"{pad}skip"
        lines = [f"{pad}par"]
        lines += [render_rule(r, indent + 1, vocabulary) for r in node.rules]
        lines.append(f"{pad}endpar")
        return "\n".join(lines)
    raise TypeError(f"not a rule: {node!r}")


def _resugar(node, vocabulary: Vocabulary | None):
    """Rewrite combined [g=:f] applications back to reply-location syntax so
    the output is parseable."""
    if vocabulary is None:
        return node
    if isinstance(node, App) and node.func in vocabulary.combined:
        info = vocabulary.combined[node.func]
        g_args = tuple(_resugar(a, vocabulary) for a in node.args[: info.query_arity])
        f_args = tuple(_resugar(a, vocabulary) for a in node.args[info.query_arity :])
        return ReplyLoc(
            App(info.query_symbol, g_args, node.span),
            App(info.location_symbol, f_args, node.span),
            node.span,
        )
    if isinstance(node, App):
        return App(node.func, tuple(_resugar(a, vocabulary) for a in node.args),
                   node.span)
    if isinstance(node, Timing):
        return Timing(_resugar(node.s, vocabulary), _resugar(node.t, vocabulary),
                      node.span)
    if isinstance(node, KAnd):
        return KAnd(_resugar(node.left, vocabulary), _resugar(node.right, vocabulary),
                    node.span)
    if isinstance(node, KOr):
        return KOr(_resugar(node.left, vocabulary), _resugar(node.right, vocabulary),
                   node.span)
    if isinstance(node, Not):
        return Not(_resugar(node.inner, vocabulary), node.span)
    return node


def _render_issue_arg(arg, vocabulary: Vocabulary | None) -> str:
    return render_term(_resugar(arg, vocabulary))


def _resugar_rule(node, vocabulary: Vocabulary | None):
    if isinstance(node, UpdateRule):
        return UpdateRule(
            node.func,
            tuple(_resugar(a, vocabulary) for a in node.args),
            _resugar(node.rhs, vocabulary),
            node.span,
        )
    if isinstance(node, IssueRule):
        return IssueRule(_resugar(node.arg, vocabulary), node.span)
    if isinstance(node, CondRule):
        return CondRule(
            _resugar(node.guard, vocabulary),
            _resugar_rule(node.then_rule, vocabulary),
            _resugar_rule(node.else_rule, vocabulary),
            node.span,
        )
    if isinstance(node, ParRule):
        return ParRule(tuple(_resugar_rule(r, vocabulary) for r in node.rules),
                       node.span)
    return node


def pretty(program: Program) -> str:
    """Canonical program text; parsing it back yields a structurally
    identical program (modulo spans, after desugaring)."""
    vocab = program.vocabulary
    lines = []
    for name in vocab.user_order:
        sig = vocab.sig(name)
        decl = f"{sig.kind} {name}/{sig.arity}"
        if sig.relational:
            decl += " relational"
        if sig.kind == "external" and name in vocab.templates:
            decl += f" template {vocab.templates[name].render()}"
        lines.append(decl)
    for name in vocab.user_labels:
        lines.append(f"label {name}")
    body = render_rule(_resugar_rule(program.rule, vocab))
    if "\n" in body:
        lines.append("rule")
        lines.append(body)
    else:
        lines.append(f"rule {body.strip()}")
    return "\n".join(lines) + "\n"
