"""Finite first-order structures: elements, states, locations, updates, renaming.

A state is a finite structure over the program's vocabulary.  The base set
holds the declared atoms, the three logic values ``true``/``false``/``undef``
(pairwise distinct), and integers interned on demand.  Dynamic function
symbols are stored as finite tables; lookups outside a table default to
``undef`` (``false`` for relational symbols, so the relational discipline --
relational values lie in {true, false} -- holds everywhere).  The logic names
and the arithmetic built-ins are computed, not stored.

States are immutable values: ``apply_updates`` returns a fresh structure with
the same base set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping

if TYPE_CHECKING:  # pragma: no cover
    from .syntax import Vocabulary


class StructureError(Exception):
    """Ill-formed structure operation (arity, discipline, unknown symbol)."""


class ClashError(StructureError):
    """Two distinct updates target the same location."""


@dataclass(frozen=True)
class Element:
    """A base-set member: integer, atom, or one of the logic values.

    kind is one of "int", "atom", "true", "false", "undef"; value carries the
    integer or atom name and is None for the logic values.
    """

    kind: str
    value: int | str | None = None

    def render(self) -> str:
        if self.kind == "int":
            return str(self.value)
        if self.kind == "atom":
            return f"'{self.value}'"
        return self.kind

    def __repr__(self) -> str:  # keeps test output readable
        return self.render()


TRUE = Element("true")
FALSE = Element("false")
UNDEF = Element("undef")

LOGIC_VALUES = (TRUE, FALSE, UNDEF)


def boolean(flag: bool) -> Element:
    return TRUE if flag else FALSE


def is_boolean(e: Element) -> bool:
    return e == TRUE or e == FALSE


@dataclass(frozen=True)
class Label:
    """A query-tuple label; labels and elements are disjoint sorts."""

    name: str

    def render(self) -> str:
        return self.name

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Location:
    """A pair of a dynamic function symbol and an argument tuple."""

    symbol: str
    args: tuple[Element, ...]

    def render(self) -> str:
        if not self.args:
            return self.symbol
        return f"{self.symbol}({', '.join(a.render() for a in self.args)})"

    def __repr__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class Update:
    """An assignment of a value to a location."""

    location: Location
    value: Element

    def render(self) -> str:
        return f"{self.location.render()} := {self.value.render()}"

    def __repr__(self) -> str:
        return self.render()


def is_trivial(update: Update, state: "StateStruct") -> bool:
    """An update is trivial when the location already holds the value."""
    return lookup(state, update.location.symbol, update.location.args) == update.value


# Table type: per-symbol finite interpretation.
Table = dict[tuple[Element, ...], Element]


@dataclass(frozen=True)
class StateStruct:
    """A finite structure over a vocabulary.  Treat as immutable."""

    vocabulary: "Vocabulary"
    atoms: frozenset[str]
    dyn: Mapping[str, Table]
    static_user: Mapping[str, Table]

    def element_in_base(self, e: Element) -> bool:
        if e.kind == "atom":
            return e.value in self.atoms
        return True  # integers are interned lazily, logic values always present

    def dump(self) -> str:
        """Round-trippable text in the ``.state`` file format."""
        lines = []
        if self.atoms:
            lines.append("atom " + " ".join(sorted(self.atoms)))
        entries = []
        for sym in sorted(self.static_user):
            for args, val in sorted(
                self.static_user[sym].items(), key=lambda kv: [a.render() for a in kv[0]]
            ):
                entries.append(_entry_line(sym, args, val))
        for sym in sorted(self.dyn):
            for args, val in sorted(
                self.dyn[sym].items(), key=lambda kv: [a.render() for a in kv[0]]
            ):
                entries.append(_entry_line(sym, args, val))
        lines.extend(entries)
        return "\n".join(lines) + ("\n" if lines else "")


def _entry_line(sym: str, args: tuple[Element, ...], val: Element) -> str:
    if args:
        return f"{sym}({', '.join(a.render() for a in args)}) = {val.render()}"
    return f"{sym} = {val.render()}"


def make_state(
    vocabulary: "Vocabulary",
    atoms: Iterable[str] = (),
    dyn: Mapping[str, Table] | None = None,
    static_user: Mapping[str, Table] | None = None,
) -> StateStruct:
    state = StateStruct(
        vocabulary=vocabulary,
        atoms=frozenset(atoms),
        dyn={k: dict(v) for k, v in (dyn or {}).items()},
        static_user={k: dict(v) for k, v in (static_user or {}).items()},
    )
    _check_discipline(state)
    return state


def _check_discipline(state: StateStruct) -> None:
    for sym, table in state.dyn.items():
        sig = state.vocabulary.sig(sym)
        if sig is None or sig.kind != "dynamic":
            raise StructureError(f"{sym} is not a dynamic symbol")
        for args, val in table.items():
            if len(args) != sig.arity:
                raise StructureError(f"arity mismatch in table for {sym}")
            if sig.relational and not is_boolean(val):
                raise StructureError(
                    f"relational symbol {sym} holds non-Boolean value {val.render()}"
                )
    for sym, table in state.static_user.items():
        sig = state.vocabulary.sig(sym)
        if sig is None or sig.kind != "static":
            raise StructureError(f"{sym} is not a declared static symbol")
        for args, val in table.items():
            if len(args) != sig.arity:
                raise StructureError(f"arity mismatch in table for {sym}")
            if sig.relational and not is_boolean(val):
                raise StructureError(
                    f"relational symbol {sym} holds non-Boolean value {val.render()}"
                )


def _classical(args: tuple[Element, ...]) -> bool:
    return all(is_boolean(a) for a in args)


def lookup(state: StateStruct, symbol: str, args: tuple[Element, ...]) -> Element:
    """Interpretation of a state-vocabulary symbol at an argument tuple.

    Logic names and arithmetic are computed built-ins; everything else is a
    table lookup with the undef / relational-false default.
    """
    sig = state.vocabulary.sig(symbol)
    if sig is None:
        raise StructureError(f"unknown symbol {symbol}")
    if sig.kind == "external":
        raise StructureError(f"external symbol {symbol} has no state interpretation")
    if len(args) != sig.arity:
        raise StructureError(f"{symbol} expects {sig.arity} arguments, got {len(args)}")

    if symbol == "true":
        return TRUE
    if symbol == "false":
        return FALSE
    if symbol == "undef":
        return UNDEF
    if symbol == "Boole":
        return boolean(is_boolean(args[0]))
    if symbol == "=":
        return boolean(args[0] == args[1])
    # Classical connectives take false whenever an argument is non-Boolean.
    if symbol == "and":
        return boolean(_classical(args) and args[0] == TRUE and args[1] == TRUE)
    if symbol == "or":
        return boolean(_classical(args) and (args[0] == TRUE or args[1] == TRUE))
    if symbol == "not":
        return boolean(_classical(args) and args[0] == FALSE)
    if symbol == "+":
        if args[0].kind == "int" and args[1].kind == "int":
            return Element("int", args[0].value + args[1].value)
        return UNDEF
    if symbol == "<":
        if args[0].kind == "int" and args[1].kind == "int":
            return boolean(args[0].value < args[1].value)
        return FALSE

    if sig.kind == "static":
        table = state.static_user.get(symbol, {})
        return table.get(args, UNDEF)
    table = state.dyn.get(symbol, {})
    default = FALSE if sig.relational else UNDEF
    return table.get(args, default)


def apply_updates(state: StateStruct, updates: Iterable[Update]) -> StateStruct:
    """Successor construction: updated locations take their new values,
    everything else (and the base set) is unchanged.

    Raises ClashError on two distinct updates at one location and refuses
    non-Boolean values at relational locations.
    """
    chosen: dict[Location, Element] = {}
    for u in updates:
        if u.location in chosen and chosen[u.location] != u.value:
            raise ClashError(f"clash at {u.location.render()}")
        chosen[u.location] = u.value

    new_dyn = {k: dict(v) for k, v in state.dyn.items()}
    atoms = set(state.atoms)
    for loc, val in chosen.items():
        sig = state.vocabulary.sig(loc.symbol)
        if sig is None or sig.kind != "dynamic":
            raise StructureError(f"{loc.symbol} is not a dynamic symbol")
        if len(loc.args) != sig.arity:
            raise StructureError(f"arity mismatch at location {loc.render()}")
        if sig.relational and not is_boolean(val):
            raise StructureError(
                f"relational location {loc.render()} cannot hold {val.render()}"
            )
        for a in (*loc.args, val):
            if a.kind == "atom" and a.value not in atoms:
                raise StructureError(f"unknown element {a.render()}")
        new_dyn.setdefault(loc.symbol, {})[loc.args] = val
    return StateStruct(
        vocabulary=state.vocabulary,
        atoms=state.atoms,
        dyn=new_dyn,
        static_user=state.static_user,
    )


class Renaming:
    """A bijection on (part of) the base set, extended canonically to tuples,
    queries, histories, locations, updates, and whole states.

    Labels are fixed pointwise; unmapped elements map to themselves.  Logic
    values must map to themselves: the canonical extension of an isomorphism
    always fixes them.
    """

    def __init__(self, mapping: Mapping[Element, Element]):
        values = list(mapping.values())
        if len(set(values)) != len(values):
            raise StructureError("renaming is not injective")
        for k, v in mapping.items():
            if k in LOGIC_VALUES or v in LOGIC_VALUES:
                if k != v:
                    raise StructureError("renaming must fix true/false/undef")
        self.mapping = dict(mapping)
        self.mapping.update({v: k for k, v in mapping.items() if v not in mapping})

    def element(self, e: Element) -> Element:
        return self.mapping.get(e, e)

    def slot(self, s):
        return s if isinstance(s, Label) else self.element(s)

    def apply(self, obj):
        """Dispatch on the kind of object being renamed."""
        from .histories import History, Query  # local import avoids a cycle

        if isinstance(obj, Element):
            return self.element(obj)
        if isinstance(obj, Query):
            return Query(tuple(self.slot(s) for s in obj.slots))
        if isinstance(obj, Location):
            return Location(obj.symbol, tuple(self.element(a) for a in obj.args))
        if isinstance(obj, Update):
            return Update(self.apply(obj.location), self.element(obj.value))
        if isinstance(obj, History):
            return History(
                tuple(
                    tuple(sorted(
                        ((self.apply(q), self.element(v)) for q, v in rnd),
                        key=lambda qv: qv[0].render(),
                    ))
                    for rnd in obj.rounds
                )
            )
        if isinstance(obj, StateStruct):
            return self._state(obj)
        if isinstance(obj, (set, frozenset)):
            return type(obj)(self.apply(x) for x in obj)
        raise StructureError(f"cannot rename object of type {type(obj).__name__}")

    def _state(self, state: StateStruct) -> StateStruct:
        atoms = frozenset(
            self.element(Element("atom", a)).value
            if self.element(Element("atom", a)).kind == "atom"
            else a
            for a in state.atoms
        )
        def rekey(tables: Mapping[str, Table]) -> dict[str, Table]:
            return {
                sym: {
                    tuple(self.element(a) for a in args): self.element(val)
                    for args, val in table.items()
                }
                for sym, table in tables.items()
            }
        return StateStruct(
            vocabulary=state.vocabulary,
            atoms=atoms,
            dyn=rekey(state.dyn),
            static_user=rekey(state.static_user),
        )


def rename(obj, mapping: Mapping[Element, Element]):
    """Apply the canonical extension of a base-set bijection to obj."""
    return Renaming(mapping).apply(obj)
