from itertools import chain, combinations

import pytest

from iasm.histories import (
    EMPTY,
    History,
    HistoryError,
    Query,
    is_attainable,
    is_coherent,
    is_complete,
    issued,
    pending,
)
from iasm.structures import Element, Label

from conftest import load_program, load_state


QA = Query((Label("a"),))
QB = Query((Label("b"),))
QC = Query((Label("c"),))
ONE = Element("int", 1)
TWO = Element("int", 2)


def hist(*rounds):
    return History.from_rounds(list(rounds))


def test_empty_history_has_single_segment():
    assert EMPTY.initial_segments() == [EMPTY]


def test_initial_segments_are_prefixes():
    h = hist({QA: ONE}, {QB: TWO})
    segs = h.initial_segments()
    assert len(segs) == 3
    assert segs[0] == EMPTY
    assert segs[1].domain == {QA}
    assert segs[2].domain == {QA, QB}


def test_simultaneous_round_segments_by_brute_force():
    # Oracle: subsets downward-closed under the pre-order (including the
    # simultaneity classes).  One round of two replies admits only the empty
    # set and the full set; the singletons are not initial segments.
    h = hist({QA: ONE, QB: TWO})
    domain = sorted(h.domain, key=lambda q: q.render())

    def leq(p, q):
        return h.round_of(p) <= h.round_of(q)

    closed = [
        frozenset(s)
        for s in chain.from_iterable(
            combinations(domain, n) for n in range(len(domain) + 1)
        )
        if all(p in s for q in s for p in domain if leq(p, q))
    ]
    assert set(closed) == {seg.domain for seg in h.initial_segments()}
    assert frozenset({QA}) not in {seg.domain for seg in h.initial_segments()}


def test_restrict_before_strict_prefix():
    h = hist({QA: ONE}, {QB: TWO})
    assert h.restrict_before(QB).domain == {QA}
    assert h.restrict_before(QA) == EMPTY


def test_restrict_before_excludes_simultaneous():
    h = hist({QA: ONE, QB: TWO})
    assert h.restrict_before(QA) == EMPTY
    assert h.restrict_before(QB) == EMPTY


def test_history_rejects_duplicates_and_rl():
    with pytest.raises(HistoryError):
        hist({QA: ONE}, {QA: TWO})
    with pytest.raises(HistoryError):
        hist({Query((Label("a"), Label("rl"), Label("x"))): ONE})
    with pytest.raises(HistoryError):
        History(((),))


def test_strip_rl_takes_first_occurrence():
    q = Query((Label("g"), ONE, Label("rl"), Label("f"), Label("rl"), TWO))
    assert q.strip_rl() == Query((Label("g"), ONE))
    assert QA.strip_rl() == QA


def test_reply_location_decoding():
    q = Query((Label("g"), Label("rl"), Label("f"), ONE))
    loc = q.reply_location()
    assert loc.symbol == "f" and loc.args == (ONE,)
    assert QA.reply_location() is None
    malformed = Query((Label("g"), Label("rl"), ONE))
    assert malformed.reply_location() is None


def test_issued_timing_fixture_empty_history():
    p = load_program("timing.iasm")
    s = load_state("empty.state", p)
    assert issued(p, s, EMPTY) == {QA, QB}


def test_issued_issue_fixture():
    p = load_program("issue.iasm")
    s = load_state("empty.state", p)
    assert issued(p, s, EMPTY) == {QA}


def test_issued_broker_strips_rl():
    p = load_program("broker.iasm")
    s = load_state("broker.state", p)
    offers = issued(p, s, EMPTY)
    assert offers == {Query((Label("offer0"),)), Query((Label("offer1"),))}
    assert all(not q.contains_rl() for q in offers)


def test_issued_monotone_on_timing():
    p = load_program("timing.iasm")
    s = load_state("empty.state", p)
    h = hist({QA: ONE})
    for seg in h.initial_segments():
        assert issued(p, s, seg) <= issued(p, s, h)


def test_pending_examples():
    timing = load_program("timing.iasm")
    assert pending(timing, load_state("empty.state", timing), hist({QA: ONE})) == {QB}

    kleene = load_program("kleene.iasm")
    assert pending(
        kleene, load_state("empty.state", kleene), hist({QA: ONE, QB: TWO})
    ) == {QC}

    trivial = load_program("issue.iasm")
    assert pending(
        trivial, load_state("empty.state", trivial), hist({QA: ONE})
    ) == frozenset()


def test_coherence_examples():
    p = load_program("timing.iasm")
    s = load_state("empty.state", p)
    assert is_coherent(p, s, hist({QA: ONE}, {QB: TWO}))
    assert not is_coherent(p, s, hist({QC: ONE}))
    assert is_coherent(p, s, EMPTY)


def test_complete_and_attainable_examples():
    p = load_program("timing.iasm")
    s = load_state("empty.state", p)
    h = hist({QA: ONE})
    assert is_attainable(p, s, h)
    assert not is_complete(p, s, h)  # b is still pending
    two_rounds = hist({QA: ONE}, {QB: TWO})
    assert not is_attainable(p, s, two_rounds)  # the {a} prefix is already final


def test_no_query_program_empty_history_final_complete_attainable():
    from iasm.parser import parse_program
    from iasm.histories import is_final

    p = parse_program("dynamic x/0\nrule x := 0")
    s = load_state("empty.state", p)
    assert is_final(p, s, EMPTY)
    assert is_complete(p, s, EMPTY)
    assert is_attainable(p, s, EMPTY)


def test_render_lines():
    h = hist({QA: ONE}, {QB: TWO})
    assert h.render_lines() == ["round 1: <a> -> 1", "round 2: <b> -> 2"]
    assert EMPTY.render_inline() == "ε"
