import pytest

from iasm.histories import EMPTY, Query, is_attainable, is_coherent
from iasm.parser import Scenario, parse_program, parse_scenario
from iasm.runtime import (
    EnvReplyError,
    PersistentRegistry,
    RandomEnv,
    RuntimeFault,
    ScriptedEnv,
    SilentEnv,
    Trace,
    deliver_late_replies,
    enumerate_attainable,
    run,
    run_step,
)
from iasm.structures import TRUE, UNDEF, Element, Label, lookup
from iasm.syntax import desugar_reply_locations

from conftest import load_scenario, load_state

QA = Query((Label("a"),))
QB = Query((Label("b"),))
ZERO = Element("int", 0)
ONE = Element("int", 1)


def scripted(text):
    return ScriptedEnv(parse_scenario(text))


def test_run_step_timing_answers_a(timing):
    state = load_state("empty.state", timing)
    result = run_step(
        timing, state, scripted("when <a> reply 0 step 1 round 1"),
        PersistentRegistry(), 1,
    )
    assert result.verdict == "success"
    assert result.final_history.domain == {QA}
    assert {u.render() for u in result.updates} == {"x := 1"}
    # b was issued but never answered: the step ends with it pending.
    from iasm.histories import pending

    assert pending(timing, state, result.final_history) == {QB}


def test_run_step_issue_fixture_silent_env(issue_prog):
    state = load_state("empty.state", issue_prog)
    result = run_step(issue_prog, state, SilentEnv(), PersistentRegistry(), 1)
    assert result.verdict == "success"
    assert result.final_history == EMPTY
    assert result.updates == frozenset()


def test_run_step_kleene_one_round(kleene):
    state = load_state("empty.state", kleene)
    result = run_step(
        kleene, state,
        scripted("when <a> reply 1 step 1 round 1\nwhen <b> reply 2 step 1 round 1"),
        PersistentRegistry(), 1,
    )
    assert result.verdict == "success"
    from iasm.histories import pending

    assert pending(kleene, state, result.final_history) == {Query((Label("c"),))}


def test_run_step_stuck_when_env_exhausted(timing):
    state = load_state("empty.state", timing)
    result = run_step(timing, state, SilentEnv(), PersistentRegistry(), 1)
    assert result.verdict == "stuck"


def test_run_step_rejects_non_pending_reply(timing):
    state = load_state("empty.state", timing)
    with pytest.raises(EnvReplyError):
        run_step(
            timing, state, scripted("when <zzz> reply 0 step 1 round 1"),
            PersistentRegistry(), 1,
        )


def test_run_step_round_limit(timing):
    state = load_state("empty.state", timing)

    class Chatty:
        def next_round(self, step, round_index, pending, state):
            return None  # nothing to say, but the limit check runs first

    result = run_step(timing, state, Chatty(), PersistentRegistry(), 1, max_rounds=0)
    assert result.verdict == "limit"


def test_step_histories_are_coherent_and_attainable(broker):
    state = load_state("broker.state", broker)
    result = run_step(
        broker, state, ScriptedEnv(load_scenario("broker.env")),
        PersistentRegistry(), 1,
    )
    assert is_coherent(broker, state, result.final_history)
    assert is_attainable(broker, state, result.final_history)


def test_registry_two_locations_for_one_query():
    program = desugar_reply_locations(parse_program(
        "external g/0\ndynamic f0/0\ndynamic f1/0\ndynamic x/0\ndynamic y/0\n"
        "rule par\n"
        "  if ((x = 1) \\/ (<g =: f0> = 1)) then y := 1 endif\n"
        "  if ((x = 2) \\/ (<g =: f1> = 2)) then y := 2 endif\n"
        "endpar"
    ))
    state = load_state("empty.state", program)
    registry = PersistentRegistry()
    trace = Trace()
    result = run_step(
        program, state, scripted("when <g> reply 7 step 1 round 1"),
        registry, 1, trace,
    )
    assert result.verdict == "success"
    (inst,) = registry.instances
    assert inst.query == Query((Label("g"),))
    assert {loc.render() for loc in inst.locations} == {"f0", "f1"}
    # The one on-time reply is written into both locations at the boundary.
    new_state = deliver_late_replies(state, registry, Scenario(()), 1, set(), trace)
    assert lookup(new_state, "f0", ()) == Element("int", 7)
    assert lookup(new_state, "f1", ()) == Element("int", 7)
    assert inst.status == "delivered"


def test_deliver_late_replies_broker_boundary(broker):
    state = load_state("broker.state", broker)
    scenario = load_scenario("broker.env")
    registry = PersistentRegistry()
    trace = Trace()
    result = run_step(broker, state, ScriptedEnv(scenario), registry, 1, trace)
    state1 = deliver_late_replies(
        successor_state(broker, state, result), registry, scenario, 1, set(), trace
    )
    # On-time reply to offer0 goes into a0 at the issuing boundary.
    assert lookup(state1, "a0", ()) == TRUE
    assert lookup(state1, "a1", ()) == UNDEF
    # The afterstep-3 directive fires at boundary 3, not earlier.
    consumed: set[int] = set()
    state2 = deliver_late_replies(state1, registry, scenario, 2, consumed, trace)
    assert lookup(state2, "a1", ()) == UNDEF
    state3 = deliver_late_replies(state2, registry, scenario, 3, consumed, trace)
    assert lookup(state3, "a1", ()) == TRUE


def successor_state(program, state, result):
    from iasm.structures import apply_updates

    return apply_updates(state, result.updates)


def test_deliver_rejects_undef_reply():
    program = desugar_reply_locations(parse_program(
        "external g/0\ndynamic f/0\ndynamic x/0\n"
        "rule if ((x = 1) \\/ (<g =: f> = 1)) then x := 1 endif"
    ))
    state = load_state("empty.state", program)
    registry = PersistentRegistry()
    trace = Trace()
    run_step(program, state, scripted("when <g> reply 1 step 1 round 1"),
             registry, 1, trace)
    scenario = parse_scenario("when <g> reply undef afterstep 1")
    registry.instances[0].on_time_value = None  # force the late path
    registry.instances[0].status = "awaiting"
    with pytest.raises(RuntimeFault):
        deliver_late_replies(state, registry, scenario, 1, set(), trace)


def test_deliver_tie_break_earlier_directive_wins():
    program = desugar_reply_locations(parse_program(
        "external g/0\nexternal h/0 template <hq>\ndynamic f/0\n"
        "rule par issue <g =: f> issue <h =: f> endpar"
    ))
    state = load_state("empty.state", program)
    registry = PersistentRegistry()
    trace = Trace()
    result = run_step(program, state, SilentEnv(), registry, 1, trace)
    assert result.verdict == "success"
    scenario = parse_scenario(
        "when <g> reply 5 afterstep 1\nwhen <hq> reply 6 afterstep 1"
    )
    new_state = deliver_late_replies(state, registry, scenario, 1, set(), trace)
    assert lookup(new_state, "f", ()) == Element("int", 5)
    warnings = [e for e in trace.events if e.type == "warning"]
    assert len(warnings) == 1


def test_run_broker_golden(broker):
    state = load_state("broker.state", broker)
    scenario = load_scenario("broker.env")
    result = run(broker, state, ScriptedEnv(scenario), scenario)
    assert result.verdict == "halted"
    assert lookup(result.final_state, "s0", ()) == TRUE
    assert lookup(result.final_state, "a1", ()) == TRUE
    assert result.steps_taken == 4


def test_run_pollster_sums_out_of_order(pollster):
    state = load_state("pollster.state", pollster)
    scenario = load_scenario("pollster.env")
    result = run(pollster, state, ScriptedEnv(scenario), scenario)
    assert result.verdict == "halted"
    assert lookup(result.final_state, "sum", ()) == Element("int", 60)
    issued_events = [e for e in result.trace.events if e.type == "queryIssued"]
    questionnaires = [e for e in issued_events if e.get("query").startswith("<q ")]
    assert [e.get("query") for e in questionnaires] == ["<q 0>", "<q 1>", "<q 2>"]


def test_run_no_halt_hits_step_limit():
    program = parse_program("dynamic x/0\nrule x := 0")
    state = load_state("empty.state", program)
    result = run(program, state, SilentEnv(), max_steps=5)
    assert result.verdict == "limits"
    assert result.steps_taken == 5


def test_run_failed_ends_run():
    program = parse_program("rule par x := 1 x := 2 endpar\n".replace(
        "rule", "dynamic x/0\nrule", 1))
    state = load_state("empty.state", program)
    result = run(program, state, SilentEnv())
    assert result.verdict == "failed"
    assert result.trace.events[-1].type == "failed"


def test_run_trace_is_deterministic(broker):
    state = load_state("broker.state", broker)
    scenario = load_scenario("broker.env")
    texts = {
        run(broker, state, ScriptedEnv(scenario), scenario).trace.render()
        for _ in range(5)
    }
    assert len(texts) == 1


def test_random_env_is_seed_deterministic(timing):
    state = load_state("empty.state", timing)
    runs = [
        run(timing, state, RandomEnv(11, [ZERO, ONE]), max_steps=3).trace.render()
        for _ in range(3)
    ]
    assert len(set(runs)) == 1


def test_enumerate_timing_fixture(timing):
    state = load_state("empty.state", timing)
    entries = enumerate_attainable(timing, state, [ZERO])
    rendered = {e.history.render_inline() for e in entries}
    assert rendered == {"{<a> -> 0}", "{<b> -> 0}", "{<a> -> 0, <b> -> 0}"}
    assert all(len(e.history.rounds) == 1 for e in entries)
    assert all(e.verdict == "success" for e in entries)


def test_enumerate_issue_fixture(issue_prog):
    state = load_state("empty.state", issue_prog)
    entries = enumerate_attainable(issue_prog, state, [ZERO])
    assert len(entries) == 1
    assert entries[0].history == EMPTY
    assert entries[0].verdict == "success"
    assert entries[0].pending == {QA}


def test_enumerate_fail_program():
    program = parse_program("rule fail")
    state = load_state("empty.state", program)
    entries = enumerate_attainable(program, state, [ZERO])
    assert len(entries) == 1
    assert entries[0].verdict == "fail"
    assert entries[0].history == EMPTY
    assert entries[0].updates == frozenset()


def test_enumerate_output_is_attainable_and_coherent(kleene):
    state = load_state("empty.state", kleene)
    entries = enumerate_attainable(kleene, state, [ONE, Element("int", 2)],
                                   max_rounds=3)
    assert entries
    for e in entries:
        assert is_coherent(kleene, state, e.history)
        assert is_attainable(kleene, state, e.history)


def test_scripted_run_agrees_with_enumerator(timing):
    state = load_state("empty.state", timing)
    result = run_step(
        timing, state, scripted("when <a> reply 0 step 1 round 1"),
        PersistentRegistry(), 1,
    )
    entries = enumerate_attainable(timing, state, [ZERO])
    assert any(
        e.history == result.final_history
        and e.verdict == result.verdict
        and e.updates == result.updates
        for e in entries
    )


def test_broker_tie_break_favors_client_zero(broker):
    # Both clients accept simultaneously: <~ in rule 1 wins the tie, << in
    # rule 2 loses it, so the shares go to client 0 and client 1 gets the
    # letter once the on-time reply lands in a1.
    state = load_state("broker.state", broker)
    scenario = parse_scenario(
        "when <offer0> reply true step 1 round 1\n"
        "when <offer1> reply true step 1 round 1\n"
    )
    result = run(broker, state, ScriptedEnv(scenario), scenario)
    assert result.verdict == "halted"
    assert lookup(result.final_state, "s0", ()) == TRUE
    assert lookup(result.final_state, "s1", ()) != TRUE
    issued = [e.get("query") for e in result.trace.events if e.type == "queryIssued"]
    assert "<letter1>" in issued and "<letter0>" not in issued


def test_broker_client_one_first_wins(broker):
    # The mirror case: only client 1 answers (positively) in step 1, so the
    # strict timing guard in rule 2 becomes true and the sale flips.
    state = load_state("broker.state", broker)
    scenario = parse_scenario(
        "when <offer1> reply true step 1 round 1\n"
        "when <offer0> reply true afterstep 3\n"
    )
    result = run(broker, state, ScriptedEnv(scenario), scenario)
    assert result.verdict == "halted"
    assert lookup(result.final_state, "s1", ()) == TRUE
    assert lookup(result.final_state, "s0", ()) != TRUE
    assert lookup(result.final_state, "a0", ()) == TRUE
    issued = [e.get("query") for e in result.trace.events if e.type == "queryIssued"]
    assert "<letter0>" in issued and "<letter1>" not in issued


def test_enumerate_respects_round_width(timing):
    state = load_state("empty.state", timing)
    entries = enumerate_attainable(timing, state, [ZERO], max_round_width=1)
    rendered = {e.history.render_inline() for e in entries}
    # The simultaneous two-reply round is out of bounds with width 1.
    assert rendered == {"{<a> -> 0}", "{<b> -> 0}"}


def test_bounded_work_assertions_hold_on_fixtures(broker, pollster):
    from iasm.syntax import query_term_occurrences

    for program, state_name, env_name in (
        (broker, "broker.state", "broker.env"),
        (pollster, "pollster.state", "pollster.env"),
    ):
        state = load_state(state_name, program)
        scenario = load_scenario(env_name)
        result = run(program, state, ScriptedEnv(scenario), scenario)
        budget = len(query_term_occurrences(program))
        max_len = max(len(t.slots) for t in program.vocabulary.templates.values())
        for event in result.trace.events:
            if event.type == "queryIssued":
                assert len(event.get("query").split()) <= max_len + 2
        assert result.verdict == "halted"
