"""Module-level property tests at development budgets; the acceptance suite
reruns the same checks at the full case count."""

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

import fuzz

DEV = settings(
    max_examples=80,
    deadline=None,
    derandomize=True,
    database=None,
    suppress_health_check=list(HealthCheck),
)


@st.composite
def program_state_history(draw, max_rounds=2):
    program = draw(fuzz.programs())
    state = draw(fuzz.states(program))
    history = draw(fuzz.histories(program, state, max_rounds=max_rounds))
    return program, state, history


@given(program_state_history(), st.data())
@DEV
def test_value_and_guard_persistence(psh, data):
    program, state, history = psh
    prefix = data.draw(st.integers(0, len(history.rounds)))
    fuzz.check_persistence(program, state, history, prefix)


@given(program_state_history())
@DEV
def test_caused_queries_are_fresh(psh):
    fuzz.check_caused_fresh(*psh)


@given(program_state_history())
@DEV
def test_issued_monotone_and_rl_free(psh):
    fuzz.check_issued_monotone_rl_free(*psh)


@given(program_state_history())
@DEV
def test_issued_cardinality_bound(psh):
    fuzz.check_issued_bound(*psh)


@given(program_state_history())
@DEV
def test_origins_lemma(psh):
    fuzz.check_origins_lemma(*psh)


@given(fuzz.programs(), st.data())
@DEV
def test_pending_origins_are_non_blocking(program, data):
    state = data.draw(fuzz.states(program))
    fuzz.check_source_classification(program, state, data.draw)


@given(program_state_history())
@DEV
def test_isomorphism_equivariance(psh):
    fuzz.check_isomorphism_equivariance(*psh)


@given(fuzz.programs(), st.data())
@DEV
def test_complete_coherent_has_final_segment(program, data):
    state = data.draw(fuzz.states(program))
    fuzz.check_complete_coherent_has_final_segment(
        program, state, lambda q: data.draw(st.sampled_from(fuzz.ALPHABET))
    )
