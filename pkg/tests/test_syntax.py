import pytest

from iasm.histories import Query
from iasm.parser import parse_program
from iasm.structures import Element, Label
from iasm.syntax import (
    Placeholder,
    SyntaxError_,
    Template,
    Vocabulary,
    desugar_reply_locations,
    instantiate_template,
    query_term_occurrences,
    validate_program,
)

from conftest import load_program


def test_broker_combined_symbol_and_template():
    program = load_program("broker.iasm")
    vocab = program.vocabulary
    sig = vocab.sig("[q1=:a1]")
    assert sig is not None and sig.kind == "external" and sig.arity == 0
    assert vocab.templates["[q1=:a1]"].slots == (
        Label("offer1"), Label("rl"), Label("a1"),
    )
    assert vocab.sig("a1").reply_available
    assert "a1" in vocab.labels and "rl" in vocab.labels


def test_pollster_combined_template_has_trailing_placeholder():
    program = load_program("pollster.iasm")
    template = program.vocabulary.templates["[q=:l]"]
    assert template.slots == (
        Label("q"), Placeholder(1), Label("rl"), Label("l"), Placeholder(2),
    )
    sig = program.vocabulary.sig("[q=:l]")
    assert sig.arity == 2  # sum of the arities of q and l


def test_desugar_identity_without_reply_locations():
    program = parse_program("external a/0\ndynamic x/0\nrule x := a")
    assert desugar_reply_locations(program) is program


def test_desugar_idempotent(broker):
    assert desugar_reply_locations(broker) is broker


def test_desugar_shares_combined_symbol_across_occurrences():
    program = desugar_reply_locations(parse_program(
        "external g/0\ndynamic f/0\ndynamic x/0\ndynamic y/0\n"
        "rule par\n"
        "  if (x = 1) then y := <g =: f> endif\n"
        "  if (x = 2) then y := <g =: f> endif\n"
        "endpar"
    ))
    combined = [n for n in query_term_occurrences(program) if n.func == "[g=:f]"]
    assert len(combined) == 2
    assert len([n for n in program.vocabulary.combined]) == 1


def test_desugar_rejects_non_dynamic_location():
    program = parse_program(
        "external g/0\nstatic c/0\ndynamic x/0\nrule x := <g =: c>"
    )
    with pytest.raises(SyntaxError_):
        desugar_reply_locations(program)


def test_desugar_rejects_relational_location():
    program = parse_program(
        "external g/0\ndynamic r/0 relational\ndynamic x/0\nrule x := <g =: r>"
    )
    with pytest.raises(SyntaxError_):
        desugar_reply_locations(program)


def test_instantiate_single_substitution():
    t = Template((Label("offer"), Placeholder(1)))
    assert instantiate_template(t, (Element("int", 5),)) == Query(
        (Label("offer"), Element("int", 5))
    )


def test_instantiate_combined_no_placeholders():
    t = Template((Label("offer1"), Label("rl"), Label("a1")))
    assert instantiate_template(t, ()) == Query(
        (Label("offer1"), Label("rl"), Label("a1"))
    )


def test_instantiate_permutation():
    t = Template((Placeholder(2), Placeholder(1)))
    x, y = Element("atom", "x"), Element("atom", "y")
    # Building a state is not needed: instantiation is a pure slot walk.
    assert instantiate_template(t, (x, y)) == Query((y, x))


def test_instantiate_arity_mismatch():
    t = Template((Placeholder(1),))
    with pytest.raises(SyntaxError_):
        instantiate_template(t, ())


def test_validate_broker_clean(broker):
    assert validate_program(broker) == []


def test_validate_relational_update_needs_boolean():
    program = parse_program(
        "external q/0\ndynamic b/0 relational\nrule b := q"
    )
    diags = validate_program(program)
    assert any("Boolean" in d.message for d in diags)


def test_validate_reply_location_terms_state_vocabulary_only():
    program = desugar_reply_locations(parse_program(
        "external g/0\nexternal c/0\ndynamic f/1\ndynamic x/0\n"
        "rule x := <g =: f(c)>"
    ))
    diags = validate_program(program)
    assert any("state" in d.message and "vocabulary" in d.message for d in diags)


def test_validate_issue_argument_must_be_external():
    program = parse_program("dynamic x/0\ndynamic y/0\nrule issue y")
    diags = validate_program(program)
    assert any("external" in d.message for d in diags)


def test_validate_guard_term_must_be_boolean():
    program = parse_program("dynamic x/0\nrule if x then x := 1 endif")
    diags = validate_program(program)
    assert any("Boolean term" in d.message for d in diags)


def test_every_external_has_template_with_matching_placeholders(pollster):
    vocab = pollster.vocabulary
    for name in vocab.external_symbol_names():
        template = vocab.templates[name]
        assert template.placeholder_count() == vocab.sig(name).arity


def test_declare_rejects_rl_and_duplicates():
    v = Vocabulary()
    with pytest.raises(SyntaxError_):
        v.declare("rl", 0, "dynamic")
    v.declare("x", 0, "dynamic")
    with pytest.raises(SyntaxError_):
        v.declare("x", 0, "dynamic")
    with pytest.raises(SyntaxError_):
        v.declare("e", 0, "external", relational=True)


def test_only_combined_templates_may_contain_rl():
    program = parse_program(
        "external g/0 template <g rl x>\ndynamic y/0\nrule y := g"
    )
    diags = validate_program(program)
    assert any("rl" in d.message for d in diags)


def test_query_term_occurrence_count(broker):
    # Per occurrence, not per symbol: 4 in each selling guard, 2 in the
    # both-declined guard, plus the two issue arguments.
    occurrences = query_term_occurrences(broker)
    assert len(occurrences) == 12
