from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grail.logic import (ACTION_HEAD, ActionInBodyError, ArityError, RuleSyntaxError,
                         UnknownPredicateError, errors, parse_rulebase, pretty_print, select_clauses,
                         validate_rulebase)

LEFT_BONUS = ("left_bonus(X) :- on_right(O1,O2), type(O1,player), type(O2,bonus), "
              "same_row(O1,O2), closeby(O1,O2), visible(O2).")


def shipped(name):
    return resources.files("grail").joinpath(f"rules/{name}.rules").read_text()


def test_up_air_clause(seaquest_sigs):
    rb = parse_rulebase("up_air(X) :- oxygen_low(B).", seaquest_sigs)
    (c,) = rb.clauses
    assert (c.head.predicate.name, c.head.predicate.arity) == ("up_air", 1)
    assert c.head.predicate.kind == ACTION_HEAD
    assert [(a.predicate.name, a.predicate.arity) for a in c.body] == [("oxygen_low", 1)]
    assert c.action == "up"


def test_empty_file_gives_empty_base(asterix_sigs):
    rb = parse_rulebase("", asterix_sigs)
    assert len(rb) == 0
    assert pretty_print(rb) == ""


def test_left_bonus_has_six_body_atoms(asterix_sigs):
    rb = parse_rulebase(LEFT_BONUS, asterix_sigs)
    assert len(rb.clauses[0].body) == 6


def test_unknown_predicate(seaquest_sigs):
    with pytest.raises(UnknownPredicateError):
        parse_rulebase("up_air(X) :- missing_pred(B).", seaquest_sigs)


def test_syntax_error_has_position(asterix_sigs):
    with pytest.raises(RuleSyntaxError) as exc:
        parse_rulebase("\nleft_bonus(X) :- on_right(O1,O2)", asterix_sigs)
    assert exc.value.line == 2


def test_arity_mismatch(asterix_sigs):
    with pytest.raises(ArityError):
        parse_rulebase("left_bonus(X) :- on_right(O1).", asterix_sigs)


def test_action_head_in_body_rejected(asterix_sigs):
    text = LEFT_BONUS + "\nright_bonus(X) :- left_bonus(X)."
    with pytest.raises(ActionInBodyError):
        parse_rulebase(text, asterix_sigs)


def test_comments_and_whitespace(asterix_sigs):
    text = "% header\n  " + LEFT_BONUS.replace(", ", " ,\t") + "   % trailing\n"
    assert parse_rulebase(text, asterix_sigs).structure() == parse_rulebase(LEFT_BONUS, asterix_sigs).structure()


def test_single_clause_prints_one_line(asterix_sigs):
    out = pretty_print(parse_rulebase(LEFT_BONUS, asterix_sigs))
    assert out.count("\n") == 1 and out.rstrip("\n").endswith(".")


@pytest.mark.parametrize("name", ["asterix", "seaquest"])
def test_shipped_files_round_trip(name, request):
    sigs = request.getfixturevalue(f"{name}_sigs")
    rb = parse_rulebase(shipped(name), sigs)
    again = parse_rulebase(pretty_print(rb), sigs)
    assert again.structure() == rb.structure()
    assert sorted(c.weight_slot for c in rb.clauses) == list(range(len(rb)))
    assert not errors(validate_rulebase(rb))


def test_shipped_clause_counts(asterix_rb, seaquest_rb):
    assert len(asterix_rb) == 12
    assert len(seaquest_rb) == 18


def test_seaquest_warnings_are_head_only_variables(seaquest_rb):
    diags = validate_rulebase(seaquest_rb)
    assert diags and all(d.severity == "warning" for d in diags)
    assert all("head variable" in d.message or "duplicate" in d.message for d in diags)


def test_duplicate_clause_warning(asterix_sigs):
    rb = parse_rulebase(LEFT_BONUS + "\n" + LEFT_BONUS, asterix_sigs)
    diags = validate_rulebase(rb)
    assert any(d.severity == "warning" and "duplicate" in d.message for d in diags)
    assert not errors(diags)


def test_body_length_cap(asterix_sigs):
    rb = parse_rulebase(LEFT_BONUS, asterix_sigs)
    assert errors(validate_rulebase(rb, max_body=5))
    assert not errors(validate_rulebase(rb, max_body=6))


def test_actions_ordered_noop_first(asterix_rb):
    assert asterix_rb.actions[0] == "noop"
    assert set(asterix_rb.actions) == {"noop", "up", "right", "left", "down"}


def test_select_clauses_renumbers(asterix_rb):
    sub = select_clauses(asterix_rb, lambda c: c.action != "noop")
    assert [c.weight_slot for c in sub.clauses] == list(range(len(sub)))
    assert "noop" not in sub.actions


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_round_trip_random_subsets(asterix_rb, data):
    keep = data.draw(st.lists(st.booleans(), min_size=len(asterix_rb), max_size=len(asterix_rb)))
    sub = select_clauses(asterix_rb, lambda c: keep[c.weight_slot])
    text = pretty_print(sub)
    a = parse_rulebase(text, asterix_rb.signatures)
    b = parse_rulebase(text, asterix_rb.signatures)
    assert a.structure() == b.structure() == sub.structure()
