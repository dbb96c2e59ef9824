import pytest

from wmreason.grounding import Grounding
from wmreason.implement import (
    ImplementationRequest,
    Judgement,
    SymbolicImplementer,
    UncoveredConclusionVariable,
    build_implementation_prompt,
    parse_implementation_response,
    symbolic_implement,
    symbolic_state_implement,
    verbalize,
)
from wmreason.memory import FactEntry, RuleEntry
from wmreason.prompts import UnknownTaskKind, build_prompt, load_template
from wmreason.terms import parse_atom, parse_rule, render, unify_atom


def g(subst, rule_id=1, fact_ids=(1, 2)):
    return Grounding(rule_id, fact_ids, subst)


class TestSymbolic:
    rule = parse_rule("granddaughter_of(C, A):-grandson_of(B, A), sister_of(C, B)")

    def test_granddaughter(self):
        subst = {"A": "James", "B": "Don", "C": "Lena"}
        res = symbolic_implement(g(subst), self.rule)
        (atom, text), = res.new_facts
        assert render(atom) == "granddaughter_of(Lena, James)"
        assert text == "Lena is the granddaughter of James."
        restricted = {k: v for k, v in subst.items() if k in self.rule.conclusion.variables()}
        assert unify_atom(self.rule.conclusion, atom) == restricted

    def test_ground_conclusion(self):
        rule = parse_rule("sees(tiger, bald eagle) :- needs(X, tiger)")
        for who in ("cow", "mouse"):
            res = symbolic_implement(g({"X": who}, fact_ids=(1,)), rule)
            assert render(res.new_facts[0][0]) == "sees(tiger, bald eagle)"

    def test_unbound_conclusion_variable(self):
        rule = parse_rule("q(X, D):-p(X)")
        with pytest.raises(UncoveredConclusionVariable):
            symbolic_implement(g({"X": "a"}, fact_ids=(1,)), rule)


def box_facts(*texts):
    return [FactEntry(i, parse_atom(t, ground=True), t) for i, t in enumerate(texts, 1)]


class TestStateEffects:
    def test_move_contents(self):
        rule = parse_rule("transfer(X, A, B):-move_from_to(X, A, B)")
        state = box_facts("contains(Box 1, the rose)", "contains(Box 2, the letter)")
        res = symbolic_state_implement(g({"X": "the contents", "A": "Box 2", "B": "Box 1"}, fact_ids=(9,)), rule, state)
        assert [render(a) for a, _ in res.new_facts] == [
            "contains(Box 2, nothing)",
            "contains(Box 1, the rose, the letter)",
        ]
        assert [t for _, t in res.new_facts] == ["Box 2 contains nothing.", "Box 1 contains the rose and the letter."]

    def test_remove_one(self):
        rule = parse_rule("not_contains(A, X):-remove_from(X, A)")
        state = box_facts("contains(Box 2, the letter, the book)")
        res = symbolic_state_implement(g({"X": "the letter", "A": "Box 2"}, fact_ids=(9,)), rule, state)
        assert [render(a) for a, _ in res.new_facts] == ["contains(Box 2, the book)"]

    def test_put_several_into_unseen_box(self):
        rule = parse_rule("contains(A, X):-put_into(X, A)")
        res = symbolic_state_implement(g({"X": "the hat and the coat", "A": "Box 5"}, fact_ids=(9,)), rule, [])
        assert [render(a) for a, _ in res.new_facts] == ["contains(Box 5, the hat, the coat)"]


def request(kind, rule_text, facts, query, **extra):
    entries = tuple(FactEntry(i, parse_atom(s, ground=True), t) for i, s, t in facts)
    return ImplementationRequest(
        task_kind=kind,
        grounding=g({}, fact_ids=tuple(e.id for e in entries)),
        rule=RuleEntry(1, parse_rule("x(A):-y(A)"), rule_text),
        facts=entries,
        query=query,
        **extra,
    )


class TestPrompts:
    def test_kinship_exemplar_line(self):
        text = load_template("kinship", "implement")
        assert "New fact: Lena is the sister of Joshua. [sister_of(Lena, Joshua)]" in text.splitlines()

    def test_logic_exemplar_judgement(self):
        text = load_template("logic", "implement")
        assert "Judgement: Yes. Because the new fact states the relationship between Bob and quiet." in text.splitlines()

    def test_fact_list_and_roles(self):
        req = request(
            "kinship",
            "If B is the mother of A, and C is the son of B, then C is the brother of A.",
            [(3, "mother_of(Frances, Wesley)", "Frances is the mother of Wesley."),
             (6, "son_of(Hugh, Frances)", "Hugh is the son of Frances.")],
            "How is Irvin related to Hugh?",
            objects=("Frances", "Wesley", "Hugh"),
            predicates=("mother_of", "son_of"),
        )
        p = build_implementation_prompt(req)
        assert p.system.startswith("You are an expert in determining kinship relationships.")
        tail = p.user.split("### Here's what you need to do.")[1].strip().splitlines()
        assert tail == [
            "Schema Objects: Frances, Wesley, Hugh",
            "Schema Predicates: mother_of, son_of",
            "Query: How is Irvin related to Hugh?",
            "Fact List: 3. Frances is the mother of Wesley. 6. Hugh is the son of Frances.",
            "Rule: If B is the mother of A, and C is the son of B, then C is the brother of A.",
            "Rule Implementation:",
        ]

    def test_deterministic(self):
        req = request("logic", "All big things are not green.", [(3, "big(Gary)", "Gary is big.")],
                      "Is it true that Gary is not red?")
        assert build_implementation_prompt(req) == build_implementation_prompt(req)

    def test_slot_values_are_not_reinterpreted(self):
        p = build_prompt("logic", "fact_init", context="literal {rule} text")
        assert "literal {rule} text" in p.user

    def test_empty_schema_renders_null(self):
        p = build_prompt("logic", "fact_init", context="Bob is big.")
        assert p.user.rstrip().splitlines()[-4:-2] == ["Schema Objects: null", "Schema Predicates: null"]

    def test_unknown_kind(self):
        with pytest.raises(UnknownTaskKind):
            build_prompt("chess", "implement")

    def test_state_template_slots(self):
        req = ImplementationRequest(
            task_kind="state_tracking",
            grounding=g({}, fact_ids=(5,)),
            rule=RuleEntry(3, parse_rule("not_contains(A, X):-remove_from(X, A)"),
                           "If remove the contents X from Box A, then X are not in Box A."),
            state_facts=tuple(box_facts("contains(Box 2, the letter, the book)")),
            op_fact=FactEntry(5, parse_atom("remove_from(the letter, Box 2)", ground=True), "Remove the letter from Box 2."),
        )
        user = build_implementation_prompt(req).user
        assert "State Facts: contains(Box 2, the letter, the book)." in user
        assert "Operational Fact: Remove the letter from Box 2." in user
        assert "{" not in user.split("### Here's what you need to do.")[1]


class TestParse:
    def test_kinship_no(self):
        res = parse_implementation_response(
            "New fact: Hugh is the brother of Wesley. [brother_of(Hugh, Wesley)]\nJudgement: No.", "kinship")
        assert [render(a) for a, _ in res.new_facts] == ["brother_of(Hugh, Wesley)"]
        assert res.new_facts[0][1] == "Hugh is the brother of Wesley."
        assert res.judgement is Judgement.NOT_SOLVED

    def test_kinship_yes(self):
        res = parse_implementation_response(
            " According to the rule ...\nNew fact: Lena is the sister of Joshua. [sister_of(Lena, Joshua)]\n"
            "Judgement: Yes. Because the new fact states the relationship between Joshua and Lena.", "kinship")
        assert res.judgement is Judgement.SOLVES_QUERY

    def test_constraint_conflict(self):
        res = parse_implementation_response("Rule Implementation: clash.\nJudgement: Yes.", "constraint")
        assert res.new_facts == []
        assert res.judgement is Judgement.CONFLICT

    def test_empty(self):
        res = parse_implementation_response("", "kinship")
        assert res.new_facts == [] and res.judgement is Judgement.NONE

    def test_two_box_lines(self):
        res = parse_implementation_response(
            " Based on the rule ...\nNew facts:\n"
            "Box 1 contains the rose and the letter. [contains(Box 1, the rose, the letter)]\n"
            "Box 2 contains nothing. [contains(Box 2, nothing)]", "state_tracking")
        assert [render(a) for a, _ in res.new_facts] == [
            "contains(Box 1, the rose, the letter)", "contains(Box 2, nothing)"]

    def test_garbage_lines_skipped(self):
        res = parse_implementation_response("New facts:\nno brackets here\nX. [p(]\nok. [p(a)]", "logic")
        assert [render(a) for a, _ in res.new_facts] == ["p(a)"]
        assert len(res.skipped) == 2

    def test_parse_round_trips_verbalize(self):
        atom = parse_atom("not_quiet(Bob)", ground=True)
        text = f"New fact: {verbalize(atom)} [{render(atom)}]"
        (parsed, nl), = parse_implementation_response(text, "logic").new_facts
        assert parsed == atom and nl == "Bob is not quiet."


def test_symbolic_implementer_dispatch():
    rule = RuleEntry(1, parse_rule("q(X):-p(X)"))
    req = ImplementationRequest("logic", g({"X": "a"}, fact_ids=(1,)), rule)
    assert render(SymbolicImplementer().implement(req).new_facts[0][0]) == "q(a)"
