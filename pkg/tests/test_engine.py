import itertools
import random

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import closure, from_package_atom, random_program, rule_text, to_text
from wmreason import synth
from wmreason.dataset import InstanceSpec, Option, Statement
from wmreason.engine import (
    EngineConfig,
    InitializationError,
    Query,
    QueryParseError,
    default_max_steps,
    initialize_memory,
    parse_formulation,
    parse_query,
    predict_constraint_answer,
    query_solved,
    run,
    run_to_fixpoint,
)
from wmreason.gateway import Gateway, GatewayConfig, GatewayError
from wmreason.memory import WorkingMemory
from wmreason.terms import parse_atom, render

SYM = EngineConfig(implementer="symbolic", backup=False)


def kinship_two_step(**kw):
    return InstanceSpec(
        id="k2",
        task_mode="kinship",
        facts=[
            Statement("Don is the grandson of James.", "grandson_of(Don, James)"),
            Statement("Lena is the sister of Don.", "sister_of(Lena, Don)"),
            Statement("Marie is the daughter of Lena.", "daughter_of(Marie, Lena)"),
        ],
        rules=[
            Statement("", "granddaughter_of(C, A):-grandson_of(B, A), sister_of(C, B)"),
            Statement("", "great_granddaughter_of(C, A):-granddaughter_of(B, A), daughter_of(C, B)"),
        ],
        query="How is Marie related to James?",
        gold="great_granddaughter",
        declared_depth=2,
        **kw,
    )


def canned_gateway(responses, path=None):
    """Gateway whose transport answers from a function of the user prompt."""
    def handler(request):
        import json
        user = json.loads(request.content)["messages"][-1]["content"]
        return httpx.Response(200, json={"choices": [{"message": {"content": responses(user)}}]})

    return Gateway(GatewayConfig(model="m", max_retries=0),
                   client=httpx.Client(transport=httpx.MockTransport(handler)))


class TestRun:
    def test_one_step_granddaughter(self):
        inst = InstanceSpec(
            id="k1", task_mode="kinship",
            facts=["grandson_of(Don, James)", "sister_of(Lena, Don)"],
            rules=["granddaughter_of(C, A):-grandson_of(B, A), sister_of(C, B)"],
            query="How is Lena related to James?",
        )
        out = run(inst, SYM)
        assert (out.answer, out.solved_directly, out.steps) == ("granddaughter", True, 1)

    def test_two_step_chain(self):
        out = run(kinship_two_step(), SYM)
        assert (out.answer, out.solved_directly, out.steps) == ("great_granddaughter", True, 2)
        # The oracle agrees that the answer fact needs two rounds.
        facts = [from_package_atom(parse_atom(s.symbolic, ground=True)) for s in kinship_two_step().facts]
        rules = [(("granddaughter_of", (("var", "C"), ("var", "A"))),
                  [("grandson_of", (("var", "B"), ("var", "A"))), ("sister_of", (("var", "C"), ("var", "B")))]),
                 (("great_granddaughter_of", (("var", "C"), ("var", "A"))),
                  [("granddaughter_of", (("var", "B"), ("var", "A"))), ("daughter_of", (("var", "C"), ("var", "B")))])]
        depth = closure(facts, rules)
        assert depth[("great_granddaughter_of", (("obj", "Marie"), ("obj", "James")))] == 2

    def test_budget_exhaustion_abstains(self):
        out = run(kinship_two_step(), EngineConfig(implementer="symbolic", backup=False, max_steps=1))
        assert out.answer is None and not out.solved_directly
        assert out.steps == 1 and out.stop_reason == "max_steps"

    def test_already_solved_takes_zero_steps(self):
        inst = InstanceSpec(id="k0", task_mode="kinship", facts=["sister_of(Lena, Joshua)"],
                            rules=["q(X, Y):-sister_of(X, Y)"], query="How is Lena related to Joshua?")
        out = run(inst, SYM)
        assert (out.answer, out.steps) == ("sister", 0)

    def test_trace_accounts_for_every_inferred_fact(self):
        out = run(synth.kinship_instance(random.Random(3), 5), SYM)
        committed = [fid for s in out.trace for fid in s.committed]
        inferred = [f.id for f in out.memory.all_facts() if f.step is not None]
        assert sorted(committed) == inferred
        assert len(committed) == len(set(committed))
        pairs = [(r, tuple(f)) for s in out.trace for r, f in s.implemented]
        assert len(pairs) == len(set(pairs))

    def test_logic_true_false_unknown(self):
        base = dict(task_mode="logic", facts=["furry(Bob)", "big(Bob)"],
                    rules=["not_quiet(X):-furry(X), big(X)"])
        assert run(InstanceSpec(id="a", query="Is it true that Bob is not quiet?", **base), SYM).answer == "true"
        assert run(InstanceSpec(id="b", query="Is it true that Bob is quiet?", **base), SYM).answer == "false"
        out = run(InstanceSpec(id="c", query="Is it true that Bob is red?", **base), SYM)
        assert out.answer == "unknown" and out.solved_directly

    def test_state_steps_equal_operations(self):
        inst, ops, _ = synth.boxes_instance(random.Random(11), n_ops=7)
        out = run(inst, SYM)
        assert out.steps == 7 == len(out.trace)
        assert out.stop_reason == "operations_consumed"
        capped = run(inst, EngineConfig(implementer="symbolic", backup=False, max_steps=7))
        assert capped.steps == 7 and capped.answer == out.answer

    def test_state_budget_shorter_than_operations(self):
        inst, _, _ = synth.boxes_instance(random.Random(11), n_ops=7)
        out = run(inst, EngineConfig(implementer="symbolic", backup=False, max_steps=3))
        assert out.steps == 3 and out.answer is None

    def test_constraint_toy(self):
        out = run(synth.constraint_example(), SYM)
        assert out.answer == "B"
        assert out.option_conflicts == {"A": True, "B": False, "C": True}

    def test_constraint_negative_polarity(self):
        inst = synth.constraint_example()
        inst.options = inst.options[:2]
        inst.polarity = "negative"
        assert run(inst, SYM).answer == "A"

    def test_workers_do_not_change_result(self):
        inst = synth.kinship_instance(random.Random(5), 6)
        one = run(inst, SYM)
        many = run(inst, EngineConfig(implementer="symbolic", backup=False, workers=4))
        assert one.trace_lines() == many.trace_lines()


class TestBackup:
    def unreachable(self):
        return InstanceSpec(id="u", task_mode="kinship", facts=["brother_of(Hugh, Wesley)"],
                            rules=["nephew_of(C, A):-brother_of(B, A), son_of(C, B)"],
                            query="How is Hugh related to Irvin?")

    def test_backup_answers_when_loop_cannot(self):
        gw = canned_gateway(lambda user: "Scratchpad: reasoning...\nAnswer: uncle.")
        out = run(self.unreachable(), EngineConfig(implementer="symbolic"), gw)
        assert out.answer == "uncle" and out.used_backup and not out.solved_directly

    def test_backup_failure_abstains(self):
        def boom(_):
            raise httpx.ConnectError("down")
        gw = Gateway(GatewayConfig(model="m", max_retries=0),
                     client=httpx.Client(transport=httpx.MockTransport(boom)))
        out = run(self.unreachable(), EngineConfig(implementer="symbolic"), gw)
        assert out.answer is None and out.used_backup and out.error

    def test_gateway_error_propagates_without_backup(self):
        def boom(_):
            raise httpx.ConnectError("down")
        gw = Gateway(GatewayConfig(model="m", max_retries=0),
                     client=httpx.Client(transport=httpx.MockTransport(boom)))
        with pytest.raises(GatewayError):
            run(kinship_two_step(), EngineConfig(implementer="llm", backup=False), gw)


class TestQuerySolved:
    def mem(self, *facts):
        m = WorkingMemory()
        for f in facts:
            m.write_fact(parse_atom(f, ground=True))
        return m

    def test_kinship_pair(self):
        hit = query_solved(self.mem("sister_of(Lena, Joshua)"), Query("kinship", ("Lena", "Joshua")))
        assert hit.answer == "sister"

    def test_kinship_order_matters(self):
        assert query_solved(self.mem("sister_of(Lena, Joshua)"), Query("kinship", ("Joshua", "Lena"))) is None

    def test_latest_fact_wins(self):
        hit = query_solved(self.mem("sibling_of(Lena, Joshua)", "sister_of(Lena, Joshua)"),
                           Query("kinship", ("Lena", "Joshua")))
        assert hit.answer == "sister"

    def test_logic(self):
        q = parse_query(InstanceSpec(id="q", task_mode="logic", facts=[], query="Is it true that Bob is not quiet?"))
        assert q == Query("logic", ("Bob",), "not_quiet")
        assert query_solved(self.mem("not_quiet(Bob)"), q).answer == "true"
        assert query_solved(self.mem("quiet(Bob)"), q).answer == "false"
        assert query_solved(self.mem("big(Bob)"), q) is None

    def test_empty_memory(self):
        assert query_solved(WorkingMemory(), Query("kinship", ("a", "b"))) is None

    def test_state(self):
        m = WorkingMemory("stateful")
        m.write_fact(parse_atom("contains(Box 1, the rose, the letter)", ground=True))
        assert query_solved(m, Query("state_tracking", ("Box 1",), "contains")).answer == "the rose and the letter"

    def test_unreadable_query(self):
        with pytest.raises(QueryParseError):
            parse_query(InstanceSpec(id="q", task_mode="kinship", facts=[], query="Who knows?"))

    def test_query_atom_override(self):
        q = parse_query(InstanceSpec(id="q", task_mode="logic", facts=[], query="?", query_atom="round(cat)"))
        assert q == Query("logic", ("cat",), "round")


class TestConstraintAnswer:
    def test_unique_free_option(self):
        assert predict_constraint_answer({"A": True, "B": False, "C": True, "D": True, "E": True}) == "B"

    def test_all_conflict_abstains(self):
        assert predict_constraint_answer(dict.fromkeys("ABCDE", True)) is None

    def test_exhaustive_vectors(self):
        labels = "ABCDE"
        for vec in itertools.product([False, True], repeat=5):
            outcome = dict(zip(labels, vec))
            free = [l for l, c in outcome.items() if not c]
            clash = [l for l, c in outcome.items() if c]
            assert predict_constraint_answer(outcome, "positive") == (free[0] if len(free) == 1 else None)
            assert predict_constraint_answer(outcome, "negative") == (clash[0] if len(clash) == 1 else None)


class TestInitialisation:
    def test_kinship_sentence(self):
        gw = canned_gateway(lambda user: "\n- Lena is the daughter of James. [daughter_of(Lena, James)]"
                                         "\n- James is the father of Lena. [father_of(James, Lena)]")
        inst = InstanceSpec(id="i", task_mode="kinship", context=["James took his daughter Lena out for dinner."],
                            query="How is Lena related to James?")
        m = initialize_memory(inst, gw)
        assert [render(f.atom) for f in m.active_facts()] == ["daughter_of(Lena, James)", "father_of(James, Lena)"]

    def test_preparsed_identity(self):
        inst = InstanceSpec(
            id="p", task_mode="logic",
            facts=["big(Bob)", "furry(Bob)", "kind(Gary)", "visits(cow, bald eagle)"],
            rules=["not_quiet(X):-furry(X), big(X)", "rough(X):-not_quiet(X)", "sees(tiger, bald eagle):-needs(X, tiger)"],
            query="Is it true that Bob is rough?",
        )
        m = initialize_memory(inst)
        assert len(m.active_facts()) == 4 and len(m.rules) == 3
        assert all(m.schema.covers(f.atom) for f in m.active_facts())
        assert all(m.schema.covers(a) for r in m.rules for a in (r.rule.conclusion, *r.rule.premises))

    def test_empty_context(self):
        inst = InstanceSpec(id="e", task_mode="kinship", facts=[], query="How is A related to B?")
        with pytest.raises(InitializationError):
            initialize_memory(inst)

    def test_raw_without_gateway(self):
        inst = InstanceSpec(id="r", task_mode="logic", context=["Bob is big."], query="Is it true that Bob is big?")
        with pytest.raises(InitializationError):
            initialize_memory(inst)

    def test_parse_formulation_forms(self):
        items = parse_formulation(
            "Facts:\n- Joshua is the father of Don. [father_of(Joshua, Don)]\n"
            "Symbolic Rule: nice(X) :- kind(X), smart(X)\n"
            " visits(cow, bald eagle)\nnonsense here\n------\nFact: after_separator(x)"
        )
        assert [render(i) for i, _ in items] == [
            "father_of(Joshua, Don)", "nice(X):-kind(X), smart(X)", "visits(cow, bald eagle)"]


def test_default_max_steps():
    def with_depth(d):
        return InstanceSpec(id="d", task_mode="kinship", facts=["p(a)"], query="?", declared_depth=d)

    assert [default_max_steps(with_depth(d)) for d in (2, 3, 4, 5, 6, 9)] == [4, 6, 6, 8, 8, 11]
    assert default_max_steps(with_depth(None)) == 8
    assert default_max_steps(synth.constraint_example()) == 3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fixpoint_matches_oracle(seed):
    facts, rules = random_program(random.Random(seed))
    inst = InstanceSpec(id="fp", task_mode="logic", facts=[to_text(f) for f in facts],
                        rules=[rule_text(r) for r in rules], query="?")
    out = run_to_fixpoint(inst)
    assert out.stop_reason in ("fixpoint", "no_groundings")
    expected = closure(facts, rules)
    got = {from_package_atom(f.atom): (f.step or 0) for f in out.memory.active_facts()}
    assert set(got) == set(expected)
    assert all(got[a] <= d for a, d in expected.items())
