import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wmreason import synth
from wmreason.dataset import FormatError, InstanceSpec, dump_dataset, load_dataset
from wmreason.engine import EngineConfig, RunOutcome
from wmreason.evaluation import EvalReport, InstanceResult, answers_match, box_items, evaluate, score

KINSHIP_LINES = [
    {"id": "a", "task_mode": "kinship", "facts": ["grandson_of(Don, James)", "sister_of(Lena, Don)"],
     "rules": ["granddaughter_of(C, A):-grandson_of(B, A), sister_of(C, B)"],
     "query": "How is Lena related to James?", "gold": "granddaughter", "declared_depth": 1},
    {"id": "b", "task_mode": "kinship", "facts": [{"symbolic": "sister_of(Lena, Joshua)", "text": "Lena is Joshua's sister."}],
     "rules": [], "query": "How is Lena related to Joshua?", "gold": "sister"},
    {"id": "c", "task_mode": "kinship", "context": "Don went fishing with his grandfather James. Lena is Don's sister.",
     "rules": [{"text": "If B is the grandson of A, and C is the sister of B, then C is the granddaughter of A."}],
     "query": "How is Lena related to James?", "gold": "granddaughter"},
]


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) if isinstance(r, dict) else r for r in records) + "\n")


class TestLoad:
    def test_three_instances(self, tmp_path):
        p = tmp_path / "k.jsonl"
        write_jsonl(p, KINSHIP_LINES)
        specs = load_dataset(p)
        assert [s.id for s in specs] == ["a", "b", "c"]
        assert specs[2].is_raw and not specs[0].is_raw
        assert specs[2].context == ["Don went fishing with his grandfather James.", "Lena is Don's sister."]

    def test_missing_query_line_number(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        broken = dict(KINSHIP_LINES[1])
        del broken["query"]
        write_jsonl(p, [KINSHIP_LINES[0], "", broken])
        with pytest.raises(FormatError) as err:
            load_dataset(p)
        assert err.value.line == 3 and "query" in err.value.reason

    @pytest.mark.parametrize("record, reason", [
        ("{not json", "invalid JSON"),
        (json.dumps({**KINSHIP_LINES[0], "colour": "red"}), "unknown field"),
        (json.dumps({**KINSHIP_LINES[0], "facts": ["p(a"]}), "expected predicate"),
        (json.dumps({**KINSHIP_LINES[0], "context": ["x"]}), "exactly one"),
        (json.dumps({"id": "x", "task_mode": "constraint", "query": "q"}), "options"),
        (json.dumps({"id": "x", "task_mode": "poetry", "query": "q", "facts": []}), "task_mode"),
    ])
    def test_rejections(self, tmp_path, record, reason):
        p = tmp_path / "bad.jsonl"
        write_jsonl(p, [record])
        with pytest.raises(FormatError, match=reason):
            load_dataset(p)

    def test_state_depth_defaults_to_operation_count(self, tmp_path):
        inst = synth.boxes_suite(1, seed=2)[0]
        rec = inst.to_dict()
        rec.pop("declared_depth", None)
        rec["task_mode"] = "state-tracking"
        p = tmp_path / "s.jsonl"
        write_jsonl(p, [rec])
        (spec,) = load_dataset(p)
        assert spec.task_mode == "state_tracking" and spec.declared_depth == 7


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_round_trip(tmp_path_factory, seed):
    path = tmp_path_factory.mktemp("rt") / "d.jsonl"
    original = synth.kinship_suite(3, seed) + synth.boxes_suite(2, seed) + [synth.constraint_example()]
    dump_dataset(original, path)
    loaded = load_dataset(path)
    assert loaded == original
    path2 = path.with_name("d2.jsonl")
    dump_dataset(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


class TestAnswerMatching:
    def test_boxes_set_equality(self):
        assert box_items("the rose and the letter") == {"rose", "letter"}
        assert answers_match("the letter and the rose", "The rose, the letter.", "state_tracking")
        assert answers_match("nothing", "nothing", "state_tracking")
        assert not answers_match("the rose", "the rose and the letter", "state_tracking")

    def test_relations(self):
        assert answers_match("great_granddaughter", "great-granddaughter", "kinship")
        assert answers_match("Sister", "sister_of", "kinship")
        assert not answers_match("sister", "brother", "kinship")

    def test_labels_and_logic(self):
        assert answers_match("B", "(b)", "constraint")
        assert answers_match("True", "true", "logic")
        assert not answers_match(None, "true", "logic")


def _result(correct, direct, depth=None):
    return InstanceResult("x", "kinship", depth, "a", "a", correct, direct, 1)


class TestMetrics:
    def test_all_correct_all_direct(self):
        r = EvalReport.from_results([_result(True, True)] * 3)
        assert (r.accuracy, r.execution_rate) == (1.0, 1.0)

    def test_half_direct_three_quarters_correct(self):
        # Hand arithmetic: 2 direct of 4 -> 0.5; 3 correct of 4 -> 0.75.
        r = EvalReport.from_results([_result(True, True), _result(True, True), _result(True, False), _result(False, False)])
        assert r.execution_rate == 0.5 and r.accuracy == 0.75
        assert r.executable_accuracy == 1.0

    def test_per_depth(self):
        r = EvalReport.from_results([_result(True, True, 2), _result(False, True, 2), _result(True, True, 10), _result(True, True)])
        assert r.per_depth == {"2": 0.5, "10": 1.0, "none": 1.0}

    def test_empty(self):
        r = EvalReport.from_results([])
        assert (r.accuracy, r.execution_rate, r.executable_accuracy) == (0.0, 0.0, None)

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), max_size=40))
    def test_identities(self, rows):
        r = EvalReport.from_results([_result(c, d) for c, d in rows])
        n = len(rows)
        assert r.accuracy == (sum(c for c, _ in rows) / n if n else 0.0)
        assert r.execution_rate == (sum(d for _, d in rows) / n if n else 0.0)
        assert r.to_dict()["n"] == n

    def test_score_uses_outcome(self):
        inst = InstanceSpec(id="s", task_mode="kinship", facts=["p(a)"], query="?", gold="sister")
        res = score(inst, RunOutcome("s", "kinship", "sister", False, 3, []))
        assert res.correct and not res.solved_directly


def test_evaluate_records_failures_as_incorrect():
    bad = InstanceSpec(id="bad", task_mode="kinship", facts=["p(a)"], query="unparseable", gold="x")
    good = synth.kinship_suite(1, 4)[0]
    r = evaluate([bad, good], EngineConfig(implementer="symbolic", backup=False))
    assert [o.correct for o in r.outcomes] == [False, True]
    assert r.outcomes[0].error and "QueryParseError" in r.outcomes[0].error
    assert r.accuracy == 0.5 and r.execution_rate == 0.5


def test_evaluate_parallel_matches_serial():
    suite = synth.kinship_suite(10, 9)
    cfg = EngineConfig(implementer="symbolic", backup=False)
    assert evaluate(suite, cfg).to_dict() == evaluate(suite, cfg, workers=4).to_dict()


def test_synthetic_kinship_depths_are_exact():
    # Parsing is not under test here; the closure is the independent part.
    from oracles import closure, from_package_atom
    from wmreason.terms import parse_atom, parse_rule

    for inst in synth.kinship_suite(10, seed=21):
        facts = [from_package_atom(parse_atom(s.symbolic, ground=True)) for s in inst.facts]
        rules = []
        for s in inst.rules:
            r = parse_rule(s.symbolic)
            rules.append((from_package_atom(r.conclusion), [from_package_atom(p) for p in r.premises]))
        depth = closure(facts, rules)
        person, other = inst.query[len("How is "):-1].split(" related to ")
        target = [(a, d) for a, d in depth.items() if a[1] == (("obj", person), ("obj", other))]
        assert len(target) == 1
        assert target[0][1] == inst.declared_depth
        assert answers_match(target[0][0][0], inst.gold, "kinship")
