"""Rebuild the bundled replay fixtures under src/wmreason/data/replay/.

Each fixture is one raw instance plus a cassette of gateway exchanges. The
exchanges are authored, not captured from a live model: a canned responder
answers every prompt in the template's response format. Initialisation
prompts are answered from hand-written tables below; implementation prompts
are answered by rendering the symbolic implementer's result (or, for the
constraint puzzle, a conflict table) as model text. The responses travel
through the real Gateway in record mode over a mock HTTP transport, so the
digests are exactly what a replay run computes.

    python scripts/author_cassettes.py
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import httpx

from wmreason import engine
from wmreason.dataset import InstanceSpec, Option, Statement, dump_dataset
from wmreason.engine import EngineConfig, parse_query, run
from wmreason.gateway import Gateway, GatewayConfig
from wmreason.implement import (
    ImplementationRequest,
    LLMImplementer,
    SymbolicImplementer,
)
from wmreason.terms import Atom, complement_predicate, render

OUT = Path(__file__).resolve().parents[1] / "src" / "wmreason" / "data" / "replay"

BACKGROUND = (
    "Of the eight students-George, Helen, Irving, Kyle, Lenore, Nina, Olivia, and Robert-in a seminar, "
    "exactly six will give individual oral reports during three consecutive days-Monday, Tuesday, and "
    "Wednesday. Exactly two reports will be given each day-one in the morning and one in the afternoon-"
    "according to the following conditions."
)

FIXTURES: dict[str, dict] = {
    "kinship": {
        "instance": InstanceSpec(
            id="replay-kinship",
            task_mode="kinship",
            context=[
                "James took his grandson Don fishing on Sunday.",
                "Don baked a cake with his sister Lena.",
                "Lena's daughter Marie was born in May.",
            ],
            rules=[
                Statement("If B is the grandson of A, and C is the sister of B, then C is the granddaughter of A."),
                Statement("If B is the granddaughter of A, and C is the daughter of B, then C is the great-granddaughter of A."),
            ],
            query="How is Marie related to James?",
            gold="great-granddaughter",
            declared_depth=2,
        ),
        "init": {
            "James took his grandson Don fishing on Sunday.":
                "\n- Don is the grandson of James. [grandson_of(Don, James)]"
                "\n- James is the grandfather of Don. [grandfather_of(James, Don)]",
            "Don baked a cake with his sister Lena.":
                "\n- Lena is the sister of Don. [sister_of(Lena, Don)]"
                "\n- Don is the brother of Lena. [brother_of(Don, Lena)]",
            "Lena's daughter Marie was born in May.":
                "\n- Marie is the daughter of Lena. [daughter_of(Marie, Lena)]"
                "\n- Lena is the mother of Marie. [mother_of(Lena, Marie)]",
            "If B is the grandson of A, and C is the sister of B, then C is the granddaughter of A.":
                " granddaughter_of(C, A) :- grandson_of(B, A), sister_of(C, B).",
            "If B is the granddaughter of A, and C is the daughter of B, then C is the great-granddaughter of A.":
                " great_granddaughter_of(C, A) :- granddaughter_of(B, A), daughter_of(C, B).",
        },
    },
    "logic": {
        "instance": InstanceSpec(
            id="replay-logic",
            task_mode="logic",
            context=["Bob is furry.", "Bob is big.", "Gary is kind."],
            rules=[
                Statement("If something is furry and big then it is not quiet."),
                Statement("All things that are not quiet are rough."),
            ],
            query="Is it true that Bob is rough?",
            gold="true",
            declared_depth=2,
        ),
        "init": {
            "Bob is furry.": " furry(Bob)",
            "Bob is big.": " big(Bob)",
            "Gary is kind.": " kind(Gary)",
            "If something is furry and big then it is not quiet.": " not_quiet(X) :- furry(X), big(X)",
            "All things that are not quiet are rough.": " rough(X) :- not_quiet(X)",
        },
    },
    "constraint": {
        "instance": InstanceSpec(
            id="replay-constraint",
            task_mode="constraint",
            background=BACKGROUND,
            rules=[
                Statement("Tuesday is the only day on which George can give a report."),
                Statement("Neither Olivia nor Robert can give an afternoon report."),
            ],
            query="Which one of the following could be the afternoon reports on Monday and Tuesday, respectively?",
            options=[
                Option("A", "A) George, Helen"),
                Option("B", "B) Helen, George"),
                Option("C", "C) Helen, Robert"),
            ],
            gold="B",
        ),
        "init": {
            "Tuesday is the only day on which George can give a report.":
                "\n- constraint(George, Tuesday) :- assign(George, D, S)",
            "Neither Olivia nor Robert can give an afternoon report.":
                "\n- constraint(Olivia, morning) :- assign(Olivia, D, S)"
                "\n- constraint(Robert, morning) :- assign(Robert, D, S)",
            "A) George, Helen":
                "\n- George gives report on Monday afternoon. [assign(George, Monday, afternoon)]"
                "\n- Helen gives report on Tuesday afternoon. [assign(Helen, Tuesday, afternoon)]",
            "B) Helen, George":
                "\n- Helen gives report on Monday afternoon. [assign(Helen, Monday, afternoon)]"
                "\n- George gives report on Tuesday afternoon. [assign(George, Tuesday, afternoon)]",
            "C) Helen, Robert":
                "\n- Helen gives report on Monday afternoon. [assign(Helen, Monday, afternoon)]"
                "\n- Robert gives report on Tuesday afternoon. [assign(Robert, Tuesday, afternoon)]",
        },
        # (option text, rule text) -> conflict
        "conflicts": {
            ("A) George, Helen", "Tuesday is the only day on which George can give a report."): True,
            ("C) Helen, Robert", "Neither Olivia nor Robert can give an afternoon report."): True,
        },
    },
    "state_tracking": {
        "instance": InstanceSpec(
            id="replay-boxes",
            task_mode="state_tracking",
            context=[
                "Box 0 contains the rose.",
                "Box 1 contains nothing.",
                "Box 2 contains the letter and the book.",
            ],
            operations=[
                Statement("Put the shoe into Box 1."),
                Statement("Move the contents of Box 2 to Box 0."),
                Statement("Remove the rose from Box 0."),
            ],
            query="What does Box 0 contain?",
            gold="the letter and the book",
        ),
        "init": {
            "Box 0 contains the rose.": " contains(Box 0, the rose)",
            "Box 1 contains nothing.": " contains(Box 1, nothing)",
            "Box 2 contains the letter and the book.": " contains(Box 2, the letter, the book)",
            "Put the shoe into Box 1.": " put_into(the shoe, Box 1)",
            "Move the contents of Box 2 to Box 0.": " move_from_to(the contents, Box 2, Box 0)",
            "Remove the rose from Box 0.": " remove_from(the rose, Box 0)",
        },
    },
    # The rules cannot reach the queried pair, so the loop stops at its
    # fixpoint and the scratchpad fallback answers.
    "backup": {
        "instance": InstanceSpec(
            id="replay-backup",
            task_mode="kinship",
            facts=[
                Statement("Hugh is the brother of Wesley.", "brother_of(Hugh, Wesley)"),
                Statement("Wesley is the father of Irvin.", "father_of(Wesley, Irvin)"),
            ],
            rules=[
                Statement(
                    "If B is the brother of A, and C is the son of B, then C is the nephew of A.",
                    "nephew_of(C, A):-brother_of(B, A), son_of(C, B)",
                ),
            ],
            query="How is Hugh related to Irvin?",
            gold="uncle",
            declared_depth=2,
        ),
        "init": {},
        "backup": (
            " Wesley is the father of Irvin, so Irvin is the son of Wesley. Hugh is the brother of Wesley, "
            "and the brother of a parent is an uncle. So Hugh is the uncle of Irvin.\nAnswer: uncle"
        ),
    },
}


def _last_field(user: str, label: str) -> str | None:
    tail = user.rsplit("### Here's what you need to do.", 1)[-1]
    value = None
    for line in tail.splitlines():
        if line.startswith(label + ":"):
            value = line[len(label) + 1:].strip()
    return value


class Responder:
    def __init__(self, fixture: dict):
        self.fixture = fixture
        self.pending: str | None = None

    def __call__(self, user: str) -> str:
        if self.pending is not None:
            text, self.pending = self.pending, None
            return text
        if user.rstrip().endswith("Scratchpad:"):
            return self.fixture["backup"]
        for label in ("Option", "Constraint Rule", "Rule", "Context"):
            key = _last_field(user, label)
            if key is not None and key in self.fixture["init"]:
                return self.fixture["init"][key]
        raise KeyError(f"no canned response for prompt ending {user[-200:]!r}")


def _judge(request: ImplementationRequest, atom: Atom) -> bool:
    inst_query = parse_query(InstanceSpec(
        id="q", task_mode=request.task_kind, query=request.query, facts=[],
    ))
    if request.task_kind == "kinship":
        return {t.name for t in atom.args} == set(inst_query.args)
    target = (inst_query.predicate, inst_query.args)
    got = (atom.predicate, tuple(t.name for t in atom.args))
    negated = (complement_predicate(atom.predicate), got[1])
    return target in (got, negated)


def render_implementation(request: ImplementationRequest, fixture: dict) -> str:
    kind = request.task_kind
    if kind == "constraint":
        conflict = fixture["conflicts"].get((request.option, request.rule.text), False)
        if conflict:
            return (" According to the rule and the facts of this option, there is a conflict."
                    "\nJudgement: Yes.")
        return (" According to the rule and the facts of this option, there is no conflict "
                "and no further assignment follows.\nJudgement: No.")
    result = SymbolicImplementer().implement(request)
    if kind == "state_tracking":
        summary = ", and ".join(nl.rstrip(".") for _, nl in result.new_facts)
        lines = [f" Based on the rule, after the operation, we can infer that {summary}.", "New facts:"]
        lines += [f"{nl} [{render(atom)}]" for atom, nl in result.new_facts]
        return "\n".join(lines)
    atom, nl = result.new_facts[0]
    support = ", and ".join(f.text.rstrip(".") for f in request.facts)
    verdict = "Yes" if _judge(request, atom) else "No"
    because = "states" if verdict == "Yes" else "does not state"
    return (
        f" According to the rule, since {support}, we can infer that {nl}"
        f"\nNew fact: {nl} [{render(atom)}]"
        f"\nJudgement: {verdict}. Because the new fact {because} what the query asks."
    )


class AuthoringImplementer(LLMImplementer):
    def __init__(self, gateway: Gateway, responder: Responder, fixture: dict):
        super().__init__(gateway)
        self.responder = responder
        self.fixture = fixture

    def implement(self, request):
        self.responder.pending = render_implementation(request, self.fixture)
        return super().implement(request)


def author(name: str, fixture: dict) -> None:
    inst: InstanceSpec = fixture["instance"]
    cassette = OUT / f"{name}.cassette.jsonl"
    if cassette.exists():
        cassette.unlink()
    responder = Responder(fixture)

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        user = body["messages"][-1]["content"]
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": responder(user)}}]})

    gateway = Gateway(
        GatewayConfig(mode="record", cassette=cassette, max_retries=0),
        client=httpx.Client(transport=httpx.MockTransport(handler)),
    )
    implementer = "symbolic" if name == "backup" else "llm"
    original = engine.make_implementer
    if implementer == "llm":
        engine.make_implementer = lambda cfg, gw: AuthoringImplementer(gw, responder, fixture)
    try:
        outcome = run(inst, EngineConfig(implementer=implementer), gateway)
    finally:
        engine.make_implementer = original
    dump_dataset([inst], OUT / f"{name}.jsonl")
    print(f"{name}: answer={outcome.answer!r} gold={inst.gold!r} steps={outcome.steps} "
          f"backup={outcome.used_backup} exchanges={gateway.live_calls}")
    if outcome.answer is None:
        sys.exit(f"{name}: authored run did not produce an answer")


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for name, fixture in FIXTURES.items():
        author(name, fixture)


if __name__ == "__main__":
    main()
