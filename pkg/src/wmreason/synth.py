"""Seeded synthetic instances.

Kinship chains of depth 2-6 with shuffled rules and distractor rules, and
box-operation instances. Gold answers come from a naive forward-chaining
fixpoint and a direct box simulation respectively; neither touches the
engine.
"""
from __future__ import annotations

import itertools
import random
from typing import Iterable

from .dataset import InstanceSpec, Option, Statement

PEOPLE = [
    "James", "Lena", "Don", "Joshua", "Dolores", "Thomas", "Hugh", "Wesley",
    "Frances", "Irvin", "Michelle", "Kevin", "Ashley", "Carlos", "Gabrielle",
    "Raquel", "Stephen", "Dorothy", "Kenneth", "Marie", "Allan", "Beverly",
    "Clarence", "Edna", "Floyd", "Gloria", "Harold", "Iris", "Jerome", "Karen",
]

BASE_RELATIONS = [
    "father_of", "mother_of", "son_of", "daughter_of", "brother_of",
    "sister_of", "husband_of", "wife_of",
]

DERIVED_RELATIONS = [
    "grandson_of", "granddaughter_of", "grandfather_of", "grandmother_of",
    "uncle_of", "aunt_of", "nephew_of", "niece_of", "cousin_of",
    "father_in_law_of", "mother_in_law_of", "son_in_law_of",
    "daughter_in_law_of", "brother_in_law_of", "sister_in_law_of",
    "great_grandson_of", "great_granddaughter_of", "great_uncle_of",
    "great_aunt_of", "step_son_of",
]

ITEMS = [
    "the rose", "the bread", "the radio", "the tape", "the letter", "the book",
    "the shoe", "the hat", "the coat", "the watch", "the map", "the key",
    "the cup", "the fan", "the drum", "the bell", "the pen", "the ring",
    "the plate", "the stone", "the glass", "the brick", "the sheet", "the milk",
]


def _words(pred: str) -> str:
    return pred[:-3].replace("_", "-") if pred.endswith("_of") else pred.replace("_", " ")


def _fact_text(pred: str, a: str, b: str) -> str:
    return f"{a} is the {_words(pred)} of {b}."


def _rule_text(head: str, p1: str, p2: str) -> str:
    return (
        f"If B is the {_words(p1)} of A, and C is the {_words(p2)} of B, "
        f"then C is the {_words(head)} of A."
    )


def _chain_rule(head: str, p1: str, p2: str) -> Statement:
    return Statement(_rule_text(head, p1, p2), f"{head}(C, A):-{p1}(B, A), {p2}(C, B)")


# A deliberately plain matcher, independent of the engine's unifier.
def naive_closure(facts: Iterable[tuple], rules: Iterable[tuple]) -> dict[tuple, int]:
    """Forward-chain to fixpoint by full re-evaluation each round.

    facts: tuples ``(pred, arg, ...)``. rules: ``(head, [premise, ...])`` with
    atoms as tuples whose variable arguments are strings starting with ``?``.
    Returns each derivable fact with the round it first appears in (0 = input).
    """
    depth = {f: 0 for f in facts}
    rules = list(rules)
    rnd = 0
    while True:
        rnd += 1
        known = list(depth)
        new = {}
        for head, body in rules:
            for combo in itertools.permutations(known, len(body)):
                env: dict[str, str] = {}
                ok = True
                for pat, fact in zip(body, combo):
                    if pat[0] != fact[0] or len(pat) != len(fact):
                        ok = False
                        break
                    for p, v in zip(pat[1:], fact[1:]):
                        if p.startswith("?"):
                            if env.setdefault(p, v) != v:
                                ok = False
                                break
                        elif p != v:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    continue
                derived = tuple([head[0]] + [env.get(a, a) if a.startswith("?") else a for a in head[1:]])
                if any(a.startswith("?") for a in derived[1:]):
                    continue
                if derived not in depth and derived not in new:
                    new[derived] = rnd
        if not new:
            return depth
        depth.update(new)


def _tuple_rule(head: str, p1: str, p2: str) -> tuple:
    return ((head, "?C", "?A"), [(p1, "?B", "?A"), (p2, "?C", "?B")])


def kinship_instance(rng: random.Random, depth: int, idx: int = 0, distractors: int = 2) -> InstanceSpec:
    """One chain needing exactly `depth` rule applications, plus distractor rules."""
    if not 1 <= depth <= 10:
        raise ValueError("depth must be in 1..10")
    n = depth + 1  # base edges
    for _ in range(1000):
        people = rng.sample(PEOPLE, n + 1 + 2)
        chain, extras = people[: n + 1], people[n + 1 :]
        base = [rng.choice(BASE_RELATIONS) for _ in range(n)]
        derived = rng.sample(DERIVED_RELATIONS, depth + distractors)
        heads, noise_heads = derived[:depth], derived[depth:]

        facts = [(base[k], chain[k + 1], chain[k]) for k in range(n)]
        rules = []
        acc = base[0]
        for k in range(1, n):
            rules.append((heads[k - 1], acc, base[k]))
            acc = heads[k - 1]
        for h in noise_heads:
            p1 = rng.choice(BASE_RELATIONS + heads)
            p2 = rng.choice(BASE_RELATIONS)
            rules.append((h, p1, p2))
        # One stray fact about people outside the chain.
        facts.append((rng.choice(BASE_RELATIONS), extras[0], rng.choice([extras[1], chain[0]])))

        closure = naive_closure(facts, [_tuple_rule(*r) for r in rules])
        target = (chain[-1], chain[0])
        answers = [f for f in closure if len(f) == 3 and (f[1], f[2]) == target]
        if len(answers) != 1 or answers[0][0] != acc or closure[answers[0]] != depth:
            continue
        if len(set(rules)) != len(rules):
            continue
        rng.shuffle(rules)
        rng.shuffle(facts)
        return InstanceSpec(
            id=f"kin-{idx:03d}-d{depth}",
            task_mode="kinship",
            query=f"How is {chain[-1]} related to {chain[0]}?",
            gold=acc[:-3] if acc.endswith("_of") else acc,
            facts=[Statement(_fact_text(p, a, b), f"{p}({a}, {b})") for p, a, b in facts],
            rules=[_chain_rule(*r) for r in rules],
            declared_depth=depth,
        )
    raise RuntimeError("could not generate an unambiguous kinship chain")


def kinship_suite(n: int = 20, seed: int = 0, depths: Iterable[int] = (2, 3, 4, 5, 6)) -> list[InstanceSpec]:
    rng = random.Random(seed)
    depths = list(depths)
    return [kinship_instance(rng, depths[i % len(depths)], i) for i in range(n)]


def simulate_boxes(state: dict[str, list[str]], ops: list[tuple]) -> dict[str, list[str]]:
    """Apply ('put', items, box) / ('remove', items, box) / ('move', items|None, src, dst)."""
    boxes = {k: list(v) for k, v in state.items()}
    for op in ops:
        kind = op[0]
        if kind == "put":
            box = boxes.setdefault(op[2], [])
            box.extend(i for i in op[1] if i not in box)
        elif kind == "remove":
            box = boxes.setdefault(op[2], [])
            for i in op[1]:
                if i in box:
                    box.remove(i)
        elif kind == "move":
            src, dst = boxes.setdefault(op[2], []), boxes.setdefault(op[3], [])
            moving = list(src) if op[1] is None else list(op[1])
            for i in moving:
                if i in src:
                    src.remove(i)
                if i not in dst:
                    dst.append(i)
        else:
            raise ValueError(kind)
    return boxes


def _items_text(items: list[str]) -> str:
    return " and ".join(items) if items else "nothing"


def boxes_instance(rng: random.Random, n_ops: int = 7, idx: int = 0, n_boxes: int = 5) -> tuple[InstanceSpec, list[tuple], dict]:
    """Returns the instance, its structured operations and the initial state."""
    boxes = [f"Box {i}" for i in range(n_boxes)]
    pool = list(ITEMS)
    rng.shuffle(pool)
    state = {}
    for b in boxes:
        k = rng.choice([0, 1, 1, 2])
        state[b] = [pool.pop() for _ in range(k)]

    ops: list[tuple] = []
    cur = {k: list(v) for k, v in state.items()}
    while len(ops) < n_ops:
        kind = rng.choice(["put", "remove", "move", "move"])
        full = [b for b in boxes if cur[b]]
        if kind == "put" and pool:
            items = [pool.pop() for _ in range(rng.choice([1, 1, 2]))]
            op = ("put", items, rng.choice(boxes))
        elif kind == "remove" and full:
            b = rng.choice(full)
            items = rng.sample(cur[b], rng.randint(1, min(2, len(cur[b]))))
            op = ("remove", items, b)
        elif kind == "move" and full:
            src = rng.choice(full)
            dst = rng.choice([b for b in boxes if b != src])
            if rng.random() < 0.6:
                op = ("move", None, src, dst)
            else:
                op = ("move", rng.sample(cur[src], 1), src, dst)
        else:
            continue
        ops.append(op)
        cur = simulate_boxes(cur, [op])

    statements = []
    for op in ops:
        if op[0] == "put":
            statements.append(Statement(
                f"Put {_items_text(op[1])} into {op[2]}.",
                f"put_into({', '.join(op[1])}, {op[2]})",
            ))
        elif op[0] == "remove":
            statements.append(Statement(
                f"Remove {_items_text(op[1])} from {op[2]}.",
                f"remove_from({', '.join(op[1])}, {op[2]})",
            ))
        else:
            what = "the contents" if op[1] is None else _items_text(op[1])
            args = "the contents" if op[1] is None else ", ".join(op[1])
            statements.append(Statement(
                f"Move {what} of {op[2]} to {op[3]}." if op[1] is None else f"Move {what} from {op[2]} to {op[3]}.",
                f"move_from_to({args}, {op[2]}, {op[3]})",
            ))

    facts = [
        Statement(f"{b} contains {_items_text(items)}.", f"contains({b}, {', '.join(items) or 'nothing'})")
        for b, items in state.items()
    ]
    touched = [op[-1] for op in ops]
    qbox = rng.choice(touched)
    inst = InstanceSpec(
        id=f"box-{idx:03d}",
        task_mode="state_tracking",
        query=f"What does {qbox} contain?",
        gold=_items_text(cur[qbox]),
        facts=facts,
        operations=statements,
    )
    return inst, ops, state


def boxes_suite(n: int = 20, seed: int = 0, n_ops: int = 7) -> list[InstanceSpec]:
    rng = random.Random(seed)
    return [boxes_instance(rng, n_ops, i)[0] for i in range(n)]


def constraint_example() -> InstanceSpec:
    """A tiny scheduling puzzle with symbolic option facts (three options, one valid)."""
    rules = [
        Statement("Neither Olivia nor Robert can give an afternoon report.",
                  "not_assign(Olivia, D, afternoon):-assign(Olivia, D, afternoon)"),
        Statement("Robert cannot give an afternoon report.",
                  "not_assign(Robert, D, afternoon):-assign(Robert, D, afternoon)"),
        Statement("George can only give a report on Tuesday.",
                  "not_assign(George, Monday, S):-assign(George, Monday, S)"),
    ]

    def option(label, text, triples):
        return Option(label, text, [Statement(f"{p} gives a report on {d} {s}.", f"assign({p}, {d}, {s})")
                                    for p, d, s in triples])

    return InstanceSpec(
        id="lsat-toy",
        task_mode="constraint",
        query="Which one of the following could be the afternoon reports on Monday and Tuesday, respectively?",
        gold="B",
        background="Students give oral reports on Monday and Tuesday, one in the morning and one in the afternoon.",
        rules=rules,
        options=[
            option("A", "A) Olivia, George", [("Olivia", "Monday", "afternoon"), ("George", "Tuesday", "afternoon")]),
            option("B", "B) Helen, George", [("Helen", "Monday", "afternoon"), ("George", "Tuesday", "afternoon")]),
            option("C", "C) George, Robert", [("George", "Monday", "afternoon"), ("Robert", "Tuesday", "afternoon")]),
        ],
    )
