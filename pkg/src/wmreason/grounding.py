"""Symbolic rule grounding: predicate matching plus variable matching.

Three strategies share the same matching primitives:

* `ground_enumerate` for static reasoning (all fact tuples, all rules),
* `ground_rank_constraints` for constraint satisfaction (variable matching only),
* `ground_chronological` for state tracking (one operation per step).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Literal

from .memory import FactEntry, MemorySnapshot
from .terms import Atom, Substitution, Term, normalize_predicate, unify_atom

SemanticMatcher = Callable[[str, int, str, int], bool]

DEFAULT_APPROX_THRESHOLD = 0.85


@dataclass(frozen=True)
class MatchMode:
    kind: Literal["exact", "approximate", "semantic"] = "exact"
    threshold: float = DEFAULT_APPROX_THRESHOLD
    matcher: SemanticMatcher | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("exact", "approximate", "semantic"):
            raise ValueError(f"unknown match mode {self.kind!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.kind == "semantic" and self.matcher is None:
            raise ValueError("semantic matching needs a matcher hook")

    @classmethod
    def parse(cls, spec: str) -> MatchMode:
        """``exact`` or ``approx:<threshold>``."""
        if spec == "exact":
            return cls()
        if spec.startswith("approx"):
            _, _, t = spec.partition(":")
            return cls("approximate", float(t) if t else DEFAULT_APPROX_THRESHOLD)
        raise ValueError(f"unknown match mode {spec!r}")

    def __str__(self) -> str:
        if self.kind == "approximate":
            return f"approx:{self.threshold:g}"
        return self.kind


EXACT = MatchMode()


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity(a: str, b: str) -> float:
    """1 - distance / max length, on normalized names."""
    a, b = normalize_predicate(a), normalize_predicate(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return (longest - levenshtein(a, b)) / longest


def predicate_match(
    a: str, a_arity: int, b: str, b_arity: int, mode: MatchMode = EXACT
) -> bool:
    if mode.kind == "semantic":
        return mode.matcher(a, a_arity, b, b_arity)
    if a_arity != b_arity:
        return False
    if mode.kind == "exact":
        return normalize_predicate(a) == normalize_predicate(b)
    return similarity(a, b) >= mode.threshold


@dataclass(frozen=True)
class Grounding:
    rule_id: int
    fact_ids: tuple[int | None, ...]
    substitution: Substitution = field(hash=False)
    score: float | None = None
    # Extra context facts (state tracking): current states of the touched objects.
    state_fact_ids: tuple[int, ...] = ()

    @property
    def key(self) -> tuple[int, tuple[int | None, ...]]:
        return self.rule_id, self.fact_ids


def _sorted_rules(snapshot: MemorySnapshot):
    return sorted(snapshot.rules, key=lambda r: r.id)


def _sorted_facts(snapshot: MemorySnapshot) -> list[FactEntry]:
    return sorted(snapshot.facts, key=lambda f: f.id)


def ground_enumerate(
    snapshot: MemorySnapshot,
    novelty: Iterable[int] = (),
    mode: MatchMode = EXACT,
    limit: int | None = None,
) -> list[Grounding]:
    """Every (rule, distinct fact tuple) whose premises match without conflict.

    When `novelty` is non-empty, only tuples that use at least one of those
    fact ids survive. Output is ordered by rule id, then by fact-id tuple.
    """
    novel = frozenset(novelty)
    facts = _sorted_facts(snapshot)
    out: list[Grounding] = []

    for entry in _sorted_rules(snapshot):
        premises = entry.rule.premises
        # Candidate facts per premise, by predicate match only.
        candidates = [
            [
                f
                for f in facts
                if predicate_match(p.predicate, p.arity, f.atom.predicate, f.atom.arity, mode)
            ]
            for p in premises
        ]
        if any(not c for c in candidates):
            continue

        chosen: list[int] = []

        def extend(i: int, subst: Substitution) -> bool:
            if i == len(premises):
                if novel and novel.isdisjoint(chosen):
                    return False
                out.append(Grounding(entry.id, tuple(chosen), subst))
                return limit is not None and len(out) >= limit
            for f in candidates[i]:
                if f.id in chosen:
                    continue
                nxt = unify_atom(premises[i], f.atom, subst, check_predicate=False)
                if nxt is None:
                    continue
                chosen.append(f.id)
                stop = extend(i + 1, nxt)
                chosen.pop()
                if stop:
                    return True
            return False

        if extend(0, {}):
            break
    return out


def ground_rank_constraints(
    snapshot: MemorySnapshot, mode: MatchMode = EXACT
) -> list[Grounding]:
    """Score each rule by the fraction of its premises that variable-match.

    Predicates are ignored (constraint rules and option facts use different
    predicate vocabularies). A premise counts as covered when some active
    fact instantiates it; the search maximises the number of covered
    premises under one conflict-free substitution with distinct facts. A
    rule without variables scores 1.0. Sorted by score desc, then rule id.
    """
    facts = _sorted_facts(snapshot)
    ranked = []
    for entry in _sorted_rules(snapshot):
        rule = entry.rule
        premises = rule.premises
        best: tuple[int, tuple[int | None, ...], Substitution] = (
            0,
            (None,) * len(premises),
            {},
        )
        chosen: list[int | None] = []

        def search(i: int, subst: Substitution, covered: int) -> None:
            nonlocal best
            if covered + (len(premises) - i) <= best[0]:
                return
            if i == len(premises):
                best = (covered, tuple(chosen), subst)
                return
            for f in facts:
                if f.id in chosen:
                    continue
                nxt = unify_atom(premises[i], f.atom, subst, check_predicate=False)
                if nxt is None:
                    continue
                chosen.append(f.id)
                search(i + 1, nxt, covered + 1)
                chosen.pop()
            chosen.append(None)
            search(i + 1, subst, covered)
            chosen.pop()

        search(0, {}, 0)
        covered, fact_ids, subst = best
        score = 1.0 if not rule.variables() else covered / len(premises)
        ranked.append(Grounding(entry.id, fact_ids, subst, score))
    ranked.sort(key=lambda g: (-g.score, g.rule_id))
    return ranked


def fold_operation(op: Atom, arity: int) -> Atom | None:
    """Fit a variadic operation into a premise of smaller arity.

    ``remove_from(the radio, the tape, Box 4)`` against ``remove_from(X, A)``
    folds the leading surplus arguments into one object,
    ``the radio and the tape``.
    """
    if op.arity == arity:
        return op
    if op.arity < arity or arity == 0:
        return None
    surplus = op.arity - arity + 1
    head = " and ".join(t.name for t in op.args[:surplus])
    return Atom(op.predicate, (Term(head, False), *op.args[surplus:]))


def ground_chronological(
    snapshot: MemorySnapshot, op_fact: FactEntry, mode: MatchMode = EXACT
) -> Grounding | None:
    """Pick the rule that best explains one operational fact.

    A rule qualifies when one of its premises predicate-matches the operation
    and unifies with it (after folding variadic item lists). Among those, the
    rule whose premise matches the most object positions literally wins; ties
    go to the lower rule id. State facts are the active facts whose first
    argument is one of the operation's arguments or bound values.
    """
    best = None
    best_rank = None
    for entry in _sorted_rules(snapshot):
        for premise in entry.rule.premises:
            if mode.kind == "semantic":
                ok = mode.matcher(premise.predicate, premise.arity, op_fact.atom.predicate, op_fact.atom.arity)
            else:
                ok = predicate_match(
                    premise.predicate, 0, op_fact.atom.predicate, 0, mode
                )
            if not ok:
                continue
            folded = fold_operation(op_fact.atom, premise.arity)
            if folded is None:
                continue
            subst = unify_atom(premise, folded, {}, check_predicate=False)
            if subst is None:
                continue
            literal = sum(not t.is_var for t in premise.args)
            rank = (literal, -entry.id)
            if best_rank is None or rank > best_rank:
                best_rank = rank
                best = (entry.id, subst)
            break
    if best is None:
        return None

    rule_id, subst = best
    touched = {t.name for t in op_fact.atom.args} | set(subst.values())
    state_ids = tuple(
        f.id
        for f in _sorted_facts(snapshot)
        if f.atom.args and f.atom.args[0].name in touched
    )
    return Grounding(rule_id, (op_fact.id,), subst, None, state_ids)
