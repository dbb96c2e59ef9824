"""Rule implementation: turn a grounded rule into new facts.

Two implementers share one call shape, ``implement(request) -> ImplementationResult``:
`SymbolicImplementer` (deterministic substitution, plus a small effect
interpreter for state tracking) and `LLMImplementer` (prompt, complete, parse).
Implementers never touch memory; the engine commits their results.
"""
from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .gateway import Gateway
from .grounding import Grounding
from .memory import FactEntry, RuleEntry
from .prompts import PromptText, build_prompt, canonical_task_kind
from .terms import Atom, ParseError, Rule, Term, apply_substitution, parse_atom, render

log = logging.getLogger(__name__)

NOTHING = "nothing"
STATE_PREDICATE = "contains"


class UncoveredConclusionVariable(ValueError):
    pass


class Judgement(str, enum.Enum):
    SOLVES_QUERY = "solves_query"
    NOT_SOLVED = "not_solved"
    CONFLICT = "conflict"
    NONE = "none"


@dataclass
class ImplementationResult:
    new_facts: list[tuple[Atom, str]] = field(default_factory=list)
    judgement: Judgement = Judgement.NONE
    raw: str | None = None
    skipped: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class ImplementationRequest:
    task_kind: str
    grounding: Grounding
    rule: RuleEntry
    facts: tuple[FactEntry, ...] = ()
    query: str = ""
    objects: tuple[str, ...] = ()
    predicates: tuple[str, ...] = ()
    context: str = ""
    option: str = ""
    state_facts: tuple[FactEntry, ...] = ()
    op_fact: FactEntry | None = None


class Implementer(Protocol):
    def implement(self, request: ImplementationRequest) -> ImplementationResult: ...


# -- natural-language rendering of derived facts ---------------------------


def _sentence(text: str) -> str:
    text = text.strip()
    return text if text.endswith((".", "!", "?")) else text + "."


def join_items(items: Sequence[str]) -> str:
    return " and ".join(items) if items else NOTHING


def verbalize(atom: Atom) -> str:
    """Plain English for an atom; falls back to the symbolic form."""
    p, args = atom.predicate, [t.name for t in atom.args]
    if p == STATE_PREDICATE and args:
        return f"{args[0]} contains {join_items([a for a in args[1:] if a != NOTHING])}."
    words = p.replace("_", " ")
    if len(args) == 2 and p.endswith("_of"):
        return f"{args[0]} is the {words[:-3]} of {args[1]}."
    if len(args) == 1:
        if p.startswith("not_"):
            return f"{args[0]} is not {words[4:]}."
        return f"{args[0]} is {words}."
    if len(args) == 2:
        return f"{args[0]} {words} {args[1]}."
    return render(atom) + "."


# -- symbolic implementation -----------------------------------------------


def symbolic_implement(
    grounding: Grounding, rule: Rule, facts: Sequence[FactEntry] = ()
) -> ImplementationResult:
    """Instantiate the rule's conclusion under the grounding's substitution."""
    missing = [v for v in rule.conclusion.variables() if v not in grounding.substitution]
    if missing:
        raise UncoveredConclusionVariable(
            f"{render(rule)}: conclusion variable(s) {', '.join(missing)} unbound"
        )
    atom = apply_substitution(rule.conclusion, grounding.substitution)
    return ImplementationResult([(atom, verbalize(atom))], Judgement.NONE)


def _split_items(name: str) -> list[str]:
    return [part.strip() for part in name.split(" and ") if part.strip()]


def _box_contents(state_facts: Sequence[FactEntry]) -> dict[str, list[str]]:
    boxes: dict[str, list[str]] = {}
    for f in state_facts:
        if f.atom.predicate == STATE_PREDICATE and f.atom.args:
            items = [t.name for t in f.atom.args[1:] if t.name != NOTHING]
            boxes[f.atom.args[0].name] = items
    return boxes


def _expand(items_arg: str, source: list[str]) -> list[str]:
    if items_arg in ("the contents", "contents"):
        return list(source)
    return _split_items(items_arg)


def symbolic_state_implement(
    grounding: Grounding, rule: Rule, state_facts: Sequence[FactEntry]
) -> ImplementationResult:
    """Apply one state-changing rule to the current box states.

    The grounded conclusion names the effect:
      contains(Box, X)        X is now also in Box
      not_contains(Box, X)    X is no longer in Box
      transfer(X, From, To)   X leaves From and enters To
    ``X`` may be ``the contents`` (everything in the source box) or an
    ``a and b`` item list. One ``contains`` fact is emitted per touched box.
    """
    res = symbolic_implement(grounding, rule)
    conclusion = res.new_facts[0][0]
    args = [t.name for t in conclusion.args]
    boxes = _box_contents(state_facts)
    touched: dict[str, list[str]] = {}

    def current(box: str) -> list[str]:
        if box not in touched:
            touched[box] = list(boxes.get(box, []))
        return touched[box]

    effect = conclusion.predicate
    if effect == STATE_PREDICATE and len(args) >= 2:
        box = current(args[0])
        for a in args[1:]:
            for item in _expand(a, []):
                if item != NOTHING and item not in box:
                    box.append(item)
    elif effect == "not_" + STATE_PREDICATE and len(args) >= 2:
        box = current(args[0])
        for a in args[1:]:
            for item in _expand(a, box):
                if item in box:
                    box.remove(item)
    elif effect == "transfer" and len(args) == 3:
        src, dst = current(args[1]), current(args[2])
        for item in _expand(args[0], src):
            if item in src:
                src.remove(item)
            if item not in dst:
                dst.append(item)
    else:
        return ImplementationResult(raw=f"unsupported state effect {render(conclusion)}")

    out = []
    for box, items in touched.items():
        atom = Atom(
            STATE_PREDICATE,
            (Term(box, False), *(Term(i, False) for i in (items or [NOTHING]))),
        )
        out.append((atom, verbalize(atom)))
    return ImplementationResult(out, Judgement.NONE)


class SymbolicImplementer:
    def implement(self, request: ImplementationRequest) -> ImplementationResult:
        rule = request.rule.rule
        if canonical_task_kind(request.task_kind) == "state_tracking":
            return symbolic_state_implement(request.grounding, rule, request.state_facts)
        return symbolic_implement(request.grounding, rule, request.facts)


# -- LLM implementation ----------------------------------------------------


def format_fact_list(task_kind: str, facts: Sequence[FactEntry], option: str = "") -> str:
    kind = canonical_task_kind(task_kind)
    if kind == "constraint":
        lines = [f"- {option}"] if option else []
        lines += [f"- {_sentence(f.text)}" for f in facts if f.step is not None]
        return "\n" + "\n".join(lines) if lines else ""
    return " ".join(f"{f.id}. {_sentence(f.text)}" for f in facts)


def build_implementation_prompt(request: ImplementationRequest) -> PromptText:
    kind = canonical_task_kind(request.task_kind)
    rule_text = request.rule.text or render(request.rule.rule)
    common = dict(
        objects=request.objects,
        predicates=request.predicates,
        query=request.query,
        rule=rule_text,
    )
    if kind == "state_tracking":
        return build_prompt(
            kind,
            "implement",
            state_facts=" ".join(_sentence(f.text) for f in request.state_facts),
            op_facts=_sentence(request.op_fact.text) if request.op_fact else "",
            **common,
        )
    return build_prompt(
        kind,
        "implement",
        facts=format_fact_list(kind, request.facts, request.option),
        context=request.context,
        **common,
    )


_MARKER_RE = re.compile(r"^\s*(?:-\s*)?New facts?\s*:\s*(.*)$", re.I)
_JUDGE_RE = re.compile(r"^\s*Judgement\s*:\s*(.*)$", re.I)
_HEADER_RE = re.compile(r"^\s*(Rule Implementation|Judgement|New facts?)\s*:", re.I)


def split_bracketed(line: str) -> tuple[str, str] | None:
    """Return (text before, content of the last ``[...]`` segment)."""
    end = line.rfind("]")
    if end < 0:
        return None
    start = line.rfind("[", 0, end)
    if start < 0:
        return None
    return line[:start].strip(), line[start + 1 : end].strip()


def parse_implementation_response(text: str, task_kind: str) -> ImplementationResult:
    """Total parser: never raises; unparseable fact lines land in `skipped`."""
    kind = canonical_task_kind(task_kind)
    result = ImplementationResult(raw=text)
    lines = (text or "").splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        judged = _JUDGE_RE.match(line)
        if judged:
            word = judged.group(1).strip().lower()
            if word.startswith("yes"):
                result.judgement = Judgement.CONFLICT if kind == "constraint" else Judgement.SOLVES_QUERY
            elif word.startswith("no"):
                result.judgement = Judgement.NOT_SOLVED
            i += 1
            continue
        marker = _MARKER_RE.match(line)
        if not marker:
            i += 1
            continue
        candidates = [marker.group(1)] if marker.group(1).strip() else []
        i += 1
        while i < len(lines) and not _HEADER_RE.match(lines[i]):
            if lines[i].strip().startswith(("------", "###")):
                break
            if lines[i].strip():
                candidates.append(lines[i])
            i += 1
        for cand in candidates:
            parts = split_bracketed(cand)
            if parts is None:
                result.skipped.append(cand)
                continue
            nl, symbolic = parts
            try:
                atom = parse_atom(symbolic, ground=True)
            except ParseError:
                result.skipped.append(cand)
                continue
            nl = nl.lstrip("-").strip() or verbalize(atom)
            result.new_facts.append((atom, nl))
    return result


class LLMImplementer:
    def __init__(self, gateway: Gateway):
        self.gateway = gateway

    def implement(self, request: ImplementationRequest) -> ImplementationResult:
        prompt = build_implementation_prompt(request)
        text = self.gateway.complete(prompt.system, prompt.user)
        result = parse_implementation_response(text, request.task_kind)
        if result.skipped:
            log.info("dropped %d unparseable fact line(s)", len(result.skipped))
        return result


def llm_implement(request: ImplementationRequest, gateway: Gateway) -> ImplementationResult:
    return LLMImplementer(gateway).implement(request)
