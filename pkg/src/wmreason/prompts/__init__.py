"""Prompt template registry.

One text file per (task kind, stage). A template may open with a
``System:`` paragraph followed by ``User:``; otherwise it is all user text.
Slots are literal ``{name}`` markers (``{state facts}`` contains a space, so
``str.format`` is not used).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

TASK_KINDS = ("kinship", "logic", "constraint", "state_tracking")

STAGES = {
    "kinship": ("fact_init", "rule_init", "implement", "backup"),
    "logic": ("fact_init", "rule_init", "implement", "backup"),
    "constraint": ("fact_init", "rule_init", "implement", "backup"),
    "state_tracking": ("fact_init", "op_init", "implement", "backup"),
}

SLOTS = (
    "objects",
    "predicates",
    "query",
    "facts",
    "rule",
    "context",
    "option",
    "state facts",
    "op facts",
)


class UnknownTaskKind(ValueError):
    pass


@dataclass(frozen=True)
class PromptText:
    system: str
    user: str


def canonical_task_kind(kind: str) -> str:
    k = kind.replace("-", "_").lower()
    if k not in TASK_KINDS:
        raise UnknownTaskKind(kind)
    return k


@lru_cache(maxsize=None)
def load_template(task_kind: str, stage: str) -> str:
    kind = canonical_task_kind(task_kind)
    if stage not in STAGES[kind]:
        raise ValueError(f"no {stage!r} template for {kind}")
    name = "backup.txt" if stage == "backup" else f"{kind}_{stage}.txt"
    return resources.files(__package__).joinpath(name).read_text(encoding="utf-8")


def _split_roles(text: str) -> PromptText:
    if text.startswith("System: "):
        head, sep, tail = text.partition("\n\nUser: ")
        if sep:
            return PromptText(head[len("System: "):], tail)
    return PromptText("", text)


_SLOT_RE = re.compile("{(" + "|".join(re.escape(s) for s in SLOTS) + ")}")


def fill(template: str, slots: dict[str, str]) -> str:
    # Single pass, so slot values containing "{rule}" etc. stay literal.
    return _SLOT_RE.sub(lambda m: slots.get(m.group(1), ""), template)


def schema_line(items) -> str:
    items = list(items)
    return ", ".join(items) if items else "null"


def build_prompt(
    task_kind: str,
    stage: str = "implement",
    *,
    objects=(),
    predicates=(),
    query: str = "",
    facts: str = "",
    rule: str = "",
    context: str = "",
    option: str = "",
    state_facts: str = "",
    op_facts: str = "",
) -> PromptText:
    """Instantiate a template. Pure: identical inputs give identical text."""
    template = load_template(task_kind, stage)
    slots = {
        "objects": schema_line(objects),
        "predicates": schema_line(predicates),
        "query": query,
        "facts": facts,
        "rule": rule,
        "context": context,
        "option": option,
        "state facts": state_facts,
        "op facts": op_facts,
    }
    # Split roles before filling so slot text can never act as a role header.
    parts = _split_roles(template)
    return PromptText(fill(parts.system, slots), fill(parts.user, slots))
