"""Task instances and the JSON Lines dataset format.

One instance per line::

    {"id": "k1", "task_mode": "kinship",
     "facts": [{"symbolic": "grandson_of(Don, James)", "text": "Don is the grandson of James."}],
     "rules": [{"symbolic": "granddaughter_of(C, A):-grandson_of(B, A), sister_of(C, B)",
                "text": "If B is the grandson of A, and C is sister of B, then C is the granddaughter of A."}],
     "query": "How is Lena related to James?", "gold": "granddaughter", "declared_depth": 2}

A statement may also be a bare string, read as its symbolic form. Raw
instances give ``context`` (a list of sentences or one string) instead of
``facts``, and rules with ``text`` only; those are formalised by the LLM.
Constraint instances carry ``options`` (``label``, ``text``, optional
``facts``) plus ``background`` and ``polarity``. State-tracking instances carry
``operations``.
"""
from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from typing import Any, Iterable

from .terms import ParseError, parse_atom, parse_rule

TASK_MODES = ("kinship", "logic", "constraint", "state_tracking")


class FormatError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


@dataclass
class Statement:
    text: str = ""
    symbolic: str | None = None

    @classmethod
    def coerce(cls, value: Any) -> Statement:
        if isinstance(value, Statement):
            return value
        if isinstance(value, str):
            return cls(symbolic=value)
        if isinstance(value, dict):
            unknown = set(value) - {"text", "symbolic"}
            if unknown:
                raise ValueError(f"unknown statement field(s) {sorted(unknown)}")
            return cls(value.get("text", "") or "", value.get("symbolic"))
        raise ValueError(f"statement must be a string or object, got {type(value).__name__}")

    def to_dict(self) -> dict:
        out = {}
        if self.symbolic is not None:
            out["symbolic"] = self.symbolic
        if self.text:
            out["text"] = self.text
        return out


@dataclass
class Option:
    label: str
    text: str = ""
    facts: list[Statement] | None = None

    def to_dict(self) -> dict:
        out = {"label": self.label, "text": self.text}
        if self.facts is not None:
            out["facts"] = [s.to_dict() for s in self.facts]
        return out


@dataclass
class InstanceSpec:
    id: str
    task_mode: str
    query: str
    gold: str | None = None
    context: list[str] | None = None
    facts: list[Statement] | None = None
    rules: list[Statement] = field(default_factory=list)
    operations: list[Statement] = field(default_factory=list)
    options: list[Option] = field(default_factory=list)
    polarity: str = "positive"
    background: str = ""
    declared_depth: int | None = None
    query_atom: str | None = None

    def __post_init__(self):
        if self.task_mode == "state-tracking":
            self.task_mode = "state_tracking"
        if self.task_mode not in TASK_MODES:
            raise ValueError(f"unknown task_mode {self.task_mode!r}")
        if isinstance(self.context, str):
            self.context = split_sentences(self.context)
        if self.facts is not None:
            self.facts = [Statement.coerce(s) for s in self.facts]
        self.rules = [Statement.coerce(s) for s in self.rules]
        self.operations = [Statement.coerce(s) for s in self.operations]
        if self.task_mode != "constraint" and (self.context is None) == (self.facts is None):
            raise ValueError("give exactly one of 'context' (raw) or 'facts' (pre-parsed)")
        if self.task_mode == "constraint" and not self.options:
            raise ValueError("constraint instances need options")
        if self.task_mode == "state_tracking" and not self.operations:
            raise ValueError("state_tracking instances need operations")
        if self.polarity not in ("positive", "negative"):
            raise ValueError(f"polarity must be positive or negative, not {self.polarity!r}")
        if self.task_mode == "state_tracking" and self.declared_depth is None:
            self.declared_depth = len(self.operations)

    @property
    def is_raw(self) -> bool:
        if self.task_mode == "constraint":
            return any(o.facts is None for o in self.options)
        return self.context is not None

    @classmethod
    def from_dict(cls, data: dict) -> InstanceSpec:
        if not isinstance(data, dict):
            raise ValueError("record must be a JSON object")
        for key in ("id", "task_mode", "query"):
            if key not in data:
                raise ValueError(f"missing required field {key!r}")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown field(s) {sorted(unknown)}")
        kw = dict(data)
        kw["id"] = str(kw["id"])
        if kw.get("facts") is not None:
            kw["facts"] = [Statement.coerce(s) for s in kw["facts"]]
        kw["rules"] = [Statement.coerce(s) for s in kw.get("rules") or []]
        kw["operations"] = [Statement.coerce(s) for s in kw.get("operations") or []]
        options = []
        for o in kw.get("options") or []:
            if not isinstance(o, dict) or "label" not in o:
                raise ValueError("each option needs a label")
            facts = o.get("facts")
            options.append(
                Option(
                    str(o["label"]),
                    o.get("text", ""),
                    None if facts is None else [Statement.coerce(s) for s in facts],
                )
            )
        kw["options"] = options
        spec = cls(**kw)
        spec.validate_symbolic()
        return spec

    def validate_symbolic(self) -> None:
        """Parse every symbolic form once so bad records fail at load time."""
        try:
            for s in self.facts or []:
                if s.symbolic is None:
                    raise ValueError("pre-parsed facts need a symbolic form")
                parse_atom(s.symbolic, ground=True)
            for s in self.rules:
                if s.symbolic is not None:
                    parse_rule(s.symbolic)
                elif not s.text:
                    raise ValueError("a rule needs text or a symbolic form")
            for s in self.operations:
                if s.symbolic is not None:
                    parse_atom(s.symbolic, ground=True)
                elif not s.text:
                    raise ValueError("an operation needs text or a symbolic form")
            for o in self.options:
                for s in o.facts or []:
                    if s.symbolic is None:
                        raise ValueError("option facts need a symbolic form")
                    parse_atom(s.symbolic, ground=True)
            if self.query_atom:
                parse_atom(self.query_atom, ground=True)
        except ParseError as exc:
            raise ValueError(str(exc)) from exc

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"id": self.id, "task_mode": self.task_mode, "query": self.query}
        if self.gold is not None:
            out["gold"] = self.gold
        if self.context is not None:
            out["context"] = list(self.context)
        if self.facts is not None:
            out["facts"] = [s.to_dict() for s in self.facts]
        if self.rules:
            out["rules"] = [s.to_dict() for s in self.rules]
        if self.operations:
            out["operations"] = [s.to_dict() for s in self.operations]
        if self.options:
            out["options"] = [o.to_dict() for o in self.options]
        if self.task_mode == "constraint":
            out["polarity"] = self.polarity
        if self.background:
            out["background"] = self.background
        if self.declared_depth is not None:
            out["declared_depth"] = self.declared_depth
        if self.query_atom:
            out["query_atom"] = self.query_atom
        return out


_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+(?=\S)")


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_RE.split(text.strip()) if s.strip()]


def load_dataset(path: str | os.PathLike) -> list[InstanceSpec]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(lineno, f"invalid JSON ({exc.msg})") from exc
            try:
                out.append(InstanceSpec.from_dict(record))
            except (ValueError, TypeError) as exc:
                raise FormatError(lineno, str(exc)) from exc
    return out


def dump_dataset(instances: Iterable[InstanceSpec], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_dict(), ensure_ascii=False) + "\n")
