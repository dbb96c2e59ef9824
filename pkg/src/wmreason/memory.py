"""Working memory: fact base, rule base and memory schema.

Every entry carries both its symbolic form and its natural-language text.
Facts are never deleted; an update deactivates the superseded entry so the
trace can still show it.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Literal, Mapping

from .terms import (
    Atom,
    Rule,
    Term,
    canonical_rule_key,
    normalize_object,
    normalize_predicate,
    render,
)

UpdateMode = Literal["additive", "stateful"]


class NonGroundFact(ValueError):
    pass


@dataclass(frozen=True)
class FactEntry:
    id: int
    atom: Atom
    text: str = ""
    step: int | None = None  # None for facts that came from the input
    active: bool = True

    @property
    def origin(self) -> str:
        return "input" if self.step is None else f"inferred:{self.step}"


@dataclass(frozen=True)
class RuleEntry:
    id: int
    rule: Rule
    text: str = ""


@dataclass
class MemorySchema:
    """Canonical vocabulary. Insertion order is kept for prompt rendering."""

    predicates: dict[str, set[int]] = field(default_factory=dict)
    objects: dict[str, None] = field(default_factory=dict)

    def resolve_predicate(self, name: str, arity: int | None = None) -> str:
        canon = normalize_predicate(name)
        arities = self.predicates.setdefault(canon, set())
        if arity is not None:
            arities.add(arity)
        return canon

    def resolve_object(self, name: str) -> str:
        canon = normalize_object(name)
        self.objects.setdefault(canon)
        return canon

    def resolve_atom(self, atom: Atom) -> Atom:
        pred = self.resolve_predicate(atom.predicate, atom.arity)
        args = tuple(
            t if t.is_var else Term(self.resolve_object(t.name), False)
            for t in atom.args
        )
        return Atom(pred, args)

    def covers(self, atom: Atom) -> bool:
        return atom.predicate in self.predicates and all(
            t.is_var or t.name in self.objects for t in atom.args
        )

    def copy(self) -> MemorySchema:
        return MemorySchema(
            {k: set(v) for k, v in self.predicates.items()}, dict(self.objects)
        )


def schema_resolve(name: str, kind: Literal["predicate", "object"], schema: MemorySchema) -> str:
    """Return the canonical symbol for `name`, inserting it when new."""
    if not name.strip():
        raise ValueError("empty symbol name")
    if kind == "predicate":
        return schema.resolve_predicate(name)
    if kind == "object":
        return schema.resolve_object(name)
    raise ValueError(f"unknown symbol kind {kind!r}")


@dataclass(frozen=True)
class WriteOutcome:
    status: Literal["added", "updated", "duplicate"]
    fact_id: int
    superseded: int | None = None


@dataclass(frozen=True)
class MemorySnapshot:
    """Read-only view of the active facts, the rules and the schema."""

    facts: tuple[FactEntry, ...]
    rules: tuple[RuleEntry, ...]
    operations: tuple[FactEntry, ...]
    predicates: Mapping[str, frozenset[int]]
    objects: tuple[str, ...]
    update_mode: UpdateMode = "additive"

    def fact(self, fact_id: int) -> FactEntry:
        for f in self.facts:
            if f.id == fact_id:
                return f
        for f in self.operations:
            if f.id == fact_id:
                return f
        raise KeyError(fact_id)

    def rule(self, rule_id: int) -> RuleEntry:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)


def _conflict_key(atom: Atom) -> tuple[str, str | None]:
    return atom.predicate, (atom.args[0].name if atom.args else None)


class WorkingMemory:
    """Single-writer store. Readers take a `snapshot()`."""

    def __init__(self, update_mode: UpdateMode = "additive"):
        if update_mode not in ("additive", "stateful"):
            raise ValueError(f"unknown update mode {update_mode!r}")
        self.update_mode: UpdateMode = update_mode
        self.schema = MemorySchema()
        self._facts: dict[int, FactEntry] = {}
        self._rules: dict[int, RuleEntry] = {}
        self._operations: list[FactEntry] = []
        self._active_by_atom: dict[Atom, int] = {}
        self._active_by_key: dict[tuple[str, str | None], int] = {}
        self._rule_keys: dict[str, int] = {}
        self._next_fact = 1
        self._next_rule = 1
        # Rules whose conclusion has a variable no premise binds.
        self.flagged_rules: list[int] = []

    # -- writes -----------------------------------------------------------

    def _new_fact_id(self) -> int:
        i = self._next_fact
        self._next_fact += 1
        return i

    def write_fact(self, atom: Atom, text: str = "", step: int | None = None) -> WriteOutcome:
        if not atom.is_ground:
            raise NonGroundFact(render(atom))
        atom = self.schema.resolve_atom(atom)
        existing = self._active_by_atom.get(atom)
        if existing is not None:
            return WriteOutcome("duplicate", existing)

        superseded = None
        if self.update_mode == "stateful":
            key = _conflict_key(atom)
            old_id = self._active_by_key.get(key)
            if old_id is not None:
                old = self._facts[old_id]
                self._facts[old_id] = dataclasses.replace(old, active=False)
                del self._active_by_atom[old.atom]
                superseded = old_id

        fid = self._new_fact_id()
        entry = FactEntry(fid, atom, text or render(atom), step)
        self._facts[fid] = entry
        self._active_by_atom[atom] = fid
        if self.update_mode == "stateful":
            self._active_by_key[_conflict_key(atom)] = fid
        if superseded is not None:
            return WriteOutcome("updated", fid, superseded)
        return WriteOutcome("added", fid)

    def write_rule(self, rule: Rule, text: str = "") -> int:
        """Store a rule once per alpha-equivalence class; returns its id."""
        conclusion = self.schema.resolve_atom(rule.conclusion)
        premises = tuple(self.schema.resolve_atom(p) for p in rule.premises)
        key = canonical_rule_key(Rule(conclusion, premises))
        if key in self._rule_keys:
            return self._rule_keys[key]
        rid = self._next_rule
        self._next_rule += 1
        text = text or rule.text or render(rule)
        stored = Rule(conclusion, premises, id=rid, text=text)
        self._rules[rid] = RuleEntry(rid, stored, text)
        self._rule_keys[key] = rid
        if not stored.is_range_restricted:
            self.flagged_rules.append(rid)
        return rid

    def write_operation(self, atom: Atom, text: str = "") -> int:
        """Queue an operational fact (state tracking). Operations live outside the fact base."""
        if not atom.is_ground:
            raise NonGroundFact(render(atom))
        atom = self.schema.resolve_atom(atom)
        fid = self._new_fact_id()
        self._operations.append(FactEntry(fid, atom, text or render(atom)))
        return fid

    # -- reads ------------------------------------------------------------

    def active_facts(self) -> list[FactEntry]:
        return [f for f in self._facts.values() if f.active]

    def all_facts(self) -> list[FactEntry]:
        return list(self._facts.values())

    def fact(self, fact_id: int) -> FactEntry:
        if fact_id in self._facts:
            return self._facts[fact_id]
        for op in self._operations:
            if op.id == fact_id:
                return op
        raise KeyError(fact_id)

    @property
    def rules(self) -> list[RuleEntry]:
        return list(self._rules.values())

    @property
    def operations(self) -> list[FactEntry]:
        return list(self._operations)

    def find_active(self, atom: Atom) -> FactEntry | None:
        fid = self._active_by_atom.get(atom)
        return None if fid is None else self._facts[fid]

    def snapshot(self) -> MemorySnapshot:
        return MemorySnapshot(
            facts=tuple(self.active_facts()),
            rules=tuple(self._rules.values()),
            operations=tuple(self._operations),
            predicates=MappingProxyType(
                {k: frozenset(v) for k, v in self.schema.predicates.items()}
            ),
            objects=tuple(self.schema.objects),
            update_mode=self.update_mode,
        )

    def dump(self) -> str:
        """Line-oriented text dump used by the trace viewer."""
        lines = []
        for f in self._facts.values():
            lines.append(
                f"F {f.id} {int(f.active)} {f.origin} | {render(f.atom)} | {f.text}"
            )
        for op in self._operations:
            lines.append(f"F {op.id} 1 operation | {render(op.atom)} | {op.text}")
        for r in self._rules.values():
            lines.append(f"R {r.id} | {render(r.rule)} | {r.text}")
        lines.append("S predicates: " + ", ".join(self.schema.predicates))
        lines.append("S objects: " + ", ".join(self.schema.objects))
        return "\n".join(lines)
