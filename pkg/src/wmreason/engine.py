"""The ground-then-implement loop.

Task modes fix the memory regime and grounding strategy together:

============== ============ ======================
mode           memory       grounding
============== ============ ======================
kinship        additive     exhaustive enumeration
logic          additive     exhaustive enumeration
constraint     additive     rank by variable match
state_tracking stateful     chronological
============== ============ ======================
"""
from __future__ import annotations

import dataclasses
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable

from .dataset import InstanceSpec, Statement
from .gateway import Gateway, GatewayError
from .grounding import (
    EXACT,
    Grounding,
    MatchMode,
    ground_chronological,
    ground_enumerate,
    ground_rank_constraints,
)
from .implement import (
    NOTHING,
    STATE_PREDICATE,
    ImplementationRequest,
    ImplementationResult,
    Judgement,
    LLMImplementer,
    SymbolicImplementer,
    join_items,
    split_bracketed,
    verbalize,
)
from .memory import FactEntry, WorkingMemory
from .prompts import build_prompt
from .terms import (
    Atom,
    ParseError,
    Rule,
    complement_predicate,
    parse_atom,
    parse_rule,
    render,
)

log = logging.getLogger(__name__)

UPDATE_MODES = {
    "kinship": "additive",
    "logic": "additive",
    "constraint": "additive",
    "state_tracking": "stateful",
}

# Curated rules for box operations, used when an instance brings none.
BOX_RULES = (
    Statement(
        "If put the contents X into Box A, then X are in Box A.",
        "contains(A, X):-put_into(X, A)",
    ),
    Statement(
        "If remove the contents X from Box A, then X are not in Box A.",
        "not_contains(A, X):-remove_from(X, A)",
    ),
    Statement(
        "If move the contents X from Box A to Box B, then X are not in Box A and X are in Box B.",
        "transfer(X, A, B):-move_from_to(X, A, B)",
    ),
)


class InitializationError(RuntimeError):
    pass


class QueryParseError(ValueError):
    pass


@dataclass
class EngineConfig:
    max_steps: int | None = None  # None: derive from the instance
    prune_limit: int | None = 16  # None: implement every grounding
    match: MatchMode = EXACT
    implementer: str = "symbolic"
    backup: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.prune_limit is not None and self.prune_limit < 1:
            raise ValueError("prune_limit must be >= 1")
        if self.implementer not in ("symbolic", "llm"):
            raise ValueError(f"unknown implementer {self.implementer!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class StepRecord:
    step: int
    groundings: list[dict] = field(default_factory=list)
    implemented: list[list] = field(default_factory=list)  # [rule_id, [fact ids]]
    committed: list[int] = field(default_factory=list)
    superseded: list[int] = field(default_factory=list)
    judgements: list[str] = field(default_factory=list)
    skipped_lines: int = 0
    contradictions: list[list[int]] = field(default_factory=list)
    option: str | None = None
    stop: str | None = None

    def to_dict(self) -> dict:
        return {"type": "step", **asdict(self)}


@dataclass
class RunOutcome:
    instance_id: str
    task_mode: str
    answer: str | None
    solved_directly: bool
    steps: int
    trace: list[StepRecord]
    stop_reason: str = ""
    used_backup: bool = False
    option_conflicts: dict[str, bool] | None = None
    error: str | None = None
    memory_dump: str = ""
    memory: WorkingMemory | None = field(default=None, repr=False, compare=False)

    @property
    def abstained(self) -> bool:
        return self.answer is None

    def to_dict(self) -> dict:
        return {
            "type": "outcome",
            "instance_id": self.instance_id,
            "task_mode": self.task_mode,
            "answer": self.answer,
            "solved_directly": self.solved_directly,
            "steps": self.steps,
            "stop_reason": self.stop_reason,
            "used_backup": self.used_backup,
            "option_conflicts": self.option_conflicts,
            "error": self.error,
            "memory": self.memory_dump,
        }

    def trace_lines(self) -> list[str]:
        lines = [json.dumps(s.to_dict(), ensure_ascii=False) for s in self.trace]
        lines.append(json.dumps(self.to_dict(), ensure_ascii=False))
        return lines


# -- queries ---------------------------------------------------------------


@dataclass(frozen=True)
class Query:
    mode: str
    args: tuple[str, ...]
    predicate: str | None = None


_KINSHIP_Q = re.compile(r"how is (.+?) related to (.+?)\s*\??\s*$", re.I)
_LOGIC_Q = re.compile(r"is it true that (.+?) is (not )?(.+?)\s*\??\s*$", re.I)
_BOX_Q = re.compile(r"\b(box \d+)\b", re.I)


def _strip_the(name: str) -> str:
    return re.sub(r"^the\s+", "", name.strip(), flags=re.I)


def parse_query(instance: InstanceSpec) -> Query:
    mode = instance.task_mode
    if instance.query_atom:
        atom = parse_atom(instance.query_atom, ground=True)
        args = tuple(t.name for t in atom.args)
        return Query(mode, args, None if mode == "kinship" else atom.predicate)
    q = instance.query.strip()
    if mode == "kinship":
        m = _KINSHIP_Q.search(q)
        if m:
            return Query(mode, (m.group(1).strip(), m.group(2).strip()))
    elif mode == "logic":
        m = _LOGIC_Q.search(q)
        if m:
            pred = ("not_" if m.group(2) else "") + re.sub(r"\s+", "_", m.group(3).strip().lower())
            return Query(mode, (_strip_the(m.group(1)),), pred)
    elif mode == "state_tracking":
        m = _BOX_Q.search(q)
        if m:
            return Query(mode, ("Box " + m.group(1).split()[1],), STATE_PREDICATE)
    elif mode == "constraint":
        return Query(mode, ())
    raise QueryParseError(f"cannot read a {mode} query from {q!r}; give query_atom")


@dataclass(frozen=True)
class QueryMatch:
    fact: FactEntry
    answer: str


def relation_word(predicate: str) -> str:
    return predicate[:-3] if predicate.endswith("_of") else predicate


def query_solved(memory: WorkingMemory, query: Query, task_mode: str | None = None) -> QueryMatch | None:
    """Return the fact that answers the query, if memory holds one."""
    mode = task_mode or query.mode
    facts = memory.active_facts()
    if mode == "kinship":
        hits = [
            f for f in facts
            if f.atom.arity == 2 and tuple(t.name for t in f.atom.args) == query.args
        ]
        if not hits:
            return None
        # Most recent inference wins.
        best = max(hits, key=lambda f: f.id)
        return QueryMatch(best, relation_word(best.atom.predicate))
    if mode == "logic":
        target = Atom.of(query.predicate, *query.args, ground=True)
        hit = memory.find_active(target)
        if hit is not None:
            return QueryMatch(hit, "true")
        negated = Atom(complement_predicate(target.predicate), target.args)
        hit = memory.find_active(negated)
        if hit is not None:
            return QueryMatch(hit, "false")
        return None
    if mode == "state_tracking":
        for f in facts:
            if f.atom.predicate == STATE_PREDICATE and f.atom.args and f.atom.args[0].name == query.args[0]:
                items = [t.name for t in f.atom.args[1:] if t.name != NOTHING]
                return QueryMatch(f, join_items(items))
        return None
    return None


def predict_constraint_answer(conflicts: dict[str, bool], polarity: str = "positive") -> str | None:
    """Positive questions take the only conflict-free option, negative ones the only conflicting one."""
    want_conflict = polarity == "negative"
    picked = [label for label, c in conflicts.items() if c == want_conflict]
    return picked[0] if len(picked) == 1 else None


def default_max_steps(instance: InstanceSpec, memory: WorkingMemory | None = None) -> int:
    mode = instance.task_mode
    if mode == "state_tracking":
        return max(1, len(instance.operations))
    if mode == "constraint":
        n = len(memory.rules) if memory is not None else len(instance.rules)
        return max(1, n)
    d = instance.declared_depth
    if d is None:
        return 8
    if d <= 2:
        return 4
    if d <= 4:
        return 6
    if d <= 6:
        return 8
    return d + 2


# -- memory initialisation ---------------------------------------------------

_PREFIX_RE = re.compile(r"^\s*(?:-\s*)?(?:(?:Facts?|Symbolic Rule|New facts?)\s*:\s*)?", re.I)


def parse_formulation(text: str) -> list[tuple[Atom | Rule, str]]:
    """Read facts and rules out of an initialisation response.

    Accepts ``- NL. [pred(a, b)]``, ``Fact: pred(a)``, ``Symbolic Rule: c(X) :- p(X)``
    and bare symbolic lines. Lines that do not parse are dropped.
    """
    out: list[tuple[Atom | Rule, str]] = []
    for raw in (text or "").splitlines():
        if raw.strip().startswith(("------", "###")):
            break
        line = _PREFIX_RE.sub("", raw, count=1).strip()
        if not line:
            continue
        parts = split_bracketed(line)
        nl, symbolic = ("", line) if parts is None else parts
        try:
            if ":-" in symbolic:
                out.append((parse_rule(symbolic), nl))
            else:
                out.append((parse_atom(symbolic, ground=True), nl))
        except ParseError:
            log.debug("dropping unparseable formulation line %r", raw)
    return out


def _require_gateway(gateway: Gateway | None) -> Gateway:
    if gateway is None:
        raise InitializationError("raw context needs a gateway to formalise it")
    return gateway


def _write_statement_rule(mem: WorkingMemory, stmt: Statement) -> int:
    rule = parse_rule(stmt.symbolic)
    return mem.write_rule(rule, stmt.text)


def _write_statement_fact(mem: WorkingMemory, stmt: Statement) -> None:
    atom = parse_atom(stmt.symbolic, ground=True)
    mem.write_fact(atom, stmt.text or verbalize(atom))


def _formalise(gateway: Gateway, kind: str, stage: str, mem: WorkingMemory, **slots) -> list[tuple[Atom | Rule, str]]:
    prompt = build_prompt(
        kind,
        stage,
        objects=list(mem.schema.objects),
        predicates=list(mem.schema.predicates),
        **slots,
    )
    return parse_formulation(gateway.complete(prompt.system, prompt.user))


def _init_rules(instance: InstanceSpec, mem: WorkingMemory, gateway: Gateway | None) -> None:
    kind = instance.task_mode
    rules = list(instance.rules)
    if kind == "state_tracking" and not rules:
        rules = list(BOX_RULES)
    for stmt in rules:
        if stmt.symbolic is not None:
            _write_statement_rule(mem, stmt)
            continue
        if kind == "state_tracking":
            raise InitializationError("state-tracking rules must be given symbolically")
        items = _formalise(
            _require_gateway(gateway), kind, "rule_init", mem,
            rule=stmt.text, context=instance.background,
        )
        for item, _ in items:
            if isinstance(item, Rule):
                mem.write_rule(item, stmt.text)
            else:
                # A constraint with no premises is an unconditional fact.
                mem.write_fact(item, stmt.text)


def _init_option_facts(instance: InstanceSpec, option, mem: WorkingMemory, gateway: Gateway | None) -> None:
    if option.facts is not None:
        for stmt in option.facts:
            _write_statement_fact(mem, stmt)
        return
    items = _formalise(
        _require_gateway(gateway), "constraint", "fact_init", mem,
        context=instance.background, query=instance.query, option=option.text,
    )
    for item, nl in items:
        if isinstance(item, Atom):
            mem.write_fact(item, nl or verbalize(item))


def initialize_memory(instance: InstanceSpec, gateway: Gateway | None = None, option=None) -> WorkingMemory:
    """Write the instance's facts, rules (and operations) into a fresh memory.

    Raw sentences are formalised one at a time through the gateway, so the
    schema grows as the pass proceeds. For constraint instances pass the
    `option` whose facts should be seeded.
    """
    kind = instance.task_mode
    mem = WorkingMemory(UPDATE_MODES[kind])

    if kind == "state_tracking":
        # Rules first so their predicates seed the schema.
        _init_rules(instance, mem, gateway)

    if instance.facts is not None:
        for stmt in instance.facts:
            _write_statement_fact(mem, stmt)
    elif instance.context is not None:
        gw = _require_gateway(gateway)
        for sentence in instance.context:
            for item, nl in _formalise(gw, kind, "fact_init", mem, context=sentence):
                if isinstance(item, Atom):
                    text = nl or (sentence if kind != "kinship" else verbalize(item))
                    mem.write_fact(item, text)
                else:
                    mem.write_rule(item, sentence)

    if kind != "state_tracking":
        _init_rules(instance, mem, gateway)

    for stmt in instance.operations:
        if stmt.symbolic is not None:
            mem.write_operation(parse_atom(stmt.symbolic, ground=True), stmt.text)
            continue
        items = _formalise(_require_gateway(gateway), kind, "op_init", mem, context=stmt.text)
        atoms = [a for a, _ in items if isinstance(a, Atom)]
        if not atoms:
            raise InitializationError(f"could not formalise operation {stmt.text!r}")
        mem.write_operation(atoms[0], stmt.text)

    if option is not None:
        _init_option_facts(instance, option, mem, gateway)

    if not mem.active_facts() and not mem.rules:
        raise InitializationError(f"instance {instance.id}: no facts and no rules")
    return mem


# -- backup ------------------------------------------------------------------

_ANSWER_RE = re.compile(r"^\s*answer\s*:\s*(.*)$", re.I)


def _raw_context(instance: InstanceSpec) -> str:
    parts: list[str] = []
    if instance.background:
        parts.append(instance.background)
    if instance.context is not None:
        parts.extend(instance.context)
    else:
        parts.extend(s.text or s.symbolic or "" for s in instance.facts or [])
    parts.extend(s.text or s.symbolic or "" for s in instance.rules)
    parts.extend(s.text or s.symbolic or "" for s in instance.operations)
    return " ".join(p.strip() for p in parts if p and p.strip())


def backup_answer(instance: InstanceSpec, gateway: Gateway) -> str | None:
    """Single scratchpad-style completion over the raw context; reads the last ``Answer:`` line."""
    option = ""
    if instance.options:
        option = "\nOptions: " + " ".join(o.text or o.label for o in instance.options)
    prompt = build_prompt(
        instance.task_mode, "backup",
        context=_raw_context(instance), query=instance.query, option=option,
    )
    text = gateway.complete(prompt.system, prompt.user)
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    for ln in reversed(lines):
        m = _ANSWER_RE.match(ln)
        if m:
            return m.group(1).strip().rstrip(".") or None
    return lines[-1].rstrip(".") if lines else None


# -- the loop ----------------------------------------------------------------


def make_implementer(config: EngineConfig, gateway: Gateway | None):
    if config.implementer == "symbolic":
        return SymbolicImplementer()
    if gateway is None:
        raise ValueError("the llm implementer needs a gateway")
    return LLMImplementer(gateway)


def _grounding_dict(g: Grounding) -> dict:
    d: dict[str, Any] = {
        "rule_id": g.rule_id,
        "fact_ids": list(g.fact_ids),
        "substitution": dict(sorted(g.substitution.items())),
    }
    if g.score is not None:
        d["score"] = g.score
    if g.state_fact_ids:
        d["state_fact_ids"] = list(g.state_fact_ids)
    return d


def _run_batch(implementer, requests: list[ImplementationRequest], workers: int) -> list[ImplementationResult]:
    if workers <= 1 or len(requests) <= 1:
        return [implementer.implement(r) for r in requests]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(implementer.implement, requests))


def _commit(mem: WorkingMemory, record: StepRecord, results: Iterable[ImplementationResult], step: int) -> list[int]:
    """Serialized commit point: write results in grounding order."""
    new_ids = []
    for res in results:
        record.judgements.append(res.judgement.value)
        record.skipped_lines += len(res.skipped)
        for atom, text in res.new_facts:
            outcome = mem.write_fact(atom, text, step)
            if outcome.status == "duplicate":
                continue
            new_ids.append(outcome.fact_id)
            if outcome.superseded is not None:
                record.superseded.append(outcome.superseded)
    record.committed.extend(new_ids)
    for fid in new_ids:
        atom = mem.fact(fid).atom
        other = mem.find_active(Atom(complement_predicate(atom.predicate), atom.args))
        if other is not None:
            record.contradictions.append([other.id, fid])
    return new_ids


class _Run:
    def __init__(self, instance: InstanceSpec, config: EngineConfig, gateway: Gateway | None):
        self.instance = instance
        self.config = config
        self.gateway = gateway
        self.implementer = make_implementer(config, gateway)
        self.trace: list[StepRecord] = []

    def request(self, mem: WorkingMemory, g: Grounding, **extra) -> ImplementationRequest:
        snap_rule = next(r for r in mem.rules if r.id == g.rule_id)
        facts = tuple(mem.fact(i) for i in g.fact_ids if i is not None)
        return ImplementationRequest(
            task_kind=self.instance.task_mode,
            grounding=g,
            rule=snap_rule,
            facts=facts,
            query=self.instance.query,
            objects=tuple(mem.schema.objects),
            predicates=tuple(mem.schema.predicates),
            **extra,
        )

    # kinship / logic
    def static(self, mem: WorkingMemory, query: Query | None):
        cfg = self.config
        budget = cfg.max_steps or default_max_steps(self.instance, mem)
        if query is not None:
            hit = query_solved(mem, query)
            if hit is not None:
                return hit.answer, True, 0, "solved"
        novelty: frozenset[int] = frozenset()
        step = 0
        while step < budget:
            step += 1
            record = StepRecord(step)
            self.trace.append(record)
            groundings = ground_enumerate(mem.snapshot(), novelty, cfg.match, cfg.prune_limit)
            record.groundings = [_grounding_dict(g) for g in groundings]
            if not groundings:
                record.stop = "no_groundings"
                return None, False, step, record.stop
            requests = [self.request(mem, g) for g in groundings]
            record.implemented = [[g.rule_id, list(g.fact_ids)] for g in groundings]
            results = _run_batch(self.implementer, requests, cfg.workers)
            new_ids = _commit(mem, record, results, step)
            if query is not None:
                hit = query_solved(mem, query)
                if hit is not None:
                    record.stop = "solved"
                    return hit.answer, True, step, record.stop
                judged = self._judged_answer(results, query)
                if judged is not None:
                    record.stop = "solved"
                    return judged, True, step, record.stop
            if not new_ids:
                record.stop = "fixpoint"
                return None, False, step, record.stop
            novelty = frozenset(new_ids)
        self.trace[-1].stop = "max_steps"
        return None, False, step, "max_steps"

    @staticmethod
    def _judged_answer(results: list[ImplementationResult], query: Query) -> str | None:
        # Only kinship can take an answer from an LLM "Yes" the matcher did not confirm.
        if query.mode != "kinship":
            return None
        for res in results:
            if res.judgement is Judgement.SOLVES_QUERY and res.new_facts:
                atom = res.new_facts[0][0]
                if {t.name for t in atom.args} == set(query.args):
                    return relation_word(atom.predicate)
        return None

    def state(self, mem: WorkingMemory, query: Query):
        cfg = self.config
        ops = mem.operations
        budget = cfg.max_steps or default_max_steps(self.instance, mem)
        step = 0
        for op in ops[:budget]:
            step += 1
            record = StepRecord(step)
            self.trace.append(record)
            snap = mem.snapshot()
            g = ground_chronological(snap, op, cfg.match)
            if g is None:
                log.info("operation %s matches no rule", render(op.atom))
                continue
            record.groundings = [_grounding_dict(g)]
            record.implemented = [[g.rule_id, list(g.fact_ids)]]
            req = self.request(
                mem, g,
                state_facts=tuple(snap.fact(i) for i in g.state_fact_ids),
                op_fact=op,
            )
            _commit(mem, record, [self.implementer.implement(req)], step)
        if step < len(ops):
            if self.trace:
                self.trace[-1].stop = "max_steps"
            return None, False, step, "max_steps"
        if self.trace:
            self.trace[-1].stop = "operations_consumed"
        hit = query_solved(mem, query)
        if hit is None:
            return None, False, step, "operations_consumed"
        return hit.answer, True, step, "operations_consumed"

    def constraint_option(self, option, label: str) -> tuple[bool, int]:
        cfg = self.config
        mem = initialize_memory(self.instance, self.gateway, option=option)
        budget = cfg.max_steps or default_max_steps(self.instance, mem)
        implemented: set[int] = set()
        step = 0
        while step < budget:
            ranked = ground_rank_constraints(mem.snapshot(), cfg.match)
            g = next((r for r in ranked if r.rule_id not in implemented), None)
            if g is None:
                break
            step += 1
            record = StepRecord(step, option=label)
            self.trace.append(record)
            implemented.add(g.rule_id)
            record.groundings = [_grounding_dict(r) for r in ranked]
            record.implemented = [[g.rule_id, list(g.fact_ids)]]
            if isinstance(self.implementer, SymbolicImplementer):
                # Deterministic path only fires fully instantiated rules.
                rule = next(r for r in mem.rules if r.id == g.rule_id).rule
                covered = None not in g.fact_ids and all(v in g.substitution for v in rule.conclusion.variables())
                result = self.implementer.implement(self.request(mem, g)) if covered else ImplementationResult()
            else:
                # The LLM sees the option plus everything inferred so far.
                req = self.request(mem, g, context=self.instance.background, option=option.text)
                req = dataclasses.replace(req, facts=tuple(mem.active_facts()))
                result = self.implementer.implement(req)
            _commit(mem, record, [result], step)
            if result.judgement is Judgement.CONFLICT or record.contradictions:
                record.stop = "conflict"
                return True, step
        if self.trace and self.trace[-1].option == label:
            self.trace[-1].stop = "rules_exhausted"
        return False, step


def run(instance: InstanceSpec, config: EngineConfig | None = None, gateway: Gateway | None = None) -> RunOutcome:
    """Run one instance end to end and predict its answer.

    GatewayError propagates only when backup is off; a cassette miss always
    propagates because it means the fixtures and the prompts disagree.
    """
    config = config or EngineConfig()
    r = _Run(instance, config, gateway)
    answer, solved, steps, stop = None, False, 0, ""
    conflicts = None
    mem = None
    error = None
    try:
        if instance.task_mode == "constraint":
            conflicts = {}
            for option in instance.options:
                conflicts[option.label], used = r.constraint_option(option, option.label)
                steps = max(steps, used)
            answer = predict_constraint_answer(conflicts, instance.polarity)
            solved = answer is not None
            stop = "options_evaluated"
        else:
            mem = initialize_memory(instance, gateway)
            query = parse_query(instance)
            if instance.task_mode == "state_tracking":
                answer, solved, steps, stop = r.state(mem, query)
            else:
                answer, solved, steps, stop = r.static(mem, query)
    except GatewayError as exc:
        if exc.kind == "cassette_miss" or not config.backup:
            raise
        error = str(exc)
        stop = "gateway_error"
        answer, solved = None, False

    used_backup = False
    if not solved:
        closed = stop in ("fixpoint", "no_groundings")
        # An exhausted closure with neither the atom nor its complement is an open-world "unknown".
        answer = "unknown" if instance.task_mode == "logic" and closed else None
        solved = answer is not None
        if not solved and config.backup and gateway is not None:
            used_backup = True
            try:
                answer = backup_answer(instance, gateway)
            except GatewayError as exc:
                if exc.kind == "cassette_miss":
                    raise
                error = str(exc)
                answer = None
        elif not solved and instance.task_mode == "logic":
            answer = "unknown"

    return RunOutcome(
        instance_id=instance.id,
        task_mode=instance.task_mode,
        answer=answer,
        solved_directly=solved,
        steps=steps,
        trace=r.trace,
        stop_reason=stop,
        used_backup=used_backup,
        option_conflicts=conflicts,
        error=error,
        memory_dump=mem.dump() if mem is not None else "",
        memory=mem,
    )


def run_to_fixpoint(instance: InstanceSpec, config: EngineConfig | None = None) -> RunOutcome:
    """Forward-chain with no query until no new fact appears (or the step budget ends)."""
    config = config or EngineConfig(max_steps=10_000, prune_limit=None, backup=False)
    r = _Run(instance, config, None)
    mem = initialize_memory(instance)
    _, _, steps, stop = r.static(mem, None)
    return RunOutcome(instance.id, instance.task_mode, None, False, steps, r.trace, stop,
                      memory_dump=mem.dump(), memory=mem)
