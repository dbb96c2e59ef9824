"""Accuracy and execution-rate reporting over a dataset."""
from __future__ import annotations

import logging
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .dataset import InstanceSpec
from .engine import EngineConfig, RunOutcome, run
from .gateway import Gateway, GatewayError

log = logging.getLogger(__name__)

_ARTICLE_RE = re.compile(r"^(the|a|an)\s+", re.I)


def _relation(text: str) -> str:
    t = re.sub(r"[\s\-]+", "_", text.strip().lower().rstrip("."))
    return t[:-3] if t.endswith("_of") else t


def box_items(text: str) -> frozenset[str]:
    """``the rose and the letter`` -> {rose, letter}; ``nothing`` -> {}."""
    parts = re.split(r",|\band\b", text.strip().rstrip(".").lower())
    items = {_ARTICLE_RE.sub("", p.strip()) for p in parts}
    return frozenset(i for i in items if i and i != "nothing")


def answers_match(predicted: str | None, gold: str | None, task_mode: str) -> bool:
    if predicted is None or gold is None:
        return False
    if task_mode == "state_tracking":
        return box_items(predicted) == box_items(gold)
    if task_mode == "kinship":
        return _relation(predicted) == _relation(gold)
    if task_mode == "constraint":
        return predicted.strip().strip("()").upper()[:1] == gold.strip().strip("()").upper()[:1]
    return predicted.strip().lower().rstrip(".") == gold.strip().lower().rstrip(".")


@dataclass
class InstanceResult:
    id: str
    task_mode: str
    depth: int | None
    answer: str | None
    gold: str | None
    correct: bool
    solved_directly: bool
    steps: int
    error: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvalReport:
    accuracy: float
    execution_rate: float
    executable_accuracy: float | None
    per_depth: dict[str, float]
    outcomes: list[InstanceResult] = field(default_factory=list)

    @classmethod
    def from_results(cls, results: list[InstanceResult]) -> EvalReport:
        n = len(results)
        direct = [r for r in results if r.solved_directly]
        by_depth: dict[str, list[bool]] = defaultdict(list)
        for r in results:
            by_depth["none" if r.depth is None else str(r.depth)].append(r.correct)
        per_depth = {
            k: sum(v) / len(v)
            for k, v in sorted(by_depth.items(), key=lambda kv: (kv[0] == "none", kv[0].zfill(4)))
        }
        return cls(
            accuracy=sum(r.correct for r in results) / n if n else 0.0,
            execution_rate=len(direct) / n if n else 0.0,
            executable_accuracy=(sum(r.correct for r in direct) / len(direct)) if direct else None,
            per_depth=per_depth,
            outcomes=results,
        )

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "execution_rate": self.execution_rate,
            "executable_accuracy": self.executable_accuracy,
            "per_depth": self.per_depth,
            "n": len(self.outcomes),
            "outcomes": [r.to_dict() for r in self.outcomes],
        }

    def table(self) -> str:
        lines = [
            f"instances            {len(self.outcomes)}",
            f"accuracy             {self.accuracy:.4f}",
            f"execution rate       {self.execution_rate:.4f}",
        ]
        if self.executable_accuracy is not None:
            lines.append(f"executable accuracy  {self.executable_accuracy:.4f}")
        if self.per_depth:
            lines.append("depth  accuracy")
            lines += [f"{d:>5}  {acc:.4f}" for d, acc in self.per_depth.items()]
        return "\n".join(lines)


def score(instance: InstanceSpec, outcome: RunOutcome) -> InstanceResult:
    return InstanceResult(
        id=instance.id,
        task_mode=instance.task_mode,
        depth=instance.declared_depth,
        answer=outcome.answer,
        gold=instance.gold,
        correct=answers_match(outcome.answer, instance.gold, instance.task_mode),
        solved_directly=outcome.solved_directly,
        steps=outcome.steps,
        error=outcome.error,
    )


def _evaluate_one(instance: InstanceSpec, config: EngineConfig, gateway: Gateway | None) -> InstanceResult:
    try:
        return score(instance, run(instance, config, gateway))
    except GatewayError as exc:
        if exc.kind == "cassette_miss":
            raise
        err = str(exc)
    except Exception as exc:  # one bad instance must not sink the report
        log.warning("instance %s failed: %s", instance.id, exc)
        err = f"{type(exc).__name__}: {exc}"
    return InstanceResult(instance.id, instance.task_mode, instance.declared_depth,
                          None, instance.gold, False, False, 0, err)


def evaluate(
    instances: list[InstanceSpec],
    config: EngineConfig | None = None,
    gateway: Gateway | None = None,
    workers: int = 1,
) -> EvalReport:
    config = config or EngineConfig()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: _evaluate_one(i, config, gateway), instances))
    else:
        results = [_evaluate_one(i, config, gateway) for i in instances]
    return EvalReport.from_results(results)
