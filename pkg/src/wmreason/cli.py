"""Command-line entry point: ``wmreason <command> [flags]``.

Commands: run, eval, trace, record, replay, generate. Every flag may also be
set in a ``--config`` file of ``key = value`` lines (keys as flag names,
dashes or underscores); flags given on the command line win.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import synth
from .dataset import FormatError, InstanceSpec, dump_dataset, load_dataset
from .engine import EngineConfig, InitializationError, QueryParseError, run
from .evaluation import evaluate, score
from .gateway import DEFAULT_ENDPOINT, DEFAULT_MODEL, Gateway, GatewayConfig, GatewayError
from .grounding import MatchMode

DEFAULTS = {
    "mode": "live",
    "implementer": "llm",
    "max_steps": None,
    "prune_limit": 16,
    "match": "exact",
    "cassette": None,
    "no_backup": False,
    "seed": 0,
    "endpoint": DEFAULT_ENDPOINT,
    "model": DEFAULT_MODEL,
    "temperature": 0.0,
    "max_retries": 3,
    "timeout": 60.0,
    "workers": 1,
}

_INT_KEYS = {"max_steps", "prune_limit", "seed", "max_retries", "workers"}
_FLOAT_KEYS = {"temperature", "timeout"}
_BOOL_KEYS = {"no_backup"}


class CliError(Exception):
    pass


def fixture_path(name: str) -> Path:
    """Bundled replay fixture for a task mode, e.g. ``kinship``."""
    path = resources.files("wmreason") / "data" / "replay" / f"{name}.jsonl"
    return Path(str(path))


def cassette_fixture_path(name: str) -> Path:
    return Path(str(resources.files("wmreason") / "data" / "replay" / f"{name}.cassette.jsonl"))


def read_config(path: str) -> dict:
    out: dict = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise CliError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _BOOL_KEYS:
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                out[key] = value.lower() in ("true", "1", "yes")
            elif key in _INT_KEYS:
                out[key] = None if value.lower() == "none" else int(value)
            elif key in _FLOAT_KEYS:
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError as exc:
            raise CliError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return out


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("engine and gateway")
    g.add_argument("--config", help="key = value file mirroring these flags")
    g.add_argument("--mode", choices=["live", "record", "replay"])
    g.add_argument("--implementer", choices=["symbolic", "llm"])
    g.add_argument("--max-steps", type=int)
    g.add_argument("--prune-limit", type=int)
    g.add_argument("--match", help="exact or approx:<threshold>")
    g.add_argument("--cassette")
    g.add_argument("--no-backup", action="store_const", const=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--endpoint")
    g.add_argument("--model")
    g.add_argument("--temperature", type=float)
    g.add_argument("--max-retries", type=int)
    g.add_argument("--timeout", type=float)
    g.add_argument("--workers", type=int)
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="wmreason", description="Working-memory rule reasoning harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one instance and print its outcome")
    p.add_argument("dataset", help="JSONL dataset, or fixture:<mode> for a bundled one")
    p.add_argument("--id", help="instance id (default: first instance)")
    p.add_argument("--trace-out", help="write the step trace as JSONL here")

    for name, help_ in (
        ("eval", "evaluate a dataset"),
        ("record", "evaluate while recording gateway exchanges into --cassette"),
        ("replay", "evaluate from --cassette only, no network"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("dataset")
        p.add_argument("--out", help="also write the JSON report here")

    p = sub.add_parser("trace", help="pretty-print a trace JSONL file")
    p.add_argument("path")

    p = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    p.add_argument("kind", choices=["kinship", "boxes"])
    p.add_argument("-n", type=int, default=20)
    p.add_argument("--out", required=True)
    return parser


def resolve_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(read_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if args.command in ("record", "replay"):
        settings["mode"] = args.command
    return settings


def engine_config(s: dict) -> EngineConfig:
    try:
        return EngineConfig(
            max_steps=s["max_steps"],
            prune_limit=s["prune_limit"],
            match=MatchMode.parse(s["match"]),
            implementer=s["implementer"],
            backup=not s["no_backup"],
            workers=s["workers"],
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def make_gateway(s: dict, instances: list[InstanceSpec]) -> Gateway | None:
    """Build a gateway only when something could use it."""
    wanted = (
        s["implementer"] == "llm"
        or s["cassette"]
        or s["mode"] != "live"
        or any(i.is_raw for i in instances)
    )
    if not wanted:
        return None
    if s["mode"] == "replay" and s["cassette"] and not Path(s["cassette"]).exists():
        raise GatewayError("cassette_miss", f"cassette {s['cassette']} does not exist")
    try:
        cfg = GatewayConfig(
            endpoint=s["endpoint"],
            model=s["model"],
            temperature=s["temperature"],
            max_retries=s["max_retries"],
            mode=s["mode"],
            cassette=s["cassette"],
            timeout=s["timeout"],
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    return Gateway(cfg)


def _load(spec: str) -> list[InstanceSpec]:
    path = fixture_path(spec.split(":", 1)[1]) if spec.startswith("fixture:") else Path(spec)
    if not path.exists():
        raise CliError(f"no such dataset: {spec}")
    return load_dataset(path)


def cmd_run(args, s) -> int:
    instances = _load(args.dataset)
    if args.id is not None:
        picked = [i for i in instances if i.id == args.id]
        if not picked:
            raise CliError(f"no instance with id {args.id!r}")
        inst = picked[0]
    elif instances:
        inst = instances[0]
    else:
        raise CliError("dataset is empty")
    outcome = run(inst, engine_config(s), make_gateway(s, [inst]))
    if args.trace_out:
        Path(args.trace_out).write_text("\n".join(outcome.trace_lines()) + "\n", encoding="utf-8")
    out = outcome.to_dict()
    if inst.gold is not None:
        out["gold"] = inst.gold
        out["correct"] = score(inst, outcome).correct
    print(json.dumps(out, indent=2, ensure_ascii=False))
    return 0


def cmd_eval(args, s) -> int:
    instances = _load(args.dataset)
    gateway = make_gateway(s, instances)
    report = evaluate(instances, engine_config(s), gateway, workers=s["workers"])
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    print(report.table())
    if gateway is not None and s["mode"] == "replay":
        print(f"live calls           {gateway.live_calls}")
    return 0


def format_trace(lines: list[str]) -> str:
    out = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CliError(f"trace line {lineno}: invalid JSON ({exc.msg})") from exc
        if rec.get("type") == "step":
            opt = f" [option {rec['option']}]" if rec.get("option") else ""
            out.append(f"step {rec['step']}{opt}")
            for g in rec.get("groundings", []):
                extra = f" score={g['score']:.2f}" if "score" in g else ""
                out.append(f"  ground  rule {g['rule_id']} <- facts {g['fact_ids']} {g['substitution']}{extra}")
            for rule_id, fact_ids in rec.get("implemented", []):
                out.append(f"  impl    rule {rule_id} with {fact_ids}")
            if rec.get("committed"):
                out.append(f"  commit  {rec['committed']}")
            if rec.get("superseded"):
                out.append(f"  retire  {rec['superseded']}")
            if rec.get("contradictions"):
                out.append(f"  clash   {rec['contradictions']}")
            if rec.get("stop"):
                out.append(f"  stop    {rec['stop']}")
        elif rec.get("type") == "outcome":
            out.append(
                f"outcome {rec.get('instance_id')}: answer={rec.get('answer')!r} "
                f"direct={rec.get('solved_directly')} steps={rec.get('steps')} stop={rec.get('stop_reason')}"
            )
            if rec.get("option_conflicts") is not None:
                out.append(f"  options {rec['option_conflicts']}")
            if rec.get("memory"):
                out.append("memory:")
                out.extend("  " + m for m in rec["memory"].splitlines())
        else:
            out.append(f"? {line.strip()}")
    return "\n".join(out)


def cmd_trace(args, s) -> int:
    try:
        lines = Path(args.path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {args.path}: {exc.strerror or exc}") from exc
    print(format_trace(lines))
    return 0


def cmd_generate(args, s) -> int:
    if args.kind == "kinship":
        instances = synth.kinship_suite(args.n, s["seed"])
    else:
        instances = synth.boxes_suite(args.n, s["seed"])
    dump_dataset(instances, args.out)
    print(f"wrote {len(instances)} {args.kind} instances to {args.out}")
    return 0


COMMANDS = {
    "run": cmd_run,
    "eval": cmd_eval,
    "record": cmd_eval,
    "replay": cmd_eval,
    "trace": cmd_trace,
    "generate": cmd_generate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = resolve_settings(args) if args.command != "trace" else {}
        if args.command in ("record", "replay") and not settings.get("cassette"):
            raise CliError(f"{args.command} needs --cassette")
        return COMMANDS[args.command](args, settings)
    except GatewayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CliError, FormatError, InitializationError, QueryParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
