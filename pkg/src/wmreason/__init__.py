"""Rule reasoning over an external working memory of facts and rules."""
from .dataset import FormatError, InstanceSpec, load_dataset
from .engine import EngineConfig, RunOutcome, run, run_to_fixpoint
from .evaluation import EvalReport, evaluate
from .gateway import Gateway, GatewayConfig, GatewayError
from .grounding import MatchMode, ground_enumerate
from .memory import WorkingMemory
from .terms import Atom, Rule, parse_atom, parse_rule, render, unify_atom

__all__ = [
    "Atom", "EngineConfig", "EvalReport", "FormatError", "Gateway", "GatewayConfig",
    "GatewayError", "InstanceSpec", "MatchMode", "Rule", "RunOutcome", "WorkingMemory",
    "evaluate", "ground_enumerate", "load_dataset", "parse_atom", "parse_rule", "render",
    "run", "run_to_fixpoint", "unify_atom",
]

__version__ = "0.1.0"
