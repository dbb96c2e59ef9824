"""Prolog-style symbolic terms: atoms, rules, parsing, printing and unification.

The language is function-free. An atom is ``predicate(arg1, arg2, ...)`` where
each argument is either an object (``Box 4``, ``the bread``, ``Lena``) or a
variable (``A``, ``B``, ``X1``). Rules are written ``conclusion:-p1, p2``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

__all__ = [
    "ParseError",
    "MalformedTerm",
    "MalformedRule",
    "Term",
    "Atom",
    "Rule",
    "Substitution",
    "var",
    "obj",
    "normalize_predicate",
    "normalize_object",
    "is_variable_token",
    "parse_atom",
    "parse_rule",
    "render",
    "unify_atom",
    "apply_substitution",
    "canonical_rule_key",
    "complement_predicate",
]

# Variable -> object name. Objects are plain strings since the language has no
# compound terms.
Substitution = dict[str, str]

_VARIABLE_RE = re.compile(r"^[A-Z][A-Z0-9_]{0,2}$")
_WS_RE = re.compile(r"\s+")


class ParseError(ValueError):
    pass


class MalformedTerm(ParseError):
    pass


class MalformedRule(ParseError):
    pass


def normalize_predicate(name: str) -> str:
    """Lowercase, trim and join inner whitespace runs with underscores."""
    return _WS_RE.sub("_", name.strip()).lower()


def normalize_object(name: str) -> str:
    """Trim and collapse inner whitespace; casing is kept."""
    return _WS_RE.sub(" ", name.strip())


def is_variable_token(token: str) -> bool:
    """A variable is a short, single-word, all-caps token such as ``A`` or ``X1``.

    ``Bob`` and ``Li`` are objects; so is anything containing a space.
    """
    return bool(_VARIABLE_RE.match(token))


@dataclass(frozen=True)
class Term:
    name: str
    is_var: bool = False

    def __str__(self) -> str:
        return self.name


def var(name: str) -> Term:
    return Term(name, True)


def obj(name: str) -> Term:
    return Term(normalize_object(name), False)


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[Term, ...] = ()

    @classmethod
    def of(cls, predicate: str, *args: str | Term, ground: bool = False) -> Atom:
        """Convenience constructor: string args are classified lexically unless `ground`."""
        terms = []
        for a in args:
            if isinstance(a, Term):
                terms.append(a)
            elif not ground and is_variable_token(a.strip()):
                terms.append(var(a.strip()))
            else:
                terms.append(obj(a))
        return cls(normalize_predicate(predicate), tuple(terms))

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def is_ground(self) -> bool:
        return not any(t.is_var for t in self.args)

    def variables(self) -> list[str]:
        seen: dict[str, None] = {}
        for t in self.args:
            if t.is_var:
                seen.setdefault(t.name)
        return list(seen)

    def objects(self) -> list[str]:
        return [t.name for t in self.args if not t.is_var]

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class Rule:
    conclusion: Atom
    premises: tuple[Atom, ...]
    id: int | None = field(default=None, compare=False)
    text: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.premises:
            raise MalformedRule("a rule needs at least one premise")

    def variables(self) -> list[str]:
        seen: dict[str, None] = {}
        for a in (self.conclusion, *self.premises):
            for v in a.variables():
                seen.setdefault(v)
        return list(seen)

    def premise_variables(self) -> set[str]:
        return {v for p in self.premises for v in p.variables()}

    def unbound_conclusion_variables(self) -> list[str]:
        """Conclusion variables that no premise can bind."""
        bound = self.premise_variables()
        return [v for v in self.conclusion.variables() if v not in bound]

    @property
    def is_range_restricted(self) -> bool:
        return not self.unbound_conclusion_variables()

    def __str__(self) -> str:
        return render(self)


def _strip_wrappers(text: str) -> str:
    s = text.strip()
    if s.endswith("."):
        s = s[:-1].rstrip()
    if s.startswith("[") and s.endswith("]"):
        s = s[1:-1].strip()
        if s.endswith("."):
            s = s[:-1].rstrip()
    return s


def _parse_atom_body(s: str, ground: bool, source: str) -> Atom:
    open_at = s.find("(")
    if open_at < 0 or not s.endswith(")"):
        raise MalformedTerm(f"expected predicate(args...): {source!r}")
    head = s[:open_at]
    inner = s[open_at + 1 : -1]
    if "(" in inner or ")" in inner:
        raise MalformedTerm(f"unbalanced or nested parentheses: {source!r}")
    pred = normalize_predicate(head)
    if not pred:
        raise MalformedTerm(f"empty predicate: {source!r}")
    if "," in pred or ":-" in pred or "[" in pred or "]" in pred:
        raise MalformedTerm(f"illegal character in predicate: {source!r}")
    if not inner.strip():
        return Atom(pred, ())
    args = []
    for raw in inner.split(","):
        token = normalize_object(raw)
        if not token:
            raise MalformedTerm(f"empty argument: {source!r}")
        if not ground and is_variable_token(token):
            args.append(var(token))
        else:
            args.append(Term(token, False))
    return Atom(pred, tuple(args))


def parse_atom(text: str, *, ground: bool = False) -> Atom:
    """Parse ``pred(a, b, ...)``.

    With ``ground=True`` every argument is an object, which is how facts are
    read. Otherwise short all-caps tokens become variables.
    """
    s = _strip_wrappers(text)
    if ":-" in s:
        raise MalformedTerm(f"rule where an atom was expected: {text!r}")
    return _parse_atom_body(s, ground, text)


def _split_top_level(s: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise MalformedRule(f"unbalanced parentheses: {s!r}")
        elif ch == "," and depth == 0:
            parts.append(s[start:i])
            start = i + 1
    if depth != 0:
        raise MalformedRule(f"unbalanced parentheses: {s!r}")
    parts.append(s[start:])
    return parts


def parse_rule(text: str, *, id: int | None = None, nl: str = "") -> Rule:
    s = _strip_wrappers(text)
    pieces = s.split(":-")
    if len(pieces) < 2:
        raise MalformedRule(f"missing ':-': {text!r}")
    if len(pieces) > 2:
        raise MalformedRule(f"more than one ':-': {text!r}")
    head, body = pieces
    if not body.strip():
        raise MalformedRule(f"rule has no premises: {text!r}")
    try:
        conclusion = _parse_atom_body(head.strip(), False, text)
        premises = tuple(
            _parse_atom_body(p.strip(), False, text) for p in _split_top_level(body)
        )
    except MalformedTerm as exc:
        raise MalformedRule(str(exc)) from exc
    return Rule(conclusion, premises, id=id, text=nl)


def _render_atom(atom: Atom) -> str:
    return f"{atom.predicate}({', '.join(t.name for t in atom.args)})"


def render(x: Atom | Rule) -> str:
    """Canonical text: ``p(a, b)`` and ``c(X):-p(X), q(X)``."""
    if isinstance(x, Rule):
        return _render_atom(x.conclusion) + ":-" + ", ".join(
            _render_atom(p) for p in x.premises
        )
    return _render_atom(x)


def unify_atom(
    pattern: Atom,
    ground: Atom,
    seed: Substitution | None = None,
    *,
    check_predicate: bool = True,
) -> Substitution | None:
    """Extend `seed` so that `pattern` instantiates to `ground`, or return None.

    Predicate comparison can be switched off when the caller has already
    decided predicate compatibility (approximate matching).
    """
    if check_predicate and pattern.predicate != ground.predicate:
        return None
    if pattern.arity != ground.arity:
        return None
    out = dict(seed) if seed else {}
    for p, g in zip(pattern.args, ground.args):
        if g.is_var:
            return None
        if p.is_var:
            bound = out.get(p.name)
            if bound is None:
                out[p.name] = g.name
            elif bound != g.name:
                return None
        elif p.name != g.name:
            return None
    return out


def apply_substitution(atom: Atom, subst: Substitution) -> Atom:
    if not subst or atom.is_ground:
        return atom
    return Atom(
        atom.predicate,
        tuple(
            Term(subst[t.name], False) if t.is_var and t.name in subst else t
            for t in atom.args
        ),
    )


def canonical_rule_key(rule: Rule) -> str:
    """Render with variables renamed by first occurrence, for alpha-equivalence."""
    names: dict[str, str] = {}

    def rename(a: Atom) -> Atom:
        args = []
        for t in a.args:
            if t.is_var:
                names.setdefault(t.name, f"V{len(names)}")
                args.append(var(names[t.name]))
            else:
                args.append(t)
        return Atom(a.predicate, tuple(args))

    head = rename(rule.conclusion)
    body = tuple(rename(p) for p in rule.premises)
    return render(Rule(head, body))


def complement_predicate(predicate: str) -> str:
    """``quiet`` <-> ``not_quiet``. Negation is part of the name."""
    if predicate.startswith("not_"):
        return predicate[4:]
    return "not_" + predicate


def atoms_objects(atoms: Iterable[Atom]) -> list[str]:
    seen: dict[str, None] = {}
    for a in atoms:
        for o in a.objects():
            seen.setdefault(o)
    return list(seen)
