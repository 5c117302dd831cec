"""Problem instances and their JSON text format.

An instance is ``min f(x, y) s.t. body_i(x, y) <= rhs_i`` over continuous,
binary and integer variables. Expressions are stored as trees and written
as infix strings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import expr as E
from .errors import EqualityUnsupportedError, ModelError
from .parsing import format_expr, parse_expr

CONTINUOUS = "continuous"
BINARY = "binary"
INTEGER = "integer"
DOMAINS = (CONTINUOUS, BINARY, INTEGER)


@dataclass(frozen=True)
class VariableMeta:
    name: str
    domain: str = CONTINUOUS
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ModelError(f"variable {self.name!r}: unknown domain {self.domain!r}")
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ModelError(f"variable {self.name!r}: lower bound exceeds upper bound")
        if self.domain == BINARY:
            if self.lower not in (None, 0, 0.0) or self.upper not in (None, 1, 1.0):
                raise ModelError(f"binary variable {self.name!r} only admits bounds [0, 1]")

    @property
    def is_discrete(self) -> bool:
        return self.domain != CONTINUOUS

    @property
    def bounds(self) -> tuple[float, float]:
        """Effective bounds; binaries are implicitly [0, 1], missing bounds are infinite."""
        if self.domain == BINARY:
            return 0.0, 1.0
        lo = -math.inf if self.lower is None else float(self.lower)
        hi = math.inf if self.upper is None else float(self.upper)
        return lo, hi


@dataclass(frozen=True)
class Constraint:
    body: E.Expr
    rhs: float = 0.0
    relation: str = "<="


@dataclass
class Problem:
    variables: list[VariableMeta]
    objective: E.Expr
    constraints: list[Constraint] = field(default_factory=list)
    name: str = "problem"

    def __post_init__(self):
        if not self.variables:
            raise ModelError("a problem needs at least one variable")
        n = len(self.variables)
        for e in [self.objective, *(c.body for c in self.constraints)]:
            idx = E.variables(e)
            if idx and (idx[0] < 0 or idx[-1] >= n):
                raise ModelError("expression references a variable outside the problem")
        for c in self.constraints:
            if c.relation != "<=":
                raise EqualityUnsupportedError(f"relation {c.relation!r} is not supported")

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def discrete_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.is_discrete]

    @property
    def continuous_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if not v.is_discrete]

    def bounds(self) -> tuple[list[float], list[float]]:
        pairs = [v.bounds for v in self.variables]
        return [p[0] for p in pairs], [p[1] for p in pairs]

    def curvatures(self) -> tuple[E.Curvature, list[E.Curvature]]:
        return (E.classify_curvature(self.objective),
                [E.classify_curvature(c.body) for c in self.constraints])

    def is_convex(self) -> bool:
        fc, gcs = self.curvatures()
        return fc.is_convex and all(g.is_convex for g in gcs)

    def relaxed(self) -> "Problem":
        """Continuous relaxation: same bounds, every domain continuous."""
        vs = []
        for v in self.variables:
            lo, hi = v.bounds
            vs.append(VariableMeta(v.name, CONTINUOUS,
                                   None if math.isinf(lo) else lo,
                                   None if math.isinf(hi) else hi))
        return Problem(vs, self.objective, list(self.constraints), self.name)


def _locate(text: str, needle: str) -> tuple[int | None, int | None]:
    """Line/column of the JSON string literal ``needle`` in ``text``."""
    pos = text.find(json.dumps(needle))
    if pos < 0:
        return None, None
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col + 1  # skip the opening quote


def _parse_field(text: str, src: str, names: dict[str, int], what: str) -> E.Expr:
    try:
        return parse_expr(src, names)
    except ModelError as exc:
        line, col = _locate(text, src)
        if line is not None and exc.column is not None:
            col = col + exc.column - 1
        cls = type(exc)
        raise cls(f"{what}: {exc.message}", line, col if line is not None else exc.column) from None


def _number(value, what: str) -> float | None:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelError(f"{what} must be a number")
    return float(value)


def parse_model(text: str) -> Problem:
    """Parse an instance document (see ``serialize_model`` for the layout)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ModelError("instance document must be a JSON object")
    for key in ("variables", "objective"):
        if key not in doc:
            raise ModelError(f"missing key {key!r}")
    variables = []
    for k, v in enumerate(doc["variables"]):
        if not isinstance(v, dict) or "name" not in v:
            raise ModelError(f"variables[{k}] must be an object with a name")
        variables.append(VariableMeta(
            str(v["name"]), v.get("domain", CONTINUOUS),
            _number(v.get("lower"), f"variables[{k}].lower"),
            _number(v.get("upper"), f"variables[{k}].upper"),
        ))
    names = {}
    for i, v in enumerate(variables):
        if v.name in names:
            raise ModelError(f"duplicate variable name {v.name!r}")
        names[v.name] = i
    objective = _parse_field(text, str(doc["objective"]), names, "objective")
    constraints = []
    for k, c in enumerate(doc.get("constraints", [])):
        if not isinstance(c, dict) or "body" not in c:
            raise ModelError(f"constraints[{k}] must be an object with a body")
        rel = c.get("relation", "<=")
        if rel in ("==", "="):
            raise EqualityUnsupportedError(f"constraints[{k}]: equality constraints are not supported")
        if rel != "<=":
            raise ModelError(f"constraints[{k}]: unsupported relation {rel!r}")
        body = _parse_field(text, str(c["body"]), names, f"constraints[{k}].body")
        rhs = _number(c.get("rhs", 0.0), f"constraints[{k}].rhs")
        constraints.append(Constraint(body, rhs))
    return Problem(variables, objective, constraints, str(doc.get("name", "problem")))


def _plain(v: float):
    return int(v) if float(v).is_integer() and abs(v) < 1e16 else float(v)


def problem_to_dict(p: Problem) -> dict:
    names = p.names
    variables = []
    for v in p.variables:
        d = {"name": v.name, "domain": v.domain}
        if v.lower is not None:
            d["lower"] = _plain(v.lower)
        if v.upper is not None:
            d["upper"] = _plain(v.upper)
        variables.append(d)
    return {
        "name": p.name,
        "variables": variables,
        "objective": format_expr(p.objective, names),
        "constraints": [
            {"body": format_expr(c.body, names), "relation": c.relation, "rhs": _plain(c.rhs)}
            for c in p.constraints
        ],
    }


def serialize_model(p: Problem) -> str:
    return json.dumps(problem_to_dict(p), indent=2) + "\n"


def load_problem(path: str | Path) -> Problem:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def save_problem(p: Problem, path: str | Path) -> None:
    Path(path).write_text(serialize_model(p), encoding="utf-8")


def structurally_equal(a: Problem, b: Problem) -> bool:
    return (a.name == b.name and a.variables == b.variables
            and a.objective == b.objective and a.constraints == b.constraints)


def make_problem(variables: Sequence[VariableMeta], objective: str,
                 constraints: Sequence[tuple[str, float]] = (), name: str = "problem") -> Problem:
    """Build a problem from infix strings; handy for tests and scripts."""
    names = {v.name: i for i, v in enumerate(variables)}
    cons = [Constraint(parse_expr(b, names), float(r)) for b, r in constraints]
    return Problem(list(variables), parse_expr(objective, names), cons, name)
