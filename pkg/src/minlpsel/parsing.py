"""Infix expression grammar.

    expr   := term (('+' | '-') term)*
    term   := unary ('*' unary)*
    unary  := '-' unary | power
    power  := atom ('^' ['-'] NUMBER)?
    atom   := NUMBER | IDENT | ('exp'|'log'|'sqrt') '(' expr ')' | '(' expr ')'

A minus sign directly in front of a bare literal (not followed by ``^``)
folds into a negative constant; everything else becomes a negation node.
``format_expr`` prints trees so that parsing the output rebuilds the same
tree.
"""

from __future__ import annotations

import re
from typing import Mapping, Sequence

from . import expr as E
from .errors import EqualityUnsupportedError, ExprSyntaxError, UnknownIdentifierError

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<eq>==?)"
    r"|(?P<op>[-+*^()])"
    r")"
)

FUNCS = {"exp": E.exp, "log": E.log, "sqrt": E.sqrt}


def tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + 1 + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[col - 1]!r}", column=col)
        kind = m.lastgroup
        start = m.start(kind) + 1
        if kind == "eq":
            raise EqualityUnsupportedError("equality constraints are not supported", column=start)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, names: Mapping[str, int]):
        self.toks = tokenize(text)
        self.i = 0
        self.names = names

    def peek(self, k: int = 0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, col = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", column=col)

    def parse(self) -> E.Expr:
        e = self.expr()
        kind, val, col = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", column=col)
        return e

    def expr(self) -> E.Expr:
        terms = [self.term()]
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, _ = self.take()
            t = self.term()
            terms.append(t if op == "+" else E.neg(t))
        return E.add(*terms)

    def term(self) -> E.Expr:
        factors = [self.unary()]
        while self.peek()[:2] == ("op", "*"):
            self.take()
            factors.append(self.unary())
        return E.mul(*factors)

    def unary(self) -> E.Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            if self.peek()[0] == "num" and self.peek(1)[1] != "^":
                return E.const(-float(self.take()[1]))
            return E.neg(self.unary())
        return self.power()

    def power(self) -> E.Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            sign = 1.0
            if self.peek()[:2] == ("op", "-"):
                self.take()
                sign = -1.0
            kind, val, col = self.take()
            if kind != "num":
                raise ExprSyntaxError("exponent must be a numeric literal", column=col)
            base = E.power(base, sign * float(val))
            if self.peek()[:2] == ("op", "^"):
                raise ExprSyntaxError("chained powers need parentheses", column=self.peek()[2])
        return base

    def atom(self) -> E.Expr:
        kind, val, col = self.take()
        if kind == "num":
            return E.const(float(val))
        if kind == "ident":
            if val in FUNCS:
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return FUNCS[val](inner)
            if val not in self.names:
                raise UnknownIdentifierError(f"unknown identifier {val!r}", column=col)
            return E.var(self.names[val])
        if val == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", column=col)


def parse_expr(text: str, names: Mapping[str, int] | Sequence[str]) -> E.Expr:
    """Parse infix ``text``; identifiers resolve through ``names``."""
    if not isinstance(names, Mapping):
        names = {n: i for i, n in enumerate(names)}
    return _Parser(text, names).parse()


def format_number(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def format_expr(e: E.Expr, names: Sequence[str]) -> str:
    k = e.kind
    if k == E.CONST:
        return format_number(e.value)
    if k == E.VAR:
        return names[e.value]
    if k in FUNCS:
        return f"{k}({format_expr(e.args[0], names)})"
    if k == E.SUM:
        out = _wrap(e.args[0], names, (E.SUM,))
        for t in e.args[1:]:
            if t.kind == E.NEG:
                out += " - " + _wrap(t.args[0], names, (E.SUM,))
            else:
                out += " + " + _wrap(t, names, (E.SUM,))
        return out
    if k == E.PROD:
        return "*".join(_wrap(f, names, (E.SUM, E.PROD)) for f in e.args)
    if k == E.NEG:
        inner = e.args[0]
        if inner.kind == E.CONST:
            return f"-({format_number(inner.value)})"
        return "-" + _wrap(inner, names, (E.SUM, E.PROD))
    if k == E.POW:
        base = e.args[0]
        simple = base.kind in (E.VAR, *FUNCS) or (base.kind == E.CONST and base.value >= 0)
        b = format_expr(base, names) if simple else f"({format_expr(base, names)})"
        return f"{b}^{format_number(e.value)}"
    raise ValueError(f"cannot format node kind {k!r}")


def _wrap(e: E.Expr, names: Sequence[str], kinds: tuple[str, ...]) -> str:
    s = format_expr(e, names)
    return f"({s})" if e.kind in kinds else s
