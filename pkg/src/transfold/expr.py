"""Minimal arithmetic expression interpreter for user-defined problems.

Expressions use the variables ``x1..xn`` and ``t``, the operators
``+ - * / ^`` and the functions ``sin, cos, exp, sqrt``.  Parsing goes
through :mod:`ast` with a strict node whitelist; nothing is ever passed
to ``eval``.

    >>> f = compile_expression("x1^2 - t", ["x1", "t"])
    >>> f(3.0, 1.0)
    8.0
"""

from __future__ import annotations

import ast
import math
import operator
from collections.abc import Callable, Sequence

from .errors import ExpressionError

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "sqrt": math.sqrt}
_CONSTS = {"pi": math.pi}


def _build(node, names: dict[str, int]):
    if isinstance(node, ast.Expression):
        return _build(node.body, names)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
        value = float(node.value)
        return lambda args: value
    if isinstance(node, ast.Name):
        if node.id in names:
            idx = names[node.id]
            return lambda args: args[idx]
        if node.id in _CONSTS:
            value = _CONSTS[node.id]
            return lambda args: value
        raise ExpressionError(f"unknown variable {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, right = _build(node.left, names), _build(node.right, names)
        return lambda args: op(left(args), right(args))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op = _UNARY[type(node.op)]
        inner = _build(node.operand, names)
        return lambda args: op(inner(args))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only sin, cos, exp, sqrt may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        fn = _FUNCS[node.func.id]
        inner = _build(node.args[0], names)
        return lambda args: fn(inner(args))
    raise ExpressionError(f"unsupported syntax: {type(node).__name__}")


def compile_expression(text: str, variables: Sequence[str]) -> Callable[..., float]:
    """Compile ``text`` into a function of the given variables (positional)."""
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression")
    # '**' is not part of the accepted grammar; '^' is the power operator.
    if "**" in text:
        raise ExpressionError("use '^' for powers")
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    names = {name: i for i, name in enumerate(variables)}
    fn = _build(tree, names)

    def evaluate(*args):
        if len(args) != len(variables):
            raise ExpressionError(f"expected {len(variables)} arguments, got {len(args)}")
        try:
            return float(fn(args))
        except (ValueError, ZeroDivisionError, OverflowError):
            return math.nan

    evaluate.source = text
    return evaluate
