"""A small arithmetic expression language for configuration files.

Grammar (Python-like precedence, ``^`` is exponentiation)::

    expr   := number | name | expr op expr | -expr | call | ( expr )
    op     := + - * / ^
    name   := x | y | z | pi | e
    call   := abs(e) | sqrt(e) | log(e) | exp(e) | min(e, e, ...) | max(e, e, ...)
            | dist(c1, c2[, c3])          # |x - c|

Expressions compile to vectorized numpy closures over an array of points of
shape ``(..., n)``.
"""

from __future__ import annotations

import ast
import math
from typing import Callable

import numpy as np

from .coeffs import ValidationError

__all__ = ["ExprError", "Expr", "parse_number"]


class ExprError(ValidationError):
    pass


_UNARY = {"abs": np.abs, "sqrt": np.sqrt, "log": np.log, "exp": np.exp}
_CONST = {"pi": math.pi, "e": math.e}
_COORDS = {"x": 0, "y": 1, "z": 2}
_BINOP = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide, ast.Pow: np.power}


def _compile(node, text: str) -> Callable:
    if isinstance(node, ast.Expression):
        return _compile(node.body, text)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        v = float(node.value)
        return lambda P: v
    if isinstance(node, ast.Name):
        if node.id in _CONST:
            v = _CONST[node.id]
            return lambda P: v
        if node.id in _COORDS:
            k = _COORDS[node.id]
            return lambda P: P[..., k]
        raise ExprError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, text)
        if isinstance(node.op, ast.USub):
            return lambda P: -inner(P)
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOP:
        fn = _BINOP[type(node.op)]
        a, b = _compile(node.left, text), _compile(node.right, text)
        return lambda P: fn(a(P), b(P))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        name = node.func.id
        args = [_compile(a, text) for a in node.args]
        if name in _UNARY:
            if len(args) != 1:
                raise ExprError(f"{name}() takes one argument in {text!r}")
            fn, a = _UNARY[name], args[0]
            return lambda P: fn(a(P))
        if name in ("min", "max"):
            if len(args) < 2:
                raise ExprError(f"{name}() needs at least two arguments in {text!r}")
            red = np.minimum if name == "min" else np.maximum

            def mm(P, args=args, red=red):
                out = args[0](P)
                for a in args[1:]:
                    out = red(out, a(P))
                return out
            return mm
        if name == "dist":
            if not 2 <= len(args) <= 3:
                raise ExprError(f"dist() takes the coordinates of the center in {text!r}")

            def dist(P, args=args):
                return np.sqrt(sum((P[..., k] - a(P)) ** 2 for k, a in enumerate(args)))
            return dist
        raise ExprError(f"unknown function {name!r} in {text!r}")
    raise ExprError(f"unsupported syntax in {text!r}")


class Expr:
    """Compiled expression; call with points of shape ``(..., n)``."""

    def __init__(self, text: str):
        self.text = str(text).strip()
        if not self.text:
            raise ExprError("empty expression")
        try:
            tree = ast.parse(self.text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExprError(f"cannot parse {self.text!r}: {exc.msg}") from None
        self._fn = _compile(tree, self.text)

    def __call__(self, points) -> np.ndarray:
        P = np.asarray(points, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._fn(P)
        return np.broadcast_to(np.asarray(out, dtype=float), P.shape[:-1]).copy()

    def __repr__(self):
        return f"Expr({self.text!r})"


def parse_number(text: str) -> float:
    """A constant expression such as ``1/128`` or ``2^-0.5``."""
    v = Expr(text)(np.zeros((1, 3)))[0]
    if not np.isfinite(v):
        raise ExprError(f"{text!r} is not a finite number")
    return float(v)
