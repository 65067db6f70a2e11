"""Tiny arithmetic expression language for analytic scenario fields.

Expressions are written over the time variable ``t`` and the spatial
coordinates ``x1``, ``x2`` (and ``x3`` on 3-D grids) using ``+ - * /``,
parentheses, the functions ``sin``, ``cos``, ``exp`` and numeric
constants (plus ``pi`` and ``e``). Parsing goes through the Python AST
with a strict node whitelist, so nothing else evaluates.
"""

from __future__ import annotations

import ast

import numpy as np

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": np.pi, "e": np.e}
_VARS = ("t", "x1", "x2", "x3")

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
}


class ExpressionError(ValueError):
    """Expression uses syntax outside the supported subset."""


def _check(node: ast.AST):
    if isinstance(node, ast.Expression):
        _check(node.body)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator {type(node.op).__name__} not supported")
        _check(node.left)
        _check(node.right)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExpressionError("only unary +/- are supported")
        _check(node.operand)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only sin, cos and exp may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError("functions take exactly one positional argument")
        _check(node.args[0])
    elif isinstance(node, ast.Name):
        if node.id not in _VARS and node.id not in _CONSTS:
            raise ExpressionError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ExpressionError("only numeric constants are allowed")
    else:
        raise ExpressionError(f"syntax {type(node).__name__} not supported")


def _eval(node: ast.AST, env: dict):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        val = _eval(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](_eval(node.args[0], env))
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else _CONSTS[node.id]
    if isinstance(node, ast.Constant):
        return float(node.value)
    raise AssertionError("unreachable after _check")


def compile_scalar(src: str):
    """Compile an expression to ``f(t, X)`` over positions ``X (..., n)``."""
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {src!r}: {exc.msg}") from exc
    _check(tree)

    def fn(t, X):
        X = np.asarray(X, dtype=np.float64)
        env = {"t": t}
        for ax in range(X.shape[-1]):
            env[f"x{ax + 1}"] = X[..., ax]
        out = _eval(tree, env)
        return np.broadcast_to(np.asarray(out, dtype=np.float64), X.shape[:-1]).copy()

    return fn


def compile_vector(components):
    """Compile one expression per component to ``f(t, X) -> (..., n)``."""
    fns = [compile_scalar(src) for src in components]

    def fn(t, X):
        return np.stack([f(t, X) for f in fns], axis=-1)

    return fn
