"""Small closed-form expression trees for model files.

Custom maps, weight tables, mixing functions and potentials are stored as
JSON-serializable trees so model files stay language-agnostic.  Supported
operations: add, sub, mul, div, neg, abs, exp, min, max over constants and
named variables.  Evaluation is vectorized over numpy arrays.  ``bounds``
propagates interval enclosures, which gives rigorous sup-norm bounds for
potentials over a box.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["const", "var", "op", "evaluate", "bounds", "free_vars", "validate_expr"]

_BINARY = {"add", "sub", "mul", "div", "min", "max"}
_UNARY = {"neg", "abs", "exp"}


def const(value) -> dict:
    return {"const": float(value)}


def var(name: str) -> dict:
    return {"var": str(name)}


def op(name: str, *args) -> dict:
    if name in _BINARY and len(args) == 2 or name in _UNARY and len(args) == 1:
        return {"op": name, "args": list(args)}
    raise ValueError(f"bad operation {name!r} with {len(args)} arguments")


def validate_expr(node, allowed_vars) -> None:
    """Raise ValueError if the tree is malformed or uses unknown variables."""
    if not isinstance(node, dict):
        raise ValueError(f"expression node must be a dict, got {type(node).__name__}")
    if "const" in node:
        if not math.isfinite(float(node["const"])):
            raise ValueError("non-finite constant in expression")
        return
    if "var" in node:
        if node["var"] not in allowed_vars:
            raise ValueError(f"unknown variable {node['var']!r}")
        return
    name = node.get("op")
    args = node.get("args", [])
    if name in _BINARY and len(args) == 2 or name in _UNARY and len(args) == 1:
        for a in args:
            validate_expr(a, allowed_vars)
        return
    raise ValueError(f"malformed expression node: {node!r}")


def free_vars(node) -> set[str]:
    if "const" in node:
        return set()
    if "var" in node:
        return {node["var"]}
    out: set[str] = set()
    for a in node["args"]:
        out |= free_vars(a)
    return out


def evaluate(node, env: dict):
    """Evaluate over an environment of scalars or same-shape arrays."""
    if "const" in node:
        return node["const"]
    if "var" in node:
        return env[node["var"]]
    name = node["op"]
    args = [evaluate(a, env) for a in node["args"]]
    if name == "add":
        return args[0] + args[1]
    if name == "sub":
        return args[0] - args[1]
    if name == "mul":
        return args[0] * args[1]
    if name == "div":
        return args[0] / args[1]
    if name == "min":
        return np.minimum(args[0], args[1])
    if name == "max":
        return np.maximum(args[0], args[1])
    if name == "neg":
        return -args[0]
    if name == "abs":
        return np.abs(args[0])
    if name == "exp":
        return np.exp(args[0])
    raise ValueError(f"unknown operation {name!r}")


def bounds(node, env: dict) -> tuple[float, float]:
    """Interval enclosure of the expression over interval-valued variables.

    ``env`` maps variable names to (lo, hi).  Division requires the divisor
    enclosure to exclude zero.
    """
    if "const" in node:
        c = float(node["const"])
        return c, c
    if "var" in node:
        lo, hi = env[node["var"]]
        return float(lo), float(hi)
    name = node["op"]
    iv = [bounds(a, env) for a in node["args"]]
    if name == "add":
        return iv[0][0] + iv[1][0], iv[0][1] + iv[1][1]
    if name == "sub":
        return iv[0][0] - iv[1][1], iv[0][1] - iv[1][0]
    if name == "mul":
        prods = [x * y for x in iv[0] for y in iv[1]]
        return min(prods), max(prods)
    if name == "div":
        lo, hi = iv[1]
        if lo <= 0 <= hi:
            raise ValueError("interval division by an interval containing zero")
        quots = [x / y for x in iv[0] for y in iv[1]]
        return min(quots), max(quots)
    if name == "min":
        return min(iv[0][0], iv[1][0]), min(iv[0][1], iv[1][1])
    if name == "max":
        return max(iv[0][0], iv[1][0]), max(iv[0][1], iv[1][1])
    if name == "neg":
        return -iv[0][1], -iv[0][0]
    if name == "abs":
        lo, hi = iv[0]
        if lo >= 0:
            return lo, hi
        if hi <= 0:
            return -hi, -lo
        return 0.0, max(-lo, hi)
    if name == "exp":
        return math.exp(iv[0][0]), math.exp(iv[0][1])
    raise ValueError(f"unknown operation {name!r}")
