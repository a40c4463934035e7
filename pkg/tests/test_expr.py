import numpy as np
import pytest

from ifsmlab import expr


def test_scalar_arithmetic():
    e = expr.op("add", expr.op("mul", expr.const(2.0), expr.var("x0")), expr.const(1.0))
    assert expr.evaluate(e, {"x0": 3.0}) == 7.0


def test_vectorized_evaluation():
    e = expr.op("exp", expr.op("neg", expr.var("x0")))
    x = np.array([0.0, 1.0, 2.0])
    assert np.allclose(expr.evaluate(e, {"x0": x}), np.exp(-x))


def test_min_max_abs():
    e = expr.op("max", expr.op("abs", expr.var("x0")), expr.const(0.5))
    assert expr.evaluate(e, {"x0": -2.0}) == 2.0
    assert expr.evaluate(e, {"x0": 0.1}) == 0.5


def test_free_vars():
    e = expr.op("sub", expr.var("x0"), expr.op("mul", expr.var("lam0"), expr.const(2)))
    assert expr.free_vars(e) == {"x0", "lam0"}


def test_validate_rejects_unknown_var():
    with pytest.raises(ValueError):
        expr.validate_expr(expr.var("y9"), {"x0"})


def test_validate_rejects_malformed():
    with pytest.raises(ValueError):
        expr.validate_expr({"op": "add", "args": [expr.const(1)]}, set())


def test_interval_bounds_contain_samples():
    e = expr.op("mul", expr.op("exp", expr.var("x0")),
                expr.op("sub", expr.const(1.0), expr.var("x0")))
    lo, hi = expr.bounds(e, {"x0": (0.0, 1.0)})
    xs = np.linspace(0.0, 1.0, 1000)
    vals = expr.evaluate(e, {"x0": xs})
    assert lo <= vals.min() and vals.max() <= hi


def test_interval_bounds_exact_for_monotone():
    e = expr.op("exp", expr.var("x0"))
    assert expr.bounds(e, {"x0": (-1.0, 2.0)}) == (np.exp(-1.0), np.exp(2.0))


def test_interval_division_guard():
    e = expr.op("div", expr.const(1.0), expr.var("x0"))
    with pytest.raises(ValueError):
        expr.bounds(e, {"x0": (-1.0, 1.0)})


def test_json_round_trip():
    import json
    e = expr.op("min", expr.op("abs", expr.var("x0")),
                expr.op("add", expr.const(0.25), expr.var("lam0")))
    assert json.loads(json.dumps(e)) == e
