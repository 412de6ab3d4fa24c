import math

import numpy as np
import pytest

from poissat import expr
from poissat.expr import EvalError, ExprError, Num, derive, evaluate, parse


def test_parse_and_eval_frozen_values():
    # frozen against math-module evaluation, independent of the tree walker
    assert evaluate(parse("sin(2*t)", 1), [0.3]) == pytest.approx(0.5646424733950354, abs=1e-15)
    assert evaluate(parse("exp(x)*cos(y)", 2), [0.5, 1.2]) == pytest.approx(
        0.5974269374088264, abs=1e-15
    )
    assert evaluate(parse("x^2 - 1/(1+x^2)", 1), [0.5]) == pytest.approx(-0.55, abs=1e-15)


def test_aliases_and_canonical_names():
    e = parse("x*y + sin(x1)", 2)
    assert evaluate(e, [0.2, 3.0]) == pytest.approx(0.6 + math.sin(0.2))
    assert evaluate(parse("z", 3), [1.0, 2.0, 5.0]) == 5.0
    assert evaluate(parse("th^2", 4), [0, 0, 0, 3.0]) == 9.0
    assert evaluate(parse("u2 - u1", 2), [1.0, 4.0]) == 3.0


def test_explicit_name_table():
    e = parse("sin(2*t) + th", 2, names={"t": 0, "th": 1})
    assert evaluate(e, [0.3, 1.0]) == pytest.approx(1.5646424733950354)
    with pytest.raises(ValueError):
        parse("t", 1, names={"t": 3})


def test_parse_errors_carry_position():
    with pytest.raises(ExprError) as err:
        parse("(x", 1)
    assert err.value.position == 2
    with pytest.raises(ExprError) as err:
        parse("x1 + x3", 2)
    assert "x3" in str(err.value)
    assert err.value.position == 5
    with pytest.raises(ExprError):
        parse("x ++ y", 2)
    with pytest.raises(ExprError):
        parse("sin(x,y)", 2)
    with pytest.raises(ExprError):
        parse("x^2.5", 1)
    with pytest.raises(ExprError):
        parse("log(x)", 1)


def test_eval_error_mentions_operation_and_point():
    with pytest.raises(EvalError) as err:
        evaluate(parse("1/x", 1), [0.0])
    assert "division" in str(err.value)
    assert err.value.point == (0.0,)
    with pytest.raises(EvalError) as err:
        evaluate(parse("exp(x^2)", 1), np.array([[1.0], [40.0]]))
    assert err.value.point == (40.0,)


def test_eval_batch_matches_scalar():
    e = parse("x^2*sin(y) - y/(1+x^2)", 2)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-2, 2, size=(64, 2))
    batch = evaluate(e, pts)
    for p, v in zip(pts, batch):
        assert evaluate(e, p) == pytest.approx(v, abs=0.0)


def test_derive_exact_examples():
    d = derive(parse("sin(2*t)", 1), 0)
    assert evaluate(d, [0.3]) == pytest.approx(1.6506712298193567, abs=1e-15)
    # derivative of a constant is the zero expression
    assert derive(parse("3.5", 2), 1) == Num(0.0)
    assert derive(parse("x*y", 2), 1) == expr.Var(0)


def test_derivative_matches_central_differences():
    # spec-level invariant: 1000 seeded points, h = 1e-5, mixed expressions
    cases = [
        ("x^2*sin(y) + exp(x)/(2+cos(y))", 2),
        ("sin(2*x) - y^3*x + 1/(1+x^2+y^2)", 2),
        ("exp(x)*cos(x) - x^4", 1),
    ]
    rng = np.random.default_rng(42)
    h = 1e-5
    for text, arity in cases:
        e = parse(text, arity)
        pts = rng.uniform(-1.5, 1.5, size=(1000 // len(cases) + 1, arity))
        for i in range(arity):
            d = derive(e, i)
            exact = evaluate(d, pts)
            hi = pts.copy()
            lo = pts.copy()
            hi[:, i] += h
            lo[:, i] -= h
            approx = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)
            scale = 1.0 + np.abs(exact)
            assert np.all(np.abs(exact - approx) <= 1e-6 * scale)


def test_print_reparse_round_trip():
    texts = [
        "x^2 - 1/(1+x^2)",
        "-x + sin(2*x)*cos(x)^3",
        "(x - y)/(x*y - 2)",
        "exp(x)^2/(1 - x^4) - 0.125*y",
        "x/(y/(1+x))",
    ]
    rng = np.random.default_rng(7)
    for text in texts:
        e = parse(text, 2)
        for _ in range(3):
            pts = rng.uniform(-0.9, 0.9, size=(50, 2))
            r = parse(str(e), 2)
            a = evaluate(e, pts)
            b = evaluate(r, pts)
            assert np.all(np.abs(a - b) <= 1e-15 * (1 + np.abs(a)))
            e = derive(e, 0)


def test_round_trip_derivative_trees_property():
    # random points, derivative trees of increasing depth still round-trip
    e = parse("sin(x*y) + exp(x - y^2)", 2)
    for i in (0, 1, 0):
        e = derive(e, i)
    r = parse(str(e), 2)
    pts = np.random.default_rng(3).uniform(-1, 1, size=(200, 2))
    assert np.array_equal(evaluate(e, pts), evaluate(r, pts))


def test_arity_zero_constant():
    e = parse("2^3 - 1.5", 0)
    assert evaluate(e, np.zeros((1, 0))) == pytest.approx([6.5])


def test_unary_minus_and_powers():
    assert evaluate(parse("-y", 3), [0, 2.0, 0]) == -2.0
    assert evaluate(parse("x^-2", 1), [2.0]) == 0.25
    assert evaluate(parse("-x^2", 1), [3.0]) == -9.0  # minus binds last
