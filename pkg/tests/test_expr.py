import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from trudinger.errors import DataError, ExpressionError
from trudinger.expr import Bin, Call, Neg, Num, Var, parse_expression, parse_tree, to_text


@pytest.mark.parametrize("text, expected", [
    ("1", 1.0),
    ("2^3^2", 512.0),
    ("-2^2", -4.0),
    ("(-2)^2", 4.0),
    ("2-3-4", -5.0),
    ("8/4/2", 1.0),
    ("1+2*3", 7.0),
    ("max(1, 4, 2) - min(3, 5)", 1.0),
    ("abs(-3) + sqrt(16) + log(exp(2))", 9.0),
    ("1.5e1 + .5", 15.5),
])
def test_constants(text, expected):
    assert parse_expression(text).evaluate() == pytest.approx(expected)


def test_space_time_expression():
    f = parse_expression("2+sin(x1)*exp(-t)", 2)
    assert f(np.array([[math.pi / 2, 0.3]]), 0.0)[0] == pytest.approx(3.0)
    x = np.random.default_rng(0).random((50, 2))
    assert np.allclose(f(x, 0.7), 2 + np.sin(x[:, 0]) * np.exp(-0.7))


def test_constant_broadcasts():
    assert np.array_equal(parse_expression("1")(np.zeros((4, 3)), 0.0), np.ones(4))


@pytest.mark.parametrize("text, offset", [
    ("2+", 2),
    ("2 $ 3", 2),
    ("sin(1", 5),
    ("foo(1)", 0),
    ("1 2", 2),
    ("", 0),
    ("é+", 0),
    ("x1+é", 3),
])
def test_syntax_errors_carry_byte_offsets(text, offset):
    with pytest.raises(ExpressionError) as info:
        parse_expression(text)
    assert info.value.offset == offset


def test_arity_and_dimension_errors():
    with pytest.raises(ExpressionError):
        parse_expression("sin(1, 2)")
    with pytest.raises(ExpressionError):
        parse_expression("max(1)")
    with pytest.raises(ExpressionError):
        parse_expression("x3 + 1", 2)


@pytest.mark.parametrize("text", ["log(x1 - 1)", "sqrt(x1 - 2)", "1/(x1 - 0.5)", "(0-x1)^0.5"])
def test_domain_errors(text):
    with pytest.raises(DataError):
        parse_expression(text, 2)(np.array([[0.5, 0.0]]), 0.0)


# -- property tests -------------------------------------------------------------------------

leaves = st.one_of(
    st.floats(0, 50, allow_nan=False).map(lambda v: Num(round(v, 3))),
    st.sampled_from([Var("x1"), Var("x2"), Var("t")]),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda a: Bin(*a)),
        children.map(Neg),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "abs"]), children).map(lambda a: Call(a[0], (a[1],))),
        st.tuples(st.sampled_from(["min", "max"]), children, children).map(lambda a: Call(a[0], (a[1], a[2]))),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


def reference(node, env):
    """Plain scalar interpreter used as an oracle for the vectorized evaluator."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -reference(node.operand, env)
    if isinstance(node, Call):
        args = [reference(a, env) for a in node.args]
        return {"sin": math.sin, "cos": math.cos, "exp": math.exp, "abs": abs,
                "min": min, "max": max}[node.name](*args)
    a, b = reference(node.left, env), reference(node.right, env)
    return {"+": a + b, "-": a - b, "*": a * b}.get(node.op) if node.op in "+-*" else \
        (a / b if node.op == "/" else math.pow(a, b))


@settings(max_examples=300, deadline=None)
@given(trees)
def test_print_parse_round_trip(tree):
    assert parse_tree(to_text(tree)) == tree


@settings(max_examples=300, deadline=None)
@given(trees, st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
def test_matches_reference_interpreter(tree, x1, x2, t):
    env = {"x1": x1, "x2": x2, "t": t}
    try:
        with np.errstate(all="ignore"):
            expected = reference(tree, env)
    except (ZeroDivisionError, OverflowError, ValueError):
        assume(False)
    assume(math.isfinite(expected) and abs(expected) < 1e100)
    try:
        got = parse_expression(to_text(tree), 2)(np.array([[x1, x2]]), t)[0]
    except DataError:
        assume(False)
    assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)
