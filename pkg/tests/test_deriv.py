"""Lie derivative rules against hand results and a finite-difference oracle."""

import random

import pytest

from helmproof.deriv import VectorField, elem_expr, lie_expr, lie_pred, numeric_lie
from helmproof.errors import (
    NotDifferentiableError, ShapeMismatchError, UnsupportedPredicateError,
)
from helmproof.expr import (
    Abs, Acos, Ang, Cmp, Cond, Const, Cos, Div, Dot, ExistsIn, Min, Mul,
    Norm, Not, Or, Sin, Sqrt, Sub, Var, Wrap, eval_expr, eval_pred,
)
from helmproof.norm import simplify
from helmproof.parsing import parse_expr, parse_pred
from helmproof.state import cont, disc, register_space


@pytest.fixture(scope="module")
def space():
    return register_space([
        cont("t", 1, 1), cont("p", 1, 2), cont("v", 1, 2), cont("a", 1, 2),
        cont("s", 1, 1), cont("phi", 1, 1),
        disc("wp", "vec2"), disc("ob", "set"), disc("rs", "real"),
        disc("X", "real"),
        disc("m", "mode", ("OCM", "MOM", "HCM", "CAM")),
    ])


@pytest.fixture(scope="module")
def field(space):
    # motion with constant thrust: position follows velocity, velocity
    # follows acceleration, acceleration frozen
    return VectorField.make(space, {
        "t": parse_expr("1", space),
        "p": parse_expr("v", space),
        "v": parse_expr("a", space),
        "s": parse_expr("cond(s != 0, (v . a) / s, norm(a))", space),
        "phi": parse_expr("s / 10", space),
    })


def same(space, got, want_text):
    want = parse_expr(want_text, space)
    assert str(simplify(got, space)) == str(simplify(want, space))


def test_field_validation(space):
    with pytest.raises(ShapeMismatchError):
        VectorField.make(space, {"rs": Const.of(1)})
    with pytest.raises(ShapeMismatchError):
        VectorField.make(space, {"p": Const.of(1)})


def test_var_rules(space, field):
    got, sides = lie_expr(Var("p"), field)
    same(space, got, "v")
    assert sides == []
    got, _ = lie_expr(Var("a"), field)
    same(space, got, "[0, 0]")
    got, _ = lie_expr(Var("rs"), field)
    same(space, got, "0")
    got, _ = lie_expr(Var("X"), field)
    same(space, got, "0")
    got, _ = lie_expr(Var("p", (1, 2)), field)
    same(space, got, "v[1,2]")
    with pytest.raises(NotDifferentiableError):
        lie_expr(Var("m"), field)
    with pytest.raises(NotDifferentiableError):
        lie_expr(Var("ob"), field)


def test_bilinear_rules(space, field):
    got, _ = lie_expr(parse_expr("a . v", space), field)
    same(space, got, "a . a")
    got, _ = lie_expr(parse_expr("(a . v) * (a . v)", space), field)
    same(space, got, "2 * (a . a) * (a . v)")
    got, _ = lie_expr(parse_expr("t * s", space), field)
    same(space, got, "s + t * cond(s != 0, (v . a) / s, norm(a))")


def test_trig_rules(space, field):
    got, _ = lie_expr(parse_expr("sin(phi)", space), field)
    same(space, got, "(s / 10) * cos(phi)")
    got, _ = lie_expr(parse_expr("cos(phi)", space), field)
    same(space, got, "-((s / 10) * sin(phi))")


def test_norm_and_sqrt_sides(space, field):
    got, sides = lie_expr(parse_expr("norm(p)", space), field)
    same(space, got, "(p . v) / norm(p)")
    assert [str(s) for s in sides] == ["norm(p) != 0"]
    got, sides = lie_expr(parse_expr("sqrt(s)", space), field)
    assert [str(s) for s in sides] == ["s > 0"]
    got, sides = lie_expr(parse_expr("t / s", space), field)
    assert any(str(s) == "s != 0" for s in sides)


def test_unsupported_nodes(space, field):
    for text in ["abs(s)", "sgn(s)", "min(s, t)", "wrap(phi)",
                 "ang(p)", "acos(s)", "cond(s > 0, s, t)"]:
        with pytest.raises(NotDifferentiableError):
            lie_expr(parse_expr(text, space), field)


def test_pred_rules(space, field):
    got, _ = lie_pred(parse_pred("a . v >= 0", field.space), field)
    # mirrored to <= and differentiated on each side
    assert got.op == "<="
    from helmproof.norm import simplify_pred
    assert str(simplify_pred(got, space)) == "0 <= a . a"
    got, _ = lie_pred(parse_pred("s = t", space), field)
    assert got.op == "="
    got, _ = lie_pred(parse_pred("s < t /\\ t <= s", space), field)
    assert " /\\ " in str(got)
    with pytest.raises(UnsupportedPredicateError):
        lie_pred(parse_pred("s != t", space), field)
    with pytest.raises(UnsupportedPredicateError):
        lie_pred(parse_pred("s = 0 \\/ t = 0", space), field)
    with pytest.raises(UnsupportedPredicateError):
        lie_pred(parse_pred("exists o in ob. o . o <= s", space), field)


def test_elem_expr(space):
    e = parse_expr("p + 2 * v", space)
    assert str(elem_expr(e, 1, 2)) == "p[1,2] + 2 * v[1,2]"
    with pytest.raises(ShapeMismatchError):
        elem_expr(parse_expr("norm(p)", space), 1, 2)


def _margin_ok(side, st):
    # stay away from the singular set so the finite difference is stable
    if isinstance(side, Cmp) and side.op == "!=":
        return abs(eval_expr(side.l, st).as_float()) > 0.5
    if isinstance(side, Cmp) and side.op == ">":
        return eval_expr(side.l, st).as_float() > 0.5
    return True


ORACLE_CASES = [
    "t",
    "a . v",
    "(a . v) * (a . v)",
    "sin(phi)",
    "s * cos(phi)",
    "norm(p)",
    "norm(v + a)",
    "sqrt(s * s + 1)",
    "(v . a) / s",
    "p[1,1] * s",
    "[s * s, t * s]",
    "p - 2 * v",
    "(p - wp) . v",
]


def test_against_finite_differences(space, field):
    rng = random.Random(5)
    checked = 0
    for text in ORACLE_CASES:
        e = parse_expr(text, space)
        sym, sides = lie_expr(e, field)
        for _ in range(40):
            st = space.sample(rng)
            if abs(eval_expr(Var("s"), st).as_float()) < 0.5:
                continue  # the field itself branches at s = 0
            if not all(_margin_ok(side, st) for side in sides):
                continue
            want = numeric_lie(e, field, st)
            got = eval_expr(sym, st)
            assert got.shape == want.shape
            for x, y in zip(got.data, want.data):
                assert x == pytest.approx(y, rel=1e-4, abs=1e-4), text
            checked += 1
    assert checked > 300


def test_pred_lie_matches_numeric_growth(space, field):
    # for e <= f the rule demands L(e) <= L(f); check the derivative signs
    # numerically on the invariant a . v >= 0 from straight-line motion
    rng = random.Random(9)
    p = parse_pred("a . v >= 0", space)
    got, _ = lie_pred(p, field)
    for _ in range(50):
        st = space.sample(rng)
        lhs = numeric_lie(parse_expr("a . v", space), field, st)
        assert eval_pred(got, st) == (lhs.as_float() >= -1e-7)
