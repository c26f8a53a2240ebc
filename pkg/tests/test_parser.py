"""Concrete syntax: tokenizing, parsing, errors, and print round-trips."""

import math
import random

import pytest
from hypothesis import given, settings, strategies as hst

from helmproof.errors import (
    IndexOutOfRangeError, ParseError, RaggedRowsError,
)
from helmproof.expr import (
    Add, And, Cmp, Cond, Const, Div, Dot, ExistsIn, MatLit, Min, ModeLit,
    Mul, Neg, Norm, Not, Or, ScalarMul, Sin, Sub, Var, eval_expr, eval_pred,
)
from helmproof.parsing import parse_expr, parse_matrix, parse_pred
from helmproof.state import MatVal, cont, disc, register_space


@pytest.fixture(scope="module")
def space():
    return register_space([
        cont("t", 1, 1), cont("p", 1, 2), cont("v", 1, 2), cont("a", 1, 2),
        cont("s", 1, 1), cont("phi", 1, 1),
        disc("wp", "vec2"), disc("ob", "set"), disc("rs", "real"),
        disc("m", "mode", ("OCM", "MOM", "HCM", "CAM")),
    ])


def state_for(space, **over):
    cvals = {"t": 0.0, "p": (-10.0, -10.0), "v": (-0.5, -3.8),
             "a": (1.0, 2.0), "s": 4.0, "phi": 0.25}
    dvals = {"wp": (0.0, 0.0), "ob": [(-12.0, -18.0)], "rs": 4.0, "m": "MOM"}
    for k, v in over.items():
        (cvals if k in cvals else dvals)[k] = v
    return space.make_state(cont_vals=cvals, disc_vals=dvals)


def test_precedence(space):
    e = parse_expr("1 + 2 * 3", space)
    assert eval_expr(e, None).as_float() == 7.0
    e = parse_expr("(1 + 2) * 3", space)
    assert eval_expr(e, None).as_float() == 9.0
    e = parse_expr("2 - 3 - 4", space)
    assert eval_expr(e, None).as_float() == -5.0
    e = parse_expr("-2^2", space)
    assert eval_expr(e, None).as_float() == -4.0
    e = parse_expr("12 / 4 / 3", space)
    assert eval_expr(e, None).as_float() == 1.0


def test_dot_binds_tighter_than_star(space):
    st = state_for(space)
    e = parse_expr("2 * v . a", space)
    assert isinstance(e, Mul) and isinstance(e.r, Dot)
    e = parse_expr("v . a / s", space)
    assert isinstance(e, Div)


def test_star_resolves_by_shape(space):
    assert isinstance(parse_expr("2 * 3", space), Mul)
    e = parse_expr("2 * p", space)
    assert isinstance(e, ScalarMul)
    e = parse_expr("p * 2", space)
    assert isinstance(e, ScalarMul) and e.s == Const.of(2)
    with pytest.raises(ParseError):
        parse_expr("p * v", space)
    with pytest.raises(ParseError):
        parse_expr("p / v", space)


def test_unary_functions_with_and_without_parens(space):
    st = state_for(space)
    a = parse_expr("sin(phi)", space)
    b = parse_expr("sin phi", space)
    assert a == b == Sin(Var("phi"))
    assert parse_expr("norm v", space) == Norm(Var("v"))
    assert eval_expr(parse_expr("sin phi ^ 2", space), st).as_float() == \
        pytest.approx(math.sin(0.25) ** 2)


def test_exponent_sugar(space):
    assert parse_expr("s^3", space) == Mul(Mul(Var("s"), Var("s")), Var("s"))
    with pytest.raises(ParseError):
        parse_expr("s^0", space)
    with pytest.raises(ParseError):
        parse_expr("s^2.5", space)
    with pytest.raises(ParseError):
        parse_expr("p^2", space)


def test_matrix_literals(space):
    assert parse_matrix("[1, 2]") == MatVal.vec2(1.0, 2.0)
    assert parse_matrix("[[1, 2], [3, 4]]") == MatVal.from_rows(
        [[1.0, 2.0], [3.0, 4.0]])
    assert parse_matrix("[2 + 3]") == MatVal.scalar(5.0)
    with pytest.raises(RaggedRowsError):
        parse_matrix("[[1, 2], [3]]")
    with pytest.raises(ParseError):
        parse_matrix("[1, 2")


def test_element_access(space):
    e = parse_expr("p[1,2]", space)
    assert e == Var("p", (1, 2))
    with pytest.raises(IndexOutOfRangeError):
        parse_expr("p[2,1]", space)
    with pytest.raises(IndexOutOfRangeError):
        parse_expr("s[1,2]", space)


def test_scientific_notation_is_exact(space):
    e = parse_expr("1e-3", space)
    assert e.exact[0] == pytest.approx(0) or e.exact[0].denominator == 1000
    assert eval_expr(e, None).as_float() == 1e-3


def test_mode_literals_and_consts(space):
    p = parse_pred("m = MOM", space)
    assert p == Cmp("=", Var("m"), ModeLit("MOM"))
    e = parse_expr("D + 1", space, consts={"D": Const.of(20)})
    assert eval_expr(e, None).as_float() == 21.0
    with pytest.raises(ParseError):
        parse_expr("D + 1", space)


def test_named_expressions_and_predicates(space):
    st = state_for(space)
    defs = {"ao": Sub(Var("wp"), Var("p"))}
    e = parse_expr("norm(ao)", space, defs=defs)
    assert eval_expr(e, st).as_float() == pytest.approx(math.sqrt(200))
    preds = {"close": parse_pred("norm(wp - p) <= 15", space)}
    p = parse_pred("close /\\ m = MOM", space, preds=preds)
    assert eval_pred(p, st)


def test_predicate_grammar(space):
    st = state_for(space)
    p = parse_pred("true /\\ !false", space)
    assert eval_pred(p, st)
    p = parse_pred("s = 4 => t = 0", space)
    assert eval_pred(p, st)
    p = parse_pred("s = 5 \\/ t = 0 /\\ phi = 0.25", space)
    assert isinstance(p, Or) and isinstance(p.r, And)
    p = parse_pred("s = 1 => s = 2 => true", space)
    assert eval_pred(p, st)
    p = parse_pred("(s + 1) <= 5", space)
    assert eval_pred(p, st)
    p = parse_pred("exists o in ob. norm(o - p) <= 20", space)
    assert eval_pred(p, st)
    p = parse_pred("forall o in ob. !(o = p)", space)
    assert eval_pred(p, st)


def test_quantifier_errors(space):
    with pytest.raises(ParseError):
        parse_pred("exists o in rs. o = o", space)
    with pytest.raises(ParseError):
        parse_pred("exists p in ob. p = p", space)
    with pytest.raises(ParseError):
        parse_pred("exists sin in ob. true", space)


def test_parse_error_position(space):
    with pytest.raises(ParseError) as err:
        parse_expr("s +\n* 2", space)
    assert err.value.line == 2 and err.value.col == 1
    with pytest.raises(ParseError) as err:
        parse_expr("s + unknown_name", space)
    assert err.value.col == 5
    with pytest.raises(ParseError):
        parse_expr("s + 1 extra", space)
    with pytest.raises(ParseError):
        parse_expr("s @ 2", space)


def test_comments_and_whitespace(space):
    e = parse_expr("s + 1  # trailing words\n  + 2", space)
    st = state_for(space)
    assert eval_expr(e, st).as_float() == 7.0


def test_reserved_names_rejected(space):
    with pytest.raises(ParseError):
        parse_expr("ode + 1", space)
    with pytest.raises(ParseError):
        parse_pred("skip = 1", space)


# --- print/parse round-trip ------------------------------------------------


def _exprs(space):
    scalar_leaves = hst.sampled_from([
        Var("s"), Var("t"), Var("phi"), Var("rs"), Var("p", (1, 1)),
        Var("v", (1, 2)), Const.of(2), Const.of("0.5"), Const.of(-3),
    ])
    vec_leaves = hst.sampled_from([
        Var("p"), Var("v"), Var("a"), Var("wp"),
        MatLit(((Const.of(1), Const.of(2)),)),
    ])

    def grow(scalars, vecs):
        svec = hst.one_of(scalars, vecs)
        new_scalars = hst.one_of(
            scalar_leaves,
            hst.tuples(scalars, scalars).map(lambda t: Add(*t)),
            hst.tuples(scalars, scalars).map(lambda t: Sub(*t)),
            hst.tuples(scalars, scalars).map(lambda t: Mul(*t)),
            hst.tuples(scalars, scalars).map(lambda t: Div(*t)),
            hst.tuples(vecs, vecs).map(lambda t: Dot(*t)),
            scalars.map(Neg),
            scalars.map(Sin),
            svec.map(Norm),
            hst.tuples(scalars, scalars).map(lambda t: Min(*t)),
        )
        new_vecs = hst.one_of(
            vec_leaves,
            hst.tuples(vecs, vecs).map(lambda t: Add(*t)),
            hst.tuples(vecs, vecs).map(lambda t: Sub(*t)),
            hst.tuples(scalars, vecs).map(lambda t: ScalarMul(*t)),
            hst.tuples(vecs, scalars).map(lambda t: Div(*t)),
            vecs.map(Neg),
        )
        return new_scalars, new_vecs

    scalars, vecs = scalar_leaves, vec_leaves
    for _ in range(3):
        scalars, vecs = grow(scalars, vecs)
    return hst.one_of(scalars, vecs)


def _preds(space):
    exprs = _exprs(space)
    cmps = hst.tuples(hst.sampled_from(["=", "!=", "<", "<=", ">", ">="]),
                      exprs, exprs).map(
        lambda t: Cmp(t[0], t[1], t[2]) if _same_shape(t[1], t[2], space)
        else Cmp("=", Var("s"), Const.of(1)))

    def fix_order(p):
        # ordered comparisons need scalars; the map above only guards shape
        if p.op not in ("=", "!=") and p.l.shape(space)[1:] != (1, 1):
            return Cmp(p.op, Var("s"), Var("t"))
        return p

    cmps = cmps.map(fix_order)
    kids = cmps
    for _ in range(2):
        kids = hst.one_of(
            cmps,
            hst.tuples(kids, kids).map(lambda t: And(*t)),
            hst.tuples(kids, kids).map(lambda t: Or(*t)),
            kids.map(Not),
        )
    return kids


def _same_shape(a, b, space):
    return a.shape(space) == b.shape(space)


_SPACE = register_space([
    cont("t", 1, 1), cont("p", 1, 2), cont("v", 1, 2), cont("a", 1, 2),
    cont("s", 1, 1), cont("phi", 1, 1),
    disc("wp", "vec2"), disc("ob", "set"), disc("rs", "real"),
    disc("m", "mode", ("OCM", "MOM", "HCM", "CAM")),
])


@settings(max_examples=150, deadline=None)
@given(e=_exprs(_SPACE))
def test_expr_print_parse_fixpoint(e):
    text = str(e)
    p1 = parse_expr(text, _SPACE)
    assert str(parse_expr(str(p1), _SPACE)) == str(p1)
    rng = random.Random(7)
    for _ in range(3):
        st = _SPACE.sample(rng)
        try:
            want = eval_expr(e, st)
        except Exception as exc:  # noqa: BLE001 - compare failure classes
            with pytest.raises(type(exc)):
                eval_expr(p1, st)
            continue
        got = eval_expr(p1, st)
        assert got.data == want.data


@settings(max_examples=100, deadline=None)
@given(p=_preds(_SPACE))
def test_pred_print_parse_fixpoint(p):
    text = str(p)
    p1 = parse_pred(text, _SPACE)
    assert str(parse_pred(str(p1), _SPACE)) == str(p1)
    rng = random.Random(11)
    for _ in range(3):
        st = _SPACE.sample(rng)
        try:
            want = eval_pred(p, st)
        except Exception as exc:  # noqa: BLE001
            with pytest.raises(type(exc)):
                eval_pred(p1, st)
            continue
        assert eval_pred(p1, st) == want
