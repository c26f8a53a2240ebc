"""Generated evaluation paths against the tree-walking interpreters."""

import random

import pytest

from helmproof.compiled import (
    band_holds, compile_field, compile_pred, disc_env,
)
from helmproof.deriv import VectorField
from helmproof.errors import DivByZeroError, UnsupportedNodeError
from helmproof.expr import eval_pred
from helmproof.parsing import parse_expr, parse_pred
from helmproof.state import cont, cont_vector, disc, register_space


@pytest.fixture(scope="module")
def space():
    return register_space([
        cont("t", 1, 1), cont("p", 1, 2), cont("v", 1, 2), cont("a", 1, 2),
        cont("s", 1, 1), cont("phi", 1, 1),
        disc("rs", "real"), disc("wp", "vec2"),
        disc("m", "mode", modes=("MOM", "HCM")), disc("ob", "set"),
    ])


@pytest.fixture(scope="module")
def field(space):
    return VectorField.make(space, {
        "t": parse_expr("1", space),
        "p": parse_expr("v", space),
        "v": parse_expr("a", space),
        "s": parse_expr("cond(s != 0, v . a / s, norm(a))", space),
        "phi": parse_expr(
            "cond(s != 0,"
            " acos(((v + a) . v) / (norm(v + a) * norm(v))), 0)", space),
    })


def test_field_matches_interpreter_bitwise(space, field):
    cf = compile_field(field, tol=0.0)
    rng = random.Random(11)
    checked = 0
    for _ in range(400):
        st = space.sample(rng)
        y = list(cont_vector(st))
        env = disc_env(st)
        try:
            want = field.derivative_vector(st)
        except DivByZeroError:
            with pytest.raises(DivByZeroError):
                cf(y, env)
            continue
        assert tuple(cf(y, env)) == tuple(want)
        checked += 1
    assert checked > 300


def test_unbound_lenses_get_zero(space):
    f = VectorField.make(space, {"t": parse_expr("1", space)})
    cf = compile_field(f)
    st = space.sample(random.Random(0))
    dy = cf(list(cont_vector(st)), disc_env(st))
    assert dy[0] == 1.0 and all(v == 0.0 for v in dy[1:])


def test_discrete_references(space):
    f = VectorField.make(space, {
        "p": parse_expr("wp - p", space),
        "s": parse_expr("rs - s", space),
    })
    cf = compile_field(f)
    st = space.make_state(cont_vals={"p": (1.0, 2.0), "s": 1.0},
                          disc_vals={"wp": (4.0, 6.0), "rs": 3.0})
    dy = cf(list(cont_vector(st)), disc_env(st))
    lens = space.lens("p")
    assert dy[lens.offset:lens.offset + 2] == (3.0, 4.0)
    assert dy[space.lens("s").offset] == 2.0


def test_zero_guard_band(space):
    f = VectorField.make(space, {
        "s": parse_expr("cond(s != 0, v . a / s, norm(a))", space),
    })
    cf = compile_field(f, tol=1e-9)
    st = space.make_state(cont_vals={"s": 5e-10, "v": (1.0, 0.0),
                                     "a": (3.0, 4.0)})
    dy = cf(list(cont_vector(st)), disc_env(st))
    # within the band the guard counts as s = 0, so the norm branch runs
    assert dy[space.lens("s").offset] == 5.0
    # the interpreter's exact semantics divide by the tiny s instead
    assert abs(f.derivative_vector(st)[space.lens("s").offset]) > 1e9


def test_band_comparisons(space):
    st = space.make_state(cont_vals={"t": 0.1, "s": 2.0})
    tol = 1e-6

    def check(text, expected):
        p = parse_pred(text, space)
        cp = compile_pred(p, space, tol)
        got = cp(list(cont_vector(st)), disc_env(st))
        assert got == expected
        assert band_holds(p, st, tol) == expected

    check("t < 1/10", False)        # at the boundary, strict fails
    check("t <= 1/10", True)        # non-strict holds
    check("t < 1000001/10000000", False)  # 1e-7 past t, inside the band
    check("t < 11/100", True)
    check("s >= 2", True)
    check("s > 2", False)
    check("s = 2", True)
    check("s != 2", False)
    check("t < 1/10 \\/ s >= 2", True)
    check("s > 0 => t <= 1/10", True)
    check("!(t < 1/10)", True)      # negation of a failed strict


def test_band_agrees_with_exact_at_zero_tol(space):
    rng = random.Random(5)
    preds = [
        parse_pred("0 <= s /\\ s <= 4", space),
        parse_pred("s * [sin(phi), cos(phi)] = v", space),
        parse_pred("norm(p) > 2 => s < 3", space),
        parse_pred("!(t > 1) \\/ s != 0", space),
    ]
    for _ in range(300):
        st = space.sample(rng)
        for p in preds:
            assert band_holds(p, st, 0.0) == eval_pred(p, st)
            cp = compile_pred(p, space, 0.0)
            assert cp(list(cont_vector(st)), disc_env(st)) == eval_pred(p, st)


def test_mode_comparison_compiles(space):
    p = parse_pred("m = MOM", space)
    cp = compile_pred(p, space, 0.0)
    st = space.make_state(disc_vals={"m": "HCM"})
    assert cp(list(cont_vector(st)), disc_env(st)) is False
    assert band_holds(p, st, 0.0) is False


def test_quantifier_not_compiled(space):
    p = parse_pred("exists o in ob. norm(o - p) <= 1", space)
    with pytest.raises(UnsupportedNodeError):
        compile_pred(p, space, 0.0)
    st = space.make_state(cont_vals={"p": (0.0, 0.0)},
                          disc_vals={"ob": [(0.5, 0.5)]})
    assert band_holds(p, st, 0.0) is True


def test_set_lens_rejected_in_field(space):
    with pytest.raises(UnsupportedNodeError):
        compile_field(VectorField.make(space, {
            "s": parse_expr("cond(exists o in ob. norm(o - p) <= 1, 1, 0)",
                            space),
        }))
