"""State space, matrix values, and lens laws."""

import math
import random

import pytest

from helmproof.errors import (
    DuplicateNameError,
    IndexOutOfRangeError,
    ShapeMismatchError,
    UnknownLensError,
    ZeroDimensionError,
)
from helmproof.state import (
    MatVal,
    cont,
    cont_vector,
    disc,
    lens_get,
    lens_put,
    mat_lens,
    register_space,
    with_cont_vector,
)


def small_space():
    return register_space([
        cont("p", 1, 2),
        cont("v", 1, 2),
        cont("s", 1, 1),
        disc("rs", "real"),
        disc("wp", "vec2"),
        disc("m", "mode", ("MOM", "HCM", "OCM", "CAM")),
        disc("ob", "set"),
    ])


def test_dim_counts_continuous_entries():
    sp = small_space()
    assert sp.dim == 5


def test_duplicate_declaration_rejected():
    with pytest.raises(DuplicateNameError):
        register_space([cont("p", 1, 2), disc("p", "real")])


def test_zero_dimension_rejected():
    with pytest.raises(ZeroDimensionError):
        register_space([cont("p", 0, 2)])


def test_unknown_lens_lookup():
    sp = small_space()
    with pytest.raises(UnknownLensError):
        sp.lens("q")


def test_matval_basics():
    m = MatVal.from_rows([[1, 2], [3, 4]])
    assert m.shape == (2, 2)
    assert m.entry(2, 1) == 3.0
    assert m.transpose().entry(1, 2) == 3.0
    with pytest.raises(ShapeMismatchError):
        MatVal.from_rows([[1, 2], [3]])
    assert MatVal.vec2(3, 4).norm() == pytest.approx(5.0)
    assert MatVal.scalar(-2.5).norm() == pytest.approx(2.5)


def test_scalar_interchange():
    assert MatVal.scalar(7).as_float() == 7.0
    with pytest.raises(ShapeMismatchError):
        MatVal.vec2(1, 2).as_float()


def test_get_put_roundtrip():
    sp = small_space()
    st = sp.zero_state()
    p = sp.lens("p")
    st2 = lens_put(st, p, MatVal.vec2(1.0, -2.0))
    assert lens_get(st2, p) == MatVal.vec2(1.0, -2.0)
    assert lens_get(st2, sp.lens("v")) == MatVal.vec2(0.0, 0.0)


def test_mode_put_checked():
    sp = small_space()
    st = sp.zero_state()
    with pytest.raises(ShapeMismatchError):
        lens_put(st, sp.lens("m"), "NOPE")
    st2 = lens_put(st, sp.lens("m"), "HCM")
    assert lens_get(st2, sp.lens("m")) == "HCM"


def test_mat_lens_element_access():
    sp = small_space()
    st = sp.make_state(cont_vals={"p": (3.0, 4.0)})
    py = mat_lens(sp.lens("p"), 1, 2)
    assert lens_get(st, py).as_float() == 4.0
    st2 = lens_put(st, py, MatVal.scalar(9.0))
    assert lens_get(st2, sp.lens("p")) == MatVal.vec2(3.0, 9.0)


def test_mat_lens_bounds():
    sp = small_space()
    with pytest.raises(IndexOutOfRangeError):
        mat_lens(sp.lens("s"), 1, 2)
    with pytest.raises(ShapeMismatchError):
        mat_lens(sp.lens("m"), 1, 1)


def test_mat_lens_on_discrete_vector():
    sp = small_space()
    st = sp.make_state(disc_vals={"wp": (5.0, 6.0)})
    wy = mat_lens(sp.lens("wp"), 1, 2)
    assert lens_get(st, wy).as_float() == 6.0
    st2 = lens_put(st, wy, MatVal.scalar(0.5))
    assert lens_get(st2, sp.lens("wp")) == MatVal.vec2(5.0, 0.5)


def random_value(rng, lens):
    if lens.kind == "cont":
        return MatVal(lens.rows, lens.cols,
                      tuple(rng.uniform(-10, 10) for _ in range(lens.size)))
    if lens.sort == "real":
        return MatVal.scalar(rng.uniform(-10, 10))
    if lens.sort == "vec2":
        return MatVal.vec2(rng.uniform(-10, 10), rng.uniform(-10, 10))
    if lens.sort == "mode":
        return lens.modes[rng.randrange(len(lens.modes))]
    return frozenset(MatVal.vec2(rng.uniform(-10, 10), rng.uniform(-10, 10))
                     for _ in range(rng.randrange(3)))


def test_lens_laws_hold_on_random_states():
    sp = small_space()
    rng = random.Random(7)
    lenses = list(sp.lenses) + [mat_lens(sp.lens("p"), 1, 1),
                                mat_lens(sp.lens("wp"), 1, 2)]
    for _ in range(200):
        st = sp.sample(rng)
        for l in lenses:
            v = random_value(rng, l)
            w = random_value(rng, l)
            # GetPut: writing back what was read changes nothing
            assert lens_put(st, l, lens_get(st, l)) == st
            # PutGet: a write is visible to the next read
            assert lens_get(lens_put(st, l, v), l) == v
            # PutPut: the second write wins
            assert lens_put(lens_put(st, l, v), l, w) == lens_put(st, l, w)


def test_continuous_get_is_linear():
    # A continuous lens reads a slice of the vector, so get must commute
    # with the vector-space operations on the flat state.
    sp = small_space()
    rng = random.Random(11)
    for _ in range(100):
        x = [rng.uniform(-5, 5) for _ in range(sp.dim)]
        y = [rng.uniform(-5, 5) for _ in range(sp.dim)]
        al, be = rng.uniform(-2, 2), rng.uniform(-2, 2)
        mix = [al * a + be * b for a, b in zip(x, y)]
        st = sp.zero_state()
        for l in sp.cont_lenses:
            gx = lens_get(with_cont_vector(st, x), l)
            gy = lens_get(with_cont_vector(st, y), l)
            gm = lens_get(with_cont_vector(st, mix), l)
            want = gx.scale(al).add(gy.scale(be))
            assert all(math.isclose(a, b, abs_tol=1e-9)
                       for a, b in zip(gm.data, want.data))


def test_continuous_get_is_bounded():
    # Projection norm never exceeds the vector norm.
    sp = small_space()
    rng = random.Random(13)
    for _ in range(100):
        x = [rng.uniform(-5, 5) for _ in range(sp.dim)]
        st = with_cont_vector(sp.zero_state(), x)
        full = math.sqrt(sum(a * a for a in x))
        for l in sp.cont_lenses:
            assert lens_get(st, l).norm() <= full + 1e-12


def test_make_state_and_vector_roundtrip():
    sp = small_space()
    st = sp.make_state(cont_vals={"p": (1, 2), "v": (3, 4), "s": 5},
                       disc_vals={"m": "MOM", "ob": [(0, 0), (1, 1)]})
    assert cont_vector(st) == (1.0, 2.0, 3.0, 4.0, 5.0)
    assert with_cont_vector(st, cont_vector(st)) == st
    assert lens_get(st, sp.lens("ob")) == frozenset(
        {MatVal.vec2(0, 0), MatVal.vec2(1, 1)})
    with pytest.raises(ShapeMismatchError):
        with_cont_vector(st, (1.0,))


def test_describe_mentions_every_lens():
    sp = small_space()
    text = sp.zero_state().describe()
    for l in sp.lenses:
        assert l.name in text
