"""Generated fast paths for integrator-side evaluation.

The tree-walking evaluator in ``expr`` is fine for discrete steps but too
slow for the inner loop of a Runge-Kutta integrator, which evaluates every
right-hand side four times per step. This module compiles a vector field
and an evolution-domain predicate into plain Python functions of

    (y, D)

where ``y`` is the flat continuous vector (see ``state.cont_vector``) and
``D`` is a snapshot of the discrete slots from ``disc_env``. The generated
code calls the same helpers in ``scalarops`` and spells out the same
accumulation order as ``MatVal``, so with ``tol=0`` the results agree with
the tree walker bit for bit.

Comparisons are compiled with boundary-band semantics: values within
``tol`` of a comparison's boundary count as on the boundary, so strict
inequalities fail there and non-strict ones hold. This makes the guard
"s != 0" inside a piecewise right-hand side take the s = 0 branch for
|s| <= tol, and makes an evolution domain like "t < eps" report an exit
once t is within tol of eps instead of overshooting by one float ulp.
``band_holds`` is the interpreted twin of the compiled predicate, used as
an oracle in tests and for predicates the generator does not accept
(set quantifiers).
"""

import math

from . import scalarops
from .errors import ShapeMismatchError, UnsupportedNodeError
from .expr import (
    Abs, Acos, Add, And, Ang, Cmp, Cond, Const, Cos, Div, Dot, ExistsIn,
    FalseP, ForallIn, Implies, Log, MatLit, Max, Min, ModeLit, Mul, Neg,
    Norm, Not, Or, Pred, ScalarMul, Sgn, Sin, Sqrt, Sub, Transpose, TrueP,
    Var, Wrap, eval_expr, shape_of,
)

__all__ = [
    "band_holds", "compile_field", "compile_pred", "disc_env",
    "CompiledField", "CompiledPred",
]

_NAMESPACE = {
    "math": math,
    "_div": scalarops.div_checked,
    "_acos": scalarops.acos_checked,
    "_sqrt": scalarops.sqrt_checked,
    "_log": scalarops.log_checked,
    "_sgn": scalarops.sgn,
    "_wrap": scalarops.wrap_angle,
    "_ang": scalarops.ang,
    "abs": abs,
    "min": min,
    "max": max,
}


def _recip(d):
    """Matches Div's matrix path: check once, then scale by 1/d."""
    if d == 0.0:
        raise scalarops.DivByZeroError("division by zero")
    return 1.0 / d


_NAMESPACE["_recip"] = _recip


def disc_env(st):
    """Discrete slots as plain Python values for generated code."""
    out = {}
    for lens in st.space.disc_lenses:
        v = st.disc[lens.name]
        if isinstance(v, str):
            out[lens.name] = v
        elif isinstance(v, frozenset):
            out[lens.name] = frozenset(m.data for m in v)
        elif v.is_scalar:
            out[lens.name] = v.data[0]
        else:
            out[lens.name] = v.data
    return out


class _Emitter:
    """Walks an expression and yields one Python source string per
    component, row-major. Every returned string is self-delimiting
    (parenthesized or atomic)."""

    def __init__(self, space, tol):
        self.space = space
        self.tol = tol

    def comps(self, e):
        if isinstance(e, Const):
            return [repr(v) for v in e.value.data]
        if isinstance(e, Var):
            return self._var(e)
        if isinstance(e, Neg):
            return [f"(-{c})" for c in self.comps(e.e)]
        if isinstance(e, Add):
            return [f"({a} + {b})"
                    for a, b in zip(self.comps(e.l), self.comps(e.r))]
        if isinstance(e, Sub):
            return [f"({a} - {b})"
                    for a, b in zip(self.comps(e.l), self.comps(e.r))]
        if isinstance(e, Mul):
            return [f"({self.scalar(e.l)} * {self.scalar(e.r)})"]
        if isinstance(e, ScalarMul):
            s = self.scalar(e.s)
            return [f"({s} * {c})" for c in self.comps(e.m)]
        if isinstance(e, Div):
            den = self.scalar(e.d)
            num = self.comps(e.n)
            if len(num) == 1:
                return [f"_div({num[0]}, {den})"]
            return [f"(_recip({den}) * {c})" for c in num]
        if isinstance(e, Dot):
            return [self._dot(self.comps(e.l), self.comps(e.r))]
        if isinstance(e, Norm):
            c = self.comps(e.e)
            return [f"math.sqrt({self._dot(c, c)})"]
        if isinstance(e, Transpose):
            inner = self.comps(e.e)
            _, rows, cols = shape_of(e.e, self.space)
            return [inner[i * cols + j]
                    for j in range(cols) for i in range(rows)]
        if isinstance(e, MatLit):
            return [self.scalar(c) for row in e.rows for c in row]
        if isinstance(e, Sin):
            return [f"math.sin({self.scalar(e.e)})"]
        if isinstance(e, Cos):
            return [f"math.cos({self.scalar(e.e)})"]
        if isinstance(e, Acos):
            return [f"_acos({self.scalar(e.e)})"]
        if isinstance(e, Sqrt):
            return [f"_sqrt({self.scalar(e.e)})"]
        if isinstance(e, Log):
            return [f"_log({self.scalar(e.e)})"]
        if isinstance(e, Sgn):
            return [f"_sgn({self.scalar(e.e)})"]
        if isinstance(e, Abs):
            return [f"abs({self.scalar(e.e)})"]
        if isinstance(e, Wrap):
            return [f"_wrap({self.scalar(e.e)})"]
        if isinstance(e, Ang):
            x, y = self.comps(e.e)
            return [f"_ang({x}, {y})"]
        if isinstance(e, (Min, Max)):
            fn = "min" if isinstance(e, Min) else "max"
            return [f"{fn}({self.scalar(e.l)}, {self.scalar(e.r)})"]
        if isinstance(e, Cond):
            test = self.pred(e.test)
            return [f"({a} if {test} else {b})"
                    for a, b in zip(self.comps(e.then), self.comps(e.els))]
        raise UnsupportedNodeError(
            f"cannot compile {type(e).__name__} node")

    def scalar(self, e):
        c = self.comps(e)
        if len(c) != 1:
            raise ShapeMismatchError(f"{e} is not scalar")
        return c[0]

    def _var(self, e):
        lens = self.space.lens(e.name)
        if lens.kind == "cont":
            base = lens.offset
            if e.elem is not None:
                i, j = e.elem
                return [f"y[{base + (i - 1) * lens.cols + (j - 1)}]"]
            return [f"y[{base + k}]" for k in range(lens.size)]
        if lens.sort == "real":
            return [f"D[{e.name!r}]"]
        if lens.sort == "vec2":
            if e.elem is not None:
                return [f"D[{e.name!r}][{e.elem[1] - 1}]"]
            return [f"D[{e.name!r}][0]", f"D[{e.name!r}][1]"]
        raise UnsupportedNodeError(
            f"{e.name!r} is {lens.sort}-sorted; generated code reads it "
            "only inside = / != tests")

    def _dot(self, left, right):
        terms = " + ".join(f"{a} * {b}" for a, b in zip(left, right))
        return f"(0.0 + {terms})"

    # -- predicates, with the boundary band --------------------------------

    def pred(self, p):
        if isinstance(p, TrueP):
            return "True"
        if isinstance(p, FalseP):
            return "False"
        if isinstance(p, Cmp):
            return self._cmp(p)
        if isinstance(p, Not):
            return f"(not {self.pred(p.p)})"
        if isinstance(p, And):
            return f"({self.pred(p.l)} and {self.pred(p.r)})"
        if isinstance(p, Or):
            return f"({self.pred(p.l)} or {self.pred(p.r)})"
        if isinstance(p, Implies):
            return f"((not {self.pred(p.l)}) or {self.pred(p.r)})"
        if isinstance(p, (ExistsIn, ForallIn)):
            raise UnsupportedNodeError(
                "set quantifiers are not compiled; evaluate them with "
                "band_holds instead")
        raise UnsupportedNodeError(
            f"cannot compile {type(p).__name__} predicate")

    def _mode_side(self, e):
        if isinstance(e, ModeLit):
            return repr(e.symbol)
        if isinstance(e, Var) and e.elem is None:
            lens = self.space.lens(e.name)
            if lens.kind == "disc" and lens.sort == "mode":
                return f"D[{e.name!r}]"
        return None

    def _cmp(self, p):
        ml, mr = self._mode_side(p.l), self._mode_side(p.r)
        if ml or mr:
            if not (ml and mr):
                raise ShapeMismatchError(f"mode compared with non-mode in {p}")
            op = "==" if p.op == "=" else "!="
            return f"({ml} {op} {mr})"
        lc, rc = self.comps(p.l), self.comps(p.r)
        t = repr(self.tol)
        if p.op in ("=", "!="):
            same = " and ".join(
                f"abs({a} - {b}) <= {t}" for a, b in zip(lc, rc))
            return f"({same})" if p.op == "=" else f"(not ({same}))"
        x, y = lc[0], rc[0]
        if p.op == "<":
            return f"(({x}) - ({y}) < -{t})"
        if p.op == "<=":
            return f"(({x}) - ({y}) <= {t})"
        if p.op == ">":
            return f"(({x}) - ({y}) > {t})"
        return f"(({x}) - ({y}) >= -{t})"


def _build(src, name):
    ns = dict(_NAMESPACE)
    exec(compile(src, f"<compiled {name}>", "exec"), ns)
    return ns["_f"]


class CompiledField:
    """Derivative of the flat continuous vector as a generated function."""

    def __init__(self, field, tol=1e-9):
        self.field = field
        space = field.space
        em = _Emitter(space, tol)
        comps = ["0.0"] * space.dim
        for name, rhs in field.entries:
            lens = space.lens(name)
            for k, c in enumerate(em.comps(rhs)):
                comps[lens.offset + k] = c
        self.source = ("def _f(y, D):\n    return ("
                       + ", ".join(comps) + ",)\n")
        self._fn = _build(self.source, "field")

    def __call__(self, y, disc):
        return self._fn(y, disc)


class CompiledPred:
    """Boundary-band truth value of a predicate as a generated function."""

    def __init__(self, pred, space, tol):
        self.pred = pred
        self.tol = tol
        body = _Emitter(space, tol).pred(pred)
        self.source = f"def _f(y, D):\n    return {body}\n"
        self._fn = _build(self.source, "predicate")

    def __call__(self, y, disc):
        return self._fn(y, disc)


def compile_field(field, tol=1e-9):
    return CompiledField(field, tol)


def compile_pred(pred, space, tol):
    return CompiledPred(pred, space, tol)


def band_holds(p, st, tol, env=None):
    """Interpreted boundary-band evaluation; the compiled twin's oracle.

    Unlike ``eval_pred`` (which loosens every comparison toward
    acceptance), the band makes strict comparisons fail within ``tol`` of
    the boundary. The two agree at ``tol == 0``.
    """
    if isinstance(p, TrueP):
        return True
    if isinstance(p, FalseP):
        return False
    if isinstance(p, Not):
        return not band_holds(p.p, st, tol, env)
    if isinstance(p, And):
        return band_holds(p.l, st, tol, env) and band_holds(p.r, st, tol, env)
    if isinstance(p, Or):
        return band_holds(p.l, st, tol, env) or band_holds(p.r, st, tol, env)
    if isinstance(p, Implies):
        return (not band_holds(p.l, st, tol, env)
                or band_holds(p.r, st, tol, env))
    if isinstance(p, (ExistsIn, ForallIn)):
        members = st.disc[p.set_name]
        env = dict(env) if env else {}
        found_all = True
        for m in sorted(members, key=lambda v: v.data):
            env[p.var] = m
            got = band_holds(p.body, st, tol, env)
            if isinstance(p, ExistsIn) and got:
                return True
            found_all = found_all and got
        return False if isinstance(p, ExistsIn) else found_all
    if not isinstance(p, Cmp):
        raise UnsupportedNodeError(f"cannot evaluate {type(p).__name__}")
    a = eval_expr(p.l, st, env)
    b = eval_expr(p.r, st, env)
    if isinstance(a, str) or isinstance(b, str):
        if not (isinstance(a, str) and isinstance(b, str)):
            raise ShapeMismatchError(f"mode compared with non-mode in {p}")
        if p.op == "=":
            return a == b
        if p.op == "!=":
            return a != b
        raise ShapeMismatchError(f"ordered comparison of modes in {p}")
    if p.op in ("=", "!="):
        same = all(abs(x - y) <= tol for x, y in zip(a.data, b.data))
        return same if p.op == "=" else not same
    d = a.as_float() - b.as_float()
    if p.op == "<":
        return d < -tol
    if p.op == "<=":
        return d <= tol
    if p.op == ">":
        return d > tol
    return d >= -tol
