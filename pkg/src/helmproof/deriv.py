"""Vector fields and Lie derivatives of expressions and predicates.

A vector field binds continuous lenses to right-hand sides of matching
shape; unbound continuous lenses and numeric discrete lenses have
derivative zero along the flow. The Lie derivative follows the usual
calculus rules and reports *side conditions*: predicates that must hold
on the evolution domain for the derivative to exist there (nonzero norms
and denominators, positive radicands).

Nodes without a derivative everywhere on their domain (absolute value,
sign, min, max, conditionals, angle extraction, arc cosine, wrapping) are
rejected with NotDifferentiableError, as are mode- and set-sorted
subtrees. Comparisons differentiate as

    e = f   ->  L(e) = L(f)
    e <= f  ->  L(e) <= L(f)      (strict < weakens to <= as well)

with >= and > mirrored first. Negations, disjunctions, implications and
quantifiers have no derivative rule here.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    NotDifferentiableError, ShapeMismatchError, UnknownLensError,
    UnsupportedPredicateError,
)
from .expr import (
    Abs, Acos, Add, Ang, And, Cmp, Cond, Const, Cos, Div, Dot, ExistsIn,
    FALSE, FalseP, ForallIn, Implies, MatLit, Max, Min, ModeLit, Mul, Neg,
    Norm, Not, Or, ScalarMul, Sgn, Sin, Sqrt, Sub, TRUE, Transpose, TrueP,
    Var, Wrap,
)
from .state import MatVal


@dataclass(frozen=True)
class VectorField:
    """Right-hand sides for continuous lenses, in declaration order."""

    space: object
    entries: tuple  # tuple of (lens name, Expr)

    @staticmethod
    def make(space, bindings):
        seen = set()
        entries = []
        for name in sorted(bindings):
            e = bindings[name]
            lens = space.lens(name)
            if lens.kind != "cont":
                raise ShapeMismatchError(
                    f"vector field binds continuous lenses; {name!r} is not")
            sh = e.shape(space, frozenset())
            if sh != ("mat", lens.rows, lens.cols):
                raise ShapeMismatchError(
                    f"field for {name!r} has shape {sh}, lens is "
                    f"{lens.rows}x{lens.cols}")
            if name in seen:
                raise ShapeMismatchError(f"{name!r} bound twice")
            seen.add(name)
            entries.append((name, e))
        return VectorField(space, tuple(entries))

    def binding(self, name):
        for n, e in self.entries:
            if n == name:
                return e
        return None

    def rhs(self, name):
        """Derivative expression for a lens; zero when unbound."""
        e = self.binding(name)
        if e is not None:
            return e
        lens = self.space.lens(name)
        if lens.kind == "cont":
            return _zero(lens.rows, lens.cols)
        if lens.sort == "real":
            return _zero(1, 1)
        if lens.sort == "vec2":
            return _zero(1, 2)
        raise NotDifferentiableError(
            f"{name!r} is {lens.sort}-sorted; no derivative exists")

    def derivative_vector(self, st, env=None):
        """Flat derivative of the continuous vector at a state."""
        out = []
        for lens in self.space.cont_lenses:
            e = self.binding(lens.name)
            if e is None:
                out.extend([0.0] * lens.size)
            else:
                out.extend(e.eval(st, env or {}).data)
        return tuple(out)


def _zero(rows, cols):
    if (rows, cols) == (1, 1):
        return Const.of(0)
    return Const(MatVal(rows, cols, (0.0,) * (rows * cols)),
                 tuple([0] * (rows * cols)))


def elem_expr(e, i, j):
    """Syntactic (i, j) component of a matrix-shaped expression."""
    if isinstance(e, MatLit):
        try:
            return e.rows[i - 1][j - 1]
        except IndexError:
            raise ShapeMismatchError(f"no entry ({i},{j}) in {e}") from None
    if isinstance(e, Const):
        return Const.of(e.value.entry(i, j))
    if isinstance(e, Var) and e.elem is None:
        return Var(e.name, (i, j))
    if isinstance(e, Neg):
        return Neg(elem_expr(e.e, i, j))
    if isinstance(e, Add):
        return Add(elem_expr(e.l, i, j), elem_expr(e.r, i, j))
    if isinstance(e, Sub):
        return Sub(elem_expr(e.l, i, j), elem_expr(e.r, i, j))
    if isinstance(e, ScalarMul):
        return Mul(e.s, elem_expr(e.m, i, j))
    if isinstance(e, Div):
        return Div(elem_expr(e.n, i, j), e.d)
    if isinstance(e, Cond):
        return Cond(e.test, elem_expr(e.then, i, j), elem_expr(e.els, i, j))
    if isinstance(e, Transpose):
        return elem_expr(e.e, j, i)
    raise ShapeMismatchError(f"cannot project an element out of {e}")


class _Lie:
    def __init__(self, field):
        self.field = field
        self.space = field.space
        self.sides = []
        self._side_keys = set()

    def side(self, p):
        key = str(p)
        if key not in self._side_keys:
            self._side_keys.add(key)
            self.sides.append(p)

    def expr(self, e):
        if isinstance(e, Const):
            return _zero(e.value.rows, e.value.cols)
        if isinstance(e, ModeLit):
            raise NotDifferentiableError(f"{e} is mode-sorted")
        if isinstance(e, Var):
            if e.elem is not None:
                base = self.field.rhs(e.name)
                return elem_expr(base, *e.elem)
            return self.field.rhs(e.name)
        if isinstance(e, Neg):
            return Neg(self.expr(e.e))
        if isinstance(e, Add):
            return Add(self.expr(e.l), self.expr(e.r))
        if isinstance(e, Sub):
            return Sub(self.expr(e.l), self.expr(e.r))
        if isinstance(e, Mul):
            return Add(Mul(self.expr(e.l), e.r), Mul(e.l, self.expr(e.r)))
        if isinstance(e, ScalarMul):
            return Add(ScalarMul(self.expr(e.s), e.m),
                       ScalarMul(e.s, self.expr(e.m)))
        if isinstance(e, Div):
            self.side(Cmp("!=", e.d, Const.of(0)))
            dn = self.expr(e.n)
            dd = self.expr(e.d)
            num_shape = e.n.shape(self.space, frozenset())
            scaled = (Mul(dd, e.n) if num_shape == ("mat", 1, 1)
                      else ScalarMul(dd, e.n))
            return Sub(Div(dn, e.d), Div(scaled, Mul(e.d, e.d)))
        if isinstance(e, Dot):
            return Add(Dot(self.expr(e.l), e.r), Dot(e.l, self.expr(e.r)))
        if isinstance(e, Norm):
            self.side(Cmp("!=", Norm(e.e), Const.of(0)))
            inner_shape = e.e.shape(self.space, frozenset())
            if inner_shape == ("mat", 1, 1):
                num = Mul(e.e, self.expr(e.e))
            else:
                num = Dot(e.e, self.expr(e.e))
            return Div(num, Norm(e.e))
        if isinstance(e, Sqrt):
            self.side(Cmp(">", e.e, Const.of(0)))
            return Div(self.expr(e.e), Mul(Const.of(2), Sqrt(e.e)))
        if isinstance(e, Sin):
            return Mul(self.expr(e.e), Cos(e.e))
        if isinstance(e, Cos):
            return Neg(Mul(self.expr(e.e), Sin(e.e)))
        if isinstance(e, MatLit):
            return MatLit(tuple(tuple(self.expr(c) for c in row)
                                for row in e.rows))
        if isinstance(e, Transpose):
            return Transpose(self.expr(e.e))
        if isinstance(e, (Abs, Sgn, Min, Max, Cond, Wrap, Ang, Acos)):
            raise NotDifferentiableError(
                f"{type(e).__name__.lower()} has no derivative everywhere: {e}")
        raise NotDifferentiableError(f"no derivative rule for {e}")

    def pred(self, p):
        if isinstance(p, TrueP):
            return TRUE
        if isinstance(p, FalseP):
            return TRUE
        if isinstance(p, Cmp):
            op, l, r = p.op, p.l, p.r
            if op == ">":
                op, l, r = "<", r, l
            elif op == ">=":
                op, l, r = "<=", r, l
            if op == "=":
                return Cmp("=", self.expr(l), self.expr(r))
            if op in ("<", "<="):
                return Cmp("<=", self.expr(l), self.expr(r))
            raise UnsupportedPredicateError(
                f"{p.op!r} comparisons have no derivative rule")
        if isinstance(p, And):
            return And(self.pred(p.l), self.pred(p.r))
        if isinstance(p, (Or, Not, Implies, ExistsIn, ForallIn)):
            raise UnsupportedPredicateError(
                f"no derivative rule for {type(p).__name__}")
        raise UnsupportedPredicateError(f"no derivative rule for {p}")


def lie_expr(e, field):
    """Lie derivative of an expression; returns (derivative, sides)."""
    w = _Lie(field)
    out = w.expr(e)
    return out, w.sides


def lie_pred(p, field):
    """Lie derivative of a predicate; returns (predicate, sides)."""
    w = _Lie(field)
    out = w.pred(p)
    return out, w.sides


def numeric_lie(e, field, st, h=1e-6, env=None):
    """Central finite difference of e along the field at a state."""
    from .state import with_cont_vector

    base = st.cont
    df = field.derivative_vector(st, env)
    hi = with_cont_vector(st, tuple(x + h * d for x, d in zip(base, df)))
    lo = with_cont_vector(st, tuple(x - h * d for x, d in zip(base, df)))
    a = e.eval(hi, env or {})
    b = e.eval(lo, env or {})
    return a.sub(b).scale(1.0 / (2.0 * h))
