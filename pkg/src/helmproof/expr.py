"""Expression and predicate trees over a hybrid state space.

Expressions denote matrix-valued (usually scalar or 1x2) quantities plus
two discrete sorts: mode symbols and finite sets of 2-vectors. Predicates
are boolean combinations of comparisons and bounded quantifiers over
set-valued lenses. Trees are immutable and hashable, so they can serve as
dictionary keys during normalization.

Every numeric literal carries an exact rational alongside its float: text
like ``0.3`` means the rational 3/10, and symbolic passes compute with the
rationals so that equal values stay equal. Evaluation always uses floats.

``shape_of`` checks well-formedness against a state space and returns
``('mat', rows, cols)``, ``('mode',)`` or ``('set',)``. Evaluation raises
``EvalError`` subclasses for division by zero and domain violations; all
other failures are shape or lens errors raised before any arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from . import scalarops
from .errors import (
    DivByZeroError,
    ShapeMismatchError,
    UnknownLensError,
)
from .state import MatVal, lens_get, mat_lens


def _frac(x):
    """Exact rational for a literal; floats go through their repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        if x != x or x in (float("inf"), float("-inf")):
            raise ShapeMismatchError(f"non-finite literal {x!r}")
        return Fraction(str(x))
    raise ShapeMismatchError(f"cannot make a literal from {x!r}")


def fmt_fraction(q):
    """Decimal text when the denominator is 2^a*5^b, else p/q."""
    den = q.denominator
    if den == 1:
        return str(q.numerator)
    d = den
    for p in (2, 5):
        while d % p == 0:
            d //= p
    if d == 1:
        s = repr(float(q))
        if Fraction(s) == q:
            return s
        # fall through for decimals longer than a float survives
        digits = 0
        d = den
        while d % 2 == 0:
            d //= 2
            digits += 1
        twos = digits
        digits = 0
        while d % 5 == 0:
            d //= 5
            digits += 1
        places = max(twos, digits)
        scaled = q.numerator * 10**places // den
        text = f"{scaled:0{places + 1}d}"
        return f"{text[:-places]}.{text[-places:]}" if places else text
    return f"{q.numerator}/{q.denominator}"


# ---------------------------------------------------------------------------
# expression nodes


class Expr:
    """Base class; subclasses are frozen dataclasses."""

    PREC = 9  # printing precedence; atoms highest

    def eval(self, st, env):
        raise NotImplementedError

    def shape(self, space, bound=frozenset()):
        raise NotImplementedError

    def map_children(self, fe, fp):
        """Rebuild this node with every child expression passed through
        ``fe`` and every child predicate through ``fp``."""
        return self

    def sub(self, prec=0):
        s = str(self)
        return f"({s})" if self.PREC < prec else s


@dataclass(frozen=True)
class Const(Expr):
    value: MatVal
    exact: tuple = field(compare=False, hash=False, default=None)

    @staticmethod
    def of(x):
        if isinstance(x, MatVal):
            return Const(x, tuple(_frac(v) for v in x.data))
        q = _frac(x)
        return Const(MatVal.scalar(float(q)), (q,))

    def eval(self, st, env):
        return self.value

    def shape(self, space, bound=frozenset()):
        return ("mat", self.value.rows, self.value.cols)

    def __str__(self):
        if not self.value.is_scalar:
            return str(self.value)
        q = self.exact[0] if self.exact else _frac(self.value.data[0])
        if q < 0:
            return f"({fmt_fraction(q)})"
        return fmt_fraction(q)


ZERO = Const.of(0)
ONE = Const.of(1)


@dataclass(frozen=True)
class ModeLit(Expr):
    symbol: str

    def eval(self, st, env):
        return self.symbol

    def shape(self, space, bound=frozenset()):
        return ("mode",)

    def __str__(self):
        return self.symbol


@dataclass(frozen=True)
class Var(Expr):
    name: str
    elem: tuple = None  # optional 1-based (row, col) element access

    def eval(self, st, env):
        if env and self.name in env and self.elem is None:
            return env[self.name]
        if env and self.name in env:
            return MatVal.scalar(env[self.name].entry(*self.elem))
        lens = st.space.lens(self.name)
        if self.elem is not None:
            lens = mat_lens(lens, *self.elem)
        return lens_get(st, lens)

    def shape(self, space, bound=frozenset()):
        if self.name in bound:
            if self.elem is not None:
                return ("mat", 1, 1)
            return ("mat", 1, 2)
        lens = space.lens(self.name)
        if self.elem is not None:
            mat_lens(lens, *self.elem)  # bounds check
            return ("mat", 1, 1)
        if lens.kind == "cont":
            return ("mat", lens.rows, lens.cols)
        if lens.sort == "real":
            return ("mat", 1, 1)
        if lens.sort == "vec2":
            return ("mat", 1, 2)
        if lens.sort == "mode":
            return ("mode",)
        return ("set",)

    def __str__(self):
        if self.elem is not None:
            return f"{self.name}[{self.elem[0]},{self.elem[1]}]"
        return self.name


def _mat_shape(e, space, bound, what):
    sh = e.shape(space, bound)
    if sh[0] != "mat":
        raise ShapeMismatchError(f"{what} needs a matrix operand, got {sh[0]}")
    return sh[1], sh[2]


def _scalar_shape(e, space, bound, what):
    r, c = _mat_shape(e, space, bound, what)
    if (r, c) != (1, 1):
        raise ShapeMismatchError(f"{what} needs a scalar, got {r}x{c}")


@dataclass(frozen=True)
class Neg(Expr):
    e: Expr
    PREC = 7

    def eval(self, st, env):
        return self.e.eval(st, env).neg()

    def shape(self, space, bound=frozenset()):
        return ("mat",) + _mat_shape(self.e, space, bound, "negation")

    def map_children(self, fe, fp):
        return Neg(fe(self.e))

    def __str__(self):
        return f"-{self.e.sub(8)}"


@dataclass(frozen=True)
class Add(Expr):
    l: Expr
    r: Expr
    PREC = 4

    def eval(self, st, env):
        return self.l.eval(st, env).add(self.r.eval(st, env))

    def shape(self, space, bound=frozenset()):
        a = _mat_shape(self.l, space, bound, "+")
        b = _mat_shape(self.r, space, bound, "+")
        if a != b:
            raise ShapeMismatchError(f"+ of {a[0]}x{a[1]} and {b[0]}x{b[1]}")
        return ("mat",) + a

    def map_children(self, fe, fp):
        return Add(fe(self.l), fe(self.r))

    def __str__(self):
        return f"{self.l.sub(4)} + {self.r.sub(5)}"


@dataclass(frozen=True)
class Sub(Expr):
    l: Expr
    r: Expr
    PREC = 4

    def eval(self, st, env):
        return self.l.eval(st, env).sub(self.r.eval(st, env))

    def shape(self, space, bound=frozenset()):
        a = _mat_shape(self.l, space, bound, "-")
        b = _mat_shape(self.r, space, bound, "-")
        if a != b:
            raise ShapeMismatchError(f"- of {a[0]}x{a[1]} and {b[0]}x{b[1]}")
        return ("mat",) + a

    def map_children(self, fe, fp):
        return Sub(fe(self.l), fe(self.r))

    def __str__(self):
        return f"{self.l.sub(4)} - {self.r.sub(5)}"


@dataclass(frozen=True)
class Mul(Expr):
    """Product of two scalars."""

    l: Expr
    r: Expr
    PREC = 5

    def eval(self, st, env):
        a = self.l.eval(st, env).as_float()
        b = self.r.eval(st, env).as_float()
        return MatVal.scalar(a * b)

    def shape(self, space, bound=frozenset()):
        _scalar_shape(self.l, space, bound, "*")
        _scalar_shape(self.r, space, bound, "*")
        return ("mat", 1, 1)

    def map_children(self, fe, fp):
        return Mul(fe(self.l), fe(self.r))

    def __str__(self):
        return f"{self.l.sub(5)} * {self.r.sub(6)}"


@dataclass(frozen=True)
class ScalarMul(Expr):
    """Scalar times matrix; the scalar is kept on the left."""

    s: Expr
    m: Expr
    PREC = 5

    def eval(self, st, env):
        c = self.s.eval(st, env).as_float()
        return self.m.eval(st, env).scale(c)

    def shape(self, space, bound=frozenset()):
        _scalar_shape(self.s, space, bound, "*")
        return ("mat",) + _mat_shape(self.m, space, bound, "*")

    def map_children(self, fe, fp):
        return ScalarMul(fe(self.s), fe(self.m))

    def __str__(self):
        return f"{self.s.sub(5)} * {self.m.sub(6)}"


@dataclass(frozen=True)
class Div(Expr):
    """Matrix (or scalar) divided by a scalar."""

    n: Expr
    d: Expr
    PREC = 5

    def eval(self, st, env):
        den = self.d.eval(st, env).as_float()
        num = self.n.eval(st, env)
        if den == 0.0:
            raise DivByZeroError(f"division by zero in {self}")
        return num.scale(1.0 / den) if not num.is_scalar else MatVal.scalar(
            num.as_float() / den)

    def shape(self, space, bound=frozenset()):
        _scalar_shape(self.d, space, bound, "/")
        return ("mat",) + _mat_shape(self.n, space, bound, "/")

    def map_children(self, fe, fp):
        return Div(fe(self.n), fe(self.d))

    def __str__(self):
        return f"{self.n.sub(5)} / {self.d.sub(6)}"


@dataclass(frozen=True)
class Dot(Expr):
    """Sum of entrywise products of two same-shaped matrices."""

    l: Expr
    r: Expr
    PREC = 6

    def eval(self, st, env):
        return MatVal.scalar(self.l.eval(st, env).dot(self.r.eval(st, env)))

    def shape(self, space, bound=frozenset()):
        a = _mat_shape(self.l, space, bound, ".")
        b = _mat_shape(self.r, space, bound, ".")
        if a != b:
            raise ShapeMismatchError(f". of {a[0]}x{a[1]} and {b[0]}x{b[1]}")
        return ("mat", 1, 1)

    def map_children(self, fe, fp):
        return Dot(fe(self.l), fe(self.r))

    def __str__(self):
        # operands print at atom level: the dot chain grammar takes only
        # postfix operands, so -p must come out as (-p)
        return f"{self.l.sub(8)} . {self.r.sub(8)}"


@dataclass(frozen=True)
class Norm(Expr):
    """Frobenius norm; collapses to absolute value on scalars."""

    e: Expr

    def eval(self, st, env):
        return MatVal.scalar(self.e.eval(st, env).norm())

    def shape(self, space, bound=frozenset()):
        _mat_shape(self.e, space, bound, "norm")
        return ("mat", 1, 1)

    def map_children(self, fe, fp):
        return Norm(fe(self.e))

    def __str__(self):
        return f"norm({self.e})"


@dataclass(frozen=True)
class Transpose(Expr):
    e: Expr

    def eval(self, st, env):
        return self.e.eval(st, env).transpose()

    def shape(self, space, bound=frozenset()):
        r, c = _mat_shape(self.e, space, bound, "transpose")
        return ("mat", c, r)

    def map_children(self, fe, fp):
        return Transpose(fe(self.e))

    def __str__(self):
        return f"transpose({self.e})"


@dataclass(frozen=True)
class MatLit(Expr):
    """Matrix literal with scalar expression entries, row-major."""

    rows: tuple  # tuple of tuples of Expr

    def eval(self, st, env):
        vals = []
        for row in self.rows:
            vals.append([cell.eval(st, env).as_float() for cell in row])
        return MatVal.from_rows(vals)

    def shape(self, space, bound=frozenset()):
        width = len(self.rows[0])
        for row in self.rows:
            if len(row) != width:
                raise ShapeMismatchError("ragged matrix literal")
            for cell in row:
                _scalar_shape(cell, space, bound, "matrix entry")
        return ("mat", len(self.rows), width)

    def map_children(self, fe, fp):
        return MatLit(tuple(tuple(fe(c) for c in row) for row in self.rows))

    def __str__(self):
        if len(self.rows) == 1:
            return "[" + ", ".join(str(c) for c in self.rows[0]) + "]"
        inner = ", ".join(
            "[" + ", ".join(str(c) for c in row) + "]" for row in self.rows)
        return f"[{inner}]"


def row_vec(*entries):
    return MatLit((tuple(entries),))


class _Fn1(Expr):
    """Unary scalar function; subclasses set NAME and FN."""

    NAME = "?"
    FN = None

    def eval(self, st, env):
        x = self.e.eval(st, env).as_float()
        return MatVal.scalar(type(self).FN(x))

    def shape(self, space, bound=frozenset()):
        _scalar_shape(self.e, space, bound, self.NAME)
        return ("mat", 1, 1)

    def map_children(self, fe, fp):
        return type(self)(fe(self.e))

    def __str__(self):
        return f"{self.NAME}({self.e})"


import math as _math


@dataclass(frozen=True)
class Sin(_Fn1):
    e: Expr
    NAME = "sin"
    FN = _math.sin


@dataclass(frozen=True)
class Cos(_Fn1):
    e: Expr
    NAME = "cos"
    FN = _math.cos


@dataclass(frozen=True)
class Acos(_Fn1):
    e: Expr
    NAME = "acos"
    FN = staticmethod(scalarops.acos_checked)


@dataclass(frozen=True)
class Sqrt(_Fn1):
    e: Expr
    NAME = "sqrt"
    FN = staticmethod(scalarops.sqrt_checked)


@dataclass(frozen=True)
class Log(_Fn1):
    """Natural logarithm. Parsed and evaluated, but nothing rewrites it."""

    e: Expr
    NAME = "log"
    FN = staticmethod(scalarops.log_checked)


@dataclass(frozen=True)
class Sgn(_Fn1):
    e: Expr
    NAME = "sgn"
    FN = staticmethod(scalarops.sgn)


@dataclass(frozen=True)
class Abs(_Fn1):
    e: Expr
    NAME = "abs"
    FN = staticmethod(abs)


@dataclass(frozen=True)
class Wrap(_Fn1):
    """Wrap an angle into (-pi, pi]."""

    e: Expr
    NAME = "wrap"
    FN = staticmethod(scalarops.wrap_angle)


@dataclass(frozen=True)
class Ang(Expr):
    """Heading of a 1x2 vector: ang([x, y]) = atan2(x, y)."""

    e: Expr

    def eval(self, st, env):
        v = self.e.eval(st, env)
        if v.shape != (1, 2):
            raise ShapeMismatchError(f"ang of a {v.rows}x{v.cols} value")
        return MatVal.scalar(scalarops.ang(v.data[0], v.data[1]))

    def shape(self, space, bound=frozenset()):
        sh = _mat_shape(self.e, space, bound, "ang")
        if sh != (1, 2):
            raise ShapeMismatchError(f"ang needs a 1x2 vector, got {sh[0]}x{sh[1]}")
        return ("mat", 1, 1)

    def map_children(self, fe, fp):
        return Ang(fe(self.e))

    def __str__(self):
        return f"ang({self.e})"


class _Fn2(Expr):
    NAME = "?"
    FN = None

    def eval(self, st, env):
        a = self.l.eval(st, env).as_float()
        b = self.r.eval(st, env).as_float()
        return MatVal.scalar(type(self).FN(a, b))

    def shape(self, space, bound=frozenset()):
        _scalar_shape(self.l, space, bound, self.NAME)
        _scalar_shape(self.r, space, bound, self.NAME)
        return ("mat", 1, 1)

    def map_children(self, fe, fp):
        return type(self)(fe(self.l), fe(self.r))

    def __str__(self):
        return f"{self.NAME}({self.l}, {self.r})"


@dataclass(frozen=True)
class Min(_Fn2):
    l: Expr
    r: Expr
    NAME = "min"
    FN = staticmethod(min)


@dataclass(frozen=True)
class Max(_Fn2):
    l: Expr
    r: Expr
    NAME = "max"
    FN = staticmethod(max)


@dataclass(frozen=True)
class Cond(Expr):
    """Predicate-guarded choice between two same-shaped expressions."""

    test: "Pred"
    then: Expr
    els: Expr

    def eval(self, st, env):
        if eval_pred(self.test, st, env):
            return self.then.eval(st, env)
        return self.els.eval(st, env)

    def shape(self, space, bound=frozenset()):
        check_pred(self.test, space, bound)
        a = self.then.shape(space, bound)
        b = self.els.shape(space, bound)
        if a != b:
            raise ShapeMismatchError(f"cond branches differ: {a} vs {b}")
        if a[0] == "set":
            raise ShapeMismatchError("cond branches cannot be sets")
        return a

    def map_children(self, fe, fp):
        return Cond(fp(self.test), fe(self.then), fe(self.els))

    def __str__(self):
        return f"cond({self.test}, {self.then}, {self.els})"


# ---------------------------------------------------------------------------
# predicate nodes


class Pred:
    PREC = 9

    def holds(self, st, env, tol):
        raise NotImplementedError

    def check(self, space, bound=frozenset()):
        raise NotImplementedError

    def map_children(self, fe, fp):
        return self

    def sub(self, prec=0):
        s = str(self)
        return f"({s})" if self.PREC < prec else s


@dataclass(frozen=True)
class TrueP(Pred):
    def holds(self, st, env, tol):
        return True

    def check(self, space, bound=frozenset()):
        pass

    def __str__(self):
        return "true"


@dataclass(frozen=True)
class FalseP(Pred):
    def holds(self, st, env, tol):
        return False

    def check(self, space, bound=frozenset()):
        pass

    def __str__(self):
        return "false"


TRUE = TrueP()
FALSE = FalseP()

_CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Cmp(Pred):
    """Comparison; equality works on matrices and modes, order on scalars.

    A nonzero tolerance loosens every comparison toward acceptance:
    equalities within ``tol`` hold, strict inequalities get ``tol`` of
    slack. Exact evaluation is the ``tol == 0`` case.
    """

    op: str
    l: Expr
    r: Expr
    PREC = 8

    def holds(self, st, env, tol):
        a = self.l.eval(st, env)
        b = self.r.eval(st, env)
        if isinstance(a, str) or isinstance(b, str):
            if not (isinstance(a, str) and isinstance(b, str)):
                raise ShapeMismatchError(f"mode compared with non-mode in {self}")
            if self.op == "=":
                return a == b
            if self.op == "!=":
                return a != b
            raise ShapeMismatchError(f"ordered comparison of modes in {self}")
        if isinstance(a, frozenset) or isinstance(b, frozenset):
            raise ShapeMismatchError(f"sets cannot be compared in {self}")
        if a.shape != b.shape:
            raise ShapeMismatchError(
                f"comparison of {a.rows}x{a.cols} and {b.rows}x{b.cols}")
        if self.op in ("=", "!="):
            same = all(abs(x - y) <= tol for x, y in zip(a.data, b.data))
            return same if self.op == "=" else not same
        x, y = a.as_float(), b.as_float()
        if self.op == "<":
            return x < y + tol
        if self.op == "<=":
            return x <= y + tol
        if self.op == ">":
            return x + tol > y
        return x + tol >= y

    def check(self, space, bound=frozenset()):
        a = self.l.shape(space, bound)
        b = self.r.shape(space, bound)
        if "set" in (a[0], b[0]):
            raise ShapeMismatchError("sets cannot be compared")
        if (a[0] == "mode") != (b[0] == "mode"):
            raise ShapeMismatchError("mode compared with non-mode")
        if a[0] == "mode":
            if self.op not in ("=", "!="):
                raise ShapeMismatchError("ordered comparison of modes")
            return
        if a != b:
            raise ShapeMismatchError(f"comparison of {a} and {b}")
        if self.op not in ("=", "!=") and a[1:] != (1, 1):
            raise ShapeMismatchError("ordered comparison needs scalars")
        if self.op not in _CMP_OPS:
            raise ShapeMismatchError(f"unknown comparison {self.op!r}")

    def map_children(self, fe, fp):
        return Cmp(self.op, fe(self.l), fe(self.r))

    def __str__(self):
        return f"{self.l} {self.op} {self.r}"


@dataclass(frozen=True)
class Not(Pred):
    p: Pred
    PREC = 7

    def holds(self, st, env, tol):
        # Tolerance widens toward acceptance on both sides of a negation;
        # callers validating with slack accept borderline states either way.
        return not self.p.holds(st, env, tol)

    def check(self, space, bound=frozenset()):
        self.p.check(space, bound)

    def map_children(self, fe, fp):
        return Not(fp(self.p))

    def __str__(self):
        return f"!{self.p.sub(8)}"


@dataclass(frozen=True)
class And(Pred):
    l: Pred
    r: Pred
    PREC = 5

    def holds(self, st, env, tol):
        return self.l.holds(st, env, tol) and self.r.holds(st, env, tol)

    def check(self, space, bound=frozenset()):
        self.l.check(space, bound)
        self.r.check(space, bound)

    def map_children(self, fe, fp):
        return And(fp(self.l), fp(self.r))

    def __str__(self):
        return f"{self.l.sub(5)} /\\ {self.r.sub(6)}"


@dataclass(frozen=True)
class Or(Pred):
    l: Pred
    r: Pred
    PREC = 4

    def holds(self, st, env, tol):
        return self.l.holds(st, env, tol) or self.r.holds(st, env, tol)

    def check(self, space, bound=frozenset()):
        self.l.check(space, bound)
        self.r.check(space, bound)

    def map_children(self, fe, fp):
        return Or(fp(self.l), fp(self.r))

    def __str__(self):
        return f"{self.l.sub(4)} \\/ {self.r.sub(5)}"


@dataclass(frozen=True)
class Implies(Pred):
    l: Pred
    r: Pred
    PREC = 3

    def holds(self, st, env, tol):
        return (not self.l.holds(st, env, tol)) or self.r.holds(st, env, tol)

    def check(self, space, bound=frozenset()):
        self.l.check(space, bound)
        self.r.check(space, bound)

    def map_children(self, fe, fp):
        return Implies(fp(self.l), fp(self.r))

    def __str__(self):
        return f"{self.l.sub(4)} => {self.r.sub(3)}"


class _Quant(Pred):
    WORD = "?"

    def _iterate(self, st, env, tol):
        members = lens_get(st, st.space.lens(self.set_name))
        if not isinstance(members, frozenset):
            raise ShapeMismatchError(f"{self.set_name!r} is not a set lens")
        env = dict(env) if env else {}
        for member in sorted(members, key=lambda m: m.data):
            env[self.var] = member
            yield self.body.holds(st, env, tol)

    def check(self, space, bound=frozenset()):
        lens = space.lens(self.set_name)
        if lens.kind != "disc" or lens.sort != "set":
            raise ShapeMismatchError(
                f"quantifier ranges over set lenses, not {self.set_name!r}")
        if self.var in bound:
            raise ShapeMismatchError(f"bound name {self.var!r} reused")
        if space.has_lens(self.var):
            raise ShapeMismatchError(
                f"bound name {self.var!r} shadows a lens")
        self.body.check(space, bound | {self.var})

    def map_children(self, fe, fp):
        return type(self)(self.var, self.set_name, fp(self.body))

    def __str__(self):
        return f"{self.WORD} {self.var} in {self.set_name}. {self.body}"


@dataclass(frozen=True)
class ExistsIn(_Quant):
    """Exists a member of a finite set lens; false over the empty set."""

    var: str
    set_name: str
    body: Pred
    WORD = "exists"
    PREC = 2

    def holds(self, st, env, tol):
        return any(self._iterate(st, env, tol))


@dataclass(frozen=True)
class ForallIn(_Quant):
    """All members of a finite set lens; true over the empty set."""

    var: str
    set_name: str
    body: Pred
    WORD = "forall"
    PREC = 2

    def holds(self, st, env, tol):
        return all(self._iterate(st, env, tol))


# ---------------------------------------------------------------------------
# module-level entry points


def eval_expr(e, st, env=None):
    """Evaluate an expression at a state; bound variables come from env."""
    return e.eval(st, env or {})


def eval_pred(p, st, env=None, tol=0.0):
    """Decide a predicate at a state.

    ``tol`` loosens comparisons for use by validators and domain checks on
    integrated (hence slightly drifted) states; the default is exact.
    """
    return p.holds(st, env or {}, tol)


def shape_of(e, space, bound=frozenset()):
    return e.shape(space, bound)


def check_pred(p, space, bound=frozenset()):
    p.check(space, bound)


def free_lenses(tree):
    """Names of lenses read by an expression or predicate.

    Quantifier-bound variables are excluded; the set lens a quantifier
    ranges over is included. Element access counts the parent lens.
    """
    out = set()

    def walk(node, bound):
        if isinstance(node, Var):
            if node.name not in bound:
                out.add(node.name)
            return node
        if isinstance(node, (ExistsIn, ForallIn)):
            out.add(node.set_name)
            walk(node.body, bound | {node.var})
            return node
        node.map_children(lambda e: walk(e, bound), lambda p: walk(p, bound))
        return node

    walk(tree, frozenset())
    return out


def subst(tree, name, replacement):
    """Substitute ``replacement`` for every free whole-lens use of ``name``.

    Element uses ``name[i,j]`` are rewritten when the replacement is a
    matrix literal or another variable; any other combination has no
    syntactic element and raises ShapeMismatchError.
    """

    def walk(node, bound):
        if isinstance(node, Var):
            if node.name != name or name in bound:
                return node
            if node.elem is None:
                return replacement
            if isinstance(replacement, MatLit):
                i, j = node.elem
                try:
                    return replacement.rows[i - 1][j - 1]
                except IndexError:
                    raise ShapeMismatchError(
                        f"no entry ({i},{j}) in replacement for {name}") from None
            if isinstance(replacement, Var) and replacement.elem is None:
                return Var(replacement.name, node.elem)
            if isinstance(replacement, Const):
                i, j = node.elem
                return Const.of(replacement.value.entry(i, j))
            raise ShapeMismatchError(
                f"cannot take element ({node.elem}) of {replacement}")
        if isinstance(node, (ExistsIn, ForallIn)):
            if node.var == name:
                return node
            if node.var in free_lenses(replacement):
                raise ShapeMismatchError(
                    f"substitution would capture {node.var!r}")
            body = walk(node.body, bound | {node.var})
            return type(node)(node.var, node.set_name, body)
        return node.map_children(lambda e: walk(e, bound),
                                 lambda p: walk(p, bound))

    return walk(tree, frozenset())


def conj(preds):
    """Right-nested conjunction of a list; empty list is true."""
    preds = list(preds)
    if not preds:
        return TRUE
    out = preds[-1]
    for p in reversed(preds[:-1]):
        out = And(p, out)
    return out


def split_conj(p):
    """Flatten nested conjunctions into a list."""
    if isinstance(p, And):
        return split_conj(p.l) + split_conj(p.r)
    if isinstance(p, TrueP):
        return []
    return [p]
