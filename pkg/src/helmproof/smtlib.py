"""SMT-LIB 2 export of verification conditions.

The emitted script asserts the *negation* of the condition over real
constants, so an ``unsat`` answer from a solver certifies validity. The
logic is plain QF_NRA: vectors are expanded into one constant per
component (1-based linear index appended to the lens name, so a 1x2
lens ``a`` becomes ``a1 a2``), and every transcendental application is
replaced by a fresh constant, one per syntactic argument in order of
first encounter. Sine and cosine of the same argument share their
constraint ``sin^2 + cos^2 = 1``; square roots get their defining
equations; absolute value, sign, min, max and conditionals become
``ite`` terms. Mode lenses are numbered and constrained to their symbol
range. Division uses the solver's total function, and states on which
the condition does not evaluate (negative radicands, arc cosines out of
range) are excluded by the definitional constraints; both choices only
add models, which keeps the unsat answer conclusive.

Naming is deterministic, so exporting the same condition twice yields
byte-identical scripts. Set-sorted lenses and quantifiers have no
counterpart here and raise UnsupportedTheoryError, as does a lens whose
component names would collide with another symbol.
"""

from __future__ import annotations

from fractions import Fraction

from .deriv import elem_expr
from .errors import ShapeMismatchError, UnsupportedTheoryError
from .expr import (
    Abs, Acos, Add, And, Ang, Cmp, Cond, Const, Cos, Div, Dot, ExistsIn,
    FalseP, ForallIn, Implies, Log, MatLit, Max, Min, ModeLit, Mul, Neg,
    Norm, Not, Or, ScalarMul, Sgn, Sin, Sqrt, Sub, Transpose, TrueP, Var,
    Wrap, free_lenses,
)


def _numeral(q):
    q = Fraction(q)
    if q < 0:
        return f"(- {_numeral(-q)})"
    if q.denominator == 1:
        return str(q.numerator)
    return f"(/ {q.numerator} {q.denominator})"


def _const_fraction(const, i, j):
    if const.exact is not None:
        return const.exact[(i - 1) * const.value.cols + (j - 1)]
    return Fraction(const.value.entry(i, j))


class _Exporter:
    def __init__(self, space):
        self.space = space
        self.names = {}        # (lens, i, j) -> symbol
        self.taken = set()
        self.mode_ids = {}     # mode symbol -> numeral id
        self.mode_lenses = []  # mode lens names, first-encounter order
        self.aux = []          # declarations + their constraints, in order
        self.trig = {}         # argument text -> (sin symbol, cos symbol)
        self.uninterp = {}     # (kind, argument text) -> symbol
        self.counters = {}

    # -- symbols ---------------------------------------------------------

    def _claim(self, symbol):
        if symbol in self.taken:
            raise UnsupportedTheoryError(
                f"symbol {symbol!r} would be declared twice; rename the lens")
        self.taken.add(symbol)
        return symbol

    def _component(self, name, i, j):
        lens = self.space.lens(name)
        if lens.kind == "disc" and lens.sort == "set":
            raise UnsupportedTheoryError(
                f"set-sorted lens {name!r} has no SMT counterpart")
        key = (name, i, j)
        if key in self.names:
            return self.names[key]
        if lens.kind == "cont":
            rows, cols = lens.rows, lens.cols
        elif lens.sort == "vec2":
            rows, cols = 1, 2
        else:
            rows, cols = 1, 1
        if (rows, cols) == (1, 1):
            symbol = name
        else:
            symbol = f"{name}{(i - 1) * cols + j}"
        self._claim(symbol)
        self.names[key] = symbol
        if lens.kind == "disc" and lens.sort == "mode":
            self.mode_lenses.append(name)
            for m in lens.modes:
                self.mode_ids.setdefault(m, len(self.mode_ids))
        return symbol

    def _mode_id(self, symbol):
        return self.mode_ids.setdefault(symbol, len(self.mode_ids))

    def _fresh(self, kind):
        n = self.counters.get(kind, 0) + 1
        self.counters[kind] = n
        return self._claim(f"{kind}_{n}")

    def _trig_pair(self, arg_text):
        if arg_text not in self.trig:
            s = self._fresh("sin")
            c = self._fresh("cos")
            self.trig[arg_text] = (s, c)
            self.aux.append(f"(declare-const {s} Real)")
            self.aux.append(f"(declare-const {c} Real)")
            self.aux.append(
                f"(assert (= (+ (* {s} {s}) (* {c} {c})) 1))")
        return self.trig[arg_text]

    def _defined(self, kind, arg_text, constraints):
        """Fresh constant for one application; constraints may use it."""
        key = (kind, arg_text)
        if key not in self.uninterp:
            symbol = self._fresh(kind)
            self.uninterp[key] = symbol
            self.aux.append(f"(declare-const {symbol} Real)")
            for c in constraints(symbol):
                self.aux.append(f"(assert {c})")
        return self.uninterp[key]

    # -- terms -----------------------------------------------------------

    def _shape(self, e):
        sh = e.shape(self.space, frozenset())
        if sh[0] != "mat":
            raise UnsupportedTheoryError(
                f"{sh[0]}-sorted term {e} has no real encoding")
        return sh[1], sh[2]

    def _sum(self, parts):
        if len(parts) == 1:
            return parts[0]
        return "(+ " + " ".join(parts) + ")"

    def _dot_text(self, l, r):
        _, n = self._shape(l)
        parts = [f"(* {self.term(elem_expr(l, 1, k))}"
                 f" {self.term(elem_expr(r, 1, k))})" for k in range(1, n + 1)]
        return self._sum(parts)

    def term(self, e):
        if isinstance(e, Const):
            if not e.value.is_scalar:
                raise ShapeMismatchError(f"no scalar reading of {e}")
            return _numeral(_const_fraction(e, 1, 1))
        if isinstance(e, ModeLit):
            return str(self._mode_id(e.symbol))
        if isinstance(e, Var):
            if e.elem is not None:
                return self._component(e.name, *e.elem)
            lens = self.space.lens(e.name)
            if lens.kind == "disc" and lens.sort == "mode":
                return self._component(e.name, 1, 1)
            rows, cols = self._shape(e)
            if (rows, cols) != (1, 1):
                raise ShapeMismatchError(f"no scalar reading of {e}")
            return self._component(e.name, 1, 1)
        if isinstance(e, Neg):
            return f"(- {self.term(e.e)})"
        if isinstance(e, Add):
            return f"(+ {self.term(e.l)} {self.term(e.r)})"
        if isinstance(e, Sub):
            return f"(- {self.term(e.l)} {self.term(e.r)})"
        if isinstance(e, Mul):
            return f"(* {self.term(e.l)} {self.term(e.r)})"
        if isinstance(e, Div):
            return f"(/ {self.term(e.n)} {self.term(e.d)})"
        if isinstance(e, Dot):
            return self._dot_text(e.l, e.r)
        if isinstance(e, Norm):
            sh = self._shape(e.e)
            if sh == (1, 1):
                inner = f"(* {self.term(e.e)} {self.term(e.e)})"
            else:
                inner = self._dot_text(e.e, e.e)
            return self._defined(
                "norm", inner,
                lambda s: [f"(= (* {s} {s}) {inner})", f"(>= {s} 0)"])
        if isinstance(e, Sqrt):
            inner = self.term(e.e)
            return self._defined(
                "sqrt", inner,
                lambda s: [f"(= (* {s} {s}) {inner})", f"(>= {s} 0)"])
        if isinstance(e, Sin):
            return self._trig_pair(self.term(e.e))[0]
        if isinstance(e, Cos):
            return self._trig_pair(self.term(e.e))[1]
        if isinstance(e, Acos):
            inner = self.term(e.e)
            return self._defined(
                "acos", inner,
                lambda s: [f"(>= {s} 0)", f"(<= {inner} 1)",
                           f"(>= {inner} (- 1))"])
        if isinstance(e, Log):
            inner = self.term(e.e)
            return self._defined("log", inner,
                                 lambda s: [f"(> {inner} 0)"])
        if isinstance(e, Wrap):
            inner = self.term(e.e)
            return self._defined("wrap", inner, lambda s: [])
        if isinstance(e, Ang):
            x = self.term(elem_expr(e.e, 1, 1))
            y = self.term(elem_expr(e.e, 1, 2))
            return self._defined("ang", f"{x} {y}", lambda s: [])
        if isinstance(e, Abs):
            inner = self.term(e.e)
            return f"(ite (>= {inner} 0) {inner} (- {inner}))"
        if isinstance(e, Sgn):
            inner = self.term(e.e)
            return (f"(ite (> {inner} 0) 1"
                    f" (ite (< {inner} 0) (- 1) 0))")
        if isinstance(e, Min):
            a, b = self.term(e.l), self.term(e.r)
            return f"(ite (<= {a} {b}) {a} {b})"
        if isinstance(e, Max):
            a, b = self.term(e.l), self.term(e.r)
            return f"(ite (>= {a} {b}) {a} {b})"
        if isinstance(e, Cond):
            return (f"(ite {self.formula(e.test)} {self.term(e.then)}"
                    f" {self.term(e.els)})")
        if isinstance(e, (MatLit, Transpose, ScalarMul)):
            sh = self._shape(e)
            if sh == (1, 1):
                return self.term(elem_expr(e, 1, 1))
            raise ShapeMismatchError(f"no scalar reading of {e}")
        raise UnsupportedTheoryError(f"no SMT encoding for {e}")

    # -- formulas --------------------------------------------------------

    def _cmp(self, p):
        raw = p.l.shape(self.space, frozenset())
        if raw[0] == "mode":
            l, r = self.term(p.l), self.term(p.r)
            if p.op == "=":
                return f"(= {l} {r})"
            if p.op == "!=":
                return f"(not (= {l} {r}))"
            raise UnsupportedTheoryError(f"ordering on mode values: {p}")
        lsh = self._shape(p.l)
        if lsh != (1, 1):
            rows, cols = lsh
            parts = []
            for i in range(1, rows + 1):
                for j in range(1, cols + 1):
                    parts.append(
                        f"(= {self.term(elem_expr(p.l, i, j))}"
                        f" {self.term(elem_expr(p.r, i, j))})")
            body = parts[0] if len(parts) == 1 else \
                "(and " + " ".join(parts) + ")"
            if p.op == "=":
                return body
            if p.op == "!=":
                return f"(not {body})"
            raise UnsupportedTheoryError(
                f"ordering on {rows}x{cols} values")
        l, r = self.term(p.l), self.term(p.r)
        if p.op == "!=":
            return f"(not (= {l} {r}))"
        return f"({p.op} {l} {r})"

    def formula(self, p):
        if isinstance(p, TrueP):
            return "true"
        if isinstance(p, FalseP):
            return "false"
        if isinstance(p, Cmp):
            return self._cmp(p)
        if isinstance(p, Not):
            return f"(not {self.formula(p.p)})"
        if isinstance(p, And):
            return f"(and {self.formula(p.l)} {self.formula(p.r)})"
        if isinstance(p, Or):
            return f"(or {self.formula(p.l)} {self.formula(p.r)})"
        if isinstance(p, Implies):
            return f"(=> {self.formula(p.l)} {self.formula(p.r)})"
        if isinstance(p, (ExistsIn, ForallIn)):
            raise UnsupportedTheoryError(
                f"quantification over a set lens has no QF_NRA encoding:"
                f" {p}")
        raise UnsupportedTheoryError(f"no SMT encoding for {p}")


def export_smtlib(vc, space):
    """Script asserting the negation of a condition; unsat means valid.

    Declares one real constant per used lens component in declaration
    order, then the auxiliary constants for transcendental applications
    in first-encounter order with their constraints, then mode ranges,
    the negated formula, and ``(check-sat)``.
    """
    used = free_lenses(vc.formula)
    ex = _Exporter(space)
    # claim lens symbols in declaration order before any aux constant
    decls = []
    for lens in space.lenses:
        if lens.name not in used:
            continue
        if lens.kind == "disc" and lens.sort == "set":
            raise UnsupportedTheoryError(
                f"set-sorted lens {lens.name!r} has no SMT counterpart")
        if lens.kind == "cont":
            rows, cols = lens.rows, lens.cols
        elif lens.sort == "vec2":
            rows, cols = 1, 2
        else:
            rows, cols = 1, 1
        for i in range(1, rows + 1):
            for j in range(1, cols + 1):
                decls.append(ex._component(lens.name, i, j))
    body = ex.formula(vc.formula)
    lines = []
    origin = " ".join(str(vc.origin).split())
    if origin:
        lines.append(f"; {origin}")
    lines.append("(set-logic QF_NRA)")
    for symbol in decls:
        lines.append(f"(declare-const {symbol} Real)")
    lines.extend(ex.aux)
    for name in ex.mode_lenses:
        lens = space.lens(name)
        symbol = ex.names[(name, 1, 1)]
        opts = " ".join(f"(= {symbol} {ex.mode_ids[m]})" for m in lens.modes)
        if len(lens.modes) == 1:
            lines.append(f"(assert {opts})")
        else:
            lines.append(f"(assert (or {opts}))")
    lines.append(f"(assert (not {body}))")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"
