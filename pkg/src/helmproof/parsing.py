"""Tokenizer and recursive-descent parser for expressions and predicates.

The concrete syntax matches the pretty-printers in ``expr``:

* arithmetic ``+ - * /`` with usual precedence, unary minus, ``^k`` for
  small integer powers (sugar for repeated multiplication)
* ``.`` for the dot product, binding tighter than ``*``
* function forms ``sin cos acos sqrt sgn abs wrap ang norm transpose``
  (parentheses optional for these one-argument functions), ``min max
  dot`` with two arguments, and ``cond(P, a, b)``
* matrix literals ``[1, 2]`` (one row) and ``[[1, 2], [3, 4]]``
* predicates with ``= != < <= > >=``, ``! /\\ \\/ =>``, ``true``,
  ``false``, and bounded quantifiers ``exists o in ob. P``
* element access ``p[1,2]`` with 1-based indices

``*`` is resolved by shape: scalar times scalar is ``Mul``, scalar times
matrix is ``ScalarMul``; matrix times matrix is rejected (use ``.``).
Identifiers resolve in order: quantifier-bound names, lenses, named
constants, named expressions, mode symbols. Function names are reserved.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .errors import ParseError, RaggedRowsError, ShapeMismatchError
from .expr import (
    Abs, Acos, Add, Ang, Cmp, Cond, Const, Cos, Div, Dot, ExistsIn, FALSE,
    ForallIn, Implies, Log, MatLit, Max, Min, ModeLit, Mul, And, Neg, Norm,
    Not, Or, ScalarMul, Sgn, Sin, Sqrt, Sub, TRUE, Transpose, Var, Wrap,
)
from .state import register_space

UNARY_FUNCS = {
    "sin": Sin, "cos": Cos, "acos": Acos, "sqrt": Sqrt, "log": Log,
    "sgn": Sgn, "abs": Abs, "wrap": Wrap, "ang": Ang, "norm": Norm,
    "transpose": Transpose,
}
BINARY_FUNCS = {"min": Min, "max": Max, "dot": Dot}
RESERVED = (set(UNARY_FUNCS) | set(BINARY_FUNCS) | {
    "cond", "true", "false", "exists", "forall", "in",
    "if", "then", "else", "fi", "choice", "ode", "star", "skip",
    "space", "cont", "disc", "mode", "set", "const", "def", "pred",
    "program",
})

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|!=|<=|>=|=>|->|/\\|\\/|[-+*/^.()\[\]{},;:|'=<>!?])
""", re.VERBOSE)


class Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col

    def __repr__(self):
        return f"Token({self.kind}, {self.text!r})"


def tokenize(text):
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        lexeme = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(lexeme)
        else:
            tokens.append(Token(kind, lexeme, line, col))
            col += len(lexeme)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


class ParseContext:
    """Name environment a parse runs in.

    ``consts`` maps names to Const expressions, ``defs`` to named
    expressions, ``preds`` to named predicates; all are substituted at
    parse time. Mode symbols come from the space's mode lenses.
    """

    def __init__(self, space, consts=None, defs=None, preds=None):
        self.space = space
        self.consts = dict(consts or {})
        self.defs = dict(defs or {})
        self.preds = dict(preds or {})
        self.modes = {}
        for lens in space.disc_lenses:
            for m in lens.modes:
                self.modes[m] = ModeLit(m)


_EMPTY_SPACE = register_space([])


class TokenStream:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self, ahead=0):
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def next(self):
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at(self, text):
        return self.peek().text == text and self.peek().kind != "eof"

    def at_kind(self, kind):
        return self.peek().kind == kind

    def accept(self, text):
        if self.at(text):
            return self.next()
        return None

    def expect(self, text):
        tok = self.peek()
        if tok.text != text or tok.kind == "eof":
            raise ParseError(f"expected {text!r}, found {tok.text or 'end of input'!r}",
                             tok.line, tok.col)
        return self.next()

    def fail(self, message):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.col)


class ExprParser:
    """Expressions and predicates; program syntax lives in ``modelfile``."""

    def __init__(self, stream, ctx, bound=()):
        self.ts = stream
        self.ctx = ctx
        self.bound = list(bound)

    # -- shapes ------------------------------------------------------------

    def shape(self, e):
        try:
            return e.shape(self.ctx.space, frozenset(self.bound))
        except ShapeMismatchError as exc:
            tok = self.ts.peek()
            raise ParseError(str(exc), tok.line, tok.col) from None

    def is_scalar(self, e):
        return self.shape(e) == ("mat", 1, 1)

    # -- predicates --------------------------------------------------------

    def pred(self):
        left = self.pred_or()
        if self.ts.accept("=>"):
            return Implies(left, self.pred())
        return left

    def pred_or(self):
        left = self.pred_and()
        while self.ts.accept("\\/"):
            left = Or(left, self.pred_and())
        return left

    def pred_and(self):
        left = self.pred_not()
        while self.ts.accept("/\\"):
            left = And(left, self.pred_not())
        return left

    def pred_not(self):
        if self.ts.accept("!"):
            return Not(self.pred_not())
        return self.pred_atom()

    def pred_atom(self):
        tok = self.ts.peek()
        if tok.text in ("exists", "forall"):
            return self.quantifier()
        if tok.text == "true":
            self.ts.next()
            return TRUE
        if tok.text == "false":
            self.ts.next()
            return FALSE
        if (tok.kind == "ident" and tok.text in self.ctx.preds
                and not self._starts_comparison()):
            self.ts.next()
            return self.ctx.preds[tok.text]
        if tok.text == "(":
            # Could be a grouped predicate or a parenthesized expression
            # inside a comparison; try the predicate first and back off.
            mark = self.ts.i
            self.ts.next()
            try:
                inner = self.pred()
                self.ts.expect(")")
                return inner
            except ParseError:
                self.ts.i = mark
        return self.comparison()

    def _starts_comparison(self):
        # A known predicate name followed by a comparison operator is the
        # head of a comparison over an expression of the same name.
        nxt = self.ts.peek(1)
        return nxt.text in ("=", "!=", "<", "<=", ">", ">=", ".", "[", "^",
                            "+", "-", "*", "/")

    def quantifier(self):
        word = self.ts.next().text
        name_tok = self.ts.peek()
        if name_tok.kind != "ident":
            self.ts.fail("expected a bound variable name")
        var = self.ts.next().text
        if var in RESERVED:
            raise ParseError(f"{var!r} is reserved", name_tok.line, name_tok.col)
        if self.ctx.space.has_lens(var):
            raise ParseError(f"bound name {var!r} shadows a lens",
                             name_tok.line, name_tok.col)
        self.ts.expect("in")
        set_tok = self.ts.peek()
        set_name = self.ts.next().text
        lens = None
        if self.ctx.space.has_lens(set_name):
            lens = self.ctx.space.lens(set_name)
        if lens is None or lens.kind != "disc" or lens.sort != "set":
            raise ParseError(f"{set_name!r} is not a set lens",
                             set_tok.line, set_tok.col)
        self.ts.expect(".")
        self.bound.append(var)
        try:
            body = self.pred()
        finally:
            self.bound.pop()
        cls = ExistsIn if word == "exists" else ForallIn
        return cls(var, set_name, body)

    def comparison(self):
        tok = self.ts.peek()
        left = self.expr()
        op_tok = self.ts.peek()
        if op_tok.text not in ("=", "!=", "<", "<=", ">", ">="):
            raise ParseError("expected a comparison operator",
                             op_tok.line, op_tok.col)
        self.ts.next()
        right = self.expr()
        p = Cmp(op_tok.text, left, right)
        try:
            p.check(self.ctx.space, frozenset(self.bound))
        except ShapeMismatchError as exc:
            raise ParseError(str(exc), tok.line, tok.col) from None
        return p

    # -- expressions -------------------------------------------------------

    def expr(self):
        left = self.term()
        while self.ts.peek().text in ("+", "-"):
            op = self.ts.next().text
            right = self.term()
            node = Add(left, right) if op == "+" else Sub(left, right)
            self.shape(node)
            left = node
        return left

    def term(self):
        left = self.unary()
        while self.ts.peek().text in ("*", "/"):
            op_tok = self.ts.next()
            right = self.unary()
            if op_tok.text == "/":
                if not self.is_scalar(right):
                    raise ParseError("division needs a scalar denominator",
                                     op_tok.line, op_tok.col)
                left = Div(left, right)
            else:
                ls, rs = self.is_scalar(left), self.is_scalar(right)
                if ls and rs:
                    left = Mul(left, right)
                elif ls:
                    left = ScalarMul(left, right)
                elif rs:
                    left = ScalarMul(right, left)
                else:
                    raise ParseError("matrix * matrix; use . for dot products",
                                     op_tok.line, op_tok.col)
            self.shape(left)
        return left

    def unary(self):
        if self.ts.at("-"):
            tok = self.ts.next()
            inner = self.unary()
            node = Neg(inner)
            self.shape(node)
            return node
        return self.dot_chain()

    def dot_chain(self):
        left = self.power()
        while self.ts.at("."):
            tok = self.ts.next()
            right = self.power()
            left = Dot(left, right)
            try:
                self.shape(left)
            except ParseError:
                raise ParseError("dot product of unequal shapes",
                                 tok.line, tok.col) from None
        return left

    def power(self):
        base = self.postfix()
        if self.ts.at("^"):
            tok = self.ts.next()
            num = self.ts.peek()
            if num.kind != "num" or "." in num.text or "e" in num.text.lower():
                raise ParseError("^ takes a positive integer literal",
                                 num.line, num.col)
            self.ts.next()
            k = int(num.text)
            if k < 1:
                raise ParseError("^ takes a positive integer literal",
                                 num.line, num.col)
            if not self.is_scalar(base):
                raise ParseError("^ applies to scalars", tok.line, tok.col)
            out = base
            for _ in range(k - 1):
                out = Mul(out, base)
            return out
        return base

    def postfix(self):
        base = self.atom()
        if isinstance(base, Var) and base.elem is None and self.ts.at("["):
            mark = self.ts.i
            self.ts.next()
            i = self._int_literal()
            if i is not None and self.ts.accept(","):
                j = self._int_literal()
                if j is not None and self.ts.accept("]"):
                    node = Var(base.name, (i, j))
                    self.shape(node)
                    return node
            self.ts.i = mark
        return base

    def _int_literal(self):
        tok = self.ts.peek()
        if tok.kind == "num" and "." not in tok.text and "e" not in tok.text.lower():
            self.ts.next()
            return int(tok.text)
        return None

    def atom(self):
        tok = self.ts.peek()
        if tok.kind == "num":
            self.ts.next()
            return Const(_const_val(tok.text), (Fraction(tok.text),))
        if tok.text == "(":
            self.ts.next()
            inner = self.expr()
            self.ts.expect(")")
            return inner
        if tok.text == "[":
            return self.matrix_literal()
        if tok.kind == "ident":
            return self.identifier()
        self.ts.fail(f"unexpected {tok.text or 'end of input'!r} in expression")

    def matrix_literal(self):
        open_tok = self.ts.expect("[")
        if self.ts.at("["):
            rows = []
            while True:
                self.ts.expect("[")
                rows.append(self._row())
                self.ts.expect("]")
                if not self.ts.accept(","):
                    break
            self.ts.expect("]")
            width = len(rows[0])
            for r in rows:
                if len(r) != width:
                    raise RaggedRowsError("matrix rows of unequal length",
                                          open_tok.line, open_tok.col)
            node = MatLit(tuple(tuple(r) for r in rows))
        else:
            node = MatLit((tuple(self._row()),))
            self.ts.expect("]")
        self.shape(node)
        return node

    def _row(self):
        cells = [self.expr()]
        while self.ts.accept(","):
            cells.append(self.expr())
        return cells

    def identifier(self):
        tok = self.ts.next()
        name = tok.text
        if name == "cond":
            self.ts.expect("(")
            p = self.pred()
            self.ts.expect(",")
            a = self.expr()
            self.ts.expect(",")
            b = self.expr()
            self.ts.expect(")")
            node = Cond(p, a, b)
            self.shape(node)
            return node
        if name in BINARY_FUNCS:
            self.ts.expect("(")
            a = self.expr()
            self.ts.expect(",")
            b = self.expr()
            self.ts.expect(")")
            node = BINARY_FUNCS[name](a, b)
            self.shape(node)
            return node
        if name in UNARY_FUNCS:
            if self.ts.accept("("):
                arg = self.expr()
                self.ts.expect(")")
            else:
                arg = self.postfix()
            node = UNARY_FUNCS[name](arg)
            self.shape(node)
            return node
        if name in RESERVED:
            raise ParseError(f"{name!r} cannot appear here", tok.line, tok.col)
        if name in self.bound:
            return Var(name)
        if self.ctx.space.has_lens(name):
            return Var(name)
        if name in self.ctx.consts:
            return self.ctx.consts[name]
        if name in self.ctx.defs:
            return self.ctx.defs[name]
        if name in self.ctx.modes:
            return self.ctx.modes[name]
        raise ParseError(f"unknown name {name!r}", tok.line, tok.col)


def _const_val(text):
    from .state import MatVal

    return MatVal.scalar(float(Fraction(text)))


def _finish(stream, node):
    tok = stream.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input starting at {tok.text!r}",
                         tok.line, tok.col)
    return node


def parse_expr(text, space, consts=None, defs=None, preds=None):
    """Parse one expression against a state space."""
    ctx = space if isinstance(space, ParseContext) else ParseContext(
        space, consts, defs, preds)
    ts = TokenStream(tokenize(text))
    p = ExprParser(ts, ctx)
    node = p.expr()
    node.shape(ctx.space, frozenset())
    return _finish(ts, node)


def parse_pred(text, space, consts=None, defs=None, preds=None):
    """Parse one predicate against a state space."""
    ctx = space if isinstance(space, ParseContext) else ParseContext(
        space, consts, defs, preds)
    ts = TokenStream(tokenize(text))
    p = ExprParser(ts, ctx)
    node = p.pred()
    node.check(ctx.space, frozenset())
    return _finish(ts, node)


def parse_matrix(text):
    """Parse a numeric matrix literal into a MatVal.

    ``[1, 2]`` is a 1x2 row; ``[[1, 2], [3, 4]]`` is 2x2. Entries may be
    arithmetic over literals but not variables.
    """
    node = parse_expr(text, _EMPTY_SPACE)
    return node.eval(None, {})
