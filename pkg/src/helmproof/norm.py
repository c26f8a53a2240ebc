"""Polynomial normal form for scalar and vector expressions.

A scalar expression normalizes to a polynomial over *atoms*: subtrees the
polynomial ring cannot see through (lens reads, trig calls, conditionals,
reciprocals of non-constant denominators). Coefficients are exact
rationals, so two expressions that differ by ring arithmetic normalize to
identical polynomials. Rewrites applied on top of ring normalization:

* ``sin(u)^2 -> 1 - cos(u)^2`` wherever a sine is squared, which makes
  the Pythagorean identity vanish structurally
* ``sqrt(u)^2 -> u`` and ``abs(u)^2 -> u^2`` (sound wherever the original
  is defined, since ``sqrt`` is partial on negatives)
* ``norm(V)^2 -> V . V`` expanded through the vector form of ``V``
* ``sqrt`` of a perfect square becomes ``abs`` of the root
* ``norm`` of an explicit vector becomes ``sqrt`` of the sum of squares
* dot products, ``min`` and ``max`` sort their arguments

Vector expressions normalize to explicit per-component polynomials plus a
linear combination of vector atoms, so scalars distribute through matrix
literals and matching vector terms cancel.

Normalization is value-preserving wherever the input evaluates; it may
make an expression *more* defined (``sqrt(u)^2 -> u`` forgets that ``u``
was once required to be nonnegative).
"""

from __future__ import annotations

import math
from fractions import Fraction

from .errors import ShapeMismatchError, UnsupportedNodeError
from .expr import (
    Abs, Acos, Add, Ang, And, Cmp, Cond, Const, Cos, Div, Dot, ExistsIn,
    FALSE, FalseP, ForallIn, Implies, Log, MatLit, Max, Min, Mul, Neg,
    Norm, Not, Or, ScalarMul, Sgn, Sin, Sqrt, Sub, TRUE, Transpose, TrueP,
    Var, Wrap, _frac,
)

ONE_CONST = Const.of(1)


def skey(e):
    """Deterministic total order key for atoms; stable across runs."""
    return f"{type(e).__name__}\x00{e}"


# ---------------------------------------------------------------------------
# monomials: sorted tuples of (atom Expr, positive exponent)


def mono_mul(m1, m2):
    exps = {}
    order = {}
    for atom, k in m1 + m2:
        key = skey(atom)
        exps[key] = exps.get(key, 0) + k
        order[key] = atom
    return tuple((order[k], exps[k]) for k in sorted(exps))


def mono_degree(m):
    return sum(k for _, k in m)


def mono_lex(m):
    return tuple(f"{skey(a)}\x00{-k}" for a, k in m)


def mono_sort_key(m):
    # degree first, then lexicographic on the atom sequence
    return (-mono_degree(m), mono_lex(m))


def mono_divide(m, d):
    """Quotient monomial of m by d, or None when d does not divide m."""
    have = {skey(a): (a, k) for a, k in m}
    for atom, k in d:
        key = skey(atom)
        if key not in have or have[key][1] < k:
            return None
        a, n = have[key]
        if n == k:
            del have[key]
        else:
            have[key] = (a, n - k)
    return tuple(have[k] for k in sorted(have))


class Poly:
    """Polynomial with Fraction coefficients over atom monomials."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        if terms:
            for m, c in terms.items():
                if c != 0:
                    self.terms[m] = c

    @staticmethod
    def const(c):
        c = _frac(c)
        return Poly({(): c} if c else {})

    @staticmethod
    def atom(e, k=1):
        return Poly({((e, k),): Fraction(1)})

    @property
    def is_zero(self):
        return not self.terms

    @property
    def is_const(self):
        return not self.terms or (len(self.terms) == 1 and () in self.terms)

    def const_value(self):
        if not self.is_const:
            raise ValueError("not a constant polynomial")
        return self.terms.get((), Fraction(0))

    def degree(self):
        return max((mono_degree(m) for m in self.terms), default=0)

    def __add__(self, other):
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, Fraction(0)) + c
        return Poly(out)

    def __neg__(self):
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        c = _frac(c)
        if c == 0:
            return Poly()
        return Poly({m: cc * c for m, cc in self.terms.items()})

    def __mul__(self, other):
        out = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = mono_mul(m1, m2)
                out[m] = out.get(m, Fraction(0)) + c1 * c2
        return Poly(out)

    def pow_int(self, k):
        out = Poly.const(1)
        for _ in range(k):
            out = out * self
        return out

    def key(self):
        """Hashable canonical form; equal polynomials share keys."""
        return tuple(sorted(
            ((m, c) for m, c in self.terms.items()),
            key=lambda item: mono_sort_key(item[0])))

    def __eq__(self, other):
        return isinstance(other, Poly) and self.terms == other.terms

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Poly({rebuild_poly(self)})"

    def atoms(self):
        out = {}
        for m in self.terms:
            for a, _ in m:
                out[skey(a)] = a
        return out


ZERO_POLY = Poly()
ONE_POLY = Poly.const(1)


def _sqrt_fraction(q):
    if q < 0:
        return None
    num = math.isqrt(q.numerator)
    den = math.isqrt(q.denominator)
    if num * num == q.numerator and den * den == q.denominator:
        return Fraction(num, den)
    return None


class VecForm:
    """Matrix-shaped normal form: explicit components plus atom terms.

    ``comps`` holds one scalar Poly per entry (row-major); ``atoms`` maps
    vector-shaped atom expressions to scalar Poly coefficients.
    """

    __slots__ = ("rows", "cols", "comps", "atoms")

    def __init__(self, rows, cols, comps=None, atoms=None):
        n = rows * cols
        self.rows = rows
        self.cols = cols
        self.comps = list(comps) if comps else [ZERO_POLY] * n
        self.atoms = {}
        for a, c in (atoms or {}).items():
            if not c.is_zero:
                self.atoms[a] = c

    def map_polys(self, f):
        return VecForm(self.rows, self.cols,
                       [f(c) for c in self.comps],
                       {a: f(c) for a, c in self.atoms.items()})

    def add(self, other, sign=1):
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ShapeMismatchError("vector forms of different shapes")
        comps = [a + (b if sign > 0 else -b)
                 for a, b in zip(self.comps, other.comps)]
        atoms = dict(self.atoms)
        for a, c in other.atoms.items():
            c = c if sign > 0 else -c
            atoms[a] = atoms.get(a, ZERO_POLY) + c
        return VecForm(self.rows, self.cols, comps, atoms)

    @property
    def has_atoms(self):
        return bool(self.atoms)

    @property
    def literal_only(self):
        return not self.atoms


class Normalizer:
    """Shared caches for one normalization context (a state space)."""

    def __init__(self, space):
        self.space = space
        self._scalar = {}
        self._vector = {}
        self._bound = frozenset()

    # -- shape dispatch ----------------------------------------------------

    def shape(self, e):
        return e.shape(self.space, self._bound)

    def with_bound(self, names):
        n = Normalizer(self.space)
        n._bound = self._bound | frozenset(names)
        return n

    # -- scalar normalization ----------------------------------------------

    def scalar(self, e):
        got = self._scalar.get(e)
        if got is None:
            got = self._reduce(self._scalar_raw(e))
            self._scalar[e] = got
        return got

    def _scalar_raw(self, e):
        if isinstance(e, Const):
            exact = e.exact or tuple(_frac(v) for v in e.value.data)
            return Poly.const(exact[0])
        if isinstance(e, Var):
            sh = self.shape(e)
            if sh != ("mat", 1, 1):
                raise ShapeMismatchError(f"{e} is not scalar")
            return Poly.atom(e)
        if isinstance(e, Neg):
            return -self.scalar(e.e)
        if isinstance(e, Add):
            return self.scalar(e.l) + self.scalar(e.r)
        if isinstance(e, Sub):
            return self.scalar(e.l) - self.scalar(e.r)
        if isinstance(e, Mul):
            return self.scalar(e.l) * self.scalar(e.r)
        if isinstance(e, ScalarMul):
            return self.scalar(e.s) * self.scalar(e.m)
        if isinstance(e, Div):
            num = self.scalar(e.n)
            den = self.scalar(e.d)
            return self._divide(num, den)
        if isinstance(e, Dot):
            return self._dot(self.vector(e.l), self.vector(e.r))
        if isinstance(e, Norm):
            return self._norm(e.e)
        if isinstance(e, Sqrt):
            return self._sqrt(self.scalar(e.e))
        if isinstance(e, Abs):
            return self._abs(self.scalar(e.e))
        if isinstance(e, (Sin, Cos, Acos, Log, Sgn, Wrap)):
            inner = rebuild_poly(self.scalar(e.e))
            return Poly.atom(type(e)(inner))
        if isinstance(e, (Min, Max)):
            a = rebuild_poly(self.scalar(e.l))
            b = rebuild_poly(self.scalar(e.r))
            if skey(b) < skey(a):
                a, b = b, a
            return Poly.atom(type(e)(a, b))
        if isinstance(e, Ang):
            vf = self.vector(e.e)
            return Poly.atom(Ang(self.rebuild_vector(vf)))
        if isinstance(e, Cond):
            test = self.pred(e.test)
            if isinstance(test, TrueP):
                return self.scalar(e.then)
            if isinstance(test, FalseP):
                return self.scalar(e.els)
            then = rebuild_poly(self.scalar(e.then))
            els = rebuild_poly(self.scalar(e.els))
            return Poly.atom(Cond(test, then, els))
        if isinstance(e, MatLit):
            if len(e.rows) == 1 and len(e.rows[0]) == 1:
                return self.scalar(e.rows[0][0])
            raise ShapeMismatchError(f"{e} is not scalar")
        raise UnsupportedNodeError(
            f"cannot normalize {type(e).__name__} as a polynomial")

    def _divide(self, num, den):
        if den.is_const:
            c = den.const_value()
            if c == 0:
                # undefined everywhere; keep the division visible
                return Poly.atom(Div(rebuild_poly(num), Const.of(0)))
            return num.scale(Fraction(1) / c)
        inv = Poly.atom(Div(ONE_CONST, rebuild_poly(den)))
        return num * inv

    def _sqrt(self, p):
        if p.is_const:
            root = _sqrt_fraction(p.const_value())
            if root is not None:
                return Poly.const(root)
        if len(p.terms) == 1:
            ((m, c),) = p.terms.items()
            root_c = _sqrt_fraction(c)
            if root_c is not None and all(k % 2 == 0 for _, k in m):
                half = tuple((a, k // 2) for a, k in m)
                base = rebuild_poly(Poly({half: root_c}))
                return Poly.atom(Abs(base))
        return Poly.atom(Sqrt(rebuild_poly(p)))

    def _abs(self, p):
        if p.is_const:
            return Poly.const(abs(p.const_value()))
        # abs is even: hoist a negative leading coefficient
        first = min(p.terms.items(), key=lambda item: mono_sort_key(item[0]))
        if first[1] < 0:
            p = -p
        return Poly.atom(Abs(rebuild_poly(p)))

    def _norm(self, arg):
        sh = self.shape(arg)
        if sh == ("mat", 1, 1):
            return self._abs(self.scalar(arg))
        vf = self.vector(arg)
        if vf.literal_only:
            total = ZERO_POLY
            for comp in vf.comps:
                total = total + comp * comp
            return self._sqrt(self._reduce(total))
        if len(vf.atoms) == 1 and all(c.is_zero for c in vf.comps):
            ((a, coeff),) = vf.atoms.items()
            if coeff.is_const:
                scale = abs(coeff.const_value())
                return Poly.atom(Norm(a)).scale(scale)
        # norm is even: of the two orientations, keep the smaller key
        pos = self.rebuild_vector(vf)
        neg = self.rebuild_vector(vf.map_polys(lambda p: -p))
        return Poly.atom(Norm(pos if skey(pos) <= skey(neg) else neg))

    def _dot(self, vf1, vf2):
        if (vf1.rows, vf1.cols) != (vf2.rows, vf2.cols):
            raise ShapeMismatchError("dot of different shapes")
        out = ZERO_POLY
        for a, b in zip(vf1.comps, vf2.comps):
            out = out + a * b
        lit1 = self._literal_part(vf1)
        lit2 = self._literal_part(vf2)
        for a, ca in vf1.atoms.items():
            if lit2 is not None:
                out = out + ca * self._dot_atom(a, lit2)
            for b, cb in vf2.atoms.items():
                out = out + (ca * cb) * self._dot_atom(a, b)
        if lit1 is not None:
            for b, cb in vf2.atoms.items():
                out = out + cb * self._dot_atom(lit1, b)
        return out

    def _literal_part(self, vf):
        if all(c.is_zero for c in vf.comps):
            return None
        rows = []
        i = 0
        for _ in range(vf.rows):
            rows.append(tuple(rebuild_poly(c)
                              for c in vf.comps[i:i + vf.cols]))
            i += vf.cols
        return MatLit(tuple(rows))

    def _dot_atom(self, a, b):
        if skey(b) < skey(a):
            a, b = b, a
        return Poly.atom(Dot(a, b))

    # -- rewrites on built polynomials --------------------------------------

    def reduce(self, p):
        """Settle even powers in a polynomial assembled outside scalar()."""
        return self._reduce(p)

    def _reduce(self, p):
        for _ in range(10_000):
            target = None
            for m, c in p.terms.items():
                for atom, k in m:
                    if k >= 2 and isinstance(atom, (Sin, Sqrt, Abs, Norm)):
                        target = (m, c, atom, k)
                        break
                if target:
                    break
            if not target:
                return p
            m, c, atom, k = target
            rest = tuple((a, n) for a, n in m if a is not atom)
            rest_poly = Poly({rest: c})
            if isinstance(atom, Sin):
                cos2 = ONE_POLY - Poly.atom(Cos(atom.e), 2)
                repl = rest_poly * cos2
                if k > 2:
                    repl = repl * Poly.atom(atom, k - 2)
            else:
                if isinstance(atom, Norm):
                    vf = self.vector(atom.e)
                    base = self._dot(vf, vf)
                elif isinstance(atom, Abs):
                    inner = self.scalar(atom.e)
                    base = inner * inner
                else:
                    base = self.scalar(atom.e)
                q, r = divmod(k, 2)
                repl = rest_poly * base.pow_int(q)
                if r:
                    repl = repl * Poly.atom(atom, 1)
            without = dict(p.terms)
            del without[m]
            p = Poly(without) + repl
        raise UnsupportedNodeError("even-power rewriting did not settle")

    # -- vector normalization ----------------------------------------------

    def vector(self, e):
        got = self._vector.get(e)
        if got is None:
            got = self._vector_raw(e)
            self._vector[e] = got
        return got

    def _vector_raw(self, e):
        sh = self.shape(e)
        if sh[0] != "mat":
            raise UnsupportedNodeError(f"{e} is not matrix-shaped")
        rows, cols = sh[1], sh[2]
        if (rows, cols) == (1, 1):
            return VecForm(1, 1, [self.scalar(e)])
        if isinstance(e, Const):
            exact = e.exact or tuple(_frac(v) for v in e.value.data)
            return VecForm(rows, cols, [Poly.const(q) for q in exact])
        if isinstance(e, MatLit):
            comps = [self.scalar(c) for row in e.rows for c in row]
            return VecForm(rows, cols, comps)
        if isinstance(e, Neg):
            return self.vector(e.e).map_polys(lambda p: -p)
        if isinstance(e, Add):
            return self.vector(e.l).add(self.vector(e.r))
        if isinstance(e, Sub):
            return self.vector(e.l).add(self.vector(e.r), sign=-1)
        if isinstance(e, ScalarMul):
            s = self.scalar(e.s)
            return self.vector(e.m).map_polys(lambda p: p * s)
        if isinstance(e, Div):
            den = self.scalar(e.d)
            if den.is_const and den.const_value() != 0:
                inv = Poly.const(Fraction(1) / den.const_value())
            else:
                inv = Poly.atom(Div(ONE_CONST, rebuild_poly(den)))
            return self.vector(e.n).map_polys(lambda p: p * inv)
        if isinstance(e, Var):
            return VecForm(rows, cols, None, {e: ONE_POLY})
        if isinstance(e, Cond):
            test = self.pred(e.test)
            if isinstance(test, TrueP):
                return self.vector(e.then)
            if isinstance(test, FalseP):
                return self.vector(e.els)
            then = self.rebuild_vector(self.vector(e.then))
            els = self.rebuild_vector(self.vector(e.els))
            atom = Cond(test, then, els)
            return VecForm(rows, cols, None, {atom: ONE_POLY})
        if isinstance(e, Transpose):
            vf = self.vector(e.e)
            if vf.literal_only:
                comps = [None] * (rows * cols)
                for i in range(vf.rows):
                    for j in range(vf.cols):
                        comps[j * vf.rows + i] = vf.comps[i * vf.cols + j]
                return VecForm(rows, cols, comps)
            atom = Transpose(self.rebuild_vector(vf))
            return VecForm(rows, cols, None, {atom: ONE_POLY})
        raise UnsupportedNodeError(
            f"cannot normalize {type(e).__name__} as a vector form")

    def rebuild_vector(self, vf):
        lit = None
        if any(not c.is_zero for c in vf.comps) or not vf.atoms:
            rows = []
            i = 0
            for _ in range(vf.rows):
                rows.append(tuple(rebuild_poly(c)
                                  for c in vf.comps[i:i + vf.cols]))
                i += vf.cols
            lit = MatLit(tuple(rows))
        out = None
        for atom in sorted(vf.atoms, key=skey):
            coeff = vf.atoms[atom]
            if coeff == ONE_POLY:
                term = atom
            elif coeff == -ONE_POLY:
                term = Neg(atom)
            else:
                term = ScalarMul(rebuild_poly(coeff), atom)
            out = term if out is None else Add(out, term)
        if lit is not None:
            out = lit if out is None else Add(out, lit)
        return out

    # -- predicates ---------------------------------------------------------

    def pred(self, p):
        if isinstance(p, (TrueP, FalseP)):
            return p
        if isinstance(p, Cmp):
            return self._cmp(p)
        if isinstance(p, Not):
            inner = self.pred(p.p)
            if isinstance(inner, TrueP):
                return FALSE
            if isinstance(inner, FalseP):
                return TRUE
            if isinstance(inner, Not):
                return inner.p
            return Not(inner)
        if isinstance(p, And):
            l, r = self.pred(p.l), self.pred(p.r)
            if isinstance(l, FalseP) or isinstance(r, FalseP):
                return FALSE
            if isinstance(l, TrueP):
                return r
            if isinstance(r, TrueP):
                return l
            return And(l, r)
        if isinstance(p, Or):
            l, r = self.pred(p.l), self.pred(p.r)
            if isinstance(l, TrueP) or isinstance(r, TrueP):
                return TRUE
            if isinstance(l, FalseP):
                return r
            if isinstance(r, FalseP):
                return l
            return Or(l, r)
        if isinstance(p, Implies):
            l, r = self.pred(p.l), self.pred(p.r)
            if isinstance(l, FalseP) or isinstance(r, TrueP):
                return TRUE
            if isinstance(l, TrueP):
                return r
            return Implies(l, r)
        if isinstance(p, (ExistsIn, ForallIn)):
            body = self.with_bound({p.var}).pred(p.body)
            if isinstance(body, TrueP) and isinstance(p, ForallIn):
                return TRUE
            if isinstance(body, FalseP) and isinstance(p, ExistsIn):
                return FALSE
            return type(p)(p.var, p.set_name, body)
        raise UnsupportedNodeError(f"cannot simplify {type(p).__name__}")

    def _cmp(self, p):
        lsh = self.shape(p.l)
        rsh = self.shape(p.r)
        if lsh == ("mode",) or rsh == ("mode",):
            return p
        if lsh[0] != "mat" or rsh[0] != "mat":
            return p
        if lsh[1:] == (1, 1):
            diff = self.scalar(p.l) - self.scalar(p.r)
            if diff.is_const:
                return TRUE if _cmp_const(p.op, diff.const_value()) else FALSE
            return Cmp(p.op, rebuild_poly(self.scalar(p.l)),
                       rebuild_poly(self.scalar(p.r)))
        lf = self.vector(p.l)
        rf = self.vector(p.r)
        diff = lf.add(rf, sign=-1)
        if diff.literal_only and all(c.is_const for c in diff.comps):
            vals = [c.const_value() for c in diff.comps]
            if p.op == "=":
                return TRUE if all(v == 0 for v in vals) else FALSE
            if p.op == "!=":
                return TRUE if any(v != 0 for v in vals) else FALSE
        return Cmp(p.op, self.rebuild_vector(lf), self.rebuild_vector(rf))


def _cmp_const(op, v):
    if op == "=":
        return v == 0
    if op == "!=":
        return v != 0
    if op == "<":
        return v < 0
    if op == "<=":
        return v <= 0
    if op == ">":
        return v > 0
    return v >= 0


# ---------------------------------------------------------------------------
# rebuilding expressions from polynomials


def _atom_power(atom, k):
    out = atom
    for _ in range(k - 1):
        out = Mul(out, atom)
    return out


def _term_expr(m, coeff):
    """One monomial times its coefficient, reciprocals as divisions."""
    num_factors = []
    den_factors = []
    for atom, k in m:
        if isinstance(atom, Div) and atom.n == ONE_CONST:
            den_factors.append(_atom_power(atom.d, k))
        else:
            num_factors.append(_atom_power(atom, k))
    c = abs(coeff)
    if den_factors and c.denominator != 1:
        num_factors.insert(0, Const.of(Fraction(c.numerator)))
        den_factors.append(Const.of(Fraction(c.denominator)))
    elif c != 1 or not num_factors:
        num_factors.insert(0, Const.of(c))

    def fold(fs):
        out = fs[0]
        for f in fs[1:]:
            out = Mul(out, f)
        return out

    num = fold(num_factors)
    if den_factors:
        return Div(num, fold(den_factors))
    return num


def rebuild_poly(p):
    """Canonical expression for a polynomial; terms in degree-lex order."""
    if p.is_zero:
        return Const.of(0)
    items = sorted(p.terms.items(), key=lambda item: mono_sort_key(item[0]))
    out = None
    for m, c in items:
        term = _term_expr(m, c)
        if out is None:
            out = Neg(term) if c < 0 else term
        elif c < 0:
            out = Sub(out, term)
        else:
            out = Add(out, term)
    return out


# ---------------------------------------------------------------------------
# public entry points


def simplify(e, space):
    """Normalize and rebuild an expression (scalar or matrix shaped)."""
    n = Normalizer(space)
    sh = e.shape(space, frozenset())
    if sh == ("mode",) or sh == ("set",):
        return e
    if sh == ("mat", 1, 1):
        return rebuild_poly(n.scalar(e))
    return n.rebuild_vector(n.vector(e))


def simplify_pred(p, space):
    """Simplify both sides of comparisons and fold constant structure."""
    return Normalizer(space).pred(p)
