"""Best-effort symbolic validity checking for closed implications.

The entry point is Prover.valid: it either recognizes a formula as true
over every state of a space, or gives up. The pipeline splits guarded
choices out of cond() nodes, breaks vector lenses into components so
dot products and norms expand, substitutes defining equalities from the
premises, and then runs a small sign calculus over polynomial normal
forms. Everything here is one-sided: True means proved, False means
"not established", never "false".
"""

from __future__ import annotations

from fractions import Fraction

from .deriv import elem_expr
from .errors import (
    ShapeMismatchError, UnknownLensError, UnsupportedNodeError,
    UnsupportedPredicateError,
)
from .expr import (
    Abs, Acos, And, Cmp, Cond, Const, Div, Dot, ExistsIn, FalseP, ForallIn,
    Implies, MatLit, Max, Min, ModeLit, Neg, Norm, Not, Or, Sgn, Sqrt,
    TrueP, Var, free_lenses, subst,
)
from .norm import (
    Normalizer, Poly, ZERO_POLY, _cmp_const, mono_divide, mono_sort_key,
    skey,
)

_ORDER_OPS = ("<", "<=", ">", ">=")
_FLIP = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}

_GIVE_UP = (UnsupportedNodeError, UnsupportedPredicateError,
            ShapeMismatchError, UnknownLensError)


# ---------------------------------------------------------------------------
# tree utilities


def _replace(node, target, repl):
    """Replace every expression equal to target, skipping quantifier
    bodies (bound names never shadow lenses, but a target mentioning a
    bound variable must not escape its binder)."""
    if isinstance(node, (ExistsIn, ForallIn)):
        return node
    if node == target:
        return repl
    return node.map_children(lambda e: _replace(e, target, repl),
                             lambda p: _replace(p, target, repl))


def _first_cond(node, out):
    if out or isinstance(node, (ExistsIn, ForallIn)):
        return
    if isinstance(node, Cond):
        out.append(node)
        return
    def fe(e):
        _first_cond(e, out)
        return e
    node.map_children(fe, fe)


def _occurs(node, target):
    found = []
    def fe(e):
        if e == target:
            found.append(e)
        else:
            e.map_children(fe, fe)
        return e
    fe(node)
    return bool(found)


def _push_not(p):
    """Negation-free form of !p, or None when the shape resists."""
    if isinstance(p, Cmp):
        return Cmp(_FLIP[p.op], p.l, p.r)
    if isinstance(p, Not):
        return p.p
    if isinstance(p, And):
        return Or(Not(p.l), Not(p.r))
    if isinstance(p, Or):
        return And(Not(p.l), Not(p.r))
    if isinstance(p, Implies):
        return And(p.l, Not(p.r))
    if isinstance(p, TrueP):
        return FalseP()
    if isinstance(p, FalseP):
        return TrueP()
    return None


def poly_div_exact(p, q):
    """Quotient h with p == h*q, or None when the division leaves a
    remainder. Leading terms follow the degree-lex order."""
    if q.is_zero:
        return None
    lead_q = min(q.terms, key=mono_sort_key)
    coeff_q = q.terms[lead_q]
    quot = {}
    r = p
    for _ in range(200):
        if r.is_zero:
            return Poly(quot)
        lead_r = min(r.terms, key=mono_sort_key)
        resid = mono_divide(lead_r, lead_q)
        if resid is None:
            return None
        c = r.terms[lead_r] / coeff_q
        quot[resid] = quot.get(resid, Fraction(0)) + c
        r = r - Poly({resid: c}) * q
    return None


# ---------------------------------------------------------------------------
# the prover


class Prover:
    """Sound, incomplete validity checker over one state space."""

    def __init__(self, space, max_splits=8, depth=5):
        self.space = space
        self.norm = Normalizer(space)
        self.max_splits = max_splits
        self.depth = depth

    def valid(self, formula):
        try:
            prem, goal = _split_implication(formula)
            return self._attempt(prem, goal, self.max_splits)
        except _GIVE_UP:
            return False

    def residue(self, formula):
        """Simplified form of the formula, for reporting."""
        try:
            return str(self.norm.pred(formula))
        except _GIVE_UP:
            return str(formula)

    # -- case splitting on conds and disjunctive premises -------------------

    def _attempt(self, premises, goal, splits):
        found = []
        for p in premises:
            _first_cond(p, found)
        _first_cond(goal, found)
        if found:
            if splits <= 0:
                return False
            c = found[0]
            def branch(test, taken):
                prem2 = [test] + [_replace(p, c, taken) for p in premises]
                return self._attempt(prem2, _replace(goal, c, taken),
                                     splits - 1)
            return branch(c.test, c.then) and branch(Not(c.test), c.els)

        premises, goal = self._componentize(premises, goal)
        flat = _flatten(premises)
        if flat is None:
            return True  # a premise is literally false
        for i, p in enumerate(flat):
            if isinstance(p, Or):
                if splits <= 0:
                    return False
                rest = flat[:i] + flat[i + 1:]
                return (self._attempt(rest + [p.l], goal, splits - 1)
                        and self._attempt(rest + [p.r], goal, splits - 1))
        return self._ground(flat, goal, splits)

    def _componentize(self, premises, goal):
        """Split every vector or matrix lens into element variables."""
        names = set()
        for t in premises + [goal]:
            names |= free_lenses(t)
        for name in sorted(names):
            if not self.space.has_lens(name):
                continue
            lens = self.space.lens(name)
            if lens.kind == "cont":
                rows, cols = lens.rows, lens.cols
            elif lens.sort == "vec2":
                rows, cols = 1, 2
            else:
                continue
            if (rows, cols) == (1, 1):
                continue
            lit = MatLit(tuple(tuple(Var(name, (i, j))
                                     for j in range(1, cols + 1))
                               for i in range(1, rows + 1)))
            premises = [subst(p, name, lit) for p in premises]
            goal = subst(goal, name, lit)
        return premises, goal

    # -- ground reasoning ----------------------------------------------------

    def _ground(self, flat, goal, splits):
        flat, goal = self._substitute_definitions(flat, goal)
        engine = _Engine(self, flat, splits)
        if engine.vacuous:
            return True
        return engine.prove(goal, self.depth)

    def _substitute_definitions(self, flat, goal):
        """Premises x = rhs with a lone scalar variable on one side
        rewrite that variable away everywhere else."""
        used = set()
        changed = True
        while changed:
            changed = False
            for i, p in enumerate(flat):
                if not (isinstance(p, Cmp) and p.op == "="):
                    continue
                for var, rhs in ((p.l, p.r), (p.r, p.l)):
                    if not isinstance(var, Var) or var in used:
                        continue
                    try:
                        if self.norm.shape(var) != ("mat", 1, 1):
                            continue
                    except _GIVE_UP:
                        continue
                    if _occurs(rhs, var):
                        continue
                    flat = [q if j == i else _replace(q, var, rhs)
                            for j, q in enumerate(flat)]
                    goal = _replace(goal, var, rhs)
                    used.add(var)
                    changed = True
                    break
                if changed:
                    break
        return flat, goal


def _split_implication(p):
    prem = []
    while isinstance(p, Implies):
        prem.append(p.l)
        p = p.r
    return prem, p


def _flatten(premises):
    """And-split, negation-push. Returns None when a premise is the
    constant false (the implication is vacuously true)."""
    out = []
    work = list(premises)
    while work:
        p = work.pop()
        if isinstance(p, TrueP):
            continue
        if isinstance(p, FalseP):
            return None
        if isinstance(p, And):
            work.append(p.l)
            work.append(p.r)
            continue
        if isinstance(p, Not):
            pushed = _push_not(p.p)
            if pushed is not None:
                work.append(pushed)
            else:
                out.append(p)  # negated quantifier; kept for pair matching
            continue
        if isinstance(p, Implies):
            work.append(Or(Not(p.l), p.r))
            continue
        out.append(p)
    return out


class _Engine:
    """Sign facts extracted from one premise set, plus goal dispatch."""

    def __init__(self, prover, flat, splits):
        self.prover = prover
        self.norm = prover.norm
        self.flat = flat
        self.splits = splits
        self.eq = []        # polynomials provably zero
        self.nonneg = []
        self.pos = []
        self.nonzero = []
        self.mode_eq = {}   # lens name -> mode symbol
        self.mode_neq = set()
        self.quants = []    # normalized quantified premises
        self.vacuous = False
        self._memo = {}
        for p in flat:
            self._absorb(p)
            if self.vacuous:
                return
        self._scan_contradictions()

    # -- premise intake ------------------------------------------------------

    def _absorb(self, p):
        if isinstance(p, (ExistsIn, ForallIn)) or (
                isinstance(p, Not) and isinstance(p.p, (ExistsIn, ForallIn))):
            try:
                self.quants.append(self.norm.pred(p))
            except _GIVE_UP:
                pass
            return
        if not isinstance(p, Cmp):
            return  # already flattened; anything else is dropped (sound)
        try:
            lsh = self.norm.shape(p.l)
            rsh = self.norm.shape(p.r)
        except _GIVE_UP:
            return
        if ("mode",) in (lsh, rsh):
            self._absorb_mode(p)
            return
        if lsh[0] != "mat":
            return
        if lsh[1:] == (1, 1):
            try:
                pl = self.norm.scalar(p.l)
                pr = self.norm.scalar(p.r)
            except _GIVE_UP:
                return
            self._absorb_scalar(p.op, pl, pr)
            return
        if p.op == "=":
            try:
                comps = _components(p.l, p.r, lsh)
            except _GIVE_UP:
                return
            for cl, cr in comps:
                try:
                    self._absorb_scalar("=", self.norm.scalar(cl),
                                        self.norm.scalar(cr))
                except _GIVE_UP:
                    pass

    def _absorb_scalar(self, op, pl, pr):
        d = pl - pr
        if d.is_const:
            if not _cmp_const(op, d.const_value()):
                self.vacuous = True
            return
        if op == "=":
            self.eq.append(d)
            sq = self.norm.reduce(pl * pl) - self.norm.reduce(pr * pr)
            if sq.is_const:
                if sq.const_value() != 0:
                    self.vacuous = True
            elif all(sq != q for q in self.eq):
                self.eq.append(sq)
        elif op == "<=":
            self.nonneg.append(pr - pl)
        elif op == "<":
            self.pos.append(pr - pl)
        elif op == ">=":
            self.nonneg.append(pl - pr)
        elif op == ">":
            self.pos.append(pl - pr)
        elif op == "!=":
            self.nonzero.append(d)
            self.pos.append(self.norm.reduce(d * d))

    def _absorb_mode(self, p):
        l, r = p.l, p.r
        if isinstance(l, ModeLit) and isinstance(r, ModeLit):
            same = l.symbol == r.symbol
            if same != (p.op == "="):
                self.vacuous = True
            return
        if isinstance(r, Var) and isinstance(l, ModeLit):
            l, r = r, l
        if isinstance(l, Var) and isinstance(r, ModeLit):
            if p.op == "=":
                known = self.mode_eq.get(l.name)
                if known is not None and known != r.symbol:
                    self.vacuous = True
                self.mode_eq[l.name] = r.symbol
            elif p.op == "!=":
                self.mode_neq.add((l.name, r.symbol))

    def _scan_contradictions(self):
        keyed_pos = {q.key() for q in self.pos}
        keyed_nn = {q.key() for q in self.nonneg}
        for q in self.pos:
            if q.is_const and q.const_value() <= 0:
                self.vacuous = True
            k = (-q).key()
            if k in keyed_pos or k in keyed_nn:
                self.vacuous = True
        for q in self.nonneg:
            if q.is_const and q.const_value() < 0:
                self.vacuous = True
            if (-q).key() in keyed_pos:
                self.vacuous = True
        for q in self.nonzero:
            if q.is_zero:
                self.vacuous = True
        for name, sym in self.mode_neq:
            if self.mode_eq.get(name) == sym:
                self.vacuous = True
        texts = {str(q) for q in self.quants}
        for q in self.quants:
            if isinstance(q, Not) and str(q.p) in texts:
                self.vacuous = True

    # -- goal dispatch -------------------------------------------------------

    def prove(self, g, depth):
        try:
            return self._prove(g, depth)
        except _GIVE_UP:
            return False

    def _prove(self, g, depth):
        if isinstance(g, TrueP):
            return True
        if isinstance(g, FalseP):
            return False
        if isinstance(g, And):
            return self._prove(g.l, depth) and self._prove(g.r, depth)
        if isinstance(g, Or):
            return self._prove(g.l, depth) or self._prove(g.r, depth)
        if isinstance(g, Implies):
            return self.prover._attempt(self.flat + [g.l], g.r, self.splits)
        if isinstance(g, Not):
            pushed = _push_not(g.p)
            return pushed is not None and self._prove(pushed, depth)
        if isinstance(g, (ExistsIn, ForallIn)):
            return False
        if not isinstance(g, Cmp):
            return False
        lsh = self.norm.shape(g.l)
        rsh = self.norm.shape(g.r)
        if ("mode",) in (lsh, rsh):
            return self._prove_mode(g)
        if lsh[0] != "mat":
            return False
        if lsh[1:] == (1, 1):
            pl = self.norm.scalar(g.l)
            pr = self.norm.scalar(g.r)
            if g.op == "=":
                return self._eq_sides(pl, pr, depth)
            if g.op == "!=":
                return self._nonzero(pl - pr, depth)
            if g.op == "<=":
                return self._nonneg(pr - pl, depth)
            if g.op == "<":
                return self._pos(pr - pl, depth)
            if g.op == ">=":
                return self._nonneg(pl - pr, depth)
            return self._pos(pl - pr, depth)
        return self._prove_vector(g, lsh, depth)

    def _prove_mode(self, g):
        if g.l == g.r:
            return g.op == "="
        l, r = g.l, g.r
        if isinstance(l, ModeLit) and isinstance(r, ModeLit):
            return (l.symbol == r.symbol) == (g.op == "=")
        if isinstance(r, Var) and isinstance(l, ModeLit):
            l, r = r, l
        if isinstance(l, Var) and isinstance(r, ModeLit):
            known = self.mode_eq.get(l.name)
            if g.op == "=":
                return known == r.symbol
            if known is not None and known != r.symbol:
                return True
            return (l.name, r.symbol) in self.mode_neq
        if isinstance(l, Var) and isinstance(r, Var):
            a, b = self.mode_eq.get(l.name), self.mode_eq.get(r.name)
            if a is None or b is None:
                return False
            return (a == b) == (g.op == "=")
        return False

    def _prove_vector(self, g, lsh, depth):
        if g.op not in ("=", "!="):
            return False
        diff = self.norm.vector(g.l).add(self.norm.vector(g.r), sign=-1)
        if g.op == "=":
            for coeff in diff.atoms.values():
                if not self._eq_sides(coeff, ZERO_POLY, depth):
                    return False
            return all(self._eq_sides(c, ZERO_POLY, depth)
                       for c in diff.comps)
        if not diff.literal_only:
            return False
        return any(self._nonzero(c, depth) for c in diff.comps)

    # -- equalities ----------------------------------------------------------

    def _eq_sides(self, pl, pr, depth):
        d = pl - pr
        if d.is_zero:
            return True
        if d.is_const:
            return False
        if depth <= 0:
            return False
        if self._eq_reduce(d, 0):
            return True
        div_atom = _pick_atom(d, Div)
        if div_atom is not None:
            den = self.norm.scalar(div_atom.d)
            if self._nonzero(den, depth - 1):
                return self._eq_sides(self._cancel(pl, div_atom, den),
                                      self._cancel(pr, div_atom, den),
                                      depth - 1)
            return False
        if len(d.terms) == 1:
            ((m, _),) = d.terms.items()
            if len(m) == 1 and isinstance(m[0][0], Acos) and m[0][1] == 1:
                arg = self.norm.scalar(m[0][0].e)
                return self._eq_sides(arg, Poly.const(1), depth - 1)
        if self._nonneg(pl, depth - 1) and self._nonneg(pr, depth - 1):
            return self._eq_sides(self.norm.reduce(pl * pl),
                                  self.norm.reduce(pr * pr), depth - 1)
        return False

    def _eq_reduce(self, d, i):
        """Eliminate d against the equality facts, one pass each."""
        if d.is_zero:
            return True
        if i >= len(self.eq):
            return False
        if self._eq_reduce(d, i + 1):
            return True
        q = self.eq[i]
        if q.is_zero:
            return False
        lead = min(q.terms, key=mono_sort_key)
        if lead in d.terms:
            lam = d.terms[lead] / q.terms[lead]
            return self._eq_reduce(d - q.scale(lam), i + 1)
        return False

    def _cancel(self, p, atom, den):
        """Multiply by the denominator, cancelling its reciprocal atom."""
        out = ZERO_POLY
        unit = ((atom, 1),)
        for m, c in p.terms.items():
            resid = mono_divide(m, unit)
            if resid is not None:
                out = out + Poly({resid: c})
            else:
                out = out + Poly({m: c}) * den
        return self.norm.reduce(out)

    # -- sign calculus -------------------------------------------------------

    def _cached(self, kind, p, depth, fn):
        key = (kind, p.key())
        got = self._memo.get(key)
        if got == "busy":
            return False  # cycle; the outer attempt decides
        if got is True:
            return True
        self._memo[key] = "busy"
        result = fn(p, depth)
        if result:
            self._memo[key] = True
        else:
            self._memo.pop(key, None)
        return result

    def _nonneg(self, p, depth):
        return self._cached("nonneg", p, depth, self._nonneg_raw)

    def _nonneg_raw(self, p, depth):
        if p.is_zero:
            return True
        if p.is_const:
            return p.const_value() >= 0
        if depth <= 0:
            return False
        if self._eq_reduce(p, 0):
            return True
        if self._obvious_nonneg(p, depth):
            return True
        if self._div_sign(p, depth, self._nonneg):
            return True
        for q, need_pos_lam in self._lambda_facts():
            for lam in _shared_ratios(p, q):
                if need_pos_lam and lam <= 0:
                    continue
                if lam != 0 and self._nonneg(p - q.scale(lam), depth - 1):
                    return True
        for q in self.pos + self.nonneg:
            h = poly_div_exact(p, q)
            if h is not None and self._nonneg(h, depth - 1):
                return True
        return False

    def _pos(self, p, depth):
        return self._cached("pos", p, depth, self._pos_raw)

    def _pos_raw(self, p, depth):
        if p.is_const:
            return p.const_value() > 0
        if depth <= 0:
            return False
        c0 = p.terms.get((), Fraction(0))
        if c0 > 0 and self._nonneg(p - Poly.const(c0), depth - 1):
            return True
        for m, c in sorted(p.terms.items(), key=lambda kv: mono_sort_key(kv[0])):
            if m == ():
                continue
            if c > 0 and self._mono_pos(m, depth) \
                    and self._nonneg(p - Poly({m: c}), depth - 1):
                return True
        if self._div_sign(p, depth, self._pos):
            return True
        for q in self.pos:
            for lam in _shared_ratios(p, q):
                if lam > 0 and self._nonneg(p - q.scale(lam), depth - 1):
                    return True
        for q, need_pos_lam in self._lambda_facts():
            for lam in _shared_ratios(p, q):
                if need_pos_lam and lam <= 0:
                    continue
                if lam != 0 and self._pos(p - q.scale(lam), depth - 1):
                    return True
        for q in self.pos:
            h = poly_div_exact(p, q)
            if h is not None and self._pos(h, depth - 1):
                return True
        return False

    def _nonzero(self, p, depth):
        return self._cached("nonzero", p, depth, self._nonzero_raw)

    def _nonzero_raw(self, p, depth):
        if p.is_const:
            return p.const_value() != 0
        if depth <= 0:
            return False
        for q in self.nonzero:
            if q.is_zero:
                continue
            lead = min(q.terms, key=mono_sort_key)
            if lead in p.terms:
                lam = p.terms[lead] / q.terms[lead]
                if lam != 0 and (p - q.scale(lam)).is_zero:
                    return True
        if self._pos(p, depth - 1) or self._pos(-p, depth - 1):
            return True
        if len(p.terms) == 1:
            ((m, c),) = p.terms.items()
            if c != 0 and all(self._atom_nonzero(a, depth - 1) for a, _ in m):
                return True
        return False

    def _lambda_facts(self):
        for q in self.pos:
            yield q, True
        for q in self.nonneg:
            yield q, True
        for q in self.eq:
            yield q, False

    def _div_sign(self, p, depth, again):
        """Clear one reciprocal atom of known sign, preserving the goal."""
        atom = _pick_atom(p, Div)
        if atom is None:
            return False
        den = self.norm.scalar(atom.d)
        if self._pos(den, depth - 1):
            return again(self._cancel(p, atom, den), depth - 1)
        if self._pos(-den, depth - 1):
            return again(-self._cancel(p, atom, den), depth - 1)
        return False

    def _obvious_nonneg(self, p, depth):
        for m, c in p.terms.items():
            if m == ():
                if c < 0:
                    return False
            elif c <= 0 or not self._mono_nonneg(m, depth):
                return False
        return True

    def _mono_nonneg(self, m, depth):
        return all(k % 2 == 0 or self._atom_nonneg(a, depth - 1)
                   for a, k in m)

    def _mono_pos(self, m, depth):
        for a, k in m:
            if k % 2 == 0:
                if not self._atom_nonzero(a, depth - 1):
                    return False
            elif not self._atom_pos(a, depth - 1):
                return False
        return True

    # -- atom signs ----------------------------------------------------------

    def _atom_nonneg(self, a, depth):
        if depth < 0:
            return False
        if isinstance(a, (Norm, Abs, Sqrt, Acos)):
            return True
        if isinstance(a, Dot):
            return a.l == a.r
        if isinstance(a, Sgn):
            return self._nonneg(self.norm.scalar(a.e), depth)
        if isinstance(a, Min):
            return (self._nonneg(self.norm.scalar(a.l), depth)
                    and self._nonneg(self.norm.scalar(a.r), depth))
        if isinstance(a, Max):
            return (self._nonneg(self.norm.scalar(a.l), depth)
                    or self._nonneg(self.norm.scalar(a.r), depth))
        if isinstance(a, Cond):
            return (self._nonneg(self.norm.scalar(a.then), depth)
                    and self._nonneg(self.norm.scalar(a.els), depth))
        return self._nonneg(Poly.atom(a), depth)

    def _atom_pos(self, a, depth):
        if depth < 0:
            return False
        if isinstance(a, Sqrt):
            return self._pos(self.norm.scalar(a.e), depth)
        if isinstance(a, Abs):
            return self._nonzero(self.norm.scalar(a.e), depth)
        if isinstance(a, Sgn):
            return self._pos(self.norm.scalar(a.e), depth)
        if isinstance(a, Min):
            return (self._pos(self.norm.scalar(a.l), depth)
                    and self._pos(self.norm.scalar(a.r), depth))
        if isinstance(a, Max):
            return (self._pos(self.norm.scalar(a.l), depth)
                    or self._pos(self.norm.scalar(a.r), depth))
        if isinstance(a, Cond):
            return (self._pos(self.norm.scalar(a.then), depth)
                    and self._pos(self.norm.scalar(a.els), depth))
        return self._pos(Poly.atom(a), depth)

    def _atom_nonzero(self, a, depth):
        if depth < 0:
            return False
        if isinstance(a, Sqrt):
            return self._pos(self.norm.scalar(a.e), depth)
        if isinstance(a, (Abs, Sgn)):
            return self._nonzero(self.norm.scalar(a.e), depth)
        if isinstance(a, Cond):
            return (self._nonzero(self.norm.scalar(a.then), depth)
                    and self._nonzero(self.norm.scalar(a.els), depth))
        return self._nonzero(Poly.atom(a), depth)


def _components(l, r, lsh):
    _, rows, cols = lsh
    return [(elem_expr(l, i, j), elem_expr(r, i, j))
            for i in range(1, rows + 1) for j in range(1, cols + 1)]


def _pick_atom(p, cls):
    picks = [a for a in p.atoms().values() if isinstance(a, cls)]
    if not picks:
        return None
    return min(picks, key=skey)


def _shared_ratios(p, q, limit=3):
    """Candidate multipliers from monomials common to both polynomials."""
    out = []
    for m in sorted(q.terms, key=mono_sort_key):
        if m in p.terms:
            lam = p.terms[m] / q.terms[m]
            if lam not in out:
                out.append(lam)
            if len(out) >= limit:
                break
    return out
