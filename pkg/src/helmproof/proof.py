"""Hoare-style proof kernel for hybrid programs.

A triple ``{pre} prog {post}`` asserts partial correctness: every
terminating run of ``prog`` from a state satisfying ``pre`` ends in one
satisfying ``post``. Runs blocked by a failed test or an unmatched
guard satisfy any triple vacuously. The kernel reduces triples to
verification conditions (closed implications with no program constructs,
each tagged with the rule and triple that produced it) and discharges
them best-effort in three stages:

1. the symbolic validity engine (``prover`` module),
2. uniform refutation sampling over a box, which can return a concrete
   counterexample state,
3. export to SMT-LIB 2 for an external solver (``smtlib`` module).

Anything the first two stages cannot settle is reported ``Unknown``
rather than guessed. Flows are handled by differential invariance
(``dI``) and differential cut (``dC``); both hand back their
verification conditions together with the triple they justify, and the
session layer registers that triple as proved only when every condition
discharges symbolically. ``validate_by_execution`` closes the loop
empirically by running programs from sampled pre-states and checking the
postcondition on reached states.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .compiled import compile_pred, disc_env
from .deriv import VectorField, elem_expr, lie_pred
from .errors import (
    DuplicateNameError, EvalError, MissingInvariantError,
    NotDifferentiableError, ShapeMismatchError, TestFailedError,
    UnknownLensError, UnknownVcError, UnsupportedNodeError,
    UnsupportedPredicateError,
)
from .expr import (
    Abs, Acos, And, Ang, Cmp, Cond, Const, ExistsIn, ForallIn, Implies, Max,
    Min, Not, Pred, Sgn, TrueP, Var, Wrap, conj, eval_pred, free_lenses,
)
from .hprog import (
    Assign, GuardedChoice, IfThenElse, NonDetAssign, ODE, Seq, Skip, Star,
    Test, exec_program,
)
from .modelfile import parse_model, parse_program
from .parsing import parse_expr, parse_pred
from .prover import Prover
from .sim import SimConfig, integrate_ode
from .state import ContDecl, DiscDecl, HybridState, MatVal, register_space

PROVED = "ProvedSymbolic"
REFUTED = "RefutedWithWitness"
UNKNOWN = "Unknown"

DIFFERENTIABLE = "Differentiable"


@dataclass(frozen=True)
class HoareTriple:
    """Partial-correctness claim; pre, prog and post share one space."""

    pre: Pred
    prog: object
    post: Pred

    def __str__(self):
        return f"{{{self.pre}}} {self.prog} {{{self.post}}}"


@dataclass(frozen=True)
class VC:
    """One closed proof obligation and where it came from."""

    formula: Pred
    origin: str

    def __str__(self):
        return f"[{self.origin}] {self.formula}"


@dataclass(frozen=True)
class DischargeResult:
    verdict: str
    detail: str = ""
    witness: object = None

    def __str__(self):
        if self.verdict == REFUTED:
            return f"{self.verdict}: {self.detail}"
        return f"{self.verdict}" + (f": {self.detail}" if self.detail else "")


# -- differentiability gate -----------------------------------------------

_PIECEWISE = (Abs, Acos, Ang, Cond, Max, Min, Sgn, Wrap)


def _first_piecewise(tree):
    found = []

    def fe(e):
        if not found:
            if isinstance(e, _PIECEWISE):
                found.append(e)
            else:
                e.map_children(fe, fp)
        return e

    def fp(p):
        if not found:
            p.map_children(fe, fp)
        return p

    fp(tree) if isinstance(tree, Pred) else fe(tree)
    return found[0] if found else None


def _comparisons(p):
    out = []

    def fp(q):
        if isinstance(q, Cmp):
            out.append(q)
        else:
            q.map_children(lambda e: e, fp)
        return q

    fp(p)
    return out


def classify(candidate, ode):
    """Differentiability gate for invariance candidates.

    Piecewise nodes (abs, sgn, min, max, cond, wrap, ang, acos) inside
    the candidate are rejected outright. For one-sided inequalities the
    derivative of every lens the comparison reads must also be
    piecewise-free: a kinked derivative can change sign without the
    boundary noticing. Equalities tolerate piecewise field entries, as
    their obligation (equal derivatives) is checked branch by branch.

    Returns the string ``Differentiable``; raises NotDifferentiableError
    naming the offending node otherwise.
    """
    for c in _comparisons(candidate):
        bad = _first_piecewise(c.l) or _first_piecewise(c.r)
        if bad is not None:
            raise NotDifferentiableError(
                f"{type(bad).__name__.lower()} has no derivative everywhere:"
                f" {bad}")
        if c.op in ("<", "<=", ">", ">="):
            for name in sorted(free_lenses(c)):
                rhs = ode.field.binding(name)
                if rhs is None:
                    continue
                bad = _first_piecewise(rhs)
                if bad is not None:
                    raise NotDifferentiableError(
                        f"{type(bad).__name__.lower()} in the derivative of"
                        f" {name!r} breaks one-sided invariance: {bad}")
    return DIFFERENTIABLE


# -- weakest preconditions and vc generation ------------------------------


def _assign_subst(tree, name, replacement):
    """Substitute an assignment's value, projecting element uses."""

    def walk(node, bound):
        if isinstance(node, Var) and node.name == name and name not in bound:
            if node.elem is None:
                return replacement
            return elem_expr(replacement, *node.elem)
        if isinstance(node, (ExistsIn, ForallIn)):
            if node.var == name:
                return node
            body = walk(node.body, bound | {node.var})
            return type(node)(node.var, node.set_name, body)
        return node.map_children(lambda e: walk(e, bound),
                                 lambda p: walk(p, bound))

    return walk(tree, frozenset())


def wp(prog, post, fresh=None):
    """Weakest precondition under partial correctness.

    Returns ``(pre, vcs)``: the precondition formula plus side
    obligations that do not fold into it (invariance of flows). A
    nondeterministic assignment needs a ``fresh`` callback producing the
    name of an unused lens for its arbitrary value; loops have no
    syntactic wp and must go through ``vc_star``.
    """
    if isinstance(prog, Skip):
        return post, []
    if isinstance(prog, Assign):
        return _assign_subst(post, prog.name, prog.expr), []
    if isinstance(prog, NonDetAssign):
        if fresh is None:
            raise UnsupportedNodeError(
                f"wp of {prog} needs a fresh-lens callback for the"
                " arbitrary value")
        return _assign_subst(post, prog.name, Var(fresh(prog.name))), []
    if isinstance(prog, Test):
        return Implies(prog.pred, post), []
    if isinstance(prog, Seq):
        mid, after = wp(prog.second, post, fresh)
        pre, before = wp(prog.first, mid, fresh)
        return pre, before + after
    if isinstance(prog, IfThenElse):
        pt, vt = wp(prog.then, post, fresh)
        pe, ve = wp(prog.els, post, fresh)
        return And(Implies(prog.test, pt),
                   Implies(Not(prog.test), pe)), vt + ve
    if isinstance(prog, GuardedChoice):
        parts = []
        vcs = []
        prior = []
        for guard, body in prog.branches:
            pb, vb = wp(body, post, fresh)
            parts.append(Implies(conj(prior + [guard]), pb))
            vcs.extend(vb)
            prior.append(Not(guard))
        # a run with no matching guard acts as skip
        parts.append(Implies(conj(prior), post))
        return conj(parts), vcs
    if isinstance(prog, ODE):
        vcs, _ = dI(post, prog)
        return post, vcs
    if isinstance(prog, Star):
        raise MissingInvariantError(
            f"loops have no syntactic wp; prove {prog} with vc_star and an"
            " invariant")
    raise UnsupportedNodeError(f"no wp rule for {prog}")


def vc_assign(triple):
    """Assignment axiom: pre implies post with the value substituted."""
    if not isinstance(triple.prog, Assign):
        raise ShapeMismatchError(
            f"vc_assign wants an assignment, got {triple.prog}")
    pre, _ = wp(triple.prog, triple.post)
    return [VC(Implies(triple.pre, pre), f"assign: {triple}")]


def vc_seq(triple, mid=None, invariant=None, fresh=None):
    """Sequencing: split at a midpoint predicate, or chain wp."""
    if not isinstance(triple.prog, Seq):
        raise ShapeMismatchError(f"vc_seq wants a sequence, got {triple.prog}")
    if mid is not None:
        first = HoareTriple(triple.pre, triple.prog.first, mid)
        second = HoareTriple(mid, triple.prog.second, triple.post)
        return (generate_vcs(first, invariant=invariant, fresh=fresh)
                + generate_vcs(second, invariant=invariant, fresh=fresh))
    pre, extra = wp(triple.prog, triple.post, fresh)
    return [VC(Implies(triple.pre, pre), f"seq: {triple}")] + extra


def vc_if(triple, fresh=None):
    """Conditional: one obligation per side of the guard."""
    if not isinstance(triple.prog, IfThenElse):
        raise ShapeMismatchError(
            f"vc_if wants a conditional, got {triple.prog}")
    prog = triple.prog
    pt, vt = wp(prog.then, triple.post, fresh)
    pe, ve = wp(prog.els, triple.post, fresh)
    return ([VC(Implies(And(triple.pre, prog.test), pt),
                f"if, guard true: {triple}"),
             VC(Implies(And(triple.pre, Not(prog.test)), pe),
                f"if, guard false: {triple}")] + vt + ve)


def vc_star(triple, invariant=None, fresh=None):
    """Loop rule: initiation, consecution on the body, postcondition."""
    if not isinstance(triple.prog, Star):
        raise ShapeMismatchError(f"vc_star wants a loop, got {triple.prog}")
    if invariant is None:
        raise MissingInvariantError(
            f"the loop {triple.prog} needs a user-supplied invariant")
    body = triple.prog.body
    vcs = [VC(Implies(triple.pre, invariant), f"star initiation: {triple}")]
    vcs += generate_vcs(HoareTriple(invariant, body, invariant),
                        invariant=invariant, fresh=fresh)
    vcs.append(VC(Implies(invariant, triple.post),
                  f"star postcondition: {triple}"))
    return vcs


def generate_vcs(triple, invariant=None, mid=None, fresh=None):
    """Verification conditions for a triple, by the shape of its program.

    ``invariant`` feeds loops (and is passed down to nested ones),
    ``mid`` splits a top-level sequence. Everything else goes through
    the weakest precondition.
    """
    prog = triple.prog
    if isinstance(prog, Assign):
        return vc_assign(triple)
    if isinstance(prog, Seq):
        return vc_seq(triple, mid=mid, invariant=invariant, fresh=fresh)
    if isinstance(prog, IfThenElse):
        return vc_if(triple, fresh=fresh)
    if isinstance(prog, Star):
        return vc_star(triple, invariant=invariant, fresh=fresh)
    pre, extra = wp(prog, triple.post, fresh)
    return [VC(Implies(triple.pre, pre), f"wp: {triple}")] + extra


# -- differential rules ---------------------------------------------------


def dI(candidate, ode):
    """Differential invariance: the candidate stays true along the flow.

    Returns ``(vcs, triple)`` where the triple is the conclusion the
    conditions justify, ``{candidate} ode {candidate}``. Conditions: the
    evolution domain implies the differentiated comparison, plus one per
    side condition collected while differentiating (nonzero norms and
    denominators, positive radicands).
    """
    classify(candidate, ode)
    lie, sides = lie_pred(candidate, ode.field)
    vcs = [VC(Implies(ode.domain, lie), f"dI invariance: {candidate}")]
    for s in sides:
        vcs.append(VC(Implies(ode.domain, s),
                      f"dI side condition for {candidate}: {s}"))
    return vcs, HoareTriple(candidate, ode, candidate)


def dC(lemma, target, ode):
    """Differential cut: prove the lemma invariant, then assume it.

    Returns ``(vcs, triple)``. A true lemma degenerates to plain dI on
    the target. Otherwise the lemma's invariance is checked over the
    original domain, the target's over the domain strengthened with the
    lemma, and the justified conclusion is
    ``{lemma and target} ode {target}``.
    """
    if isinstance(lemma, TrueP):
        return dI(target, ode)
    lemma_vcs, _ = dI(lemma, ode)
    cut = ODE(ode.field, And(ode.domain, lemma))
    target_vcs, _ = dI(target, cut)
    triple = HoareTriple(And(lemma, target), ode, target)
    return lemma_vcs + target_vcs, triple


# -- discharge ------------------------------------------------------------

_COMPILE_FAIL = (UnsupportedNodeError, UnsupportedPredicateError,
                 ShapeMismatchError, UnknownLensError)


def _try_compile(pred, space):
    try:
        return compile_pred(pred, space, 0.0)
    except _COMPILE_FAIL:
        return None


def discharge(vc, space, n=400, seed=0, box=None):
    """Settle one verification condition, best effort.

    Stage one asks the symbolic validity engine; stage two samples the
    box uniformly (per-lens ranges, default [-10, 10]) hunting for a
    counterexample, which is re-checked with the exact evaluator before
    being reported as a witness. Anything else is Unknown, with the
    normal-form residue and the sampling tally in the detail. Evaluation
    errors during sampling are tallied in the detail, not swallowed.
    """
    prover = Prover(space)
    if prover.valid(vc.formula):
        return DischargeResult(PROVED)

    rng = random.Random(f"{seed}|{vc.origin}|{vc.formula}")
    fast = _try_compile(vc.formula, space)
    satisfied = 0
    errors = 0
    last_error = ""
    for _ in range(n):
        st = space.sample(rng, box)
        try:
            if fast is not None:
                holds = fast(st.cont, disc_env(st))
            else:
                holds = eval_pred(vc.formula, st, tol=0.0)
            if not holds and fast is not None:
                holds = eval_pred(vc.formula, st, tol=0.0)
        except EvalError as e:
            errors += 1
            last_error = str(e)
            continue
        if not holds:
            return DischargeResult(
                REFUTED,
                detail=f"falsified after {satisfied} satisfying samples",
                witness=st)
        satisfied += 1
    residue = prover.residue(vc.formula)
    detail = (f"residue {residue}; {satisfied}/{n} samples satisfied")
    if errors:
        detail += f"; {errors} evaluation errors (last: {last_error})"
    return DischargeResult(UNKNOWN, detail=detail)


# -- execution validation -------------------------------------------------


@dataclass
class ExecutionReport:
    """Tally of an empirical run of a triple."""

    checked: int = 0
    violations: int = 0
    skipped: int = 0
    attempts: int = 0
    errors: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return self.violations == 0 and self.checked > 0

    def __str__(self):
        word = "ok" if self.ok else "FAILED"
        return (f"{word}: {self.checked} runs checked, "
                f"{self.violations} violations, {self.skipped} blocked, "
                f"{self.errors} evaluation errors "
                f"({self.attempts} states drawn)")


def _tail_is_ode(prog):
    if isinstance(prog, Seq):
        return _tail_is_ode(prog.second)
    return isinstance(prog, ODE)


def validate_by_execution(triple, space, n=1000, seed=0, box=None,
                          sampler=None, chooser=None, dt=1e-3, tol=1e-6,
                          ode_time=1.0):
    """Run the program from pre-satisfying states and check the post.

    Loops validate one pass of their body. When the program ends in a
    flow, the postcondition is checked at every accepted integration
    step of that final flow as well as at the final state. Runs blocked
    by a failed test or an unmatched guard are vacuous and count as
    skipped. Pre-states come from uniform box sampling unless a
    constructive ``sampler(rng)`` is supplied (useful when the
    precondition has measure zero). Comparison tolerance ``tol`` applies
    to the postcondition check.
    """
    prog = triple.prog
    if isinstance(prog, Star):
        prog = prog.body
    rng = random.Random(f"{seed}|exec|{triple.pre}|{prog}|{triple.post}")
    pre_fast = _try_compile(triple.pre, space)
    post_fast = _try_compile(triple.post, space)
    tail_ode = _tail_is_ode(prog)

    records = []

    def run_ode(node, st):
        records.clear()
        out, _reason = integrate_ode(
            node, st, SimConfig(dt=dt, epsilon=ode_time),
            record=lambda _t, s: records.append(s))
        return out

    report = ExecutionReport()
    produced = 0
    cap = max(50 * n, 1000)
    while produced < n and report.attempts < cap:
        report.attempts += 1
        st = sampler(rng) if sampler is not None else space.sample(rng, box)
        try:
            if pre_fast is not None:
                ok_pre = pre_fast(st.cont, disc_env(st))
            else:
                ok_pre = eval_pred(triple.pre, st, tol=0.0)
        except EvalError:
            report.errors += 1
            continue
        if not ok_pre:
            continue
        produced += 1
        records.clear()
        try:
            out = exec_program(prog, st, chooser=chooser, ode=run_ode)
        except TestFailedError:
            report.skipped += 1
            continue
        except EvalError:
            report.errors += 1
            continue
        checkpoints = (records + [out]) if tail_ode else [out]
        bad = None
        for cp in checkpoints:
            try:
                if post_fast is not None:
                    ok = post_fast(cp.cont, disc_env(cp))
                    if not ok:
                        ok = eval_pred(triple.post, cp, tol=tol)
                else:
                    ok = eval_pred(triple.post, cp, tol=tol)
            except EvalError:
                report.errors += 1
                continue
            if not ok:
                bad = cp
                break
        report.checked += 1
        if bad is not None:
            report.violations += 1
            if len(report.failures) < 5:
                report.failures.append((st, bad))
    return report


# -- proof sessions -------------------------------------------------------


def _decl_of_lens(lens):
    if lens.kind == "cont":
        return ContDecl(lens.name, lens.rows, lens.cols)
    return DiscDecl(lens.name, lens.sort, lens.modes)


def _witness_sort(lens):
    """Discrete sort able to hold one value of the given lens."""
    if lens.kind == "disc":
        return lens.sort, lens.modes
    if (lens.rows, lens.cols) == (1, 1):
        return "real", ()
    if (lens.rows, lens.cols) == (1, 2):
        return "vec2", ()
    raise UnsupportedNodeError(
        f"no discrete sort holds a {lens.rows}x{lens.cols} value")


def _encode_state(st):
    disc = {}
    for lens in st.space.disc_lenses:
        v = st.disc[lens.name]
        if isinstance(v, frozenset):
            disc[lens.name] = sorted(list(m.data) for m in v)
        elif isinstance(v, MatVal):
            disc[lens.name] = list(v.data)
        else:
            disc[lens.name] = v
    return {"cont": list(st.cont), "disc": disc}


def _decode_state(space, data):
    # lenses added after the state was recorded fall back to neutral values
    disc = dict(space.zero_state().disc)
    for lens in space.disc_lenses:
        if lens.name not in data["disc"]:
            continue
        v = data["disc"][lens.name]
        if lens.sort == "mode":
            disc[lens.name] = v
        elif lens.sort == "set":
            disc[lens.name] = frozenset(MatVal.vec2(*m) for m in v)
        elif lens.sort == "vec2":
            disc[lens.name] = MatVal.vec2(*v)
        else:
            disc[lens.name] = MatVal.scalar(v[0])
    vec = tuple(data["cont"]) + (0.0,) * (space.dim - len(data["cont"]))
    return HybridState(space, vec, disc)


class ProofSession:
    """Registry of proved, open, and refuted triples over one model.

    The session owns a working state space that grows as ghost and
    witness lenses are added; the continuous layout never changes, so
    existing states and compiled predicates stay valid. A conclusion
    registers as proved only when every one of its verification
    conditions discharged symbolically and every parent it relies on is
    itself proved; a refuted condition marks the triple refuted and it
    never enters the proved registry.
    """

    def __init__(self, model, seed=0, samples=400, box=None):
        self.model = model
        self.space = model.space
        self.seed = seed
        self.samples = samples
        self.box = dict(box or {})
        self.triples = {}
        self.vcs = {}
        self.ghosts = []
        self._vc_counter = 0
        self._fresh_counter = 0

    # -- space growth ----------------------------------------------------

    def _extend(self, decl):
        decls = [_decl_of_lens(l) for l in self.space.cont_lenses]
        decls += [_decl_of_lens(l) for l in self.space.disc_lenses]
        decls.append(decl)
        self.space = register_space(decls)
        self.ghosts.append(decl)

    def _fresh_name(self, base):
        while True:
            self._fresh_counter += 1
            name = f"{base}_any{self._fresh_counter}"
            if not self.space.has_lens(name):
                return name

    def _fresh(self, assigned):
        """Witness lens for a nondeterministic assignment."""
        sort, modes = _witness_sort(self.space.lens(assigned))
        name = self._fresh_name(assigned)
        self._extend(DiscDecl(name, sort, modes))
        return name

    def add_ghost(self, hint, expr):
        """Fresh snapshot lens bound to an expression by an equation.

        Returns ``(name, binding)`` where the binding is the predicate
        ``name = expr``, ready to use as a cut lemma or a precondition
        conjunct. The lens is discrete, so it is constant along flows.
        """
        expr = self._expr(expr)
        sh = expr.shape(self.space, frozenset())
        if sh == ("mat", 1, 1):
            sort, modes = "real", ()
        elif sh == ("mat", 1, 2):
            sort, modes = "vec2", ()
        elif sh == ("mode",):
            if not isinstance(expr, Var):
                raise ShapeMismatchError(
                    "mode ghosts need a plain lens to copy the symbols from")
            sort, modes = "mode", self.space.lens(expr.name).modes
        else:
            raise ShapeMismatchError(f"no ghost sort for shape {sh}")
        name = hint
        k = 1
        while self.space.has_lens(name):
            k += 1
            name = f"{hint}{k}"
        self._extend(DiscDecl(name, sort, modes))
        return name, Cmp("=", Var(name), expr)

    # -- parsing and refreshing ------------------------------------------

    def _pred(self, x):
        if isinstance(x, str):
            return parse_pred(x, self.space, self.model.consts,
                              self.model.defs, self.model.preds)
        return x

    def _expr(self, x):
        if isinstance(x, str):
            return parse_expr(x, self.space, self.model.consts,
                              self.model.defs, self.model.preds)
        return x

    def _prog(self, x):
        if isinstance(x, str):
            prog = self.model.programs.get(x)
            if prog is None:
                prog = parse_program(x, self.model, space=self.space)
            return self._refresh(prog)
        return self._refresh(x)

    def _refresh(self, prog):
        """Rebind flow fields to the current (possibly grown) space."""
        if isinstance(prog, ODE):
            fld = VectorField.make(self.space, dict(prog.field.entries))
            return ODE(fld, prog.domain)
        if isinstance(prog, Seq):
            return Seq(self._refresh(prog.first), self._refresh(prog.second))
        if isinstance(prog, IfThenElse):
            return IfThenElse(prog.test, self._refresh(prog.then),
                              self._refresh(prog.els))
        if isinstance(prog, GuardedChoice):
            return GuardedChoice(tuple((g, self._refresh(b))
                                       for g, b in prog.branches))
        if isinstance(prog, Star):
            return Star(self._refresh(prog.body))
        return prog

    # -- registration ----------------------------------------------------

    def _discharge_all(self, vcs, box):
        merged = dict(self.box)
        merged.update(box or {})
        ids = []
        for vc in vcs:
            self._vc_counter += 1
            vcid = f"vc-{self._vc_counter:04d}"
            result = discharge(vc, self.space, n=self.samples,
                               seed=self.seed, box=merged or None)
            self.vcs[vcid] = {
                "formula": vc.formula,
                "origin": vc.origin,
                "verdict": result.verdict,
                "detail": result.detail,
                "witness": result.witness,
            }
            ids.append(vcid)
        return ids

    def _status_of(self, ids, parents):
        verdicts = [self.vcs[i]["verdict"] for i in ids]
        if any(v == REFUTED for v in verdicts):
            return "refuted"
        if all(v == PROVED for v in verdicts) and all(
                self.triples[p]["status"] == "proved" for p in parents):
            return "proved"
        return "open"

    def _register(self, name, rule, triple, vc_ids, parents):
        if name in self.triples:
            raise DuplicateNameError(
                f"a triple named {name!r} is already registered")
        for p in parents:
            if p not in self.triples:
                raise UnknownVcError(f"no registered triple named {p!r}")
        status = self._status_of(vc_ids, parents)
        self.triples[name] = {
            "pre": triple.pre,
            "prog": triple.prog,
            "post": triple.post,
            "rule": rule,
            "status": status,
            "vcs": vc_ids,
            "parents": list(parents),
        }
        return status

    def triple(self, name):
        try:
            rec = self.triples[name]
        except KeyError:
            raise UnknownVcError(f"no registered triple named {name!r}") \
                from None
        return HoareTriple(rec["pre"], rec["prog"], rec["post"])

    def proved(self, name):
        return self.triples[name]["status"] == "proved"

    # -- proof steps -----------------------------------------------------

    def dI(self, name, candidate, ode, box=None):
        """Differential invariance step, registered under ``name``."""
        candidate = self._pred(candidate)
        prog = self._prog(ode)
        if not isinstance(prog, ODE):
            raise ShapeMismatchError(f"dI works on a flow, got {prog}")
        vcs, triple = dI(candidate, prog)
        ids = self._discharge_all(vcs, box)
        return self._register(name, "dI", triple, ids, [])

    def dC(self, name, lemma, target, ode, box=None):
        """Differential cut step, registered under ``name``."""
        lemma = self._pred(lemma)
        target = self._pred(target)
        prog = self._prog(ode)
        if not isinstance(prog, ODE):
            raise ShapeMismatchError(f"dC works on a flow, got {prog}")
        vcs, triple = dC(lemma, target, prog)
        ids = self._discharge_all(vcs, box)
        return self._register(name, "dC", triple, ids, [])

    def prove(self, name, pre, prog, post, invariant=None, mid=None,
              box=None):
        """Generate and discharge the conditions of one triple."""
        triple = HoareTriple(self._pred(pre), self._prog(prog),
                             self._pred(post))
        invariant = self._pred(invariant) if invariant is not None else None
        mid = self._pred(mid) if mid is not None else None
        vcs = generate_vcs(triple, invariant=invariant, mid=mid,
                           fresh=self._fresh)
        ids = self._discharge_all(vcs, box)
        return self._register(name, "hoare", triple, ids, [])

    def compose(self, name, first, second, box=None):
        """Chain two registered triples into one over their sequence.

        When the first postcondition is not syntactically the second
        precondition, a linking implication is emitted and discharged.
        """
        a = self.triple(first)
        b = self.triple(second)
        vcs = []
        if str(a.post) != str(b.pre):
            vcs.append(VC(Implies(a.post, b.pre),
                          f"compose link: {first} into {second}"))
        triple = HoareTriple(a.pre, Seq(a.prog, b.prog), b.post)
        ids = self._discharge_all(vcs, box)
        return self._register(name, "compose", triple, ids, [first, second])

    def conseq(self, name, parent, pre=None, post=None, box=None):
        """Weaken a registered triple: stronger pre, weaker post."""
        t = self.triple(parent)
        new_pre = self._pred(pre) if pre is not None else t.pre
        new_post = self._pred(post) if post is not None else t.post
        vcs = []
        if pre is not None:
            vcs.append(VC(Implies(new_pre, t.pre),
                          f"conseq pre: {parent}"))
        if post is not None:
            vcs.append(VC(Implies(t.post, new_post),
                          f"conseq post: {parent}"))
        triple = HoareTriple(new_pre, t.prog, new_post)
        ids = self._discharge_all(vcs, box)
        return self._register(name, "conseq", triple, ids, [parent])

    def validate(self, name, n=1000, box=None, sampler=None, chooser=None,
                 dt=1e-3, tol=1e-6, ode_time=1.0):
        """Execution check of a registered triple; returns the report."""
        merged = dict(self.box)
        merged.update(box or {})
        return validate_by_execution(
            self.triple(name), self.space, n=n, seed=self.seed,
            box=merged or None, sampler=sampler, chooser=chooser, dt=dt,
            tol=tol, ode_time=ode_time)

    # -- reporting and persistence ---------------------------------------

    def export_smt(self, vcid):
        """SMT-LIB text for one condition; stable across save and load."""
        from .smtlib import export_smtlib
        try:
            rec = self.vcs[vcid]
        except KeyError:
            raise UnknownVcError(f"no condition named {vcid!r}") from None
        formula = parse_pred(str(rec["formula"]), self.space,
                             self.model.consts, self.model.defs,
                             self.model.preds)
        return export_smtlib(VC(formula, rec["origin"]), self.space)

    def report(self):
        """Human-readable session summary."""
        lines = []
        counts = {"proved": 0, "open": 0, "refuted": 0}
        for name, rec in self.triples.items():
            counts[rec["status"]] += 1
            lines.append(f"triple {name} [{rec['rule']}] "
                         f"-> {rec['status']}")
            lines.append(f"  pre:  {rec['pre']}")
            lines.append(f"  prog: {rec['prog']}")
            lines.append(f"  post: {rec['post']}")
            if rec["parents"]:
                lines.append("  from: " + ", ".join(rec["parents"]))
            for vcid in rec["vcs"]:
                v = self.vcs[vcid]
                lines.append(f"  {vcid} {v['verdict']}  [{v['origin']}]")
                if v["detail"]:
                    lines.append(f"    {v['detail']}")
                if v["witness"] is not None:
                    # witnesses recorded before the space grew pick up
                    # neutral values for the newer lenses
                    w = _decode_state(self.space, _encode_state(v["witness"]))
                    lines.append("    witness: "
                                 + w.describe().replace("\n", ", "))
        total = sum(counts.values())
        lines.append(f"{total} triples: {counts['proved']} proved, "
                     f"{counts['open']} open, {counts['refuted']} refuted")
        return "\n".join(lines)

    def to_json(self):
        """Self-contained snapshot; verdicts are kept, not re-run."""
        consts = {}
        for cname, const in self.model.consts.items():
            consts[cname] = {
                "rows": const.value.rows,
                "cols": const.value.cols,
                "exact": [[q.numerator, q.denominator]
                          for q in const.exact],
            }
        return {
            "model_source": self.model.source,
            "consts": consts,
            "seed": self.seed,
            "samples": self.samples,
            "box": {k: list(v) for k, v in self.box.items()},
            "ghosts": [{"name": g.name, "sort": g.sort,
                        "modes": list(g.modes)} for g in self.ghosts],
            "fresh_counter": self._fresh_counter,
            "vc_counter": self._vc_counter,
            "triples": {
                name: {
                    "pre": str(rec["pre"]),
                    "prog": str(rec["prog"]),
                    "post": str(rec["post"]),
                    "rule": rec["rule"],
                    "status": rec["status"],
                    "vcs": list(rec["vcs"]),
                    "parents": list(rec["parents"]),
                } for name, rec in self.triples.items()
            },
            "vcs": {
                vcid: {
                    "formula": str(rec["formula"]),
                    "origin": rec["origin"],
                    "verdict": rec["verdict"],
                    "detail": rec["detail"],
                    "witness": (None if rec["witness"] is None
                                else _encode_state(rec["witness"])),
                } for vcid, rec in self.vcs.items()
            },
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, data):
        overrides = {}
        for cname, spec in data["consts"].items():
            exact = tuple(Fraction(p, q) for p, q in spec["exact"])
            val = MatVal(spec["rows"], spec["cols"],
                         tuple(float(q) for q in exact))
            overrides[cname] = Const(val, exact)
        model = parse_model(data["model_source"], const_overrides=overrides)
        s = cls(model, seed=data["seed"], samples=data["samples"],
                box={k: tuple(v) for k, v in data["box"].items()})
        for g in data["ghosts"]:
            s._extend(DiscDecl(g["name"], g["sort"], tuple(g["modes"])))
        s._fresh_counter = data["fresh_counter"]
        s._vc_counter = data["vc_counter"]
        for vcid, rec in data["vcs"].items():
            s.vcs[vcid] = {
                "formula": s._pred(rec["formula"]),
                "origin": rec["origin"],
                "verdict": rec["verdict"],
                "detail": rec["detail"],
                "witness": (None if rec["witness"] is None
                            else _decode_state(s.space, rec["witness"])),
            }
        for name, rec in data["triples"].items():
            s.triples[name] = {
                "pre": s._pred(rec["pre"]),
                "prog": s._prog(rec["prog"]),
                "post": s._pred(rec["post"]),
                "rule": rec["rule"],
                "status": rec["status"],
                "vcs": list(rec["vcs"]),
                "parents": list(rec["parents"]),
            }
        return s

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))
