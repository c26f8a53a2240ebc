"""Hybrid program syntax and the discrete part of its semantics.

Programs combine assignments, nondeterministic assignments, tests,
sequencing, deterministic conditionals, first-match guarded choice,
differential equations with an evolution domain, and iteration. The
executor here covers every discrete construct; differential equations are
delegated to a caller-supplied integrator, and loops to a caller-supplied
schedule (the simulator runs the top-level loop against a time horizon,
the proof rules treat it symbolically).

Nondeterminism is externalized: a *chooser* callback supplies the value
of every ``x := *``. The default chooser is deterministic and neutral:
zero for numeric lenses, the current value for modes, the empty set for
set lenses. A failing test raises TestFailedError rather than returning
a state, mirroring blocked execution.

``mods`` over-approximates the lenses a program may write, so its
complement ``nmods`` is a guarantee: executing the program never changes
those lenses. A differential equation counts every bound lens as
written, even when its right-hand side is literally zero.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import TestFailedError, UnsupportedNodeError
from .expr import Pred, eval_expr, eval_pred
from .state import MatVal, lens_get, lens_put


class Prog:
    pass


@dataclass(frozen=True)
class Skip(Prog):
    def __str__(self):
        return "skip"


@dataclass(frozen=True)
class Assign(Prog):
    name: str
    expr: object

    def __str__(self):
        return f"{self.name} := {self.expr}"


@dataclass(frozen=True)
class NonDetAssign(Prog):
    name: str

    def __str__(self):
        return f"{self.name} := *"


@dataclass(frozen=True)
class Test(Prog):
    pred: Pred

    def __str__(self):
        return f"? {self.pred}"


@dataclass(frozen=True)
class Seq(Prog):
    first: Prog
    second: Prog

    def __str__(self):
        return f"{self.first}; {self.second}"


@dataclass(frozen=True)
class IfThenElse(Prog):
    test: Pred
    then: Prog
    els: Prog

    def __str__(self):
        if isinstance(self.els, Skip):
            return f"if {self.test} then {self.then} fi"
        return f"if {self.test} then {self.then} else {self.els} fi"


@dataclass(frozen=True)
class GuardedChoice(Prog):
    """Guard/body alternatives, tried in order; first true guard runs."""

    branches: tuple  # tuple of (Pred, Prog)

    def __str__(self):
        inner = " ".join(f"{g} -> {{ {b} }}" for g, b in self.branches)
        return f"choice {{ {inner} }}"


@dataclass(frozen=True)
class ODE(Prog):
    """Evolve the bound lenses along the field while the domain holds."""

    field: object  # VectorField
    domain: Pred

    def __str__(self):
        inner = ", ".join(f"{n}' = {e}" for n, e in self.field.entries)
        return f"ode {{ {inner} | {self.domain} }}"


@dataclass(frozen=True)
class Star(Prog):
    body: Prog

    def __str__(self):
        return f"star {{ {self.body} }}"


def seq(progs):
    """Right-nested sequence; the empty sequence is skip."""
    progs = [p for p in progs if not isinstance(p, Skip)] or [Skip()]
    out = progs[-1]
    for p in reversed(progs[:-1]):
        out = Seq(p, out)
    return out


def default_chooser(name, lens, st):
    if lens.kind == "cont":
        return MatVal(lens.rows, lens.cols, (0.0,) * lens.size)
    if lens.sort == "real":
        return MatVal.scalar(0.0)
    if lens.sort == "vec2":
        return MatVal.vec2(0.0, 0.0)
    if lens.sort == "mode":
        return lens_get(st, lens)
    return frozenset()


def exec_program(prog, st, chooser=None, ode=None):
    """Run every discrete construct; ODEs go to the ``ode`` callback.

    Iteration is not schedulable here and raises UnsupportedNodeError;
    drive loops from the caller (see the simulator's run loop).
    """
    chooser = chooser or default_chooser
    if isinstance(prog, Skip):
        return st
    if isinstance(prog, Assign):
        lens = st.space.lens(prog.name)
        return lens_put(st, lens, eval_expr(prog.expr, st))
    if isinstance(prog, NonDetAssign):
        lens = st.space.lens(prog.name)
        return lens_put(st, lens, chooser(prog.name, lens, st))
    if isinstance(prog, Test):
        if not eval_pred(prog.pred, st):
            raise TestFailedError(f"test failed: {prog.pred}")
        return st
    if isinstance(prog, Seq):
        mid = exec_program(prog.first, st, chooser, ode)
        return exec_program(prog.second, mid, chooser, ode)
    if isinstance(prog, IfThenElse):
        branch = prog.then if eval_pred(prog.test, st) else prog.els
        return exec_program(branch, st, chooser, ode)
    if isinstance(prog, GuardedChoice):
        for guard, body in prog.branches:
            if eval_pred(guard, st):
                return exec_program(body, st, chooser, ode)
        return st
    if isinstance(prog, ODE):
        if ode is None:
            raise UnsupportedNodeError(
                "differential equations need an integrator")
        return ode(prog, st)
    if isinstance(prog, Star):
        raise UnsupportedNodeError(
            "iteration needs a schedule; run the loop from the caller")
    raise UnsupportedNodeError(f"cannot execute {type(prog).__name__}")


def step_discrete(prog, st, chooser=None):
    """One controller step: big-step run of a flow-free program."""
    return exec_program(prog, st, chooser=chooser)


def mods(prog):
    """Names a program may write (a syntactic over-approximation)."""
    if isinstance(prog, (Skip, Test)):
        return set()
    if isinstance(prog, (Assign, NonDetAssign)):
        return {prog.name}
    if isinstance(prog, Seq):
        return mods(prog.first) | mods(prog.second)
    if isinstance(prog, IfThenElse):
        return mods(prog.then) | mods(prog.els)
    if isinstance(prog, GuardedChoice):
        out = set()
        for _, body in prog.branches:
            out |= mods(body)
        return out
    if isinstance(prog, ODE):
        return {name for name, _ in prog.field.entries}
    if isinstance(prog, Star):
        return mods(prog.body)
    raise UnsupportedNodeError(f"cannot analyze {type(prog).__name__}")


def nmods(prog, space):
    """Lenses the program provably leaves unchanged."""
    return {l.name for l in space.lenses} - mods(prog)


def check_nmods(prog, names, states, chooser=None, ode=None):
    """Execute from many states; report lenses that changed anyway.

    Returns a list of (lens name, before, after) violations; an empty
    list means every listed lens survived every run untouched. Runs that
    block on a failed test or unmatched choice are skipped: a blocked
    run writes nothing.
    """
    violations = []
    for st in states:
        try:
            out = exec_program(prog, st, chooser, ode)
        except TestFailedError:
            continue
        for name in names:
            lens = st.space.lens(name)
            before = lens_get(st, lens)
            after = lens_get(out, lens)
            if before != after:
                violations.append((name, before, after))
    return violations
