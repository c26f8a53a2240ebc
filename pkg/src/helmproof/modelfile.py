"""Model and scenario files.

A *model file* declares a state space and names the pieces built over
it. ``#`` starts a line comment. The five statement forms:

    space {
      cont t : 1x1
      cont p : 1x2
      disc rs : real
      disc m : mode { OCM, MOM, HCM, CAM }
      disc ob : set
    }
    const mass = 5000
    def ao = wp - p
    pred near = norm(ao) <= D
    program ap = fl := 0; ft := 0

Constants evaluate at parse time with exact rational arithmetic and may
reference earlier constants. Named expressions and predicates inline at
use sites, as do program references (a bare program name as a
statement). Program syntax:

    skip                      ? pred                 x := expr
    x := *                    prog; prog             { prog }
    if pred then prog fi      if pred then prog else prog fi
    choice { pred -> { prog }  pred -> { prog } }
    ode { x' = expr, y' = expr | pred }
    star { prog }

A *scenario file* pairs numbers and initial values with a model:

    horizon = 35        dt = 0.01      epsilon = 0.1
    control = lre       dynamics = dyn
    init p = [-10, -10]
    init ob = { [-12, -18] }
    init m = MOM

``init`` values are closed expressions over the model's constants, set
literals in braces, or mode symbols.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .deriv import VectorField
from .errors import (
    HelmproofError, ParseError, ShapeMismatchError, UnknownLensError,
)
from .expr import Const
from .hprog import (
    Assign, GuardedChoice, IfThenElse, NonDetAssign, ODE, Skip, Star, Test,
    seq,
)
from .norm import Normalizer
from .parsing import (
    RESERVED, ExprParser, ParseContext, TokenStream, tokenize,
)
from .state import MatVal, cont, disc, lens_put, register_space

DISC_SORT_WORDS = ("real", "vec2", "mode", "set")


@dataclass
class Model:
    space: object
    consts: dict
    defs: dict
    preds: dict
    programs: dict
    source: str = ""

    def context(self):
        return ParseContext(self.space, self.consts, self.defs, self.preds)


@dataclass
class Scenario:
    horizon: float
    dt: float = 0.01
    epsilon: float = 0.1
    control: str = ""
    dynamics: str = ""
    init: dict = field(default_factory=dict)
    consts: dict = field(default_factory=dict)


class _ModelParser:
    def __init__(self, text, const_overrides=None):
        self.ts = TokenStream(tokenize(text))
        self.text = text
        self.overrides = dict(const_overrides or {})
        self.space = None
        self.consts = {}
        self.defs = {}
        self.preds = {}
        self.programs = {}
        self.used = set()

    # -- helpers -----------------------------------------------------------

    def ctx(self):
        if self.space is None:
            self.ts.fail("declare the space block first")
        return ParseContext(self.space, self.consts, self.defs, self.preds)

    def expr_parser(self):
        return ExprParser(self.ts, self.ctx())

    def name_token(self, role):
        tok = self.ts.peek()
        if tok.kind != "ident":
            self.ts.fail(f"expected a {role} name")
        if tok.text in RESERVED:
            raise ParseError(f"{tok.text!r} is reserved", tok.line, tok.col)
        return self.ts.next()

    def claim(self, tok):
        if tok.text in self.used:
            raise ParseError(f"name {tok.text!r} already in use",
                             tok.line, tok.col)
        self.used.add(tok.text)
        return tok.text

    # -- top level ---------------------------------------------------------

    def parse(self):
        while not self.ts.at_kind("eof"):
            tok = self.ts.peek()
            if tok.text == "space":
                self.space_block()
            elif tok.text == "const":
                self.const_stmt()
            elif tok.text == "def":
                self.def_stmt()
            elif tok.text == "pred":
                self.pred_stmt()
            elif tok.text == "program":
                self.program_stmt()
            else:
                self.ts.fail(f"unexpected {tok.text!r} at top level")
        if self.space is None:
            raise ParseError("model has no space block", 1, 1)
        for name in self.overrides:
            if name not in self.consts:
                raise ParseError(
                    f"override for unknown constant {name!r}", 1, 1)
        return Model(self.space, self.consts, self.defs, self.preds,
                     self.programs, self.text)

    def space_block(self):
        if self.space is not None:
            self.ts.fail("space declared twice")
        self.ts.next()
        self.ts.expect("{")
        decls = []
        while not self.ts.at("}"):
            word = self.ts.peek()
            if word.text == "cont":
                self.ts.next()
                name = self.claim(self.name_token("lens"))
                self.ts.expect(":")
                rows, cols = self.dims()
                decls.append(cont(name, rows, cols))
            elif word.text == "disc":
                self.ts.next()
                name = self.claim(self.name_token("lens"))
                self.ts.expect(":")
                decls.append(self.disc_decl(name))
            else:
                self.ts.fail("expected 'cont' or 'disc'")
        self.ts.expect("}")
        try:
            self.space = register_space(decls)
        except HelmproofError as exc:
            raise ParseError(str(exc), 1, 1) from exc
        for lens in self.space.disc_lenses:
            for m in lens.modes:
                if m in self.used:
                    raise ParseError(f"mode symbol {m!r} collides", 1, 1)
                self.used.add(m)

    def dims(self):
        tok = self.ts.peek()
        if tok.kind != "num" or "." in tok.text:
            self.ts.fail("expected dimensions like 1x2")
        rows = int(self.ts.next().text)
        xtok = self.ts.peek()
        if xtok.kind != "ident" or not xtok.text.startswith("x") \
                or not xtok.text[1:].isdigit():
            self.ts.fail("expected dimensions like 1x2")
        self.ts.next()
        return rows, int(xtok.text[1:])

    def disc_decl(self, name):
        word = self.ts.peek()
        if word.text not in DISC_SORT_WORDS:
            self.ts.fail("expected one of real, vec2, mode, set")
        self.ts.next()
        if word.text != "mode":
            return disc(name, word.text)
        self.ts.expect("{")
        modes = [self.name_token("mode").text]
        while self.ts.accept(","):
            modes.append(self.name_token("mode").text)
        self.ts.expect("}")
        return disc(name, "mode", tuple(modes))

    def const_stmt(self):
        self.ts.next()
        tok = self.name_token("constant")
        name = self.claim(tok)
        self.ts.expect("=")
        e = self.expr_parser().expr()
        if name in self.overrides:
            self.consts[name] = _as_const(self.overrides[name])
            return
        self.consts[name] = _exact_const(e, self.space, tok)

    def def_stmt(self):
        self.ts.next()
        name = self.claim(self.name_token("definition"))
        self.ts.expect("=")
        e = self.expr_parser().expr()
        self.defs[name] = e

    def pred_stmt(self):
        self.ts.next()
        name = self.claim(self.name_token("predicate"))
        self.ts.expect("=")
        self.preds[name] = self.expr_parser().pred()

    def program_stmt(self):
        self.ts.next()
        name = self.claim(self.name_token("program"))
        self.ts.expect("=")
        self.programs[name] = self.prog_seq()

    # -- programs ----------------------------------------------------------

    def prog_seq(self):
        parts = [self.stmt()]
        while self.ts.accept(";"):
            parts.append(self.stmt())
        return seq(parts)

    def stmt(self):
        tok = self.ts.peek()
        if tok.text == "skip":
            self.ts.next()
            return Skip()
        if tok.text == "?":
            self.ts.next()
            return Test(self.expr_parser().pred())
        if tok.text == "if":
            return self.if_stmt()
        if tok.text == "choice":
            return self.choice_stmt()
        if tok.text == "ode":
            return self.ode_stmt()
        if tok.text == "star":
            self.ts.next()
            self.ts.expect("{")
            body = self.prog_seq()
            self.ts.expect("}")
            return Star(body)
        if tok.text == "{":
            self.ts.next()
            body = self.prog_seq()
            self.ts.expect("}")
            return body
        if tok.kind == "ident":
            return self.ident_stmt()
        self.ts.fail(f"unexpected {tok.text or 'end of input'!r} in a program")

    def if_stmt(self):
        self.ts.expect("if")
        test = self.expr_parser().pred()
        self.ts.expect("then")
        then = self.prog_seq()
        els = Skip()
        if self.ts.accept("else"):
            els = self.prog_seq()
        self.ts.expect("fi")
        return IfThenElse(test, then, els)

    def choice_stmt(self):
        self.ts.expect("choice")
        self.ts.expect("{")
        branches = []
        while not self.ts.at("}"):
            guard = self.expr_parser().pred()
            self.ts.expect("->")
            self.ts.expect("{")
            body = self.prog_seq()
            self.ts.expect("}")
            branches.append((guard, body))
        self.ts.expect("}")
        if not branches:
            self.ts.fail("choice needs at least one branch")
        return GuardedChoice(tuple(branches))

    def ode_stmt(self):
        self.ts.expect("ode")
        self.ts.expect("{")
        bindings = {}
        while True:
            tok = self.name_token("lens")
            self.ts.expect("'")
            self.ts.expect("=")
            e = self.expr_parser().expr()
            if tok.text in bindings:
                raise ParseError(f"{tok.text!r} bound twice", tok.line, tok.col)
            bindings[tok.text] = e
            if not self.ts.accept(","):
                break
        self.ts.expect("|")
        domain = self.expr_parser().pred()
        self.ts.expect("}")
        try:
            fieldv = VectorField.make(self.space, bindings)
        except (ShapeMismatchError, UnknownLensError) as exc:
            tok = self.ts.peek()
            raise ParseError(str(exc), tok.line, tok.col) from None
        return ODE(fieldv, domain)

    def ident_stmt(self):
        tok = self.ts.next()
        if self.ts.accept(":="):
            if self.ts.accept("*"):
                self.lens_for_assign(tok)
                return NonDetAssign(tok.text)
            e = self.expr_parser().expr()
            lens = self.lens_for_assign(tok)
            self.check_assign_shape(lens, e, tok)
            return Assign(tok.text, e)
        if tok.text in self.programs:
            return self.programs[tok.text]
        raise ParseError(f"{tok.text!r} is not a program", tok.line, tok.col)

    def lens_for_assign(self, tok):
        if self.space is None or not self.space.has_lens(tok.text):
            raise ParseError(f"no lens named {tok.text!r}", tok.line, tok.col)
        return self.space.lens(tok.text)

    def check_assign_shape(self, lens, e, tok):
        sh = e.shape(self.space, frozenset())
        want = _lens_shape(lens)
        if want is None:
            raise ParseError(
                f"{lens.name!r} is set-sorted; only := * can write it",
                tok.line, tok.col)
        if sh != want:
            raise ParseError(
                f"assigning {sh} to {lens.name!r} which holds {want}",
                tok.line, tok.col)


def _lens_shape(lens):
    if lens.kind == "cont":
        return ("mat", lens.rows, lens.cols)
    if lens.sort == "real":
        return ("mat", 1, 1)
    if lens.sort == "vec2":
        return ("mat", 1, 2)
    if lens.sort == "mode":
        return ("mode",)
    return None


def _as_const(value):
    if isinstance(value, Const):
        return value
    if isinstance(value, MatVal):
        return Const.of(value)
    if isinstance(value, (tuple, list)):
        return Const.of(MatVal.vec2(*value))
    return Const.of(value)


def _exact_const(e, space, tok):
    n = Normalizer(space)
    try:
        sh = e.shape(space, frozenset())
        if sh == ("mat", 1, 1):
            p = n.scalar(e)
            if not p.is_const:
                raise ShapeMismatchError("not constant")
            return Const.of(p.const_value())
        vf = n.vector(e)
        if not vf.literal_only or not all(c.is_const for c in vf.comps):
            raise ShapeMismatchError("not constant")
        exact = tuple(c.const_value() for c in vf.comps)
        val = MatVal(vf.rows, vf.cols, tuple(float(q) for q in exact))
        return Const(val, exact)
    except ShapeMismatchError:
        raise ParseError("constants must be closed numeric expressions",
                         tok.line, tok.col) from None


def parse_model(text, const_overrides=None):
    return _ModelParser(text, const_overrides).parse()


def parse_program(text, model, space=None):
    """Parse one program in a model's namespace.

    Constants, defs, named predicates, and program references resolve
    against ``model``; pass ``space`` to type-check in an extended state
    space (extra proof-time lenses).
    """
    p = _ModelParser.__new__(_ModelParser)
    p.ts = TokenStream(tokenize(text))
    p.text = text
    p.overrides = {}
    p.space = space if space is not None else model.space
    p.consts = model.consts
    p.defs = model.defs
    p.preds = model.preds
    p.programs = model.programs
    p.used = set()
    prog = p.prog_seq()
    if not p.ts.at_kind("eof"):
        p.ts.fail("trailing input after the program")
    return prog


def load_model(path, const_overrides=None):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read(), const_overrides)


# ---------------------------------------------------------------------------
# scenarios


_SCN_NUMBERS = ("horizon", "dt", "epsilon")
_SCN_NAMES = ("control", "dynamics")


def parse_scenario(text, model):
    ts = TokenStream(tokenize(text))
    ctx = model.context()
    numbers = {}
    names = {}
    init = {}
    consts = {}
    while not ts.at_kind("eof"):
        tok = ts.peek()
        if tok.text in _SCN_NUMBERS:
            ts.next()
            ts.expect("=")
            e = ExprParser(ts, ctx).expr()
            numbers[tok.text] = _closed_number(e, model, tok)
        elif tok.text == "const":
            ts.next()
            name = ts.next()
            if name.kind != "ident" or name.text not in model.consts:
                raise ParseError(
                    f"{name.text!r} is not a constant of the model",
                    name.line, name.col)
            ts.expect("=")
            e = ExprParser(ts, ctx).expr()
            consts[name.text] = _exact_const(e, model.space, name)
        elif tok.text in _SCN_NAMES:
            ts.next()
            ts.expect("=")
            name = ts.next()
            if name.kind != "ident" or name.text not in model.programs:
                raise ParseError(f"{name.text!r} is not a program in the model",
                                 name.line, name.col)
            names[tok.text] = name.text
        elif tok.text == "init":
            ts.next()
            name = ts.next()
            if name.kind != "ident" or not model.space.has_lens(name.text):
                raise ParseError(f"no lens named {name.text!r}",
                                 name.line, name.col)
            ts.expect("=")
            init[name.text] = _init_value(ts, ctx, model, name)
        else:
            ts.fail(f"unexpected {tok.text!r} in scenario")
    if "horizon" not in numbers:
        raise ParseError("scenario needs a horizon", 1, 1)
    sc = Scenario(horizon=numbers["horizon"],
                  dt=numbers.get("dt", 0.01),
                  epsilon=numbers.get("epsilon", 0.1),
                  control=names.get("control", ""),
                  dynamics=names.get("dynamics", ""),
                  init=init, consts=consts)
    return sc


def _closed_number(e, model, tok):
    n = Normalizer(model.space)
    try:
        p = n.scalar(e)
        if not p.is_const:
            raise ShapeMismatchError("not constant")
    except ShapeMismatchError:
        raise ParseError("expected a closed number", tok.line, tok.col) \
            from None
    return float(p.const_value())


def _init_value(ts, ctx, model, name_tok):
    lens = model.space.lens(name_tok.text)
    tok = ts.peek()
    if lens.kind == "disc" and lens.sort == "set":
        ts.expect("{")
        members = []
        while not ts.at("}"):
            e = ExprParser(ts, ctx).expr()
            members.append(_closed_mat(e, model, tok))
            if not ts.accept(","):
                break
        ts.expect("}")
        for m in members:
            if m.shape != (1, 2):
                raise ParseError("set members are 1x2 vectors",
                                 tok.line, tok.col)
        return frozenset(members)
    if lens.kind == "disc" and lens.sort == "mode":
        mode = ts.next()
        if mode.text not in lens.modes:
            raise ParseError(
                f"{mode.text!r} is not a mode of {lens.name!r}",
                mode.line, mode.col)
        return mode.text
    e = ExprParser(ts, ctx).expr()
    val = _closed_mat(e, model, tok)
    want = _lens_shape(lens)
    if ("mat",) + val.shape != want:
        raise ParseError(
            f"value shape {val.shape} does not fit {lens.name!r}",
            tok.line, tok.col)
    return val


def _closed_mat(e, model, tok):
    n = Normalizer(model.space)
    try:
        sh = e.shape(model.space, frozenset())
        if sh == ("mat", 1, 1):
            p = n.scalar(e)
            if not p.is_const:
                raise ShapeMismatchError("not constant")
            return MatVal.scalar(float(p.const_value()))
        vf = n.vector(e)
        if not vf.literal_only or not all(c.is_const for c in vf.comps):
            raise ShapeMismatchError("not constant")
        return MatVal(vf.rows, vf.cols,
                      tuple(float(c.const_value()) for c in vf.comps))
    except ShapeMismatchError:
        raise ParseError("expected a closed value", tok.line, tok.col) \
            from None


def load_scenario(path, model):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read(), model)


def load_model_and_scenario(model_path, scenario_path):
    """Parse both files, honouring the scenario's const overrides.

    A scenario may pin model constants with ``const name = value``
    lines. Those take effect inside the model, so the model is reparsed
    with the overrides and the scenario reread against the result
    (init expressions may mention the overridden constants).
    """
    with open(model_path, "r", encoding="utf-8") as fh:
        model_text = fh.read()
    with open(scenario_path, "r", encoding="utf-8") as fh:
        scn_text = fh.read()
    model = parse_model(model_text)
    scn = parse_scenario(scn_text, model)
    if scn.consts:
        model = parse_model(model_text, const_overrides=scn.consts)
        scn = parse_scenario(scn_text, model)
    return model, scn


def initial_state(model, scenario):
    """Zero state overwritten with every scenario init value."""
    st = model.space.zero_state()
    for name, value in scenario.init.items():
        st = lens_put(st, model.space.lens(name), value)
    return st
