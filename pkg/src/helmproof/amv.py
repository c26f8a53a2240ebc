"""Unmanned-vehicle case study: parameters, model builders, scenarios.

Everything here is a thin layer over two model files bundled next to
this module:

* ``amv_sim.hp`` drives a point mass with per-mode thrust laws and a
  four-mode machine (transit, operator control, caution, avoidance).
  The hazard tests come in two sign conventions, picked by
  ``AmvParams.hazard_literal``.
* ``amv_verified.hp`` carries speed and heading as state, which is what
  the proof layer reasons about: collinear thrust, constant heading,
  straight-line motion.

Builders reparse the bundled files with the parameter set inlined as
constants, so every number stays overridable from a scenario file.
"""

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

from .hprog import Seq, default_chooser
from .modelfile import parse_model
from .parsing import parse_expr
from .sim import SimConfig, run_loop
from .state import MatVal, lens_get, lens_put

_MODEL_DIR = Path(__file__).resolve().parent / "models"
VERIFIED_MODEL_PATH = _MODEL_DIR / "amv_verified.hp"
SIM_MODEL_PATH = _MODEL_DIR / "amv_sim.hp"
DEFAULT_SCENARIO_PATH = _MODEL_DIR / "default.scn"

# Predicates of the kinematic variant, reused by proofs and tests.
COLLINEARITY = "dot(a, v) = norm(a) * norm(v)"
COLLINEARITY_SIGN = "dot(a, v) >= 0"
COLLINEARITY_SQUARE = "dot(a, v) * dot(a, v) = dot(a, a) * dot(v, v)"
AUTOPILOT_PRE = (r"0 <= s /\ s <= rs /\ norm(rh - phi) < phieps"
                 r" /\ v = s * [sin(phi), cos(phi)]")
TRANSIT_SWITCH_PRE = (r"m = MOM /\ norm(ang(wp - p) - phi) <= phieps"
                      r" /\ exists o in ob . norm(p - o) <= D")
TRANSIT_SWITCH_POST = r"m = HCM /\ rs = H /\ norm(rh - phi) <= phieps"


@dataclass(frozen=True)
class AmvParams:
    """Vehicle and controller constants.

    The non-dyadic defaults are Fractions so reparsing a model file
    with these values inlined keeps constants exact, which the
    symbolic discharge relies on.
    """

    m: float = 5000.0        # mass [kg]
    S: float = 4.0           # transit speed cap [m/s]
    H: float = 2.0           # caution speed cap [m/s]
    fmax: float = 3000.0     # thrust limit per channel [N]
    kpl: float = 500.0       # speed gain, point-mass laws
    kpt: float = 500.0       # bearing gain, point-mass laws
    kpb: float = -1.0        # braking gain; negative means reverse thrust
    kpgv: float = 1000.0     # speed gain, kinematic autopilot
    kpgr: float = 1000.0     # heading gain, kinematic autopilot
    sb: float = 1.0          # braking-distance safety margin
    D: float = 20.0          # caution radius [m]
    epsphi: Fraction = Fraction(3, 10)   # collision-course half-angle [rad]
    epsh: Fraction = Fraction(1, 10)     # cancellation hysteresis [rad]
    seps: Fraction = Fraction(1, 20)     # autopilot speed deadband [m/s]
    phieps: Fraction = Fraction(1, 20)   # autopilot heading deadband [rad]
    eps: Fraction = Fraction(1, 10)      # control period [s]
    hazard_literal: bool = False         # see hazard_* preds in amv_sim.hp

    def __post_init__(self):
        for name in ("m", "S", "H", "fmax", "kpl", "kpt", "kpgv", "kpgr",
                     "sb", "D", "epsphi", "epsh", "seps", "phieps", "eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive,"
                                 f" got {getattr(self, name)}")
        if not self.kpb < 0:
            raise ValueError("kpb must be negative so the braking distance"
                             " comes out positive")
        if not self.H < self.S:
            raise ValueError(f"H must stay below S, got H={self.H} S={self.S}")

    def overrides(self):
        """Constant table for reparsing the bundled model files."""
        return {"mass": self.m, "S": self.S, "H": self.H, "fmax": self.fmax,
                "kpl": self.kpl, "kpt": self.kpt, "kpb": self.kpb,
                "kpgv": self.kpgv, "kpgr": self.kpgr, "sb": self.sb,
                "D": self.D, "epsphi": self.epsphi, "epsh": self.epsh,
                "seps": self.seps, "phieps": self.phieps, "eps": self.eps}

    def braking_distance(self, speed):
        """Stopping distance from ``speed`` under the full brake force."""
        return self.sb * speed * speed * self.m / (-2.0 * self.kpb * self.fmax)


@lru_cache(maxsize=None)
def _text(path):
    return Path(path).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def _base(path):
    return parse_model(_text(path))


@lru_cache(maxsize=8)
def _overridden(path, params):
    known = _base(path).consts
    keep = {k: v for k, v in params.overrides().items() if k in known}
    return parse_model(_text(path), const_overrides=keep)


def verified_model(params=None):
    """The kinematic model, with ``params`` inlined as constants."""
    return _overridden(VERIFIED_MODEL_PATH, params or AmvParams())


def sim_model(params=None):
    """The point-mass model, with ``params`` inlined as constants."""
    return _overridden(SIM_MODEL_PATH, params or AmvParams())


def build_dynamics(params=None):
    """Clock reset followed by the guarded kinematic flow."""
    return verified_model(params).programs["dyn"]


def build_lre(params=None):
    """The mode logic: guarded choice over the four vehicle modes."""
    return verified_model(params).programs["lre"]


def build_autopilot(params=None):
    """Deadbanded force computation feeding the acceleration."""
    return verified_model(params).programs["ap"]


def build_sim_model(params=None):
    """Controller and plant programs for the point-mass variant."""
    params = params or AmvParams()
    model = sim_model(params)
    ctrl = model.programs["ctrl_far" if params.hazard_literal
                          else "ctrl_near"]
    return ctrl, model.programs["dyn"]


def dynamics_flow(model):
    """The flow at the tail of the model's dynamics program."""
    prog = model.programs["dyn"]
    while isinstance(prog, Seq):
        prog = prog.second
    return prog


# -- scenarios -------------------------------------------------------------


@dataclass(frozen=True)
class AmvScenario:
    """A run description: who starts where, aiming at what, for how long.

    ``x0`` ranges over the kinematic variant's space; point-mass runs
    project it down (shared lens names keep that projection trivial).
    """

    params: AmvParams
    x0: object                # HybridState over verified_model's space
    waypoint: MatVal
    obstacles: frozenset
    horizon: float

    def __post_init__(self):
        sp = self.x0.space
        s = lens_get(self.x0, sp.lens("s")).data[0]
        phi = lens_get(self.x0, sp.lens("phi")).data[0]
        v = lens_get(self.x0, sp.lens("v")).data
        if not -1e-9 <= s <= self.params.S + 1e-9:
            raise ValueError(f"start speed {s} outside [0, {self.params.S}]")
        drift = math.hypot(v[0] - s * math.sin(phi), v[1] - s * math.cos(phi))
        if drift > 1e-9:
            raise ValueError("x0 velocity disagrees with its speed and"
                             f" heading by {drift}")
        if lens_get(self.x0, sp.lens("wp")) != self.waypoint:
            raise ValueError("x0 waypoint differs from the scenario waypoint")
        if lens_get(self.x0, sp.lens("ob")) != self.obstacles:
            raise ValueError("x0 obstacles differ from the scenario set")
        if not self.horizon >= 0:
            raise ValueError(f"horizon must not be negative: {self.horizon}")


def vehicle_state(model, p, v, waypoint, obstacles=(), rs=None, mode="MOM"):
    """Kinematic state with speed and heading read off the velocity.

    Heading is compass-style (ang(x, y) = atan2(x, y), zero along +y);
    a standing start keeps heading 0. The set heading starts aligned and
    the set speed defaults to the transit cap.
    """
    space = model.space
    s = math.hypot(v[0], v[1])
    phi = math.atan2(v[0], v[1]) if s > 0 else 0.0
    if rs is None:
        rs = float(model.consts["S"].value.data[0])
    values = {
        "p": MatVal.vec2(*p), "v": MatVal.vec2(*v),
        "a": MatVal.vec2(0.0, 0.0), "s": MatVal.scalar(s),
        "phi": MatVal.scalar(phi), "wp": MatVal.vec2(*waypoint),
        "ob": frozenset(MatVal.vec2(*o) for o in obstacles),
        "rs": MatVal.scalar(rs), "rh": MatVal.scalar(phi),
        "m": mode,
    }
    st = space.zero_state()
    for name, value in values.items():
        st = lens_put(st, space.lens(name), value)
    return st


def default_scenario():
    """The bundled run: coasting south past one obstacle, then home.

    Matches ``default.scn``: the hazard test uses the literal far-side
    convention, the only one that reproduces the expected timeline from
    this start (the near reading trips at t = 0 because the braking
    distance at cruise speed already exceeds the obstacle range).
    """
    params = AmvParams(hazard_literal=True)
    model = verified_model(params)
    x0 = vehicle_state(model, p=(-10.0, -10.0), v=(-0.5, -3.8),
                       waypoint=(0.0, 0.0), obstacles=((-12.0, -18.0),),
                       rs=4.0)
    return AmvScenario(params=params, x0=x0,
                       waypoint=MatVal.vec2(0.0, 0.0),
                       obstacles=frozenset({MatVal.vec2(-12.0, -18.0)}),
                       horizon=35.0)


def sim_initial_state(scenario, model=None):
    """Project a scenario's start onto the point-mass space."""
    model = model or sim_model(scenario.params)
    src_space = scenario.x0.space
    st = model.space.zero_state()
    for lens in model.space.lenses:
        if src_space.has_lens(lens.name):
            st = lens_put(st, lens,
                          lens_get(scenario.x0, src_space.lens(lens.name)))
    return st


def run_scenario(scenario, dt=0.01, chooser=None):
    """Point-mass run of a scenario from its initial state."""
    ctrl, dyn = build_sim_model(scenario.params)
    st = sim_initial_state(scenario)
    cfg = SimConfig(dt=dt, epsilon=float(scenario.params.eps),
                    horizon=scenario.horizon, chooser=chooser)
    return run_loop(ctrl, dyn, st, cfg)


def plot_columns(model, obstacles=()):
    """Derived trajectory columns: speed, ranges, braking distance."""
    cols = []

    def col(name, text):
        cols.append((name, parse_expr(text, model.space, model.consts,
                                      model.defs, model.preds)))

    col("speed", "norm(v)")
    if model.space.has_lens("wp"):
        col("dwp", "norm(wp - p)")
    if "dsb" in model.defs:
        col("dsb", "dsb")
    terms = [f"norm([{float(o[0])!r}, {float(o[1])!r}] - p)"
             for o in (tuple(o.data) if isinstance(o, MatVal) else tuple(o)
                       for o in obstacles)]
    if terms:
        dob = terms[0]
        for t in terms[1:]:
            dob = f"min({t}, {dob})"
        col("dob", dob)
    return cols


def req_window_chooser(t_on, t_off, period):
    """Operator request held high over [t_on, t_off), low outside.

    The controller samples the request once per control period, so the
    k-th draw is pinned to time k * period.
    """
    counter = itertools.count()

    def choose(name, lens, st):
        if name == "req":
            t = next(counter) * period
            return MatVal.scalar(1.0 if t_on <= t < t_off else 0.0)
        return default_chooser(name, lens, st)

    return choose


# -- proof scripts ---------------------------------------------------------


def _collinearity(ses):
    flow = dynamics_flow(ses.model)
    ses.dI("collinear-sign", COLLINEARITY_SIGN, flow)
    ses.dI("collinear-square", COLLINEARITY_SQUARE, flow)
    ses.dC("collinearity", COLLINEARITY_SIGN, COLLINEARITY_SQUARE, flow)


def _heading_hold(ses):
    flow = dynamics_flow(ses.model)
    name, _binding = ses.add_ghost("X", "phi")
    both = f"{COLLINEARITY_SIGN} /\\ {COLLINEARITY_SQUARE}"
    ses.dC("heading-hold", both, f"phi = {name}", flow)


def _autopilot(ses):
    ses.prove("autopilot", AUTOPILOT_PRE, "ap", COLLINEARITY)


def _autopilot_chain(ses):
    flow = dynamics_flow(ses.model)
    both = f"{COLLINEARITY_SIGN} /\\ {COLLINEARITY_SQUARE}"
    ses.prove("autopilot", AUTOPILOT_PRE, "ap", COLLINEARITY)
    ses.dI("flow-keeps-both", both, flow)
    ses.conseq("flow-collinear", "flow-keeps-both",
               pre=COLLINEARITY, post=COLLINEARITY)
    ses.prove("clock-reset", COLLINEARITY, "t := 0", COLLINEARITY)
    ses.compose("dyn-collinear", "clock-reset", "flow-collinear")
    ses.compose("autopilot-chain", "autopilot", "dyn-collinear")


def _transit_switch(ses):
    ses.prove("transit-switch", TRANSIT_SWITCH_PRE, "lre",
              TRANSIT_SWITCH_POST)


def _straight_line(ses):
    flow = dynamics_flow(ses.model)
    v0, _bv = ses.add_ghost("v0", "v")
    p0, _bp = ses.add_ghost("p0", "p")
    vlaw = f"v = t * a + {v0}"
    law = f"p = t * t / 2 * a + t * {v0} + {p0}"
    entry = f"{COLLINEARITY} /\\ {v0} = v /\\ {p0} = p /\\ t = 0"
    ses.dC("line-flow", vlaw, law, flow)
    ses.conseq("line-entry", "line-flow", pre=entry)
    ses.prove("line-clock", f"{COLLINEARITY} /\\ {v0} = v /\\ {p0} = p",
              "t := 0", entry)
    ses.compose("straight-line", "line-clock", "line-entry")


def proof_scripts():
    """Named proof scripts over the kinematic model, keyed for check."""
    return {
        "collinearity": _collinearity,
        "heading-hold": _heading_hold,
        "autopilot": _autopilot,
        "autopilot-chain": _autopilot_chain,
        "transit-switch": _transit_switch,
        "straight-line": _straight_line,
    }


# -- constructive samplers -------------------------------------------------


def autopilot_pre_sampler(space, params):
    """States meeting the speed-trim precondition exactly.

    Speed below the set point, heading inside the deadband of the set
    heading, velocity built from speed and heading so the collinearity
    equation holds bit for bit.
    """
    S = float(params.S)
    band = float(params.phieps)

    def draw(rng):
        s = rng.uniform(0.0, S)
        rs = rng.uniform(s, S)
        phi = rng.uniform(-math.pi, math.pi)
        rh = phi + 0.999 * band * rng.uniform(-1.0, 1.0)
        st = space.zero_state()
        for name, value in (
                ("s", MatVal.scalar(s)), ("rs", MatVal.scalar(rs)),
                ("phi", MatVal.scalar(phi)), ("rh", MatVal.scalar(rh)),
                ("v", MatVal.vec2(s * math.sin(phi), s * math.cos(phi))),
                ("p", _vec(rng, 50.0)), ("wp", _vec(rng, 50.0)),
                ("a", _vec(rng, 1.0))):
            st = lens_put(st, space.lens(name), value)
        return st

    return draw


def transit_pre_sampler(space, params):
    """Transit-mode states aimed at the waypoint with an obstacle in D."""
    S = float(params.S)
    D = float(params.D)
    band = float(params.phieps)

    def draw(rng):
        px, py = rng.uniform(-50, 50), rng.uniform(-50, 50)
        while True:
            wx, wy = px + rng.uniform(-40, 40), py + rng.uniform(-40, 40)
            if math.hypot(wx - px, wy - py) > 1.0:
                break
        phi = math.atan2(wx - px, wy - py) \
            + 0.999 * band * rng.uniform(-1.0, 1.0)
        s = rng.uniform(0.0, S)
        theta = rng.uniform(-math.pi, math.pi)
        r = rng.uniform(0.0, 0.999 * D)
        near = MatVal.vec2(px + r * math.sin(theta),
                           py + r * math.cos(theta))
        obstacles = {near}
        if rng.random() < 0.5:
            far = rng.uniform(D + 1.0, D + 50.0)
            obstacles.add(MatVal.vec2(px + far * math.sin(theta),
                                      py + far * math.cos(theta)))
        st = space.zero_state()
        for name, value in (
                ("m", "MOM"), ("p", MatVal.vec2(px, py)),
                ("wp", MatVal.vec2(wx, wy)), ("phi", MatVal.scalar(phi)),
                ("s", MatVal.scalar(s)),
                ("v", MatVal.vec2(s * math.sin(phi), s * math.cos(phi))),
                ("ob", frozenset(obstacles)),
                ("rs", MatVal.scalar(rng.uniform(0.0, S))),
                ("rh", MatVal.scalar(rng.uniform(-math.pi, math.pi)))):
            st = lens_put(st, space.lens(name), value)
        return st

    return draw


def collinear_entry_sampler(space, params, ghosts=()):
    """States whose thrust already points along the velocity.

    ``ghosts`` names snapshot lenses to preload: each is set to the
    value of the lens it shadows (``v0`` copies v, ``p0`` copies p).
    """
    S = float(params.S)

    def draw(rng):
        s = rng.uniform(0.0, S)
        phi = rng.uniform(-math.pi, math.pi)
        lam = rng.uniform(0.0, 2.0)
        v = MatVal.vec2(s * math.sin(phi), s * math.cos(phi))
        a = MatVal.vec2(lam * math.sin(phi), lam * math.cos(phi))
        st = space.zero_state()
        for name, value in (
                ("s", MatVal.scalar(s)), ("phi", MatVal.scalar(phi)),
                ("v", v), ("a", a), ("p", _vec(rng, 50.0)),
                ("rs", MatVal.scalar(rng.uniform(0.0, S)))):
            st = lens_put(st, space.lens(name), value)
        for ghost in ghosts:
            source = "v" if ghost.startswith("v") else "p"
            st = lens_put(st, space.lens(ghost),
                          lens_get(st, space.lens(source)))
        return st

    return draw


def vehicle_sampler(model, space=None):
    """Random states satisfying the kinematic well-formedness axioms."""
    space = space or model.space
    S = float(model.consts["S"].value.data[0]) \
        if "S" in model.consts else 10.0
    eps = float(model.consts["eps"].value.data[0]) \
        if "eps" in model.consts else 1.0
    modes = space.lens("m").modes if space.has_lens("m") else ()

    def draw(rng):
        s = rng.uniform(0.0, S)
        phi = rng.uniform(-math.pi, math.pi)
        st = space.zero_state()
        values = [
            ("s", MatVal.scalar(s)), ("phi", MatVal.scalar(phi)),
            ("v", MatVal.vec2(s * math.sin(phi), s * math.cos(phi))),
            ("a", _vec(rng, 2.0)), ("p", _vec(rng, 50.0)),
            ("t", MatVal.scalar(rng.uniform(0.0, 0.99 * eps))),
        ]
        if space.has_lens("wp"):
            values.append(("wp", _vec(rng, 50.0)))
        if space.has_lens("rs"):
            values.append(("rs", MatVal.scalar(rng.uniform(0.0, S))))
        if space.has_lens("rh"):
            values.append(("rh", MatVal.scalar(rng.uniform(-math.pi,
                                                           math.pi))))
        if modes:
            values.append(("m", modes[rng.randrange(len(modes))]))
        for name, value in values:
            st = lens_put(st, space.lens(name), value)
        return st

    return draw


def _vec(rng, r):
    return MatVal.vec2(rng.uniform(-r, r), rng.uniform(-r, r))
