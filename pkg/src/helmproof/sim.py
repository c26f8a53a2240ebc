"""Fixed-step execution of hybrid programs.

A run alternates a discrete controller with RK4 integration of the ODE
nodes in the dynamics program, the classic sample-and-hold loop. The
integrator owns three floating-point policies, all deliberately boring:

* classical RK4 with a fixed step, no adaptivity, so a run is a pure
  function of (programs, initial state, config);
* evolution domains are checked with a boundary band (``compiled``):
  reaching the boundary of a strict constraint counts as leaving, and the
  crossing is then bisected to within dt/16, keeping the last in-domain
  state;
* piecewise right-hand sides (Cond on a comparison such as ``s != 0``)
  take the boundary branch within ``zero_tol`` of the guard's boundary.

Trajectories record one sample per accepted integrator step plus the
initial state, and tagged events: mode-lens changes, early domain exits,
and the first time any configured watcher predicate turns true.
"""

import json
import math
from dataclasses import dataclass, field

from .compiled import compile_field, compile_pred, disc_env
from .errors import (
    DomainViolationError, HelmproofError, NonFiniteStateError, SimStuckError,
)
from .expr import eval_expr, eval_pred
from .hprog import default_chooser, exec_program
from .state import MatVal, cont_vector, with_cont_vector

__all__ = [
    "SimConfig", "Trajectory", "integrate_ode", "run_loop",
    "export_trajectory", "import_trajectory",
]


@dataclass(frozen=True)
class SimConfig:
    """Knobs for a run; defaults match the bundled scenarios."""

    dt: float = 0.01
    epsilon: float = 0.1
    horizon: float = 10.0
    chooser: object = None
    domain_policy: str = "stop_on_violation"
    domain_tol: float = 1e-6
    zero_tol: float = 1e-9
    watchers: tuple = ()  # (tag, Pred) pairs; each fires at most once

    def __post_init__(self):
        if not (0.0 < self.dt <= self.epsilon):
            raise ValueError(f"need 0 < dt <= epsilon, got dt={self.dt}, "
                             f"epsilon={self.epsilon}")
        if self.horizon < 0.0:
            raise ValueError(f"negative horizon {self.horizon}")
        if self.domain_policy not in ("stop_on_violation",
                                      "error_on_violation"):
            raise ValueError(f"unknown domain policy {self.domain_policy!r}")


@dataclass
class Trajectory:
    samples: list = field(default_factory=list)  # (time, HybridState)
    events: list = field(default_factory=list)   # (time, tag)

    @property
    def space(self):
        return self.samples[0][1].space

    def final_time(self):
        return self.samples[-1][0]

    def final_state(self):
        return self.samples[-1][1]

    def times(self):
        return [t for t, _ in self.samples]


def _rk4(f, y, disc, h):
    k1 = f(y, disc)
    k2 = f([a + 0.5 * h * b for a, b in zip(y, k1)], disc)
    k3 = f([a + 0.5 * h * b for a, b in zip(y, k2)], disc)
    k4 = f([a + h * b for a, b in zip(y, k3)], disc)
    return [a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]


def _require_finite(y):
    for v in y:
        if not math.isfinite(v):
            raise NonFiniteStateError(
                "continuous state left the finite range")


def _compiled_pair(node, cfg, cache):
    if cache is not None and node in cache:
        return cache[node]
    pair = (compile_field(node.field, cfg.zero_tol),
            compile_pred(node.domain, node.field.space, cfg.domain_tol))
    if cache is not None:
        cache[node] = pair
    return pair


def _bisect_crossing(f, dom, y, disc, h, res):
    """Largest in-domain partial step from y, to within res; 0 if even the
    smallest probe has already left."""
    lo, y_lo = 0.0, None
    hi = h
    while hi - lo > res:
        mid = 0.5 * (lo + hi)
        y_mid = _rk4(f, y, disc, mid)
        _require_finite(y_mid)
        if dom(y_mid, disc):
            lo, y_lo = mid, y_mid
        else:
            hi = mid
    return y_lo, lo


def integrate_ode(node, st, cfg, record=None, cache=None):
    """Evolve one ODE node for at most epsilon of local time.

    Returns (state, reason) with reason "epsilon" when the local clock ran
    out and "domain-exit" when the evolution domain failed first; the
    returned state is the last in-domain one. ``record(t_local, state)``
    is called after every accepted step.
    """
    fld, dom = _compiled_pair(node, cfg, cache)
    disc = disc_env(st)
    y = list(cont_vector(st))
    if not dom(y, disc):
        if cfg.domain_policy == "error_on_violation":
            raise DomainViolationError(
                f"domain {node.domain} false on entry")
        return st, "domain-exit"
    nfull = int(math.floor(cfg.epsilon / cfg.dt + 1e-9))
    rem = cfg.epsilon - nfull * cfg.dt
    if rem < cfg.dt * 1e-9:
        rem = 0.0
    out = st
    for k in range(nfull + (1 if rem else 0)):
        h = cfg.dt if k < nfull else rem
        y_new = _rk4(fld, y, disc, h)
        _require_finite(y_new)
        if not dom(y_new, disc):
            y_part, h_part = _bisect_crossing(
                fld, dom, y, disc, h, cfg.dt / 16.0)
            if h_part > 0.0:
                t_part = k * cfg.dt + h_part
                out = with_cont_vector(st, y_part)
                if record:
                    record(t_part, out)
            if cfg.domain_policy == "error_on_violation":
                raise DomainViolationError(
                    f"domain {node.domain} failed at local time "
                    f"{k * cfg.dt + h_part:.6g}")
            return out, "domain-exit"
        y = y_new
        t_local = (k + 1) * cfg.dt if k < nfull else cfg.epsilon
        out = with_cont_vector(st, y)
        if record:
            record(t_local, out)
    return out, "epsilon"


def _mode_snapshot(st):
    return {l.name: st.disc[l.name]
            for l in st.space.disc_lenses if l.sort == "mode"}


def run_loop(ctrl, dyn, st0, cfg):
    """Run (ctrl ; dyn)* until the horizon and record the trajectory.

    ctrl must be ODE-free; each ODE inside dyn is integrated for at most
    epsilon of local time, and the cycle's time advance is the local time
    its integrations consumed. A cycle that consumes no time would repeat
    forever and raises SimStuckError instead.
    """
    chooser = cfg.chooser if cfg.chooser is not None else default_chooser
    tr = Trajectory()
    tr.samples.append((0.0, st0))
    fired = set()
    cache = {}
    _check_watchers(cfg, 0.0, st0, fired, tr.events)
    t = 0.0
    st = st0
    cycle = 0
    while t < cfg.horizon - 1e-12:
        try:
            st1 = exec_program(ctrl, st, chooser=chooser)
            _diff_modes(t, st, st1, tr.events)
            cell = {"adv": 0.0, "reason": None}

            def on_ode(node, s, _cell=cell, _t=t):
                base = _cell["adv"]

                def rec(t_local, ss):
                    _cell["adv"] = base + t_local
                    tr.samples.append((_t + base + t_local, ss))
                    _check_watchers(cfg, _t + base + t_local, ss, fired,
                                    tr.events)

                s2, reason = integrate_ode(node, s, cfg, record=rec,
                                           cache=cache)
                _cell["reason"] = reason
                return s2

            st2 = exec_program(dyn, st1, chooser=chooser, ode=on_ode)
            _diff_modes(t, st1, st2, tr.events)
        except HelmproofError as exc:
            exc.cycle_index = cycle
            if len(exc.args) == 1 and isinstance(exc.args[0], str):
                exc.args = (f"cycle {cycle}: {exc.args[0]}",)
            raise
        adv = cell["adv"]
        if adv <= 0.0:
            raise SimStuckError(
                f"cycle {cycle}: dynamics consumed no time (domain "
                "already closed?)")
        if cell["reason"] == "domain-exit" and adv < cfg.epsilon - cfg.dt:
            tr.events.append((t + adv, "domain exit"))
        t += adv
        st = st2
        cycle += 1
    return tr


def _diff_modes(t, before, after, events):
    for name, old in _mode_snapshot(before).items():
        new = after.disc[name]
        if new != old:
            events.append((t, f"mode {name}: {old} -> {new}"))


def _check_watchers(cfg, t, st, fired, events):
    for tag, pred in cfg.watchers:
        if tag not in fired and eval_pred(pred, st):
            fired.add(tag)
            events.append((t, tag))


# ---------------------------------------------------------------------------
# trajectory serialization


def _g9(x):
    return format(x, ".9g")


def _column_names(space):
    names = ["time"]
    for lens in space.cont_lenses:
        if lens.size == 1:
            names.append(lens.name)
        elif lens.rows == 1:
            names.extend(f"{lens.name}_{j + 1}" for j in range(lens.cols))
        else:
            names.extend(f"{lens.name}_{i + 1}_{j + 1}"
                         for i in range(lens.rows) for j in range(lens.cols))
    names.extend(l.name for l in space.disc_lenses if l.sort == "mode")
    return names


def export_trajectory(tr, path, fmt="csv", derived=()):
    """Write a trajectory to a file.

    csv: one row per sample with 9-significant-digit decimals; extra
    columns from ``derived`` (name, scalar Expr) pairs evaluated at each
    sample; events appended as a #-commented sidecar section. jsonl: one
    object per sample plus one per event; round-trips through
    ``import_trajectory``.
    """
    if fmt == "csv":
        _export_csv(tr, path, derived)
    elif fmt == "jsonl":
        _export_jsonl(tr, path)
    else:
        raise ValueError(f"unknown trajectory format {fmt!r}")


def _export_csv(tr, path, derived):
    space = tr.space
    mode_lenses = [l.name for l in space.disc_lenses if l.sort == "mode"]
    header = _column_names(space) + [name for name, _ in derived]
    with open(path, "w", encoding="utf-8") as out:
        out.write(",".join(header) + "\n")
        for t, st in tr.samples:
            row = [_g9(t)]
            row.extend(_g9(v) for v in cont_vector(st))
            row.extend(st.disc[name] for name in mode_lenses)
            row.extend(
                _g9(eval_expr(e, st).as_float()) for _, e in derived)
            out.write(",".join(row) + "\n")
        out.write("# events\n")
        for t, tag in tr.events:
            out.write(f"# {_g9(t)},{tag}\n")


def _disc_json(v):
    if isinstance(v, str):
        return v
    if isinstance(v, frozenset):
        return {"set": sorted(m.data for m in v)}
    if v.is_scalar:
        return v.data[0]
    return list(v.data)


def _export_jsonl(tr, path):
    with open(path, "w", encoding="utf-8") as out:
        for t, st in tr.samples:
            rec = {
                "t": t,
                "cont": {l.name: (st.cont[l.offset]
                                  if l.size == 1
                                  else list(st.cont[l.offset:l.offset
                                                    + l.size]))
                         for l in st.space.cont_lenses},
                "disc": {l.name: _disc_json(st.disc[l.name])
                         for l in st.space.disc_lenses},
            }
            out.write(json.dumps(rec) + "\n")
        for t, tag in tr.events:
            out.write(json.dumps({"t": t, "event": tag}) + "\n")


def import_trajectory(path, space):
    """Rebuild a Trajectory from a jsonl export against a known space."""
    tr = Trajectory()
    with open(path, encoding="utf-8") as src:
        for line in src:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "event" in rec:
                tr.events.append((rec["t"], rec["event"]))
                continue
            disc_vals = {}
            for name, v in rec["disc"].items():
                if isinstance(v, dict):
                    disc_vals[name] = frozenset(
                        MatVal.vec2(*m) for m in v["set"])
                elif isinstance(v, list):
                    disc_vals[name] = MatVal.vec2(*v)
                else:
                    disc_vals[name] = v
            st = space.make_state(cont_vals=rec["cont"],
                                  disc_vals=disc_vals)
            tr.samples.append((rec["t"], st))
    return tr
