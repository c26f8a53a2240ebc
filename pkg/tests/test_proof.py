"""Proof kernel: vc generation, differential rules, discharge."""

import random

import pytest

from helmproof.deriv import VectorField
from helmproof.errors import (
    MissingInvariantError, NotDifferentiableError, ShapeMismatchError,
    UnsupportedNodeError,
)
from helmproof.expr import (
    And, Cmp, Implies, Not, TrueP, Var, eval_pred,
)
from helmproof.hprog import (
    Assign, IfThenElse, GuardedChoice, NonDetAssign, ODE, Seq, Skip, Star,
    Test as ProgTest,
)
from helmproof.parsing import parse_expr, parse_pred
from helmproof.proof import (
    DIFFERENTIABLE, PROVED, REFUTED, UNKNOWN, VC, HoareTriple, classify, dC,
    dI, discharge, generate_vcs, validate_by_execution, vc_assign, vc_if,
    vc_seq, vc_star, wp,
)
from helmproof.state import cont, disc, register_space

X = register_space([cont("x", 1, 1), cont("y", 1, 1)])
CLOCK = register_space([cont("t", 1, 1), disc("eps", "real")])
AV = register_space([cont("a", 1, 2), cont("v", 1, 2)])

proved_here = []


def settle(space, text, n=200, seed=1, box=None):
    formula = parse_pred(text, space)
    out = discharge(VC(formula, f"test: {text}"), space, n=n, seed=seed,
                    box=box)
    if out.verdict == PROVED:
        proved_here.append((space, formula))
    return out


# -- wp and vc generation -------------------------------------------------

def test_assignment_axiom_discharges_trivially():
    pre = parse_pred("x + 1 <= 2", X)
    post = parse_pred("x <= 2", X)
    prog = Assign("x", parse_expr("x + 1", X))
    vcs = vc_assign(HoareTriple(pre, prog, post))
    assert len(vcs) == 1
    assert str(vcs[0].formula) == "x + 1 <= 2 => x + 1 <= 2"
    assert discharge(vcs[0], X).verdict == PROVED


def test_skip_reduces_to_plain_implication():
    pre = parse_pred("x <= 1", X)
    post = parse_pred("x <= 5", X)
    vcs = generate_vcs(HoareTriple(pre, Skip(), post))
    assert len(vcs) == 1
    assert str(vcs[0].formula) == "x <= 1 => x <= 5"
    assert discharge(vcs[0], X).verdict == PROVED


def test_seq_chains_wp_without_a_midpoint():
    prog = Seq(Assign("x", parse_expr("x + 1", X)),
               Assign("x", parse_expr("x + 1", X)))
    t = HoareTriple(parse_pred("x <= 1", X), prog, parse_pred("x <= 3", X))
    vcs = vc_seq(t)
    assert len(vcs) == 1
    assert discharge(vcs[0], X).verdict == PROVED


def test_seq_splits_on_a_midpoint():
    prog = Seq(Assign("x", parse_expr("x + 1", X)),
               Assign("x", parse_expr("x + 1", X)))
    t = HoareTriple(parse_pred("x <= 1", X), prog, parse_pred("x <= 3", X))
    vcs = vc_seq(t, mid=parse_pred("x <= 2", X))
    assert len(vcs) == 2
    assert all(discharge(vc, X).verdict == PROVED for vc in vcs)


def test_if_splits_on_the_guard():
    prog = IfThenElse(parse_pred("x <= 0", X),
                      Assign("y", parse_expr("1", X)),
                      Assign("y", parse_expr("2", X)))
    t = HoareTriple(TrueP(), prog, parse_pred("y >= 1", X))
    vcs = vc_if(t)
    assert len(vcs) == 2
    assert all(discharge(vc, X).verdict == PROVED for vc in vcs)


def test_guarded_choice_wp_assumes_earlier_guards_failed():
    prog = GuardedChoice((
        (parse_pred("x <= 0", X), Assign("y", parse_expr("1", X))),
        (parse_pred("x <= 5", X), Assign("y", parse_expr("2", X))),
    ))
    pre, vcs = wp(prog, parse_pred("y >= 1", X))
    assert vcs == []
    assert r"(x <= 0 => 1 >= 1)" in str(pre)
    assert r"(!x <= 0 /\ x <= 5 => 2 >= 1)" in str(pre)
    # the no-match case acts as skip, so the raw post must already hold
    assert r"(!x <= 0 /\ !x <= 5 => y >= 1)" in str(pre)
    out = discharge(VC(Implies(TrueP(), pre), "choice"), X)
    assert out.verdict == REFUTED


def test_nondet_assign_needs_a_fresh_lens():
    prog = NonDetAssign("x")
    with pytest.raises(UnsupportedNodeError):
        wp(prog, parse_pred("x <= 5", X))
    pre, vcs = wp(prog, parse_pred("x <= 5", X), fresh=lambda base: "y")
    assert str(pre) == "y <= 5"
    assert vcs == []


def test_test_statement_guards_the_post():
    pre, vcs = wp(ProgTest(parse_pred("x <= 0", X)), parse_pred("x <= 1", X))
    assert str(pre) == "x <= 0 => x <= 1"
    assert vcs == []


def test_star_needs_an_invariant():
    t = HoareTriple(parse_pred("x <= 0", X), Star(Assign("x", Var("x"))),
                    parse_pred("x <= 2", X))
    with pytest.raises(MissingInvariantError):
        vc_star(t)
    with pytest.raises(MissingInvariantError):
        generate_vcs(t)


def test_star_emits_initiation_consecution_postcondition():
    body = Assign("x", parse_expr("x + 0", X))
    t = HoareTriple(parse_pred("x <= 0", X), Star(body),
                    parse_pred("x <= 2", X))
    inv = parse_pred("x <= 1", X)
    vcs = vc_star(t, invariant=inv)
    assert len(vcs) == 3
    assert "initiation" in vcs[0].origin
    assert "postcondition" in vcs[-1].origin
    assert all(discharge(vc, X).verdict == PROVED for vc in vcs)


def test_nested_star_reuses_the_invariant():
    body = Star(Assign("x", parse_expr("x + 0", X)))
    t = HoareTriple(parse_pred("x <= 0", X), Star(body),
                    parse_pred("x <= 2", X))
    vcs = vc_star(t, invariant=parse_pred("x <= 1", X))
    assert all(discharge(vc, X).verdict == PROVED for vc in vcs)
    with pytest.raises(MissingInvariantError):
        generate_vcs(t)


def test_wp_rejects_loops():
    with pytest.raises(MissingInvariantError):
        wp(Star(Skip()), TrueP())


def test_vc_shape_guards():
    t = HoareTriple(TrueP(), Skip(), TrueP())
    with pytest.raises(ShapeMismatchError):
        vc_assign(t)
    with pytest.raises(ShapeMismatchError):
        vc_if(t)


# -- differential rules ---------------------------------------------------

def drift():
    field = VectorField.make(CLOCK, {"t": parse_expr("1", CLOCK)})
    return ODE(field, parse_pred("t < eps", CLOCK))


def test_di_clock_bound_is_refuted():
    vcs, triple = dI(parse_pred("t <= eps", CLOCK), drift())
    assert len(vcs) == 1
    assert str(vcs[0].formula) == "t < eps => 1 <= 0"
    out = discharge(vcs[0], CLOCK, n=400, seed=3)
    assert out.verdict == REFUTED
    assert out.witness is not None
    assert not eval_pred(vcs[0].formula, out.witness, tol=0.0)
    assert str(triple.pre) == "t <= eps"


def test_di_conserved_quantity_proves():
    space = register_space([cont("u", 1, 1), cont("w", 1, 1)])
    field = VectorField.make(space, {"u": parse_expr("w", space),
                                     "w": parse_expr("0 - u", space)})
    ode = ODE(field, TrueP())
    vcs, _ = dI(parse_pred("u * u + w * w = 1", space), ode)
    assert len(vcs) == 1
    assert discharge(vcs[0], space).verdict == PROVED


def classifier_field():
    space = register_space([
        cont("s", 1, 1), cont("v", 1, 2), cont("a", 1, 2),
        disc("rs", "real"),
    ])
    field = VectorField.make(space, {
        "s": parse_expr("cond(s != 0, dot(v, a) / s, norm(a))", space),
        "v": parse_expr("a", space),
    })
    return space, ODE(field, TrueP())


def test_inequality_over_piecewise_rate_is_not_differentiable():
    space, ode = classifier_field()
    with pytest.raises(NotDifferentiableError) as err:
        classify(parse_pred("s <= rs", space), ode)
    assert "cond" in str(err.value)
    with pytest.raises(NotDifferentiableError):
        dI(parse_pred("s <= rs", space), ode)


def test_equality_over_piecewise_rate_passes_the_gate():
    space, ode = classifier_field()
    assert classify(parse_pred("s = rs", space), ode) == DIFFERENTIABLE


def test_piecewise_candidate_is_rejected_outright():
    space, ode = classifier_field()
    with pytest.raises(NotDifferentiableError) as err:
        classify(parse_pred("abs(s) <= rs", space), ode)
    assert "abs" in str(err.value)


def test_dc_with_true_lemma_degenerates_to_di():
    target = parse_pred("t <= eps", CLOCK)
    direct_vcs, direct_triple = dI(target, drift())
    cut_vcs, cut_triple = dC(TrueP(), target, drift())
    assert [str(v) for v in cut_vcs] == [str(v) for v in direct_vcs]
    assert str(cut_triple) == str(direct_triple)


def test_dc_strengthens_the_domain_for_the_target():
    space = register_space([cont("u", 1, 1), cont("w", 1, 1)])
    field = VectorField.make(space, {"u": parse_expr("w", space)})
    ode = ODE(field, TrueP())
    lemma = parse_pred("w = 0", space)
    target = parse_pred("u = 1", space)
    vcs, triple = dC(lemma, target, ode)
    # lemma invariance over the old domain, target over the strengthened
    assert str(vcs[0].formula) == "true => 0 = 0"
    assert str(vcs[1].formula) == "true /\\ w = 0 => w = 0"
    assert all(discharge(vc, space).verdict == PROVED for vc in vcs)
    assert str(triple.pre) == "w = 0 /\\ u = 1"
    assert str(triple.post) == "u = 1"


def test_ode_wp_adds_invariance_obligations():
    t = HoareTriple(parse_pred("t <= eps", CLOCK), drift(),
                    parse_pred("t <= eps", CLOCK))
    vcs = generate_vcs(t)
    assert len(vcs) == 2
    assert str(vcs[0].formula) == "t <= eps => t <= eps"
    assert str(vcs[1].formula) == "t < eps => 1 <= 0"


# -- discharge ------------------------------------------------------------

def test_discharge_identical_normal_forms():
    out = settle(AV, "2 * dot(a, v) * dot(a, a) = 2 * dot(a, a) * dot(v, a)")
    assert out.verdict == PROVED


def test_discharge_bounded_from_premises():
    out = settle(X, r"0 <= x /\ x <= 4 => x >= -1")
    assert out.verdict == PROVED


def test_discharge_unknown_is_honest():
    out = settle(X, "sin(x) <= 1")
    assert out.verdict == UNKNOWN
    assert "samples satisfied" in out.detail
    assert "200/200" in out.detail


def test_discharge_reports_evaluation_errors():
    out = settle(X, "sqrt(x) >= 0 => sin(x) <= 1")
    assert out.verdict == UNKNOWN
    assert "evaluation errors" in out.detail


def test_discharge_refutes_with_a_checked_witness():
    formula = parse_pred("sqrt(x) >= 1", X)
    out = discharge(VC(formula, "w"), X, n=400, seed=5)
    assert out.verdict == REFUTED
    assert not eval_pred(formula, out.witness, tol=0.0)


def test_discharge_respects_the_box():
    # x in [2, 3] leaves x >= 1 unfalsified; the default box refutes it
    formula = parse_pred("x >= 1", X)
    narrow = discharge(VC(formula, "b"), X, n=300, seed=0,
                       box={"x": (2.0, 3.0)})
    wide = discharge(VC(formula, "b"), X, n=300, seed=0)
    assert narrow.verdict == UNKNOWN
    assert wide.verdict == REFUTED


def test_proved_vcs_survive_resampling():
    rng = random.Random(7)
    for space, formula in proved_here:
        for _ in range(300):
            st = space.sample(rng)
            try:
                ok = eval_pred(formula, st, tol=0.0)
            except Exception:
                continue
            assert ok, f"{formula} fell at\n{st.describe()}"


# -- execution validation -------------------------------------------------

def test_execution_validates_a_true_triple():
    t = HoareTriple(parse_pred("x <= 1", X),
                    Assign("x", parse_expr("x + 1", X)),
                    parse_pred("x <= 2", X))
    report = validate_by_execution(t, X, n=200, seed=2)
    assert report.ok
    assert report.checked == 200
    assert report.violations == 0


def test_execution_finds_a_false_triple():
    t = HoareTriple(TrueP(), Assign("x", parse_expr("x + 1", X)),
                    parse_pred("x <= 0", X))
    report = validate_by_execution(t, X, n=100, seed=2)
    assert not report.ok
    assert report.violations > 0
    assert report.failures


def test_execution_counts_blocked_runs_as_vacuous():
    t = HoareTriple(TrueP(), ProgTest(parse_pred("x > 100", X)), TrueP())
    report = validate_by_execution(t, X, n=50, seed=2)
    assert report.skipped == 50
    assert report.checked == 0
    assert not report.ok


def test_execution_checks_recorded_flow_states():
    t = HoareTriple(parse_pred(r"t = 0 /\ eps = 1", CLOCK), drift(),
                    parse_pred("t <= eps", CLOCK))
    sampler = lambda rng: CLOCK.make_state(cont_vals={"t": 0.0},
                                           disc_vals={"eps": 1.0})
    report = validate_by_execution(t, CLOCK, n=20, seed=2, sampler=sampler,
                                   ode_time=2.0)
    assert report.ok
    assert report.checked == 20


def test_execution_unrolls_one_loop_pass():
    t = HoareTriple(parse_pred("x <= 1", X),
                    Star(Assign("x", parse_expr("x + 1", X))),
                    parse_pred("x <= 2", X))
    report = validate_by_execution(t, X, n=100, seed=4)
    assert report.ok
