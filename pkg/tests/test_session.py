"""Proof sessions: registration, ghosts, reports, persistence."""

import pytest

from helmproof.errors import DuplicateNameError, UnknownVcError
from helmproof.modelfile import parse_model
from helmproof.proof import PROVED, REFUTED, UNKNOWN, ProofSession

SRC = """\
space {
  cont t : 1x1
  cont x : 1x1
  disc eps : real
}
program drift = ode { t' = 1, x' = 1 | t < eps }
program bump = x := x + 1
program idle = skip
"""


def session(**kw):
    kw.setdefault("samples", 150)
    return ProofSession(parse_model(SRC), **kw)


def test_refuted_vc_marks_the_triple_refuted():
    s = session()
    status = s.dI("clock", "t <= eps", "drift")
    assert status == "refuted"
    assert not s.proved("clock")
    rec = s.vcs["vc-0001"]
    assert rec["verdict"] == REFUTED
    assert rec["witness"] is not None


def test_symbolic_vcs_mark_the_triple_proved():
    s = session()
    assert s.dI("order", "x >= t", "drift") == "proved"
    assert s.proved("order")
    assert s.vcs["vc-0001"]["verdict"] == PROVED


def test_unknown_vcs_leave_the_triple_open():
    s = session()
    status = s.prove("mystery", "0 <= 1", "idle", "sin(x) <= 1")
    assert status == "open"
    assert not s.proved("mystery")
    assert s.vcs["vc-0001"]["verdict"] == UNKNOWN


def test_duplicate_names_are_refused():
    s = session()
    s.prove("step", "x <= 1", "bump", "x <= 2")
    with pytest.raises(DuplicateNameError):
        s.prove("step", "x <= 1", "bump", "x <= 2")


def test_unknown_names_are_refused():
    s = session()
    with pytest.raises(UnknownVcError):
        s.triple("ghost")
    with pytest.raises(UnknownVcError):
        s.export_smt("vc-9999")


def test_compose_without_a_link_vc():
    s = session()
    s.prove("one", "x <= 1", "bump", "x <= 2")
    s.prove("two", "x <= 2", "bump", "x <= 3")
    assert s.compose("both", "one", "two") == "proved"
    t = s.triple("both")
    assert str(t.pre) == "x <= 1"
    assert str(t.post) == "x <= 3"
    assert s.triples["both"]["vcs"] == []


def test_compose_emits_and_discharges_a_link_vc():
    s = session()
    s.prove("one", "x <= 1", "bump", "x <= 2")
    s.prove("two", "x <= 5/2", "bump", "x <= 7/2")
    assert s.compose("both", "one", "two") == "proved"
    assert len(s.triples["both"]["vcs"]) == 1


def test_compose_gates_on_parent_status():
    s = session()
    s.dI("bad", "t <= eps", "drift")                   # refuted
    s.prove("good", "t <= eps", "bump", "t <= eps")    # proved
    # posts and pres match syntactically, so no link vc is emitted;
    # the composition stays open because a parent is not proved
    status = s.compose("chain", "bad", "good")
    assert s.triples["chain"]["vcs"] == []
    assert status == "open"
    assert not s.proved("chain")


def test_conseq_weakens_both_sides():
    s = session()
    s.prove("step", "x <= 1", "bump", "x <= 2")
    assert s.conseq("weak", "step", pre="x <= 1/2", post="x <= 3") == "proved"
    t = s.triple("weak")
    assert str(t.pre) == "x <= 1 / 2"
    assert str(t.post) == "x <= 3"


def test_ghost_snapshot_is_constant_along_the_flow():
    s = session()
    name, binding = s.add_ghost("x0", "x")
    assert name == "x0"
    assert str(binding) == "x0 = x"
    assert s.space.has_lens("x0")
    assert s.dI("law", "x - x0 = t - t + x - x0", "drift") == "proved"


def test_ghost_law_relating_flow_to_snapshot():
    s = session()
    s.add_ghost("x0", "x")
    s.add_ghost("t0", "t")
    # both x and t advance at unit rate, so their gap stays put
    assert s.dI("gap", "x - t = x0 - t0", "drift") == "proved"


def test_nondet_assignment_gets_a_witness_lens():
    s = session()
    status = s.prove("havoc", "true", "x := *", "x = x")
    assert status == "proved"
    assert s.space.has_lens("x_any1")


def test_validate_runs_a_registered_triple():
    s = session()
    s.prove("step", "x <= 1", "bump", "x <= 2")
    report = s.validate("step", n=60)
    assert report.ok
    assert report.checked == 60


def test_report_lists_triples_and_vcs():
    s = session()
    s.dI("clock", "t <= eps", "drift")
    s.prove("step", "x <= 1", "bump", "x <= 2")
    text = s.report()
    assert "triple clock [dI] -> refuted" in text
    assert "triple step [hoare] -> proved" in text
    assert "witness:" in text
    assert "2 triples: 1 proved, 0 open, 1 refuted" in text


def test_session_round_trips_through_json(tmp_path):
    s = session()
    s.dI("clock", "t <= eps", "drift")
    s.dI("order", "x >= t", "drift")
    s.add_ghost("x0", "x")
    s.add_ghost("t0", "t")
    s.dI("gap", "x - t = x0 - t0", "drift")
    s.prove("step", "x <= 1", "bump", "x <= 2")
    path = tmp_path / "session.json"
    s.save(path)
    back = ProofSession.load(path)
    assert back.report() == s.report()
    assert back.proved("order") and back.proved("gap")
    assert not back.proved("clock")
    assert back.space.has_lens("x0")
    w1 = s.vcs["vc-0001"]["witness"]
    w2 = back.vcs["vc-0001"]["witness"]
    assert w2.cont == pytest.approx(w1.cont)
    assert w2.disc["eps"].data == pytest.approx(w1.disc["eps"].data)


def test_smt_export_is_stable_across_persistence(tmp_path):
    s = session()
    s.dI("order", "x >= t", "drift")
    before = s.export_smt("vc-0001")
    path = tmp_path / "session.json"
    s.save(path)
    back = ProofSession.load(path)
    assert back.export_smt("vc-0001") == before
    assert "(check-sat)" in before
