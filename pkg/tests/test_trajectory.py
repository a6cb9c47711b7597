import numpy as np
import pytest

from cqed_pairs import analysis, model, trajectory
from cqed_pairs.analysis import EventClass
from cqed_pairs.model import SystemParams
from cqed_pairs.trajectory import StepSizeError

STIRAP = SystemParams.create(kappa=0.0, gamma=0.0, fwhm=27.0, delay=27.0)


def test_closed_stirap_reaches_e_plus():
    r = trajectory.run_trajectory(STIRAP, 0)
    assert r.jumps == []
    assert abs(np.vdot(model.special_state("E_PLUS"), r.final_state)) ** 2 > 0.99
    assert not r.terminated_cleanly


def test_ensemble_matches_single_runs():
    p = SystemParams(kappa=1.0, gamma=0.05)
    ens = trajectory.run_ensemble(p, 40, master_seed=11)
    for k in (0, 7, 39):
        alone = trajectory.run_trajectory(p, trajectory.child_seed(11, k))
        assert alone.same_as(ens[k])


def test_thread_count_does_not_change_results():
    p = SystemParams(kappa=1.0, gamma=0.05)
    a = trajectory.run_ensemble(p, 60, master_seed=3, threads=1)
    b = trajectory.run_ensemble(p, 60, master_seed=3, threads=4)
    assert all(x.same_as(y) for x, y in zip(a, b))


def test_chunking_does_not_change_results():
    p = SystemParams(kappa=2.0, gamma=0.01, delta1=5.0, delta2=-5.0)
    whole = trajectory.run_ensemble(p, 50, master_seed=8)
    parts = [r for chunk in trajectory.iter_ensemble(p, 50, 8, chunk=7) for r in chunk]
    assert all(x.same_as(y) for x, y in zip(whole, parts))


def test_lossless_atom_emits_one_photon_per_mode():
    p = SystemParams(kappa=1.0, gamma=0.0)
    for r in trajectory.run_ensemble(p, 200, master_seed=5):
        assert r.terminated_cleanly
        assert [ev.is_cavity for ev in r.jumps] == [True, True]
        assert sorted(ev.channel.mode for ev in r.jumps) == [1, 2]


def test_jump_records_are_consistent():
    p = SystemParams(kappa=1.0, gamma=0.05)
    for r in trajectory.run_ensemble(p, 300, master_seed=2):
        times = [ev.time for ev in r.jumps]
        assert times == sorted(times)
        for ev in r.jumps:
            assert sum(ev.post_jump_atom_populations) == pytest.approx(1.0, abs=1e-9)
            assert 0.0 <= ev.post_jump_mode2_excitation <= 1.0 + 1e-12
        if r.terminated_cleanly:
            assert len(r.jumps) == 2


def test_step_jump_probabilities_from_e_plus():
    p = SystemParams(kappa=0.4, gamma=0.0)
    dt = 0.01
    e_plus = model.special_state("E_PLUS")
    engine = trajectory._engine(p)
    weights = [dt * np.vdot(j.apply(e_plus), j.apply(e_plus)).real for j in engine.jumps]
    assert [j.channel.is_cavity for j in engine.jumps] == [True] * 4  # zero-rate channels are dropped
    assert weights == pytest.approx([dt * 0.2] * 4)
    nxt, ev = trajectory.step(e_plus, 100.0, dt, p, eps=dt * 0.2 * 2.5)
    assert ev is not None and ev.channel.name == "a2+"
    assert np.vdot(nxt, nxt).real == pytest.approx(1.0)
    nxt, ev = trajectory.step(e_plus, 100.0, dt, p, eps=0.5)
    assert ev is None
    assert np.vdot(nxt, nxt).real == pytest.approx(1.0)


def test_no_jump_norm_decay_from_e_plus():
    p = SystemParams(kappa=0.4, gamma=0.0)
    engine = trajectory._engine(p)
    dt = 1e-4
    g = [0.0] * 6
    nxt = trajectory._kernels.rk4_step(model.special_state("E_PLUS"), engine.h, engine.pairs1, engine.pairs2, *g, dt)
    assert np.vdot(nxt, nxt).real == pytest.approx(1.0 - 2 * 0.4 * dt, abs=1e-8)


def test_step_size_guard():
    p = SystemParams(kappa=1.0, gamma=0.01, dt=0.2)
    with pytest.raises(StepSizeError):
        trajectory.run_ensemble(p, 20, master_seed=0)
    with pytest.raises(StepSizeError):
        trajectory.step(model.special_state("E_PLUS"), 50.0, 0.2, p, eps=0.5)


def test_stepwise_reference_agrees_statistically():
    p = SystemParams(kappa=1.0, gamma=0.0, dt=0.01)
    n = 1500
    fast = analysis.event_probabilities(trajectory.run_ensemble(p, n, master_seed=21))
    slow = analysis.event_probabilities(
        trajectory.run_trajectory_stepwise(p, trajectory.child_seed(22, k)) for k in range(n)
    )
    for cls in (EventClass.ENTANGLED_PAIR, EventClass.SEPARABLE_CAVITY_PAIR):
        (pa, sa), (pb, sb) = fast[cls], slow[cls]
        assert abs(pa - pb) < 4.0 * np.hypot(sa, sb)


def test_ensemble_density_is_a_state():
    p = SystemParams(kappa=1.0, gamma=0.01)
    ens = trajectory.run_ensemble(p, 50, master_seed=4, sample_times=[0.0, 50.0])
    rho = trajectory.ensemble_density(ens)
    assert rho.shape == (2, 64, 64)
    assert np.trace(rho[1]).real == pytest.approx(1.0)
    assert rho[0][np.ix_(*[np.flatnonzero(model.special_state("I"))] * 2)] == pytest.approx(1.0)


def test_write_jump_records(tmp_path):
    p = SystemParams(kappa=1.0, gamma=0.0)
    ens = trajectory.run_ensemble(p, 5, master_seed=1)
    path = tmp_path / "jumps.csv"
    trajectory.write_jump_records(path, ens)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(trajectory.RECORD_HEADER)
    assert len(lines) == 1 + sum(len(r.jumps) for r in ens)
