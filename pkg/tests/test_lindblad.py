import numpy as np
import pytest

from cqed_pairs import hilbert, lindblad, model
from cqed_pairs.model import SystemParams
from cqed_pairs.trajectory import StepSizeError


def test_dark_state_is_stationary():
    p = SystemParams(kappa=0.0, gamma=0.0, delta1=3.0, delta2=-3.0)
    t = 50.0
    g1, g2 = model.pulse_amplitude(t, 1, p.pulses), model.pulse_amplitude(t, 2, p.pulses)
    lam = model.special_state("LAMBDA", model.mixing_angle(g1, g2))
    rho = np.outer(lam, lam.conj())
    assert np.abs(lindblad.lindblad_rhs(rho, t, p)).max() < 1e-12


def test_rhs_preserves_trace_and_hermiticity():
    rng = np.random.default_rng(0)
    p = SystemParams(kappa=1.3, gamma=0.2, delta1=1.0, delta2=-0.5)
    psi = hilbert.random_state(rng)
    drho = lindblad.lindblad_rhs(np.outer(psi, psi.conj()), 42.0, p)
    assert abs(np.trace(drho)) < 1e-12
    assert np.allclose(drho, drho.conj().T, atol=1e-13)


def test_rhs_matches_dense_formula():
    rng = np.random.default_rng(1)
    p = SystemParams(kappa=0.7, gamma=0.3, delta1=2.0, delta2=-1.0)
    psi = hilbert.random_state(rng)
    rho = np.outer(psi, psi.conj())
    t = 40.0
    h = hilbert.as_dense(model.hamiltonian(t, p))
    expected = -1j * (h @ rho - rho @ h)
    for jc in model.jump_operators(p):
        l = hilbert.as_dense(jc.scaled)
        ll = l.conj().T @ l
        expected += l @ rho @ l.conj().T - 0.5 * (ll @ rho + rho @ ll)
    assert np.allclose(lindblad.lindblad_rhs(rho, t, p), expected, atol=1e-13)


def test_reachable_states():
    closed = lindblad.reachable_states(SystemParams(kappa=0.0, gamma=0.0))
    assert len(closed) == 5
    assert len(lindblad.reachable_states(SystemParams(kappa=1.0, gamma=0.01))) > 5


def test_closed_stirap_oracle():
    p = SystemParams.create(kappa=0.0, gamma=0.0, fwhm=27.0, delay=27.0)
    (_, rho), = lindblad.evolve_density(p, [100.0])
    e = model.special_state("E_PLUS")
    assert np.vdot(e, rho @ e).real > 0.99


def test_open_evolution_is_physical_and_loses_excitation():
    p = SystemParams(kappa=1.0, gamma=0.01)
    times = [0.0, 25.0, 50.0, 75.0, 100.0, 150.0]
    snaps = lindblad.evolve_density(p, times)
    n_op = hilbert.as_dense(model.excitation_operator())
    excitation = []
    for t, rho in snaps:
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
        assert np.linalg.eigvalsh(rho).min() > -1e-10
        excitation.append(np.trace(n_op @ rho).real)
    assert all(b <= a + 1e-12 for a, b in zip(excitation, excitation[1:]))


def test_guards():
    with pytest.raises(StepSizeError):
        lindblad.evolve_density(SystemParams(kappa=1.0, dt=0.2), [10.0])
    with pytest.raises(ValueError):
        lindblad.evolve_density(SystemParams(), [50.0, 10.0])
    with pytest.raises(ValueError):
        lindblad.lindblad_rhs(np.eye(4), 0.0, SystemParams())


def test_snapshot_csv(tmp_path):
    p = SystemParams(kappa=1.0, gamma=0.01)
    snaps = lindblad.evolve_density(p, [0.0, 10.0])
    path = tmp_path / "oracle.csv"
    lindblad.write_snapshots(path, snaps)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(lindblad.SNAPSHOT_HEADER)
    first = [float(x) for x in lines[1].split(",")]
    assert first[1] == 1.0 and first[-1] == 2.0


def test_trace_distance():
    a = np.diag([1.0, 0.0])
    b = np.diag([0.0, 1.0])
    assert lindblad.trace_distance(a, b) == pytest.approx(1.0)
    assert lindblad.trace_distance(a, a) == 0.0
