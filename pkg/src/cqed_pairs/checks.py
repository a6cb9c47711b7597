"""Analytic invariant checks behind ``cqed-pairs validate``.

Every check returns a :class:`CheckResult`; the worst deviation found is
reported next to the tolerance it was held to.
"""
from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from . import analysis, hilbert, lindblad, model
from .model import PulsePair, SystemParams

LevelEnergies = Callable[[float, float], np.ndarray]


class CheckResult(NamedTuple):
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


def _result(name: str, value: float, tol: float, detail: str = "") -> CheckResult:
    return CheckResult(name, bool(value < tol), float(value), tol, detail)


def _random_point(rng: np.random.Generator) -> tuple[SystemParams, float]:
    t_total = float(rng.uniform(20.0, 200.0))
    pulses = PulsePair(
        t_total=t_total,
        fwhm=float(rng.uniform(0.05, 0.4) * t_total),
        delay=float(rng.uniform(0.0, 0.4) * t_total),
        amplitude1=float(rng.uniform(0.2, 3.0)),
        amplitude2=float(rng.uniform(0.2, 3.0)),
    )
    d = float(rng.uniform(-20.0, 20.0))
    params = SystemParams(kappa=0.0, gamma=0.0, delta1=d, delta2=-d, pulses=pulses)
    while True:
        t = float(rng.uniform(0.0, t_total))
        g1, g2 = model.pulse_amplitude(t, 1, pulses), model.pulse_amplitude(t, 2, pulses)
        if g1 > 1e-6 or g2 > 1e-6:
            return params, t


def _manifold_block(h) -> tuple[np.ndarray, float]:
    """``H`` in the manifold basis and the norm of what leaks out of it."""
    basis = model.manifold_basis()
    hd = hilbert.as_dense(h)
    image = hd @ basis.T
    block = basis.conj() @ image
    leak = float(np.abs(image - basis.T @ block).max())
    return block, leak


def check_dark_state(n_points: int = 50, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    b = model.special_state("B")
    worst = 0.0
    for _ in range(n_points):
        params, t = _random_point(rng)
        g1, g2 = model.pulse_amplitude(t, 1, params.pulses), model.pulse_amplitude(t, 2, params.pulses)
        lam = model.special_state("LAMBDA", model.mixing_angle(g1, g2))
        h_lam = model.hamiltonian(t, params) @ lam
        worst = max(worst, abs(np.vdot(b, h_lam)), float(np.linalg.norm(h_lam)))
    return _result("dark_state", worst, 1e-12, f"{n_points} random (g1, g2, t) points")


def check_matrix_pattern(n_points: int = 100, seed: int = 2) -> CheckResult:
    """Coupling block on (I, B, D, E+, E-): only B-I, B-E+, D-E- are nonzero."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        params, t = _random_point(rng)
        g1, g2 = model.pulse_amplitude(t, 1, params.pulses), model.pulse_amplitude(t, 2, params.pulses)
        block, leak = _manifold_block(model.hamiltonian(t, params))
        expected = np.diag([0.0, -params.delta2, -params.delta2, 0.0, 0.0]).astype(complex)
        expected[1, 0] = expected[0, 1] = math.sqrt(2.0) * g1
        expected[1, 3] = expected[3, 1] = g2
        expected[2, 4] = expected[4, 2] = g2
        worst = max(worst, float(np.abs(np.abs(block) - np.abs(expected)).max()), leak)
        worst = max(worst, float(np.abs(block[expected == 0]).max(initial=0.0)))
    return _result("matrix_pattern", worst, 1e-12, f"{n_points} random parameter points")


def check_hermitian(n_points: int = 20, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        params, t = _random_point(rng)
        h = hilbert.as_dense(model.hamiltonian(t, params))
        worst = max(worst, float(np.abs(h - h.conj().T).max()))
    return _result("hermitian", worst, 1e-14)


def check_excitation_conservation(n_points: int = 20, seed: int = 4) -> CheckResult:
    """``[H, N] = 0`` and every jump operator lowers ``N`` by one."""
    rng = np.random.default_rng(seed)
    n_op = hilbert.as_dense(model.excitation_operator())
    worst = 0.0
    for _ in range(n_points):
        params, t = _random_point(rng)
        h = hilbert.as_dense(model.hamiltonian(t, params))
        worst = max(worst, float(np.abs(h @ n_op - n_op @ h).max()))
    for jc in model.jump_operators(SystemParams(kappa=1.0, gamma=1.0)):
        op = hilbert.as_dense(jc.operator)
        worst = max(worst, float(np.abs(n_op @ op - op @ n_op + op).max()))
    return _result("excitation_conservation", worst, 1e-14)


def check_effective_hamiltonian(seed: int = 5) -> CheckResult:
    """Anti-Hermitian part of ``H_eff`` is ``-(1/2) sum_m L_m^dag L_m``."""
    rng = np.random.default_rng(seed)
    params, t = _random_point(rng)
    params = params.updated(kappa=float(rng.uniform(0.1, 3.0)), gamma=float(rng.uniform(0.0, 0.5)))
    h_eff = hilbert.as_dense(model.effective_hamiltonian(t, params))
    target = sum(hilbert.as_dense(jc.scaled.conj().T @ jc.scaled) for jc in model.jump_operators(params))
    anti = 0.5j * (h_eff - h_eff.conj().T)
    return _result("effective_hamiltonian", float(np.abs(anti - 0.5 * target).max()), 1e-14)


def check_lindblad_trace(n_samples: int = 5, seed: int = 6) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_samples):
        params, t = _random_point(rng)
        params = params.updated(kappa=float(rng.uniform(0.1, 3.0)), gamma=float(rng.uniform(0.0, 0.5)))
        psi = hilbert.random_state(rng)
        drho = lindblad.lindblad_rhs(np.outer(psi, psi.conj()), t, params)
        worst = max(worst, abs(np.trace(drho)), float(np.abs(drho - drho.conj().T).max()))
    return _result("lindblad_trace", worst, 1e-12)


def _reference_populations(g1: float, g2: float, delta1: float, delta2: float, times: np.ndarray) -> np.ndarray:
    """Manifold populations from the 5-state interaction-picture equations."""

    def rhs(t, c):
        w1 = math.sqrt(2.0) * g1 * np.exp(-1j * delta1 * t)
        w2 = g2 * np.exp(1j * delta2 * t)
        h = np.zeros((5, 5), dtype=complex)
        h[1, 0] = w1
        h[1, 3] = w2
        h[2, 4] = w2
        h = h + h.conj().T
        return -1j * (h @ c)

    c0 = np.zeros(5, dtype=complex)
    c0[0] = 1.0
    sol = solve_ivp(rhs, (0.0, float(times[-1])), c0, method="DOP853", t_eval=times, rtol=1e-12, atol=1e-13)
    return np.abs(sol.y.T) ** 2


def check_frame_equivalence(
    level_energies: LevelEnergies = model.level_energies,
    g1: float = 0.7,
    g2: float = 1.1,
    delta: float = 5.0,
    t_end: float = 20.0,
) -> CheckResult:
    """Rotating-frame propagation of the full model against the interaction picture.

    ``level_energies`` builds the atomic diagonal from ``(delta1, delta2)``
    and can be swapped to test that a corrupted frame is caught.
    """
    delta1, delta2 = delta, -delta
    diag = np.asarray(level_energies(delta1, delta2))[hilbert.ATOM_OF_INDEX]
    h = np.diag(diag).astype(complex)
    h += g1 * hilbert.as_dense(model.coupling_operator(1)) + g2 * hilbert.as_dense(model.coupling_operator(2))
    times = np.linspace(0.0, t_end, 41)
    psi0 = model.special_state("I")
    step = scipy.linalg.expm(-1j * h * (times[1] - times[0]))
    pops = []
    psi = psi0
    for k in range(len(times)):
        if k:
            psi = step @ psi
        pops.append(model.manifold_populations(psi))
    ref = _reference_populations(g1, g2, delta1, delta2, times)
    err = float(np.abs(np.array(pops) - ref).max())
    return _result("frame_equivalence", err, 1e-8, f"g1={g1}, g2={g2}, delta1=-delta2={delta}")


def check_tomography_round_trip(n_states: int = 20, seed: int = 7) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_states):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        counts = analysis.synthetic_counts(rho, 1.0)
        back = analysis.reconstruct_pair_state(counts, project=False)
        worst = max(worst, float(np.abs(back - rho).max()))
    return _result("tomography_round_trip", worst, 1e-9, f"{n_states} random mixed states")


def run_checks(level_energies: LevelEnergies = model.level_energies) -> list[CheckResult]:
    return [
        check_dark_state(),
        check_matrix_pattern(),
        check_hermitian(),
        check_excitation_conservation(),
        check_effective_hamiltonian(),
        check_lindblad_trace(),
        check_frame_equivalence(level_energies),
        check_tomography_round_trip(),
    ]


CHECK_HEADER = ("check", "passed", "value", "tolerance", "detail")
