"""Physical model: parameters, pulse envelopes, Hamiltonian and decay channels.

All frequencies are in units of the peak vacuum Rabi frequency ``g`` and all
times in units of ``1/g``. The Hamiltonian is written in the rotating frame
where the atomic level energies are

    E(|0''_0>) = 0,  E(|1'_{+-1}>) = -delta2,  E(|0_0>) = -(delta1 + delta2)

and photons carry no energy, so that the two-photon resonance
``delta1 = -delta2`` puts ``|I>`` and ``|E+>`` at the same energy.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from . import hilbert
from .hilbert import DIM, AtomLevel, ModeLabel

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
DEFAULT_FWHM_FRACTION = 0.27
DEFAULT_T_MAX_CEILING = 2.0e4


class ParameterError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class PulsePair:
    """Two Gaussian coupling envelopes in counterintuitive order.

    Mode 2 peaks first at ``t_total/2 - delay/2``, mode 1 follows at
    ``t_total/2 + delay/2``. Both are hard-gated to ``[0, t_total]``.
    ``fwhm=None`` means ``0.27 * t_total``; ``delay=None`` means ``fwhm``.
    """

    t_total: float = 100.0
    fwhm: float | None = None
    delay: float | None = None
    amplitude1: float = 1.0
    amplitude2: float = 1.0

    def __post_init__(self):
        if self.t_total <= 0:
            raise ParameterError(f"t_total must be positive, got {self.t_total}")
        if self.fwhm is None:
            object.__setattr__(self, "fwhm", DEFAULT_FWHM_FRACTION * self.t_total)
        if self.fwhm <= 0:
            raise ParameterError(f"fwhm must be positive, got {self.fwhm}")
        if self.delay is None:
            object.__setattr__(self, "delay", self.fwhm)
        if self.amplitude1 < 0 or self.amplitude2 < 0:
            raise ParameterError("pulse amplitudes must be non-negative")

    @property
    def sigma(self) -> float:
        return self.fwhm * FWHM_TO_SIGMA

    @property
    def peak1(self) -> float:
        return 0.5 * self.t_total + 0.5 * self.delay

    @property
    def peak2(self) -> float:
        return 0.5 * self.t_total - 0.5 * self.delay


def pulse_amplitude(t: float, which: int, pulses: PulsePair) -> float:
    """Coupling ``g_1(t)`` or ``g_2(t)``; exactly zero outside ``[0, t_total]``."""
    if which == 1:
        amp, peak = pulses.amplitude1, pulses.peak1
    elif which == 2:
        amp, peak = pulses.amplitude2, pulses.peak2
    else:
        raise ValueError(f"which must be 1 or 2, got {which!r}")
    if t < 0.0 or t > pulses.t_total:
        return 0.0
    x = (t - peak) / pulses.sigma
    return amp * math.exp(-0.5 * x * x)


def pulse_amplitudes(times: np.ndarray, pulses: PulsePair) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`pulse_amplitude` for both modes."""
    times = np.asarray(times, dtype=float)
    gate = (times >= 0.0) & (times <= pulses.t_total)
    s = pulses.sigma
    g1 = pulses.amplitude1 * np.exp(-0.5 * ((times - pulses.peak1) / s) ** 2)
    g2 = pulses.amplitude2 * np.exp(-0.5 * ((times - pulses.peak2) / s) ** 2)
    return np.where(gate, g1, 0.0), np.where(gate, g2, 0.0)


@dataclasses.dataclass(frozen=True)
class SystemParams:
    """Rates, detunings, pulses and integration controls.

    ``t_max=None`` resolves to ``t_total + 10/min(kappa, gamma)`` (ignoring
    zero rates), capped at ``t_max_ceiling``.
    """

    kappa: float = 1.0
    gamma: float = 0.01
    delta1: float = 0.0
    delta2: float = 0.0
    pulses: PulsePair = dataclasses.field(default_factory=PulsePair)
    dt: float = 1e-3
    t_max: float | None = None
    t_max_ceiling: float = DEFAULT_T_MAX_CEILING
    g: float = 1.0

    def __post_init__(self):
        if self.kappa < 0 or self.gamma < 0:
            raise ParameterError("kappa and gamma must be non-negative")
        if self.dt <= 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.g != 1.0:
            raise ParameterError("g sets the unit of frequency and must be 1")
        if self.t_max is None:
            rates = [r for r in (self.kappa, self.gamma) if r > 0]
            t_max = self.t_total + 10.0 / min(rates) if rates else math.inf
            object.__setattr__(self, "t_max", min(t_max, self.t_max_ceiling))
        if self.t_max < self.t_total:
            raise ParameterError(f"t_max={self.t_max} is shorter than t_total={self.t_total}")

    @property
    def t_total(self) -> float:
        return self.pulses.t_total

    @property
    def n_steps(self) -> int:
        """Number of integrator steps needed to reach ``t_max``."""
        return int(math.ceil(self.t_max / self.dt - 1e-9))

    @classmethod
    def create(cls, *, t_total=100.0, fwhm=None, delay=None, amplitude1=1.0, amplitude2=1.0, **kwargs):
        pulses = PulsePair(t_total=t_total, fwhm=fwhm, delay=delay, amplitude1=amplitude1, amplitude2=amplitude2)
        return cls(pulses=pulses, **kwargs)

    def updated(self, **changes) -> "SystemParams":
        """Copy with fields changed; pulse fields may be given by name.

        Two derived names are accepted as well: ``detuning`` sets
        ``delta1 = x, delta2 = -x`` and ``two_photon_deviation`` sets
        ``delta2 = -delta1 + x``. ``t_max`` is re-resolved unless given.
        """
        pulse_fields = {f.name for f in dataclasses.fields(PulsePair)}
        own_fields = {f.name for f in dataclasses.fields(SystemParams)} - {"pulses"}
        pulse_changes, own_changes = {}, {}
        for name, value in changes.items():
            if name in pulse_fields:
                pulse_changes[name] = value
            elif name in own_fields:
                own_changes[name] = value
            elif name not in ("detuning", "two_photon_deviation"):
                raise ParameterError(f"unknown parameter {name!r}")
        if "detuning" in changes:
            own_changes["delta1"] = changes["detuning"]
            own_changes["delta2"] = -changes["detuning"]
        if "two_photon_deviation" in changes:
            d1 = own_changes.get("delta1", self.delta1)
            own_changes["delta2"] = -d1 + changes["two_photon_deviation"]
        pulses = self.pulses
        if pulse_changes:
            kw = dataclasses.asdict(pulses)
            kw.update(pulse_changes)
            pulses = PulsePair(**kw)
        if "t_max" not in own_changes and self.t_max_was_default:
            own_changes["t_max"] = None
        return dataclasses.replace(self, pulses=pulses, **own_changes)

    @property
    def t_max_was_default(self) -> bool:
        rates = [r for r in (self.kappa, self.gamma) if r > 0]
        default = self.t_total + 10.0 / min(rates) if rates else math.inf
        return self.t_max == min(default, self.t_max_ceiling)


# ---------------------------------------------------------------------------
# operators


def lowering(transition: int, polarization: str) -> sp.csr_matrix:
    """Atomic lowering operator ``S_{i alpha}``."""
    pairs = {
        (1, "+"): (AtomLevel.M_MINUS, AtomLevel.G2),
        (1, "-"): (AtomLevel.M_PLUS, AtomLevel.G2),
        (2, "+"): (AtomLevel.GROUND, AtomLevel.M_PLUS),
        (2, "-"): (AtomLevel.GROUND, AtomLevel.M_MINUS),
    }
    try:
        to, frm = pairs[(transition, polarization)]
    except KeyError:
        raise ValueError(f"no transition ({transition}, {polarization!r})") from None
    return hilbert.atom_operator(to, frm)


def coupling_operator(which: int) -> sp.csr_matrix:
    """``sum_alpha (a_{i alpha}^dag S_{i alpha} + h.c.)`` for longitudinal mode ``which``."""
    op = sp.csr_matrix((DIM, DIM), dtype=complex)
    for pol in "+-":
        term = hilbert.creation((which, pol)) @ lowering(which, pol)
        op = op + term + term.conj().T
    return op.tocsr()


def excitation_operator() -> sp.csr_matrix:
    """Excitation number: 2 for ``|0_0>``, 1 for ``|1'>``, plus photon count."""
    n = 2.0 * hilbert.atom_projector(AtomLevel.G2)
    n = n + hilbert.atom_projector(AtomLevel.M_MINUS) + hilbert.atom_projector(AtomLevel.M_PLUS)
    for mode in hilbert.MODES:
        n = n + hilbert.number(mode)
    return n.tocsr()


def level_energies(delta1: float, delta2: float) -> np.ndarray:
    e = np.empty(4)
    e[AtomLevel.G2] = -(delta1 + delta2)
    e[AtomLevel.M_MINUS] = -delta2
    e[AtomLevel.M_PLUS] = -delta2
    e[AtomLevel.GROUND] = 0.0
    return e


def detuning_diagonal(params: SystemParams) -> np.ndarray:
    return level_energies(params.delta1, params.delta2)[hilbert.ATOM_OF_INDEX]


class Channel(NamedTuple):
    """One jump channel.

    ``kind`` is ``"cavity"`` or ``"spontaneous"``; ``mode`` is the longitudinal
    mode or the transition (1 or 2); ``outcome`` indexes the polarization
    basis vector (0 or 1). For unrotated cavity channels and for all
    spontaneous channels outcome 0 is ``+`` and 1 is ``-``.
    """

    kind: str
    mode: int
    outcome: int

    @property
    def is_cavity(self) -> bool:
        return self.kind == "cavity"

    @property
    def name(self) -> str:
        prefix = "a" if self.is_cavity else "S"
        return f"{prefix}{self.mode}{'+-'[self.outcome]}"


class JumpChannel(NamedTuple):
    channel: Channel
    operator: sp.csr_matrix  # bare operator, without the rate
    rate: float

    @property
    def scaled(self) -> sp.csr_matrix:
        return math.sqrt(self.rate) * self.operator


CIRCULAR = np.eye(2, dtype=complex)


def analyzer_operator(mode: int, basis: np.ndarray, outcome: int) -> sp.csr_matrix:
    """Annihilation operator projecting mode ``mode`` onto basis column ``outcome``.

    ``basis`` is a 2x2 matrix whose columns are the analyzer vectors over the
    ``(+, -)`` amplitudes.
    """
    u = np.asarray(basis, dtype=complex)[:, outcome]
    op = np.conj(u[0]) * hilbert.annihilation((mode, "+")) + np.conj(u[1]) * hilbert.annihilation((mode, "-"))
    return op.tocsr()


def jump_operators(params: SystemParams, analyzers: Sequence[np.ndarray] | None = None) -> list[JumpChannel]:
    """Four cavity channels followed by four spontaneous channels.

    ``analyzers`` optionally gives the polarization basis (2x2, columns
    orthonormal) used to unravel cavity decay of mode 1 and mode 2.
    """
    if analyzers is None:
        analyzers = (CIRCULAR, CIRCULAR)
    out = []
    for mode in (1, 2):
        for k in (0, 1):
            op = analyzer_operator(mode, analyzers[mode - 1], k)
            out.append(JumpChannel(Channel("cavity", mode, k), op, params.kappa))
    for transition in (1, 2):
        for k, pol in enumerate("+-"):
            out.append(JumpChannel(Channel("spontaneous", transition, k), lowering(transition, pol), params.gamma))
    return out


class ModelOperators(NamedTuple):
    detuning: np.ndarray  # real diagonal of the detuning Hamiltonian
    coupling1: sp.csr_matrix
    coupling2: sp.csr_matrix
    decay: np.ndarray  # real diagonal of sum_m rate_m L_m^dag L_m


@functools.lru_cache(maxsize=64)
def model_operators(params: SystemParams) -> ModelOperators:
    decay = np.zeros(DIM)
    for jc in jump_operators(params):
        decay += jc.rate * np.real((jc.operator.conj().T @ jc.operator).diagonal())
    return ModelOperators(detuning_diagonal(params), coupling_operator(1), coupling_operator(2), decay)


def hamiltonian(t: float, params: SystemParams) -> sp.csr_matrix:
    """Hermitian rotating-frame Hamiltonian at time ``t``."""
    ops = model_operators(params)
    g1 = pulse_amplitude(t, 1, params.pulses)
    g2 = pulse_amplitude(t, 2, params.pulses)
    return (sp.diags(ops.detuning.astype(complex)) + g1 * ops.coupling1 + g2 * ops.coupling2).tocsr()


def effective_hamiltonian(t: float, params: SystemParams) -> sp.csr_matrix:
    """Non-Hermitian ``H(t) - (i/2) sum_m L_m^dag L_m``."""
    ops = model_operators(params)
    return (hamiltonian(t, params) - 0.5j * sp.diags(ops.decay)).tocsr()


# ---------------------------------------------------------------------------
# special states


def mixing_angle(g1: float, g2: float) -> float:
    """``theta`` with ``tan(theta) = sqrt(2) g1 / g2``."""
    if g1 == 0 and g2 == 0:
        raise ValueError("mixing angle is undefined when both couplings vanish")
    return math.atan2(math.sqrt(2.0) * g1, g2)


def _initial() -> np.ndarray:
    return hilbert.ket(AtomLevel.G2)


def _one_photon(sign: int) -> np.ndarray:
    psi = hilbert.ket(AtomLevel.M_MINUS, (1, 0, 0, 0)) + sign * hilbert.ket(AtomLevel.M_PLUS, (0, 1, 0, 0))
    return psi / math.sqrt(2.0)


def _two_photon(sign: int) -> np.ndarray:
    psi = hilbert.ket(AtomLevel.GROUND, (1, 0, 0, 1)) + sign * hilbert.ket(AtomLevel.GROUND, (0, 1, 1, 0))
    return psi / math.sqrt(2.0)


def special_state(label: str, theta: float | None = None) -> np.ndarray:
    """``I``, ``B``, ``D``, ``E_PLUS``, ``E_MINUS`` or ``LAMBDA`` (needs ``theta``)."""
    label = label.upper()
    if label == "I":
        return _initial()
    if label == "B":
        return _one_photon(+1)
    if label == "D":
        return _one_photon(-1)
    if label in ("E_PLUS", "E+"):
        return _two_photon(+1)
    if label in ("E_MINUS", "E-"):
        return _two_photon(-1)
    if label == "LAMBDA":
        if theta is None:
            raise ValueError("LAMBDA needs a mixing angle")
        return math.cos(theta) * _initial() - math.sin(theta) * _two_photon(+1)
    raise ValueError(f"unknown special state {label!r}")


MANIFOLD_LABELS = ("I", "B", "D", "E_PLUS", "E_MINUS")


def manifold_basis() -> np.ndarray:
    """5 x 64 matrix whose rows are the manifold states."""
    return np.array([special_state(lbl) for lbl in MANIFOLD_LABELS])


def manifold_populations(psi_or_rho: np.ndarray) -> np.ndarray:
    basis = manifold_basis()
    if psi_or_rho.ndim == 1:
        return np.abs(basis.conj() @ psi_or_rho) ** 2
    return np.real(np.einsum("ai,ij,aj->a", basis.conj(), psi_or_rho, basis))


__all__ = [
    "AtomLevel",
    "Channel",
    "JumpChannel",
    "ModeLabel",
    "ParameterError",
    "PulsePair",
    "SystemParams",
    "effective_hamiltonian",
    "excitation_operator",
    "hamiltonian",
    "jump_operators",
    "mixing_angle",
    "model_operators",
    "pulse_amplitude",
    "special_state",
]
