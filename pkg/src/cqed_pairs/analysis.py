"""Event statistics and photon-pair tomography.

Pair qubits use ``|+> = 0`` and ``|-> = 1`` for (mode-1 photon) x (mode-2
photon). Analyzer outcome ``u`` is the first basis column, ``v`` the second.
"""
from __future__ import annotations

import dataclasses
import enum
import itertools
import math
from collections import Counter
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import hilbert, trajectory
from .hilbert import AtomLevel
from .model import SystemParams
from .trajectory import TrajectoryResult


class InsufficientDataError(RuntimeError):
    """Too few coincidences to reconstruct the pair state."""


class EventClass(enum.Enum):
    ENTANGLED_PAIR = "i"
    SEPARABLE_CAVITY_PAIR = "ii"
    ONE_CAVITY_ONE_SPONT = "iii"
    TWO_SPONT = "iv"
    INCOMPLETE = "incomplete"


DEFAULT_THRESHOLD = 0.5


def _mode1_jump(record: TrajectoryResult):
    for ev in record.jumps:
        if ev.is_cavity and ev.channel.mode == 1:
            return ev
    raise ValueError("two cavity jumps but none from mode 1")


def classify(record: TrajectoryResult, threshold: float = DEFAULT_THRESHOLD) -> EventClass:
    """Event class of one trajectory.

    Two cavity jumps are split by the ``1'`` population right after the
    mode-1 jump: above ``threshold`` the first photon left before the atom
    was transferred, which gives a separable pair.
    """
    if not record.terminated_cleanly:
        return EventClass.INCOMPLETE
    if len(record.jumps) != 2:
        raise ValueError(f"clean record with {len(record.jumps)} jumps; expected exactly 2")
    n_cavity = sum(ev.is_cavity for ev in record.jumps)
    if n_cavity == 0:
        return EventClass.TWO_SPONT
    if n_cavity == 1:
        return EventClass.ONE_CAVITY_ONE_SPONT
    modes = sorted(ev.channel.mode for ev in record.jumps)
    if modes != [1, 2]:
        raise ValueError(f"two cavity jumps from modes {modes}; expected one per mode")
    if _mode1_jump(record).population_intermediate > threshold:
        return EventClass.SEPARABLE_CAVITY_PAIR
    return EventClass.ENTANGLED_PAIR


def event_probabilities(
    ensemble: Iterable[TrajectoryResult], threshold: float = DEFAULT_THRESHOLD
) -> dict[EventClass, tuple[float, float]]:
    """Relative frequency and binomial standard error of every class."""
    return probabilities_from_tally(Counter(classify(r, threshold) for r in ensemble))


def probabilities_from_tally(tally: Mapping[EventClass, int]) -> dict[EventClass, tuple[float, float]]:
    n = sum(tally.values())
    if n == 0:
        raise ValueError("empty ensemble")
    ps = {cls: tally.get(cls, 0) / n for cls in EventClass}
    # largest class absorbs the rounding so the exact float sum is 1
    big = max(EventClass, key=lambda c: tally.get(c, 0))
    rest = [p for c, p in ps.items() if c is not big]
    p = 1.0 - math.fsum(rest)
    while (total := math.fsum([*rest, p])) != 1.0:
        p = math.nextafter(p, 2.0 if total < 1.0 else 0.0)
    ps[big] = p
    return {cls: (p, math.sqrt(p * (1.0 - p) / n)) for cls, p in ps.items()}


# ---------------------------------------------------------------------------
# analyzers

BASES = {
    "Z": np.eye(2, dtype=complex),
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0),
    "Y": np.array([[1, 1], [1j, -1j]], dtype=complex) / math.sqrt(2.0),
}


@dataclasses.dataclass(frozen=True, eq=False)
class AnalyzerSetting:
    """Polarization bases (columns over the ``+, -`` amplitudes) for the two arms."""

    basis1: np.ndarray
    basis2: np.ndarray
    label: str = ""

    def __post_init__(self):
        for b in (self.basis1, self.basis2):
            b = np.asarray(b)
            if b.shape != (2, 2) or not np.allclose(b.conj().T @ b, np.eye(2), atol=1e-12, rtol=0):
                raise ValueError("analyzer basis must be a 2x2 matrix with orthonormal columns")

    @classmethod
    def named(cls, first: str, second: str) -> "AnalyzerSetting":
        return cls(BASES[first], BASES[second], first + second)

    @property
    def analyzers(self) -> tuple[np.ndarray, np.ndarray]:
        return self.basis1, self.basis2

    def projectors(self) -> np.ndarray:
        """Outcome projectors ``(uu, uv, vu, vv)`` on the pair space, shape (4, 4, 4)."""
        out = []
        for a, b in itertools.product(range(2), range(2)):
            vec = np.kron(self.basis1[:, a], self.basis2[:, b])
            out.append(np.outer(vec, vec.conj()))
        return np.array(out)


def tomography_settings() -> tuple[AnalyzerSetting, ...]:
    """The nine pairings of the circular and two linear bases."""
    return tuple(AnalyzerSetting.named(a, b) for a, b in itertools.product("ZXY", repeat=2))


@dataclasses.dataclass(eq=False)
class CoincidenceCounts:
    settings: tuple[AnalyzerSetting, ...]
    counts: np.ndarray  # (n_settings, 4): uu, uv, vu, vv
    n_traj: int = 0
    n_discarded: int = 0  # clean runs with a spontaneous photon
    n_incomplete: int = 0
    events: Mapping[EventClass, int] = dataclasses.field(default_factory=dict)  # all runs, every class

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.shape != (len(self.settings), 4):
            raise ValueError("counts must have one row of 4 outcomes per setting")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def n_coincidences(self) -> int:
        """Smallest per-setting coincidence total."""
        return int(self.totals.min())

    def rows(self):
        for s, c in zip(self.settings, self.counts):
            yield (s.label, *(int(x) if float(x).is_integer() else float(x) for x in c))


COUNT_HEADER = ("setting", "uu", "uv", "vu", "vv")


def born_probabilities(rho: np.ndarray, setting: AnalyzerSetting) -> np.ndarray:
    probs = np.real(np.einsum("kij,ji->k", setting.projectors(), rho))
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def synthetic_counts(
    rho: np.ndarray,
    n_per_setting: int,
    rng: np.random.Generator | None = None,
    settings: Sequence[AnalyzerSetting] | None = None,
) -> CoincidenceCounts:
    """Counts drawn from the Born rule of ``rho``; exact expectations when ``rng`` is None."""
    settings = tuple(settings or tomography_settings())
    rows = []
    for s in settings:
        p = born_probabilities(rho, s)
        rows.append(n_per_setting * p if rng is None else rng.multinomial(n_per_setting, p))
    return CoincidenceCounts(settings, np.array(rows), n_traj=n_per_setting)


# ---------------------------------------------------------------------------
# pair states

PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
PAULI2 = np.array([np.kron(a, b) for a, b in itertools.product(PAULI, repeat=2)])

PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) / math.sqrt(2.0)


def product_state(o1: int, o2: int) -> np.ndarray:
    psi = np.zeros(4, dtype=complex)
    psi[2 * o1 + o2] = 1.0
    return psi


def density(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, np.conj(psi))


def _design(settings: Sequence[AnalyzerSetting]) -> np.ndarray:
    """Outcome probabilities as linear functions of the 16 Pauli coefficients."""
    return np.concatenate([np.real(np.einsum("kij,pji->kp", s.projectors(), PAULI2)) / 4.0 for s in settings])


def informationally_complete(settings: Sequence[AnalyzerSetting]) -> bool:
    return bool(np.linalg.matrix_rank(_design(settings)) == 16)


def reconstruct_pair_state(counts: CoincidenceCounts, project: bool = True) -> np.ndarray:
    """Linear inversion over the 16 two-qubit Pauli products.

    Outcome frequencies of each setting are fitted by least squares; with an
    informationally complete set of settings and exact data this reproduces
    the state. ``project`` clips negative eigenvalues and renormalizes.
    """
    totals = counts.totals
    if np.any(totals <= 0):
        empty = [s.label or str(k) for k, s in enumerate(counts.settings) if totals[k] <= 0]
        raise InsufficientDataError(
            f"no coincidences for settings {', '.join(empty)}; at least 1 per setting is required"
        )
    freqs = (counts.counts / totals[:, None]).ravel()
    design = _design(counts.settings)
    if np.linalg.matrix_rank(design) < 16:
        raise ValueError("analyzer settings are not informationally complete")
    coeffs, *_ = np.linalg.lstsq(design, freqs, rcond=None)
    rho = np.einsum("p,pij->ij", coeffs, PAULI2) / 4.0
    rho = 0.5 * (rho + rho.conj().T)
    return project_physical(rho) if project else rho


def project_physical(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise InsufficientDataError("reconstructed state has no positive part")
    w = w / w.sum()
    return (v * w) @ v.conj().T


def correlation_tensor(rho: np.ndarray) -> np.ndarray:
    """``T[i, j] = Tr(rho sigma_i x sigma_j)`` for i, j in x, y, z."""
    t = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            t[i, j] = np.real(np.trace(rho @ np.kron(PAULI[i + 1], PAULI[j + 1])))
    return t


def fidelity(rho: np.ndarray) -> float:
    return float(np.real(PSI_PLUS.conj() @ rho @ PSI_PLUS))


def chsh_fixed(rho: np.ndarray) -> float:
    """CHSH value at the settings optimal for ``PSI_PLUS``."""
    t = correlation_tensor(rho)
    return float(math.sqrt(2.0) * abs(t[0, 0] - t[2, 2]))


def chsh_max(rho: np.ndarray) -> float:
    """Largest CHSH value over all analyzer settings."""
    t = correlation_tensor(rho)
    m = np.sort(np.linalg.eigvalsh(t.T @ t))[::-1]
    return 2.0 * math.sqrt(max(m[0] + m[1], 0.0))


@dataclasses.dataclass(frozen=True, eq=False)
class Characterization:
    rho: np.ndarray
    fidelity: float
    fidelity_err: float
    s_fixed: float
    s_err: float
    s_max: float
    n_coinc: int

    def row(self) -> dict[str, float]:
        return {
            "F": self.fidelity,
            "F_err": self.fidelity_err,
            "S_fixed": self.s_fixed,
            "S_err": self.s_err,
            "S_max": self.s_max,
            "n_coinc": self.n_coinc,
        }


CHARACTERIZE_HEADER = ("F", "F_err", "S_fixed", "S_err", "S_max", "n_coinc")


def characterize_counts(counts: CoincidenceCounts, n_boot: int = 200, seed: int = 0) -> Characterization:
    """Reconstruct, evaluate F and S, and estimate errors by parametric bootstrap."""
    rho = reconstruct_pair_state(counts)
    f, s = fidelity(rho), chsh_fixed(rho)
    rng = trajectory.make_rng(np.random.SeedSequence([seed, 0xB007]))
    totals = counts.totals
    probs = counts.counts / totals[:, None]
    fs, ss = [], []
    for _ in range(n_boot):
        resampled = np.array([rng.multinomial(int(round(n)), p) for n, p in zip(totals, probs)])
        try:
            r = reconstruct_pair_state(dataclasses.replace(counts, counts=resampled))
        except InsufficientDataError:
            continue
        fs.append(fidelity(r))
        ss.append(chsh_fixed(r))
    f_err = float(np.std(fs, ddof=1)) if len(fs) > 1 else math.nan
    s_err = float(np.std(ss, ddof=1)) if len(ss) > 1 else math.nan
    return Characterization(rho, f, f_err, s, s_err, chsh_max(rho), counts.n_coincidences)


def characterize_state(rho: np.ndarray) -> Characterization:
    """Exact characterization of a known pair state (zero errors, no coincidences)."""
    return Characterization(rho, fidelity(rho), 0.0, chsh_fixed(rho), 0.0, chsh_max(rho), 0)


def rho_rows(rho: np.ndarray) -> list[tuple[int, float, float]]:
    """Row-major ``(index, re, im)`` triples."""
    return [(k, float(z.real), float(z.imag)) for k, z in enumerate(np.asarray(rho).ravel())]


def pair_state_from_final(psi: np.ndarray) -> np.ndarray:
    """Pair density matrix of the two-photon ground-state sector of ``psi``, renormalized."""
    amps = np.zeros(4, dtype=complex)
    for o1, o2 in itertools.product(range(2), repeat=2):
        occ = [0, 0, 0, 0]
        occ[o1] = 1
        occ[2 + o2] = 1
        amps[2 * o1 + o2] = psi[hilbert.basis_index(AtomLevel.GROUND, occ)]
    norm = np.vdot(amps, amps).real
    if norm == 0.0:
        raise InsufficientDataError("state has no two-photon component")
    return density(amps / math.sqrt(norm))


# ---------------------------------------------------------------------------
# simulated coincidence detection

PAIR_MODELS = ("branch", "coherent")


def _cavity_outcomes(record: TrajectoryResult) -> tuple[int, int]:
    out = {ev.channel.mode: ev.channel.outcome for ev in record.jumps if ev.is_cavity}
    return out[1], out[2]


def _tally_runs(chunks: Iterable[Sequence[TrajectoryResult]], threshold: float):
    """Split an ensemble into coincidences and a tally of every class."""
    pairs = []
    tally: Counter = Counter()
    for r in itertools.chain.from_iterable(chunks):
        cls = classify(r, threshold)
        tally[cls] += 1
        if cls in (EventClass.ENTANGLED_PAIR, EventClass.SEPARABLE_CAVITY_PAIR):
            pairs.append((cls, _cavity_outcomes(r)))
    return pairs, tally


def _discarded(tally: Mapping[EventClass, int]) -> int:
    return tally.get(EventClass.ONE_CAVITY_ONE_SPONT, 0) + tally.get(EventClass.TWO_SPONT, 0)


def branch_pair_states(
    pairs: Sequence[tuple[EventClass, tuple[int, int]]]
) -> Mapping[tuple[str, int, int], int]:
    """Emitted pair state per coincidence: ``PSI_PLUS`` for (i), the detected product for (ii)."""
    tally: Counter = Counter()
    for cls, (o1, o2) in pairs:
        if cls is EventClass.ENTANGLED_PAIR:
            tally[("psi_plus", 0, 0)] += 1
        else:
            tally[("product", o1, o2)] += 1
    return dict(sorted(tally.items()))


def _state_of(key: tuple[str, int, int]) -> np.ndarray:
    kind, o1, o2 = key
    return density(PSI_PLUS if kind == "psi_plus" else product_state(o1, o2))


def _setting_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, 0xC0, index]).generate_state(1, np.uint64)[0] >> 1)


def accumulate_coincidences(
    params: SystemParams,
    settings: Sequence[AnalyzerSetting] | None,
    n_traj: int,
    seed: int,
    pair_model: str = "coherent",
    threshold: float = DEFAULT_THRESHOLD,
    threads: int = 1,
) -> CoincidenceCounts:
    """Simulated coincidence counts for each analyzer setting.

    ``pair_model="coherent"`` runs ``n_traj`` trajectories per setting with the
    cavity jump operators rotated into the analyzer bases and counts which
    rotated channel fired in each mode. ``pair_model="branch"`` runs one
    circularly resolved ensemble shared by all settings; each coincidence
    emits ``PSI_PLUS`` if classified (i) and the detected circular product
    state if classified (ii), and analyzer outcomes are drawn from the Born
    rule of that state.
    """
    settings = tuple(settings or tomography_settings())
    if pair_model not in PAIR_MODELS:
        raise ValueError(f"pair_model must be one of {PAIR_MODELS}, got {pair_model!r}")
    if pair_model == "coherent":
        rows = []
        events: Counter = Counter()
        for k, s in enumerate(settings):
            res = trajectory.iter_ensemble(params, n_traj, _setting_seed(seed, k), s.analyzers, threads=threads)
            pairs, tally = _tally_runs(res, threshold)
            events.update(tally)
            row = np.zeros(4, dtype=np.int64)
            for _, (o1, o2) in pairs:
                row[2 * o1 + o2] += 1
            rows.append(row)
        return CoincidenceCounts(
            settings,
            np.array(rows),
            n_traj * len(settings),
            _discarded(events),
            events.get(EventClass.INCOMPLETE, 0),
            dict(events),
        )
    res = trajectory.iter_ensemble(params, n_traj, seed, threads=threads)
    pairs, events = _tally_runs(res, threshold)
    counts = branch_counts(
        branch_pair_states(pairs), settings, seed, n_traj, _discarded(events), events.get(EventClass.INCOMPLETE, 0)
    )
    return dataclasses.replace(counts, events=dict(events))


def branch_counts(
    states: Mapping[tuple[str, int, int], int],
    settings: Sequence[AnalyzerSetting],
    seed: int,
    n_traj: int = 0,
    n_discarded: int = 0,
    n_incomplete: int = 0,
) -> CoincidenceCounts:
    """Born-rule analyzer outcomes for a tally of emitted pair states."""
    rng = trajectory.make_rng(np.random.SeedSequence([seed, 0xA11A]))
    rows = []
    for s in settings:
        tally = np.zeros(4, dtype=np.int64)
        for key, n in states.items():
            tally += rng.multinomial(n, born_probabilities(_state_of(key), s))
        rows.append(tally)
    return CoincidenceCounts(tuple(settings), np.array(rows), n_traj, n_discarded, n_incomplete)
