"""Monte Carlo wave-function trajectories.

A trajectory starts in ``|I> = |0_0> x |vacuum>`` and alternates between
renormalized no-jump evolution under the effective Hamiltonian and quantum
jumps. Time is discretized in steps of ``params.dt``. At step ``n`` the jump
probability is ``dp_n = dt * <psi_n| sum_m L_m^dag L_m |psi_n>``.

:func:`step` implements the textbook update with one uniform number per step.
The production path (:func:`run_trajectory`, :func:`run_ensemble`) draws a
single uniform ``u`` per no-jump segment instead and jumps at the first step
where the squared norm of the unnormalized no-jump state drops below
``1 - u``. Both agree with the master equation to first order in ``dt``.
Since the no-jump evolution from ``|I>`` does not depend on the random
numbers, an ensemble shares one pass over the segment before its first jump.

Child seeds are ``SeedSequence(master_seed, spawn_key=(k,))`` for trajectory
``k`` driving a Philox generator, so results do not depend on execution
order or thread count.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from . import _kernels, hilbert, model
from .hilbert import DIM, AtomLevel
from .model import Channel, SystemParams


class StepSizeError(RuntimeError):
    """Jump probability per step reached the 0.1 validity limit."""


@dataclasses.dataclass(frozen=True)
class JumpEvent:
    time: float
    channel: Channel
    post_jump_atom_populations: tuple[float, float, float, float]
    post_jump_mode2_excitation: float
    step: int = -1

    @property
    def is_cavity(self) -> bool:
        return self.channel.is_cavity

    @property
    def population_intermediate(self) -> float:
        """Post-jump population of the ``1'`` manifold."""
        p = self.post_jump_atom_populations
        return p[AtomLevel.M_MINUS] + p[AtomLevel.M_PLUS]


@dataclasses.dataclass(eq=False)
class TrajectoryResult:
    jumps: list[JumpEvent]
    terminated_cleanly: bool
    final_state: np.ndarray
    seed: object
    end_time: float = math.nan
    samples: np.ndarray | None = None  # states at the requested sample times

    def same_as(self, other: "TrajectoryResult") -> bool:
        """Bit-level equality of the record and the final state."""
        same_samples = (self.samples is None and other.samples is None) or (
            self.samples is not None and other.samples is not None
            and self.samples.tobytes() == other.samples.tobytes()
        )
        return (
            self.jumps == other.jumps
            and self.terminated_cleanly == other.terminated_cleanly
            and self.final_state.tobytes() == other.final_state.tobytes()
            and same_samples
        )


class _Jump(NamedTuple):
    channel: Channel
    matrix: np.ndarray  # dense sqrt(rate) * L

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ psi


class _Engine(NamedTuple):
    params: SystemParams
    h: np.ndarray
    pairs1: np.ndarray
    pairs2: np.ndarray
    g1grid: np.ndarray
    g2grid: np.ndarray
    rdiag: np.ndarray
    n_fast: int
    decay: np.ndarray
    excitation: np.ndarray
    n_stop: int
    jumps: tuple[_Jump, ...]


def _pairs(coupling) -> np.ndarray:
    upper = coupling.tocoo()
    mask = upper.row < upper.col
    return np.ascontiguousarray(np.stack([upper.row[mask], upper.col[mask]], axis=1).astype(np.int64))


def _jumps(params: SystemParams, analyzers) -> tuple[_Jump, ...]:
    return tuple(
        _Jump(jc.channel, np.ascontiguousarray(hilbert.as_dense(jc.scaled), dtype=complex))
        for jc in model.jump_operators(params, analyzers)
        if jc.rate != 0.0
    )


@functools.lru_cache(maxsize=16)
def _base_engine(params: SystemParams) -> _Engine:
    ops = model.model_operators(params)
    dt = params.dt
    h = ops.detuning - 0.5j * ops.decay
    n_fast = int(math.floor(params.t_total / dt)) + 1
    half_times = np.arange(2 * n_fast + 1) * (0.5 * dt)
    g1grid, g2grid = model.pulse_amplitudes(half_times, params.pulses)
    z = -1j * h * dt
    rdiag = 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
    excitation = np.real(model.excitation_operator().diagonal())
    return _Engine(
        params, h.astype(np.complex128), _pairs(ops.coupling1), _pairs(ops.coupling2),
        g1grid, g2grid, rdiag.astype(np.complex128), n_fast, ops.decay.astype(float), excitation,
        params.n_steps, _jumps(params, None),
    )


def _engine(params: SystemParams, analyzers=None) -> _Engine:
    base = _base_engine(params)
    if analyzers is None:
        return base
    return base._replace(jumps=_jumps(params, analyzers))


def _closure(engine: _Engine, psi: np.ndarray) -> tuple[int, ...]:
    """Basis states reachable from the support of ``psi`` through the couplings."""
    return _closure_of(engine.params, tuple(np.flatnonzero(psi).tolist()))


@functools.lru_cache(maxsize=1024)
def _closure_of(params: SystemParams, support: tuple[int, ...]) -> tuple[int, ...]:
    engine = _base_engine(params)
    active = set(support)
    edges = np.concatenate([engine.pairs1, engine.pairs2]).tolist()
    grown = True
    while grown:
        grown = False
        for p, q in edges:
            if (p in active) != (q in active):
                active.update((int(p), int(q)))
                grown = True
    return tuple(sorted(active))


@functools.lru_cache(maxsize=256)
def _subspace(engine_key: SystemParams, active: tuple[int, ...]):
    engine = _base_engine(engine_key)
    idx = np.array(active, dtype=np.int64)
    pos = {int(k): i for i, k in enumerate(active)}

    def restrict(pairs):
        kept = [(pos[int(p)], pos[int(q)]) for p, q in pairs if int(p) in pos and int(q) in pos]
        return np.array(kept, dtype=np.int64).reshape(-1, 2)

    h = engine.h[idx].copy()
    pairs1, pairs2 = restrict(engine.pairs1), restrict(engine.pairs2)
    blocks = _kernels.block_propagators(h, pairs1, pairs2, engine.g1grid, engine.g2grid,
                                        engine.n_fast, engine.params.dt)
    return idx, h, pairs1, pairs2, engine.rdiag[idx].copy(), engine.decay[idx].copy(), blocks


def _propagate(engine: _Engine, psi, n0, thresholds, record_steps):
    """Run the no-jump kernel on the coupling-closed support of ``psi``."""
    idx, h, pairs1, pairs2, rdiag, decay, blocks = _subspace(engine.params, _closure(engine, psi))
    k = len(thresholds)
    out_steps = np.full(k, -1, dtype=np.int64)
    out_states = np.zeros((k, len(idx)), dtype=np.complex128)
    record_states = np.zeros((len(record_steps), len(idx)), dtype=np.complex128)
    status, n, sub = _kernels.propagate(
        np.ascontiguousarray(psi[idx], dtype=np.complex128), n0, engine.n_stop, h, pairs1, pairs2,
        engine.g1grid, engine.g2grid, rdiag, engine.n_fast, decay,
        engine.params.dt, blocks, np.asarray(thresholds, dtype=float), out_steps, out_states,
        record_steps, record_states,
    )
    if status == _kernels.STATUS_STEP_TOO_LARGE:
        raise StepSizeError(
            f"jump probability per step reached {_kernels.MAX_JUMP_PROBABILITY} at t={n * engine.params.dt:.6g}; "
            f"reduce dt (currently {engine.params.dt}) for kappa={engine.params.kappa}, gamma={engine.params.gamma}"
        )
    full = np.zeros(DIM, dtype=complex)
    full[idx] = sub
    states = np.zeros((k, DIM), dtype=complex)
    states[:, idx] = out_states
    recorded = np.zeros((len(record_steps), DIM), dtype=complex)
    recorded[:, idx] = record_states
    return status, n, full, out_steps, states, recorded


def _excitation(engine: _Engine, psi: np.ndarray) -> float:
    return float(np.dot(engine.excitation, np.abs(psi) ** 2))


def _choose_jump(engine: _Engine, psi: np.ndarray, draw: float):
    """Pick a channel with probability proportional to ``||L_m psi||^2``."""
    candidates = [(j, j.apply(psi)) for j in engine.jumps]
    weights = np.array([np.vdot(v, v).real for _, v in candidates])
    total = weights.sum()
    if total <= 0.0:
        raise RuntimeError("jump requested from a state with zero decay rate")
    cum = np.cumsum(weights)
    m = int(np.searchsorted(cum, draw * total, side="right"))
    m = min(m, len(candidates) - 1)
    while weights[m] == 0.0:
        m -= 1
    jump, post = candidates[m]
    return jump.channel, post / math.sqrt(weights[m])


def _jump_event(engine: _Engine, n: int, channel: Channel, post: np.ndarray, mode2_emitted: bool) -> JumpEvent:
    pops = hilbert.atom_populations(post)
    pops = pops / pops.sum()
    mode2 = 1.0 if mode2_emitted else float(np.sum(np.abs(post) ** 2 * hilbert.OCCUPATIONS[:, 2:].sum(axis=1)))
    return JumpEvent(
        time=(n + 1) * engine.params.dt,
        channel=channel,
        post_jump_atom_populations=tuple(float(p) for p in pops),
        post_jump_mode2_excitation=min(mode2, 1.0),
        step=n,
    )


def _draw_threshold(rng: np.random.Generator) -> float:
    return math.log1p(-rng.random())


def _continue(engine, rng, n, psi, record_steps, samples, seed_label) -> TrajectoryResult:
    """Carry a trajectory on from a jump decided at step ``n`` with pre-jump state ``psi``."""
    jumps: list[JumpEvent] = []
    mode2_emitted = False
    dt = engine.params.dt
    while True:
        channel, psi = _choose_jump(engine, psi, rng.random())
        mode2_emitted = mode2_emitted or (channel.is_cavity and channel.mode == 2)
        jumps.append(_jump_event(engine, n, channel, psi, mode2_emitted))
        n += 1
        if _excitation(engine, psi) < 1e-12:
            if samples is not None:
                samples[record_steps >= n] = psi
            return TrajectoryResult(jumps, True, psi, seed_label, n * dt, samples)
        status, m, end_psi, steps, states, recorded = _propagate(
            engine, psi, n, [_draw_threshold(rng)], record_steps
        )
        if samples is not None:
            hit = (record_steps >= n) & (record_steps <= m)
            samples[hit] = recorded[hit]
        if status == _kernels.STATUS_THRESHOLDS_DONE:
            n, psi = int(steps[0]), states[0]
            continue
        clean = status == _kernels.STATUS_NO_EXCITATION
        if samples is not None and clean:
            samples[record_steps > m] = end_psi
        return TrajectoryResult(jumps, clean, end_psi, seed_label, m * dt, samples)


def child_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def make_rng(seed) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def _sample_steps(params: SystemParams, sample_times) -> np.ndarray:
    if sample_times is None:
        return np.zeros(0, dtype=np.int64)
    steps = np.rint(np.asarray(sample_times, dtype=float) / params.dt).astype(np.int64)
    if np.any(steps < 0) or np.any(steps > params.n_steps):
        raise ValueError("sample times must lie within [0, t_max]")
    if np.any(np.diff(steps) < 0):
        raise ValueError("sample times must be sorted")
    return steps


def _simulate(params, seeds, labels, analyzers=None, sample_times=None, threads=1) -> list[TrajectoryResult]:
    engine = _engine(params, analyzers)
    record_steps = _sample_steps(params, sample_times)
    rngs = [make_rng(s) for s in seeds]
    thresholds = np.array([_draw_threshold(r) for r in rngs])
    order = np.argsort(-thresholds, kind="stable")
    psi0 = model.special_state("I")
    status, n_end, end_psi, steps, states, shared = _propagate(
        engine, psi0, 0, thresholds[order], record_steps
    )
    first_step = np.empty(len(seeds), dtype=np.int64)
    first_state = np.empty((len(seeds), DIM), dtype=complex)
    first_step[order] = steps
    first_state[order] = states
    dt = params.dt

    def finish(k: int) -> TrajectoryResult:
        samples = None
        n1 = int(first_step[k])
        if record_steps.size:
            samples = np.zeros((record_steps.size, DIM), dtype=complex)
            upto = n1 if n1 >= 0 else n_end
            samples[record_steps <= upto] = shared[record_steps <= upto]
        if n1 < 0:
            clean = status == _kernels.STATUS_NO_EXCITATION
            return TrajectoryResult([], clean, end_psi.copy(), labels[k], n_end * dt, samples)
        return _continue(engine, rngs[k], n1, first_state[k], record_steps, samples, labels[k])

    if threads <= 1 or len(seeds) < 2:
        return [finish(k) for k in range(len(seeds))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(finish, range(len(seeds))))


def run_trajectory(params: SystemParams, seed, analyzers=None, sample_times=None) -> TrajectoryResult:
    """One trajectory from ``|I>``; deterministic in ``(params, seed)``."""
    label = seed if not isinstance(seed, np.random.SeedSequence) else (seed.entropy, tuple(seed.spawn_key))
    return _simulate(params, [seed], [label], analyzers, sample_times)[0]


def run_ensemble(
    params: SystemParams,
    n_traj: int,
    master_seed: int,
    analyzers=None,
    sample_times: Sequence[float] | None = None,
    threads: int = 1,
) -> list[TrajectoryResult]:
    """``n_traj`` trajectories; trajectory ``k`` uses ``child_seed(master_seed, k)``."""
    out: list[TrajectoryResult] = []
    for chunk in iter_ensemble(params, n_traj, master_seed, analyzers, sample_times, threads, chunk=max(n_traj, 1)):
        out.extend(chunk)
    return out


def iter_ensemble(
    params: SystemParams,
    n_traj: int,
    master_seed: int,
    analyzers=None,
    sample_times: Sequence[float] | None = None,
    threads: int = 1,
    chunk: int = 20000,
) -> Iterator[list[TrajectoryResult]]:
    """Same trajectories as :func:`run_ensemble`, yielded in consecutive chunks."""
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    for start in range(0, n_traj, chunk):
        ks = range(start, min(start + chunk, n_traj))
        seeds = [child_seed(master_seed, k) for k in ks]
        labels = [(master_seed, k) for k in ks]
        yield _simulate(params, seeds, labels, analyzers, sample_times, threads)


def ensemble_density(results: Iterable[TrajectoryResult]) -> np.ndarray:
    """Average ``|psi><psi|`` over the recorded samples: shape ``(n_samples, 64, 64)``."""
    total = None
    count = 0
    for r in results:
        if r.samples is None:
            raise ValueError("trajectories were run without sample_times")
        outer = np.einsum("si,sj->sij", r.samples, r.samples.conj())
        total = outer if total is None else total + outer
        count += 1
    return total / count


# ---------------------------------------------------------------------------
# literal per-step update


def step(psi: np.ndarray, t: float, dt: float, params: SystemParams, eps: float, analyzers=None):
    """One MCWF step with uniform draw ``eps``.

    Returns ``(psi_next, event)``; ``event`` is ``None`` when no jump occurs.
    Raises :class:`StepSizeError` when the jump probability reaches 0.1.
    """
    engine = _engine(params, analyzers)
    psi = np.asarray(psi, dtype=complex)
    weights = []
    jumped = []
    for j in engine.jumps:
        v = j.apply(psi)
        weights.append(dt * np.vdot(v, v).real)
        jumped.append(v)
    dp = float(np.sum(weights))
    if dp >= _kernels.MAX_JUMP_PROBABILITY:
        raise StepSizeError(f"jump probability {dp:.3g} >= {_kernels.MAX_JUMP_PROBABILITY}; reduce dt")
    if eps < dp:
        m = int(np.searchsorted(np.cumsum(weights), eps, side="right"))
        post = jumped[m] / math.sqrt(weights[m] / dt)
        n = int(round(t / dt))
        ch = engine.jumps[m].channel
        return post, _jump_event(engine, n, ch, post, ch.is_cavity and ch.mode == 2)
    g = [model.pulse_amplitude(s, w, params.pulses) for s in (t, t + 0.5 * dt, t + dt) for w in (1, 2)]
    nxt = _kernels.rk4_step(psi, engine.h, engine.pairs1, engine.pairs2, *g, dt)
    return nxt / np.linalg.norm(nxt), None


def run_trajectory_stepwise(params: SystemParams, seed, analyzers=None, chunk: int = 1 << 16) -> TrajectoryResult:
    """Reference trajectory using one uniform draw per step.

    Same law as :func:`run_trajectory` but a different use of random numbers,
    so individual records differ; used to cross-check the sampler.
    """
    engine = _engine(params, analyzers)
    rng = make_rng(seed)
    psi = model.special_state("I")
    n = 0
    jumps: list[JumpEvent] = []
    mode2_emitted = False
    dt = params.dt
    while n < engine.n_stop:
        stop = min(n + chunk, engine.n_stop)
        eps = rng.random(stop - n)
        status, m, psi, e = _kernels.propagate_stepwise(
            psi, n, stop, engine.h, engine.pairs1, engine.pairs2, engine.g1grid, engine.g2grid, engine.rdiag,
            engine.n_fast, engine.decay, engine.excitation, dt, eps,
        )
        if status == _kernels.STATUS_STEP_TOO_LARGE:
            raise StepSizeError("jump probability reached 0.1; reduce dt")
        if status == _kernels.STATUS_NO_EXCITATION:
            return TrajectoryResult(jumps, True, psi, seed, m * dt)
        if status == _kernels.STATUS_CROSSED:
            weights = np.array([dt * np.vdot(v, v).real for v in (j.apply(psi) for j in engine.jumps)])
            k = min(int(np.searchsorted(np.cumsum(weights), e, side="right")), len(weights) - 1)
            channel = engine.jumps[k].channel
            post = engine.jumps[k].apply(psi)
            psi = post / np.linalg.norm(post)
            mode2_emitted = mode2_emitted or (channel.is_cavity and channel.mode == 2)
            jumps.append(_jump_event(engine, m, channel, psi, mode2_emitted))
            n = m + 1
            if _excitation(engine, psi) < 1e-12:
                return TrajectoryResult(jumps, True, psi, seed, n * dt)
        else:
            n = stop
    return TrajectoryResult(jumps, False, psi, seed, engine.n_stop * dt)


# ---------------------------------------------------------------------------
# raw record dump

RECORD_HEADER = (
    "trajectory_index", "time", "channel",
    "pop_G2", "pop_M_MINUS", "pop_M_PLUS", "pop_GROUND", "mode2_excitation",
)


class JumpRecordWriter:
    """Streams jump rows with the columns of :data:`RECORD_HEADER`; trajectories are numbered in arrival order."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(RECORD_HEADER)
        self._next = 0

    def write(self, results: Iterable[TrajectoryResult]) -> None:
        for r in results:
            for ev in r.jumps:
                self._writer.writerow([
                    self._next, repr(ev.time), ev.channel.name,
                    *(repr(p) for p in ev.post_jump_atom_populations), repr(ev.post_jump_mode2_excitation),
                ])
            self._next += 1

    def close(self) -> None:
        self._fh.close()


def write_jump_records(path, results: Sequence[TrajectoryResult]) -> None:
    writer = JumpRecordWriter(path)
    try:
        writer.write(results)
    finally:
        writer.close()
