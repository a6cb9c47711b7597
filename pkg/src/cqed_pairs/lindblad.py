"""Density-matrix oracle for the trajectory engine.

:func:`lindblad_rhs` acts on full 64x64 matrices. :func:`evolve_density`
integrates with fixed-step RK4 on the same time grid as the trajectories,
starting from ``|I><I|``; it works on the basis states reachable from
``|I>`` (a dozen or so) with a precomputed superoperator and returns
snapshots embedded back into 64x64 matrices.
"""
from __future__ import annotations

import csv
import functools
import math
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from . import _kernels, hilbert, model
from .hilbert import DIM
from .model import SystemParams
from .trajectory import StepSizeError

MAX_JUMP_PROBABILITY = 0.1


class _Gather(NamedTuple):
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray  # sqrt(rate) * matrix elements


class _Liouvillian(NamedTuple):
    h0: np.ndarray  # detuning diagonal, dense
    c1: np.ndarray
    c2: np.ndarray
    anti: np.ndarray  # diagonal of sum_m L_m^dag L_m
    gathers: tuple[_Gather, ...]


def _gather(op) -> _Gather:
    coo = op.tocoo()
    keep = coo.data != 0
    rows, cols, vals = coo.row[keep], coo.col[keep], coo.data[keep]
    if len(np.unique(rows)) != len(rows):
        raise ValueError("jump operator maps two basis states onto one")
    return _Gather(rows, cols, vals)


@functools.lru_cache(maxsize=32)
def _liouvillian(params: SystemParams) -> _Liouvillian:
    ops = model.model_operators(params)
    gathers = tuple(_gather(jc.scaled) for jc in model.jump_operators(params) if jc.rate > 0)
    return _Liouvillian(
        np.diag(ops.detuning.astype(complex)),
        hilbert.as_dense(ops.coupling1).astype(complex),
        hilbert.as_dense(ops.coupling2).astype(complex),
        ops.decay.copy(),
        gathers,
    )


def _rhs(rho: np.ndarray, g1: float, g2: float, lv: _Liouvillian) -> np.ndarray:
    h_eff = lv.h0 + g1 * lv.c1 + g2 * lv.c2 - 0.5j * np.diag(lv.anti)
    a = -1j * (h_eff @ rho)
    out = a + a.conj().T
    for gth in lv.gathers:
        out[np.ix_(gth.rows, gth.rows)] += np.outer(gth.vals, gth.vals.conj()) * rho[np.ix_(gth.cols, gth.cols)]
    return out


def lindblad_rhs(rho: np.ndarray, t: float, params: SystemParams) -> np.ndarray:
    """``-i[H, rho] + sum_m (L_m rho L_m^dag - {L_m^dag L_m, rho}/2)`` for Hermitian ``rho``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (DIM, DIM):
        raise ValueError(f"expected a {DIM}x{DIM} density matrix, got {rho.shape}")
    g1 = model.pulse_amplitude(t, 1, params.pulses)
    g2 = model.pulse_amplitude(t, 2, params.pulses)
    return _rhs(rho, g1, g2, _liouvillian(params))


def reachable_states(params: SystemParams) -> np.ndarray:
    """Basis indices connected to ``|I>`` by the couplings or any jump operator."""
    lv = _liouvillian(params)
    edges = [np.argwhere(lv.c1 != 0), np.argwhere(lv.c2 != 0)]
    edges += [np.stack([gth.cols, gth.rows], axis=1) for gth in lv.gathers]
    start = int(np.flatnonzero(model.special_state("I"))[0])
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for e in edges:
            for a, b in e.tolist():
                if a in seen and b not in seen:
                    seen.add(b)
                    nxt.append(b)
        frontier = nxt
    return np.array(sorted(seen))


def _superoperators(params: SystemParams, idx: np.ndarray):
    """Row-major vectorized ``(L0, L1, L2)`` restricted to ``idx``."""
    lv = _liouvillian(params)
    d = len(idx)
    eye = np.eye(d)

    def commutator(h):
        return -1j * (np.kron(h, eye) - np.kron(eye, h.T))

    h0 = lv.h0[np.ix_(idx, idx)] - 0.5j * np.diag(lv.anti[idx])
    l0 = -1j * (np.kron(h0, eye) - np.kron(eye, h0.conj()))
    pos = {int(k): i for i, k in enumerate(idx)}
    for gth in lv.gathers:
        lm = np.zeros((d, d), dtype=complex)
        for r, c, v in zip(gth.rows, gth.cols, gth.vals):
            if int(r) in pos and int(c) in pos:
                lm[pos[int(r)], pos[int(c)]] = v
        l0 += np.kron(lm, lm.conj())
    return l0, commutator(lv.c1[np.ix_(idx, idx)]), commutator(lv.c2[np.ix_(idx, idx)])


def evolve_density(params: SystemParams, sample_times: Sequence[float]) -> list[tuple[float, np.ndarray]]:
    """RK4 from ``|I><I|`` with step ``params.dt``; snapshots at ``sample_times``."""
    times = np.asarray(sample_times, dtype=float)
    if times.size == 0:
        return []
    if np.any(np.diff(times) < 0):
        raise ValueError("sample times must be sorted")
    if times[0] < 0 or times[-1] > params.t_max + 1e-12:
        raise ValueError(f"sample times must lie within [0, t_max={params.t_max}]")
    lv = _liouvillian(params)
    dt = params.dt
    dp_max = dt * float(lv.anti.max(initial=0.0))
    if dp_max >= MAX_JUMP_PROBABILITY:
        raise StepSizeError(
            f"decay per step {dp_max:.3g} >= {MAX_JUMP_PROBABILITY}; reduce dt (currently {dt}) "
            f"for kappa={params.kappa}, gamma={params.gamma}"
        )
    steps = np.rint(times / dt).astype(np.int64)
    idx = reachable_states(params)
    d = len(idx)
    l0, l1, l2 = _superoperators(params, idx)
    psi0 = model.special_state("I")[idx]
    vec = np.outer(psi0, psi0.conj()).ravel()
    n_fast = int(math.floor(params.t_total / dt)) + 1
    g1grid, g2grid = model.pulse_amplitudes(np.arange(2 * n_fast + 1) * (0.5 * dt), params.pulses)
    csr = [sp.csr_matrix(m) for m in (l0, l1, l2)]
    l0c, l1c, l2c = ((m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(complex)) for m in csr)
    z = dt * l0
    tail_step = np.eye(d * d) + z + z @ z / 2 + z @ z @ z / 6 + z @ z @ z @ z / 24
    out = []
    n = 0
    for t, target in zip(times, steps):
        stop = min(int(target), n_fast)
        if stop > n:
            vec = _kernels.density_window(vec, n, stop, l0c, l1c, l2c, g1grid, g2grid, dt)
            n = stop
        if target > n:
            vec = np.linalg.matrix_power(tail_step, int(target - n)) @ vec
            n = int(target)
        rho = np.zeros((DIM, DIM), dtype=complex)
        small = vec.reshape(d, d)
        rho[np.ix_(idx, idx)] = 0.5 * (small + small.conj().T)
        out.append((float(t), rho))
    return out


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b||_1 / 2`` for Hermitian arguments."""
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


SNAPSHOT_HEADER = ("time", *(f"pop_{lbl}" for lbl in model.MANIFOLD_LABELS), "excitation")


def snapshot_rows(snapshots: Sequence[tuple[float, np.ndarray]]) -> list[tuple[float, ...]]:
    n_op = hilbert.as_dense(model.excitation_operator())
    rows = []
    for t, rho in snapshots:
        pops = model.manifold_populations(rho)
        exc = float(np.real(np.trace(n_op @ rho)))
        rows.append((t, *(float(p) for p in pops), exc))
    return rows


def write_snapshots(path, snapshots: Sequence[tuple[float, np.ndarray]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SNAPSHOT_HEADER)
        for row in snapshot_rows(snapshots):
            writer.writerow([repr(x) for x in row])
