"""Ensemble orchestration for the CLI: events, characterization and sweeps."""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Mapping

import numpy as np

from . import analysis, trajectory
from .analysis import EventClass
from .config import RunConfig, sweep_points
from .model import SystemParams
from .trajectory import StepSizeError

EVENT_COLUMNS = tuple(f"P_{c.value}" for c in EventClass)


def point_seed(master_seed: int, params: SystemParams) -> int:
    """Seed for one parameter point; depends on the point, not its position in a sweep."""
    digest = hashlib.sha256(repr(params).encode()).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint32).tolist()
    ss = np.random.SeedSequence([master_seed, *words])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def run_events(params: SystemParams, cfg: RunConfig, record_path=None):
    """Event probabilities of a circularly resolved ensemble of ``cfg.n_traj`` runs."""
    tally: dict = {}
    writer = trajectory.JumpRecordWriter(record_path) if record_path else None
    try:
        for chunk in trajectory.iter_ensemble(params, cfg.n_traj, cfg.seed, threads=cfg.worker_count):
            for r in chunk:
                cls = analysis.classify(r, cfg.classification_threshold)
                tally[cls] = tally.get(cls, 0) + 1
            if writer:
                writer.write(chunk)
    finally:
        if writer:
            writer.close()
    return analysis.probabilities_from_tally(tally)


def characterize(params: SystemParams, cfg: RunConfig, threads: int | None = None):
    """Coincidence counts and their characterization at one parameter point.

    Without any decay channel no photon is ever detected; the pair state is
    then read off the final state of the single deterministic run and the
    returned counts are ``None``.
    """
    seed = point_seed(cfg.seed, params)
    if params.kappa == 0 and params.gamma == 0:
        final = trajectory.run_trajectory(params, seed).final_state
        return None, analysis.characterize_state(analysis.pair_state_from_final(final))
    counts = analysis.accumulate_coincidences(
        params,
        cfg.analyzer_settings(),
        cfg.n_traj,
        seed,
        pair_model=cfg.pair_model,
        threshold=cfg.classification_threshold,
        threads=cfg.worker_count if threads is None else threads,
    )
    return counts, analysis.characterize_counts(counts, n_boot=cfg.bootstrap, seed=seed)


def _event_columns(events: Mapping[EventClass, int]) -> dict[str, float]:
    probs = analysis.probabilities_from_tally(events)
    return {f"P_{c.value}": probs[c][0] for c in EventClass}


def _sweep_row(args) -> dict:
    cfg, point, threads = args
    row: dict = dict(point)
    try:
        params = cfg.params.updated(**point)
        counts, ch = characterize(params, cfg, threads)
        row.update(_event_columns(counts.events if counts else {EventClass.INCOMPLETE: 1}))
        row.update(ch.row())
        row["error"] = ""
    except (analysis.InsufficientDataError, StepSizeError, ValueError) as exc:
        row.update({c: math.nan for c in EVENT_COLUMNS})
        row.update({c: math.nan for c in analysis.CHARACTERIZE_HEADER})
        row["n_coinc"] = 0
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def sweep_header(cfg: RunConfig) -> tuple[str, ...]:
    return (*(a.name for a in cfg.sweep), *EVENT_COLUMNS, *analysis.CHARACTERIZE_HEADER, "error")


def run_sweep(cfg: RunConfig) -> list[dict]:
    """One characterization per grid point; failed points keep a row with the error."""
    points = sweep_points(cfg.sweep)
    workers = min(cfg.worker_count, len(points))
    if workers <= 1:
        return [_sweep_row((cfg, p, None)) for p in points]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_row, [(cfg, p, 1) for p in points]))

