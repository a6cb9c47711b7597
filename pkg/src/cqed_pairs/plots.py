"""SVG figures written next to the CSV output."""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "cqed-pairs"
_META = {"Date": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def events_plot(path, probs: Mapping[str, tuple[float, float]]) -> None:
    labels = ["i", "ii", "iii", "iv"]
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar(labels, [probs[k][0] for k in labels], yerr=[probs[k][1] for k in labels], color="0.4", capsize=3)
    ax.set_ylim(0, 1)
    ax.set_xlabel("event class")
    ax.set_ylabel("probability")
    _save(fig, path)


def rho_plot(path, rho: np.ndarray) -> None:
    ticks = ["++", "+-", "-+", "--"]
    fig, axes = plt.subplots(1, 2, figsize=(7, 3))
    for ax, part, title in zip(axes, (rho.real, rho.imag), ("Re", "Im")):
        im = ax.imshow(part, vmin=-0.5, vmax=0.5, cmap="RdBu_r")
        ax.set_xticks(range(4), ticks)
        ax.set_yticks(range(4), ticks)
        ax.set_title(f"{title} rho")
        fig.colorbar(im, ax=ax, shrink=0.8)
    _save(fig, path)


def oracle_plot(path, header: Sequence[str], rows: Sequence[Sequence[float]]) -> None:
    data = np.array(rows, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3))
    for j, name in enumerate(header[1:-1], start=1):
        ax.plot(data[:, 0], data[:, j], marker=".", label=name.removeprefix("pop_"))
    ax.set_xlabel("gt")
    ax.set_ylabel("population")
    ax.legend(fontsize="small")
    _save(fig, path)


def sweep_plot(path, axes: Sequence[str], rows: Sequence[Mapping[str, float]]) -> None:
    if len(axes) == 1:
        x = np.array([r[axes[0]] for r in rows], dtype=float)
        order = np.argsort(x)
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3))
        for ax, key, err in ((a1, "F", "F_err"), (a2, "S_fixed", "S_err")):
            y = np.array([r[key] for r in rows], dtype=float)[order]
            e = np.array([r[err] for r in rows], dtype=float)[order]
            ax.errorbar(x[order], y, yerr=e, marker="o", capsize=3)
            ax.set_xlabel(axes[0])
            ax.set_ylabel(key)
        _save(fig, path)
        return
    xs = sorted({r[axes[0]] for r in rows})
    ys = sorted({r[axes[1]] for r in rows})
    grid = np.full((len(ys), len(xs)), math.nan)
    for r in rows:
        grid[ys.index(r[axes[1]]), xs.index(r[axes[0]])] = r["S_fixed"]
    fig, ax = plt.subplots(figsize=(5, 4))
    mesh = ax.pcolormesh(_edges(xs), _edges(ys), grid, cmap="viridis", shading="flat")
    fig.colorbar(mesh, ax=ax, label="S_fixed")
    ax.set_xlabel(axes[0])
    ax.set_ylabel(axes[1])
    _save(fig, path)


def _edges(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size == 1:
        return np.array([v[0] - 0.5, v[0] + 0.5])
    mid = 0.5 * (v[1:] + v[:-1])
    return np.concatenate([[2 * v[0] - mid[0]], mid, [2 * v[-1] - mid[-1]]])
