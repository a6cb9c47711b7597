"""Run configuration read from a flat YAML mapping.

All physical values are in units of ``g`` and ``1/g``. Recognized keys:

``kappa gamma delta1 delta2 detuning t_total fwhm delay amplitude1
amplitude2 dt t_max t_max_ceiling``
    System parameters. ``detuning: x`` is shorthand for ``delta1: x,
    delta2: -x`` and cannot be combined with either.
``n_traj seed threads``
    Trajectories per ensemble (per tomography setting for the coherent pair
    model), master seed, worker count (0 means all CPUs).
``classification_threshold pair_model settings bootstrap``
    (i)/(ii) split, ``coherent`` or ``branch``, tomography setting labels
    such as ``ZX``, bootstrap resamples.
``sweep_x sweep_x_values sweep_y sweep_y_values``
    Sweep axes. Names are system parameters or ``detuning`` /
    ``two_photon_deviation``.
``oracle_times record_jumps plots out``
    Snapshot times for ``oracle``, jump-record dump, SVG output, output
    directory.

Errors raise :class:`ConfigError` carrying the file, line and key.
"""
from __future__ import annotations

import dataclasses
import os
from typing import Any, Sequence

import yaml

from . import analysis
from .model import ParameterError, SystemParams

SYSTEM_KEYS = (
    "kappa", "gamma", "delta1", "delta2", "detuning", "t_total", "fwhm", "delay",
    "amplitude1", "amplitude2", "dt", "t_max", "t_max_ceiling",
)
SWEEPABLE = (
    "kappa", "gamma", "delta1", "delta2", "detuning", "two_photon_deviation", "t_total", "fwhm",
    "delay", "amplitude1", "amplitude2", "dt",
)
_OPTIONAL_FLOATS = ("fwhm", "delay", "t_max")


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None, key: str | None = None):
        self.source, self.line, self.key = source, line, key
        where = source if line is None else f"{source}:{line}"
        field = f" [{key}]" if key else ""
        super().__init__(f"{where}{field}: {message}")


@dataclasses.dataclass(frozen=True)
class SweepAxis:
    name: str
    values: tuple[float, ...]


@dataclasses.dataclass(frozen=True)
class RunConfig:
    params: SystemParams = dataclasses.field(default_factory=SystemParams)
    n_traj: int = 2000
    seed: int = 0
    threads: int = 0
    classification_threshold: float = analysis.DEFAULT_THRESHOLD
    pair_model: str = "coherent"
    settings: tuple[str, ...] = ()
    bootstrap: int = 200
    sweep: tuple[SweepAxis, ...] = ()
    oracle_times: tuple[float, ...] = ()
    record_jumps: bool = False
    plots: bool = True
    out: str = "out"

    @property
    def worker_count(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def analyzer_settings(self) -> tuple[analysis.AnalyzerSetting, ...]:
        if not self.settings:
            return analysis.tomography_settings()
        return tuple(analysis.AnalyzerSetting.named(s[0], s[1]) for s in self.settings)

    def with_overrides(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})


def _number(value, key, line, source, integer=False):
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"expected {kind}, got {value!r}", source, line, key)
    return int(value) if integer else float(value)


def _numbers(value, key, line, source) -> tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError("expected a non-empty list of numbers", source, line, key)
    return tuple(_number(v, key, line, source) for v in value)


def _line_map(text: str, source: str) -> dict[str, int]:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", source, mark.line + 1 if mark else None)
    if node is None:
        return {}
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("top level must be a mapping of keys to values", source, node.start_mark.line + 1)
    lines = {}
    for key_node, _ in node.value:
        if key_node.value in lines:
            raise ConfigError("duplicate key", source, key_node.start_mark.line + 1, key_node.value)
        lines[key_node.value] = key_node.start_mark.line + 1
    return lines


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    lines = _line_map(text, source)
    raw = yaml.safe_load(text) or {}
    known = set(SYSTEM_KEYS) | {f.name for f in dataclasses.fields(RunConfig)} - {"params", "sweep"}
    known |= {"sweep_x", "sweep_x_values", "sweep_y", "sweep_y_values"}
    for key in raw:
        if key not in known:
            raise ConfigError("unknown key", source, lines.get(key), str(key))

    def at(key):
        return lines.get(key)

    system: dict[str, Any] = {}
    for key in SYSTEM_KEYS:
        if key not in raw:
            continue
        if raw[key] is None and key in _OPTIONAL_FLOATS:
            system[key] = None
        else:
            system[key] = _number(raw[key], key, at(key), source)
    if "detuning" in system:
        for clash in ("delta1", "delta2"):
            if clash in system:
                raise ConfigError("cannot be combined with detuning", source, at(clash), clash)
        d = system.pop("detuning")
        system["delta1"], system["delta2"] = d, -d
    pulse_keys = ("t_total", "fwhm", "delay", "amplitude1", "amplitude2")
    try:
        params = SystemParams.create(
            **{k: system[k] for k in pulse_keys if k in system},
            **{k: v for k, v in system.items() if k not in pulse_keys},
        )
    except ParameterError as exc:
        key = next((k for k in system if k in str(exc)), None)
        raise ConfigError(str(exc), source, at(key) if key else None, key) from None

    kw: dict[str, Any] = {"params": params}
    for key in ("n_traj", "seed", "threads", "bootstrap"):
        if key in raw:
            kw[key] = _number(raw[key], key, at(key), source, integer=True)
    if kw.get("n_traj", 1) < 1:
        raise ConfigError("must be at least 1", source, at("n_traj"), "n_traj")
    if kw.get("threads", 0) < 0 or kw.get("bootstrap", 2) < 2:
        bad = "threads" if kw.get("threads", 0) < 0 else "bootstrap"
        raise ConfigError("out of range", source, at(bad), bad)
    if "classification_threshold" in raw:
        thr = _number(raw["classification_threshold"], "classification_threshold", at("classification_threshold"), source)
        if not 0.0 <= thr <= 1.0:
            raise ConfigError("must lie in [0, 1]", source, at("classification_threshold"), "classification_threshold")
        kw["classification_threshold"] = thr
    if "pair_model" in raw:
        if raw["pair_model"] not in analysis.PAIR_MODELS:
            raise ConfigError(f"must be one of {analysis.PAIR_MODELS}", source, at("pair_model"), "pair_model")
        kw["pair_model"] = raw["pair_model"]
    if "settings" in raw:
        labels = raw["settings"]
        if not isinstance(labels, list) or not labels:
            raise ConfigError("expected a non-empty list of labels like ZX", source, at("settings"), "settings")
        for lbl in labels:
            if not (isinstance(lbl, str) and len(lbl) == 2 and set(lbl) <= set(analysis.BASES)):
                raise ConfigError(f"bad setting label {lbl!r}", source, at("settings"), "settings")
        named = [analysis.AnalyzerSetting.named(lbl[0], lbl[1]) for lbl in labels]
        if not analysis.informationally_complete(named):
            raise ConfigError("settings do not determine the pair state", source, at("settings"), "settings")
        kw["settings"] = tuple(labels)
    if "oracle_times" in raw:
        times = _numbers(raw["oracle_times"], "oracle_times", at("oracle_times"), source)
        if sorted(times) != list(times) or times[0] < 0 or times[-1] > params.t_max:
            raise ConfigError(f"must be sorted within [0, {params.t_max}]", source, at("oracle_times"), "oracle_times")
        kw["oracle_times"] = times
    for key in ("record_jumps", "plots"):
        if key in raw:
            if not isinstance(raw[key], bool):
                raise ConfigError("expected true or false", source, at(key), key)
            kw[key] = raw[key]
    if "out" in raw:
        if not isinstance(raw["out"], str):
            raise ConfigError("expected a path", source, at("out"), "out")
        kw["out"] = raw["out"]
    kw["sweep"] = _sweep_axes(raw, lines, source, params)
    return RunConfig(**kw)


def _sweep_axes(raw, lines, source, params) -> tuple[SweepAxis, ...]:
    axes = []
    for axis in ("x", "y"):
        name_key, values_key = f"sweep_{axis}", f"sweep_{axis}_values"
        if name_key not in raw and values_key not in raw:
            continue
        if name_key not in raw or values_key not in raw:
            missing = name_key if name_key not in raw else values_key
            present = values_key if missing == name_key else name_key
            raise ConfigError(f"needs {missing} as well", source, lines.get(present), present)
        name = raw[name_key]
        if name not in SWEEPABLE:
            raise ConfigError(f"cannot sweep {name!r}; choose from {', '.join(SWEEPABLE)}", source, lines.get(name_key), name_key)
        values = _numbers(raw[values_key], values_key, lines.get(values_key), source)
        for v in values:
            try:
                params.updated(**{name: v})
            except ParameterError as exc:
                raise ConfigError(f"value {v}: {exc}", source, lines.get(values_key), values_key) from None
        axes.append(SweepAxis(name, values))
    if len(axes) == 1 and "sweep_y" in raw:
        raise ConfigError("sweep_y needs sweep_x", source, lines.get("sweep_y"), "sweep_y")
    if len(axes) == 2 and axes[0].name == axes[1].name:
        raise ConfigError("both axes sweep the same parameter", source, lines.get("sweep_y"), "sweep_y")
    return tuple(axes)


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))


def sweep_points(axes: Sequence[SweepAxis]) -> list[dict[str, float]]:
    """Grid points in row-major order over the axes."""
    points: list[dict[str, float]] = [{}]
    for axis in axes:
        points = [{**p, axis.name: v} for p in points for v in axis.values]
    return points
