"""Experiment spec files: YAML parsing with line-level diagnostics.

Example::

    mode: surrogate_curriculum
    seeds: [0, 1, 2]
    curriculum:
      presets: [ours, pal]
      per_model: 40
      epochs: 50

See the README for the full schema.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..curriculum import SR_TARGETS, Split, Strategy
from ..errors import SchemaError, ValidationError
from ..simulator.sweeps import SweepAxis

MODES = ("curriculum_compare", "surrogate_curriculum", "robustness_sweep", "pd_grid", "stand_audit")

# preset -> (configuration strategy, gain preset in the data file, replacement split)
PRESETS: dict[str, tuple[Strategy, str | None, Split]] = {
    "ours": (Strategy.PARTICLE_FILTER, "ours", Split.default(Strategy.PARTICLE_FILTER)),
    "pal": (Strategy.UNIFORM, "pal", Split.pal()),
    "genloco": (Strategy.UNIFORM, "genloco", Split.default(Strategy.UNIFORM)),
    "manyquad": (Strategy.UNIFORM, "manyquad", Split.default(Strategy.UNIFORM)),
    "moral": (Strategy.UNIFORM, "moral", Split.default(Strategy.UNIFORM)),
    "urma": (Strategy.UNIFORM, "urma", Split.default(Strategy.UNIFORM)),
    "uniform": (Strategy.UNIFORM, None, Split.default(Strategy.UNIFORM)),
    "performance_sr": (Strategy.PERFORMANCE_SR, None, Split.default(Strategy.PERFORMANCE_SR)),
    "particle_filter": (Strategy.PARTICLE_FILTER, None, Split.default(Strategy.PARTICLE_FILTER)),
}
# numeric aliases following the benchmark order
PRESETS.update({str(i): PRESETS[k] for i, k in enumerate(("ours", "pal", "genloco", "manyquad", "moral", "urma"), 1)})


class _Located:
    """Parsed YAML plus a map from key path to 1-based source line."""

    def __init__(self, text: str):
        try:
            node = yaml.compose(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise SchemaError("<root>", f"YAML parse error: {getattr(exc, 'problem', exc)}",
                              line=None if mark is None else mark.line + 1) from None
        self.lines: dict[tuple, int] = {}
        self.data = self._build(node, ()) if node is not None else {}

    def _build(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                key = yaml.safe_load(yaml.serialize(k)) if not isinstance(k, yaml.ScalarNode) else k.value
                self.lines[path + (key,)] = k.start_mark.line + 1
                out[key] = self._build(v, path + (key,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._build(v, path + (i,)) for i, v in enumerate(node.value)]
        return yaml.safe_load(yaml.serialize(node))

    def line(self, *path) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return self.lines.get(())


@dataclass(frozen=True)
class CurriculumOptions:
    presets: tuple[str, ...] = ("ours", "pal")
    per_model: int = 40
    n_p: int | None = None
    epochs: int = 50
    split: Mapping[str, float] | None = None
    sr_target: str = "both"
    step_scale: float = 0.05
    walk_leg_flip: float = 0.05
    max_retries: int = 10
    replay_factor: int = 10
    episode_horizon: float = 40.0
    policy: str = "trot"
    surrogate: Mapping[str, float] = field(default_factory=lambda: {"r_lin": 1.3, "r_zero": 1.6})
    snapshot_replay: str = "final"


@dataclass(frozen=True)
class SweepOptions:
    model: str = "a1"
    axis: str = "friction"
    grid: tuple = ()
    kp: tuple[float, ...] = ()
    kd: tuple[float, ...] = ()
    trials: int = 100
    policy: str = "trot"
    gains: tuple[float, float] | None = None
    push_duration: float = 1.0
    horizon: float = 4.0


@dataclass(frozen=True)
class AuditOptions:
    samples: int = 40
    sr: float = 1.0
    gains: tuple[float, float] | None = None
    torque_scale: float | None = None
    pd_preset: str | None = None
    nominal: bool = False


@dataclass(frozen=True)
class SimOptions:
    dt: float = 0.0025
    control_dt: float = 0.01


@dataclass(frozen=True)
class ExperimentSpec:
    mode: str
    seeds: tuple[int, ...]
    data: str | None = None
    models: tuple[str, ...] | None = None
    output: str | None = None
    curriculum: CurriculumOptions = CurriculumOptions()
    sweep: SweepOptions = SweepOptions()
    audit: AuditOptions = AuditOptions()
    simulator: SimOptions = SimOptions()
    source: str | None = None
    raw: Mapping[str, Any] = field(default_factory=dict)
    lines: Mapping[tuple, int] = field(default_factory=dict, repr=False)

    def error(self, message: str, *path) -> ValidationError:
        """Validation error located at ``path`` in the source file."""
        line = None
        p = tuple(path)
        while line is None and p:
            line = self.lines.get(p)
            p = p[:-1]
        return ValidationError(message, key=".".join(str(x) for x in path) or "<root>", line=line)

    def per_model(self, n_models: int) -> int:
        """Configurations per model, checking n_p divides evenly."""
        n_p = self.curriculum.n_p
        if n_p is None:
            return self.curriculum.per_model
        if n_models <= 0 or n_p % n_models:
            raise self.error(f"n_p = {n_p} is not divisible by the model count {n_models}", "curriculum", "n_p")
        return n_p // n_models

    def to_dict(self) -> dict:
        from dataclasses import asdict

        d = asdict(self)
        d.pop("raw", None)
        d.pop("lines", None)
        return d


_TOP_KEYS = {"mode", "seeds", "data", "models", "output", "curriculum", "sweep", "audit", "simulator"}


def _err(loc: _Located, msg: str, *path) -> ValidationError:
    return ValidationError(msg, key=".".join(str(p) for p in path) or "<root>", line=loc.line(*path))


def _section(loc, data, name, cls, conv):
    raw = data.get(name, {}) or {}
    if not isinstance(raw, Mapping):
        raise _err(loc, "must be a mapping", name)
    allowed = set(cls.__dataclass_fields__)
    kwargs = {}
    for k, v in raw.items():
        if k not in allowed:
            raise _err(loc, f"unknown key (allowed: {', '.join(sorted(allowed))})", name, k)
        try:
            kwargs[k] = conv.get(k, lambda x: x)(v)
        except (TypeError, ValueError) as exc:
            raise _err(loc, f"invalid value {v!r}: {exc}", name, k) from None
    return cls(**kwargs), raw


def _floats(v):
    if not isinstance(v, (list, tuple)):
        raise TypeError("expected a list of numbers")
    return tuple(float(x) for x in v)


def _pair(v):
    t = _floats(v)
    if len(t) != 2:
        raise ValueError("expected two numbers")
    return t


def _pos_int(v):
    if isinstance(v, bool) or int(v) != v:
        raise ValueError("expected an integer")
    return int(v)


def parse_spec(text: str, source: str | None = None) -> ExperimentSpec:
    """Parse and validate a spec; errors carry the offending key and line."""
    loc = _Located(text)
    data = loc.data
    if not isinstance(data, Mapping):
        raise _err(loc, "spec must be a mapping at the top level")
    for k in data:
        if k not in _TOP_KEYS:
            raise _err(loc, f"unknown key (allowed: {', '.join(sorted(_TOP_KEYS))})", k)
    if "mode" not in data:
        raise _err(loc, "missing required key", "mode")
    mode = data["mode"]
    if mode not in MODES:
        raise _err(loc, f"unknown mode {mode!r}; choose from {', '.join(MODES)}", "mode")
    seeds = data.get("seeds", [0])
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds:
        raise _err(loc, "seeds must be a nonempty list of integers", "seeds")
    for i, s in enumerate(seeds):
        if isinstance(s, bool) or not isinstance(s, int) or s < 0:
            raise _err(loc, f"seed must be a nonnegative integer, got {s!r}", "seeds", i)
    models = data.get("models")
    if models is not None:
        if not isinstance(models, list) or not models or not all(isinstance(m, str) for m in models):
            raise _err(loc, "models must be a nonempty list of model names", "models")
        models = tuple(models)

    cur, cur_raw = _section(loc, data, "curriculum", CurriculumOptions, {
        "presets": lambda v: tuple(str(x) for x in v) if isinstance(v, list) else (str(v),),
        "per_model": _pos_int, "n_p": _pos_int, "epochs": _pos_int, "max_retries": _pos_int, "replay_factor": _pos_int,
        "step_scale": float, "walk_leg_flip": float, "episode_horizon": float,
        "split": lambda v: {str(k): float(x) for k, x in dict(v).items()},
        "surrogate": lambda v: {str(k): float(x) for k, x in dict(v).items()},
    })
    sw, sw_raw = _section(loc, data, "sweep", SweepOptions, {
        "grid": _floats, "kp": _floats, "kd": _floats, "trials": _pos_int, "gains": _pair,
        "push_duration": float, "horizon": float,
    })
    au, au_raw = _section(loc, data, "audit", AuditOptions, {
        "samples": _pos_int, "sr": float, "gains": _pair, "torque_scale": float, "nominal": bool,
    })
    sim, _ = _section(loc, data, "simulator", SimOptions, {"dt": float, "control_dt": float})

    if mode in ("curriculum_compare", "surrogate_curriculum"):
        for i, p in enumerate(cur.presets):
            if p not in PRESETS:
                raise _err(loc, f"unknown preset {p!r}; choose from {', '.join(k for k in PRESETS if not k.isdigit())}",
                           "curriculum", "presets", i)
        if not cur.presets:
            raise _err(loc, "at least one preset is required", "curriculum", "presets")
        if cur.per_model < 1:
            raise _err(loc, "per_model must be at least 1", "curriculum", "per_model")
        if cur.epochs < 1:
            raise _err(loc, "epochs must be at least 1", "curriculum", "epochs")
        if cur.split is not None:
            bad = set(cur.split) - {"uniform", "replay", "weighted", "sr"}
            if bad:
                raise _err(loc, f"unknown split fraction {sorted(bad)[0]!r}", "curriculum", "split")
            for k, v in cur.split.items():
                if not (0.0 <= v <= 1.0):
                    raise _err(loc, "split fraction must lie in [0, 1]", "curriculum", "split", k)
            if sum(cur.split.values()) > 1.0 + 1e-12:
                raise _err(loc, "split fractions sum to more than 1", "curriculum", "split")
        if cur.sr_target not in SR_TARGETS:
            raise _err(loc, f"sr_target must be one of {', '.join(SR_TARGETS)}", "curriculum", "sr_target")
        if cur.snapshot_replay not in ("final", "all", "none"):
            raise _err(loc, "snapshot_replay must be final, all or none", "curriculum", "snapshot_replay")
        if cur.step_scale < 0:
            raise _err(loc, "step_scale must be nonnegative", "curriculum", "step_scale")
        if cur.episode_horizon <= 0:
            raise _err(loc, "episode_horizon must be positive", "curriculum", "episode_horizon")
    if mode == "robustness_sweep":
        try:
            axis = SweepAxis(sw.axis)
        except ValueError:
            raise _err(loc, f"unknown axis {sw.axis!r}", "sweep", "axis") from None
        if axis is SweepAxis.PD_GRID:
            raise _err(loc, "use mode pd_grid for gain grids", "sweep", "axis")
        if not sw.grid:
            raise _err(loc, "grid must be nonempty", "sweep", "grid")
    if mode == "pd_grid":
        if not sw.kp:
            raise _err(loc, "kp grid must be nonempty", "sweep", "kp")
        if not sw.kd:
            raise _err(loc, "kd grid must be nonempty", "sweep", "kd")
        for key, vals in (("kp", sw.kp), ("kd", sw.kd)):
            if min(vals) <= 0:
                raise _err(loc, "gains must be positive", "sweep", key)
    if mode in ("robustness_sweep", "pd_grid"):
        if sw.trials < 1:
            raise _err(loc, "trials must be at least 1", "sweep", "trials")
        if sw.horizon <= 0:
            raise _err(loc, "horizon must be positive", "sweep", "horizon")
    if mode == "stand_audit":
        if au.samples < 1:
            raise _err(loc, "samples must be at least 1 (an empty audit has no report)", "audit", "samples")
        if not (0.1 <= au.sr <= 1.0):
            raise _err(loc, "sr must lie in [0.1, 1]", "audit", "sr")
        if au.gains is not None and (au.gains[0] < 0 or au.gains[1] < 0):
            raise _err(loc, "gains must be nonnegative", "audit", "gains")
        if au.torque_scale is not None and au.torque_scale < 0:
            raise _err(loc, "torque_scale must be nonnegative", "audit", "torque_scale")
    if not (0.0 < sim.dt <= 0.01):
        raise _err(loc, "dt must lie in (0, 0.01] s", "simulator", "dt")
    if sim.control_dt < sim.dt:
        raise _err(loc, "control_dt must be at least dt", "simulator", "control_dt")

    return ExperimentSpec(
        mode=mode,
        seeds=tuple(int(s) for s in seeds),
        data=data.get("data"),
        models=models,
        output=data.get("output"),
        curriculum=cur,
        sweep=sw,
        audit=au,
        simulator=sim,
        source=source,
        raw=data,
        lines=dict(loc.lines),
    )


def load_spec(path: str | os.PathLike) -> ExperimentSpec:
    path = Path(path)
    return parse_spec(path.read_text(), str(path))
