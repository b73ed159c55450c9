"""Robustness and PD-gain grid sweeps over repeated evaluation rollouts.

Trial ``k`` at every grid point draws from the stream
``SeedSequence(seed, spawn_key=(k,))``, so grid points are compared under
common random commands and push directions, and results do not depend on how
points are distributed over workers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

import numpy as np

from ..errors import ValidationError
from ..policy import PolicyContext, make_policy
from .core import CONTROL_DT, SimModel
from .episode import CommandProtocol, PushSchedule, run_episode


class SweepAxis(str, Enum):
    PUSH_FORCE = "push_force"
    FRICTION = "friction"
    BASE_MASS = "base_mass"
    PD_GRID = "pd_grid"


AXIS_COLUMNS = {
    SweepAxis.PUSH_FORCE: ("push_force",),
    SweepAxis.FRICTION: ("friction",),
    SweepAxis.BASE_MASS: ("base_mass",),
    SweepAxis.PD_GRID: ("kp", "kd"),
}


@dataclass(frozen=True)
class SweepSpec:
    """What to vary and how many rollouts to spend per grid point.

    For ``pd_grid`` the grid is a pair ``(kp_values, kd_values)``; every
    other axis takes a flat list of values.
    """

    axis: SweepAxis
    grid: tuple
    trials: int = 100
    protocol: CommandProtocol = field(default_factory=CommandProtocol.evaluation)
    push_duration: float = 1.0

    def __post_init__(self):
        axis = SweepAxis(self.axis)
        object.__setattr__(self, "axis", axis)
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValidationError(f"trials per point must be a positive integer, got {self.trials}", key="trials")
        object.__setattr__(self, "trials", int(self.trials))
        if axis is SweepAxis.PD_GRID:
            if len(self.grid) != 2:
                raise ValidationError("pd_grid needs a (kp_values, kd_values) pair", key="grid")
            kp, kd = (tuple(float(v) for v in g) for g in self.grid)
            if not kp or not kd:
                raise ValidationError("pd_grid axes must be nonempty", key="grid")
            if min(kp) <= 0 or min(kd) <= 0:
                raise ValidationError("pd_grid gains must be positive", key="grid")
            object.__setattr__(self, "grid", (kp, kd))
        else:
            vals = tuple(float(v) for v in self.grid)
            if not vals:
                raise ValidationError("sweep grid is empty", key="grid")
            if not all(np.isfinite(vals)):
                raise ValidationError("sweep grid values must be finite", key="grid")
            if axis is SweepAxis.PUSH_FORCE and min(vals) < 0:
                raise ValidationError("push forces must be nonnegative", key="grid")
            if axis in (SweepAxis.FRICTION, SweepAxis.BASE_MASS) and min(vals) <= 0:
                raise ValidationError(f"{axis.value} values must be positive", key="grid")
            object.__setattr__(self, "grid", vals)

    @property
    def shape(self) -> tuple[int, ...]:
        if self.axis is SweepAxis.PD_GRID:
            return (len(self.grid[0]), len(self.grid[1]))
        return (len(self.grid),)

    def points(self) -> list[tuple[float, ...]]:
        """Grid points in output order (row-major, K_p major for pd_grid)."""
        if self.axis is SweepAxis.PD_GRID:
            return [(kp, kd) for kp in self.grid[0] for kd in self.grid[1]]
        return [(v,) for v in self.grid]

    def to_dict(self) -> dict:
        grid = [list(g) for g in self.grid] if self.axis is SweepAxis.PD_GRID else list(self.grid)
        p = self.protocol
        return {
            "axis": self.axis.value,
            "grid": grid,
            "trials": self.trials,
            "push_duration": self.push_duration,
            "protocol": {"horizon": p.horizon, "duration": list(p.duration), "zero_prob": p.zero_prob,
                         "angular": p.angular},
        }


@dataclass(frozen=True)
class SweepPoint:
    values: tuple[float, ...]
    success_rate: float
    n_e: int
    n_t: int
    seed: int
    causes: Mapping[str, int] = field(default_factory=dict)


@dataclass
class SweepResult:
    spec: SweepSpec
    points: list[SweepPoint]
    seed: int
    policy: str
    config_hash: str
    gains: dict

    @property
    def columns(self) -> tuple[str, ...]:
        return AXIS_COLUMNS[self.spec.axis] + ("sr_star", "n_e", "n_t", "seed")

    def matrix(self) -> np.ndarray:
        """SR* values reshaped to the grid (rows = K_p for pd_grid)."""
        return np.array([p.success_rate for p in self.points]).reshape(self.spec.shape)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for p in self.points:
            w.writerow([repr(v) for v in p.values] + [repr(p.success_rate), p.n_e, p.n_t, p.seed])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {
            "sweep": self.spec.to_dict(),
            "seed": self.seed,
            "policy": self.policy,
            "config_hash": self.config_hash,
            "gains": self.gains,
            "shape": list(self.spec.shape),
            "row_major": "kp" if self.spec.axis is SweepAxis.PD_GRID else None,
            "causes": [dict(p.causes) for p in self.points],
        }

    def write(self, csv_path, manifest_path=None) -> None:
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.csv_text())
        if manifest_path is not None:
            with open(manifest_path, "w") as fh:
                json.dump(self.manifest(), fh, indent=2, sort_keys=True)
                fh.write("\n")


def config_hash(sim: SimModel) -> str:
    blob = json.dumps(sim.config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(trial),)))


def evaluate(
    sim: SimModel,
    policy: str = "trot",
    protocol: CommandProtocol | None = None,
    trials: int = 100,
    seed: int = 0,
    *,
    push: PushSchedule | None = None,
    context_sim: SimModel | None = None,
    gait: Mapping[str, float] | None = None,
    control_dt: float = CONTROL_DT,
) -> tuple[int, int, dict[str, int]]:
    """Run ``trials`` rollouts; return (early terminations, trials, causes).

    ``context_sim`` is the robot the policy believes it controls. It defaults
    to ``sim``; sweeps pass the unperturbed robot so the policy does not see
    the perturbation.
    """
    protocol = protocol or CommandProtocol.evaluation()
    ctx = PolicyContext.from_sim(context_sim or sim, control_dt, gait)
    n_e = 0
    causes: dict[str, int] = {}
    for k in range(int(trials)):
        pol = make_policy(policy, ctx)
        res = run_episode(sim, pol, protocol, trial_rng(seed, k), control_dt=control_dt, push=push)
        if res.terminated_early:
            n_e += 1
            causes[res.cause] = causes.get(res.cause, 0) + 1
    return n_e, int(trials), causes


def _perturbed(sim: SimModel, axis: SweepAxis, values: Sequence[float]) -> tuple[SimModel, SimModel, PushSchedule | None]:
    """(simulated robot, robot the policy is told about, push schedule)."""
    if axis is SweepAxis.PD_GRID:
        s = sim.copy_with(kp=values[0], kd=values[1])
        # the gains are part of the policy's knowledge, as in gain-conditioned policies
        return s, s, None
    if axis is SweepAxis.FRICTION:
        return sim.copy_with(friction=values[0]), sim, None
    if axis is SweepAxis.BASE_MASS:
        return sim.copy_with(mass_scale=values[0]), sim, None
    return sim, sim, PushSchedule(magnitude=values[0])


def _run_point(args) -> tuple[int, int, dict[str, int]]:
    sim, axis, values, policy, protocol, trials, seed, push_duration, gait, control_dt = args
    s, ctx, push = _perturbed(sim, axis, values)
    if push is not None:
        push = PushSchedule(magnitude=push.magnitude, duration=push_duration)
    return evaluate(s, policy, protocol, trials, seed, push=push, context_sim=ctx, gait=gait,
                    control_dt=control_dt)


def robustness_sweep(
    sim: SimModel,
    spec: SweepSpec,
    *,
    seed: int = 0,
    policy: str = "trot",
    gait: Mapping[str, float] | None = None,
    workers: int = 1,
    control_dt: float = CONTROL_DT,
) -> SweepResult:
    """SR* at every grid point of ``spec``, each over ``spec.trials`` rollouts."""
    pts = spec.points()
    tasks = [(sim, spec.axis, v, policy, spec.protocol, spec.trials, seed, spec.push_duration,
              dict(gait or {}), control_dt) for v in pts]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_run_point, tasks))
    else:
        outs = [_run_point(t) for t in tasks]
    points = [SweepPoint(v, 1.0 - n_e / n_t, n_e, n_t, int(seed), c) for v, (n_e, n_t, c) in zip(pts, outs)]
    gains = {"kp": sim.kp.tolist(), "kd": sim.kd.tolist(), "torque_limits": sim.torque_limits.tolist()}
    return SweepResult(spec, points, int(seed), policy, config_hash(sim), gains)


def pd_grid_sweep(
    sim: SimModel,
    kp_grid: Sequence[float],
    kd_grid: Sequence[float],
    *,
    trials: int = 100,
    seed: int = 0,
    protocol: CommandProtocol | None = None,
    **kwargs: Any,
) -> SweepResult:
    """SR* over the K_p x K_d grid; ``result.matrix()`` is K_p-major."""
    spec = SweepSpec(SweepAxis.PD_GRID, (tuple(kp_grid), tuple(kd_grid)), trials,
                     protocol or CommandProtocol.evaluation())
    return robustness_sweep(sim, spec, seed=seed, **kwargs)
