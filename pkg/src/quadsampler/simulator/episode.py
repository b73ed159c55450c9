"""Episode rollout, stand admission, reward terms and the success-rate metric."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..tracking import nu_lin, nu_zero, tracking_ratio
from ..errors import UndefinedMetricError
from ..policy import Policy, PolicyContext, PolicyInput
from ..sampling import COMMAND_DURATION, Command, sample_command
from . import _kernels as K
from .core import CONTROL_DT, SimModel, SimState, StepStats, advance, initial_state, pd_torque, proxy_positions

DISCOUNT = 0.997
TERMINATION_PENALTY = -0.25
ADMISSION_DURATION = 2.0
ADMISSION_TILT = math.radians(45.0)
ADMISSION_MIN_HEIGHT = 0.5  # fraction of the resting base height

TERMINATION_CAUSES = {
    K.TERM_BASE_GROUND: "body_ground",
    K.TERM_KNEE_GROUND: "body_ground",
    K.TERM_SELF: "self_collision",
    K.TERM_NONFINITE: "non_finite",
}

# Reward weights. Term forms (per control step, multiplied by the weight and
# the control period):
#   lin_vel        exp(-|v_xy - c_xy|^2 / 0.25), base frame
#   ang_vel        exp(-(w_z - c_w)^2 / 0.25)
#   orientation    |e_z^B xy|^2, tilt of the gravity axis
#   height         (z - z_0)^2 against the initial standing height
#   undesired      v_z^2 + 0.05 |w_xy|^2
#   foot_slip      sum over feet in contact of |v_foot xy|^2
#   air_time       sum over touchdowns of |t_air - cycle/2|
#   joint_pos      |q - q^n|^2
#   joint_vel      |qd|^2
#   joint_acc      |(qd - qd_prev) / dt|^2
#   torque         |tau|^2
#   smoothness     |q_des - q_des_prev|^2
#   smoothness2    |q_des - 2 q_des_prev + q_des_prev2|^2
REWARD_WEIGHTS = {
    "lin_vel": 3.0,
    "ang_vel": 1.5,
    "orientation": -5.0,
    "height": -20.0,
    "undesired_motion": -0.5,
    "foot_slip": -0.2,
    "air_time": -6.0,
    "joint_pos": -0.2,
    "joint_vel": -3e-4,
    "joint_acc": -2e-7,
    "torque": -3e-5,
    "smoothness": -0.12,
    "smoothness2": -0.05,
}
REWARD_TERMS = tuple(REWARD_WEIGHTS)
TRACKING_SIGMA2 = 0.25
TARGET_AIR_TIME = 0.3


@dataclass(frozen=True)
class PushSchedule:
    """Sustained horizontal force on the base CoM."""

    magnitude: float = 0.0  # N
    duration: float = 1.0  # s
    start: float | None = None  # s; None = episode midpoint

    @property
    def active(self) -> bool:
        return self.magnitude != 0.0 and self.duration > 0.0


@dataclass(frozen=True)
class CommandProtocol:
    """How velocity commands are drawn over an episode."""

    horizon: float = 40.0
    duration: tuple[float, float] = COMMAND_DURATION
    zero_prob: float = 0.25
    angular: bool = True
    fixed: tuple[Command, ...] | None = None

    @classmethod
    def training(cls, horizon: float = 40.0) -> "CommandProtocol":
        return cls(horizon=horizon)

    @classmethod
    def evaluation(cls, horizon: float = 4.0) -> "CommandProtocol":
        """One random linear-velocity command held for the whole episode."""
        return cls(horizon=horizon, duration=(horizon, horizon), zero_prob=0.0, angular=False)

    @classmethod
    def constant(cls, command: Command | tuple[float, float, float], horizon: float) -> "CommandProtocol":
        if not isinstance(command, Command):
            command = Command(float(command[0]), float(command[1]), float(command[2]), horizon)
        return cls(horizon=horizon, fixed=(command,))

    def schedule(self, rng: np.random.Generator) -> list[Command]:
        """Commands covering the horizon; the last one may be cut short."""
        out: list[Command] = []
        t = 0.0
        if self.fixed is not None:
            while t < self.horizon - 1e-12:
                for c in self.fixed:
                    out.append(c)
                    t += c.duration
                    if t >= self.horizon - 1e-12:
                        break
                if sum(c.duration for c in self.fixed) <= 0:
                    break
            return out
        while t < self.horizon - 1e-12:
            zero = rng.random() < self.zero_prob
            c = sample_command(rng, zero=zero, duration=self.duration, angular=self.angular)
            out.append(c)
            t += c.duration
        return out


@dataclass
class CommandSegment:
    command: Command
    kind: str  # "lin", "zero" or "ang"
    indicators: list[int] = field(default_factory=list)


@dataclass
class EpisodeResult:
    terminated_early: bool
    cause: str | None
    steps: int
    horizon_steps: int
    control_dt: float
    segments: list[CommandSegment]
    reward_terms: dict[str, float]
    discounted_return: float
    penalty: float
    max_torque_ratio: float = 0.0
    min_normal_force: float = 0.0
    max_friction_excess: float = 0.0
    traces: dict[str, np.ndarray] | None = None

    def indicators(self, kind: str) -> np.ndarray:
        vals = [v for s in self.segments if s.kind == kind for v in s.indicators]
        return np.asarray(vals, dtype=np.int8)

    def tracking(self, kind: str) -> float | None:
        ind = self.indicators(kind)
        return tracking_ratio(ind) if ind.size else None

    @property
    def tr_lin(self) -> float | None:
        return self.tracking("lin")

    @property
    def tr_zero(self) -> float | None:
        return self.tracking("zero")

    @property
    def duration(self) -> float:
        return self.steps * self.control_dt

    @property
    def reward_rates(self) -> dict[str, float]:
        """Reward terms averaged per simulated second."""
        if self.steps == 0:
            return {k: 0.0 for k in self.reward_terms}
        return {k: v / self.duration for k, v in self.reward_terms.items()}


def _policy_input(sim: SimModel, x: np.ndarray, R: np.ndarray, prev_q_des: np.ndarray, cmd: Command) -> PolicyInput:
    return PolicyInput(
        gravity_axis=R[2].copy(),
        angular_velocity=x[10:13].copy(),
        joint_offset=x[13:25] - sim.q_nominal,
        joint_velocity=x[25:37].copy(),
        prev_q_des=prev_q_des.copy(),
        command=cmd.as_array(),
    )


def _rotation(x: np.ndarray) -> np.ndarray:
    R = np.empty((3, 3))
    K.quat_to_rot(x[3:7], R)
    return R


def run_episode(
    sim: SimModel,
    policy: Policy,
    protocol: CommandProtocol,
    rng: np.random.Generator,
    *,
    control_dt: float = CONTROL_DT,
    push: PushSchedule | None = None,
    record_traces: bool = False,
    state: SimState | None = None,
) -> EpisodeResult:
    """Roll out ``policy`` at the control rate until the horizon or a collision."""
    substeps = max(1, int(round(control_dt / sim.dt)))
    horizon_steps = int(round(protocol.horizon / control_dt))
    commands = protocol.schedule(rng)
    push_dir = rng.uniform(0.0, 2.0 * np.pi)
    push = push or PushSchedule()
    push_start = push.start if push.start is not None else 0.5 * protocol.horizon
    push_vec = push.magnitude * np.array([np.cos(push_dir), np.sin(push_dir), 0.0])

    st = state or initial_state(sim)
    x = st.pack()
    z0 = float(x[2])
    policy.reset()
    q_des_prev = np.array(sim.q_nominal)
    q_des_prev2 = q_des_prev.copy()
    qd_prev = x[25:37].copy()
    terms = {k: 0.0 for k in REWARD_TERMS}
    segments: list[CommandSegment] = []
    stats = StepStats()
    disc = 0.0
    gamma_t = 1.0
    penalty = 0.0
    cause = None
    steps = 0
    air = np.zeros(4)
    pts = proxy_positions(sim, x)
    contact = pts[:4, 2] < sim.rad[:4]
    traces = {"q": [], "qd": [], "tau": [], "q_des": [], "base": []} if record_traces else None

    # segment bookkeeping
    seg_idx = -1
    seg_end = 0.0
    t = 0.0
    cmd = Command(0.0, 0.0, 0.0, 0.0)

    for k in range(horizon_steps):
        while t >= seg_end - 1e-9 and seg_idx + 1 < len(commands):
            seg_idx += 1
            cmd = commands[seg_idx]
            seg_end += cmd.duration
            kind = "lin" if cmd.has_linear else ("zero" if cmd.is_zero else "ang")
            segments.append(CommandSegment(cmd, kind))
        R = _rotation(x)
        inp = _policy_input(sim, x, R, q_des_prev, cmd)
        q_des = np.asarray(policy.act(inp), dtype=float)
        policy.tick(control_dt, inp.command)
        fext = push_vec if (push.active and push_start <= t < push_start + push.duration) else None
        _, code = advance(sim, x, q_des, substeps, external_force=fext, stats=stats)
        if code != K.TERM_NONE:
            cause = TERMINATION_CAUSES[code]
            penalty = TERMINATION_PENALTY
            disc += gamma_t * TERMINATION_PENALTY
            break
        steps += 1
        t = steps * control_dt

        R = _rotation(x)
        v_body = R.T @ x[7:10]
        w = x[10:13]
        seg = segments[-1]
        if seg.kind == "lin":
            seg.indicators.append(nu_lin(v_body[:2], np.array([cmd.vx, cmd.vy])))
        elif seg.kind == "zero":
            seg.indicators.append(nu_zero(np.array([v_body[0], v_body[1], w[2]])))

        pts_new = proxy_positions(sim, x)
        foot_vel = (pts_new[:4] - pts[:4]) / control_dt
        contact_new = pts_new[:4, 2] < sim.rad[:4]
        touchdown = contact_new & ~contact
        air = np.where(contact_new, air, air + control_dt)
        tau = pd_torque(q_des, x[13:25], x[25:37], sim.kp, sim.kd, sim.torque_limits)
        qd = x[25:37]
        phi = {
            "lin_vel": math.exp(-float(np.sum((v_body[:2] - [cmd.vx, cmd.vy]) ** 2)) / TRACKING_SIGMA2),
            "ang_vel": math.exp(-float((w[2] - cmd.wz) ** 2) / TRACKING_SIGMA2),
            "orientation": float(R[2, 0] ** 2 + R[2, 1] ** 2),
            "height": float((x[2] - z0) ** 2),
            "undesired_motion": float(v_body[2] ** 2 + 0.05 * (w[0] ** 2 + w[1] ** 2)),
            "foot_slip": float(np.sum(np.where(contact_new, np.sum(foot_vel[:, :2] ** 2, axis=1), 0.0))),
            "air_time": float(np.sum(np.where(touchdown, np.abs(air - TARGET_AIR_TIME), 0.0))),
            "joint_pos": float(np.sum((x[13:25] - sim.q_nominal) ** 2)),
            "joint_vel": float(np.sum(qd ** 2)),
            "joint_acc": float(np.sum(((qd - qd_prev) / control_dt) ** 2)),
            "torque": float(np.sum(tau ** 2)),
            "smoothness": float(np.sum((q_des - q_des_prev) ** 2)),
            "smoothness2": float(np.sum((q_des - 2 * q_des_prev + q_des_prev2) ** 2)),
        }
        r = 0.0
        for name, val in phi.items():
            term = REWARD_WEIGHTS[name] * val * control_dt
            terms[name] += term
            r += term
        disc += gamma_t * r
        gamma_t *= DISCOUNT
        air = np.where(touchdown, 0.0, air)
        contact = contact_new
        pts = pts_new
        qd_prev = qd.copy()
        q_des_prev2 = q_des_prev
        q_des_prev = q_des
        if traces is not None:
            traces["q"].append(x[13:25].copy())
            traces["qd"].append(qd.copy())
            traces["tau"].append(tau)
            traces["q_des"].append(q_des.copy())
            traces["base"].append(x[0:7].copy())

    out_traces = None
    if traces is not None:
        out_traces = {k: (np.asarray(v) if v else np.zeros((0, 12 if k != "base" else 7))) for k, v in traces.items()}
    return EpisodeResult(
        terminated_early=cause is not None,
        cause=cause,
        steps=steps,
        horizon_steps=horizon_steps,
        control_dt=control_dt,
        segments=segments,
        reward_terms=terms,
        discounted_return=disc,
        penalty=penalty,
        max_torque_ratio=stats.max_torque_ratio,
        min_normal_force=stats.min_normal_force,
        max_friction_excess=max(stats.max_friction_excess, 0.0) if np.isfinite(stats.max_friction_excess) else 0.0,
        traces=out_traces,
    )


@dataclass(frozen=True)
class AdmissionResult:
    passed: bool
    cause: str | None
    time: float
    max_tilt: float
    min_height: float
    max_height: float
    initial_height: float


def stand_admission(
    sim: SimModel,
    *,
    duration: float = ADMISSION_DURATION,
    max_tilt: float = ADMISSION_TILT,
    min_height: float = ADMISSION_MIN_HEIGHT,
    control_dt: float = CONTROL_DT,
) -> AdmissionResult:
    """Hold the nominal pose for ``duration`` s from a resting start.

    Passes when no collision termination occurs, the base tilt stays below
    ``max_tilt`` and the base height stays above ``min_height`` times its
    resting value at every control sample. The height floor catches legs
    that buckle without any proxy touching the ground.
    """
    substeps = max(1, int(round(control_dt / sim.dt)))
    st = initial_state(sim)
    x = st.pack()
    z0 = float(x[2])
    zmin = zmax = z0
    worst = 0.0
    n = int(round(duration / control_dt))
    for k in range(n):
        _, code = advance(sim, x, sim.q_nominal, substeps)
        t = (k + 1) * control_dt
        if code != K.TERM_NONE:
            cause = TERMINATION_CAUSES[code]
            return AdmissionResult(False, cause, t, worst, zmin, zmax, z0)
        tilt = math.acos(max(-1.0, min(1.0, _rotation(x)[2, 2])))
        worst = max(worst, tilt)
        zmin = min(zmin, float(x[2]))
        zmax = max(zmax, float(x[2]))
        if tilt >= max_tilt:
            return AdmissionResult(False, "tilt", t, worst, zmin, zmax, z0)
        if zmin < min_height * z0:
            return AdmissionResult(False, "collapse", t, worst, zmin, zmax, z0)
    return AdmissionResult(True, None, duration, worst, zmin, zmax, z0)


def success_rate(results) -> float:
    """SR* = 1 - N_e / N_T over a nonempty set of rollouts."""
    results = list(results)
    if not results:
        raise UndefinedMetricError("success rate of zero rollouts")
    n_e = sum(1 for r in results if r.terminated_early)
    return 1.0 - n_e / len(results)


PolicyFactory = Callable[[PolicyContext], Policy]
