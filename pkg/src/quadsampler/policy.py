"""Policy interface and heuristic evaluation policies.

These are stand-ins for a learned controller: a stance policy holding the
nominal pose and an open-loop trot generator with velocity-proportional
stride and per-leg analytic inverse kinematics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Protocol

import numpy as np
from numba import njit

from .robot_model import NUM_LEGS

OBS_DIM = 3 + 3 + 12 + 12 + 12 + 3


@dataclass(frozen=True)
class PolicyInput:
    gravity_axis: np.ndarray  # world z in the base frame
    angular_velocity: np.ndarray  # base frame
    joint_offset: np.ndarray  # q - q_nominal
    joint_velocity: np.ndarray
    prev_q_des: np.ndarray
    command: np.ndarray  # (vx, vy, wz)

    def __post_init__(self):
        for name, n in (("gravity_axis", 3), ("angular_velocity", 3), ("joint_offset", 12),
                        ("joint_velocity", 12), ("prev_q_des", 12), ("command", 3)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, arr)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.gravity_axis, self.angular_velocity, self.joint_offset,
                               self.joint_velocity, self.prev_q_des, self.command])

    @classmethod
    def at_rest(cls, q_nominal: np.ndarray, command=(0.0, 0.0, 0.0)) -> "PolicyInput":
        return cls(np.array([0.0, 0.0, 1.0]), np.zeros(3), np.zeros(12), np.zeros(12),
                   np.array(q_nominal, dtype=float), np.asarray(command, dtype=float))


@dataclass(frozen=True, eq=False)
class PolicyContext:
    """Robot description a policy may use: nominal pose, leg geometry, limits."""

    q_nominal: np.ndarray
    geo: np.ndarray  # (4, 4, 3) c1, c2, c3, cf per leg
    sa: np.ndarray
    sh: np.ndarray
    joint_limits: np.ndarray  # (12, 2)
    leg_length: float
    control_dt: float = 0.01
    gait: Mapping[str, float] = field(default_factory=dict)
    kp: np.ndarray | None = None
    mass: float = 0.0
    gravity: float = 9.81

    @classmethod
    def from_sim(cls, sim, control_dt: float, gait: Mapping[str, float] | None = None) -> "PolicyContext":
        cf = sim.geo[0, 3]
        c3 = sim.geo[0, 2]
        return cls(
            q_nominal=np.array(sim.q_nominal),
            geo=np.array(sim.geo),
            sa=np.array(sim.sa),
            sh=np.array(sim.sh),
            joint_limits=np.array(sim.joint_limits),
            leg_length=float(np.linalg.norm(c3) + np.linalg.norm(cf)),
            control_dt=float(control_dt),
            gait=dict(gait or {}),
            kp=np.array(sim.kp),
            mass=float(sim.mass),
            gravity=float(sim.gravity),
        )


class Policy(Protocol):
    def reset(self) -> None: ...

    def act(self, inp: PolicyInput) -> np.ndarray: ...

    def tick(self, dt: float, command: np.ndarray | None = None) -> None: ...


class StancePolicy:
    """Holds the nominal joint pose regardless of input."""

    def __init__(self, context: PolicyContext):
        self.context = context
        self._q = np.array(context.q_nominal, dtype=float)
        self._q.setflags(write=False)

    def reset(self) -> None:
        pass

    def act(self, inp: PolicyInput) -> np.ndarray:
        return self._q.copy()

    def tick(self, dt: float, command: np.ndarray | None = None) -> None:
        pass


# --------------------------------------------------------------------------
# kinematics helpers for the generator


@njit(cache=True)
def _fk(geo_leg, sa, sh, a, h, k):
    c1, c2, c3, cf = geo_leg[0], geo_leg[1], geo_leg[2], geo_leg[3]
    ck, sk = np.cos(sh * k), np.sin(sh * k)
    vx = c3[0] + ck * cf[0] + sk * cf[2]
    vy = c3[1] + cf[1]
    vz = c3[2] - sk * cf[0] + ck * cf[2]
    ch, s_h = np.cos(sh * h), np.sin(sh * h)
    wx = c2[0] + ch * vx + s_h * vz
    wy = c2[1] + vy
    wz = c2[2] - s_h * vx + ch * vz
    ca, s_a = np.cos(sa * a), np.sin(sa * a)
    out = np.empty(3)
    out[0] = c1[0] + wx
    out[1] = c1[1] + ca * wy - s_a * wz
    out[2] = c1[2] + s_a * wy + ca * wz
    return out


@njit(cache=True)
def _wrap_near(t, ref):
    return (t - ref + np.pi) % (2 * np.pi) - np.pi + ref


@njit(cache=True)
def _ik(geo_leg, sa, sh, foot, q_ref):
    c1, c2, c3, cf = geo_leg[0], geo_leg[1], geo_leg[2], geo_leg[3]
    d = foot - c1
    # the hip frame y coordinate is fixed by the offsets: solve abduction
    Y = c2[1] + c3[1] + cf[1]
    r = np.hypot(d[1], d[2])
    phi = np.arctan2(d[2], d[1])
    ratio = min(max(Y / r, -1.0), 1.0) if r > 0 else 1.0
    base = np.arccos(ratio)
    a_ref = sa * q_ref[0]
    t1 = _wrap_near(phi + base, a_ref)
    t2 = _wrap_near(phi - base, a_ref)
    th = t1 if abs(t1 - a_ref) <= abs(t2 - a_ref) else t2
    c, s = np.cos(th), np.sin(th)
    # rotate d by -th about x
    sx = d[0] - c2[0]
    sz = -s * d[1] + c * d[2] - c2[2]
    # sagittal two-link problem: Ry(h) (c3 + Ry(k) cf) = (sx, sz)
    L = np.hypot(cf[0], cf[2])
    R3 = np.hypot(c3[0], c3[2])
    beta = np.arctan2(c3[0], c3[2])
    gamma = np.arctan2(cf[0], cf[2])
    s2 = sx * sx + sz * sz
    # |c3 + Ry(k) cf|^2 = R3^2 + L^2 + 2 R3 L cos(k + gamma - beta)
    cosv = min(max((s2 - R3 * R3 - L * L) / (2.0 * R3 * L), -1.0), 1.0)
    k_ref = sh * q_ref[2]
    ac = np.arccos(cosv)
    k1 = _wrap_near(beta - gamma + ac, k_ref)
    k2 = _wrap_near(beta - gamma - ac, k_ref)
    k = k1 if abs(k1 - k_ref) <= abs(k2 - k_ref) else k2
    ck, sk = np.cos(k), np.sin(k)
    vx = c3[0] + ck * cf[0] + sk * cf[2]
    vz = c3[2] - sk * cf[0] + ck * cf[2]
    h = np.arctan2(sx, sz) - np.arctan2(vx, vz)
    h = _wrap_near(h, sh * q_ref[1])
    out = np.empty(3)
    out[0] = th * sa
    out[1] = h * sh
    out[2] = k * sh
    return out


@njit(cache=True)
def _jac(geo_leg, sa, sh, q3, eps):
    J = np.empty((3, 3))
    for j in range(3):
        qp = q3.copy()
        qm = q3.copy()
        qp[j] += eps
        qm[j] -= eps
        fp = _fk(geo_leg, sa, sh, qp[0], qp[1], qp[2])
        fm = _fk(geo_leg, sa, sh, qm[0], qm[1], qm[2])
        for i in range(3):
            J[i, j] = (fp[i] - fm[i]) / (2 * eps)
    return J


def leg_fk(geo_leg: np.ndarray, sa: float, sh: float, q3: np.ndarray) -> np.ndarray:
    """Foot position in the base frame."""
    q3 = np.asarray(q3, dtype=float)
    return _fk(np.asarray(geo_leg, dtype=float), float(sa), float(sh), q3[0], q3[1], q3[2])


def leg_jacobian(geo_leg: np.ndarray, sa: float, sh: float, q3: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference foot Jacobian d foot / d q, shape (3, 3)."""
    return _jac(np.asarray(geo_leg, dtype=float), float(sa), float(sh),
                np.asarray(q3, dtype=float), float(eps))


def leg_ik(geo_leg: np.ndarray, sa: float, sh: float, foot: np.ndarray, q_ref: np.ndarray) -> np.ndarray:
    """Joint angles placing the foot at ``foot`` (base frame).

    Of the two abduction and knee branches the one closest to ``q_ref`` is
    returned. Unreachable targets are projected onto the workspace boundary.
    """
    return _ik(np.asarray(geo_leg, dtype=float), float(sa), float(sh),
               np.asarray(foot, dtype=float), np.asarray(q_ref, dtype=float))


DEFAULT_GAIT = {
    "cycle": 0.6,
    "duty": 0.55,
    "step_height": 0.07,
    "reference_leg_length": 0.4,
    "max_stride": 0.16,
    "slew_limit": 0.35,
    "command_threshold": 0.05,
    "attitude_gain": 1.0,
    "rate_gain": 0.05,
    "load_compensation": 1.0,
}

# diagonal pairs LF+RH and RF+LH, half a cycle apart
TROT_OFFSETS = np.array([0.0, 0.5, 0.5, 0.0])


class TrotPolicy:
    """Open-loop trot with velocity-proportional stride.

    Feet follow stance/swing trajectories around their nominal positions.
    The stride is the commanded foot-point velocity times the stance time
    (capped); swing feet lift along a half sine. A gait amplitude in [0, 1]
    fades in and out with the command magnitude at one unit per cycle, so a
    zero command returns the output to the nominal pose within one cycle.
    Phase and amplitude change only in :meth:`tick`.

    Stance legs are offset by ``-J^T f / K_p`` where ``f`` is their share of
    the body weight along the measured gravity axis, so the PD spring
    carries the load near the planned foot position.
    """

    def __init__(self, context: PolicyContext, **overrides: float):
        self.context = context
        gait = dict(DEFAULT_GAIT)
        gait.update({k: float(v) for k, v in context.gait.items() if k in DEFAULT_GAIT})
        gait.update(overrides)
        self.gait = gait
        scale = context.leg_length / gait["reference_leg_length"]
        self.step_height = gait["step_height"] * scale
        self.max_stride = gait["max_stride"] * scale
        self.q_nominal = np.array(context.q_nominal, dtype=float)
        self.feet_nominal = np.array([
            leg_fk(context.geo[i], context.sa[i], context.sh[i], self.q_nominal[3 * i:3 * i + 3])
            for i in range(NUM_LEGS)
        ])
        self.reset()

    def reset(self) -> None:
        self.phase = 0.0
        self.amplitude = 0.0

    def leg_phases(self) -> np.ndarray:
        return (self.phase + TROT_OFFSETS) % 1.0

    def in_stance(self) -> np.ndarray:
        return self.leg_phases() < self.gait["duty"]

    def _active(self, command: np.ndarray) -> bool:
        return float(np.linalg.norm(command)) >= self.gait["command_threshold"]

    def tick(self, dt: float, command: np.ndarray | None = None) -> None:
        cycle = self.gait["cycle"]
        self.phase = (self.phase + dt / cycle) % 1.0
        target = 1.0 if (command is not None and self._active(np.asarray(command, dtype=float))) else 0.0
        rate = dt / cycle
        if target > self.amplitude:
            self.amplitude = min(target, self.amplitude + rate)
        else:
            self.amplitude = max(target, self.amplitude - rate)
            if self.amplitude < 1e-9:
                self.amplitude = 0.0

    def foot_targets(self, inp: PolicyInput) -> np.ndarray:
        g = self.gait
        duty = g["duty"]
        t_stance = duty * g["cycle"]
        vx, vy, wz = inp.command
        amp = self.amplitude
        feet = self.feet_nominal.copy()
        if amp == 0.0:
            return feet
        phases = self.leg_phases()
        gx, gy, _ = inp.gravity_axis
        wx, wy, _ = inp.angular_velocity
        for i in range(NUM_LEGS):
            f0 = self.feet_nominal[i]
            # commanded velocity of the ground under this foot, base frame
            vfx = vx - wz * f0[1]
            vfy = vy + wz * f0[0]
            stride = np.array([vfx, vfy]) * t_stance
            n = np.linalg.norm(stride)
            if n > self.max_stride:
                stride *= self.max_stride / n
            p = phases[i]
            if p < duty:
                s = p / duty
                off = stride * (0.5 - s)
                lift = 0.0
            else:
                s = (p - duty) / (1.0 - duty)
                blend = 0.5 - 0.5 * np.cos(np.pi * s)
                off = stride * (blend - 0.5)
                lift = self.step_height * np.sin(np.pi * s)
            # extend legs on the side the base leans and is rotating toward
            level = g["attitude_gain"] * (gx * f0[0] + gy * f0[1])
            level += g["rate_gain"] * (wx * f0[1] - wy * f0[0])
            feet[i, 0] += amp * off[0]
            feet[i, 1] += amp * off[1]
            feet[i, 2] += amp * (lift + level)
        return feet

    def act(self, inp: PolicyInput) -> np.ndarray:
        ctx = self.context
        feet = self.foot_targets(inp)
        q = self.q_nominal.copy()
        amp = self.amplitude
        if amp > 0.0:
            stance = self.in_stance()
            comp = self.gait["load_compensation"] if ctx.kp is not None and ctx.mass > 0 else 0.0
            load = ctx.mass * ctx.gravity / max(int(stance.sum()), 1)
            for i in range(NUM_LEGS):
                sl = slice(3 * i, 3 * i + 3)
                qi = leg_ik(ctx.geo[i], ctx.sa[i], ctx.sh[i], feet[i], self.q_nominal[sl])
                if comp and stance[i]:
                    J = leg_jacobian(ctx.geo[i], ctx.sa[i], ctx.sh[i], qi)
                    tau = -J.T @ (load * inp.gravity_axis)
                    qi = qi + comp * amp * tau / np.maximum(ctx.kp[sl], 1e-6)
                q[sl] = qi
        q = np.clip(q, ctx.joint_limits[:, 0], ctx.joint_limits[:, 1])
        lim = self.gait["slew_limit"]
        q = inp.prev_q_des + np.clip(q - inp.prev_q_des, -lim, lim)
        return np.clip(q, ctx.joint_limits[:, 0], ctx.joint_limits[:, 1])


POLICIES = {"stance": StancePolicy, "trot": TrotPolicy}


def make_policy(name: str, context: PolicyContext, **options) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    return cls(context, **options) if options else cls(context)
