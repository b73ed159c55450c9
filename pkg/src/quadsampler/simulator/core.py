"""Reduced-order floating-base quadruped with PD joints and penalty contacts.

Limb masses are lumped into a single rigid base (CoM and inertia evaluated
at the configuration's nominal pose). Each joint is an independent
second-order system with reflected inertia and viscous damping; contact
forces act on both the base and, through the leg Jacobian, the joints.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DomainError, IntegrationDivergedError
from ..robot_model import (
    NUM_JOINTS,
    ReferenceModel,
    RobotConfiguration,
    expand_joint_types,
    leg_geometry,
    total_mass,
)
from . import _kernels as K

GRAVITY = 9.81
PHYSICS_DT = 0.0025
CONTROL_DT = 0.01


@dataclass(frozen=True)
class ContactParams:
    """Spring-damper ground contact; coefficients scale with total mass."""

    stiffness_per_kg: float = 1000.0  # N/m per kg
    damping_per_kg: float = 30.0  # N s/m per kg
    tangential_per_kg: float = 400.0  # N s/m per kg


@dataclass(frozen=True)
class SolverParams:
    tol: float = 1e-12
    max_iter: int = 30


@dataclass(eq=False)
class SimModel:
    """Packed arrays consumed by the compiled kernels."""

    config: RobotConfiguration
    mass: float
    com: np.ndarray
    inertia: np.ndarray
    geo: np.ndarray
    sa: np.ndarray
    sh: np.ndarray
    corners: np.ndarray
    rad: np.ndarray
    props: np.ndarray
    joints: np.ndarray
    box_half: np.ndarray
    box_center: np.ndarray
    q_nominal: np.ndarray
    dt: float

    @property
    def kp(self) -> np.ndarray:
        return self.joints[K.J_KP]

    @property
    def kd(self) -> np.ndarray:
        return self.joints[K.J_KD]

    @property
    def torque_limits(self) -> np.ndarray:
        return self.joints[K.J_TMAX]

    @property
    def joint_limits(self) -> np.ndarray:
        return np.stack([self.joints[K.J_LO], self.joints[K.J_HI]], axis=1)

    @property
    def friction(self) -> float:
        return float(self.props[K.P_MU])

    @property
    def gravity(self) -> float:
        return float(self.props[K.P_G])

    def copy_with(
        self,
        *,
        kp=None,
        kd=None,
        torque_limits=None,
        friction=None,
        gravity=None,
        mass_scale: float | None = None,
        joint_inertia=None,
        joint_damping=None,
        dt: float | None = None,
    ) -> "SimModel":
        """Copy with selected physical quantities overridden."""
        joints = self.joints.copy()
        props = self.props.copy()
        mass, inertia = self.mass, self.inertia
        for row, val in ((K.J_KP, kp), (K.J_KD, kd), (K.J_TMAX, torque_limits),
                         (K.J_INERTIA, joint_inertia), (K.J_DAMP, joint_damping)):
            if val is not None:
                joints[row] = np.broadcast_to(np.asarray(val, dtype=float), NUM_JOINTS)
        if friction is not None:
            props[K.P_MU] = float(friction)
        if gravity is not None:
            props[K.P_G] = float(gravity)
        if mass_scale is not None:
            # contact coefficients stay with the unscaled robot
            mass = self.mass * float(mass_scale)
            inertia = self.inertia * float(mass_scale)
            props[K.P_MASS] = mass
        if dt is not None:
            _check_dt(dt)
            props[K.P_STEP] = float(dt)
        return replace(self, mass=mass, inertia=inertia, props=props, joints=joints,
                       dt=float(props[K.P_STEP]))


def _check_dt(dt: float) -> None:
    if not (0.0 < dt <= 0.01):
        raise DomainError(f"physics dt must lie in (0, 0.01] s, got {dt}")


def _box_inertia(m: float, size: np.ndarray) -> np.ndarray:
    a, b, c = size
    return np.diag([m * (b * b + c * c), m * (a * a + c * c), m * (a * a + b * b)]) / 12.0


def _point_inertia(m: float, r: np.ndarray) -> np.ndarray:
    return m * (np.dot(r, r) * np.eye(3) - np.outer(r, r))


def lumped_mass_properties(cfg: RobotConfiguration, model: ReferenceModel):
    """Total mass, composite CoM (base frame) and inertia about the CoM.

    Each limb link's mass sits at the midpoint of its link at the nominal pose.
    """
    g = leg_geometry(cfg)
    q = cfg.joint_positions.reshape(4, 3)
    masses = [cfg.base_mass]
    points = [np.asarray(cfg.com, dtype=float)]
    limb = cfg.limb_masses.reshape(4, 3)
    for i in range(4):
        a, h, k = q[i]
        ca, sa_ = np.cos(g["sa"][i] * a), np.sin(g["sa"][i] * a)
        rx = np.array([[1, 0, 0], [0, ca, -sa_], [0, sa_, ca]])

        def ry(t):
            c, s = np.cos(t), np.sin(t)
            return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])

        c1 = g["c1"][i]
        hip = c1 + rx @ g["c2"][i]
        knee = c1 + rx @ (g["c2"][i] + ry(g["sh"][i] * h) @ g["c3"][i])
        foot = c1 + rx @ (g["c2"][i] + ry(g["sh"][i] * h) @ (g["c3"][i] + ry(g["sh"][i] * k) @ g["cf"][i]))
        for mi, pt in zip(limb[i], (0.5 * (c1 + hip), 0.5 * (hip + knee), 0.5 * (knee + foot))):
            masses.append(mi)
            points.append(pt)
    masses = np.asarray(masses)
    points = np.asarray(points)
    m = float(masses.sum())
    com = (masses[:, None] * points).sum(axis=0) / m
    inertia = _box_inertia(cfg.base_mass, model.base_size)
    for mi, pt in zip(masses, points):
        inertia = inertia + _point_inertia(mi, pt - com)
    return m, com, inertia


def build_model(
    cfg: RobotConfiguration,
    model: ReferenceModel,
    *,
    dt: float = PHYSICS_DT,
    contact: ContactParams = ContactParams(),
    solver: SolverParams = SolverParams(),
    gravity: float = GRAVITY,
) -> SimModel:
    """Pack a configuration and its reference model for simulation."""
    _check_dt(dt)
    if cfg.reference != model.name:
        raise DomainError(f"configuration references {cfg.reference!r}, model is {model.name!r}")
    m, com, inertia = lumped_mass_properties(cfg, model)
    g = leg_geometry(cfg)
    geo = np.stack([g["c1"], g["c2"], g["c3"], g["cf"]], axis=1).astype(float)
    half = 0.5 * np.asarray(model.base_size, dtype=float)
    corners = np.array([[sx * half[0], sy * half[1], sz * half[2]]
                        for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)])
    rad = np.zeros(K.NC)
    rad[0:4] = model.foot_radius
    rad[4:8] = model.knee_radius
    mt = total_mass(cfg)
    props = np.zeros(K.NPROPS)
    props[K.P_MASS] = m
    props[K.P_G] = gravity
    props[K.P_MU] = cfg.friction
    props[K.P_KN] = contact.stiffness_per_kg * mt
    props[K.P_DN] = contact.damping_per_kg * mt
    props[K.P_DT] = contact.tangential_per_kg * mt
    props[K.P_STEP] = dt
    props[K.P_TOL] = solver.tol
    props[K.P_MAXIT] = solver.max_iter
    joints = np.zeros((7, NUM_JOINTS))
    joints[K.J_INERTIA] = expand_joint_types(model.reflected_inertia)
    joints[K.J_DAMP] = expand_joint_types(model.joint_damping)
    joints[K.J_KP] = cfg.kp
    joints[K.J_KD] = cfg.kd
    joints[K.J_TMAX] = cfg.torque_limits
    joints[K.J_LO] = expand_joint_types(model.joint_limits[:, 0])
    joints[K.J_HI] = expand_joint_types(model.joint_limits[:, 1])
    return SimModel(
        config=cfg,
        mass=m,
        com=com,
        inertia=inertia,
        geo=geo,
        sa=np.asarray(g["sa"], dtype=float),
        sh=np.asarray(g["sh"], dtype=float),
        corners=corners,
        rad=rad,
        props=props,
        joints=joints,
        box_half=half,
        box_center=np.zeros(3),
        q_nominal=np.array(cfg.joint_positions),
        dt=float(dt),
    )


@dataclass
class SimState:
    """Simulator state. ``position`` is the world position of the lumped CoM."""

    position: np.ndarray
    quaternion: np.ndarray  # (w, x, y, z)
    linear_velocity: np.ndarray  # world frame
    angular_velocity: np.ndarray  # base frame
    q: np.ndarray
    qd: np.ndarray
    time: float = 0.0
    contacts: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=bool))
    q_des: np.ndarray = field(default_factory=lambda: np.zeros(NUM_JOINTS))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.position, self.quaternion, self.linear_velocity,
                               self.angular_velocity, self.q, self.qd]).astype(float)

    @classmethod
    def unpack(cls, x: np.ndarray, time: float, contacts=None, q_des=None) -> "SimState":
        x = np.asarray(x, dtype=float)
        return cls(
            position=x[0:3].copy(),
            quaternion=x[3:7].copy(),
            linear_velocity=x[7:10].copy(),
            angular_velocity=x[10:13].copy(),
            q=x[13:25].copy(),
            qd=x[25:37].copy(),
            time=float(time),
            contacts=np.zeros(4, dtype=bool) if contacts is None else np.asarray(contacts, dtype=bool),
            q_des=np.zeros(NUM_JOINTS) if q_des is None else np.array(q_des, dtype=float),
        )

    @property
    def rotation(self) -> np.ndarray:
        R = np.empty((3, 3))
        K.quat_to_rot(np.asarray(self.quaternion, dtype=float), R)
        return R

    @property
    def gravity_axis(self) -> np.ndarray:
        """World z axis expressed in the base frame."""
        return self.rotation[2].copy()

    @property
    def tilt(self) -> float:
        """Angle between base z and world z, rad."""
        return float(np.arccos(np.clip(self.rotation[2, 2], -1.0, 1.0)))

    @property
    def body_linear_velocity(self) -> np.ndarray:
        return self.rotation.T @ self.linear_velocity


def pd_torque(q_des, q, qd, kp, kd, tau_max) -> np.ndarray:
    """Joint PD torque clipped to the actuator limits."""
    q_des, q, qd = (np.asarray(a, dtype=float) for a in (q_des, q, qd))
    kp, kd, tau_max = (np.broadcast_to(np.asarray(a, dtype=float), q.shape) for a in (kp, kd, tau_max))
    tau = kp * (q_des - q) - kd * qd
    return np.minimum(np.maximum(tau, -tau_max), tau_max)


def proxy_positions(sim: SimModel, x: np.ndarray) -> np.ndarray:
    out = np.empty((K.NC, 3))
    K.proxy_world(np.asarray(x, dtype=float), sim.geo, sim.sa, sim.sh, sim.corners, sim.com, out)
    return out


def initial_state(sim: SimModel, q: np.ndarray | None = None, *, clearance: float = 0.0,
                  height: float | None = None) -> SimState:
    """Level base at rest with the lowest foot sphere resting on the ground."""
    q = sim.q_nominal.copy() if q is None else np.asarray(q, dtype=float).copy()
    x = np.zeros(K.NX)
    x[3] = 1.0
    x[13:25] = q
    if height is None:
        pts = proxy_positions(sim, x)
        height = float(np.max(sim.rad[:4] - pts[:4, 2])) + clearance
    x[2] = height
    return SimState.unpack(x, 0.0, q_des=q)


def foot_contacts(sim: SimModel, x: np.ndarray) -> np.ndarray:
    pts = proxy_positions(sim, x)
    return pts[:4, 2] < sim.rad[:4]


def total_energy(sim: SimModel, x: np.ndarray) -> float:
    return float(K.energy(np.asarray(x, dtype=float), sim.geo, sim.sa, sim.sh, sim.corners,
                          sim.com, sim.rad, sim.inertia, sim.props, sim.joints))


def termination_code(sim: SimModel, x: np.ndarray) -> int:
    return int(K.termination(np.asarray(x, dtype=float), sim.geo, sim.sa, sim.sh, sim.corners,
                             sim.com, sim.rad, sim.box_half, sim.box_center))


@dataclass
class StepStats:
    max_torque_ratio: float = 0.0
    min_normal_force: float = 0.0
    max_friction_excess: float = -np.inf
    foot_normal_forces: np.ndarray = field(default_factory=lambda: np.zeros(4))
    newton_iterations: float = 0.0
    max_split: int = 1
    unconverged: int = 0

    def to_array(self) -> np.ndarray:
        return np.concatenate([[self.max_torque_ratio, self.min_normal_force, self.max_friction_excess],
                               self.foot_normal_forces,
                               [self.newton_iterations, self.max_split, self.unconverged]])

    def update(self, arr: np.ndarray) -> None:
        self.max_torque_ratio = float(arr[0])
        self.min_normal_force = float(arr[1])
        self.max_friction_excess = float(arr[2])
        self.foot_normal_forces = arr[3:7].copy()
        self.newton_iterations = float(arr[7])
        self.max_split = int(arr[8])
        self.unconverged = int(arr[9])


def advance(
    sim: SimModel,
    x: np.ndarray,
    q_des: np.ndarray,
    nsteps: int,
    *,
    external_force: np.ndarray | None = None,
    check: bool = True,
    stats: StepStats | None = None,
) -> tuple[int, int]:
    """Run ``nsteps`` physics steps on the packed state ``x`` in place.

    Returns (steps taken, termination code).
    """
    fext = np.zeros(3) if external_force is None else np.asarray(external_force, dtype=float)
    st = (stats or StepStats()).to_array()
    n, code = K.advance(x, int(nsteps), sim.geo, sim.sa, sim.sh, sim.corners, sim.com, sim.rad,
                        sim.inertia, sim.props, sim.joints, np.asarray(q_des, dtype=float), fext,
                        sim.box_half, sim.box_center, check, st)
    if stats is not None:
        stats.update(st)
    return int(n), int(code)


def step(state: SimState, sim: SimModel, q_des: np.ndarray, dt: float | None = None,
         *, external_force: np.ndarray | None = None) -> SimState:
    """One physics step of length ``dt`` (defaults to the model step).

    Raises IntegrationDivergedError if the state becomes non-finite.
    """
    if dt is not None and dt != sim.dt:
        sim = sim.copy_with(dt=dt)
    x = state.pack()
    n, code = advance(sim, x, q_des, 1, external_force=external_force, check=False)
    if code == K.TERM_NONFINITE:
        raise IntegrationDivergedError(state.time)
    return SimState.unpack(x, state.time + sim.dt, foot_contacts(sim, x), q_des)
