"""Reference quadruped models and the sampled robot-configuration vector.

A configuration is a flat parameter vector with named slots plus a table of
joint PD gains. Every slot has a closed envelope ``[lo, hi]`` taken from
the reference model; the normalized form maps that envelope onto ``[0, 1]``.

Joint ordering throughout the package is leg-major: LF, RF, LH, RH, each
with (abduction, hip, knee).
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from .errors import SchemaError, ValidationError

DATA_ENV_VAR = "QUADSAMPLER_DATA"

LEG_NAMES = ("LF", "RF", "LH", "RH")
JOINT_TYPES = ("abduction", "hip", "knee")
NUM_LEGS = 4
NUM_JOINTS = 12

# (front/hind sign, left/right sign) per leg
LEG_SIGNS = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])


class LegType(str, Enum):
    A = "A"  # all knees point backward
    X = "X"  # knees point toward the base centre


class Provenance(str, Enum):
    UNIFORM = "uniform"
    SR_CLIPPED = "sr_clipped"
    PARTICLE_WALK = "particle_walk"
    REPLAY = "replay"
    NOMINAL = "nominal"


def _build_layout() -> tuple[tuple[str, ...], dict[str, slice]]:
    groups = [
        ("base_mass", ["base_mass"]),
        ("limb_mass", [f"limb_mass.{leg}.{seg}" for leg in LEG_NAMES for seg in ("hip", "thigh", "shank")]),
        ("com", ["com.x", "com.y", "com.z"]),
        ("link_offset", [f"link_offset.{j}.{ax}" for j in JOINT_TYPES for ax in "xyz"]),
        ("foot_offset_z", ["foot_offset_z"]),
        ("joint_position", [f"joint_position.{j}" for j in JOINT_TYPES]),
        ("torque_limit", [f"torque_limit.{j}" for j in JOINT_TYPES]),
        ("friction", ["friction"]),
    ]
    names: list[str] = []
    slices: dict[str, slice] = {}
    for group, members in groups:
        slices[group] = slice(len(names), len(names) + len(members))
        names.extend(members)
    return tuple(names), slices


PARAM_NAMES, PARAM_SLICES = _build_layout()
NUM_PARAMS = len(PARAM_NAMES)

# Slots that always use the full envelope regardless of the sampling range.
FULL_RANGE_GROUPS = ("joint_position", "torque_limit")


def expand_joint_types(values: Sequence[float]) -> np.ndarray:
    """Replicate one value per joint type onto all 12 joints."""
    return np.tile(np.asarray(values, dtype=float).reshape(3), NUM_LEGS)


def _frozen(a: Any, shape: tuple[int, ...] | None = None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ReferenceModel:
    name: str
    leg_type: LegType
    base_mass: float
    limb_masses: np.ndarray  # (12,) leg-major hip/thigh/shank
    base_com_nominal: np.ndarray  # (3,)
    base_size: np.ndarray  # (3,) box extents
    joint_link_offsets: np.ndarray  # (3, 3) rows: abduction, hip, knee
    foot_offset_z: float
    foot_radius: float
    knee_radius: float
    nominal_joint_positions: np.ndarray  # (12,)
    joint_limits: np.ndarray  # (3, 2) per joint type
    torque_limit_nominal: np.ndarray  # (12,)
    reflected_inertia: np.ndarray  # (3,)
    joint_damping: np.ndarray  # (3,)
    pd_nominal: tuple[float, float]
    foot_friction: float
    param_lo: np.ndarray  # (NUM_PARAMS,)
    param_hi: np.ndarray

    @property
    def total_mass_nominal(self) -> float:
        return float(self.base_mass + self.limb_masses.sum())

    @property
    def nominal_params(self) -> np.ndarray:
        p = np.empty(NUM_PARAMS)
        p[PARAM_SLICES["base_mass"]] = self.base_mass
        p[PARAM_SLICES["limb_mass"]] = self.limb_masses
        p[PARAM_SLICES["com"]] = self.base_com_nominal
        p[PARAM_SLICES["link_offset"]] = self.joint_link_offsets.reshape(-1)
        p[PARAM_SLICES["foot_offset_z"]] = self.foot_offset_z
        p[PARAM_SLICES["joint_position"]] = self.nominal_joint_positions[:3]
        p[PARAM_SLICES["torque_limit"]] = self.torque_limit_nominal[:3]
        p[PARAM_SLICES["friction"]] = self.foot_friction
        return p

    @property
    def parameter_ranges(self) -> dict[str, tuple[float, float]]:
        return {n: (float(lo), float(hi)) for n, lo, hi in zip(PARAM_NAMES, self.param_lo, self.param_hi)}

    @property
    def leg_length(self) -> float:
        return float(np.linalg.norm(self.joint_link_offsets[2]) + self.foot_offset_z)


@dataclass(frozen=True, eq=False)
class RobotConfiguration:
    reference: str
    params: np.ndarray
    pd_gains: np.ndarray  # (12, 2) columns K_p, K_d
    leg_type: LegType
    provenance: Provenance
    config_id: int = -1

    def __post_init__(self):
        object.__setattr__(self, "params", _frozen(self.params, (NUM_PARAMS,)))
        object.__setattr__(self, "pd_gains", _frozen(self.pd_gains, (NUM_JOINTS, 2)))
        object.__setattr__(self, "leg_type", LegType(self.leg_type))
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    def group(self, name: str) -> np.ndarray:
        return self.params[PARAM_SLICES[name]]

    def value(self, slot: str) -> float:
        return float(self.params[PARAM_NAMES.index(slot)])

    @property
    def base_mass(self) -> float:
        return float(self.params[PARAM_SLICES["base_mass"]][0])

    @property
    def limb_masses(self) -> np.ndarray:
        return self.group("limb_mass")

    @property
    def com(self) -> np.ndarray:
        return self.group("com")

    @property
    def link_offsets(self) -> np.ndarray:
        return self.group("link_offset").reshape(3, 3)

    @property
    def foot_offset_z(self) -> float:
        return float(self.group("foot_offset_z")[0])

    @property
    def joint_positions(self) -> np.ndarray:
        return expand_joint_types(self.group("joint_position"))

    @property
    def torque_limits(self) -> np.ndarray:
        return expand_joint_types(self.group("torque_limit"))

    @property
    def friction(self) -> float:
        return float(self.group("friction")[0])

    @property
    def kp(self) -> np.ndarray:
        return self.pd_gains[:, 0]

    @property
    def kd(self) -> np.ndarray:
        return self.pd_gains[:, 1]

    def replace(self, **changes) -> "RobotConfiguration":
        return dataclasses.replace(self, **changes)

    def with_params(self, **slots: float) -> "RobotConfiguration":
        """Copy with named slots (``"friction"``, ``"com.x"``...) or groups overwritten."""
        p = np.array(self.params)
        for key, val in slots.items():
            key = key.replace("__", ".")
            if key in PARAM_SLICES:
                p[PARAM_SLICES[key]] = val
            else:
                p[PARAM_NAMES.index(key)] = val
        return self.replace(params=p)

    def to_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "reference": self.reference,
            "leg_type": self.leg_type.value,
            "provenance": self.provenance.value,
            "params": [float(x) for x in self.params],
            "pd_gains": [[float(a), float(b)] for a, b in self.pd_gains],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RobotConfiguration":
        return cls(
            reference=d["reference"],
            params=np.asarray(d["params"], dtype=float),
            pd_gains=np.asarray(d["pd_gains"], dtype=float),
            leg_type=LegType(d["leg_type"]),
            provenance=Provenance(d["provenance"]),
            config_id=int(d.get("config_id", -1)),
        )


# --------------------------------------------------------------------------
# normalization


def normalize(params: np.ndarray, model: ReferenceModel) -> np.ndarray:
    """Map slot values onto [0, 1] against the model envelope.

    Degenerate slots (lo == hi) map to 0.5.
    """
    params = np.asarray(params, dtype=float)
    width = model.param_hi - model.param_lo
    out = np.full(NUM_PARAMS, 0.5)
    ok = width > 0
    out[ok] = (params[ok] - model.param_lo[ok]) / width[ok]
    return out


def denormalize(values: np.ndarray, model: ReferenceModel) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    width = model.param_hi - model.param_lo
    return np.where(width > 0, model.param_lo + values * width, model.param_lo)


def within_envelope(params: np.ndarray, model: ReferenceModel, tol: float = 1e-12) -> bool:
    params = np.asarray(params, dtype=float)
    return bool(np.all(params >= model.param_lo - tol) and np.all(params <= model.param_hi + tol))


def total_mass(cfg: RobotConfiguration) -> float:
    return float(cfg.base_mass + cfg.limb_masses.sum())


def nominal_configuration(model: ReferenceModel, config_id: int = -1) -> RobotConfiguration:
    kp, kd = model.pd_nominal
    return RobotConfiguration(
        reference=model.name,
        params=model.nominal_params,
        pd_gains=np.tile([kp, kd], (NUM_JOINTS, 1)),
        leg_type=model.leg_type,
        provenance=Provenance.NOMINAL,
        config_id=config_id,
    )


def validate_configuration(cfg: RobotConfiguration, model: ReferenceModel) -> None:
    if cfg.reference != model.name:
        raise ValidationError(f"configuration references {cfg.reference!r}, model is {model.name!r}")
    if not within_envelope(cfg.params, model, tol=1e-9):
        bad = [PARAM_NAMES[i] for i in np.flatnonzero((cfg.params < model.param_lo - 1e-9) | (cfg.params > model.param_hi + 1e-9))]
        raise ValidationError(f"slots outside envelope: {', '.join(bad)}")
    if np.any(cfg.kp <= 0) or np.any(cfg.kd < 0):
        raise ValidationError("PD gains must satisfy K_p > 0 and K_d >= 0")


# --------------------------------------------------------------------------
# kinematics


def leg_geometry(cfg: RobotConfiguration) -> dict[str, np.ndarray]:
    """Per-leg mirrored offsets and joint axis signs in the base frame.

    Returns arrays ``c1, c2, c3, cf`` of shape (4, 3) (base to abduction,
    abduction to hip, hip to knee, knee to foot) and ``sa, sh`` of shape
    (4,) holding the abduction and hip/knee axis signs.
    """
    offs = cfg.link_offsets
    sx = LEG_SIGNS[:, 0]
    sy = LEG_SIGNS[:, 1]
    sh = np.where((cfg.leg_type == LegType.X) & (sx < 0), -1.0, 1.0)
    mirror = np.stack([sx, sy, np.ones(4)], axis=1)
    c1 = offs[0] * mirror
    c2 = offs[1] * mirror
    c3 = offs[2] * np.stack([sh, sy, np.ones(4)], axis=1)
    cf = np.tile([0.0, 0.0, -cfg.foot_offset_z], (NUM_LEGS, 1))
    return {"c1": c1, "c2": c2, "c3": c3, "cf": cf, "sa": sy.copy(), "sh": sh}


def _rx(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def foot_positions(cfg: RobotConfiguration, joint_positions: np.ndarray) -> np.ndarray:
    """Feet in the base frame, shape (4, 3)."""
    q = np.asarray(joint_positions, dtype=float).reshape(NUM_LEGS, 3)
    g = leg_geometry(cfg)
    feet = np.empty((NUM_LEGS, 3))
    for i in range(NUM_LEGS):
        a, h, k = q[i]
        ra = _rx(g["sa"][i] * a)
        rh = _ry(g["sh"][i] * h)
        rk = _ry(g["sh"][i] * k)
        feet[i] = g["c1"][i] + ra @ (g["c2"][i] + rh @ (g["c3"][i] + rk @ g["cf"][i]))
    return feet


def knee_positions(cfg: RobotConfiguration, joint_positions: np.ndarray) -> np.ndarray:
    q = np.asarray(joint_positions, dtype=float).reshape(NUM_LEGS, 3)
    g = leg_geometry(cfg)
    knees = np.empty((NUM_LEGS, 3))
    for i in range(NUM_LEGS):
        a, h, _ = q[i]
        knees[i] = g["c1"][i] + _rx(g["sa"][i] * a) @ (g["c2"][i] + _ry(g["sh"][i] * h) @ g["c3"][i])
    return knees


def link_length_sum(cfg: RobotConfiguration) -> float:
    offs = cfg.link_offsets
    return float(np.linalg.norm(offs[1]) + np.linalg.norm(offs[2]) + abs(cfg.foot_offset_z))


# --------------------------------------------------------------------------
# data files


def default_data_path() -> Path:
    env = os.environ.get(DATA_ENV_VAR)
    if env:
        return Path(env)
    return Path(str(resources.files("quadsampler") / "data" / "reference_models.yaml"))


@dataclass(frozen=True, eq=False)
class ModelDataset:
    """Everything parsed from one data file."""

    models: tuple[ReferenceModel, ...]
    pd_tables: Mapping[str, Any]
    gait: Mapping[str, float]
    path: str
    sha256: str
    raw: Mapping[str, Any] = field(repr=False)

    def model(self, name: str) -> ReferenceModel:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.models]


_MODEL_KEYS = {
    "name": str,
    "leg_type": str,
    "base_mass": float,
    "limb_masses": list,
    "base_com": list,
    "base_size": list,
    "link_offsets": dict,
    "foot_offset_z": float,
    "foot_radius": float,
    "knee_radius": float,
    "nominal_joint_positions": list,
    "joint_limits": list,
    "torque_limit": list,
    "reflected_inertia": list,
    "joint_damping": list,
    "pd_nominal": list,
    "foot_friction": float,
}


def _vector(obj: Any, key: str, n: int | Sequence[int]) -> np.ndarray:
    sizes = (n,) if isinstance(n, int) else tuple(n)
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(key, "expected a numeric list") from None
    if arr.size not in sizes:
        raise SchemaError(key, f"expected {' or '.join(map(str, sizes))} numbers, got {arr.size}")
    return arr.reshape(-1)


def _number(obj: Any, key: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise SchemaError(key, f"expected a number, got {type(obj).__name__}")
    return float(obj)


def _envelope(nominal: np.ndarray, ranges: Mapping[str, Any], key: str) -> tuple[np.ndarray, np.ndarray]:
    lo = np.empty(NUM_PARAMS)
    hi = np.empty(NUM_PARAMS)

    def frac(group: str, f: float):
        s = PARAM_SLICES[group]
        half = f * np.abs(nominal[s])
        lo[s], hi[s] = nominal[s] - half, nominal[s] + half

    try:
        frac("base_mass", float(ranges["mass_fraction"]))
        frac("limb_mass", float(ranges["mass_fraction"]))
        s = PARAM_SLICES["com"]
        for i, ax in enumerate("xyz"):
            a, b = ranges["com"][ax]
            lo[s.start + i] = nominal[s.start + i] + float(a)
            hi[s.start + i] = nominal[s.start + i] + float(b)
        s = PARAM_SLICES["link_offset"]
        half = np.maximum(float(ranges["link_offset_fraction"]) * np.abs(nominal[s]), float(ranges["link_offset_abs_min"]))
        lo[s], hi[s] = nominal[s] - half, nominal[s] + half
        frac("foot_offset_z", float(ranges["foot_offset_fraction"]))
        s = PARAM_SLICES["joint_position"]
        half = np.asarray(ranges["joint_position_abs"], dtype=float).reshape(3)
        lo[s], hi[s] = nominal[s] - half, nominal[s] + half
        frac("torque_limit", float(ranges["torque_limit_fraction"]))
        s = PARAM_SLICES["friction"]
        lo[s], hi[s] = ranges["friction"]
    except KeyError as exc:
        raise SchemaError(f"{key}.{exc.args[0]}", "missing range entry") from None
    except (TypeError, ValueError):
        raise SchemaError(key, "malformed range table") from None
    return lo, hi


def _parse_model(entry: Mapping[str, Any], idx: int, default_ranges: Mapping[str, Any]) -> ReferenceModel:
    key = f"models[{idx}]"
    if not isinstance(entry, Mapping):
        raise SchemaError(key, "expected a mapping")
    for k, typ in _MODEL_KEYS.items():
        if k not in entry:
            raise SchemaError(f"{key}.{k}", "missing required key")
    name = entry["name"]
    if not isinstance(name, str) or not name:
        raise SchemaError(f"{key}.name", "expected a non-empty string")
    key = f"models[{idx}]({name})"
    try:
        leg_type = LegType(str(entry["leg_type"]).upper())
    except ValueError:
        raise SchemaError(f"{key}.leg_type", "expected 'A' or 'X'") from None

    limb = _vector(entry["limb_masses"], f"{key}.limb_masses", (3, 12))
    limb = np.tile(limb, NUM_LEGS) if limb.size == 3 else limb
    links = entry["link_offsets"]
    if not isinstance(links, Mapping):
        raise SchemaError(f"{key}.link_offsets", "expected a mapping")
    offsets = np.stack([_vector(links.get(j), f"{key}.link_offsets.{j}", 3) for j in JOINT_TYPES])
    qn = _vector(entry["nominal_joint_positions"], f"{key}.nominal_joint_positions", (3, 12))
    tau = _vector(entry["torque_limit"], f"{key}.torque_limit", (3, 12))
    if qn.size == 12 and not np.allclose(qn, expand_joint_types(qn[:3])):
        raise ValidationError("per-joint nominal positions must repeat one (abduction, hip, knee) triple", key=f"{key}.nominal_joint_positions")
    if tau.size == 12 and not np.allclose(tau, expand_joint_types(tau[:3])):
        raise ValidationError("per-joint torque limits must repeat one triple", key=f"{key}.torque_limit")
    pd = _vector(entry["pd_nominal"], f"{key}.pd_nominal", 2)

    model_ranges = dict(default_ranges)
    model_ranges.update(entry.get("ranges") or {})
    base = dict(
        name=name,
        leg_type=leg_type,
        base_mass=_number(entry["base_mass"], f"{key}.base_mass"),
        limb_masses=_frozen(limb),
        base_com_nominal=_frozen(_vector(entry["base_com"], f"{key}.base_com", 3)),
        base_size=_frozen(_vector(entry["base_size"], f"{key}.base_size", 3)),
        joint_link_offsets=_frozen(offsets),
        foot_offset_z=_number(entry["foot_offset_z"], f"{key}.foot_offset_z"),
        foot_radius=_number(entry["foot_radius"], f"{key}.foot_radius"),
        knee_radius=_number(entry["knee_radius"], f"{key}.knee_radius"),
        nominal_joint_positions=_frozen(expand_joint_types(qn[:3])),
        joint_limits=_frozen(_vector(entry["joint_limits"], f"{key}.joint_limits", 6), (3, 2)),
        torque_limit_nominal=_frozen(expand_joint_types(tau[:3])),
        reflected_inertia=_frozen(_vector(entry["reflected_inertia"], f"{key}.reflected_inertia", 3)),
        joint_damping=_frozen(_vector(entry["joint_damping"], f"{key}.joint_damping", 3)),
        pd_nominal=(float(pd[0]), float(pd[1])),
        foot_friction=_number(entry["foot_friction"], f"{key}.foot_friction"),
        param_lo=np.zeros(NUM_PARAMS),
        param_hi=np.zeros(NUM_PARAMS),
    )
    draft = ReferenceModel(**base)
    lo, hi = _envelope(draft.nominal_params, model_ranges, f"{key}.ranges")
    model = dataclasses.replace(draft, param_lo=_frozen(lo), param_hi=_frozen(hi))
    _validate_model(model, key, entry.get("total_mass"))
    return model


def _validate_model(m: ReferenceModel, key: str, declared_total: Any) -> None:
    if m.base_mass <= 0 or np.any(m.limb_masses <= 0):
        raise ValidationError("all masses must be positive", key=f"{key}.base_mass")
    if np.any(m.torque_limit_nominal <= 0):
        raise ValidationError("torque limits must be positive", key=f"{key}.torque_limit")
    if m.pd_nominal[0] <= 0 or m.pd_nominal[1] < 0:
        raise ValidationError("pd_nominal requires K_p > 0 and K_d >= 0", key=f"{key}.pd_nominal")
    if np.any(m.reflected_inertia <= 0):
        raise ValidationError("reflected inertia must be positive", key=f"{key}.reflected_inertia")
    if np.any(m.joint_damping < 0):
        raise ValidationError("joint damping must be non-negative", key=f"{key}.joint_damping")
    if np.any(m.base_size <= 0) or m.foot_radius < 0 or m.knee_radius < 0:
        raise ValidationError("geometry sizes must be positive", key=f"{key}.base_size")
    if np.any(m.joint_limits[:, 0] >= m.joint_limits[:, 1]):
        raise ValidationError("joint limits need lo < hi", key=f"{key}.joint_limits")
    qn = m.nominal_joint_positions[:3]
    if np.any(qn < m.joint_limits[:, 0]) or np.any(qn > m.joint_limits[:, 1]):
        raise ValidationError("nominal joint positions outside joint limits", key=f"{key}.nominal_joint_positions")
    nominal = m.nominal_params
    if np.any(m.param_lo > nominal) or np.any(m.param_hi < nominal):
        bad = [PARAM_NAMES[i] for i in np.flatnonzero((m.param_lo > nominal) | (m.param_hi < nominal))]
        raise ValidationError(f"range does not contain nominal value: {', '.join(bad)}", key=f"{key}.ranges")
    for group in ("base_mass", "limb_mass", "torque_limit", "foot_offset_z", "friction"):
        if np.any(m.param_lo[PARAM_SLICES[group]] <= 0):
            raise ValidationError(f"envelope of {group} must stay positive", key=f"{key}.ranges")
    jp = PARAM_SLICES["joint_position"]
    if np.any(m.param_lo[jp] < m.joint_limits[:, 0]) or np.any(m.param_hi[jp] > m.joint_limits[:, 1]):
        raise ValidationError("joint position envelope exceeds joint limits", key=f"{key}.ranges")
    if declared_total is not None:
        total = _number(declared_total, f"{key}.total_mass")
        if abs(total - m.total_mass_nominal) > 1e-9 * total:
            raise ValidationError(
                f"total_mass {total} != base + limbs {m.total_mass_nominal}", key=f"{key}.total_mass"
            )


def parse_dataset(raw: Any, path: str = "<memory>", sha256: str = "") -> ModelDataset:
    if raw is None:
        raise SchemaError("<root>", "empty data file")
    if not isinstance(raw, Mapping):
        raise SchemaError("<root>", "expected a mapping at top level")
    if "models" not in raw:
        raise SchemaError("models", "missing required key")
    entries = raw["models"]
    if not isinstance(entries, list) or not entries:
        raise SchemaError("models", "expected a non-empty list")
    default_ranges = raw.get("default_ranges") or {}
    if not isinstance(default_ranges, Mapping):
        raise SchemaError("default_ranges", "expected a mapping")
    models = [_parse_model(e, i, default_ranges) for i, e in enumerate(entries)]
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate model names", key="models")
    models.sort(key=lambda m: m.total_mass_nominal)
    pd_tables = raw.get("pd_strategies") or {}
    gait = raw.get("gait") or {}
    if not isinstance(pd_tables, Mapping):
        raise SchemaError("pd_strategies", "expected a mapping")
    if not isinstance(gait, Mapping):
        raise SchemaError("gait", "expected a mapping")
    return ModelDataset(tuple(models), pd_tables, dict(gait), path, sha256, raw)


def load_dataset(path: str | os.PathLike | None = None) -> ModelDataset:
    path = Path(path) if path is not None else default_data_path()
    text = path.read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = getattr(getattr(exc, "problem_mark", None), "line", None)
        raise SchemaError("<root>", f"YAML parse error: {exc}", line=None if line is None else line + 1) from None
    return parse_dataset(raw, str(path), hashlib.sha256(text.encode()).hexdigest())


def load_reference_models(path: str | os.PathLike | None = None) -> list[ReferenceModel]:
    """Load and validate reference models, sorted by nominal total mass."""
    return list(load_dataset(path).models)
