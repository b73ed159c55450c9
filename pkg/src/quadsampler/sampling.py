"""Morphology sampling, joint PD-gain strategies and command sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import DomainError, SchemaError, ValidationError
from .robot_model import (
    FULL_RANGE_GROUPS,
    NUM_JOINTS,
    NUM_PARAMS,
    PARAM_SLICES,
    LegType,
    ModelDataset,
    Provenance,
    ReferenceModel,
    RobotConfiguration,
    expand_joint_types,
)

SR_MIN = 0.1
SR_MAX = 1.0
SR_INIT = 0.1
SR_STEP = 0.01
_SR_UNITS = 100  # SR is held as an integer count of SR_STEP


@dataclass(frozen=True, order=True)
class SamplingRange:
    """Scalar sampling range, stored as integer hundredths in [10, 100]."""

    level: int = 10

    def __post_init__(self):
        object.__setattr__(self, "level", int(min(max(int(self.level), 10), _SR_UNITS)))

    @classmethod
    def of(cls, value: float) -> "SamplingRange":
        return cls(int(round(float(value) * _SR_UNITS)))

    @classmethod
    def full(cls) -> "SamplingRange":
        return cls(_SR_UNITS)

    @property
    def value(self) -> float:
        return self.level / _SR_UNITS

    def shifted(self, steps: int) -> "SamplingRange":
        return SamplingRange(self.level + steps)

    def __float__(self) -> float:
        return self.value


def scaled_interval(nominal, lo, hi, sr: float):
    """Shrink ``[lo, hi]`` toward ``nominal`` by the factor ``sr``."""
    nominal = np.asarray(nominal, dtype=float)
    return nominal - sr * (nominal - np.asarray(lo, dtype=float)), nominal + sr * (np.asarray(hi, dtype=float) - nominal)


def slot_scales(sr: float) -> np.ndarray:
    s = np.full(NUM_PARAMS, float(sr))
    for group in FULL_RANGE_GROUPS:
        s[PARAM_SLICES[group]] = 1.0
    return s


def sample_morphology(
    model: ReferenceModel,
    sr: SamplingRange,
    rng: np.random.Generator,
    *,
    leg_flip_prob: float | None = None,
    config_id: int = -1,
) -> RobotConfiguration:
    """Draw every slot uniformly inside its envelope shrunk by ``sr`` about nominal.

    Nominal joint positions and torque limits always use the full envelope.
    The leg type departs from the model's native type with probability
    ``leg_flip_prob`` (default ``0.5 * sr``, so SR = 1 is an even draw). The
    returned gains are the model's nominal pair; assign strategy gains with
    :func:`sample_pd`.
    """
    lo, hi = scaled_interval(model.nominal_params, model.param_lo, model.param_hi, slot_scales(sr.value))
    params = rng.uniform(lo, hi)
    p_flip = 0.5 * sr.value if leg_flip_prob is None else leg_flip_prob
    leg_type = model.leg_type
    if rng.random() < p_flip:
        leg_type = LegType.X if leg_type == LegType.A else LegType.A
    kp, kd = model.pd_nominal
    return RobotConfiguration(
        reference=model.name,
        params=params,
        pd_gains=np.tile([kp, kd], (NUM_JOINTS, 1)),
        leg_type=leg_type,
        provenance=Provenance.UNIFORM if sr.level == _SR_UNITS else Provenance.SR_CLIPPED,
        config_id=config_id,
    )


# --------------------------------------------------------------------------
# PD strategies


class PdKind(str, Enum):
    MASS_LINEAR = "mass_linear"
    MASS_POLYNOMIAL = "mass_polynomial"
    UNIFORM = "uniform"
    NOMINAL_INTERPOLATION = "nominal_interpolation"
    ADAPTIVE_PARTICLE = "adaptive_particle"


DEFAULT_KP_RANGE = (20.0, 450.0)
DEFAULT_KD_RANGE = (0.1, 25.0)


@dataclass(frozen=True, eq=False)
class PdStrategy:
    kind: PdKind
    name: str = ""
    anchor_masses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    anchor_kp: np.ndarray = field(default_factory=lambda: np.zeros(0))
    anchor_kd: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kp_range: tuple[float, float] = DEFAULT_KP_RANGE
    kd_range: tuple[float, float] = DEFAULT_KD_RANGE
    scale_range: tuple[float, float] = (0.7, 1.1)
    shared_scale: bool = True
    degree: int = 2
    noise_fraction: float = 0.1
    extrapolate: bool = False
    grouping: str = "joint_type"  # or "joint"

    def __post_init__(self):
        object.__setattr__(self, "kind", PdKind(self.kind))
        order = np.argsort(np.asarray(self.anchor_masses, dtype=float), kind="stable")
        for name in ("anchor_masses", "anchor_kp", "anchor_kd"):
            arr = np.asarray(getattr(self, name), dtype=float)[order] if len(order) else np.zeros(0)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.grouping not in ("joint_type", "joint"):
            raise ValidationError(f"unknown grouping {self.grouping!r}", key="grouping")
        if self.kind in (PdKind.MASS_LINEAR, PdKind.MASS_POLYNOMIAL, PdKind.NOMINAL_INTERPOLATION):
            if len(self.anchor_masses) < 2:
                raise ValidationError(f"{self.kind.value} needs at least two anchors", key=self.name)
            if len(np.unique(self.anchor_masses)) != len(self.anchor_masses):
                raise ValidationError("anchor masses must be distinct", key=self.name)
            if np.any(self.anchor_kp <= 0) or np.any(self.anchor_kd < 0):
                raise ValidationError("anchor gains need K_p > 0, K_d >= 0", key=self.name)
        if self.kind in (PdKind.MASS_LINEAR, PdKind.MASS_POLYNOMIAL):
            grid = np.linspace(*self.mass_domain, 513)
            kp, kd = self._fit_eval(grid)
            lo_scale = self.scale_range[0] if self.kind == PdKind.MASS_LINEAR else 1.0
            if np.any(kp * lo_scale <= 0) or np.any(kd * lo_scale < 0):
                raise ValidationError("gain mapping is not positive over its mass domain", key=self.name)

    @property
    def mass_domain(self) -> tuple[float, float]:
        return 0.5 * float(self.anchor_masses[0]), 2.0 * float(self.anchor_masses[-1])

    @property
    def fit_degree(self) -> int:
        if self.kind == PdKind.MASS_LINEAR:
            return 1
        return int(min(self.degree, len(self.anchor_masses) - 1))

    @property
    def coefficients(self) -> dict[str, list[float]]:
        """Polynomial coefficients (highest power first) of the mass mappings."""
        if self.kind not in (PdKind.MASS_LINEAR, PdKind.MASS_POLYNOMIAL):
            return {}
        return {"kp": list(map(float, self._coef[0])), "kd": list(map(float, self._coef[1]))}

    @property
    def _coef(self) -> tuple[np.ndarray, np.ndarray]:
        cached = self.__dict__.get("_coef_cache")
        if cached is None:
            m, d = self.anchor_masses, self.fit_degree
            if d == 1 and len(m) == 2:
                slope_p = (self.anchor_kp[1] - self.anchor_kp[0]) / (m[1] - m[0])
                slope_d = (self.anchor_kd[1] - self.anchor_kd[0]) / (m[1] - m[0])
                cached = (
                    np.array([slope_p, self.anchor_kp[0] - slope_p * m[0]]),
                    np.array([slope_d, self.anchor_kd[0] - slope_d * m[0]]),
                )
            else:
                cached = (np.polyfit(m, self.anchor_kp, d), np.polyfit(m, self.anchor_kd, d))
            self.__dict__["_coef_cache"] = cached
        return cached

    def _fit_eval(self, mass):
        ckp, ckd = self._coef
        return np.polyval(ckp, mass), np.polyval(ckd, mass)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "kind": self.kind.value,
            "anchor_masses": self.anchor_masses.tolist(),
            "anchor_kp": self.anchor_kp.tolist(),
            "anchor_kd": self.anchor_kd.tolist(),
            "kp_range": list(self.kp_range),
            "kd_range": list(self.kd_range),
            "scale_range": list(self.scale_range),
            "shared_scale": self.shared_scale,
            "degree": self.fit_degree if self.anchor_masses.size else self.degree,
            "noise_fraction": self.noise_fraction,
            "extrapolate": self.extrapolate,
            "grouping": self.grouping,
        }
        if self.coefficients:
            d["coefficients"] = self.coefficients
        return d


def _replicate(kp, kd) -> np.ndarray:
    return np.stack([np.broadcast_to(kp, NUM_JOINTS), np.broadcast_to(kd, NUM_JOINTS)], axis=1).astype(float)


def _check_mass(total_mass: float, strategy: PdStrategy) -> None:
    lo, hi = strategy.mass_domain
    if not (lo <= total_mass <= hi):
        raise DomainError(f"{strategy.name or strategy.kind.value}: mass {total_mass:.3f} kg outside [{lo:.3f}, {hi:.3f}]")


def pd_mass_linear(
    total_mass: float,
    strategy: PdStrategy,
    rng: np.random.Generator,
    *,
    scale: float | tuple[float, float] | None = None,
) -> np.ndarray:
    """Gains from a line through the anchors, times a uniform scale factor.

    ``scale`` overrides the random draw: one number for both gains, or a
    (K_p, K_d) pair.
    """
    _check_mass(total_mass, strategy)
    ckp, ckd = strategy._coef
    kp = float(ckp[0] * total_mass + ckp[1])
    kd = float(ckd[0] * total_mass + ckd[1])
    if scale is None:
        a, b = strategy.scale_range
        if strategy.shared_scale:
            sp = sd = rng.uniform(a, b)
        else:
            sp, sd = rng.uniform(a, b, size=2)
    elif np.ndim(scale) == 0:
        sp = sd = float(scale)
    else:
        sp, sd = scale
    return _replicate(kp * sp, kd * sd)


def pd_mass_polynomial(total_mass: float, strategy: PdStrategy) -> np.ndarray:
    """Least-squares polynomial map from total mass to gains."""
    _check_mass(total_mass, strategy)
    kp, kd = strategy._fit_eval(float(total_mass))
    return _replicate(float(kp), float(kd))


def _group_draw(rng: np.random.Generator, lo, hi, grouping: str) -> np.ndarray:
    if grouping == "joint":
        return rng.uniform(lo, hi, size=NUM_JOINTS)
    return expand_joint_types(rng.uniform(lo, hi, size=3))


def pd_uniform(
    kp_range: tuple[float, float],
    kd_range: tuple[float, float],
    sr: SamplingRange | float,
    rng: np.random.Generator,
    *,
    nominal: tuple[float, float] | None = None,
    grouping: str = "joint_type",
) -> np.ndarray:
    """Uniform gains in the declared ranges shrunk by ``sr`` about ``nominal``.

    ``nominal`` defaults to the range midpoint. With ``grouping="joint_type"``
    one pair is drawn per joint type and shared by the four legs.
    """
    srv = sr.value if isinstance(sr, SamplingRange) else float(sr)
    (kp_lo, kp_hi), (kd_lo, kd_hi) = kp_range, kd_range
    if kp_lo > kp_hi or kd_lo > kd_hi:
        raise DomainError("gain ranges need min <= max")
    if nominal is None:
        nominal = (0.5 * (kp_lo + kp_hi), 0.5 * (kd_lo + kd_hi))
    nkp = min(max(nominal[0], kp_lo), kp_hi)
    nkd = min(max(nominal[1], kd_lo), kd_hi)
    a_p, b_p = scaled_interval(nkp, kp_lo, kp_hi, srv)
    a_d, b_d = scaled_interval(nkd, kd_lo, kd_hi, srv)
    kp = _group_draw(rng, a_p, b_p, grouping)
    kd = _group_draw(rng, a_d, b_d, grouping)
    return np.stack([kp, kd], axis=1)


def _interp_extrap(x: float, xs: np.ndarray, ys: np.ndarray) -> float:
    if x < xs[0]:
        return float(ys[0] + (x - xs[0]) * (ys[1] - ys[0]) / (xs[1] - xs[0]))
    if x > xs[-1]:
        return float(ys[-1] + (x - xs[-1]) * (ys[-1] - ys[-2]) / (xs[-1] - xs[-2]))
    return float(np.interp(x, xs, ys))


def interpolated_nominal(total_mass: float, strategy: PdStrategy) -> tuple[float, float, float, float]:
    """(K_p, K_d, K_p half-width, K_d half-width) at ``total_mass``."""
    m = strategy.anchor_masses
    if not strategy.extrapolate and not (m[0] <= total_mass <= m[-1]):
        raise DomainError(
            f"{strategy.name or 'interpolation'}: mass {total_mass:.3f} kg outside anchors [{m[0]}, {m[-1]}]"
        )
    kp = _interp_extrap(total_mass, m, strategy.anchor_kp)
    kd = _interp_extrap(total_mass, m, strategy.anchor_kd)
    hw_p = _interp_extrap(total_mass, m, strategy.noise_fraction * strategy.anchor_kp)
    hw_d = _interp_extrap(total_mass, m, strategy.noise_fraction * strategy.anchor_kd)
    # extrapolation may cross zero; keep the gain invariants
    kp = max(kp, 1e-3)
    kd = max(kd, 0.0)
    return kp, kd, max(hw_p, 0.0), max(hw_d, 0.0)


def pd_nominal_interpolation(
    total_mass: float,
    strategy: PdStrategy,
    rng: np.random.Generator,
    *,
    noise: bool = True,
) -> np.ndarray:
    """Piecewise-linear nominal gains by mass plus a narrow uniform noise.

    Nominal gains and their noise half-widths are interpolated together.
    """
    kp, kd, hw_p, hw_d = interpolated_nominal(total_mass, strategy)
    if not noise:
        return _replicate(kp, kd)
    dkp = _group_draw(rng, -hw_p, hw_p, strategy.grouping)
    dkd = _group_draw(rng, -hw_d, hw_d, strategy.grouping)
    return np.stack([np.maximum(kp + dkp, 1e-3), np.maximum(kd + dkd, 0.0)], axis=1)


PD_NOISE_BOUNDS = (0.95, 1.05)


def pd_noise_factors(eps: np.ndarray) -> np.ndarray:
    return np.clip(1.0 + np.asarray(eps, dtype=float), *PD_NOISE_BOUNDS)


def rescale_pd_noise(gains: np.ndarray, rng: np.random.Generator, *, eps: np.ndarray | None = None) -> np.ndarray:
    """Multiply each of the 24 gains by ``clip(1 + eps, 0.95, 1.05)``, ``eps ~ N(0, 1)``."""
    gains = np.asarray(gains, dtype=float).reshape(NUM_JOINTS, 2)
    if eps is None:
        eps = rng.standard_normal(gains.shape)
    return gains * pd_noise_factors(np.broadcast_to(eps, gains.shape))


def sample_pd(
    strategy: PdStrategy,
    total_mass: float,
    nominal: tuple[float, float],
    sr: SamplingRange,
    rng: np.random.Generator,
) -> np.ndarray:
    """Dispatch to the strategy's gain sampler.

    Uniform draws use SR = 1; the adaptive strategy clips the uniform range by
    the current ``sr`` about the model's nominal pair.
    """
    k = strategy.kind
    if k == PdKind.MASS_LINEAR:
        return pd_mass_linear(total_mass, strategy, rng)
    if k == PdKind.MASS_POLYNOMIAL:
        return pd_mass_polynomial(total_mass, strategy)
    if k == PdKind.NOMINAL_INTERPOLATION:
        return pd_nominal_interpolation(total_mass, strategy, rng)
    srv = SamplingRange.full() if k == PdKind.UNIFORM else sr
    return pd_uniform(strategy.kp_range, strategy.kd_range, srv, rng, nominal=nominal, grouping=strategy.grouping)


def load_pd_strategies(dataset: ModelDataset) -> dict[str, PdStrategy]:
    """Resolve the data file's gain presets; anchors are keyed by model name."""
    tables = dataset.pd_tables
    urange = tables.get("uniform_range", {}) if isinstance(tables, Mapping) else {}
    kp_range = tuple(float(x) for x in urange.get("kp", DEFAULT_KP_RANGE))
    kd_range = tuple(float(x) for x in urange.get("kd", DEFAULT_KD_RANGE))
    presets = tables.get("presets", {}) if isinstance(tables, Mapping) else {}
    out: dict[str, PdStrategy] = {}
    for name, entry in presets.items():
        key = f"pd_strategies.presets.{name}"
        if not isinstance(entry, Mapping) or "kind" not in entry:
            raise SchemaError(f"{key}.kind", "missing required key")
        try:
            kind = PdKind(entry["kind"])
        except ValueError:
            raise SchemaError(f"{key}.kind", f"unknown strategy kind {entry['kind']!r}") from None
        masses, kps, kds = [], [], []
        for model_name, pair in (entry.get("anchors") or {}).items():
            try:
                model = dataset.model(model_name)
            except KeyError:
                raise SchemaError(f"{key}.anchors.{model_name}", "unknown reference model") from None
            masses.append(model.total_mass_nominal)
            kps.append(float(pair[0]))
            kds.append(float(pair[1]))
        out[name] = PdStrategy(
            kind=kind,
            name=name,
            anchor_masses=np.array(masses),
            anchor_kp=np.array(kps),
            anchor_kd=np.array(kds),
            kp_range=kp_range,
            kd_range=kd_range,
            scale_range=tuple(entry.get("scale", (0.7, 1.1))),
            shared_scale=bool(entry.get("shared_scale", True)),
            degree=int(entry.get("degree", 2)),
            noise_fraction=float(entry.get("noise_fraction", 0.1)),
            extrapolate=bool(entry.get("extrapolate", kind == PdKind.NOMINAL_INTERPOLATION)),
            grouping=str(entry.get("grouping", "joint_type")),
        )
    return out


# --------------------------------------------------------------------------
# commands

V_X_MAX = 1.0
V_Y_MAX = 0.75
OMEGA_Z_MAX = 1.5
COMMAND_DURATION = (3.0, 6.0)


@dataclass(frozen=True)
class Command:
    vx: float
    vy: float
    wz: float
    duration: float

    @property
    def is_zero(self) -> bool:
        return self.vx == 0.0 and self.vy == 0.0 and self.wz == 0.0

    @property
    def has_linear(self) -> bool:
        return self.vx != 0.0 or self.vy != 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.wz])


def sample_command(
    rng: np.random.Generator,
    *,
    zero: bool = False,
    duration: tuple[float, float] = COMMAND_DURATION,
    angular: bool = True,
) -> Command:
    """Uniform velocity command in the training box with a uniform duration."""
    vx = rng.uniform(-V_X_MAX, V_X_MAX)
    vy = rng.uniform(-V_Y_MAX, V_Y_MAX)
    wz = rng.uniform(-OMEGA_Z_MAX, OMEGA_Z_MAX) if angular else 0.0
    t = rng.uniform(*duration)
    if zero:
        return Command(0.0, 0.0, 0.0, t)
    return Command(float(vx), float(vy), float(wz), float(t))
