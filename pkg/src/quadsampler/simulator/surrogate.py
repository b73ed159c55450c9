"""Physics-free tracking oracle for fast curriculum experiments.

Tracking falls off with the normalized parameter distance from the reference
robot along a raised cosine: 1 at the reference, 0.5 at the half-performance
radius, 0 from twice that radius on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..robot_model import ReferenceModel, RobotConfiguration, normalize


@dataclass(frozen=True)
class SurrogateShape:
    r_lin: float = 1.3
    r_zero: float = 1.6

    def __post_init__(self):
        if not (self.r_lin > 0 and self.r_zero > 0):
            raise ValueError("half-performance radii must be positive")


def raised_cosine(d: float, radius: float) -> float:
    """1 at d = 0, 0.5 at d = radius, 0 for d >= 2 radius; nonincreasing."""
    if d >= 2.0 * radius:
        return 0.0
    return 0.5 * (1.0 + float(np.cos(np.pi * d / (2.0 * radius))))


def normalized_distance(cfg: RobotConfiguration, nominal: RobotConfiguration, model: ReferenceModel) -> float:
    a = normalize(cfg.params, model)
    b = normalize(nominal.params, model)
    return float(np.linalg.norm(a - b))


def surrogate_oracle(
    cfg: RobotConfiguration,
    nominal: RobotConfiguration,
    model: ReferenceModel,
    shape: SurrogateShape = SurrogateShape(),
) -> tuple[float, float]:
    """(Tr_lin, Tr_zero) as a smooth function of distance from ``nominal``."""
    d = normalized_distance(cfg, nominal, model)
    return raised_cosine(d, shape.r_lin), raised_cosine(d, shape.r_zero)
