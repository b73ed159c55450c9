"""Training-population curricula over robot configurations.

Three strategies share one epoch loop:

* ``uniform`` refreshes part of the population with full-range samples and
  replayed past configurations;
* ``performance_sr`` adapts the sampling range from the population's mean
  tracking and refreshes part of the population at the new range;
* ``particle_filter`` adapts the sampling range as well and additionally
  resamples well-performing configurations (weights in {0, 0.5, 1}) and
  perturbs them with a small random walk in normalized parameter space.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import QuadSamplerError, ValidationError
from .robot_model import (
    LegType,
    Provenance,
    ReferenceModel,
    RobotConfiguration,
    denormalize,
    normalize,
    total_mass,
)
from .sampling import (
    SR_INIT,
    PdKind,
    PdStrategy,
    SamplingRange,
    sample_morphology,
    sample_pd,
)
from .tracking import LIN_THRESHOLD, ZERO_THRESHOLD, nu_lin, nu_zero, tracking_ratio

log = logging.getLogger(__name__)

__all__ = [
    "LIN_THRESHOLD", "ZERO_THRESHOLD", "nu_lin", "nu_zero", "tracking_ratio",
    "SR_UP_LIN", "SR_UP_ZERO", "SR_DOWN_LIN", "SR_DOWN_ZERO", "WEIGHT_BAND",
    "update_sr", "particle_weight", "systematic_indices", "sir_resample", "nn_random_walk",
    "Strategy", "Split", "SplitCounts", "TrackingRecord", "Member", "ReplayBuffer", "CurriculumSetup",
    "CurriculumState", "EpochReport", "initial_state", "epoch_update", "config_rng", "epoch_rng",
    "SR_TARGETS", "N_TRAJ",
]

# sampling-range adaptation thresholds on population-mean tracking
SR_UP_LIN, SR_UP_ZERO = 0.65, 0.55
SR_DOWN_LIN, SR_DOWN_ZERO = 0.55, 0.40
WEIGHT_BAND = (0.4, 0.9)

N_TRAJ = 40.0  # s of simulated time per configuration per epoch
SR_TARGETS = ("both", "morphology", "pd")


def update_sr(sr: SamplingRange, tr_lin: float, tr_zero: float) -> SamplingRange:
    """Widen by one step when tracking is good, narrow by one when it is poor.

    The decrease branch is checked on either task alone: a poor zero-command
    ratio narrows the range even when linear tracking is excellent.
    """
    if tr_lin < SR_DOWN_LIN or tr_zero < SR_DOWN_ZERO:
        return sr.shifted(-1)
    if tr_lin > SR_UP_LIN and tr_zero > SR_UP_ZERO:
        return sr.shifted(+1)
    return sr


def particle_weight(tr_lin: float | None, tr_zero: float | None) -> float:
    """0.5 for each task whose tracking ratio lies in the closed band [0.4, 0.9].

    An undefined ratio (task never commanded) contributes nothing.
    """
    lo, hi = WEIGHT_BAND
    w = 0.0
    for tr in (tr_lin, tr_zero):
        if tr is not None and lo <= tr <= hi:
            w += 0.5
    return w


def systematic_indices(weights: Sequence[float], n: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: one uniform offset, ``n`` evenly spaced pointers."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty 1-d sequence")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    if n <= 0:
        return np.zeros(0, dtype=int)
    total = w.sum()
    if total <= 0:
        log.warning("all particle weights are zero; resampling uniformly")
        w = np.ones_like(w)
        total = w.sum()
    cdf = np.cumsum(w / total)
    cdf[-1] = 1.0
    u = (rng.random() + np.arange(n)) / n
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, w.size - 1)


def sir_resample(
    population: Sequence[RobotConfiguration],
    weights: Sequence[float],
    n_w: int,
    rng: np.random.Generator,
) -> list[RobotConfiguration]:
    """Draw ``n_w`` members with probability proportional to their weights."""
    if len(population) != len(weights):
        raise ValueError("population and weights differ in length")
    return [population[i] for i in systematic_indices(weights, n_w, rng)]


def _nearest(x: np.ndarray, others: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((others - x) ** 2, axis=1))


def nn_random_walk(
    cfg: RobotConfiguration,
    population: Sequence[RobotConfiguration],
    model: ReferenceModel,
    rng: np.random.Generator,
    *,
    step_scale: float = 0.05,
    leg_flip_prob: float = 0.05,
    pd_ranges: tuple[tuple[float, float], tuple[float, float]] | None = None,
    max_tries: int = 16,
    config_id: int = -1,
) -> RobotConfiguration:
    """Gaussian step from ``cfg`` in normalized parameter space.

    Each slot moves by N(0, step_scale^2) and is clamped to [0, 1]. Steps are
    redrawn (and halved after every ``max_tries`` failures) until ``cfg`` is
    the child's nearest neighbor among same-model members of ``population``,
    which keeps the walk local to its ancestor. With ``pd_ranges`` the gains
    walk too, normalized against those ranges.
    """
    if not population:
        raise ValueError("random walk needs a nonempty population")
    if step_scale < 0:
        raise ValueError("step_scale must be nonnegative")
    x0 = normalize(cfg.params, model)
    degenerate = model.param_hi <= model.param_lo
    peers = [p for p in population if p.reference == cfg.reference and p is not cfg]
    peer_x = np.array([normalize(p.params, model) for p in peers]) if peers else np.zeros((0, x0.size))
    leg_type = cfg.leg_type
    if step_scale > 0 and rng.random() < leg_flip_prob:
        leg_type = LegType.X if leg_type == LegType.A else LegType.A

    sigma = float(step_scale)
    x1 = x0
    for attempt in range(8 * max_tries):
        if attempt and attempt % max_tries == 0:
            sigma *= 0.5
        x1 = np.clip(x0 + rng.normal(0.0, sigma, x0.size), 0.0, 1.0) if sigma > 0 else x0.copy()
        x1 = np.where(degenerate, x0, x1)
        if peer_x.shape[0] == 0:
            break
        d_anc = float(np.linalg.norm(x1 - x0))
        if d_anc <= float(_nearest(x1, peer_x).min()):
            break
    else:
        x1 = x0.copy()

    gains = np.array(cfg.pd_gains, dtype=float)
    if pd_ranges is not None and step_scale > 0:
        (kp_lo, kp_hi), (kd_lo, kd_hi) = pd_ranges
        lo = np.array([kp_lo, kd_lo])
        width = np.array([kp_hi - kp_lo, kd_hi - kd_lo])
        g = np.clip((gains - lo) / width, 0.0, 1.0)
        g = np.clip(g + rng.normal(0.0, step_scale, g.shape), 0.0, 1.0)
        gains = lo + g * width
        gains[:, 0] = np.maximum(gains[:, 0], 1e-9)

    params = np.clip(denormalize(x1, model), model.param_lo, model.param_hi)
    return RobotConfiguration(
        reference=cfg.reference,
        params=params,
        pd_gains=gains,
        leg_type=leg_type,
        provenance=Provenance.PARTICLE_WALK,
        config_id=config_id,
    )


# --------------------------------------------------------------------------
# population bookkeeping


class Strategy(str, Enum):
    UNIFORM = "uniform"
    PERFORMANCE_SR = "performance_sr"
    PARTICLE_FILTER = "particle_filter"


@dataclass(frozen=True)
class SplitCounts:
    uniform: int
    replay: int
    weighted: int
    sr: int

    @property
    def total(self) -> int:
        return self.uniform + self.replay + self.weighted + self.sr


@dataclass(frozen=True)
class Split:
    """Fractions of the population replaced each epoch.

    ``uniform``: fresh draws (full range for the uniform strategy, current SR
    otherwise); ``replay``: drawn from the replay buffer; ``weighted``: SIR
    plus random walk; ``sr``: fresh draws at the adapted range.
    """

    uniform: float = 0.0
    replay: float = 0.0
    weighted: float = 0.0
    sr: float = 0.0

    def __post_init__(self):
        for name in ("uniform", "replay", "weighted", "sr"):
            v = float(getattr(self, name))
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"split fraction must lie in [0, 1], got {v}", key=f"split.{name}")
            object.__setattr__(self, name, v)
        if self.uniform + self.replay + self.weighted + self.sr > 1.0 + 1e-12:
            raise ValidationError("split fractions sum to more than 1", key="split")

    @classmethod
    def default(cls, strategy: "Strategy | str") -> "Split":
        s = Strategy(strategy)
        if s is Strategy.UNIFORM:
            return cls(uniform=0.1, replay=0.1)
        if s is Strategy.PERFORMANCE_SR:
            return cls(sr=0.1)
        return cls(uniform=0.1, replay=0.1, weighted=0.1)

    @classmethod
    def pal(cls) -> "Split":
        return cls(uniform=0.15, replay=0.15)

    def counts(self, n_p: int) -> SplitCounts:
        c = SplitCounts(*(int(round(f * n_p)) for f in (self.uniform, self.replay, self.weighted, self.sr)))
        if c.total > n_p:
            raise ValidationError(f"split replaces {c.total} of {n_p} members", key="split")
        return c

    def to_dict(self) -> dict:
        return {"uniform": self.uniform, "replay": self.replay, "weighted": self.weighted, "sr": self.sr}


@dataclass(frozen=True)
class TrackingRecord:
    """Per-configuration tracking over one epoch.

    Ratios are ``None`` when the task was never commanded. The denominators
    are this configuration's own step counts.
    """

    config_id: int
    tr_lin: float | None
    tr_zero: float | None
    steps_lin: int = 0
    steps_zero: int = 0

    def __post_init__(self):
        for name, tr, n in (("tr_lin", self.tr_lin, self.steps_lin), ("tr_zero", self.tr_zero, self.steps_zero)):
            if tr is None:
                continue
            if not (0.0 <= tr <= 1.0):
                raise ValidationError(f"{name} must lie in [0, 1], got {tr}")
            if n <= 0:
                raise ValidationError(f"{name} is defined but no steps were counted")

    @property
    def weight(self) -> float:
        return particle_weight(self.tr_lin, self.tr_zero)

    @classmethod
    def from_indicators(cls, config_id: int, lin: Sequence[int], zero: Sequence[int]) -> "TrackingRecord":
        lin, zero = list(lin), list(zero)
        return cls(config_id,
                   tracking_ratio(lin) if lin else None,
                   tracking_ratio(zero) if zero else None,
                   len(lin), len(zero))

    @classmethod
    def from_episodes(cls, config_id: int, results: Iterable) -> "TrackingRecord":
        lin: list[int] = []
        zero: list[int] = []
        for r in results:
            lin.extend(int(v) for v in r.indicators("lin"))
            zero.extend(int(v) for v in r.indicators("zero"))
        return cls.from_indicators(config_id, lin, zero)

    def to_dict(self) -> dict:
        return {"config_id": self.config_id, "tr_lin": self.tr_lin, "tr_zero": self.tr_zero,
                "steps_lin": self.steps_lin, "steps_zero": self.steps_zero}


@dataclass
class Member:
    config: RobotConfiguration
    weight: float = 0.0
    ancestor: int | None = None
    born: int = 0

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "weight": self.weight, "ancestor": self.ancestor,
                "born": self.born}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Member":
        return cls(RobotConfiguration.from_dict(d["config"]), float(d["weight"]), d.get("ancestor"),
                   int(d.get("born", 0)))


class ReplayBuffer:
    """Bounded FIFO of past configurations with uniform draws."""

    def __init__(self, capacity: int, items: Iterable[RobotConfiguration] = ()):
        if capacity < 0:
            raise ValueError("capacity must be nonnegative")
        self.capacity = int(capacity)
        self._items: deque[RobotConfiguration] = deque(items, maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def push(self, cfg: RobotConfiguration) -> None:
        if self.capacity:
            self._items.append(cfg)

    def sample(self, rng: np.random.Generator) -> RobotConfiguration:
        if not self._items:
            raise IndexError("replay buffer is empty")
        return self._items[int(rng.integers(len(self._items)))]


AdmissionFn = Callable[[RobotConfiguration], bool]


@dataclass(frozen=True)
class CurriculumSetup:
    """Everything an epoch update needs besides the state itself.

    ``admission`` returns True when a configuration may join the population;
    ``None`` admits everything (surrogate runs). ``sr_target`` selects which
    samplers the adaptive range governs.
    """

    models: Mapping[str, ReferenceModel]
    pd_strategy: PdStrategy | None = None
    admission: AdmissionFn | None = None
    max_retries: int = 10
    step_scale: float = 0.05
    walk_leg_flip: float = 0.05
    sr_target: str = "both"
    replay_factor: int = 10

    def __post_init__(self):
        if self.sr_target not in SR_TARGETS:
            raise ValidationError(f"sr_target must be one of {SR_TARGETS}", key="sr_target")
        if self.max_retries < 1:
            raise ValidationError("max_retries must be at least 1", key="max_retries")

    def ranges(self, sr: SamplingRange) -> tuple[SamplingRange, SamplingRange]:
        """(morphology range, PD range) implied by ``sr`` and the target switch."""
        full = SamplingRange.full()
        morph = sr if self.sr_target in ("both", "morphology") else full
        pd = sr if self.sr_target in ("both", "pd") else full
        return morph, pd

    def admits(self, cfg: RobotConfiguration) -> bool:
        return True if self.admission is None else bool(self.admission(cfg))


def config_rng(run_seed: int, config_id: int, epoch: int) -> np.random.Generator:
    """Stream for creating one configuration; independent of worker layout."""
    return np.random.default_rng(np.random.SeedSequence(int(run_seed), spawn_key=(1, int(config_id), int(epoch))))


def epoch_rng(run_seed: int, epoch: int) -> np.random.Generator:
    """Coordinator stream for eviction and resampling at an epoch barrier."""
    return np.random.default_rng(np.random.SeedSequence(int(run_seed), spawn_key=(0, int(epoch))))


def _fresh(model: ReferenceModel, sr: SamplingRange, setup: CurriculumSetup, rng: np.random.Generator,
           config_id: int) -> RobotConfiguration:
    morph_sr, pd_sr = setup.ranges(sr)
    cfg = sample_morphology(model, morph_sr, rng, config_id=config_id)
    if setup.pd_strategy is not None:
        gains = sample_pd(setup.pd_strategy, total_mass(cfg), model.pd_nominal, pd_sr, rng)
        cfg = cfg.replace(pd_gains=gains)
    return cfg


@dataclass
class CurriculumState:
    strategy: Strategy
    sr: SamplingRange
    population: list[Member]
    replay: ReplayBuffer
    split: Split
    run_seed: int
    epoch: int = 0
    next_id: int = 0

    @property
    def n_p(self) -> int:
        return len(self.population)

    @property
    def configs(self) -> list[RobotConfiguration]:
        return [m.config for m in self.population]

    def mean_weight(self) -> float:
        return float(np.mean([m.weight for m in self.population])) if self.population else 0.0

    def to_dict(self, include_replay: bool = True) -> dict:
        d = {
            "strategy": self.strategy.value,
            "sr": self.sr.value,
            "epoch": self.epoch,
            "run_seed": self.run_seed,
            "next_id": self.next_id,
            "split": self.split.to_dict(),
            "replay_capacity": self.replay.capacity,
            "population": [m.to_dict() for m in self.population],
        }
        if include_replay:
            d["replay"] = [c.to_dict() for c in self.replay]
        return d

    def to_json(self, include_replay: bool = True) -> str:
        return json.dumps(self.to_dict(include_replay), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "CurriculumState":
        return cls(
            strategy=Strategy(d["strategy"]),
            sr=SamplingRange.of(d["sr"]),
            population=[Member.from_dict(m) for m in d["population"]],
            replay=ReplayBuffer(int(d["replay_capacity"]),
                                (RobotConfiguration.from_dict(c) for c in d.get("replay", []))),
            split=Split(**d["split"]),
            run_seed=int(d["run_seed"]),
            epoch=int(d["epoch"]),
            next_id=int(d["next_id"]),
        )


def _admitted_fresh(model, sr, setup, run_seed, cid, epoch) -> RobotConfiguration | None:
    rng = config_rng(run_seed, cid, epoch)
    for _ in range(setup.max_retries):
        cfg = _fresh(model, sr, setup, rng, cid)
        if setup.admits(cfg):
            return cfg
    return None


def initial_state(
    strategy: Strategy | str,
    setup: CurriculumSetup,
    per_model: int,
    run_seed: int,
    *,
    split: Split | None = None,
    sr: SamplingRange | None = None,
) -> CurriculumState:
    """Population of ``per_model`` admitted configurations for every model.

    The uniform strategy starts (and stays) at the full range; the adaptive
    strategies start at the initial sampling range.
    """
    strategy = Strategy(strategy)
    split = split or Split.default(strategy)
    if sr is None:
        sr = SamplingRange.full() if strategy is Strategy.UNIFORM else SamplingRange.of(SR_INIT)
    members: list[Member] = []
    cid = 0
    for name in sorted(setup.models):
        model = setup.models[name]
        made = 0
        while made < per_model:
            cfg = _admitted_fresh(model, sr, setup, run_seed, cid, 0)
            cid += 1
            if cfg is None:
                if cid > 100 * per_model * len(setup.models):
                    raise QuadSamplerError(f"could not admit an initial configuration for {name}")
                continue
            members.append(Member(cfg, 0.0, None, 0))
            made += 1
    n_p = len(members)
    split.counts(n_p)
    return CurriculumState(strategy, sr, members, ReplayBuffer(setup.replay_factor * n_p), split,
                           int(run_seed), 0, cid)


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    sr_before: float
    sr_after: float
    mean_tr_lin: float | None
    mean_tr_zero: float | None
    mean_weight: float
    replaced: Mapping[str, int]
    retained: int
    admission_failures: int

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "sr_before": self.sr_before, "sr_after": self.sr_after,
                "mean_tr_lin": self.mean_tr_lin, "mean_tr_zero": self.mean_tr_zero,
                "mean_weight": self.mean_weight, "replaced": dict(self.replaced), "retained": self.retained,
                "admission_failures": self.admission_failures}


def _mean(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def epoch_update(
    state: CurriculumState,
    records: Sequence[TrackingRecord],
    setup: CurriculumSetup,
) -> tuple[CurriculumState, EpochReport]:
    """Apply one epoch barrier: weights, range adaptation, replacement.

    Members to replace are chosen from the lowest weights (random order among
    ties) for the particle filter and uniformly at random otherwise. Replay
    slots are skipped while the buffer is empty and resampling slots while
    every weight is zero. A replacement that fails admission ``max_retries``
    times leaves its predecessor in place.
    """
    by_id = {r.config_id: r for r in records}
    ids = [m.config.config_id for m in state.population]
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ValidationError(f"no tracking record for configurations {missing[:5]}")
    recs = [by_id[i] for i in ids]
    weights = np.array([r.weight for r in recs])
    lin_mean = _mean(r.tr_lin for r in recs)
    zero_mean = _mean(r.tr_zero for r in recs)

    next_epoch = state.epoch + 1
    rng = epoch_rng(state.run_seed, next_epoch)
    sr0 = state.sr
    sr1 = sr0
    if state.strategy is not Strategy.UNIFORM and lin_mean is not None and zero_mean is not None:
        sr1 = update_sr(sr0, lin_mean, zero_mean)

    counts = state.split.counts(state.n_p)
    n_u, n_r, n_w, n_sr = counts.uniform, counts.replay, counts.weighted, counts.sr
    if state.strategy is Strategy.UNIFORM:
        n_w, n_sr = 0, 0
    elif state.strategy is Strategy.PERFORMANCE_SR:
        n_w = 0
    if len(state.replay) == 0:
        n_r = 0
    if not np.any(weights > 0):
        n_w = 0

    # eviction order
    if state.strategy is Strategy.PARTICLE_FILTER:
        order = np.lexsort((rng.random(state.n_p), weights))
    else:
        order = rng.permutation(state.n_p)
    slots = [int(i) for i in order[: n_u + n_r + n_w + n_sr]]
    kinds = ["uniform"] * n_u + ["replay"] * n_r + ["weighted"] * n_w + ["sr"] * n_sr
    fresh_sr = SamplingRange.full() if state.strategy is Strategy.UNIFORM else sr1

    ancestors = sir_resample(state.configs, weights, n_w, rng) if n_w else []
    anc_iter = iter(ancestors)
    old_configs = state.configs
    pd_ranges = None
    if setup.pd_strategy is not None and setup.pd_strategy.kind == PdKind.ADAPTIVE_PARTICLE:
        pd_ranges = (setup.pd_strategy.kp_range, setup.pd_strategy.kd_range)

    new_pop = [Member(m.config, float(w), m.ancestor, m.born) for m, w in zip(state.population, weights)]
    replay = ReplayBuffer(state.replay.capacity, state.replay)
    next_id = state.next_id
    replaced = {"uniform": 0, "replay": 0, "weighted": 0, "sr": 0}
    failures = 0
    evicted: list[RobotConfiguration] = []

    for slot, kind in zip(slots, kinds):
        cid = next_id
        next_id += 1
        crng = config_rng(state.run_seed, cid, next_epoch)
        model = setup.models[old_configs[slot].reference]
        anc = next(anc_iter) if kind == "weighted" else None
        new_cfg = None
        for _ in range(setup.max_retries):
            if kind == "replay":
                cand = state.replay.sample(crng)
                cand = cand.replace(config_id=cid, provenance=Provenance.REPLAY)
            elif kind == "weighted":
                cand = nn_random_walk(anc, old_configs, setup.models[anc.reference], crng,
                                      step_scale=setup.step_scale, leg_flip_prob=setup.walk_leg_flip,
                                      pd_ranges=pd_ranges, config_id=cid)
            else:
                cand = _fresh(model, fresh_sr, setup, crng, cid)
            if setup.admits(cand):
                new_cfg = cand
                break
        if new_cfg is None:
            failures += 1
            log.info("epoch %d: admission retries exhausted for %s slot %d; keeping predecessor",
                     next_epoch, kind, slot)
            continue
        evicted.append(old_configs[slot])
        new_pop[slot] = Member(new_cfg, 0.0, anc.config_id if anc is not None else None, next_epoch)
        replaced[kind] += 1

    for cfg in evicted:
        replay.push(cfg)

    new_state = CurriculumState(state.strategy, sr1, new_pop, replay, state.split, state.run_seed,
                                next_epoch, next_id)
    report = EpochReport(next_epoch, sr0.value, sr1.value, lin_mean, zero_mean, float(weights.mean()),
                         replaced, state.n_p - sum(replaced.values()), failures)
    return new_state, report
