"""Experiment orchestration: curricula, sweeps and admission audits.

Run directory layout::

    <out>/manifest.json
    <out>/epochs/<preset>_s<seed>/NNNN.json   (curriculum modes)
    <out>/metrics/*.csv

CSV bodies depend only on the spec and seeds, never on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import __version__
from ..curriculum import (
    CurriculumSetup,
    CurriculumState,
    Split,
    Strategy,
    TrackingRecord,
    config_rng,
    epoch_update,
    initial_state,
)
from ..errors import QuadSamplerError
from ..policy import PolicyContext, make_policy
from ..robot_model import (
    PARAM_SLICES,
    ModelDataset,
    ReferenceModel,
    RobotConfiguration,
    load_dataset,
    nominal_configuration,
    total_mass,
)
from ..sampling import SamplingRange, load_pd_strategies, sample_morphology, sample_pd
from ..simulator import (
    CommandProtocol,
    SurrogateShape,
    SweepAxis,
    SweepSpec,
    build_model,
    robustness_sweep,
    run_episode,
    stand_admission,
    surrogate_oracle,
)
from .spec import PRESETS, ExperimentSpec

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class CsvTable:
    """Rows kept in memory and written in full, so partial runs still flush."""

    def __init__(self, path: Path, columns: Sequence[str]):
        self.path = Path(path)
        self.columns = tuple(columns)
        self.rows: list[list[str]] = []

    def add(self, row: dict) -> None:
        self.rows.append([_fmt(row.get(c)) for c in self.columns])

    def text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        w.writerows(self.rows)
        return buf.getvalue()

    def flush(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(self.text())


def code_digest() -> str:
    """SHA-256 over the package's Python sources, in path order."""
    root = Path(__file__).resolve().parents[1]
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.py")):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def resolve_models(spec: ExperimentSpec, dataset: ModelDataset) -> dict[str, ReferenceModel]:
    names = spec.models or dataset.names
    out = {}
    for i, n in enumerate(names):
        try:
            out[n] = dataset.model(n)
        except KeyError:
            raise spec.error(f"unknown model {n!r}; available: {', '.join(dataset.names)}", "models", i) from None
    return out


@dataclass
class RunContext:
    spec: ExperimentSpec
    dataset: ModelDataset
    models: dict[str, ReferenceModel]
    out: Path
    workers: int = 1

    def map(self, fn: Callable, tasks: list) -> list:
        if self.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as ex:
                return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * self.workers))))
        return [fn(t) for t in tasks]


def prepare(spec: ExperimentSpec, out: str | Path | None = None, workers: int = 1) -> RunContext:
    dataset = load_dataset(spec.data) if spec.data else load_dataset()
    models = resolve_models(spec, dataset)
    if spec.mode in ("robustness_sweep", "pd_grid") and spec.sweep.model not in dataset.names:
        raise spec.error(f"unknown model {spec.sweep.model!r}", "sweep", "model")
    if spec.mode in ("curriculum_compare", "surrogate_curriculum"):
        spec.per_model(len(models))
        strategies = load_pd_strategies(dataset)
        for i, p in enumerate(spec.curriculum.presets):
            gain = PRESETS[p][1]
            if gain is not None and gain not in strategies:
                raise spec.error(f"preset {p!r} needs gain preset {gain!r}, missing from the data file",
                                 "curriculum", "presets", i)
    if spec.mode == "stand_audit" and spec.audit.pd_preset is not None:
        if spec.audit.pd_preset not in load_pd_strategies(dataset):
            raise spec.error(f"unknown gain preset {spec.audit.pd_preset!r}", "audit", "pd_preset")
    out = Path(out or spec.output or Path("runs") / Path(spec.source or "run").stem)
    return RunContext(spec, dataset, models, out, max(1, int(workers)))


def write_manifest(ctx: RunContext, extra: dict | None = None) -> dict:
    strategies = load_pd_strategies(ctx.dataset)
    manifest = {
        "version": __version__,
        "code_sha256": code_digest(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "spec": ctx.spec.to_dict(),
        "seeds": list(ctx.spec.seeds),
        "data": {"path": ctx.dataset.path, "sha256": ctx.dataset.sha256},
        "models": sorted(ctx.models),
        "pd_strategies": {k: v.to_dict() for k, v in sorted(strategies.items())},
        "presets": {k: {"strategy": v[0].value, "gains": v[1], "split": v[2].to_dict()}
                    for k, v in PRESETS.items() if not k.isdigit()},
    }
    manifest.update(extra or {})
    ctx.out.mkdir(parents=True, exist_ok=True)
    (ctx.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# --------------------------------------------------------------------------
# curricula


def _setup_for(ctx: RunContext, preset: str, admission) -> tuple[Strategy, CurriculumSetup, Split]:
    strategy, gain_name, split = PRESETS[preset]
    opts = ctx.spec.curriculum
    if opts.split is not None:
        split = Split(**opts.split)
    pd = load_pd_strategies(ctx.dataset)[gain_name] if gain_name else None
    setup = CurriculumSetup(
        models=ctx.models,
        pd_strategy=pd,
        admission=admission,
        max_retries=opts.max_retries,
        step_scale=opts.step_scale,
        walk_leg_flip=opts.walk_leg_flip,
        sr_target=opts.sr_target,
        replay_factor=opts.replay_factor,
    )
    return strategy, setup, split


def _surrogate_records(state: CurriculumState, models, nominals, shape, steps) -> list[TrackingRecord]:
    out = []
    for m in state.population:
        c = m.config
        lin, zero = surrogate_oracle(c, nominals[c.reference], models[c.reference], shape)
        out.append(TrackingRecord(c.config_id, lin, zero, steps, steps))
    return out


def _physics_record(args) -> TrackingRecord:
    cfg, model, run_seed, epoch, horizon, policy, gait, dt, control_dt = args
    sim = build_model(cfg, model, dt=dt)
    ctx = PolicyContext.from_sim(sim, control_dt, gait)
    rng = np.random.default_rng(np.random.SeedSequence(int(run_seed), spawn_key=(2, cfg.config_id, int(epoch))))
    res = run_episode(sim, make_policy(policy, ctx), CommandProtocol.training(horizon), rng, control_dt=control_dt)
    return TrackingRecord.from_episodes(cfg.config_id, [res])


class _Admission:
    """Stand admission on the reduced-order simulator; picklable."""

    def __init__(self, models, dt):
        self.models = models
        self.dt = dt

    def __call__(self, cfg: RobotConfiguration) -> bool:
        sim = build_model(cfg, self.models[cfg.reference], dt=self.dt)
        return stand_admission(sim).passed


EPOCH_COLUMNS = ("preset", "seed", "epoch", "sr_before", "sr_after", "mean_tr_lin", "mean_tr_zero",
                 "mean_weight", "replaced_uniform", "replaced_replay", "replaced_weighted", "replaced_sr",
                 "retained", "admission_failures")
SUMMARY_COLUMNS = ("preset", "seed", "epochs", "final_sr", "final_mean_weight", "final_mean_tr_lin",
                   "final_mean_tr_zero")


def _write_snapshot(path: Path, state: CurriculumState, include_replay: bool) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(state.to_json(include_replay) + "\n")


def run_curriculum(ctx: RunContext, surrogate: bool, tables: dict[str, CsvTable]) -> None:
    opts = ctx.spec.curriculum
    sim_opts = ctx.spec.simulator
    per_model = ctx.spec.per_model(len(ctx.models))
    nominals = {n: nominal_configuration(m) for n, m in ctx.models.items()}
    shape = SurrogateShape(**opts.surrogate)
    steps = int(round(opts.episode_horizon / sim_opts.control_dt))
    admission = None if surrogate else _Admission(ctx.models, sim_opts.dt)

    def evaluate(state: CurriculumState) -> list[TrackingRecord]:
        if surrogate:
            return _surrogate_records(state, ctx.models, nominals, shape, steps)
        tasks = [(m.config, ctx.models[m.config.reference], state.run_seed, state.epoch, opts.episode_horizon,
                  opts.policy, ctx.dataset.gait, sim_opts.dt, sim_opts.control_dt) for m in state.population]
        return ctx.map(_physics_record, tasks)

    for preset in opts.presets:
        strategy, setup, split = _setup_for(ctx, preset, admission)
        for seed in ctx.spec.seeds:
            log.info("curriculum %s seed %d: %d epochs", preset, seed, opts.epochs)
            state = initial_state(strategy, setup, per_model, seed, split=split)
            snap_dir = ctx.out / "epochs" / f"{preset}_s{seed}"
            _write_snapshot(snap_dir / "0000.json", state, opts.snapshot_replay == "all")
            records = evaluate(state)
            for e in range(opts.epochs):
                state, rep = epoch_update(state, records, setup)
                row = {"preset": preset, "seed": seed, **rep.to_dict()}
                for k, v in rep.replaced.items():
                    row[f"replaced_{k}"] = v
                tables["epochs"].add(row)
                last = e == opts.epochs - 1
                keep_replay = opts.snapshot_replay == "all" or (last and opts.snapshot_replay == "final")
                _write_snapshot(snap_dir / f"{state.epoch:04d}.json", state, keep_replay)
                records = evaluate(state)
            weights = [r.weight for r in records]
            lin = [r.tr_lin for r in records if r.tr_lin is not None]
            zero = [r.tr_zero for r in records if r.tr_zero is not None]
            tables["summary"].add({
                "preset": preset, "seed": seed, "epochs": opts.epochs, "final_sr": state.sr.value,
                "final_mean_weight": float(np.mean(weights)),
                "final_mean_tr_lin": float(np.mean(lin)) if lin else None,
                "final_mean_tr_zero": float(np.mean(zero)) if zero else None,
            })


# --------------------------------------------------------------------------
# sweeps


def _sweep_sim(ctx: RunContext):
    opts = ctx.spec.sweep
    model = ctx.dataset.model(opts.model)
    cfg = nominal_configuration(model)
    if opts.gains is not None:
        cfg = cfg.replace(pd_gains=np.tile(opts.gains, (12, 1)))
    return build_model(cfg, model, dt=ctx.spec.simulator.dt)


def run_sweep(ctx: RunContext, tables: dict[str, CsvTable], manifests: dict) -> None:
    opts = ctx.spec.sweep
    sim = _sweep_sim(ctx)
    protocol = CommandProtocol.evaluation(opts.horizon)
    if ctx.spec.mode == "pd_grid":
        spec = SweepSpec(SweepAxis.PD_GRID, (opts.kp, opts.kd), opts.trials, protocol)
    else:
        spec = SweepSpec(SweepAxis(opts.axis), opts.grid, opts.trials, protocol, opts.push_duration)
    table = tables["sweep"]
    for seed in ctx.spec.seeds:
        log.info("sweep %s seed %d: %d points x %d trials", spec.axis.value, seed, len(spec.points()), spec.trials)
        res = robustness_sweep(sim, spec, seed=seed, policy=opts.policy, gait=ctx.dataset.gait,
                               workers=ctx.workers, control_dt=ctx.spec.simulator.control_dt)
        for p in res.points:
            row = dict(zip(res.columns, list(p.values) + [p.success_rate, p.n_e, p.n_t, p.seed]))
            table.add(row)
        manifests[str(seed)] = res.manifest()


# --------------------------------------------------------------------------
# admission audit


def _audit_one(args) -> tuple[str, bool, str | None]:
    cfg, model, dt = args
    res = stand_admission(build_model(cfg, model, dt=dt))
    return cfg.reference, res.passed, res.cause


def audit_configs(ctx: RunContext, seed: int) -> list[tuple[RobotConfiguration, ReferenceModel]]:
    opts = ctx.spec.audit
    pd = load_pd_strategies(ctx.dataset)[opts.pd_preset] if opts.pd_preset else None
    sr = SamplingRange.of(opts.sr)
    out = []
    cid = 0
    for name in sorted(ctx.models):
        model = ctx.models[name]
        for _ in range(opts.samples):
            rng = config_rng(seed, cid, 0)
            if opts.nominal:
                cfg = nominal_configuration(model, config_id=cid)
            else:
                cfg = sample_morphology(model, sr, rng, config_id=cid)
                if pd is not None:
                    cfg = cfg.replace(pd_gains=sample_pd(pd, total_mass(cfg), model.pd_nominal, sr, rng))
            if opts.gains is not None:
                cfg = cfg.replace(pd_gains=np.tile(opts.gains, (12, 1)))
            if opts.torque_scale is not None:
                p = np.array(cfg.params)
                p[PARAM_SLICES["torque_limit"]] *= opts.torque_scale
                cfg = cfg.replace(params=p)
            out.append((cfg, model))
            cid += 1
    return out


AUDIT_COLUMNS = ("seed", "model", "samples", "passed", "pass_rate", "causes")


def run_audit(ctx: RunContext, tables: dict[str, CsvTable]) -> list[dict]:
    if ctx.spec.audit.samples < 1:
        raise QuadSamplerError("audit needs at least one sample per model")
    report = []
    for seed in ctx.spec.seeds:
        pairs = audit_configs(ctx, seed)
        outs = ctx.map(_audit_one, [(c, m, ctx.spec.simulator.dt) for c, m in pairs])
        for name in sorted(ctx.models):
            rows = [o for o in outs if o[0] == name]
            causes: dict[str, int] = {}
            for _, ok, cause in rows:
                if not ok:
                    causes[cause] = causes.get(cause, 0) + 1
            passed = sum(1 for r in rows if r[1])
            entry = {"seed": seed, "model": name, "samples": len(rows), "passed": passed,
                     "pass_rate": passed / len(rows),
                     "causes": ";".join(f"{k}={v}" for k, v in sorted(causes.items()))}
            tables["audit"].add(entry)
            report.append(entry)
    return report


# --------------------------------------------------------------------------


def run_experiment(spec: ExperimentSpec, out: str | Path | None = None, workers: int = 1,
                   mode: str | None = None) -> int:
    """Execute ``spec``; returns a process exit status."""
    if mode is not None and mode != spec.mode:
        from dataclasses import replace

        spec = replace(spec, mode=mode)
    ctx = prepare(spec, out, workers)
    write_manifest(ctx)
    metrics = ctx.out / "metrics"
    tables: dict[str, CsvTable] = {}
    extra: dict = {}
    if spec.mode in ("curriculum_compare", "surrogate_curriculum"):
        tables["epochs"] = CsvTable(metrics / "curriculum_epochs.csv", EPOCH_COLUMNS)
        tables["summary"] = CsvTable(metrics / "curriculum_summary.csv", SUMMARY_COLUMNS)
    elif spec.mode in ("robustness_sweep", "pd_grid"):
        axis = SweepAxis.PD_GRID if spec.mode == "pd_grid" else SweepAxis(spec.sweep.axis)
        cols = ("kp", "kd") if axis is SweepAxis.PD_GRID else (axis.value,)
        tables["sweep"] = CsvTable(metrics / f"{spec.mode if spec.mode == 'pd_grid' else 'sweep_' + axis.value}.csv",
                                   cols + ("sr_star", "n_e", "n_t", "seed"))
    else:
        tables["audit"] = CsvTable(metrics / "audit.csv", AUDIT_COLUMNS)

    status = EXIT_OK
    try:
        if spec.mode == "surrogate_curriculum":
            run_curriculum(ctx, True, tables)
        elif spec.mode == "curriculum_compare":
            run_curriculum(ctx, False, tables)
        elif spec.mode in ("robustness_sweep", "pd_grid"):
            run_sweep(ctx, tables, extra)
        else:
            run_audit(ctx, tables)
    except Exception:
        log.exception("run failed; flushing partial results")
        status = EXIT_FAILED
    finally:
        for t in tables.values():
            t.flush()
        if extra:
            (metrics / "sweep_manifest.json").write_text(json.dumps(extra, indent=2, sort_keys=True) + "\n")
    log.info("outputs in %s", ctx.out)
    return status
