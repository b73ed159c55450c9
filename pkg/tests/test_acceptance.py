"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The ``report`` fixture lives in conftest; the lines are repeated in the
pytest terminal summary.
"""

import math
import time

import numpy as np
from scipy import stats

from quadsampler.curriculum import (
    CurriculumSetup,
    TrackingRecord,
    epoch_update,
    initial_state,
    particle_weight,
    sir_resample,
    tracking_ratio,
    update_sr,
)
from quadsampler.robot_model import PARAM_SLICES, load_dataset, nominal_configuration
from quadsampler.runner import parse_spec, run_experiment
from quadsampler.sampling import (
    SamplingRange,
    load_pd_strategies,
    pd_mass_linear,
    pd_noise_factors,
    sample_morphology,
)
from quadsampler.simulator import (
    StepStats,
    advance,
    build_model,
    initial_state as sim_initial_state,
    pd_grid_sweep,
    pd_torque,
    stand_admission,
    surrogate_oracle,
    total_energy,
)

_DS = load_dataset()
MODELS = {m.name: m for m in _DS.models}


# ---- 1 --------------------------------------------------------------------


# (lin %, zero %, starting SR level); thresholds 65/55 up, 55/40 down
SR_TABLE = [
    (70, 60, 50), (66, 56, 50), (65, 60, 50), (70, 55, 50), (65, 55, 50),
    (60, 50, 50), (55, 40, 50), (64, 54, 50), (54, 60, 50), (55, 39, 50),
    (70, 35, 50), (54, 39, 50), (0, 0, 50), (100, 100, 50), (100, 100, 100),
    (0, 0, 10), (66, 56, 99), (54, 99, 11), (99, 41, 30), (99, 40, 30),
]


def _sr_oracle(lin, zero, level):
    if lin < 55 or zero < 40:
        return max(10, level - 1)
    if lin > 65 and zero > 55:
        return min(100, level + 1)
    return level


def test_criterion_1_update_sr_table(report):
    t = time.perf_counter()
    bad = []
    for lin, zero, level in SR_TABLE:
        got = update_sr(SamplingRange(level), tracking_ratio([1] * lin + [0] * (100 - lin)),
                        tracking_ratio([1] * zero + [0] * (100 - zero)))
        if got.level != _sr_oracle(lin, zero, level):
            bad.append((lin, zero, level, got.level))
    branches = {np.sign(_sr_oracle(*c) - c[2]) for c in SR_TABLE}
    el = time.perf_counter() - t
    ok = not bad and branches == {-1, 0, 1} and len(SR_TABLE) == 20 and el < 1.0
    assert report(1, "update_sr table", ok, f"{20 - len(bad)}/20 exact, mismatches {bad}", el)


# ---- 2 --------------------------------------------------------------------


def test_criterion_2_particle_weight_grid(report):
    t = time.perf_counter()
    bad = []
    for i in range(11):
        for j in range(11):
            expect = 0.5 * (4 <= i <= 9) + 0.5 * (4 <= j <= 9)
            if particle_weight(i / 10, j / 10) != expect:
                bad.append((i, j))
    el = time.perf_counter() - t
    ok = not bad and el < 1.0
    assert report(2, "particle_weight grid", ok, f"{121 - len(bad)}/121 exact", el)


# ---- 3 --------------------------------------------------------------------


def test_criterion_3_sir_chi_square(report):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    vectors = [
        np.array([1, 1, 0, 0], float),
        np.ones(10),
        np.array([0.5, 1, 0.5, 0, 1, 0.5]),
        rng.choice([0.0, 0.5, 1.0], size=40),
        rng.random(25),
    ]
    pop = [nominal_configuration(MODELS["a1"], config_id=i) for i in range(40)]
    pvals = []
    for w in vectors:
        members = pop[:len(w)]
        draws = sir_resample(members, w, 10000, rng)
        idx = {id(c): k for k, c in enumerate(members)}
        counts = np.bincount([idx[id(c)] for c in draws], minlength=len(w))
        nz = w > 0
        assert counts[~nz].sum() == 0
        expected = 10000 * w[nz] / w[nz].sum()
        pvals.append(stats.chisquare(counts[nz], expected).pvalue if nz.sum() > 1 else 1.0)
    el = time.perf_counter() - t
    ok = min(pvals) > 0.01 and el < 10.0
    assert report(3, "SIR chi-square", ok, f"min p = {min(pvals):.3g} over 5 vectors x 1e4 draws", el)


# ---- 4 --------------------------------------------------------------------


def _analytic(t, e0, inertia, kp, kd):
    w0 = math.sqrt(kp / inertia)
    z = kd / (2.0 * math.sqrt(kp * inertia))
    if abs(z - 1.0) < 1e-12:
        return e0 * math.exp(-w0 * t) * (1.0 + w0 * t)
    if z < 1.0:
        wd = w0 * math.sqrt(1.0 - z * z)
        return e0 * math.exp(-z * w0 * t) * (math.cos(wd * t) + z * w0 / wd * math.sin(wd * t))
    s = w0 * math.sqrt(z * z - 1.0)
    r1, r2 = -z * w0 + s, -z * w0 - s
    return e0 * (r2 * math.exp(r1 * t) - r1 * math.exp(r2 * t)) / (r2 - r1)


def test_criterion_4_pd_oracle(report):
    a1 = MODELS["a1"]
    base = build_model(nominal_configuration(a1), a1)
    t = time.perf_counter()
    inertia, kp, dt, j = 0.05, 5.0, 1e-4, 2
    errs = {}
    for label, kd in (("under", 0.2), ("critical", 1.0), ("over", 2.0)):
        sim = base.copy_with(gravity=0.0, kp=kp, kd=kd, joint_inertia=inertia, joint_damping=0.0, dt=dt)
        x = sim_initial_state(sim, height=5.0).pack()
        q_des = np.array(sim.q_nominal)
        q_des[j] += 0.3
        worst = 0.0
        for k in range(200):
            advance(sim, x, q_des, 100)
            tk = (k + 1) * 100 * dt
            worst = max(worst, abs((x[13 + j] - q_des[j]) - _analytic(tk, -0.3, inertia, kp, kd)))
        errs[label] = worst
    clip = pd_torque([1.0, -1.0], [0.0, 0.0], [0.0, 0.0], 1e6, 0.5, 40.0)
    sat = base.copy_with(gravity=0.0, kp=1e4, kd=0.0, torque_limits=2.0)
    x = sim_initial_state(sat, height=5.0).pack()
    st = StepStats()
    advance(sat, x, sat.q_nominal + 1.0, 10, stats=st)
    el = time.perf_counter() - t
    clip_ok = clip.tolist() == [40.0, -40.0] and st.max_torque_ratio == 1.0
    ok = max(errs.values()) < 1e-3 and clip_ok and el < 5.0
    detail = ", ".join(f"{k} {v:.1e} rad" for k, v in errs.items()) + f"; clipping exact: {clip_ok}"
    assert report(4, "PD step response", ok, detail, el)


# ---- 5 --------------------------------------------------------------------


def test_criterion_5_stand_admission(report):
    t = time.perf_counter()
    out = {}
    for name, gains in (("a1", (35.0, 0.5)), ("anymal_c", (85.0, 0.5))):
        m = MODELS[name]
        sim = build_model(nominal_configuration(m).replace(pd_gains=np.tile(gains, (12, 1))), m)
        out[f"{name} nominal"] = stand_admission(sim).passed
        out[f"{name} zero gain"] = not stand_admission(sim.copy_with(kp=0.0, kd=0.0)).passed
        out[f"{name} zero torque"] = not stand_admission(sim.copy_with(torque_limits=0.0)).passed
    el = time.perf_counter() - t
    ok = all(out.values()) and el < 30.0
    detail = ", ".join(f"{k} {'ok' if v else 'WRONG'}" for k, v in out.items())
    assert report(5, "stand admission fixtures", ok, detail, el)


# ---- 6 --------------------------------------------------------------------


def test_criterion_6_sampling_statistics(report):
    t = time.perf_counter()
    rng = np.random.default_rng(6)
    a1 = MODELS["a1"]
    sl = PARAM_SLICES["com"]
    full = SamplingRange.full()
    xs = np.array([sample_morphology(a1, full, rng).params[sl][0] for _ in range(100000)])
    support = xs.min() >= -0.15 and xs.max() <= 0.15
    coverage = (xs.max() - xs.min()) / 0.30

    s = load_pd_strategies(_DS)["genloco"]
    base = pd_mass_linear(12.0, s, None, scale=1.0)[0, 0]
    scales = np.array([pd_mass_linear(12.0, s, rng)[0, 0] for _ in range(100000)]) / base
    scale_ok = scales.min() >= 0.7 - 1e-12 and scales.max() <= 1.1 + 1e-12 and abs(scales.mean() - 0.9) <= 0.005

    f = pd_noise_factors(rng.standard_normal(100000))
    target = 1.0 - stats.norm.cdf(0.05)
    hi, lo = np.mean(f == 1.05), np.mean(f == 0.95)
    noise_ok = f.min() >= 0.95 and f.max() <= 1.05 and abs(hi - target) <= 0.01 and abs(lo - target) <= 0.01
    el = time.perf_counter() - t
    ok = support and coverage >= 0.99 and scale_ok and noise_ok and el < 30.0
    detail = (f"CoM-x in [{xs.min():.4f}, {xs.max():.4f}] cover {coverage:.4f}; GenLoco scale mean "
              f"{scales.mean():.4f}; noise boundary mass {lo:.4f}/{hi:.4f} (target {target:.4f})")
    assert report(6, "sampling statistics", ok, detail, el)


# ---- 7 --------------------------------------------------------------------


def _surrogate_run(strategy, seed, setup, nominals):
    def records(state):
        out = []
        for m in state.population:
            c = m.config
            lin, zero = surrogate_oracle(c, nominals[c.reference], MODELS[c.reference])
            out.append(TrackingRecord(c.config_id, lin, zero, 4000, 4000))
        return out

    state = initial_state(strategy, setup, 40, seed)
    reports = []
    for _ in range(50):
        state, rep = epoch_update(state, records(state), setup)
        reports.append(rep)
    return np.mean([r.weight for r in records(state)]), reports


def test_criterion_7_surrogate_comparison(report):
    t = time.perf_counter()
    setup = CurriculumSetup(models=MODELS)
    nominals = {n: nominal_configuration(m) for n, m in MODELS.items()}
    wins = 0
    sr_ok = True
    pf_w, un_w = [], []
    final_sr = []
    for seed in range(10):
        w_pf, _ = _surrogate_run("particle_filter", seed, setup, nominals)
        w_un, _ = _surrogate_run("uniform", seed, setup, nominals)
        _, reps = _surrogate_run("performance_sr", seed, setup, nominals)
        wins += w_pf >= w_un
        pf_w.append(w_pf)
        un_w.append(w_un)
        # before the first epoch whose means fail the increase branch, SR must climb
        for r in reps:
            up = r.mean_tr_lin > 0.65 and r.mean_tr_zero > 0.55
            if not up:
                break
            if not r.sr_after > r.sr_before and r.sr_before < 1.0:
                sr_ok = False
        final_sr.append(reps[-1].sr_after)
    el = time.perf_counter() - t
    ok = sr_ok and wins >= 8 and el < 300.0
    detail = (f"PF >= Uniform in {wins}/10 seeds (mean weight {np.mean(pf_w):.3f} vs {np.mean(un_w):.3f}); "
              f"PerformanceSR climbs until binding: {sr_ok}, final SR {min(final_sr):.2f}-{max(final_sr):.2f}")
    assert report(7, "surrogate curriculum comparison", ok, detail, el)


# ---- 8 --------------------------------------------------------------------


KP_GRID = [1, 5, 10, 20, 35, 60, 100, 170, 280, 450]
KD_GRID = [0.1, 0.2, 0.5, 1, 2, 4, 7, 11, 17, 25]


def test_criterion_8_pd_grid(report):
    a1 = MODELS["a1"]
    sim = build_model(nominal_configuration(a1).replace(pd_gains=np.tile([35.0, 0.5], (12, 1))), a1)
    t = time.perf_counter()
    res = pd_grid_sweep(sim, KP_GRID, KD_GRID, trials=20, seed=0)
    m = res.matrix()
    el = time.perf_counter() - t
    region = m >= 0.8
    nominal = m[KP_GRID.index(35), KD_GRID.index(0.5)]
    ok = region.any() and nominal >= 0.8 and m[0].max() <= 0.1 and el < 1200.0
    detail = (f"{int(region.sum())}/100 cells with SR* >= 0.8, SR*(35, 0.5) = {nominal:.2f}, "
              f"max SR* on K_p = 1 row = {m[0].max():.2f}")
    print("\n" + "\n".join("kp %5g: " % kp + " ".join(f"{v:.2f}" for v in row) for kp, row in zip(KP_GRID, m)))
    assert report(8, "PD grid with trot policy", ok, detail, el)


# ---- 9 --------------------------------------------------------------------


DET_SPECS = {
    "surrogate_curriculum": """\
mode: surrogate_curriculum
seeds: [0, 1]
curriculum:
  presets: [ours, pal, performance_sr]
  per_model: 10
  epochs: 10
""",
    "pd_grid": """\
mode: pd_grid
seeds: [3]
sweep:
  kp: [5, 35, 170]
  kd: [0.2, 0.5, 4]
  trials: 4
  horizon: 2.0
""",
    "curriculum_compare": """\
mode: curriculum_compare
seeds: [0]
models: [a1, anymal_c]
curriculum:
  presets: [ours]
  per_model: 4
  epochs: 2
  episode_horizon: 2.0
""",
}


def _csv_bodies(out):
    return {p.name: p.read_bytes() for p in sorted((out / "metrics").glob("*.csv"))}


def test_criterion_9_determinism(report, tmp_path):
    results = {}
    t0 = time.perf_counter()
    for name, text in DET_SPECS.items():
        spec = parse_spec(text)
        t = time.perf_counter()
        rc1 = run_experiment(spec, tmp_path / name / "a", workers=1)
        single = time.perf_counter() - t
        t = time.perf_counter()
        rc2 = run_experiment(spec, tmp_path / name / "b", workers=2)
        repeat = time.perf_counter() - t
        same = _csv_bodies(tmp_path / name / "a") == _csv_bodies(tmp_path / name / "b")
        results[name] = (rc1 == rc2 == 0 and same, single, repeat)
    el = time.perf_counter() - t0
    ok = all(r[0] for r in results.values()) and all(r[2] < 2 * r[1] for r in results.values())
    detail = "; ".join(f"{k} identical={v[0]} ({v[1]:.1f} s at 1 worker, {v[2]:.1f} s at 2)"
                       for k, v in results.items())
    assert report(9, "byte-identical CSV bodies", ok, detail, el)


# ---- 10 -------------------------------------------------------------------


def test_criterion_10_passive_drop(report):
    t = time.perf_counter()
    out = {}
    for name in ("a1", "anymal_c"):
        m = MODELS[name]
        sim = build_model(nominal_configuration(m), m).copy_with(kp=0.0, kd=0.0)
        x = sim_initial_state(sim, clearance=0.1).pack()
        st = StepStats()
        e_prev = total_energy(sim, x)
        worst, fmin = -np.inf, np.inf
        for _ in range(10000):
            advance(sim, x, sim.q_nominal, 1, check=False, stats=st)
            e = total_energy(sim, x)
            worst = max(worst, (e - e_prev) / abs(e_prev))
            fmin = min(fmin, st.min_normal_force)
            e_prev = e
        out[name] = (worst, fmin)
    el = time.perf_counter() - t
    ok = all(w <= 1e-6 and f >= 0.0 for w, f in out.values()) and el < 10.0
    detail = ", ".join(f"{k} max rel energy rise {w:.1e}, min normal force {f:.1e} N" for k, (w, f) in out.items())
    assert report(10, "passive drop invariants", ok, detail, el)
