import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadsampler.curriculum import (
    CurriculumSetup,
    CurriculumState,
    ReplayBuffer,
    Split,
    TrackingRecord,
    epoch_update,
    initial_state,
    nn_random_walk,
    nu_lin,
    nu_zero,
    particle_weight,
    sir_resample,
    systematic_indices,
    tracking_ratio,
    update_sr,
)
from quadsampler.errors import DomainError, UndefinedMetricError, ValidationError
from quadsampler.robot_model import Provenance, load_dataset, nominal_configuration, normalize
from quadsampler.sampling import SamplingRange

_DS = load_dataset()
MODELS = {m.name: m for m in _DS.models}


# ---- indicators -----------------------------------------------------------


def test_nu_lin_examples():
    assert nu_lin((1, 0), (1, 0)) == 1
    assert nu_lin((0, 0), (1, 0)) == 0
    assert nu_lin((0.375 + 1e-9, 0), (1, 0)) == 1
    assert nu_lin((0.375 - 1e-9, 0), (1, 0)) == 0
    with pytest.raises(DomainError):
        nu_lin((1, 0), (0, 0))


def test_nu_lin_uses_projection_not_norm():
    # large sideways speed does not count as tracking a forward command
    assert nu_lin((0.1, 2.0), (1, 0)) == 0
    assert nu_lin((0.0, 0.5), (0, -0.2)) == 0
    assert nu_lin((0.0, -0.5), (0, -0.2)) == 1


def test_nu_zero_examples():
    assert nu_zero((0, 0, 0)) == 1
    assert nu_zero((0.2, 0, 0)) == 0
    assert nu_zero((0.1, 0.1, 0.1)) == 1


def test_tracking_ratio_examples():
    assert tracking_ratio([1] * 10) == 1.0
    assert tracking_ratio([0] * 10) == 0.0
    assert tracking_ratio([1, 0, 1, 0]) == 0.5
    with pytest.raises(UndefinedMetricError):
        tracking_ratio([])


# ---- sampling-range rule --------------------------------------------------


@pytest.mark.parametrize("lin,zero,delta", [
    (0.70, 0.60, +1),
    (0.60, 0.50, 0),
    (0.70, 0.35, -1),
])
def test_update_sr_examples(lin, zero, delta):
    sr = SamplingRange.of(0.5)
    assert update_sr(sr, lin, zero).level == sr.level + delta


def test_update_sr_clamps():
    assert update_sr(SamplingRange.full(), 0.9, 0.9).value == 1.0
    assert update_sr(SamplingRange.of(0.1), 0.0, 0.0).value == 0.1


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=60),
       st.integers(10, 100))
def test_sr_walk_is_bounded(trs, level):
    sr = SamplingRange(level)
    for lin, zero in trs:
        nxt = update_sr(sr, lin, zero)
        assert abs(nxt.level - sr.level) <= 1
        assert 0.1 <= nxt.value <= 1.0
        sr = nxt


# ---- particle weights -----------------------------------------------------


def test_particle_weight_examples():
    assert particle_weight(0.5, 0.5) == 1.0
    assert particle_weight(0.95, 0.5) == 0.5
    assert particle_weight(0.1, 0.95) == 0.0
    assert particle_weight(0.4, 0.9) == 1.0
    assert particle_weight(None, 0.5) == 0.5


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.4, 0.9))
def test_particle_weight_image_and_monotonicity(a, b, inside):
    w = particle_weight(a, b)
    assert w in (0.0, 0.5, 1.0)
    assert particle_weight(inside, b) >= w or 0.4 <= a <= 0.9
    assert particle_weight(a, inside) >= w or 0.4 <= b <= 0.9


def test_tracking_record_validation():
    with pytest.raises(ValidationError):
        TrackingRecord(0, 1.5, 0.5, 10, 10)
    with pytest.raises(ValidationError):
        TrackingRecord(0, 0.5, 0.5, 0, 10)
    r = TrackingRecord.from_indicators(3, [1, 0, 1, 0], [])
    assert r.tr_lin == 0.5 and r.tr_zero is None and r.weight == 0.5


# ---- resampling -----------------------------------------------------------


def test_sir_single_nonzero_weight(rng):
    pop = [nominal_configuration(MODELS["a1"], config_id=i) for i in range(5)]
    out = sir_resample(pop, [0, 0, 1, 0, 0], 50, rng)
    assert all(c is pop[2] for c in out)


def test_sir_half_half_counts(rng):
    idx = systematic_indices([1, 1, 0, 0], 10000, rng)
    counts = np.bincount(idx, minlength=4)
    assert counts[2] == counts[3] == 0
    assert counts[0] == counts[1] == 5000


def test_sir_all_zero_falls_back_to_uniform(rng, caplog):
    idx = systematic_indices([0, 0, 0, 0], 8, rng)
    assert np.bincount(idx, minlength=4).tolist() == [2, 2, 2, 2]
    assert "zero" in caplog.text


def test_systematic_rejects_bad_weights(rng):
    with pytest.raises(ValueError):
        systematic_indices([], 3, rng)
    with pytest.raises(ValueError):
        systematic_indices([1, -1], 3, rng)


# ---- random walk ----------------------------------------------------------


def test_walk_with_zero_step_is_identity(a1, rng):
    cfg = nominal_configuration(a1, config_id=0)
    out = nn_random_walk(cfg, [cfg], a1, rng, step_scale=0.0)
    np.testing.assert_array_equal(out.params, cfg.params)
    assert out.leg_type == cfg.leg_type
    assert out.provenance == Provenance.PARTICLE_WALK


def test_walk_mean_displacement_is_folded_normal(a1):
    cfg = nominal_configuration(a1, config_id=0)
    rng = np.random.default_rng(8)
    x0 = normalize(cfg.params, a1)
    interior = (x0 > 0.25) & (x0 < 0.75) & (a1.param_hi > a1.param_lo)
    disp = np.array([np.abs(normalize(nn_random_walk(cfg, [cfg], a1, rng).params, a1) - x0)[interior]
                     for _ in range(10000)])
    expect = 0.05 * np.sqrt(2 / np.pi)
    np.testing.assert_allclose(disp.mean(axis=0), expect, rtol=0.02)


def test_walk_from_boundary_stays_in_unit_box(a1, rng):
    p = a1.param_hi.copy()
    cfg = nominal_configuration(a1).replace(params=p)
    for _ in range(200):
        x = normalize(nn_random_walk(cfg, [cfg], a1, rng, step_scale=0.3).params, a1)
        assert np.all((x >= 0) & (x <= 1))


def test_walk_child_nearest_to_ancestor(a1):
    from quadsampler.sampling import sample_morphology
    rng = np.random.default_rng(10)
    pop = [sample_morphology(a1, SamplingRange.of(0.3), rng, config_id=i) for i in range(40)]
    xs = np.array([normalize(c.params, a1) for c in pop])
    for k in range(40):
        child = normalize(nn_random_walk(pop[k], pop, a1, rng).params, a1)
        d = np.linalg.norm(xs - child, axis=1)
        assert d[k] <= d.min() + 1e-12


def test_walk_moves_gains_inside_range(a1, rng):
    cfg = nominal_configuration(a1).replace(pd_gains=np.tile([35.0, 0.5], (12, 1)))
    out = nn_random_walk(cfg, [cfg], a1, rng, pd_ranges=((20.0, 450.0), (0.1, 25.0)))
    assert not np.array_equal(out.pd_gains, cfg.pd_gains)
    assert np.all((out.pd_gains[:, 0] >= 20) & (out.pd_gains[:, 0] <= 450))
    assert np.all((out.pd_gains[:, 1] >= 0.1) & (out.pd_gains[:, 1] <= 25))


# ---- splits and buffers ---------------------------------------------------


def test_split_defaults_and_validation():
    assert Split.default("uniform").counts(160).total == 32
    assert Split.default("particle_filter").counts(160).total == 48
    assert Split.default("performance_sr").counts(160).sr == 16
    assert Split.pal().counts(160).uniform == 24
    with pytest.raises(ValidationError):
        Split(uniform=0.6, replay=0.6)
    with pytest.raises(ValidationError):
        Split(uniform=-0.1)


def test_replay_buffer_bounded_fifo(a1, rng):
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.push(nominal_configuration(a1, config_id=i))
    assert len(buf) == 3 and [c.config_id for c in buf] == [2, 3, 4]
    assert buf.sample(rng).config_id in (2, 3, 4)
    with pytest.raises(IndexError):
        ReplayBuffer(2).sample(rng)


# ---- epoch update ---------------------------------------------------------


SETUP = CurriculumSetup(models=MODELS)


def _records(state, rng, good=0.6):
    recs = []
    for m in state.population:
        u = rng.random()
        if u < 0.5:
            recs.append(TrackingRecord(m.config.config_id, good, good, 10, 10))
        else:
            recs.append(TrackingRecord(m.config.config_id, 0.95, 0.2, 10, 10))
    return recs


def test_particle_filter_epoch_replaces_16_16_16():
    st0 = initial_state("particle_filter", SETUP, 40, run_seed=3)
    assert st0.n_p == 160 and st0.sr.value == 0.1
    rng = np.random.default_rng(0)
    st1, rep1 = epoch_update(st0, _records(st0, rng), SETUP)
    # replay is empty on the first barrier
    assert rep1.replaced == {"uniform": 16, "replay": 0, "weighted": 16, "sr": 0}
    st2, rep2 = epoch_update(st1, _records(st1, rng), SETUP)
    assert rep2.replaced == {"uniform": 16, "replay": 16, "weighted": 16, "sr": 0}
    assert rep2.retained == 112 and st2.n_p == 160
    assert len(st2.replay) == 32 + 48


def test_particle_filter_evicts_lowest_weights():
    st0 = initial_state("particle_filter", SETUP, 40, run_seed=4)
    recs = [TrackingRecord(m.config.config_id, 0.6, 0.6, 5, 5) if i >= 48
            else TrackingRecord(m.config.config_id, 0.0, 0.0, 5, 5) for i, m in enumerate(st0.population)]
    st1, _ = epoch_update(st0, recs, SETUP)
    kept = {m.config.config_id for m in st1.population}
    assert all(st0.population[i].config.config_id in kept for i in range(48, 160))


def test_degenerate_epoch_replaces_only_fresh():
    st0 = initial_state("particle_filter", SETUP, 40, run_seed=5)
    recs = [TrackingRecord(m.config.config_id, 0.0, 0.0, 5, 5) for m in st0.population]
    st1, rep = epoch_update(st0, recs, SETUP)
    assert rep.replaced == {"uniform": 16, "replay": 0, "weighted": 0, "sr": 0}
    assert st1.sr.value == 0.1


def test_uniform_stays_at_full_range():
    st0 = initial_state("uniform", SETUP, 10, run_seed=6)
    recs = [TrackingRecord(m.config.config_id, 0.0, 0.0, 5, 5) for m in st0.population]
    st1, rep = epoch_update(st0, recs, SETUP)
    assert st1.sr.value == 1.0 and rep.replaced["uniform"] == 4


def test_performance_sr_widens_on_good_tracking():
    st0 = initial_state("performance_sr", SETUP, 10, run_seed=7)
    recs = [TrackingRecord(m.config.config_id, 0.8, 0.8, 5, 5) for m in st0.population]
    st1, rep = epoch_update(st0, recs, SETUP)
    assert st1.sr.value == pytest.approx(0.11) and rep.replaced["sr"] == 4


def test_missing_record_rejected():
    st0 = initial_state("uniform", SETUP, 2, run_seed=1)
    with pytest.raises(ValidationError):
        epoch_update(st0, [], SETUP)


def test_admission_exhaustion_keeps_predecessor(caplog):
    setup = CurriculumSetup(models=MODELS, admission=lambda c: c.config_id < 8, max_retries=2)
    st0 = initial_state("uniform", setup, 2, run_seed=1)
    recs = [TrackingRecord(m.config.config_id, 0.5, 0.5, 5, 5) for m in st0.population]
    st1, rep = epoch_update(st0, recs, setup)
    assert rep.admission_failures == 1 and rep.retained == 8
    assert [m.config.config_id for m in st1.population] == [m.config.config_id for m in st0.population]


def _run(seed, epochs=10):
    st = initial_state("particle_filter", SETUP, 10, run_seed=seed)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        st, _ = epoch_update(st, _records(st, rng), SETUP)
    return st


def test_same_seed_same_population():
    a, b = _run(11), _run(11)
    assert a.to_json() == b.to_json()
    assert a.to_json() != _run(12).to_json()


def test_snapshot_round_trip():
    st = _run(13, epochs=3)
    back = CurriculumState.from_dict(json.loads(st.to_json()))
    assert back.to_json() == st.to_json()
    assert len(back.replay) == len(st.replay)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.lists(st.floats(0, 1), min_size=5, max_size=5))
def test_population_size_and_sr_bounds_over_epochs(seed, trs):
    s = initial_state("particle_filter", SETUP, 5, run_seed=seed)
    for tr in trs:
        recs = [TrackingRecord(m.config.config_id, tr, 1 - tr, 5, 5) for m in s.population]
        nxt, _ = epoch_update(s, recs, SETUP)
        assert nxt.n_p == s.n_p
        assert abs(nxt.sr.level - s.sr.level) <= 1 and 0.1 <= nxt.sr.value <= 1.0
        assert len(nxt.replay) <= nxt.replay.capacity
        s = nxt
