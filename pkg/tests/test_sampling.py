import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from quadsampler.errors import DomainError, ValidationError
from quadsampler.robot_model import PARAM_SLICES, Provenance, load_dataset, within_envelope
from quadsampler.sampling import (
    PdKind,
    PdStrategy,
    SamplingRange,
    interpolated_nominal,
    load_pd_strategies,
    pd_mass_linear,
    pd_mass_polynomial,
    pd_noise_factors,
    pd_nominal_interpolation,
    pd_uniform,
    rescale_pd_noise,
    sample_command,
    sample_morphology,
    sample_pd,
)

_DS = load_dataset()
STRATS = load_pd_strategies(_DS)
MASS = {m.name: m.total_mass_nominal for m in _DS.models}


# ---- sampling range -------------------------------------------------------


def test_sampling_range_clamps_and_steps():
    assert SamplingRange.of(0.0).value == 0.1
    assert SamplingRange.of(1.7).value == 1.0
    assert SamplingRange().value == 0.1
    assert SamplingRange.of(0.5).shifted(1).value == 0.51
    assert SamplingRange.full().shifted(1) == SamplingRange.full()


# ---- morphology -----------------------------------------------------------


def test_morphology_at_minimum_range_stays_near_nominal(a1, rng):
    sr = SamplingRange.of(0.0)
    lo, hi, nom = a1.param_lo, a1.param_hi, a1.nominal_params
    full = np.zeros(len(nom), bool)
    for g in ("joint_position", "torque_limit"):
        full[PARAM_SLICES[g]] = True
    for _ in range(2000):
        p = sample_morphology(a1, sr, rng).params
        d = p - nom
        assert np.all(d[~full] >= -0.1 * (nom - lo)[~full] - 1e-12)
        assert np.all(d[~full] <= 0.1 * (hi - nom)[~full] + 1e-12)


def test_com_x_support_and_coverage_at_full_range(a1):
    rng = np.random.default_rng(0)
    sl = PARAM_SLICES["com"]
    xs = np.array([sample_morphology(a1, SamplingRange.full(), rng).params[sl][0] for _ in range(20000)])
    assert xs.min() >= -0.15 and xs.max() <= 0.15
    assert (xs.max() - xs.min()) / 0.30 >= 0.99


def test_joint_positions_and_torque_limits_use_full_envelope(a1, rng):
    sl = PARAM_SLICES["torque_limit"]
    vals = np.array([sample_morphology(a1, SamplingRange.of(0.1), rng).params[sl] for _ in range(3000)])
    lo, hi = a1.param_lo[sl], a1.param_hi[sl]
    assert np.all(vals.min(axis=0) < lo + 0.05 * (hi - lo))
    assert np.all(vals.max(axis=0) > hi - 0.05 * (hi - lo))


def test_morphology_deterministic_per_seed(dataset):
    for m in dataset.models:
        a = sample_morphology(m, SamplingRange.of(0.4), np.random.default_rng(9))
        b = sample_morphology(m, SamplingRange.of(0.4), np.random.default_rng(9))
        np.testing.assert_array_equal(a.params, b.params)
        assert a.leg_type == b.leg_type


def test_morphology_within_envelope_and_provenance(dataset, rng):
    for m in dataset.models:
        c = sample_morphology(m, SamplingRange.full(), rng)
        assert within_envelope(c.params, m)
        assert c.provenance == Provenance.UNIFORM
        assert sample_morphology(m, SamplingRange.of(0.3), rng).provenance == Provenance.SR_CLIPPED


# ---- mass-linear ----------------------------------------------------------


def test_linear_at_anchor_with_unit_scale_is_exact():
    s = STRATS["genloco"]
    for mass, kp, kd in zip(s.anchor_masses, s.anchor_kp, s.anchor_kd):
        g = pd_mass_linear(mass, s, None, scale=1.0)
        np.testing.assert_allclose(g, np.tile([kp, kd], (12, 1)), rtol=1e-12)
    g = pd_mass_linear(MASS["anymal_c"], s, None, scale=1.0)
    np.testing.assert_allclose(g[0], [400.0, 8.0], rtol=1e-12)


def test_linear_scale_moments():
    s = STRATS["genloco"]
    rng = np.random.default_rng(1)
    base = pd_mass_linear(MASS["a1"], s, None, scale=1.0)[0, 0]
    scales = np.array([pd_mass_linear(MASS["a1"], s, rng)[0, 0] for _ in range(20000)]) / base
    assert scales.min() >= 0.7 - 1e-12 and scales.max() <= 1.1 + 1e-12
    assert abs(scales.mean() - 0.9) < 0.005


def test_linear_independent_scale_mode():
    s = PdStrategy(PdKind.MASS_LINEAR, "g", [12, 50], [100, 400], [2, 8], shared_scale=False)
    g = pd_mass_linear(30.0, s, np.random.default_rng(3))
    ref = pd_mass_linear(30.0, s, None, scale=1.0)
    assert g[0, 0] / ref[0, 0] != pytest.approx(g[0, 1] / ref[0, 1])


def test_linear_rejects_mass_outside_domain():
    s = STRATS["genloco"]
    with pytest.raises(DomainError):
        pd_mass_linear(200.0, s, np.random.default_rng(0))
    with pytest.raises(DomainError):
        pd_mass_linear(1.0, s, np.random.default_rng(0))


def test_nonpositive_mapping_rejected():
    with pytest.raises(ValidationError):
        PdStrategy(PdKind.MASS_LINEAR, "bad", [10, 20], [100, 10], [2, 1])


# ---- polynomial -----------------------------------------------------------


def test_polynomial_passes_through_anchor():
    s = STRATS["moral"]
    np.testing.assert_allclose(pd_mass_polynomial(MASS["anymal_c"], s)[0], [82.0, 5.0], rtol=1e-9)


def test_degree_one_polynomial_equals_linear():
    kw = dict(anchor_masses=[12, 50], anchor_kp=[100, 400], anchor_kd=[2, 8])
    lin = PdStrategy(PdKind.MASS_LINEAR, "l", **kw)
    poly = PdStrategy(PdKind.MASS_POLYNOMIAL, "p", degree=1, **kw)
    for m in np.linspace(12, 50, 39):
        np.testing.assert_allclose(pd_mass_polynomial(m, poly), pd_mass_linear(m, lin, None, scale=1.0), rtol=1e-12)


def test_polynomial_monotone_over_reference_span():
    s = STRATS["moral"]
    g = np.array([pd_mass_polynomial(m, s)[0] for m in np.linspace(12, 50, 500)])
    assert np.all(np.diff(g[:, 0]) >= 0) and np.all(np.diff(g[:, 1]) >= 0)


def test_polynomial_coefficients_reported():
    c = STRATS["moral"].coefficients
    assert len(c["kp"]) == 3 and len(c["kd"]) == 3


# ---- uniform --------------------------------------------------------------


def test_uniform_full_range_coverage():
    rng = np.random.default_rng(2)
    g = np.concatenate([pd_uniform((20, 450), (0.1, 25), 1.0, rng, nominal=(35, 0.5)) for _ in range(3000)])
    assert g[:, 0].min() < 25 and g[:, 0].max() > 445
    assert g[:, 1].min() < 0.2 and g[:, 1].max() > 24.8
    assert g[:, 0].min() >= 20 and g[:, 0].max() <= 450


def test_uniform_small_range_around_nominal():
    rng = np.random.default_rng(2)
    g = np.concatenate([pd_uniform((20, 450), (0.1, 25), SamplingRange.of(0.1), rng, nominal=(35, 0.5))
                        for _ in range(3000)])
    assert g[:, 0].min() >= 35 - 0.1 * 15 - 1e-12 and g[:, 0].max() <= 35 + 0.1 * 415 + 1e-12
    assert g[:, 1].min() >= 0.5 - 0.1 * 0.4 - 1e-12 and g[:, 1].max() <= 0.5 + 0.1 * 24.5 + 1e-12


def test_uniform_degenerate_range_is_constant(rng):
    g = pd_uniform((50, 50), (1, 1), 1.0, rng)
    np.testing.assert_array_equal(g, np.tile([50.0, 1.0], (12, 1)))


def test_uniform_grouping_modes(rng):
    g = pd_uniform((20, 450), (0.1, 25), 1.0, rng, grouping="joint_type")
    np.testing.assert_array_equal(g[0::3], np.repeat(g[0:1], 4, axis=0))
    h = pd_uniform((20, 450), (0.1, 25), 1.0, rng, grouping="joint")
    assert len(np.unique(h[:, 0])) == 12


# ---- nominal interpolation ------------------------------------------------


def test_interpolation_at_anchor_without_noise():
    s = STRATS["urma"]
    g = pd_nominal_interpolation(MASS["anymal_c"], s, None, noise=False)
    np.testing.assert_allclose(g[0], [80.0, 2.0])


def test_interpolation_midpoint():
    s = STRATS["urma"]
    mid = 0.5 * (MASS["a1"] + MASS["aliengo"])
    g = pd_nominal_interpolation(mid, s, None, noise=False)
    np.testing.assert_allclose(g[0], [30.0, 0.75])


def test_interpolation_noise_within_half_width():
    s = STRATS["urma"]
    rng = np.random.default_rng(4)
    m = 27.0
    kp, kd, hp, hd = interpolated_nominal(m, s)
    g = np.concatenate([pd_nominal_interpolation(m, s, rng) for _ in range(1000)])
    assert np.all(np.abs(g[:, 0] - kp) <= hp + 1e-12)
    assert np.all(np.abs(g[:, 1] - kd) <= hd + 1e-12)
    assert hp == pytest.approx(0.1 * kp)


def test_interpolation_below_anchors_without_extrapolation():
    s = PdStrategy(PdKind.NOMINAL_INTERPOLATION, "n", [12, 50], [20, 80], [0.5, 2.0])
    with pytest.raises(DomainError):
        pd_nominal_interpolation(5.0, s, np.random.default_rng(0))


def test_linear_with_unit_scale_matches_interpolation_between_anchors():
    kw = dict(anchor_masses=[12, 50], anchor_kp=[100, 400], anchor_kd=[2, 8])
    lin = PdStrategy(PdKind.MASS_LINEAR, "l", **kw)
    interp = PdStrategy(PdKind.NOMINAL_INTERPOLATION, "n", noise_fraction=0.0, **kw)
    for m in np.linspace(12, 50, 101):
        np.testing.assert_allclose(pd_mass_linear(m, lin, None, scale=1.0),
                                   pd_nominal_interpolation(m, interp, None, noise=False), atol=1e-12, rtol=0)


# ---- gain noise -----------------------------------------------------------


def test_noise_factor_examples():
    assert pd_noise_factors(3.0) == 1.05
    assert pd_noise_factors(0.0) == 1.0
    g = np.tile([35.0, 0.5], (12, 1))
    np.testing.assert_array_equal(rescale_pd_noise(g, None, eps=np.zeros((12, 2))), g)


def test_noise_boundary_mass():
    rng = np.random.default_rng(5)
    f = pd_noise_factors(rng.standard_normal(200000))
    expect = 1.0 - stats.norm.cdf(0.05)
    assert abs(np.mean(f == 1.05) - expect) < 0.01
    assert abs(np.mean(f == 0.95) - expect) < 0.01


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1.0, 500.0), min_size=24, max_size=24), st.integers(0, 2**32 - 1))
def test_noise_moves_each_gain_at_most_five_percent(vals, seed):
    g = np.asarray(vals).reshape(12, 2)
    out = rescale_pd_noise(g, np.random.default_rng(seed))
    assert np.all(np.abs(out / g - 1.0) <= 0.05 + 1e-12)


# ---- strategy properties --------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(sorted(STRATS)), st.floats(6.0, 100.0), st.floats(0.1, 1.0), st.integers(0, 2**32 - 1))
def test_every_strategy_gives_valid_gains(name, mass, sr, seed):
    s = STRATS[name]
    if s.kind in (PdKind.MASS_LINEAR, PdKind.MASS_POLYNOMIAL):
        lo, hi = s.mass_domain
        mass = min(max(mass, lo), hi)
    g = sample_pd(s, mass, (35.0, 0.5), SamplingRange.of(sr), np.random.default_rng(seed))
    assert g.shape == (12, 2)
    assert np.all(g[:, 0] > 0) and np.all(g[:, 1] >= 0)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(sorted(STRATS)), st.integers(0, 2**32 - 1))
def test_strategies_bit_exact_per_seed(name, seed):
    s = STRATS[name]
    a = sample_pd(s, 21.0, (50.0, 1.0), SamplingRange.of(0.3), np.random.default_rng(seed))
    b = sample_pd(s, 21.0, (50.0, 1.0), SamplingRange.of(0.3), np.random.default_rng(seed))
    assert a.tobytes() == b.tobytes()


def test_gain_positivity_bulk():
    rng = np.random.default_rng(6)
    masses = rng.uniform(8.0, 90.0, 100000)
    for name, s in STRATS.items():
        if s.kind == PdKind.MASS_POLYNOMIAL:
            lo, hi = s.mass_domain
            kp, kd = s._fit_eval(np.clip(masses, lo, hi))
            assert np.all(kp > 0) and np.all(kd >= 0)
        elif s.kind == PdKind.NOMINAL_INTERPOLATION:
            out = np.array([interpolated_nominal(m, s)[:2] for m in masses[:5000]])
            assert np.all(out[:, 0] > 0) and np.all(out[:, 1] >= 0)
        elif s.kind == PdKind.MASS_LINEAR:
            lo, hi = s.mass_domain
            ckp, ckd = s._coef
            m = np.clip(masses, lo, hi)
            assert np.all((ckp[0] * m + ckp[1]) * 0.7 > 0) and np.all((ckd[0] * m + ckd[1]) * 0.7 >= 0)


# ---- commands -------------------------------------------------------------


def test_command_box_and_duration():
    rng = np.random.default_rng(7)
    cmds = [sample_command(rng) for _ in range(100000)]
    a = np.array([c.as_array() for c in cmds])
    d = np.array([c.duration for c in cmds])
    assert np.abs(a[:, 0]).max() <= 1.0 and np.abs(a[:, 1]).max() <= 0.75 and np.abs(a[:, 2]).max() <= 1.5
    assert d.min() >= 3.0 and d.max() <= 6.0
    assert abs(d.mean() - 4.5) < 0.02


def test_zero_command():
    c = sample_command(np.random.default_rng(0), zero=True)
    assert c.is_zero and (c.vx, c.vy, c.wz) == (0.0, 0.0, 0.0)


def test_gain_strategies_load_from_data():
    assert {"genloco", "moral", "manyquad", "urma", "pal", "ours"} <= set(STRATS)
    assert STRATS["ours"].kind == PdKind.ADAPTIVE_PARTICLE
