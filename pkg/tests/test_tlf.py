from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate import quad

from qset import tlf
from qset.errors import ResourceLimitError, UndefinedTemperatureRatioError
from qset.units import K_B


def make_params(log_ratio: float, tau_bar: float, temperature: float) -> tlf.FluctuatorParams:
    return tlf.params_from_dwell_targets(log_ratio, tau_bar, temperature)


def test_symmetric_well_has_equal_rates_and_occupation():
    params = make_params(0.0, 150.0, 0.24)
    rate_lr, rate_rl = tlf.switching_rates(params, 0.24)
    assert rate_lr == pytest.approx(rate_rl, rel=1e-12)
    assert tlf.occupation_probabilities(params, 0.24) == pytest.approx((0.5, 0.5), rel=1e-12)
    tau_left, tau_right = tlf.mean_dwell_times(params, 0.24)
    assert tau_left == pytest.approx(300.0, rel=1e-9)
    assert tau_right == pytest.approx(300.0, rel=1e-9)
    assert tlf.correlation_time(params, 0.24) == pytest.approx(150.0, rel=1e-9)


def test_dwell_ratio_follows_boltzmann_factor():
    params = tlf.FluctuatorParams(asymmetry=2.1 * K_B * 0.24, barrier=K_B * 5.0)
    ratio = tlf.dwell_time_ratio(params, 0.24)
    assert ratio == pytest.approx(math.exp(2.1), rel=1e-12)
    rate_lr, rate_rl = tlf.switching_rates(params, 0.24)
    assert ratio == pytest.approx(rate_rl / rate_lr, rel=1e-12)
    # the inverse asymmetry gives the 0.122 occupancy skew
    flipped = tlf.FluctuatorParams(asymmetry=-2.1 * K_B * 0.24, barrier=K_B * 5.0)
    assert tlf.dwell_time_ratio(flipped, 0.24) == pytest.approx(0.1225, abs=1e-3)


def test_doubling_temperature_halves_log_dwell_ratio():
    params = make_params(-2.1, 150.0, 0.24)
    log_cold = math.log(tlf.dwell_time_ratio(params, 0.24))
    log_warm = math.log(tlf.dwell_time_ratio(params, 0.48))
    assert log_warm == pytest.approx(log_cold / 2.0, rel=1e-12)


def test_correlation_time_is_inverse_rate_sum():
    params = make_params(-1.3, 42.0, 0.2)
    rate_lr, rate_rl = tlf.switching_rates(params, 0.2)
    assert tlf.correlation_time(params, 0.2) == pytest.approx(1.0 / (rate_lr + rate_rl), rel=1e-12)


def test_attempt_frequency_rescales_time_but_not_ratio():
    base = make_params(-2.1, 150.0, 0.24)
    fast = tlf.FluctuatorParams(asymmetry=base.asymmetry, barrier=base.barrier,
                                attempt_frequency=base.attempt_frequency * 7.0)
    assert tlf.correlation_time(fast, 0.24) == pytest.approx(150.0 / 7.0, rel=1e-12)
    assert tlf.dwell_time_ratio(fast, 0.24) == pytest.approx(
        tlf.dwell_time_ratio(base, 0.24), rel=1e-12)


def test_correlation_time_shrinks_with_temperature():
    params = make_params(-2.1, 150.0, 0.24)
    taus = [tlf.correlation_time(params, t) for t in (0.1, 0.2, 0.3, 0.4)]
    assert all(a > b for a, b in zip(taus, taus[1:]))


def test_extreme_asymmetry_pins_mean_dwell_to_short_side():
    params = tlf.FluctuatorParams(asymmetry=30.0 * K_B * 0.2, barrier=K_B * 10.0)
    tau_left, tau_right = tlf.mean_dwell_times(params, 0.2)
    assert tau_left / tau_right > 1e10
    assert tlf.correlation_time(params, 0.2) == pytest.approx(tau_right, rel=1e-9)


@given(log_ratio=st.floats(-8.0, 8.0), tau_exp=st.floats(-4.0, 4.0),
       temperature=st.floats(0.05, 1.0))
def test_dwell_target_construction_round_trips(log_ratio, tau_exp, temperature):
    tau_bar = 10.0 ** tau_exp
    params = tlf.params_from_dwell_targets(log_ratio, tau_bar, temperature)
    assert params.induced_charge == 0.0
    assert params.current_step == 0.0
    assert math.log(tlf.dwell_time_ratio(params, temperature)) == pytest.approx(
        log_ratio, abs=1e-9)
    assert tlf.correlation_time(params, temperature) == pytest.approx(tau_bar, rel=1e-9)


def test_simulated_dwell_times_match_analytic_means():
    # high event count: 500 s of a 5 ms fluctuator, about 1e5 switches
    params = make_params(1.0, 0.005, 0.15)
    rng = np.random.default_rng(2)
    states = tlf.simulate_telegraph(params, 0.15, 500.0, 5e-5, rng)
    assert states.dtype.kind in "iu"
    assert set(np.unique(states)) <= {0, 1}
    edges = np.flatnonzero(np.diff(states)) + 1
    bounds = np.concatenate(([0], edges, [states.size]))
    lengths = np.diff(bounds) * 5e-5
    dwell_states = states[bounds[:-1]]
    # drop the censored first and last dwells
    inner = slice(1, -1)
    mean_low = lengths[inner][dwell_states[inner] == 0].mean()
    mean_high = lengths[inner][dwell_states[inner] == 1].mean()
    tau_left, tau_right = tlf.mean_dwell_times(params, 0.15)
    assert mean_low == pytest.approx(tau_left, rel=0.02)
    assert mean_high == pytest.approx(tau_right, rel=0.02)


def test_simulated_occupation_matches_stationary_probability():
    params = make_params(0.0, 0.01, 0.2)
    rng = np.random.default_rng(0)
    states = tlf.simulate_telegraph(params, 0.2, 400.0, 1e-3, rng)
    occupancy = states.mean()
    # about 40000 correlation times: binomial-style error bar
    sigma = math.sqrt(0.01 / (2.0 * 400.0))
    assert abs(occupancy - 0.5) < 4.0 * sigma


def test_simulation_is_deterministic_for_a_seed():
    params = make_params(-0.5, 0.02, 0.2)
    a = tlf.simulate_telegraph(params, 0.2, 20.0, 1e-3, np.random.default_rng(7))
    b = tlf.simulate_telegraph(params, 0.2, 20.0, 1e-3, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_simulation_refuses_unbounded_event_counts():
    params = make_params(0.0, 1e-5, 0.2)
    rng = np.random.default_rng(0)
    with pytest.raises(ResourceLimitError):
        tlf.simulate_telegraph(params, 0.2, 2000.0, 1e-3, rng)


def test_psd_lorentzian_shape_and_quadrature():
    params = make_params(-0.7, 1.0, 0.2)
    p_left, p_right = tlf.occupation_probabilities(params, 0.2)
    tau = tlf.correlation_time(params, 0.2)
    step = 5e-12
    s0 = tlf.telegraph_psd(np.array([0.0]), step, p_left, tau)[0]
    assert s0 == pytest.approx(4.0 * step**2 * p_left * p_right * tau, rel=1e-12)
    # half power at the corner frequency
    f_corner = 1.0 / (2.0 * math.pi * tau)
    s_corner = tlf.telegraph_psd(np.array([f_corner]), step, p_left, tau)[0]
    assert s_corner == pytest.approx(s0 / 2.0, rel=1e-9)
    # doubling the step quadruples the plateau
    s0_big = tlf.telegraph_psd(np.array([0.0]), 2 * step, p_left, tau)[0]
    assert s0_big == pytest.approx(4.0 * s0, rel=1e-12)
    # one-sided quadrature returns the total switching variance
    total, err = quad(lambda f: tlf.telegraph_psd(np.array([f]), step, p_left, tau)[0],
                      0.0, np.inf)
    assert total == pytest.approx(step**2 * p_left * p_right, rel=1e-8)


def test_temperature_ratio_from_dwell_reference_points():
    assert tlf.temperature_ratio_from_dwell(math.exp(-2.0), math.exp(-6.0)) == 1.0 / 3.0
    assert tlf.temperature_ratio_from_dwell(0.2, 0.2) == pytest.approx(1.0, rel=1e-12)


def test_temperature_ratio_rejects_unusable_ratios():
    with pytest.raises(UndefinedTemperatureRatioError):
        tlf.temperature_ratio_from_dwell(1.0, math.exp(-2.0))
    with pytest.raises(UndefinedTemperatureRatioError):
        tlf.temperature_ratio_from_dwell(math.exp(-2.0), 1.0)
    with pytest.raises(UndefinedTemperatureRatioError):
        tlf.temperature_ratio_from_dwell(-0.5, 0.2)
    with pytest.raises(UndefinedTemperatureRatioError):
        tlf.temperature_ratio_from_dwell(0.2, 0.0)


@given(t_ref=st.floats(0.05, 1.0), t_other=st.floats(0.05, 1.0),
       asym_k=st.floats(0.05, 0.5), sign=st.sampled_from([-1.0, 1.0]))
def test_temperature_ratio_is_consistent_with_shared_asymmetry(t_ref, t_other, asym_k, sign):
    # both ratios generated by one defect: recover the temperature quotient
    x = sign * asym_k
    ratio_ref = math.exp(x / t_ref)
    ratio_other = math.exp(x / t_other)
    assume(abs(math.log(ratio_ref)) > 1e-3 and abs(math.log(ratio_other)) > 1e-3)
    recovered = tlf.temperature_ratio_from_dwell(ratio_ref, ratio_other)
    assert recovered == pytest.approx(t_other / t_ref, rel=1e-9)
