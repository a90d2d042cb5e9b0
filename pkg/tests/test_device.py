from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.linalg import null_space

from qset import device
from qset.errors import NoSolutionError
from qset.scenarios import reference_device
from qset.units import E_CHARGE, joule_to_uev, uev_to_joule

V_SD = 0.85e-3
T_E = 0.24


def c_sigma(params: device.DeviceParams) -> float:
    return params.c1 + params.c2 + params.cgt


def test_charging_energy_definition_and_magnitude():
    dev = reference_device()
    e_c = device.charging_energy(dev)
    assert e_c == pytest.approx(E_CHARGE**2 / (2.0 * c_sigma(dev)), rel=1e-12)
    assert joule_to_uev(e_c) == pytest.approx(174.15, abs=0.01)
    # an island with 1 aJ of charging energy needs c_sigma = e^2 / (2 aJ)
    target = device.DeviceParams(r1=1e6, r2=1e6, delta=uev_to_joule(180.0),
                                 c1=E_CHARGE**2 / 2e-18 - 2e-21, c2=1e-21, cgt=1e-21)
    assert device.charging_energy(target) == pytest.approx(1e-18, rel=1e-12)


def test_charging_energy_halves_when_capacitances_double():
    dev = reference_device()
    doubled = device.DeviceParams(r1=dev.r1, r2=dev.r2, delta=dev.delta,
                                  c1=2 * dev.c1, c2=2 * dev.c2, cgt=2 * dev.cgt)
    assert device.charging_energy(doubled) == pytest.approx(
        device.charging_energy(dev) / 2.0, rel=1e-12)


def test_josephson_energy_magnitude_and_resistance_scaling():
    dev = reference_device()
    e_j = device.josephson_energy(dev)
    assert joule_to_uev(e_j) == pytest.approx(0.8935, abs=0.005)
    halved = device.DeviceParams(r1=2 * dev.r1, r2=dev.r2, delta=dev.delta,
                                 c1=dev.c1, c2=dev.c2, cgt=dev.cgt)
    assert device.josephson_energy(halved) == pytest.approx(e_j / 2.0, rel=1e-12)


def test_charge_regime_hierarchy():
    dev = reference_device()
    ratio = device.josephson_energy(dev) / device.charging_energy(dev)
    assert ratio < 0.01


def test_diamond_feature_geometry():
    dev = reference_device()
    feats = device.diamond_features(dev)
    cs = c_sigma(dev)
    assert feats.v_djqp == pytest.approx(E_CHARGE / cs, rel=1e-12)
    assert feats.v_jqp == pytest.approx(2.0 * feats.v_djqp, rel=1e-12)
    assert feats.v_qp_min == pytest.approx(4.0 * dev.delta / E_CHARGE, rel=1e-12)
    assert feats.v_qp_max == pytest.approx(feats.v_qp_min + E_CHARGE / cs, rel=1e-12)
    assert feats.slope_neg == pytest.approx(-dev.cgt / dev.c2, rel=1e-12)
    assert feats.slope_pos == pytest.approx(dev.cgt / (dev.c1 + dev.cgt), rel=1e-12)
    assert 0.0 < feats.v_djqp < feats.v_jqp < feats.v_qp_min < feats.v_qp_max


def test_reference_features_match_measured_landmarks():
    feats = device.diamond_features(reference_device())
    assert feats.v_djqp == pytest.approx(0.348e-3, abs=0.001e-3)
    assert feats.v_qp_min == pytest.approx(0.72e-3, rel=1e-9)


def test_fit_recovers_parameters_from_features():
    dev = reference_device()
    feats = device.diamond_features(dev)
    fitted = device.fit_params_from_features(feats, dev.r1 + dev.r2, r1_fraction=0.5)
    for field in ("r1", "r2", "delta", "c1", "c2", "cgt"):
        assert getattr(fitted, field) == pytest.approx(getattr(dev, field), rel=1e-9)


def test_fit_total_capacitance_tracks_diamond_span():
    # inflating the diamond top edge by 1% must shrink c_sigma to e/span
    dev = reference_device()
    feats = device.diamond_features(dev)
    warped = device.DiamondFeatures(
        v_qp_min=feats.v_qp_min, v_qp_max=feats.v_qp_max * 1.01,
        slope_neg=feats.slope_neg, slope_pos=feats.slope_pos,
        v_jqp=feats.v_jqp, v_djqp=feats.v_djqp)
    fitted = device.fit_params_from_features(warped, dev.r1 + dev.r2)
    span = warped.v_qp_max - warped.v_qp_min
    assert c_sigma(fitted) == pytest.approx(E_CHARGE / span, rel=1e-9)
    assert c_sigma(fitted) < c_sigma(dev)


def test_degenerate_diamond_slopes_are_rejected():
    dev = reference_device()
    feats = device.diamond_features(dev)
    with pytest.raises(ValueError):
        device.DiamondFeatures(
            v_qp_min=feats.v_qp_min, v_qp_max=feats.v_qp_max,
            slope_neg=0.0, slope_pos=feats.slope_pos,
            v_jqp=feats.v_jqp, v_djqp=feats.v_djqp)
    flat = device.DiamondFeatures(
        v_qp_min=feats.v_qp_min, v_qp_max=feats.v_qp_max,
        slope_neg=feats.slope_neg, slope_pos=1.0,
        v_jqp=feats.v_jqp, v_djqp=feats.v_djqp)
    with pytest.raises(NoSolutionError):
        device.fit_params_from_features(flat, dev.r1 + dev.r2)


def test_helium_immersion_shifts_gate_capacitance_only():
    dev = reference_device()
    wet = device.helium_capacitance_shift(dev)
    assert wet.cgt / dev.cgt == pytest.approx(1.0 + 0.393 * 0.056, rel=1e-12)
    assert wet.cgt / dev.cgt == pytest.approx(1.0220, abs=1e-4)
    assert (wet.r1, wet.r2, wet.delta, wet.c1, wet.c2) == (
        dev.r1, dev.r2, dev.delta, dev.c1, dev.c2)
    # unit permittivity leaves the device untouched, full filling gives 5.6%
    assert device.helium_capacitance_shift(dev, epsilon=1.0).cgt == dev.cgt
    full = device.helium_capacitance_shift(dev, fill_factor=1.0)
    assert full.cgt / dev.cgt == pytest.approx(1.056, rel=1e-12)


def test_gapless_limit_collapses_quasiparticle_onset():
    dev = reference_device()
    tiny = device.DeviceParams(r1=dev.r1, r2=dev.r2, delta=1e-30,
                               c1=dev.c1, c2=dev.c2, cgt=dev.cgt)
    feats = device.diamond_features(tiny)
    assert feats.v_qp_min < 1e-9
    assert feats.v_qp_max == pytest.approx(E_CHARGE / c_sigma(tiny), rel=1e-6)


def test_tunneling_rates_window_and_signs():
    dev = reference_device()
    n, rates = device.tunneling_rates(dev, V_SD, T_E, 0.37 * E_CHARGE)
    assert set(rates) == {"l_in", "l_out", "r_in", "r_out"}
    n0 = int(np.rint(0.37))
    assert np.array_equal(n, n0 + np.arange(-5, 6))
    for arr in rates.values():
        assert arr.shape == n.shape
        assert np.all(arr >= 0.0)


def test_stationary_distribution_is_normalized():
    dev = reference_device()
    n, p = device.orthodox_stationary(dev, V_SD, T_E, 0.37 * E_CHARGE)
    assert p.shape == n.shape
    assert np.all(p >= 0.0)
    assert p.sum() == pytest.approx(1.0, rel=1e-12)


def test_three_state_stationary_matches_dense_null_space():
    """Birth-death occupation equals the null space of the full generator."""
    dev = reference_device()
    n, rates = device.tunneling_rates(dev, 0.3e-3, 0.15, 0.37 * E_CHARGE, n_states=1)
    up = rates["l_in"] + rates["r_in"]
    down = rates["l_out"] + rates["r_out"]
    q = np.zeros((3, 3))
    for i in range(3):
        if i < 2:
            q[i + 1, i] += up[i]
            q[i, i] -= up[i]
        if i > 0:
            q[i - 1, i] += down[i]
            q[i, i] -= down[i]
    basis = null_space(q)
    assert basis.shape[1] == 1
    dense = basis[:, 0] / basis[:, 0].sum()
    _, p = device.orthodox_stationary(dev, 0.3e-3, 0.15, 0.37 * E_CHARGE, n_states=1)
    assert np.max(np.abs(dense - p)) <= 1e-9


def test_current_vanishes_at_zero_bias():
    dev = reference_device()
    for q_g in (0.0, 0.25 * E_CHARGE, 0.37 * E_CHARGE):
        assert abs(device.orthodox_current(dev, 0.0, T_E, q_g)) < 1e-24


def test_transfer_gain_matches_central_difference():
    dev = reference_device()
    q_g = 0.37 * E_CHARGE
    gain = device.transfer_gain(dev, V_SD, T_E, q_g)
    step = 0.005
    manual = (device.orthodox_current(dev, V_SD, T_E, q_g + step * E_CHARGE)
              - device.orthodox_current(dev, V_SD, T_E, q_g - step * E_CHARGE)) / (2 * step)
    assert gain == pytest.approx(manual, rel=1e-9)


def test_transfer_curve_matches_pointwise_current():
    dev = reference_device()
    gate = np.linspace(0.0, 1.0, 9) * E_CHARGE
    curve = device.orthodox_transfer_curve(dev, V_SD, T_E, gate)
    for q_g, i_point in zip(gate, curve):
        assert i_point == pytest.approx(device.orthodox_current(dev, V_SD, T_E, q_g), rel=1e-12)


@given(q_e=st.floats(-1.2, 1.2), v_mv=st.floats(0.1, 1.0))
def test_transfer_current_is_gate_periodic(q_e, v_mv):
    assume(min(abs(q_e - k - 0.5) for k in range(-3, 3)) > 1e-3)
    dev = reference_device()
    i_base = device.orthodox_current(dev, v_mv * 1e-3, T_E, q_e * E_CHARGE)
    i_shift = device.orthodox_current(dev, v_mv * 1e-3, T_E, (q_e + 1.0) * E_CHARGE)
    assert math.isclose(i_base, i_shift, rel_tol=1e-10, abs_tol=1e-26)


@given(q_e=st.floats(-1.2, 1.2), v_mv=st.floats(0.1, 1.0))
def test_transfer_current_is_antisymmetric(q_e, v_mv):
    assume(min(abs(q_e - k - 0.5) for k in range(-3, 3)) > 1e-3)
    dev = reference_device()
    i_fwd = device.orthodox_current(dev, v_mv * 1e-3, T_E, q_e * E_CHARGE)
    i_rev = device.orthodox_current(dev, -v_mv * 1e-3, T_E, -q_e * E_CHARGE)
    assert math.isclose(i_fwd, -i_rev, rel_tol=1e-10, abs_tol=1e-26)


@given(scale=st.floats(0.5, 2.0))
def test_diamond_voltages_scale_inversely_with_capacitance(scale):
    dev = reference_device()
    scaled = device.DeviceParams(r1=dev.r1, r2=dev.r2, delta=dev.delta,
                                 c1=scale * dev.c1, c2=scale * dev.c2, cgt=scale * dev.cgt)
    base = device.diamond_features(dev)
    new = device.diamond_features(scaled)
    assert new.v_djqp == pytest.approx(base.v_djqp / scale, rel=1e-10)
    assert new.v_jqp == pytest.approx(base.v_jqp / scale, rel=1e-10)
    span_base = base.v_qp_max - base.v_qp_min
    span_new = new.v_qp_max - new.v_qp_min
    assert span_new == pytest.approx(span_base / scale, rel=1e-10)


@given(r1_fraction=st.floats(0.2, 0.8), cgt_ff=st.floats(0.01, 0.08),
       c1_ff=st.floats(0.1, 0.4), c2_ff=st.floats(0.1, 0.4),
       delta_uev=st.floats(120.0, 260.0))
def test_fit_round_trip_over_device_family(r1_fraction, cgt_ff, c1_ff, c2_ff, delta_uev):
    r_total = 1.3e6
    dev = device.DeviceParams(
        r1=r1_fraction * r_total, r2=(1.0 - r1_fraction) * r_total,
        delta=uev_to_joule(delta_uev),
        c1=c1_ff * 1e-15, c2=c2_ff * 1e-15, cgt=cgt_ff * 1e-15)
    fitted = device.fit_params_from_features(
        device.diamond_features(dev), r_total, r1_fraction=r1_fraction)
    for field in ("r1", "r2", "delta", "c1", "c2", "cgt"):
        assert getattr(fitted, field) == pytest.approx(getattr(dev, field), rel=1e-9)
