from __future__ import annotations

import math

import pytest
from scipy import constants as sc

from qset import units


def test_fundamental_constants_come_from_scipy():
    assert units.E_CHARGE == sc.e
    assert units.K_B == sc.k
    assert units.HBAR == sc.hbar


def test_energy_conversion_round_trip():
    assert units.uev_to_joule(1.0) == pytest.approx(sc.e * 1e-6, rel=1e-12)
    assert units.joule_to_uev(units.uev_to_joule(180.0)) == pytest.approx(180.0, rel=1e-12)


def test_drift_diffusivity_unit_conversion():
    # 0.7 pA per sqrt(hour) is 0.7e-12 A per sqrt(3600 s)
    d_si = units.drift_pa_per_sqrt_hour_to_si(0.7)
    assert d_si == pytest.approx(0.7e-12 / 60.0, rel=1e-12)
    assert units.drift_si_to_pa_per_sqrt_hour(d_si) == pytest.approx(0.7, rel=1e-12)


def test_drift_conversion_matches_spread_arithmetic():
    # spread 2*D*sqrt(t): 0.7 pA/sqrt(hour) gives 1.4 pA after one hour
    d_si = units.drift_pa_per_sqrt_hour_to_si(0.7)
    assert 2.0 * d_si * math.sqrt(3600.0) == pytest.approx(1.4e-12, rel=1e-12)


def test_bcs_transition_temperature_value():
    delta = units.uev_to_joule(180.0)
    t_c = units.bcs_transition_temperature(delta)
    assert t_c == pytest.approx(delta / (1.764 * sc.k), rel=1e-12)
    assert t_c == pytest.approx(1.184, rel=1e-3)


def test_bcs_transition_rejects_non_positive_gap():
    with pytest.raises(ValueError):
        units.bcs_transition_temperature(0.0)
    with pytest.raises(ValueError):
        units.bcs_transition_temperature(-1e-23)


def test_scale_prefix_helpers_are_inverses():
    assert units.mv_to_volt(0.35) == pytest.approx(0.35e-3, rel=1e-15)
    assert units.volt_to_mv(units.mv_to_volt(0.85)) == pytest.approx(0.85, rel=1e-15)
    assert units.pa_to_amp(1.4) == pytest.approx(1.4e-12, rel=1e-15)
    assert units.amp_to_pa(units.pa_to_amp(0.7)) == pytest.approx(0.7, rel=1e-15)
    assert units.ff_to_farad(0.46) == pytest.approx(0.46e-15, rel=1e-15)
    assert units.mk_to_kelvin(240.0) == pytest.approx(0.240, rel=1e-15)
    assert units.kelvin_to_mk(units.mk_to_kelvin(25.0)) == pytest.approx(25.0, rel=1e-15)
    assert units.HOUR_S == 3600.0
