"""Physical constants and the handful of unit conversions used at the edges.

Everything inside the package works in SI units (volts, amps, kelvin,
joules, farads, seconds).  Conversions to the bench-friendly units that
appear in config files and reports (mV, pA, mK, ueV, pA per root hour)
live here so they are written down exactly once.
"""

from __future__ import annotations

from scipy.constants import e as E_CHARGE  # elementary charge, C
from scipy.constants import hbar as HBAR  # reduced Planck constant, J s
from scipy.constants import k as K_B  # Boltzmann constant, J/K

HOUR_S = 3600.0

# BCS weak-coupling ratio between the zero-temperature gap and k_B T_c.
BCS_GAP_RATIO = 1.764


def uev_to_joule(x: float) -> float:
    return x * 1e-6 * E_CHARGE


def joule_to_uev(x: float) -> float:
    return x / (1e-6 * E_CHARGE)


def mv_to_volt(x: float) -> float:
    return x * 1e-3


def volt_to_mv(x: float) -> float:
    return x * 1e3


def pa_to_amp(x: float) -> float:
    return x * 1e-12


def amp_to_pa(x: float) -> float:
    return x * 1e12


def mk_to_kelvin(x: float) -> float:
    return x * 1e-3


def kelvin_to_mk(x: float) -> float:
    return x * 1e3


def ff_to_farad(x: float) -> float:
    return x * 1e-15


def drift_pa_per_sqrt_hour_to_si(d: float) -> float:
    """pA/sqrt(hour) -> A/sqrt(s).  sqrt(3600) = 60."""
    return d * 1e-12 / 60.0


def drift_si_to_pa_per_sqrt_hour(d: float) -> float:
    return d * 60.0 / 1e-12


def bcs_transition_temperature(delta: float) -> float:
    """Critical temperature implied by a zero-temperature gap (J)."""
    if delta <= 0:
        raise ValueError(f"gap must be positive, got {delta!r}")
    return delta / (BCS_GAP_RATIO * K_B)
