"""Electron temperature of the island under Joule heating.

Two channels carry heat out of the electron gas: electron-phonon coupling
inside the island (T^5 law with the material constant times the island
volume) and quasiparticle heat conduction along the superconducting leads,
whose conductivity is exponentially frozen out below the transition
temperature.  Balancing their sum against the deposited power gives the
steady-state electron temperature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import NoSolutionError, SolverError
from .units import bcs_transition_temperature, uev_to_joule

#: Electron-phonon coupling constant, W m^-3 K^-5.
DEFAULT_SIGMA_EPH = 0.4e9

#: Island volume, m^3.
DEFAULT_ISLAND_VOLUME = 9.0e-21

#: Normal-state thermal conductivity scale of the leads, W m^-1 K^-1.
DEFAULT_KAPPA_LEAD = 120.0

#: Freeze-out steepness of the quasiparticle conductivity.
DEFAULT_FREEZE_OUT_FACTOR = 1.36

#: Lead cross-section (m^2) and length (m) from island to thermal anchor.
DEFAULT_LEAD_AREA = 4.0e-15
DEFAULT_LEAD_LENGTH = 1.0e-5


@dataclass(frozen=True)
class ThermalParams:
    """Material and geometry constants of the heat balance, SI.

    ``t_c`` is the transition temperature of the leads; the quasiparticle
    conductivity carries a factor exp(-freeze_out_factor * t_c / t_ph).
    Two leads conduct in parallel, handled inside the power law.
    """

    sigma_eph: float = DEFAULT_SIGMA_EPH
    island_volume: float = DEFAULT_ISLAND_VOLUME
    kappa_lead: float = DEFAULT_KAPPA_LEAD
    freeze_out_factor: float = DEFAULT_FREEZE_OUT_FACTOR
    t_c: float = bcs_transition_temperature(uev_to_joule(180.0))
    lead_area: float = DEFAULT_LEAD_AREA
    lead_length: float = DEFAULT_LEAD_LENGTH

    def __post_init__(self):
        for name in (
            "sigma_eph",
            "island_volume",
            "kappa_lead",
            "freeze_out_factor",
            "t_c",
            "lead_area",
            "lead_length",
        ):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")


def electron_phonon_power(
    t_e: float, t_ph: float, params: ThermalParams = ThermalParams()
) -> float:
    """Heat flow (W) from electrons to phonons, sigma Omega (T_e^5 - T_ph^5)."""
    _check_temperatures(t_e, t_ph)
    return params.sigma_eph * params.island_volume * (t_e**5 - t_ph**5)


def quasiparticle_power(
    t_e: float, t_ph: float, params: ThermalParams = ThermalParams()
) -> float:
    """Heat flow (W) out through the two superconducting leads.

    Linear in the temperature drop, with a conductance
    2 kappa (S/L) exp(-freeze_out_factor t_c / t_ph) exponentially
    suppressed by the bath temperature.
    """
    _check_temperatures(t_e, t_ph)
    conductance = (
        2.0
        * params.kappa_lead
        * (params.lead_area / params.lead_length)
        * math.exp(-params.freeze_out_factor * params.t_c / t_ph)
    )
    return conductance * (t_e - t_ph)


def total_cooling_power(
    t_e: float, t_ph: float, params: ThermalParams = ThermalParams()
) -> float:
    """Sum of both cooling channels, W."""
    return electron_phonon_power(t_e, t_ph, params) + quasiparticle_power(
        t_e, t_ph, params
    )


def solve_electron_temperature(
    power: float, t_ph: float, params: ThermalParams = ThermalParams()
) -> float:
    """Steady-state electron temperature (K) at deposited power ``power`` (W).

    Solves total_cooling_power(T_e, t_ph) = power for T_e >= t_ph.  Zero
    power returns t_ph exactly.  The residual is monotone in T_e, so a
    grown bracket plus Brent iteration always converges.
    """
    if not (np.isfinite(power) and power >= 0):
        raise ValueError(f"power must be non-negative and finite, got {power!r}")
    if not (np.isfinite(t_ph) and t_ph > 0):
        raise ValueError(f"t_ph must be positive and finite, got {t_ph!r}")
    if power == 0.0:
        return t_ph

    def residual(t_e: float) -> float:
        return total_cooling_power(t_e, t_ph, params) - power

    # The electron-phonon channel alone bounds T_e from above.
    t_hi = max(
        2.0 * t_ph,
        1.5 * (power / (params.sigma_eph * params.island_volume) + t_ph**5) ** 0.2,
    )
    for _ in range(200):
        if residual(t_hi) >= 0.0:
            break
        t_hi *= 2.0
    else:
        raise SolverError(
            "could not bracket the electron temperature",
            diagnostics={"power": power, "t_ph": t_ph, "t_hi": t_hi},
        )
    return float(brentq(residual, t_ph, t_hi, xtol=1e-15, rtol=1e-14))


def cooling_crossover_temperature(params: ThermalParams = ThermalParams()) -> float:
    """Temperature (K) where the two channels conduct equally well.

    Compares the small-signal thermal conductances dQ/dT_e at
    T_e = t_ph = T: electron-phonon gives 5 sigma Omega T^4, the leads
    give 2 kappa (S/L) exp(-freeze_out_factor t_c / T).  Below the
    returned temperature the exponential freeze-out has won and the
    phonon channel dominates; above it the leads carry more heat.

    The balance is solved on the interval where its log-residual is
    monotone, T in (0, freeze_out_factor * t_c / 4]; a second, unphysical
    balance point far above t_c is excluded by construction.
    """
    g_lead = 2.0 * params.kappa_lead * params.lead_area / params.lead_length
    a_eph = 5.0 * params.sigma_eph * params.island_volume
    b = params.freeze_out_factor * params.t_c

    def log_residual(t: float) -> float:
        # ln(eph conductance) - ln(lead conductance)
        return math.log(a_eph) + 4.0 * math.log(t) - math.log(g_lead) + b / t

    t_max = b / 4.0
    if log_residual(t_max) > 0.0:
        raise NoSolutionError(
            "the lead conductance never catches up with the phonon channel "
            "below the freeze-out scale; no crossover exists"
        )
    t_min = t_max
    for _ in range(200):
        t_min *= 0.5
        if log_residual(t_min) > 0.0:
            break
    else:
        raise SolverError(
            "could not bracket the conductance crossover",
            diagnostics={"t_max": t_max},
        )
    return float(brentq(log_residual, t_min, t_max, xtol=1e-18, rtol=1e-14))


def _check_temperatures(t_e: float, t_ph: float) -> None:
    if not (np.isfinite(t_e) and t_e > 0):
        raise ValueError(f"t_e must be positive and finite, got {t_e!r}")
    if not (np.isfinite(t_ph) and t_ph > 0):
        raise ValueError(f"t_ph must be positive and finite, got {t_ph!r}")
