"""Thermally activated two-level fluctuator (random telegraph noise).

A defect hops between two wells separated by an energy barrier.  The well
asymmetry sets the ratio of mean dwell times through detailed balance, the
barrier sets their overall scale, and both enter through Arrhenius rates
relative to a single attempt frequency.  Because the dwell-time ratio
depends on temperature only through exp(-dE / k_B T), the ratio of
log-dwell-ratios measured at two temperatures gives their inverse
temperature ratio with no knowledge of the defect parameters; that
thermometry identity is what most users of this module want.

Also here: the Lorentzian current noise spectrum of a telegraph signal and
an exact event-driven sampler of the process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ResourceLimitError, UndefinedTemperatureRatioError
from .units import K_B

#: Default attempt frequency (1/s) when a caller gives none.
DEFAULT_ATTEMPT_FREQUENCY = 1.0e10

#: Hard cap on simulated switching events per call.
DEFAULT_MAX_EVENTS = 50_000_000


@dataclass(frozen=True)
class FluctuatorParams:
    """Double-well defect parameters, SI.

    ``asymmetry`` is the energy of the right well minus the left well
    (joule, may be negative or zero); ``barrier`` is the saddle energy
    measured from the lower well, which sits at zero, so it must exceed
    max(asymmetry, 0).  The attempt frequency is the prefactor shared by
    both escape rates.

    The last two fields couple the defect to the readout: when it hops
    to the right well it induces ``induced_charge`` (units of one
    electron charge) on a nearby island, producing a current jump of
    ``current_step`` ampere at the operating point.  Both default to
    zero for a bare defect.
    """

    asymmetry: float
    barrier: float
    attempt_frequency: float = DEFAULT_ATTEMPT_FREQUENCY
    induced_charge: float = 0.0
    current_step: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.asymmetry):
            raise ValueError(f"asymmetry must be finite, got {self.asymmetry!r}")
        if not (np.isfinite(self.barrier) and self.barrier > 0):
            raise ValueError(f"barrier must be positive, got {self.barrier!r}")
        if self.barrier <= max(self.asymmetry, 0.0):
            raise ValueError("barrier must exceed both well energies")
        if not (np.isfinite(self.attempt_frequency) and self.attempt_frequency > 0):
            raise ValueError("attempt_frequency must be positive")
        if not (np.isfinite(self.induced_charge) and self.induced_charge >= 0):
            raise ValueError("induced_charge must be non-negative")
        if not (np.isfinite(self.current_step) and self.current_step >= 0):
            raise ValueError("current_step must be non-negative")


def switching_rates(params: FluctuatorParams, temperature: float) -> tuple[float, float]:
    """Arrhenius escape rates (left-to-right, right-to-left), in 1/s.

    The left well sits at max(-asymmetry, 0) above the global minimum and
    the right well at max(asymmetry, 0); each rate is
    nu0 exp(-(barrier - well energy) / k_B T).
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature!r}")
    kt = K_B * temperature
    e_left = max(-params.asymmetry, 0.0)
    e_right = max(params.asymmetry, 0.0)
    rate_lr = params.attempt_frequency * math.exp(-(params.barrier - e_left) / kt)
    rate_rl = params.attempt_frequency * math.exp(-(params.barrier - e_right) / kt)
    return rate_lr, rate_rl


def mean_dwell_times(params: FluctuatorParams, temperature: float) -> tuple[float, float]:
    """Mean residence times (left, right) in seconds."""
    rate_lr, rate_rl = switching_rates(params, temperature)
    return 1.0 / rate_lr, 1.0 / rate_rl


def dwell_time_ratio(params: FluctuatorParams, temperature: float) -> float:
    """tau_left / tau_right = exp(+asymmetry / k_B T).

    Detailed balance ties the ratio to the asymmetry alone; barrier and
    attempt frequency cancel.  A deeper right well (negative asymmetry)
    gives a ratio below 1 since the particle lingers on the right.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature!r}")
    return math.exp(params.asymmetry / (K_B * temperature))


def occupation_probabilities(
    params: FluctuatorParams, temperature: float
) -> tuple[float, float]:
    """Stationary probabilities (p_left, p_right)."""
    rate_lr, rate_rl = switching_rates(params, temperature)
    total = rate_lr + rate_rl
    return rate_rl / total, rate_lr / total


def correlation_time(params: FluctuatorParams, temperature: float) -> float:
    """Relaxation time 1 / (rate_lr + rate_rl), in seconds."""
    rate_lr, rate_rl = switching_rates(params, temperature)
    return 1.0 / (rate_lr + rate_rl)


def telegraph_psd(
    frequency: np.ndarray,
    current_step: float,
    p_left: float,
    correlation_time_s: float,
) -> np.ndarray:
    """One-sided Lorentzian PSD of a two-level telegraph current (A^2/Hz).

    S(f) = 4 dI^2 p (1-p) tau / (1 + (2 pi f tau)^2), which integrates
    over f in [0, inf) to the telegraph variance dI^2 p (1-p).
    """
    if not 0.0 < p_left < 1.0:
        raise ValueError(f"p_left must lie in (0, 1), got {p_left!r}")
    if correlation_time_s <= 0:
        raise ValueError("correlation_time_s must be positive")
    f = np.asarray(frequency, dtype=float)
    tau = correlation_time_s
    return (
        4.0 * current_step**2 * p_left * (1.0 - p_left) * tau
        / (1.0 + (2.0 * math.pi * f * tau) ** 2)
    )


def fluctuator_psd(
    params: FluctuatorParams, temperature: float, frequency: np.ndarray
) -> np.ndarray:
    """Theoretical current-noise PSD of one coupled fluctuator (A^2/Hz).

    Convenience wrapper around :func:`telegraph_psd` using the
    fluctuator's own current step and its stationary statistics at
    ``temperature``.
    """
    p_left, _ = occupation_probabilities(params, temperature)
    return telegraph_psd(
        frequency,
        params.current_step,
        p_left,
        correlation_time(params, temperature),
    )


def temperature_ratio_from_dwell(ratio_a: float, ratio_b: float) -> float:
    """Temperature ratio T_b / T_a from dwell ratios of one fluctuator.

    If the same defect shows dwell-time ratios r_a at temperature T_a and
    r_b at T_b, detailed balance gives ln r_a / ln r_b = T_b / T_a.  The
    defect asymmetry cancels, so no calibration is needed.

    Raises
    ------
    UndefinedTemperatureRatioError
        If either ratio equals 1 (symmetric wells carry no temperature
        information) or is not a positive finite number.
    """
    for name, r in (("ratio_a", ratio_a), ("ratio_b", ratio_b)):
        if not (np.isfinite(r) and r > 0):
            raise UndefinedTemperatureRatioError(
                f"{name} must be positive and finite, got {r!r}"
            )
        if r == 1.0:
            raise UndefinedTemperatureRatioError(
                f"{name} is 1: a symmetric fluctuator gives no temperature ratio"
            )
    return math.log(ratio_a) / math.log(ratio_b)


def params_from_dwell_targets(
    log_dwell_ratio: float,
    mean_correlation_time_s: float,
    temperature: float,
    attempt_frequency: float = DEFAULT_ATTEMPT_FREQUENCY,
) -> FluctuatorParams:
    """Construct a fluctuator with prescribed dwell statistics.

    Chooses asymmetry and barrier so that at ``temperature`` the defect
    has ln(tau_left / tau_right) equal to ``log_dwell_ratio`` and
    relaxation time :func:`correlation_time` equal to
    ``mean_correlation_time_s``.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature!r}")
    if mean_correlation_time_s <= 0:
        raise ValueError("mean_correlation_time_s must be positive")
    kt = K_B * temperature
    asymmetry = log_dwell_ratio * kt
    # Rate sum 1/tau = nu0 exp(-E_b/kT) (1 + exp(|dE|/kT)) with the energy
    # zero at the lower well, so E_b = |dE| + kT ln(nu0 tau (1 + e^-|x|)).
    x = abs(log_dwell_ratio)
    barrier = abs(asymmetry) + kt * (
        math.log(attempt_frequency * mean_correlation_time_s)
        + math.log1p(math.exp(-x))
    )
    if barrier <= max(asymmetry, 0.0):
        raise ValueError(
            "targets put the barrier at or below a well energy; increase "
            "mean_correlation_time_s or lower attempt_frequency"
        )
    return FluctuatorParams(
        asymmetry=asymmetry, barrier=barrier, attempt_frequency=attempt_frequency
    )


def simulate_telegraph(
    params: FluctuatorParams,
    temperature: float,
    duration: float,
    dt: float,
    rng: np.random.Generator,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> np.ndarray:
    """Sample the fluctuator state on a uniform time grid.

    Exact event-driven simulation: dwell times are exponential with the
    Arrhenius rates, the initial state is drawn from the stationary
    distribution, and the state array holds 0 (left) or 1 (right) at
    times k dt for k = 0 .. round(duration/dt).

    Raises
    ------
    ResourceLimitError
        If more than ``max_events`` switching events would be needed.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration!r}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    rate_lr, rate_rl = switching_rates(params, temperature)
    p_left, _ = occupation_probabilities(params, temperature)
    # Events alternate L->R->L, so the stationary event rate is the
    # harmonic combination of the two escape rates, times two.
    event_rate = 2.0 * rate_lr * rate_rl / (rate_lr + rate_rl)
    expected_events = duration * event_rate
    if expected_events > 1.5 * max_events:
        raise ResourceLimitError(
            f"telegraph simulation expects ~{expected_events:.3g} switching "
            f"events, far over the max_events cap of {max_events}"
        )

    n = int(round(duration / dt)) + 1
    state0 = 0 if rng.random() < p_left else 1
    scales = (1.0 / rate_lr, 1.0 / rate_rl)

    # Draw dwell times in chunks; states strictly alternate, so event k
    # (counting from 0) occupies state (state0 + k) % 2.
    chunk = int(min(max(expected_events * 1.2 + 64.0, 1024.0), 4_000_000.0))
    switch_times: list[np.ndarray] = []
    t_edge = 0.0
    k0 = 0
    while t_edge < duration:
        if k0 > max_events:
            raise ResourceLimitError(
                f"telegraph simulation exceeded {max_events} switching events "
                f"(duration {duration!r} s at rates {rate_lr:.3g}/{rate_rl:.3g} 1/s)"
            )
        dwell_scales = np.where(
            (np.arange(k0, k0 + chunk) + state0) % 2 == 0, scales[0], scales[1]
        )
        dwells = rng.exponential(dwell_scales)
        times = t_edge + np.cumsum(dwells)
        switch_times.append(times)
        t_edge = times[-1]
        k0 += chunk

    edges = np.concatenate(switch_times)
    n_events = int(np.searchsorted(edges, duration, side="right")) + 1
    if n_events > max_events:
        raise ResourceLimitError(
            f"telegraph simulation needed {n_events} events, over the "
            f"max_events cap of {max_events}"
        )
    grid = np.arange(n) * dt
    # Number of switches strictly before each grid time fixes the state.
    k = np.searchsorted(edges, grid, side="right")
    return ((state0 + k) % 2).astype(np.int8)
