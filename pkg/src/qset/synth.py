"""Synthetic current traces combining the observed noise ingredients.

A measured trace from a charge-sensitive device shows up to five things at
once: telegraph switching from one strongly coupled defect, a slow
diffusive drift of the operating point, a 1/f-type background from many
weakly coupled defects, occasional persistent jumps, and the white noise
of the measurement chain.  ``compose_trace`` builds all of them from one
seed with per-component RNG streams, so changing one component's
parameters never changes another component's realization, and returns the
per-component breakdown as annotations for ground-truth validation.

The 1/f background is realized physically, as a sum of symmetric random
telegraph processes with log-spaced switching rates and rate-dependent
amplitudes, rather than by spectral shaping of white noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tlf
from .traces import CurrentTrace, n_samples

#: Telegraph-process density used to build the 1/f background.
DEFAULT_PINK_MODES_PER_DECADE = 32

_JUMP_DISTRIBUTIONS = ("normal", "laplace", "constant")


@dataclass(frozen=True)
class NoiseRecipe:
    """Everything needed to synthesize one trace deterministically.

    All quantities SI.  ``fluctuator`` couples through its own
    ``current_step``; set it to None for a defect-free trace.
    ``drift_diffusivity`` is in A s^-1/2 (an ensemble of traces has
    current standard deviation 2 D sqrt(t) at elapsed time t).
    ``pink_amplitude`` and ``white_level`` are one-sided PSDs in A^2/Hz,
    the former evaluated at 1 Hz.  Jump amplitudes are drawn from
    ``jump_distribution`` scaled by ``jump_amplitude``.  The optional
    relaxation component is a deterministic sum of exponential decays
    (the signature of a recent gate step), disabled at amplitude zero.
    """

    seed: int
    fluctuator: tlf.FluctuatorParams | None = None
    fluctuator_temperature: float = 0.0
    mean_current: float = 0.0
    drift_diffusivity: float = 0.0
    pink_amplitude: float = 0.0
    pink_alpha: float = 1.0
    pink_modes_per_decade: int = DEFAULT_PINK_MODES_PER_DECADE
    white_level: float = 0.0
    jump_rate: float = 0.0
    jump_amplitude: float = 0.0
    jump_distribution: str = "normal"
    relaxation_amplitude: float = 0.0
    relaxation_modes: int = 8

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.fluctuator is not None and not (
            np.isfinite(self.fluctuator_temperature)
            and self.fluctuator_temperature > 0
        ):
            raise ValueError(
                "fluctuator_temperature must be positive when a fluctuator is set"
            )
        for name in (
            "drift_diffusivity",
            "pink_amplitude",
            "white_level",
            "jump_rate",
            "jump_amplitude",
        ):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be non-negative, got {v!r}")
        if not np.isfinite(self.mean_current):
            raise ValueError(f"mean_current must be finite, got {self.mean_current!r}")
        if not np.isfinite(self.relaxation_amplitude):
            raise ValueError("relaxation_amplitude must be finite")
        if not 0.5 <= self.pink_alpha <= 2.0:
            raise ValueError(
                f"pink_alpha must lie in [0.5, 2], got {self.pink_alpha!r}"
            )
        if self.pink_modes_per_decade < 1:
            raise ValueError("pink_modes_per_decade must be >= 1")
        if self.relaxation_modes < 1:
            raise ValueError("relaxation_modes must be >= 1")
        if self.jump_distribution not in _JUMP_DISTRIBUTIONS:
            raise ValueError(
                f"jump_distribution must be one of {_JUMP_DISTRIBUTIONS}, "
                f"got {self.jump_distribution!r}"
            )


def synthesize_drift(
    diffusivity: float, duration: float, dt: float, rng: np.random.Generator
) -> np.ndarray:
    """Diffusive random walk starting at zero.

    Increment variance is 4 D^2 dt, so the ensemble standard deviation
    at elapsed time t is 2 D sqrt(t).
    """
    if diffusivity < 0:
        raise ValueError(f"diffusivity must be non-negative, got {diffusivity!r}")
    n = n_samples(duration, dt)
    if diffusivity == 0.0:
        return np.zeros(n)
    out = np.empty(n)
    out[0] = 0.0
    np.cumsum(rng.normal(0.0, 2.0 * diffusivity * math.sqrt(dt), n - 1), out=out[1:])
    return out


def synthesize_pink(
    amplitude: float,
    alpha: float,
    duration: float,
    dt: float,
    rng: np.random.Generator,
    modes_per_decade: int = DEFAULT_PINK_MODES_PER_DECADE,
) -> np.ndarray:
    """1/f^alpha background as a sum of symmetric telegraph processes.

    Per-state switching rates are log-spaced over [1/duration, 1/(2 dt)]
    at ``modes_per_decade`` processes per decade, with amplitudes
    a_k^2 proportional to rate^(1-alpha); the sum of the component
    Lorentzians then falls as 1/f^alpha across the covered band.  The
    amplitudes are normalized so the summed theoretical PSD equals
    ``amplitude`` (A^2/Hz, one-sided) at 1 Hz.  Each process is sampled
    on the grid through its exact two-state Markov transition
    probability.
    """
    if amplitude < 0:
        raise ValueError(f"amplitude must be non-negative, got {amplitude!r}")
    if not 0.5 <= alpha <= 2.0:
        raise ValueError(f"alpha must lie in [0.5, 2], got {alpha!r}")
    n = n_samples(duration, dt)
    if amplitude == 0.0:
        return np.zeros(n)
    if duration < 4.0 * dt:
        raise ValueError(
            f"duration {duration!r} spans less than 4 samples at dt {dt!r}: "
            "too narrow a band for a 1/f ensemble"
        )
    rate_lo = 1.0 / duration
    rate_hi = 1.0 / (2.0 * dt)
    n_modes = max(int(math.ceil(modes_per_decade * math.log10(rate_hi / rate_lo))), 2)
    rates = np.geomspace(rate_lo, rate_hi, n_modes)

    amps_sq = rates ** (1.0 - alpha)
    # One-sided PSD of a +-a telegraph with per-state rate g is
    # 4 a^2 (2g) / ((2g)^2 + w^2); normalize the sum at f = 1 Hz.
    corr = 2.0 * rates
    model_at_1hz = np.sum(4.0 * amps_sq * corr / (corr**2 + (2.0 * math.pi) ** 2))
    amps = np.sqrt(amps_sq * (amplitude / model_at_1hz))

    out = np.zeros(n)
    flip_probs = 0.5 * -np.expm1(-2.0 * rates * dt)
    for amp, p_flip in zip(amps, flip_probs):
        start = 1.0 if rng.random() < 0.5 else -1.0
        flips = rng.random(n - 1) < p_flip
        parity = np.empty(n, dtype=np.int64)
        parity[0] = 0
        np.cumsum(flips, out=parity[1:])
        out += amp * start * np.where(parity % 2 == 0, 1.0, -1.0)
    return out


def synthesize_jumps(
    rate: float,
    amplitude: float,
    distribution: str,
    duration: float,
    dt: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Poisson cascade of persistent current steps.

    Event times are uniform over the trace; each adds a step that lasts
    to the end.  ``distribution`` picks the amplitude law: "normal"
    (std = amplitude), "laplace" (std = amplitude), or "constant"
    (every step exactly +amplitude).
    """
    if rate < 0:
        raise ValueError(f"rate must be non-negative, got {rate!r}")
    if distribution not in _JUMP_DISTRIBUTIONS:
        raise ValueError(f"unknown jump distribution {distribution!r}")
    n = n_samples(duration, dt)
    if rate == 0.0 or amplitude == 0.0:
        return np.zeros(n)
    count = int(rng.poisson(rate * duration))
    if count == 0:
        return np.zeros(n)
    times = rng.uniform(0.0, duration, count)
    if distribution == "normal":
        sizes = rng.normal(0.0, amplitude, count)
    elif distribution == "laplace":
        sizes = rng.laplace(0.0, amplitude / math.sqrt(2.0), count)
    else:
        sizes = np.full(count, amplitude)
    # A step at time t first affects the sample at the next grid point.
    steps = np.zeros(n)
    first_idx = np.searchsorted(np.arange(n) * dt, times, side="left")
    np.add.at(steps, np.minimum(first_idx, n - 1), sizes)
    return np.cumsum(steps)


def synthesize_white(
    level: float, duration: float, dt: float, rng: np.random.Generator
) -> np.ndarray:
    """Gaussian white noise with one-sided PSD ``level`` (A^2/Hz)."""
    if level < 0:
        raise ValueError(f"level must be non-negative, got {level!r}")
    n = n_samples(duration, dt)
    if level == 0.0:
        return np.zeros(n)
    return rng.normal(0.0, math.sqrt(level / (2.0 * dt)), n)


def synthesize_relaxation(
    amplitude: float, modes: int, duration: float, dt: float
) -> np.ndarray:
    """Deterministic post-step relaxation: a spread of exponential decays.

    Time constants are log-spaced between 100 dt and duration / 4; the
    decays share the total initial amplitude equally.
    """
    n = n_samples(duration, dt)
    if amplitude == 0.0:
        return np.zeros(n)
    tau_min = min(100.0 * dt, duration / 8.0)
    taus = np.geomspace(tau_min, duration / 4.0, modes)
    t = np.arange(n) * dt
    return amplitude / modes * np.exp(-t[:, None] / taus).sum(axis=1)


def compose_trace(recipe: NoiseRecipe, duration: float, dt: float) -> CurrentTrace:
    """Deterministic composite trace for (recipe, duration, dt).

    Child RNG streams are spawned from the seed in a fixed order
    (telegraph, drift, pink, jumps, white, relaxation), so a component's
    realization depends only on the seed and its own parameters.
    Annotations carry the true defect state sequence and every
    component, which sum with the mean to the samples exactly.
    """
    if duration <= 0 or dt <= 0:
        raise ValueError("duration and dt must be positive")
    n = n_samples(duration, dt)
    children = np.random.SeedSequence(recipe.seed).spawn(6)
    rng_telegraph = np.random.default_rng(children[0])
    rng_drift = np.random.default_rng(children[1])
    rng_pink = np.random.default_rng(children[2])
    rng_jumps = np.random.default_rng(children[3])
    rng_white = np.random.default_rng(children[4])

    if recipe.fluctuator is not None:
        states = tlf.simulate_telegraph(
            recipe.fluctuator,
            recipe.fluctuator_temperature,
            duration,
            dt,
            rng_telegraph,
        )
        telegraph = states.astype(float) * recipe.fluctuator.current_step
    else:
        states = np.zeros(n, dtype=np.int8)
        telegraph = np.zeros(n)

    drift = synthesize_drift(recipe.drift_diffusivity, duration, dt, rng_drift)
    pink = synthesize_pink(
        recipe.pink_amplitude,
        recipe.pink_alpha,
        duration,
        dt,
        rng_pink,
        recipe.pink_modes_per_decade,
    )
    jumps = synthesize_jumps(
        recipe.jump_rate,
        recipe.jump_amplitude,
        recipe.jump_distribution,
        duration,
        dt,
        rng_jumps,
    )
    white = synthesize_white(recipe.white_level, duration, dt, rng_white)
    relaxation = synthesize_relaxation(
        recipe.relaxation_amplitude, recipe.relaxation_modes, duration, dt
    )

    samples = recipe.mean_current + telegraph + drift + pink + jumps + white
    samples = samples + relaxation
    return CurrentTrace(
        t0=0.0,
        dt=dt,
        samples=samples,
        annotations={
            "state": states,
            "component_telegraph": telegraph,
            "component_drift": drift,
            "component_pink": pink,
            "component_jumps": jumps,
            "component_white": white,
            "component_relaxation": relaxation,
        },
    )
