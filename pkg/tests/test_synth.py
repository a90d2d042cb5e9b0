from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from qset import synth
from qset.analysis import log_bin_psd, psd_welch
from qset.tlf import params_from_dwell_targets, simulate_telegraph


def test_drift_walk_starts_at_zero_and_scales_with_diffusivity():
    rng = np.random.default_rng(0)
    walk = synth.synthesize_drift(1e-14, 100.0, 0.1, rng)
    assert walk[0] == 0.0
    # per-step spread is 2 D sqrt(dt)
    steps = np.diff(walk)
    assert steps.std() == pytest.approx(2.0 * 1e-14 * math.sqrt(0.1), rel=0.05)
    assert np.all(synth.synthesize_drift(0.0, 10.0, 0.1, np.random.default_rng(0)) == 0.0)


def test_drift_is_deterministic_for_a_seed():
    a = synth.synthesize_drift(1e-14, 50.0, 0.1, np.random.default_rng(9))
    b = synth.synthesize_drift(1e-14, 50.0, 0.1, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_pink_spectrum_has_unit_slope_and_calibrated_level():
    rng = np.random.default_rng(0)
    amplitude = 1e-24
    trace = synth.synthesize_pink(amplitude, 1.0, 4000.0, 0.02, rng)
    est = psd_welch(trace, 0.02)
    fb, pb, _ = log_bin_psd(est)
    keep = (fb > 2e-3) & (fb < 5.0)
    slope = np.polyfit(np.log10(fb[keep]), np.log10(pb[keep]), 1)[0]
    assert -1.2 < slope < -0.8
    # amplitude parameter is the spectral density at 1 Hz
    level_1hz = np.interp(1.0, fb, pb)
    assert level_1hz == pytest.approx(amplitude, rel=0.3)


def test_pink_trace_scales_as_sqrt_amplitude_for_a_seed():
    a = synth.synthesize_pink(1e-24, 1.0, 100.0, 0.01, np.random.default_rng(4))
    b = synth.synthesize_pink(2e-24, 1.0, 100.0, 0.01, np.random.default_rng(4))
    assert np.allclose(b, a * math.sqrt(2.0), rtol=1e-12, atol=0.0)


def test_pink_rejects_too_short_traces():
    with pytest.raises(ValueError):
        synth.synthesize_pink(1e-24, 1.0, 0.03, 0.01, np.random.default_rng(0))


def test_jump_count_is_poisson_with_the_requested_rate():
    rng = np.random.default_rng(1)
    counts = []
    for _ in range(400):
        trace = synth.synthesize_jumps(0.5, 1e-12, "constant", 20.0, 0.1, rng)
        counts.append(np.count_nonzero(np.diff(trace)))
    assert np.mean(counts) == pytest.approx(0.5 * 20.0, rel=0.05)


def test_jumps_are_piecewise_constant_with_fixed_amplitude():
    rng = np.random.default_rng(1)
    trace = synth.synthesize_jumps(0.5, 1e-12, "constant", 20.0, 0.1, rng)
    steps = np.diff(trace)
    jumps = steps[steps != 0.0]
    assert np.allclose(np.abs(jumps), 1e-12, rtol=1e-12)
    assert np.all(synth.synthesize_jumps(0.0, 1e-12, "normal", 10.0, 0.1,
                                         np.random.default_rng(0)) == 0.0)


def test_jump_distribution_names_are_validated():
    rng = np.random.default_rng(0)
    for name in ("normal", "laplace", "constant"):
        synth.synthesize_jumps(0.5, 1e-12, name, 5.0, 0.1, rng)
    with pytest.raises(ValueError):
        synth.synthesize_jumps(0.5, 1e-12, "cauchy", 5.0, 0.1, rng)


def test_white_noise_variance_matches_the_psd_level():
    rng = np.random.default_rng(2)
    level, dt = 4e-24, 0.01
    trace = synth.synthesize_white(level, 2000.0, dt, rng)
    # two-sided sampling of a one-sided level: variance level / (2 dt)
    assert trace.var() == pytest.approx(level / (2.0 * dt), rel=0.05)
    assert np.all(synth.synthesize_white(0.0, 10.0, 0.1, np.random.default_rng(0)) == 0.0)


def test_relaxation_component_is_deterministic():
    a = synth.synthesize_relaxation(1e-12, 8, 50.0, 0.1)
    b = synth.synthesize_relaxation(1e-12, 8, 50.0, 0.1)
    assert np.array_equal(a, b)
    assert np.all(synth.synthesize_relaxation(0.0, 8, 50.0, 0.1) == 0.0)


def make_recipe(seed: int = 3, **overrides) -> synth.NoiseRecipe:
    base = params_from_dwell_targets(-1.0, 0.3, 0.2)
    fluc = replace(base, induced_charge=0.05, current_step=8e-12)
    kwargs = dict(seed=seed, fluctuator=fluc, fluctuator_temperature=0.2,
                  mean_current=4e-10, drift_diffusivity=1e-14,
                  pink_amplitude=1e-24, jump_rate=0.05, jump_amplitude=1e-12,
                  white_level=1e-24)
    kwargs.update(overrides)
    return synth.NoiseRecipe(**kwargs)


def test_composed_trace_is_deterministic_and_additive():
    trace = synth.compose_trace(make_recipe(), 20.0, 0.01)
    again = synth.compose_trace(make_recipe(), 20.0, 0.01)
    assert np.array_equal(trace.samples, again.samples)
    parts = sum(v for k, v in trace.annotations.items() if k.startswith("component_"))
    assert np.max(np.abs(parts + 4e-10 - trace.samples)) < 1e-12


def test_composed_telegraph_component_reuses_the_first_child_stream():
    trace = synth.compose_trace(make_recipe(), 20.0, 0.01)
    fluc = make_recipe().fluctuator
    child = np.random.default_rng(np.random.SeedSequence(3).spawn(6)[0])
    states = simulate_telegraph(fluc, 0.2, 20.0, 0.01, child)
    assert np.array_equal(trace.annotations["state"], states)
    assert np.array_equal(trace.annotations["component_telegraph"],
                          fluc.current_step * states)


def test_component_streams_are_independent():
    base = synth.compose_trace(make_recipe(), 20.0, 0.01)
    bumped = synth.compose_trace(make_recipe(jump_rate=0.8), 20.0, 0.01)
    for key in ("component_pink", "component_white", "component_drift",
                "component_telegraph"):
        assert np.array_equal(base.annotations[key], bumped.annotations[key])
    assert not np.array_equal(base.annotations["component_jumps"],
                              bumped.annotations["component_jumps"])


def test_composed_white_component_has_requested_variance():
    recipe = synth.NoiseRecipe(seed=11, white_level=4e-24)
    trace = synth.compose_trace(recipe, 2000.0, 0.01)
    assert trace.samples.var() == pytest.approx(4e-24 / (2.0 * 0.01), rel=0.05)
    assert trace.samples.mean() == pytest.approx(0.0, abs=5e-13)
