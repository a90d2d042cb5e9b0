"""Trace analysis: detrending, state detection, dwell and spectral statistics.

The pipeline mirrors how a long charge-sensor record is actually reduced:
remove the slow baseline (asymmetric least squares), classify samples
into the two defect states (Gaussian mixture plus hysteresis), extract
dwell-time statistics, estimate the spectrum (Welch), and fit a
Lorentzian-plus-power-law model.  ``analyze_trace`` chains all of it and
emits a flat report dictionary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, ndimage, optimize, signal

from .errors import NoTelegraphDetected, NumericalError
from .traces import CurrentTrace

#: Baseline stiffness in physical units (s^4).  The index-space penalty
#: used internally is this divided by dt^4, which makes the effective
#: cutoff frequency (~ lam_phys^(-1/4)) independent of the sampling rate.
DEFAULT_BASELINE_STIFFNESS = 1e8

#: Asymmetry of the baseline penalty; 0.5 weights both sides equally,
#: which reduces the solve to a single pass.
DEFAULT_BASELINE_ASYMMETRY = 0.5


def als_baseline(
    samples: np.ndarray,
    dt: float,
    stiffness: float = DEFAULT_BASELINE_STIFFNESS,
    asymmetry: float = DEFAULT_BASELINE_ASYMMETRY,
    max_iterations: int = 10,
    sample_weights: np.ndarray | None = None,
) -> np.ndarray:
    """Asymmetric-least-squares baseline (second-difference penalty).

    Minimizes sum(w_i (y_i - z_i)^2) + (stiffness / dt^4) * sum((D2 z)^2)
    where w_i is ``asymmetry`` for samples above the baseline and
    1 - ``asymmetry`` below; weights are re-estimated each iteration.
    ``stiffness`` has units of s^4; signal components slower than about
    stiffness^(1/4) seconds per cycle are absorbed into the baseline.
    At asymmetry 0.5 the weights are constant so one solve suffices.

    ``sample_weights`` (optional, non-negative, same length) multiply
    the asymmetry weights; near-zero entries let the penalty bridge
    smoothly across samples that should not pull on the baseline.

    The penalty is sampling-rate invariant (the index-space weight is
    stiffness / dt^4), so when the cutoff sits many octaves below the
    sampling rate the solve runs on a block-averaged grid chosen to
    keep the system well conditioned, and the baseline is interpolated
    back to the full grid.  Both paths agree to interpolation error,
    which is O((block / cutoff)^2) and far below the solve tolerance.
    """
    y = np.asarray(samples, dtype=float)
    if y.ndim != 1 or y.size < 3:
        raise ValueError("samples must be a 1-D array with at least 3 points")
    if not (np.isfinite(stiffness) and stiffness > 0):
        raise ValueError(f"stiffness must be positive, got {stiffness!r}")
    if not 0.0 < asymmetry < 1.0:
        raise ValueError(f"asymmetry must lie in (0, 1), got {asymmetry!r}")
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive, got {dt!r}")
    if sample_weights is not None:
        sw = np.asarray(sample_weights, dtype=float)
        if sw.shape != y.shape:
            raise ValueError("sample_weights must match samples in shape")
        if not np.all(np.isfinite(sw)) or np.any(sw < 0):
            raise ValueError("sample_weights must be finite and non-negative")
        if not np.any(sw > 0):
            raise ValueError("sample_weights must not be all zero")
    else:
        sw = None

    # Keep the index-space penalty below ~1e8 (condition number ~1e9,
    # comfortably inside float64) by decimating in blocks.
    block = int(math.ceil((stiffness / dt**4 / 1e8) ** 0.25))
    if block > 1:
        block = min(block, y.size // 16) or 1
    if block > 1:
        n_blocks = y.size // block
        if sw is None:
            coarse = y[: n_blocks * block].reshape(n_blocks, block).mean(axis=1)
            sw_coarse = None
        else:
            wb = sw[: n_blocks * block].reshape(n_blocks, block)
            yb = y[: n_blocks * block].reshape(n_blocks, block)
            wsum = wb.sum(axis=1)
            # Blocks with no live samples take the plain mean at ~zero weight.
            safe = np.where(wsum > 0, wsum, 1.0)
            coarse = np.where(
                wsum > 0, (wb * yb).sum(axis=1) / safe, yb.mean(axis=1)
            )
            sw_coarse = wsum / block
        z_coarse = als_baseline(
            coarse, block * dt, stiffness, asymmetry, max_iterations, sw_coarse
        )
        centers = (np.arange(n_blocks) * block + (block - 1) / 2.0) * dt
        return np.interp(np.arange(y.size) * dt, centers, z_coarse)

    n = y.size
    lam = stiffness / dt**4

    # Banded form of lam * (D2^T D2), D2 the (n-2) x n second difference.
    main = np.full(n, 6.0)
    main[[0, -1]] = 1.0
    main[[1, -2]] = 5.0
    off1 = np.full(n - 1, -4.0)
    off1[[0, -1]] = -2.0
    off2 = np.ones(n - 2)
    penalty = np.zeros((3, n))
    penalty[0, 2:] = lam * off2
    penalty[1, 1:] = lam * off1
    penalty[2, :] = lam * main

    w = np.full(n, 0.5)
    z = y
    for _ in range(max_iterations):
        wt = w if sw is None else w * sw
        ab = penalty.copy()
        ab[2, :] += wt
        try:
            z = linalg.solveh_banded(ab, wt * y, lower=False)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"baseline solve failed: {exc}") from exc
        w_new = np.where(y > z, asymmetry, 1.0 - asymmetry)
        if np.array_equal(w_new, w):
            break
        w = w_new
    return z


@dataclass(frozen=True)
class StateLabels:
    """Two-state classification of a detrended trace.

    ``states`` holds 0 (low-current level) or 1 (high) per sample;
    ``level_low``/``level_high`` are the fitted means and
    ``sigma_low``/``sigma_high`` the fitted in-state standard
    deviations.  ``threshold`` is the class boundary and
    ``hysteresis`` the half-width of the dead band around it.
    """

    states: np.ndarray
    level_low: float
    level_high: float
    sigma_low: float
    sigma_high: float
    threshold: float
    hysteresis: float

    @property
    def separation(self) -> float:
        """Level spacing in units of the RMS in-state spread."""
        rms = math.sqrt(0.5 * (self.sigma_low**2 + self.sigma_high**2))
        return (self.level_high - self.level_low) / rms


def _otsu_split(y: np.ndarray):
    """Threshold maximizing between-class variance; returns (mu, sig, pi)."""
    ys = np.sort(y)
    n = ys.size
    csum = np.cumsum(ys)
    k = np.arange(1, n)
    w0 = k / n
    mu0 = csum[:-1] / k
    mu1 = (csum[-1] - csum[:-1]) / (n - k)
    between = w0 * (1.0 - w0) * (mu0 - mu1) ** 2
    # Keep a sliver of samples on each side so class stds exist.
    guard = max(n // 500, 4)
    between[:guard] = -1.0
    between[-guard:] = -1.0
    kb = int(np.argmax(between)) + 1
    lo, hi = ys[:kb], ys[kb:]
    mu = np.array([lo.mean(), hi.mean()])
    sig = np.array([lo.std(), hi.std()])
    pi = np.array([kb / n, 1.0 - kb / n])
    return mu, sig, pi


def _em_pass(y, mu, sig, pi, floor, scale, tied, max_iterations):
    prev_mu = mu.copy()
    for _ in range(max_iterations):
        sig = np.maximum(sig, floor)
        log_resp = (
            np.log(pi)[:, None]
            - np.log(sig)[:, None]
            - 0.5 * ((y[None, :] - mu[:, None]) / sig[:, None]) ** 2
        )
        log_resp -= log_resp.max(axis=0, keepdims=True)
        resp = np.exp(log_resp)
        resp /= resp.sum(axis=0, keepdims=True)
        weight = resp.sum(axis=1)
        if np.any(weight < 1e-12):
            raise NoTelegraphDetected("one mixture component collapsed")
        mu = (resp @ y) / weight
        var = (resp @ (y**2)) / weight - mu**2
        if tied:
            var[:] = np.dot(weight, var) / y.size
        sig = np.sqrt(np.maximum(var, floor**2))
        pi = weight / y.size
        # Affine-covariant stop: compare movement to the level scale.
        if np.max(np.abs(mu - prev_mu)) < 1e-10 * scale:
            break
        prev_mu = mu.copy()
    return mu, sig, pi


def _fit_two_gaussians(y: np.ndarray, max_iterations: int = 100):
    """EM fit of a 2-component Gaussian mixture.  Returns (mu, sig, pi).

    Initialized by an Otsu split (robust to very unequal occupancies),
    then refined with tied variances before freeing them; the tied
    stage cannot fall into the narrow-core-plus-wide-background local
    optimum, and the free stage is reverted if it collapses the means.
    """
    scale = float(np.std(y))
    if scale == 0.0 or not np.isfinite(scale):
        raise NoTelegraphDetected("trace has no variance to classify")
    floor = 1e-6 * scale
    mu, sig, pi = _otsu_split(y)
    mu, sig, pi = _em_pass(y, mu, sig, pi, floor, scale, True, max_iterations)
    sep_tied = abs(mu[1] - mu[0])
    mu_f, sig_f, pi_f = _em_pass(
        y, mu.copy(), sig.copy(), pi.copy(), floor, scale, False, max_iterations
    )
    if abs(mu_f[1] - mu_f[0]) >= 0.5 * sep_tied:
        mu, sig, pi = mu_f, sig_f, pi_f
    order = np.argsort(mu)
    return mu[order], sig[order], pi[order]


def detect_states(
    samples: np.ndarray, min_separation: float = 2.0
) -> StateLabels:
    """Classify a detrended trace into its two telegraph levels.

    Fits a two-Gaussian mixture, requires the levels to be separated by
    at least ``min_separation`` times the RMS in-state spread (else
    raises ``NoTelegraphDetected``), then assigns states by a hysteresis
    comparator: the threshold sits midway between the levels and a
    sample only switches the state when it crosses the threshold by more
    than the narrower component's sigma.  Samples inside the dead band
    inherit the previous state, which suppresses double-counting of
    transitions due to noise.
    """
    y = np.asarray(samples, dtype=float)
    if y.ndim != 1 or y.size < 10:
        raise ValueError("samples must be a 1-D array with at least 10 points")
    mu, sig, _ = _fit_two_gaussians(y)
    rms = math.sqrt(0.5 * float(sig[0] ** 2 + sig[1] ** 2))
    if (mu[1] - mu[0]) < min_separation * rms:
        raise NoTelegraphDetected(
            f"level separation {mu[1] - mu[0]:.3e} is below "
            f"{min_separation:g} x in-state spread {rms:.3e}"
        )
    threshold = 0.5 * float(mu[0] + mu[1])
    hysteresis = float(min(sig))

    above = y > threshold + hysteresis
    below = y < threshold - hysteresis
    decided = above | below
    if not np.any(above) or not np.any(below):
        raise NoTelegraphDetected("trace never leaves one state's band")
    # Forward-fill undecided samples with the last decided state.
    state_at_decided = above[decided].astype(np.int8)
    idx = np.cumsum(decided) - 1
    states = state_at_decided[np.maximum(idx, 0)]
    return StateLabels(
        states=states,
        level_low=float(mu[0]),
        level_high=float(mu[1]),
        sigma_low=float(sig[0]),
        sigma_high=float(sig[1]),
        threshold=threshold,
        hysteresis=hysteresis,
    )


@dataclass(frozen=True)
class DwellStats:
    """Dwell-time statistics from a two-state state sequence.

    ``tau_low``/``tau_high`` are mean dwell times (s) in the low and
    high state, from complete (uncensored) dwells only; ``n_low``/
    ``n_high`` count those dwells.  ``dwell_ratio`` is tau_low /
    tau_high, ``occupation_low`` the fraction of time in the low state,
    and ``mean_cycle_rate`` the number of low-high cycles per second.
    """

    tau_low: float
    tau_high: float
    n_low: int
    n_high: int
    dwell_ratio: float
    mean_cycle_rate: float

    @property
    def occupation_low(self) -> float:
        """Fraction of time in the low state, tau_low / (tau_low + tau_high)."""
        return self.tau_low / (self.tau_low + self.tau_high)

    @property
    def correlation_time(self) -> float:
        """Harmonic combination tau_low tau_high / (tau_low + tau_high)."""
        return self.tau_low * self.tau_high / (self.tau_low + self.tau_high)

    @property
    def log_dwell_ratio(self) -> float:
        """ln(tau_low / tau_high); the well asymmetry in kT units."""
        return math.log(self.dwell_ratio)


def dwell_statistics(states: np.ndarray, dt: float) -> DwellStats:
    """Mean dwell times from a sampled two-state sequence.

    The first and last dwells are censored by the record edges and are
    dropped.  Requires at least one complete dwell in each state, else
    raises ``NoTelegraphDetected``.  Dwell lengths are counted in whole
    samples, so each estimate carries an O(dt) discretization bias;
    keep dt well below the dwell times for accurate ratios.
    """
    s = np.asarray(states)
    if s.ndim != 1 or s.size < 3:
        raise ValueError("states must be a 1-D array with at least 3 samples")
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive, got {dt!r}")
    edges = np.flatnonzero(np.diff(s) != 0)
    if edges.size < 2:
        raise NoTelegraphDetected("fewer than two transitions in the record")
    # Dwell k spans edges[k]..edges[k+1]; its state is s[edges[k] + 1].
    lengths = np.diff(edges) * dt
    dwell_state = s[edges[:-1] + 1]
    low = lengths[dwell_state == 0]
    high = lengths[dwell_state == 1]
    if low.size == 0 or high.size == 0:
        raise NoTelegraphDetected("no complete dwell in one of the states")
    tau_low = float(np.mean(low))
    tau_high = float(np.mean(high))
    total = (edges[-1] - edges[0]) * dt
    return DwellStats(
        tau_low=tau_low,
        tau_high=tau_high,
        n_low=int(low.size),
        n_high=int(high.size),
        dwell_ratio=tau_low / tau_high,
        mean_cycle_rate=0.5 * (low.size + high.size) / total,
    )


def delta_e_over_kt(stats: DwellStats) -> float:
    """Well-energy splitting in kT units from the dwell-time ratio.

    Returns -ln(tau_low / tau_high): positive when the system spends
    less time in the low state, i.e. the high-current well is deeper.
    """
    if not stats.dwell_ratio > 0:
        raise ValueError(f"dwell ratio must be positive, got {stats.dwell_ratio!r}")
    return -math.log(stats.dwell_ratio)


@dataclass(frozen=True)
class PsdEstimate:
    """One-sided power spectral density estimate.

    ``frequency`` in Hz (f = 0 excluded), ``psd`` in A^2/Hz,
    ``n_segments`` Welch segments averaged, ``dt`` the sample interval.
    """

    frequency: np.ndarray
    psd: np.ndarray
    n_segments: int
    dt: float

    def __post_init__(self):
        f = np.asarray(self.frequency, dtype=float)
        p = np.asarray(self.psd, dtype=float)
        if f.shape != p.shape or f.ndim != 1:
            raise ValueError("frequency and psd must be equal-length 1-D arrays")
        if np.any(np.diff(f) <= 0) or f[0] <= 0:
            raise ValueError("frequencies must be positive and strictly increasing")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("psd values must be finite and non-negative")

    def band_power(self, f_lo: float, f_hi: float) -> float:
        """Integrated power (A^2) over [f_lo, f_hi] by trapezoid rule."""
        m = (self.frequency >= f_lo) & (self.frequency <= f_hi)
        if np.count_nonzero(m) < 2:
            raise ValueError("band contains fewer than 2 frequency points")
        return float(np.trapezoid(self.psd[m], self.frequency[m]))


def psd_welch(
    samples: np.ndarray,
    dt: float,
    segment_length: int | None = None,
    overlap: float = 0.5,
    window: str = "hann",
) -> PsdEstimate:
    """Welch PSD estimate of a current record, mean removed.

    ``segment_length`` defaults to the largest power of two not
    exceeding n // 6, clamped to [16, n]; six half-overlapping segments
    give a workable variance/resolution compromise for Lorentzian knees
    sitting a decade or two below Nyquist.  ``overlap`` is the segment
    overlap fraction in [0, 0.9]; ``window`` any scipy window name.
    Normalized as a one-sided density: the integral over frequency
    reproduces the variance of a white input.
    """
    y = np.asarray(samples, dtype=float)
    if y.ndim != 1 or y.size < 32:
        raise ValueError("samples must be a 1-D array with at least 32 points")
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive, got {dt!r}")
    if not 0.0 <= overlap <= 0.9:
        raise ValueError(f"overlap must lie in [0, 0.9], got {overlap!r}")
    n = y.size
    if segment_length is None:
        segment_length = 2 ** int(math.floor(math.log2(max(n // 6, 16))))
    segment_length = int(min(segment_length, n))
    if segment_length < 16:
        raise ValueError(f"segment_length {segment_length} is below 16")
    n_overlap = int(segment_length * overlap)
    step = segment_length - n_overlap
    n_segments = 1 + (n - segment_length) // step
    f, pxx = signal.welch(
        y,
        fs=1.0 / dt,
        window=window,
        nperseg=segment_length,
        noverlap=n_overlap,
        detrend="constant",
        scaling="density",
    )
    return PsdEstimate(
        frequency=f[1:], psd=pxx[1:], n_segments=int(n_segments), dt=dt
    )


def _log_bin(
    f: np.ndarray, p: np.ndarray, bins_per_decade: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if bins_per_decade < 1:
        raise ValueError("bins_per_decade must be >= 1")
    lo, hi = f[0], f[-1]
    n_bins = max(int(math.ceil(math.log10(hi / lo) * bins_per_decade)), 1)
    edges = np.geomspace(lo, hi, n_bins + 1)
    edges[-1] *= 1.0 + 1e-12
    which = np.digitize(f, edges) - 1
    which = np.clip(which, 0, n_bins - 1)
    counts = np.bincount(which, minlength=n_bins)
    keep = counts > 0
    sum_psd = np.bincount(which, weights=p, minlength=n_bins)
    sum_logf = np.bincount(which, weights=np.log(f), minlength=n_bins)
    f_out = np.exp(sum_logf[keep] / counts[keep])
    p_out = sum_psd[keep] / counts[keep]
    return f_out, p_out, counts[keep]


def log_bin_psd(
    estimate: PsdEstimate, bins_per_decade: int = 16
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Geometric-mean frequencies, mean PSD, and counts per log bin.

    Irregular thinning for fitting: bins with no support are dropped.
    """
    return _log_bin(estimate.frequency, estimate.psd, bins_per_decade)


@dataclass(frozen=True)
class SpectralFit:
    """Lorentzian-plus-power-law fit of a current PSD.

    Model: S(f) = plateau / (1 + (2 pi f tau)^2)
                  + pink_at_1hz / f^alpha + white.
    ``correlation_time`` is tau (s); ``stderr`` maps parameter name to
    a 1-sigma estimate from the Jacobian (NaN where unavailable);
    ``at_bounds`` lists parameters pinned at a box constraint;
    ``cost`` is the mean squared log-residual.
    """

    plateau: float
    correlation_time: float
    pink_at_1hz: float
    pink_alpha: float
    white: float
    stderr: dict
    at_bounds: tuple
    cost: float

    def model(self, frequency: np.ndarray) -> np.ndarray:
        f = np.asarray(frequency, dtype=float)
        return (
            self.plateau / (1.0 + (2.0 * math.pi * f * self.correlation_time) ** 2)
            + self.pink_at_1hz * f**-self.pink_alpha
            + self.white
        )


_FLOOR_DECADES = 12.0  # scale-parameter floor: this far below the data minimum


def _spectral_model_log(theta, f):
    ln_a, ln_tau, ln_b, alpha, ln_c = theta
    lor = np.exp(ln_a) / (1.0 + (2.0 * math.pi * f * math.exp(ln_tau)) ** 2)
    pink = np.exp(ln_b) * f**-alpha
    return np.log(lor + pink + math.exp(ln_c))


def fit_lorentzian_plus_pink(
    frequency: np.ndarray,
    psd: np.ndarray,
    bins_per_decade: int = 16,
) -> SpectralFit:
    """Fit S(f) = A/(1+(2 pi f tau)^2) + B f^-alpha + C in log space.

    The spectrum is log-binned first so every decade carries similar
    weight, then the log of the model is least-squares fitted to the
    log of the data.  Initialization: the knee frequency from the peak
    of f S(f) over the lower part of the band (the Lorentzian makes
    f S(f) hump at its knee; the floor makes it rise again at the top),
    the pink amplitude from the low-frequency tail, the white level
    from the high-frequency floor.  The knee is the delicate parameter,
    so the fit restarts from the guess scaled by 0.3, 1, 3 and keeps
    the lowest-cost solution.  alpha is bounded to [0.5, 2]; A, B, C
    are positive with a hard floor 12 decades below the smallest data
    value.  Requires at least two decades of frequency coverage.
    """
    f = np.asarray(frequency, dtype=float)
    p = np.asarray(psd, dtype=float)
    if f.shape != p.shape or f.ndim != 1 or f.size < 8:
        raise ValueError("frequency and psd must be equal-length 1-D, size >= 8")
    if np.any(f <= 0) or np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise ValueError("frequencies and psd values must be positive and finite")
    if f[-1] / f[0] < 100.0:
        raise ValueError(
            f"need at least 2 decades of frequency coverage, got "
            f"{math.log10(f[-1] / f[0]):.2f}"
        )
    fb, pb, _ = _log_bin(f, p, bins_per_decade) if f.size > 64 else (f, p, None)
    log_pb = np.log(pb)
    ln_floor = float(np.log(pb.min())) - _FLOOR_DECADES * math.log(10.0)
    ln_ceil = float(np.log(pb.max())) + 6.0 * math.log(10.0)
    floor = math.exp(ln_floor)

    # Knee guess: f S(f) peaks at 1/(2 pi tau) for a Lorentzian.  Skip
    # the top half-decade, where the white floor pushes f S(f) back up.
    search = fb <= fb[-1] / math.sqrt(10.0)
    i_knee = int(np.argmax((fb * pb)[search]))
    tau0 = 1.0 / (2.0 * math.pi * fb[i_knee])
    a0 = max(float(pb[i_knee]) * 2.0, floor)
    # Pink from the low tail (if the Lorentzian dominates there this
    # overshoots; the restarts recover), white from the top decade.
    b0 = max(float(pb[0]) * fb[0], floor)
    top = fb >= fb[-1] / math.sqrt(10.0)
    c0 = max(float(np.median(pb[top])) * 0.5, floor)

    lo = np.array(
        [ln_floor, math.log(1e-3 / (2 * math.pi * fb[-1])), ln_floor, 0.5, ln_floor]
    )
    hi = np.array(
        [ln_ceil, math.log(1e3 / (2 * math.pi * fb[0])), ln_ceil, 2.0, ln_ceil]
    )

    def residuals(theta):
        return _spectral_model_log(theta, fb) - log_pb

    best = None
    for scale in (0.3, 1.0, 3.0):
        tau_init = float(np.clip(tau0 * scale, np.exp(lo[1]), np.exp(hi[1])))
        theta0 = np.array(
            [math.log(a0), math.log(tau_init), math.log(b0), 1.0, math.log(c0)]
        )
        theta0 = np.clip(theta0, lo, hi)
        res = optimize.least_squares(residuals, theta0, bounds=(lo, hi))
        if best is None or res.cost < best.cost:
            best = res
    if best is None or not np.all(np.isfinite(best.x)):
        raise NumericalError("spectral fit failed to converge")

    names = ("plateau", "correlation_time", "pink_at_1hz", "pink_alpha", "white")
    n_pts, n_par = fb.size, 5
    stderr = {k: float("nan") for k in names}
    if n_pts > n_par:
        # SVD covariance with a singular-value floor: an unidentifiable
        # parameter (flat residual direction) gets a huge standard
        # error rather than a failed inverse.
        _, sv, vt = np.linalg.svd(best.jac, full_matrices=False)
        sv = np.maximum(sv, 1e-10 * sv[0])
        sigma_sq = 2.0 * best.cost / (n_pts - n_par)
        var_theta = ((vt.T / sv) ** 2).sum(axis=1) * sigma_sq
        sig_theta = np.sqrt(var_theta)
        vals = np.exp(best.x[[0, 1, 2, 4]])
        # Delta method for the exponentiated parameters.
        stderr = {
            "plateau": float(vals[0] * sig_theta[0]),
            "correlation_time": float(vals[1] * sig_theta[1]),
            "pink_at_1hz": float(vals[2] * sig_theta[2]),
            "pink_alpha": float(sig_theta[3]),
            "white": float(vals[3] * sig_theta[4]),
        }
    tol = 1e-8
    at_bounds = tuple(
        names[i]
        for i in range(5)
        if best.x[i] - lo[i] < tol * max(1.0, abs(lo[i]))
        or hi[i] - best.x[i] < tol * max(1.0, abs(hi[i]))
    )
    return SpectralFit(
        plateau=float(math.exp(best.x[0])),
        correlation_time=float(math.exp(best.x[1])),
        pink_at_1hz=float(math.exp(best.x[2])),
        pink_alpha=float(best.x[3]),
        white=float(math.exp(best.x[4])),
        stderr=stderr,
        at_bounds=at_bounds,
        cost=float(2.0 * best.cost / n_pts),
    )


def drift_diffusivity_from_ensemble(
    displacements: np.ndarray, elapsed: np.ndarray
) -> tuple[float, float]:
    """Diffusivity from ensemble drifts sampled at one or more times.

    ``displacements`` has shape (n_traces, n_times) (or (n_traces,)
    for a single time): the net baseline drift of each trace at each
    elapsed time in ``elapsed`` (s).  For a diffusive drift the
    ensemble variance grows as (2 D)^2 t; the variance at each time is
    fitted by least squares against t through the origin and
    D = sqrt(slope) / 2 returned with a standard error propagated from
    the chi-squared spread of the sample variances.
    """
    x = np.atleast_2d(np.asarray(displacements, dtype=float))
    if x.shape[0] == 1 and x.shape[1] > 1 and np.ndim(displacements) == 1:
        x = x.T
    t = np.atleast_1d(np.asarray(elapsed, dtype=float))
    if x.shape[1] != t.size:
        raise ValueError(
            f"displacements has {x.shape[1]} time columns but elapsed has "
            f"{t.size} entries"
        )
    if x.shape[0] < 2:
        raise ValueError("need at least 2 ensemble members")
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise ValueError("elapsed times must be positive and finite")
    m = x.shape[0]
    var = np.var(x, axis=0, ddof=1)
    slope = float(np.dot(t, var) / np.dot(t, t))
    if slope <= 0:
        return 0.0, 0.0
    # Var(sample variance) = 2 sigma^4 / (m - 1) per time point.
    var_slope = float(
        np.dot(t**2, 2.0 * (slope * t) ** 2 / (m - 1)) / np.dot(t, t) ** 2
    )
    d = 0.5 * math.sqrt(slope)
    d_err = math.sqrt(var_slope) / (4.0 * math.sqrt(slope))
    return d, d_err


def drift_diffusivity_from_trace(
    baseline: np.ndarray, dt: float, n_lags: int = 8
) -> float:
    """Single-trace diffusivity from the baseline structure function.

    Averages <(z(t+L) - z(t))^2> / (4 L) over log-spaced lags L and
    returns D = sqrt of the mean.  A single record severely limits the
    accuracy (neighboring increments are the same random walk), so
    treat the result as an order-of-magnitude estimate and prefer the
    ensemble form whenever repeated traces exist.
    """
    z = np.asarray(baseline, dtype=float)
    if z.ndim != 1 or z.size < 16:
        raise ValueError("baseline must be a 1-D array with at least 16 points")
    lags = np.unique(
        np.geomspace(max(z.size // 64, 1), z.size // 4, n_lags).astype(int)
    )
    d_sq = []
    for lag in lags:
        inc = z[lag:] - z[:-lag]
        d_sq.append(float(np.mean(inc**2)) / (4.0 * lag * dt))
    return math.sqrt(float(np.mean(d_sq)))


def charge_sensitivity(
    psd: PsdEstimate | SpectralFit,
    gain: float,
    frequency: float = 1.0,
) -> float:
    """Equivalent charge noise sqrt(S_I(f)) / |dI/dq| in e/sqrt(Hz).

    ``gain`` is the transfer slope in A per electron of induced gate
    charge.  Accepts either a PSD estimate (log-log interpolation at
    ``frequency``) or a fitted spectral model (evaluated exactly).
    """
    if gain == 0 or not np.isfinite(gain):
        raise ValueError(f"gain must be finite and nonzero, got {gain!r}")
    if isinstance(psd, SpectralFit):
        s_val = float(psd.model(np.array([frequency]))[0])
    else:
        f, p = psd.frequency, psd.psd
        if not f[0] <= frequency <= f[-1]:
            raise ValueError(
                f"frequency {frequency!r} outside the estimated band "
                f"[{f[0]:.3g}, {f[-1]:.3g}] Hz"
            )
        s_val = float(
            np.exp(np.interp(math.log(frequency), np.log(f), np.log(p)))
        )
    return math.sqrt(s_val) / abs(gain)


def _minority_mask(
    states: np.ndarray, minority: int, minority_dwell: float, dt: float
) -> np.ndarray:
    """Boolean mask of minority-state dwells, closed and dilated.

    Closing fills label dropouts inside a dwell (up to one dwell time
    wide); dilation pads the transitions so baseline fits that exclude
    the mask are not pulled by edge samples.
    """
    mask = states == minority
    n_dwell = max(int(round(minority_dwell / dt)), 1)
    close_n = min(n_dwell, states.size // 8)
    if close_n > 1:
        mask = ndimage.binary_closing(mask, structure=np.ones(close_n, bool))
    dilate_n = min(max(n_dwell // 6, 2), states.size // 16)
    return ndimage.binary_dilation(mask, structure=np.ones(dilate_n, bool))


def _mask_from_labels(labels: StateLabels, dt: float):
    """Minority-dwell mask and its dwell guide, or None when unusable."""
    try:
        guide = dwell_statistics(labels.states, dt)
    except NoTelegraphDetected:
        return None
    minority = 0 if guide.occupation_low < 0.5 else 1
    dwell = guide.tau_low if minority == 0 else guide.tau_high
    if not 0.0 < float(np.mean(labels.states == minority)) <= 0.6:
        return None
    mask = _minority_mask(labels.states, minority, dwell, dt)
    if not 0.0 < float(np.mean(mask)) <= 0.75:
        return None
    n_dwells = guide.n_low + guide.n_high
    return mask, dwell, n_dwells


def _stiffness_for_period(period: float) -> float:
    # Unit-response cutoff of the second-difference penalty: the
    # baseline follows components slower than ``period`` per cycle.
    return period**4 / (2.0 * (2.0 * math.pi) ** 4)


def _masked_refinement(
    y: np.ndarray,
    dt: float,
    duration: float,
    baseline: np.ndarray,
    labels: StateLabels,
    stiffness: float,
    iterations: int,
):
    """Re-fit the baseline on majority samples only, choosing the cutoff.

    The minority dwells detected so far are masked out and the baseline
    re-fitted symmetrically over a ladder of cutoff periods.  A cutoff
    that is too tight follows the telegraph and shreds dwells; one that
    is too slack leaves drift that blurs the levels.  Both failure
    modes are visible without ground truth: shredding inflates the
    transition count, slack lowers the level separation.  Among
    candidates within 70% of the best separation, the fewest-transition
    one wins.  The winner is then polished for ``iterations`` passes
    with the mask rebuilt from its own labels, rejecting any pass that
    inflates the transition count.
    """
    derived = _mask_from_labels(labels, dt)
    if derived is None:
        return baseline, labels, stiffness
    mask, dwell, n_dwells = derived
    weights = np.where(mask, 1e-6, 1.0)

    candidates = []
    seen = set()
    for mult in (3.0, 8.0, 20.0, 50.0, 125.0):
        period = float(np.clip(mult * dwell, 100.0 * dt, duration / 6.0))
        key = round(period, 6)
        if key in seen:
            continue
        seen.add(key)
        base_try = als_baseline(
            y, dt, stiffness=_stiffness_for_period(period), sample_weights=weights
        )
        try:
            labels_try = detect_states(y - base_try)
            stats_try = dwell_statistics(labels_try.states, dt)
        except NoTelegraphDetected:
            continue
        candidates.append(
            (
                labels_try.separation,
                stats_try.n_low + stats_try.n_high,
                period,
                base_try,
                labels_try,
            )
        )
    if not candidates:
        return baseline, labels, stiffness
    sep_floor = 0.7 * max(c[0] for c in candidates)
    eligible = [c for c in candidates if c[0] >= sep_floor]
    sep, n_trans, period, baseline, labels = min(
        eligible, key=lambda c: (c[1], -c[0])
    )
    stiffness = _stiffness_for_period(period)

    for _ in range(iterations):
        derived = _mask_from_labels(labels, dt)
        if derived is None:
            break
        mask, dwell, _ = derived
        polish_period = float(
            np.clip(5.0 * dwell, period / 3.0, duration / 6.0)
        )
        polish_stiffness = _stiffness_for_period(polish_period)
        base_try = als_baseline(
            y,
            dt,
            stiffness=polish_stiffness,
            sample_weights=np.where(mask, 1e-6, 1.0),
        )
        try:
            labels_try = detect_states(y - base_try)
            stats_try = dwell_statistics(labels_try.states, dt)
        except NoTelegraphDetected:
            break
        if stats_try.n_low + stats_try.n_high > 1.3 * n_trans:
            break
        baseline, labels, stiffness = base_try, labels_try, polish_stiffness
        n_trans = stats_try.n_low + stats_try.n_high
        period = polish_period
    return baseline, labels, stiffness


def analyze_trace(
    trace: CurrentTrace,
    stiffness: float | None = None,
    detrend: bool = True,
    segment_length: int | None = None,
    gain: float | None = None,
    temperature: float | None = None,
    refine_iterations: int = 2,
    include_series: bool = False,
) -> dict:
    """Full reduction of one trace to a flat report dictionary.

    Steps: conservative ALS detrend (stiffness defaults to
    (duration/16)^4, absorbing only components much slower than any
    plausible telegraph), first-pass two-state detection, then
    two-stage refinement (asymmetric hug of the majority level, then a
    symmetric re-fit with the minority dwells masked out, so the
    baseline tracks the drift tightly without sagging into the dwells).
    States are re-detected on the refined trace, and the Welch PSD and
    Lorentzian + pink + white fit run on it as well: the masked
    baseline bridges the dwells instead of following them, so the
    telegraph's low-frequency plateau survives while the drift's
    low-frequency rise is removed.  Keys:

    - ``tau_bar_s``, ``tau_L_s``, ``tau_R_s``: correlation time and the
      two mean dwell times (low state reported as L);
    - ``ratio``: tau_L_s / tau_R_s; ``delta_e_over_kt``: -ln(ratio),
      the well-energy splitting in kT units (requires both dwells);
    - ``D_pA_per_sqrt_hour``: single-trace diffusivity estimate of the
      removed baseline (order of magnitude only; NaN when not detrended);
    - ``sensitivity_e_per_sqrtHz``: sqrt(S(1 Hz))/|gain| when ``gain``
      (A per electron) is given, else NaN;
    - ``fit``: spectral fit parameters and their standard errors;
    - ``diagnostics``: detection levels, segment bookkeeping, and the
      detrend settings used.
    """
    y = np.asarray(trace.samples, dtype=float)
    duration = trace.dt * (y.size - 1)
    if stiffness is None:
        stiffness = (duration / 16.0) ** 4
    refine_stiffness = None
    psd_stiffness = None
    flat_psd = None
    if detrend:
        baseline = als_baseline(y, trace.dt, stiffness=stiffness)
        flat = y - baseline
        labels = detect_states(flat)
        flat_detect = flat
        try:
            first = dwell_statistics(labels.states, trace.dt)
        except NoTelegraphDetected:
            first = None
        if first is not None and refine_iterations > 0:
            # The conservative cutoff leaves residual drift that blurs
            # and fragments dwells.  Refine in two stages.  Stage one:
            # re-fit with the weight asymmetry pushed hard toward one
            # state, so the baseline rides that level straight through
            # the other state's dwells and the cutoff can sit close to
            # the dwell time.  The first-pass labels are too coarse to
            # say which state is the majority, so both directions are
            # tried and the one whose re-detection separates the levels
            # best wins.  Stage two: mask out the detected minority
            # dwells entirely and re-fit symmetrically on the majority
            # samples alone; with no pull from the dwells, the penalty
            # bridges them smoothly and the sag of stage one
            # disappears.  The mask is closed (fills fragmented dwell
            # interiors) and dilated (guards the transitions), and the
            # dwell-time guide is re-estimated each pass.
            guide_dwell = min(first.tau_low, first.tau_high)
            candidates = []
            seen = set()
            for mult in (15.0, 50.0, 160.0, 500.0):
                period = float(
                    np.clip(
                        mult * guide_dwell, 200.0 * trace.dt, duration / 6.0
                    )
                )
                key = round(period, 6)
                if key in seen:
                    continue
                seen.add(key)
                hug_stiffness = _stiffness_for_period(period)
                for hug in (0.95, 0.05):
                    base_try = als_baseline(
                        y, trace.dt, stiffness=hug_stiffness, asymmetry=hug
                    )
                    try:
                        labels_try = detect_states(y - base_try)
                        stats_try = dwell_statistics(labels_try.states, trace.dt)
                    except NoTelegraphDetected:
                        continue
                    candidates.append(
                        (
                            labels_try.separation,
                            stats_try.n_low + stats_try.n_high,
                            hug_stiffness,
                            base_try,
                            labels_try,
                        )
                    )
            best = None
            if candidates:
                sep_floor = 0.7 * max(c[0] for c in candidates)
                eligible = [c for c in candidates if c[0] >= sep_floor]
                best = min(eligible, key=lambda c: (c[1], -c[0]))
            if best is not None:
                _, _, hug_stiffness, baseline, labels = best
                baseline, labels, refine_stiffness = _masked_refinement(
                    y,
                    trace.dt,
                    duration,
                    baseline,
                    labels,
                    hug_stiffness,
                    refine_iterations,
                )
                flat_detect = y - baseline
                # One more masked fit, much wider, for the spectrum
                # alone: wide enough to leave the pink background and
                # the telegraph plateau untouched, tight enough to
                # remove the drift's low-frequency rise.  The detection
                # baseline is too tight for this; it bleaches the
                # spectrum below its own cutoff.
                derived = _mask_from_labels(labels, trace.dt)
                if derived is not None:
                    mask, minority_dwell, _ = derived
                    period = float(
                        np.clip(
                            15.0 * minority_dwell,
                            100.0 * trace.dt,
                            duration / 6.0,
                        )
                    )
                    psd_stiffness = _stiffness_for_period(period)
                    base_psd = als_baseline(
                        y,
                        trace.dt,
                        stiffness=psd_stiffness,
                        sample_weights=np.where(mask, 1e-6, 1.0),
                    )
                    flat_psd = y - base_psd
        drift_est = drift_diffusivity_from_trace(baseline, trace.dt)
    else:
        flat = y - float(np.mean(y))
        flat_detect = flat
        labels = detect_states(flat)
        drift_est = float("nan")

    dwells = dwell_statistics(labels.states, trace.dt)
    if flat_psd is None:
        flat_psd = flat
    est = psd_welch(flat_psd, trace.dt, segment_length=segment_length)
    fit = fit_lorentzian_plus_pink(est.frequency, est.psd)

    if gain is not None:
        sens = charge_sensitivity(fit, gain)
    else:
        sens = float("nan")

    report = {
        "tau_bar_s": dwells.correlation_time,
        "tau_L_s": dwells.tau_low,
        "tau_R_s": dwells.tau_high,
        "ratio": dwells.dwell_ratio,
        "delta_e_over_kt": delta_e_over_kt(dwells),
        "D_pA_per_sqrt_hour": drift_est * 1e12 * 60.0,
        "sensitivity_e_per_sqrtHz": sens,
        "fit": {
            "plateau_A2_per_Hz": fit.plateau,
            "correlation_time_s": fit.correlation_time,
            "pink_at_1hz_A2_per_Hz": fit.pink_at_1hz,
            "pink_alpha": fit.pink_alpha,
            "white_A2_per_Hz": fit.white,
            "stderr": fit.stderr,
            "at_bounds": list(fit.at_bounds),
            "cost": fit.cost,
        },
        "diagnostics": {
            "n_samples": int(y.size),
            "duration_s": duration,
            "dt_s": trace.dt,
            "detrended": bool(detrend),
            "baseline_stiffness_s4": float(stiffness) if detrend else None,
            "refine_stiffness_s4": refine_stiffness,
            "psd_stiffness_s4": psd_stiffness,
            "baseline_asymmetry": DEFAULT_BASELINE_ASYMMETRY if detrend else None,
            "level_low_A": labels.level_low,
            "level_high_A": labels.level_high,
            "level_separation_sigma": labels.separation,
            "current_step_A": labels.level_high - labels.level_low,
            "n_dwells_low": dwells.n_low,
            "n_dwells_high": dwells.n_high,
            "psd_segments": est.n_segments,
            "psd_segment_length": int(round(1.0 / (est.frequency[0] * trace.dt))),
            "occupation_low": dwells.occupation_low,
        },
    }
    if temperature is not None:
        report["diagnostics"]["temperature_K"] = float(temperature)
    if include_series:
        if detrend:
            base_out = baseline
        else:
            base_out = np.full(y.size, float(np.mean(y)))
        report["series"] = {
            "time_s": trace.times(),
            "current_A": y,
            "baseline_A": base_out,
            "flat_detect_A": flat_detect,
            "flat_psd_A": flat_psd,
            "states": labels.states,
            "psd_frequency_Hz": est.frequency,
            "psd_A2_per_Hz": est.psd,
            "psd_model_A2_per_Hz": fit.model(est.frequency),
        }
    return report
