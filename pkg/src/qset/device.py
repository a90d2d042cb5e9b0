"""Electrostatics of a two-junction SET with a gate.

The island couples to the leads through two tunnel junctions (capacitances
``c1``, ``c2``, normal-state resistances ``r1``, ``r2``) and to the gate
through ``cgt``.  Both electrodes are superconducting with gap ``delta``.

Two kinds of results come out of this module.  The first is closed-form
geometry: the charging and Josephson energy scales and the bias voltages
of the transport features that frame the stability diamonds (quasiparticle
onset, Josephson-quasiparticle ridges, their double-cycle cousin, and the
diamond edge slopes).  The second is the normal-state sequential-tunneling
transfer curve I(q_g), obtained from the stationary solution of a master
equation over island charge states with golden-rule tunneling rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .errors import NoSolutionError, NumericalError
from .units import E_CHARGE, HBAR, K_B


@dataclass(frozen=True)
class DeviceParams:
    """Junction and gate parameters of a single device.

    All values are SI: resistances in ohm, the gap in joule, capacitances
    in farad.  Every field must be strictly positive.
    """

    r1: float
    r2: float
    delta: float
    c1: float
    c2: float
    cgt: float

    def __post_init__(self):
        for name in ("r1", "r2", "delta", "c1", "c2", "cgt"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")

    @property
    def c_sigma(self) -> float:
        """Total island capacitance."""
        return self.c1 + self.c2 + self.cgt

    @property
    def r_total(self) -> float:
        return self.r1 + self.r2


@dataclass(frozen=True)
class DiamondFeatures:
    """Bias-voltage geometry of the transport features (SI volts).

    ``v_qp_min`` and ``v_qp_max`` bracket the quasiparticle onset as the
    gate sweeps over a period, ``v_jqp`` and ``v_djqp`` locate the two
    Josephson-quasiparticle ridges, and the slopes are the dV_sd/dV_g
    edges of the stability diamonds (negative and positive branch).
    """

    v_qp_min: float
    v_qp_max: float
    slope_neg: float
    slope_pos: float
    v_jqp: float
    v_djqp: float

    def __post_init__(self):
        if not (self.v_qp_min > 0 and np.isfinite(self.v_qp_min)):
            raise ValueError("v_qp_min must be positive and finite")
        if not self.v_qp_max > self.v_qp_min:
            raise ValueError("v_qp_max must exceed v_qp_min")
        if not self.slope_neg < 0:
            raise ValueError("slope_neg must be negative")
        if not self.slope_pos > 0:
            raise ValueError("slope_pos must be positive")
        if not (self.v_jqp > 0 and self.v_djqp > 0):
            raise ValueError("ridge voltages must be positive")


def charging_energy(params: DeviceParams) -> float:
    """Single-electron charging energy e^2 / (2 C_sigma), in joule."""
    return E_CHARGE**2 / (2.0 * params.c_sigma)


def josephson_energy(params: DeviceParams, junction: int = 1) -> float:
    """Ambegaokar-Baratoff Josephson energy of one junction, in joule.

    E_J = pi hbar Delta / ((2e)^2 R_i) for junction resistance R_i.
    """
    if junction == 1:
        r = params.r1
    elif junction == 2:
        r = params.r2
    else:
        raise ValueError(f"junction must be 1 or 2, got {junction!r}")
    return math.pi * HBAR * params.delta / ((2.0 * E_CHARGE) ** 2 * r)


def diamond_features(params: DeviceParams) -> DiamondFeatures:
    """Feature voltages and diamond slopes implied by the parameters.

    The quasiparticle current onset requires 4 Delta / e at its gate
    minimum and one full single-electron period e / C_sigma more at its
    maximum.  The JQP ridge sits at 2e / C_sigma and the DJQP ridge at
    e / C_sigma.  The diamond edges have slopes -cgt/c2 and
    +cgt/(c1 + cgt) in the (V_g, V_sd) plane.
    """
    e = E_CHARGE
    c_sigma = params.c_sigma
    v_qp_min = 4.0 * params.delta / e
    return DiamondFeatures(
        v_qp_min=v_qp_min,
        v_qp_max=v_qp_min + e / c_sigma,
        slope_neg=-params.cgt / params.c2,
        slope_pos=params.cgt / (params.c1 + params.cgt),
        v_jqp=2.0 * e / c_sigma,
        v_djqp=e / c_sigma,
    )


def fit_params_from_features(
    features: DiamondFeatures,
    r_total: float,
    r1_fraction: float = 0.5,
) -> DeviceParams:
    """Invert :func:`diamond_features`: recover device parameters.

    The gap comes from the quasiparticle onset minimum, the total
    capacitance from the onset span, and the individual capacitances from
    the two edge slopes.  Resistances are not observable in the feature
    geometry, so the caller supplies the total; it is split
    ``r1 = r1_fraction * r_total`` (equal split by default).

    Raises
    ------
    NoSolutionError
        If the features are not realizable by any positive parameter set
        (wrong slope signs, slope_pos >= 1, or a non-positive span).
    """
    if not (np.isfinite(r_total) and r_total > 0):
        raise ValueError(f"r_total must be positive, got {r_total!r}")
    if not 0 < r1_fraction < 1:
        raise ValueError(f"r1_fraction must lie in (0, 1), got {r1_fraction!r}")

    e = E_CHARGE
    span = features.v_qp_max - features.v_qp_min
    if span <= 0:
        raise NoSolutionError("onset span v_qp_max - v_qp_min must be positive")
    if features.slope_neg >= 0:
        raise NoSolutionError("slope_neg must be negative for any capacitor network")
    if not 0 < features.slope_pos < 1:
        raise NoSolutionError(
            "slope_pos must lie in (0, 1); slope_pos >= 1 would require "
            "a non-positive junction capacitance"
        )

    delta = e * features.v_qp_min / 4.0
    c_sigma = e / span
    # c2 = cgt/|s-|, c1 + cgt = cgt/s+, so c_sigma = cgt (1/s+ + 1/|s-|).
    cgt = c_sigma / (1.0 / features.slope_pos + 1.0 / abs(features.slope_neg))
    c2 = cgt / abs(features.slope_neg)
    c1 = cgt * (1.0 - features.slope_pos) / features.slope_pos
    if min(c1, c2, cgt) <= 0:
        raise NoSolutionError("recovered capacitances are not all positive")
    return DeviceParams(
        r1=r1_fraction * r_total,
        r2=(1.0 - r1_fraction) * r_total,
        delta=delta,
        c1=c1,
        c2=c2,
        cgt=cgt,
    )


def helium_capacitance_shift(
    params: DeviceParams, epsilon: float = 1.056, fill_factor: float = 0.393
) -> DeviceParams:
    """Gate capacitance increase when the gate gap fills with a dielectric.

    Only a fraction ``fill_factor`` of the gate field region is filled, so
    cgt scales by (1 + fill_factor (epsilon - 1)).
    """
    if epsilon < 1.0:
        raise ValueError(f"epsilon must be >= 1, got {epsilon!r}")
    if not 0.0 <= fill_factor <= 1.0:
        raise ValueError(f"fill_factor must lie in [0, 1], got {fill_factor!r}")
    return replace(params, cgt=params.cgt * (1.0 + fill_factor * (epsilon - 1.0)))


# ---------------------------------------------------------------------------
# Normal-state sequential tunneling
# ---------------------------------------------------------------------------

#: Default half-width of the island charge window, in electrons.
DEFAULT_N_STATES = 5


def _log_rate_factor(x: np.ndarray) -> np.ndarray:
    """log of x / (exp(x) - 1), stable over the whole real line."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    big = x > 40.0
    neg = x < -40.0
    mid = ~(big | neg)
    # exp(x) - 1 ~ exp(x) for large x, ~ -1 for very negative x.
    out[big] = np.log(x[big]) - x[big]
    out[neg] = np.log(-x[neg])
    xm = x[mid]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(xm == 0.0, 1.0, xm / np.expm1(xm))
    out[mid] = np.log(ratio)
    return out


def _log_tunnel_rates(params: DeviceParams, v_sd: float, t_e: float, q_g: float,
                      n_states: int) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Log golden-rule rates for the four processes at each island charge.

    Returns the charge levels n and a dict with log rates for electrons
    entering/leaving the island through each lead, keyed ``l_in``,
    ``l_out``, ``r_in``, ``r_out``.  The charge window is centered on the
    gate charge so results are exactly periodic in q_g with period e.
    """
    e = E_CHARGE
    kt = K_B * t_e
    c_sigma = params.c_sigma
    v_l, v_r = 0.5 * v_sd, -0.5 * v_sd

    n0 = int(np.rint(q_g / e))
    n = n0 + np.arange(-n_states, n_states + 1)

    # Island potential for n excess electrons; charge moved between a lead
    # and the island changes the free energy by q (phi_mid - V_lead) with
    # phi_mid the island potential halfway through the transfer.
    phi = (-n * e + q_g + params.c1 * v_l + params.c2 * v_r) / c_sigma
    e_self = e**2 / (2.0 * c_sigma)
    df = {
        "l_in": -e * phi + e_self + e * v_l,
        "l_out": e * phi + e_self - e * v_l,
        "r_in": -e * phi + e_self + e * v_r,
        "r_out": e * phi + e_self - e * v_r,
    }
    log_pref = {
        "l_in": math.log(kt / (e**2 * params.r1)),
        "l_out": math.log(kt / (e**2 * params.r1)),
        "r_in": math.log(kt / (e**2 * params.r2)),
        "r_out": math.log(kt / (e**2 * params.r2)),
    }
    log_rates = {k: log_pref[k] + _log_rate_factor(df[k] / kt) for k in df}
    return n, log_rates


def tunneling_rates(
    params: DeviceParams,
    v_sd: float,
    t_e: float,
    q_g: float,
    n_states: int = DEFAULT_N_STATES,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Golden-rule tunneling rates (1/s) per island charge state.

    Returns ``(n, rates)`` where ``n`` are the island electron numbers in
    the truncated window and ``rates`` maps ``l_in``, ``l_out``, ``r_in``,
    ``r_out`` to rate arrays.  ``l_in`` moves the island from n to n+1
    through junction 1; ``r_out`` from n to n-1 through junction 2, and
    so on.
    """
    if t_e <= 0:
        raise ValueError(f"t_e must be positive, got {t_e!r}")
    if n_states < 1:
        raise ValueError(f"n_states must be >= 1, got {n_states!r}")
    n, log_rates = _log_tunnel_rates(params, v_sd, t_e, q_g, n_states)
    return n, {k: np.exp(v) for k, v in log_rates.items()}


def _stationary_log_probs(log_up: np.ndarray, log_down: np.ndarray) -> np.ndarray:
    """Stationary distribution of a birth-death chain, in log space.

    For a one-dimensional chain the stationary flux across every bond
    vanishes, so p(n+1)/p(n) = up(n) / down(n+1) exactly.
    """
    log_p = np.zeros(log_up.size)
    steps = log_up[:-1] - log_down[1:]
    log_p[1:] = np.cumsum(steps)
    log_p -= logsumexp(log_p)
    return log_p


def orthodox_stationary(
    params: DeviceParams,
    v_sd: float,
    t_e: float,
    q_g: float,
    n_states: int = DEFAULT_N_STATES,
) -> tuple[np.ndarray, np.ndarray]:
    """Stationary island-charge distribution at one bias/gate point."""
    if t_e <= 0:
        raise ValueError(f"t_e must be positive, got {t_e!r}")
    n, log_rates = _log_tunnel_rates(params, v_sd, t_e, q_g, n_states)
    log_up = np.logaddexp(log_rates["l_in"], log_rates["r_in"])
    log_down = np.logaddexp(log_rates["l_out"], log_rates["r_out"])
    log_p = _stationary_log_probs(log_up, log_down)
    p = np.exp(log_p)
    if not np.all(np.isfinite(p)):
        raise NumericalError(
            f"stationary solve produced non-finite occupations at "
            f"v_sd={v_sd!r}, t_e={t_e!r}, q_g={q_g!r}"
        )
    return n, p


def orthodox_current(
    params: DeviceParams,
    v_sd: float,
    t_e: float,
    q_g: float,
    n_states: int = DEFAULT_N_STATES,
) -> float:
    """Steady-state current (A) through the device at one gate charge.

    Positive current flows from the lead held at +v_sd/2 through the
    island to the lead at -v_sd/2.
    """
    n, p = orthodox_stationary(params, v_sd, t_e, q_g, n_states)
    _, rates = tunneling_rates(params, v_sd, t_e, q_g, n_states)
    # Electrons entering through junction 1 carry conventional current out
    # of lead 1, so the lead-1 current is e (Gamma_out - Gamma_in) summed
    # over the stationary occupation.
    return float(E_CHARGE * np.sum(p * (rates["l_out"] - rates["l_in"])))


def orthodox_transfer_curve(
    params: DeviceParams,
    v_sd: float,
    t_e: float,
    gate_charge: np.ndarray,
    n_states: int = DEFAULT_N_STATES,
) -> np.ndarray:
    """Current versus gate charge (both SI) in the normal state.

    ``gate_charge`` is the charge induced on the island by the gate, in
    coulomb; the curve is periodic in it with period e.
    """
    q = np.atleast_1d(np.asarray(gate_charge, dtype=float))
    return np.array(
        [orthodox_current(params, v_sd, t_e, float(qi), n_states) for qi in q]
    )


def transfer_gain(
    params: DeviceParams,
    v_sd: float,
    t_e: float,
    q_g: float,
    n_states: int = DEFAULT_N_STATES,
    step: float = 0.005,
) -> float:
    """dI/dq_g at an operating point, in ampere per electron of gate charge.

    Central difference with a step of ``step`` electrons.
    """
    dq = step * E_CHARGE
    hi = orthodox_current(params, v_sd, t_e, q_g + dq, n_states)
    lo = orthodox_current(params, v_sd, t_e, q_g - dq, n_states)
    return (hi - lo) / (2.0 * step)
