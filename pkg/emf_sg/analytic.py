"""
Closed-form and semi-closed-form exposure and coverage metrics.

Means come from Campbell's theorem, characteristic functions and Laplace
transforms from the probability generating functional of the PPPs, and
CDFs from Gil-Pelaez inversion. Expectations over the serving distance are
Gauss-Legendre sums in the CDF variable w = F_R0(r).
"""
from __future__ import annotations

import logging
from functools import lru_cache
from typing import Literal, Sequence, Tuple

import numpy as np
from scipy import optimize

from . import geometry
from .errors import ConvergenceError, DomainError
from .gilpelaez import (
    CharacteristicFn,
    QuadraturePolicy,
    cdf_curve_from_cf,
    clamp_probability,
    integrate_imag_over_q,
)
from .schemas import MetricCurve, MetricSpec
from .special import exp_integral_en, hyp2f1_one_b, hyp2f1_one_b_minus_one
from .units import BETA, NetworkParams, path_gain, ue_tx_power

logger = logging.getLogger(__name__)

SERVING_NODES = 64
POWER_NODES = 32
INTERFERER_NODES = 16
LOG_PANEL_WIDTH = 0.5

# power-cap probability mass taken beyond r_m ("outer") or inside it ("inner")
CapMass = Literal["outer", "inner"]
# serving-distance law of a user placed independently of the BSs; DL SINR is averaged against it
UNIFORM_USER_BETA = 1.0


@lru_cache(maxsize=16)
def _legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def serving_nodes(lo: float, hi: float, lambda_b: float, n: int = SERVING_NODES,
                  beta: float = BETA) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes r_i and weights w_i with sum_i w_i g(r_i) ~ int_lo^hi g(r) f_R0(r) dr.
    """
    x, wx = _legendre(n)
    w_lo = geometry.serving_distance_cdf(lo, lambda_b, beta)
    w_hi = geometry.serving_distance_cdf(hi, lambda_b, beta)
    mid, half = 0.5 * (w_hi + w_lo), 0.5 * (w_hi - w_lo)
    return geometry.serving_distance_quantile(mid + half * x, lambda_b, beta), half * wx


def _log_nodes(lo: float, hi: float, breaks: Sequence[float] = ()) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre in ln r; weights include the Jacobian r."""
    if hi <= lo:
        return np.zeros(0), np.zeros(0)
    cuts = [np.log(lo)] + sorted(np.log(b) for b in breaks if lo < b < hi) + [np.log(hi)]
    x, wx = _legendre(INTERFERER_NODES)
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        n_panels = max(1, int(np.ceil((b - a) / LOG_PANEL_WIDTH)))
        edges = np.linspace(a, b, n_panels + 1)
        for p0, p1 in zip(edges[:-1], edges[1:]):
            t = 0.5 * (p0 + p1) + 0.5 * (p1 - p0) * x
            nodes.append(np.exp(t))
            weights.append(0.5 * (p1 - p0) * wx * np.exp(t))
    return np.concatenate(nodes), np.concatenate(weights)


def _check_positive(thresholds, name: str) -> np.ndarray:
    t = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise DomainError(f"{name} thresholds must be positive and finite")
    if np.any(np.diff(t) <= 0):
        raise DomainError(f"{name} thresholds must be strictly ascending")
    return t


# ---------------------------------------------------------------------------
# Means

def mean_dl_interference(r0, params: NetworkParams):
    """E[I_d | R0 = r0] (W) by Campbell's theorem over the active BSs in [r0, tau]."""
    if params.alpha <= 2:
        raise DomainError("alpha must exceed 2")
    y0 = np.asarray(r0, dtype=float) ** 2 + params.z ** 2
    y_t = params.tau ** 2 + params.z ** 2
    bracket = _mean_signal(y0, params) * y0 - _mean_signal(y_t, params) * y_t
    return 2.0 * np.pi * params.derived.lambda_r * bracket / (params.alpha - 2.0)


def mean_dl_exposure(params: NetworkParams) -> float:
    """
    Mean DL exposure (W) at the typical UE: the serving BS at R0 plus the
    active BSs beyond R0, averaged over R0 in [r_e, tau].
    """
    r0, w0 = serving_nodes(params.r_e, params.tau, params.lambda_b)
    serving = params.p_d * path_gain("dl", r0, params)
    return float((serving + mean_dl_interference(r0, params)) @ w0 / w0.sum())


def mean_ue_power(params: NetworkParams, cap_mass: CapMass = "outer") -> float:
    """
    E[transmit power] of an interfering UE with serving distance in [r_e, tau].

    cap_mass selects the probability mass attached to the power cap:
    "outer" uses F_R0(r_m, tau), "inner" uses F_R0(r_e, r_m).
    """
    d = params.derived
    lam = params.lambda_b
    if cap_mass == "outer":
        mass = geometry.serving_distance_cdf_between(d.r_m, params.tau, lam)
    elif cap_mass == "inner":
        mass = geometry.serving_distance_cdf_between(params.r_e, d.r_m, lam)
    else:
        raise DomainError(f"unknown cap_mass '{cap_mass}'")
    if d.r_m_always_capped or d.r_m <= params.r_e:
        if cap_mass == "inner":
            mass = geometry.serving_distance_cdf_between(params.r_e, params.tau, lam)
        return float(params.p_u_max * mass)
    c = BETA * np.pi * lam
    s = params.alpha * params.epsilon / 2.0
    y_e = params.r_e ** 2 + params.z ** 2
    y_m = d.r_m ** 2 + params.z ** 2

    def antiderivative(y):
        return y ** (s + 1.0) * exp_integral_en(-s, c * y)

    fpc = (params.p_u_0 * d.kappa_u ** params.epsilon * c * np.exp(c * params.z ** 2)
           * (antiderivative(y_e) - antiderivative(y_m)))
    return float(fpc + params.p_u_max * mass)


def mean_ul_exposure(params: NetworkParams, cap_mass: CapMass = "outer") -> float:
    """
    Mean UL exposure (W) at the typical UE from the other UEs in [r_e, tau],
    plus those inside r_e seen at r_e when near_field is "clip".
    """
    if params.alpha <= 2:
        raise DomainError("alpha must exceed 2")
    edge = path_gain("ul-ue", params.r_e, params) * params.r_e ** 2
    bracket = edge - path_gain("ul-ue", params.tau, params) * params.tau ** 2
    spatial = 2.0 * np.pi * params.lambda_u * bracket / (params.alpha - 2.0)
    if params.near_field == "clip":
        spatial += np.pi * params.lambda_u * edge
    return float(spatial * mean_ue_power(params, cap_mass))


def mean_exposure(link: str, params: NetworkParams, cap_mass: CapMass = "outer") -> float:
    """Mean UL, DL or total exposure (W)."""
    if link == "dl":
        return mean_dl_exposure(params)
    if link == "ul":
        return mean_ul_exposure(params, cap_mass)
    if link == "total":
        return mean_dl_exposure(params) + mean_ul_exposure(params, cap_mass)
    raise DomainError(f"unknown link '{link}'")


# ---------------------------------------------------------------------------
# Characteristic functions and Laplace transforms

def _dl_bracket(w_of_y, y_lo, y_hi, params: NetworkParams):
    """[y 2F1(1, 2/alpha; 1+2/alpha; w(y))] from y_lo to y_hi."""
    b = 2.0 / params.alpha
    return y_hi * hyp2f1_one_b(b, w_of_y(y_hi)) - y_lo * hyp2f1_one_b(b, w_of_y(y_lo))


def _mean_signal(y, params: NetworkParams):
    """P_d l^d as a function of y = rho^2 + z^2."""
    return params.p_d / params.derived.kappa_d * np.asarray(y, dtype=float) ** (-params.alpha / 2.0)


def cf_dl_interference(q, r0, params: NetworkParams):
    """
    CF of the DL interference at the typical UE served at distance r0, from
    active BSs beyond r0. q may be complex; q = j s gives the Laplace transform.
    q and r0 broadcast against each other.
    """
    r0 = np.asarray(r0, dtype=float)
    if np.any(r0 < params.r_e) or np.any(r0 > params.tau):
        raise DomainError("serving distance must lie in [r_e, tau]")
    q = np.asarray(q, dtype=complex)
    y0 = r0 ** 2 + params.z ** 2
    y_t = params.tau ** 2 + params.z ** 2
    lam = params.derived.lambda_r
    bracket = _dl_bracket(lambda y: 1.0 / (1j * q * _mean_signal(y, params)), y0, y_t, params)
    return np.exp(-np.pi * lam * bracket)


def laplace_dl_interference(s, r0, params: NetworkParams):
    """E[exp(-s I_d) | r0], real in (0, 1]."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("Laplace argument must be non-negative")
    safe = np.where(s > 0, s, 1.0)
    value = cf_dl_interference(1j * safe, r0, params).real
    return np.where(s > 0, value, 1.0)


def cf_dl_exposure(q, params: NetworkParams):
    """
    CF of the DL exposure: the faded serving BS at R0 times the interference
    CF beyond R0, averaged over R0 in [r_e, tau].
    """
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise DomainError("CF argument must be positive")
    r0, w0 = serving_nodes(params.r_e, params.tau, params.lambda_b)
    flat = q.reshape(-1, 1)
    s_bar = params.p_d * path_gain("dl", r0, params)
    phi = cf_dl_interference(flat, r0[None, :], params) / (1.0 - 1j * flat * s_bar[None, :])
    return (phi @ w0 / w0.sum()).reshape(q.shape)


def cf_ul_exposure(q, params: NetworkParams):
    """
    CF of the UL exposure at the typical UE from UEs in [r_e, tau].

    The radial integral is closed-form through 2F1(1, -2/alpha; 1-2/alpha; .);
    the serving-distance average of the FPC power uses Gauss-Legendre nodes.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(q <= 0):
        raise DomainError("CF argument must be positive")
    if params.lambda_u == 0:
        return np.ones_like(q, dtype=complex)
    d = params.derived
    b = -2.0 / params.alpha
    lam = params.lambda_b

    def radial(power):
        # int_{r_e}^{tau} (1 - 1/(1 - j q P l~(r))) r dr
        a = 1j * q[..., None] * power / d.kappa_u if np.ndim(power) else 1j * q * power / d.kappa_u
        tail = params.tau ** 2 * hyp2f1_one_b_minus_one(b, a * params.tau ** (-params.alpha))
        head = params.r_e ** 2 * hyp2f1_one_b_minus_one(b, a * params.r_e ** (-params.alpha))
        out = -0.5 * (tail - head)
        if params.near_field == "clip":
            # disc r < r_e, every UE in it at r_e
            x = a * params.r_e ** (-params.alpha)
            out = out - 0.5 * params.r_e ** 2 * x / (1.0 - x)
        return out

    cap_mass = geometry.serving_distance_cdf_between(d.r_m, params.tau, lam)
    total = cap_mass * radial(params.p_u_max)
    if not d.r_m_always_capped and d.r_m > params.r_e:
        v, wv = serving_nodes(params.r_e, d.r_m, lam, POWER_NODES)
        total = total + radial(ue_tx_power(v, params)) @ wv
    return np.exp(-2.0 * np.pi * params.lambda_u * total)


def _ul_interference_exponent(s: np.ndarray, r0: float, params: NetworkParams) -> np.ndarray:
    """2 pi int_{r0}^{tau} lambda_I(r) r E[x/(1+x)] dr for each s, x = s P G l^u(r)."""
    d = params.derived
    r, wr = _log_nodes(r0, params.tau, breaks=(d.r_m,))
    if r.size == 0 or d.lambda_r == 0:
        return np.zeros_like(s)
    lam = params.lambda_b
    gain = params.g_b * path_gain("ul", r, params)
    F_r = geometry.serving_distance_cdf(r, lam)

    x, wx = _legendre(INTERFERER_NODES)
    w_lo = geometry.serving_distance_cdf(params.r_e, lam)
    w_hi = geometry.serving_distance_cdf(np.minimum(r, d.r_m), lam)
    if d.r_m_always_capped:
        w_hi = np.full_like(r, w_lo)
    w_hi = np.maximum(w_hi, w_lo)
    mid, half = 0.5 * (w_hi + w_lo), 0.5 * (w_hi - w_lo)
    v = geometry.serving_distance_quantile(mid[:, None] + half[:, None] * x[None, :], lam)
    wv = half[:, None] * wx[None, :]
    p_v = ue_tx_power(v, params)

    cap_lo = params.r_e if d.r_m_always_capped else d.r_m
    cap_mass = np.where(r > cap_lo, geometry.serving_distance_cdf_between(cap_lo, r, lam), 0.0)

    arg_v = s[:, None, None] * p_v[None, :, :] * gain[None, :, None]
    fpc = (arg_v / (1.0 + arg_v) * wv[None, :, :]).sum(axis=-1)
    arg_c = s[:, None] * params.p_u_max * gain[None, :]
    cap = cap_mass[None, :] * arg_c / (1.0 + arg_c)
    mean_h = (fpc + cap) / F_r[None, :]
    intensity = geometry.interferer_intensity(r, d.lambda_r)
    return 2.0 * np.pi * (mean_h * (intensity * r * wr)[None, :]).sum(axis=-1)


def laplace_ul_interference(s, r0: float, params: NetworkParams):
    """E[exp(-s I_u) | R0 = r0] at the typical BS, for scalar r0 and scalar or array s."""
    if not params.r_e <= r0 <= params.tau:
        raise DomainError("serving distance must lie in [r_e, tau]")
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0):
        raise DomainError("Laplace argument must be non-negative")
    out = np.exp(-_ul_interference_exponent(s_arr, float(r0), params))
    return float(out[0]) if np.ndim(s) == 0 else out


# ---------------------------------------------------------------------------
# Exposure CDFs

def exposure_cf(link: str, params: NetworkParams) -> CharacteristicFn:
    if link == "dl":
        return CharacteristicFn(eval=lambda q: cf_dl_exposure(q, params), label="dl-exposure",
                                scale=mean_exposure("dl", params))
    if link == "ul":
        return CharacteristicFn(eval=lambda q: cf_ul_exposure(q, params), label="ul-exposure",
                                scale=mean_exposure("ul", params))
    if link == "total":
        return exposure_cf("dl", params) * exposure_cf("ul", params)
    raise DomainError(f"unknown link '{link}'")


def cdf_exposure(link: str, thresholds, params: NetworkParams,
                 policy: QuadraturePolicy = QuadraturePolicy()) -> MetricCurve:
    """CDF of the UL, DL or total exposure at the given power thresholds (W)."""
    t = _check_positive(thresholds, "exposure")
    cf = exposure_cf(link, params)
    metric = f"cdf-exposure-{link}"
    if cf.scale == 0:
        # no emitters: exposure is identically zero
        return MetricCurve(metric=metric, kind="cdf", axis=t.tolist(), values=[1.0] * len(t))
    curve = cdf_curve_from_cf(cf, t, policy, metric=metric)
    return curve


def median_exposure(link: str, params: NetworkParams, policy: QuadraturePolicy = QuadraturePolicy()) -> float:
    """Median exposure (W), by root search on the inverted CDF in log-threshold."""
    cf = exposure_cf(link, params)
    if cf.scale == 0:
        return 0.0

    def excess(log_t):
        return cdf_curve_from_cf(cf, [np.exp(log_t)], policy).values[0] - 0.5

    lo, hi = np.log(cf.scale) - 2.0, np.log(cf.scale) + 2.0
    for _ in range(60):
        if excess(lo) < 0:
            break
        lo -= 4.0
    else:
        raise ConvergenceError(f"no lower bracket for the {link} median", partial=np.exp(lo))
    for _ in range(60):
        if excess(hi) > 0:
            break
        hi += 4.0
    else:
        raise ConvergenceError(f"no upper bracket for the {link} median", partial=np.exp(hi))
    root = optimize.brentq(excess, lo, hi, xtol=1e-6)
    return float(np.exp(root))


# ---------------------------------------------------------------------------
# Coverage

def _ul_signal(r0, params: NetworkParams):
    """Mean received UL signal at the typical BS for serving distance r0."""
    return ue_tx_power(r0, params) * params.g_b * path_gain("ul", r0, params)


def coverage_ul_conditional(thresholds, r0_nodes, params: NetworkParams) -> np.ndarray:
    """P[SINR_u > T | R0 = r0] as an array (len(thresholds), len(r0_nodes))."""
    t = np.atleast_1d(np.asarray(thresholds, dtype=float))
    r0_nodes = np.atleast_1d(np.asarray(r0_nodes, dtype=float))
    out = np.empty((len(t), len(r0_nodes)))
    for i, r0 in enumerate(r0_nodes):
        s = t / _ul_signal(r0, params)
        out[:, i] = np.exp(-s * params.noise_ul - _ul_interference_exponent(s, float(r0), params))
    return out


def coverage_ul(thresholds, params: NetworkParams) -> MetricCurve:
    """UL SINR coverage (CCDF) averaged over the serving distance."""
    t = _check_positive(thresholds, "SINR")
    r0, w0 = serving_nodes(params.r_e, params.tau, params.lambda_b)
    values = coverage_ul_conditional(t, r0, params) @ w0
    values = np.minimum.accumulate(clamp_probability(values, QuadraturePolicy(), "coverage-ul"))
    return MetricCurve(metric="coverage-ul", kind="ccdf", axis=t.tolist(), values=values.tolist())


def coverage_dl_conditional(thresholds, r0_nodes, params: NetworkParams) -> np.ndarray:
    """P[SINR_d > T | R0 = r0] as an array (len(thresholds), len(r0_nodes))."""
    t = np.atleast_1d(np.asarray(thresholds, dtype=float))[:, None]
    r0 = np.atleast_1d(np.asarray(r0_nodes, dtype=float))[None, :]
    s_bar = params.p_d * path_gain("dl", r0, params)
    s = t / s_bar
    return np.exp(-s * params.noise_dl) * laplace_dl_interference(s, r0, params)


def coverage_dl(thresholds, params: NetworkParams) -> MetricCurve:
    """
    DL SINR coverage (CCDF) averaged over the serving distance of a uniformly
    placed user, with active BSs beyond it.
    """
    t = _check_positive(thresholds, "SINR")
    r0, w0 = serving_nodes(params.r_e, params.tau, params.lambda_b, beta=UNIFORM_USER_BETA)
    values = coverage_dl_conditional(t, r0, params) @ w0
    values = np.minimum.accumulate(clamp_probability(values, QuadraturePolicy(), "coverage-dl"))
    return MetricCurve(metric="coverage-dl", kind="ccdf", axis=t.tolist(), values=values.tolist())


# ---------------------------------------------------------------------------
# Joint metrics

def joint_uec(t_cov_ul: float, t_exp: float, params: NetworkParams,
              policy: QuadraturePolicy = QuadraturePolicy()) -> float:
    """P[SINR_u > T_c, P_u < T_e] under independence of the two."""
    exposure = cdf_exposure("ul", [t_exp], params, policy).values[0]
    coverage = coverage_ul([t_cov_ul], params).values[0]
    return exposure * coverage


def _joint_dl_term(t_exp: float, t_cov_dl: float, r0: np.ndarray, params: NetworkParams,
                   policy: QuadraturePolicy) -> np.ndarray:
    """
    P[P_tot < T_e, SINR_d > T_cd | r0] for each r0, splitting on whether the
    serving signal lies below T' = T_cd (T_e + N) / (1 + T_cd).
    """
    noise = params.noise_dl
    s_bar = params.p_d * path_gain("dl", r0, params)
    t_split = t_cov_dl * (t_exp + noise) / (1.0 + t_cov_dl)
    a = np.minimum(t_split, t_exp) / s_bar
    b = t_exp / s_bar
    ul_cf = exposure_cf("ul", params)

    def psi(q):
        q = np.asarray(q, dtype=float)
        qs = q[None, :] * s_bar[:, None]
        k = 1.0 + 1j * qs / t_cov_dl
        first = -np.expm1(-a[:, None] * k) / k * np.exp(1j * q * noise)[None, :]
        dd = 1j * qs - 1.0
        second = ((np.exp(b[:, None] * dd) - np.exp(a[:, None] * dd)) / dd
                  * (ul_cf(q) * np.exp(-1j * q * t_exp))[None, :])
        return cf_dl_interference(q[None, :], r0[:, None], params) * (first + second)

    frequency = max(t_exp + noise, min(t_split, t_exp) / t_cov_dl) / t_exp
    total, _ = integrate_imag_over_q(psi, policy, scale=t_exp, frequency=frequency)
    return 0.5 * (1.0 - np.exp(-b)) - total / np.pi


def joint_emp_udc(t_cov_ul: float, t_exp: float, t_cov_dl: float, params: NetworkParams,
                  policy: QuadraturePolicy = QuadraturePolicy()) -> float:
    """P[SINR_u > T_cu, P_tot < T_e, SINR_d > T_cd] averaged over the serving distance."""
    if t_cov_ul <= 0 or t_cov_dl <= 0:
        raise DomainError("coverage thresholds must be positive")
    if t_exp <= 0:
        return 0.0
    r0, w0 = serving_nodes(params.r_e, params.tau, params.lambda_b)
    cov_ul = coverage_ul_conditional([t_cov_ul], r0, params)[0]
    dl_term = clamp_probability(_joint_dl_term(t_exp, t_cov_dl, r0, params, policy), policy, "joint-dl")
    value = float(np.sum(cov_ul * dl_term * w0))
    return float(clamp_probability(np.array([value]), policy, "joint-emp-udc")[0])


def conditional_emp_udc(t_exp: float, t_cov_ul: float, t_cov_dl: float, params: NetworkParams,
                        policy: QuadraturePolicy = QuadraturePolicy()) -> float:
    """P[P_tot < T_e | SINR_u > T_cu, SINR_d > T_cd] with the two coverages taken independent."""
    cov_ul = coverage_ul([t_cov_ul], params).values[0]
    cov_dl = coverage_dl([t_cov_dl], params).values[0]
    if cov_ul <= 0 or cov_dl <= 0:
        raise DomainError("conditioning on a zero-probability coverage event")
    return joint_emp_udc(t_cov_ul, t_exp, t_cov_dl, params, policy) / (cov_ul * cov_dl)


# ---------------------------------------------------------------------------
# Dispatch

def evaluate(spec: MetricSpec, params: NetworkParams, policy: QuadraturePolicy = QuadraturePolicy()) -> MetricCurve:
    """Evaluate a named metric. Scalar metrics give a one-row curve on the lambda_b axis."""
    name = spec.metric

    def scalar(value: float, kind: str = "value") -> MetricCurve:
        return MetricCurve(metric=name, kind=kind, axis=[params.lambda_b], values=[value])

    if name == "mean-exposure-ul":
        return scalar(mean_ul_exposure(params, spec.cap_mass))
    if name == "mean-exposure-dl":
        return scalar(mean_dl_exposure(params))
    if name.startswith("median-exposure-"):
        return scalar(median_exposure(name.rsplit("-", 1)[1], params, policy))
    if name.startswith("cdf-exposure-"):
        return cdf_exposure(name.rsplit("-", 1)[1], spec.thresholds, params, policy)
    if name == "coverage-ul":
        return coverage_ul(spec.thresholds, params)
    if name == "coverage-dl":
        return coverage_dl(spec.thresholds, params)
    if name == "joint-uec":
        return scalar(joint_uec(spec.t_cov_ul, spec.t_exp, params, policy), "prob")
    if name == "joint-emp-udc":
        return scalar(joint_emp_udc(spec.t_cov_ul, spec.t_exp, spec.t_cov_dl, params, policy), "prob")
    if name == "conditional-emp-udc":
        value = conditional_emp_udc(spec.t_exp, spec.t_cov_ul, spec.t_cov_dl, params, policy)
        return scalar(min(value, 1.0), "prob")
    raise DomainError(f"unknown metric '{name}'")
