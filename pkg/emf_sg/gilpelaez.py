"""
CDF evaluation from characteristic functions by Gil-Pelaez inversion:

    F(t) = 1/2 - (1/pi) int_0^inf Im[phi(q) e^(-jqt)] / q dq

The integral runs over dyadic panels in the dimensionless variable
u = q * scale, each panel integrated with an adaptive 15-point
Gauss-Kronrod rule.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import ConvergenceError, DomainError
from .schemas import MetricCurve

logger = logging.getLogger(__name__)

# 15-point Kronrod abscissae (positive half) and weights, 7-point Gauss weights.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate((-_XGK[:7], [0.0], _XGK[6::-1]))
KRONROD_WEIGHTS = np.concatenate((_WGK[:7], [_WGK[7]], _WGK[6::-1]))
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]
GAUSS_WEIGHTS[[13, 11, 9]] = _WG[:3]

QUIET_PANELS = 3
POINTS_PER_PERIOD = 8
CHUNK_INTERVALS = 2048


class QuadraturePolicy(BaseModel):
    """Tolerances and limits of the inversion integral (u = q * scale)."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    q_min: float = 1e-8
    q_max_cap: float = 1e12
    max_subdivisions: int = 50_000

    @model_validator(mode='after')
    def validate_policy(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError('tolerances must be positive')
        if not 0 < self.q_min < self.q_max_cap:
            raise ValueError('require 0 < q_min < q_max_cap')
        if self.max_subdivisions < 1:
            raise ValueError('max_subdivisions must be >= 1')
        return self


@dataclass(frozen=True)
class CharacteristicFn:
    """
    Characteristic function of a real random variable.

    `eval` maps a 1-D array of q > 0 to complex values; `scale` is a typical
    magnitude of the variable and sets the unit of the inversion variable.
    """
    eval: Callable[[np.ndarray], np.ndarray]
    label: str = ""
    scale: float = 1.0

    def __call__(self, q) -> np.ndarray:
        return np.asarray(self.eval(np.asarray(q, dtype=float)), dtype=complex)

    def __mul__(self, other: "CharacteristicFn") -> "CharacteristicFn":
        """CF of the sum of two independent variables."""
        first, second = self.eval, other.eval
        return CharacteristicFn(
            eval=lambda q: np.asarray(first(q), dtype=complex) * np.asarray(second(q), dtype=complex),
            label=f"{self.label}*{other.label}",
            scale=self.scale + other.scale,
        )


def _gk15(psi, lo: np.ndarray, hi: np.ndarray, scale: float) -> Tuple[np.ndarray, np.ndarray]:
    """Kronrod estimate and |K - G| per row and sub-interval of Im[psi(u/scale)]/u du."""
    kronrod_parts, error_parts = [], []
    for start in range(0, len(lo), CHUNK_INTERVALS):
        sl = slice(start, start + CHUNK_INTERVALS)
        centre = 0.5 * (lo[sl] + hi[sl])
        half = 0.5 * (hi[sl] - lo[sl])
        u = centre[:, None] + half[:, None] * NODES[None, :]
        values = np.asarray(psi(u.ravel() / scale))
        rows = values.shape[0]
        f = (values.imag / u.ravel()[None, :]).reshape(rows, len(centre), 15)
        kronrod = half[None, :] * (f @ KRONROD_WEIGHTS)
        gauss = half[None, :] * (f @ GAUSS_WEIGHTS)
        kronrod_parts.append(kronrod)
        error_parts.append(np.abs(kronrod - gauss))
    return np.concatenate(kronrod_parts, axis=1), np.concatenate(error_parts, axis=1)


def _panel(psi, a: float, b: float, policy: QuadraturePolicy, scale: float, frequency: float,
           reference: np.ndarray, budget: int) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Adaptive integral over one dyadic panel [a, b]. The initial oscillation
    split is free; only bisections count against the budget.
    Returns (value, error, bisections used).
    """
    width = b - a
    n_sub = 1
    if frequency * width > np.pi / 2:
        period = 2.0 * np.pi / frequency
        n_sub = int(np.ceil(width * POINTS_PER_PERIOD / (15.0 * period)))
    edges = np.linspace(a, b, n_sub + 1)
    lo, hi = edges[:-1], edges[1:]
    used = 0
    value = None
    error = None
    while True:
        kronrod, err = _gk15(psi, lo, hi, scale)
        if value is None:
            value = np.zeros(kronrod.shape[0])
            error = np.zeros(kronrod.shape[0])
        target = np.maximum(policy.rel_tol * (np.abs(reference) + np.abs(kronrod.sum(axis=1))),
                            1e-3 * policy.abs_tol)
        share = (hi - lo) / width
        bad = np.any(err > target[:, None] * share[None, :], axis=0)
        value += kronrod[:, ~bad].sum(axis=1)
        error += err[:, ~bad].sum(axis=1)
        if not np.any(bad):
            return value, error, used
        used += int(bad.sum())
        if used > budget:
            partial = value + kronrod[:, bad].sum(axis=1)
            raise ConvergenceError(
                f"inversion integral exceeded {policy.max_subdivisions} subdivisions",
                partial=partial,
                achieved=float(np.max(error + err[:, bad].sum(axis=1))),
            )
        mid = 0.5 * (lo[bad] + hi[bad])
        lo, hi = np.concatenate((lo[bad], mid)), np.concatenate((mid, hi[bad]))


def integrate_imag_over_q(psi: Callable[[np.ndarray], np.ndarray], policy: QuadraturePolicy,
                          scale: float = 1.0, frequency: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    int_0^inf Im[psi(q)] / q dq for a batch of integrands.

    Args:
        psi: maps a 1-D array of q to a (rows, len(q)) complex array
        policy: tolerances and limits, applied to u = q * scale
        scale: unit of the integration variable
        frequency: largest oscillation rate of psi in u, for panel splitting

    Returns:
        (integral, error estimate), each of shape (rows,)
    """
    if scale <= 0 or not np.isfinite(scale):
        raise DomainError(f"scale must be positive and finite, got {scale}")
    u_min = policy.q_min
    head = np.asarray(psi(np.array([u_min / scale])))
    # [0, u_min] piece: the integrand is bounded at the origin
    total = head.imag[:, 0].copy()
    error = np.abs(total) * 1e-3
    rows = total.shape[0]
    peak = np.zeros(rows)
    quiet = np.zeros(rows, dtype=int)
    budget = policy.max_subdivisions
    a = u_min
    k = 0
    while a < policy.q_max_cap:
        b = 2.0 * a
        try:
            c, e, used = _panel(psi, a, b, policy, scale, frequency, total, budget)
        except ConvergenceError as exc:
            exc.partial = total + exc.partial
            raise
        budget -= used
        total += c
        error += e
        mag = np.abs(c)
        new_peak = mag > peak
        peak = np.maximum(peak, mag)
        is_quiet = (mag < np.maximum(policy.rel_tol * np.abs(total), policy.abs_tol)) & ~new_peak
        quiet = np.where(is_quiet, quiet + 1, 0)
        logger.debug(f"panel {k} [{a:.3g}, {b:.3g}] max|c|={mag.max():.3g}")
        if np.all(quiet >= QUIET_PANELS):
            return total, error
        a = b
        k += 1
    logger.warning(f"inversion integral reached q_max_cap={policy.q_max_cap:g} before converging")
    return total, error


def _check_thresholds(thresholds) -> np.ndarray:
    t = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if not np.all(np.isfinite(t)):
        raise DomainError("thresholds must be finite")
    if np.any(np.diff(t) <= 0):
        raise DomainError("thresholds must be strictly ascending")
    return t


def _raw_cdf(cf: CharacteristicFn, t: np.ndarray, policy: QuadraturePolicy) -> np.ndarray:
    shifts = t / cf.scale

    def psi(q):
        phi = cf(q)
        return phi[None, :] * np.exp(-1j * np.outer(t, q))

    frequency = float(np.max(np.abs(shifts))) if len(t) else 0.0
    total, _ = integrate_imag_over_q(psi, policy, scale=cf.scale, frequency=frequency)
    return 0.5 - total / np.pi


def clamp_probability(values: np.ndarray, policy: QuadraturePolicy, label: str = "") -> np.ndarray:
    """Clip to [0, 1], warning when a value lies beyond the tolerance band."""
    values = np.asarray(values, dtype=float)
    outside = (values < -policy.abs_tol) | (values > 1.0 + policy.abs_tol)
    if np.any(outside):
        logger.warning(f"{label or 'probability'} outside [0, 1] before clamping: "
                       f"{values[outside].min():.3g}..{values[outside].max():.3g}")
    return np.clip(values, 0.0, 1.0)


def cdf_from_cf(cf: CharacteristicFn, t: float, policy: QuadraturePolicy = QuadraturePolicy()) -> float:
    """CDF of the variable with characteristic function `cf` at threshold t."""
    raw = _raw_cdf(cf, _check_thresholds([t]), policy)
    return float(clamp_probability(raw, policy, cf.label)[0])


def cdf_curve_from_cf(cf: CharacteristicFn, thresholds: Sequence[float],
                      policy: QuadraturePolicy = QuadraturePolicy(), metric: str = "cdf") -> MetricCurve:
    """
    CDF at every threshold, sharing one evaluation of cf per quadrature node.
    """
    t = _check_thresholds(thresholds)
    values = clamp_probability(_raw_cdf(cf, t, policy), policy, cf.label)
    repaired = np.maximum.accumulate(values)
    if np.any(repaired - values > 2 * policy.rel_tol):
        logger.warning(f"{cf.label}: CDF not monotone beyond tolerance, repaired")
    return MetricCurve(metric=metric, kind="cdf", axis=t.tolist(), values=repaired.tolist(),
                       meta={"label": cf.label})
