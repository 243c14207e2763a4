"""
Special functions used by the closed-form metrics.

Only the hypergeometric pattern 2F1(1, b; b+1; z) is needed, at complex z
with possibly large modulus, together with the generalized exponential
integral E_n(x) of real (often negative) order.
"""
import logging

import numpy as np
from scipy import integrate, special

from .errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

SERIES_RADIUS = 0.9
_SERIES_EPS = 1e-17
_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAX_ITER = 1000


def _check_order(b: float) -> None:
    if b <= 0 and float(b).is_integer():
        raise DomainError(f"2F1(1, b; b+1; z) undefined for non-positive integer b = {b}")


def _series(b: float, z: np.ndarray) -> np.ndarray:
    """sum_k b/(b+k) z^k by Horner, for |z| < SERIES_RADIUS."""
    if z.size == 0:
        return z.astype(complex)
    rho = float(np.max(np.abs(z)))
    if rho == 0.0:
        return np.ones_like(z, dtype=complex)
    n_terms = int(np.ceil(np.log(_SERIES_EPS) / np.log(rho))) + 2
    n_terms = max(n_terms, 4)
    acc = np.zeros_like(z, dtype=complex)
    for k in range(n_terms - 1, -1, -1):
        acc = acc * z + b / (b + k)
    return acc


def _quadrature(b: float, z: np.ndarray) -> np.ndarray:
    """
    Integral representation with the endpoint singularity removed:
    F = sum_{k<m} b z^k/(b+k) + b/(b+m) z^m int_0^1 du / (1 - z u^(1/(b+m)))
    where m shifts the order so that b+m > 0.
    """
    if z.size == 0:
        return z.astype(complex)
    m = 0 if b > 0 else int(np.floor(-b)) + 1
    p = 1.0 / (b + m)
    n = z.size
    flat = z.ravel()

    def integrand(u):
        val = 1.0 / (1.0 - flat * u ** p)
        return np.concatenate([val.real, val.imag])

    res, err = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, norm="max", limit=2000)
    if not np.all(np.isfinite(res)):
        raise ConvergenceError("2F1 quadrature produced non-finite values", partial=res, achieved=err)
    integral = res[:n] + 1j * res[n:]
    head = np.zeros(n, dtype=complex)
    for k in range(m):
        head += b * flat ** k / (b + k)
    return (head + b / (b + m) * flat ** m * integral).reshape(z.shape)


def _connection(b: float, z: np.ndarray) -> np.ndarray:
    """Continuation to |z| > 1/SERIES_RADIUS through the 1/z transformation."""
    inv = 1.0 / z
    lead = np.pi * b / np.sin(np.pi * b) * np.power(-z, -b)
    return lead + b / ((1.0 - b) * z) * _series(1.0 - b, inv)


def hyp2f1_one_b(b: float, z, method: str = "auto"):
    """
    Gauss hypergeometric function 2F1(1, b; b+1; z) for real b and complex z.

    Args:
        b: real order, not a non-positive integer
        z: complex scalar or array, off the branch cut [1, inf)
        method: "auto" picks series / quadrature / 1/z transformation by |z|;
            "quadrature" forces the integral representation

    Returns:
        complex scalar or array matching z
    """
    _check_order(b)
    z_arr = np.asarray(z, dtype=complex)
    on_cut = (z_arr.imag == 0) & (z_arr.real >= 1.0)
    if np.any(on_cut):
        raise DomainError("z on the branch cut [1, inf)")

    out = np.empty(z_arr.shape, dtype=complex)
    if method == "quadrature":
        out[...] = _quadrature(b, z_arr)
    elif method == "auto":
        mod = np.abs(z_arr)
        inner = mod < SERIES_RADIUS
        outer = mod > 1.0 / SERIES_RADIUS
        if float(b).is_integer():
            # the 1/z transformation degenerates for integer b
            outer = np.zeros_like(inner)
        middle = ~(inner | outer)
        out[inner] = _series(b, z_arr[inner])
        out[middle] = _quadrature(b, z_arr[middle])
        out[outer] = _connection(b, z_arr[outer])
    else:
        raise DomainError(f"unknown method '{method}'")
    if out.ndim == 0:
        return complex(out)
    return out


def hyp2f1_one_b_minus_one(b: float, z, method: str = "auto"):
    """
    2F1(1, b; b+1; z) - 1 without cancellation near z = 0, through
    F(z) - 1 = z b/(b+1) 2F1(1, b+1; b+2; z).
    """
    _check_order(b)
    z_arr = np.asarray(z, dtype=complex)
    out = z_arr * (b / (b + 1.0)) * np.asarray(hyp2f1_one_b(b + 1.0, z_arr, method=method))
    if out.ndim == 0:
        return complex(out)
    return out


def _gamma_continued_fraction(a: float, x: np.ndarray) -> np.ndarray:
    """Modified Lentz evaluation of Gamma(a, x), valid for x > a + 1."""
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / _CF_TINY)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _CF_MAX_ITER + 1):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) < _CF_EPS):
            break
    else:
        raise ConvergenceError(f"incomplete gamma continued fraction did not converge for a = {a}",
                               partial=np.exp(-x + a * np.log(x)) * h,
                               achieved=float(np.max(np.abs(delta - 1.0))))
    return np.exp(-x + a * np.log(x)) * h


def _gamma_recurrence(a: float, x: np.ndarray) -> np.ndarray:
    """Gamma(a, x) for a <= 0 by stepping down from a positive order."""
    if float(a).is_integer():
        start = 0.0
        value = special.exp1(x)
    else:
        start = a + np.floor(-a) + 1.0
        value = special.gammaincc(start, x) * special.gamma(start)
    order = start - 1.0
    while order >= a - 1e-12:
        value = (value - x ** order * np.exp(-x)) / order
        order -= 1.0
    return value


def upper_incomplete_gamma(a: float, x):
    """
    Upper incomplete gamma Gamma(a, x) = int_x^inf t^(a-1) e^(-t) dt for any real a.

    x = 0 is accepted for a > 0 (complete gamma function).
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(~np.isfinite(x_arr)):
        raise DomainError("incomplete gamma requires finite x >= 0")
    if a > 0:
        out = special.gammaincc(a, x_arr) * special.gamma(a)
    else:
        if np.any(x_arr == 0):
            raise DomainError(f"Gamma({a}, 0) diverges")
        out = np.empty_like(x_arr)
        use_cf = x_arr > a + 1.0
        out[use_cf] = _gamma_continued_fraction(a, x_arr[use_cf])
        out[~use_cf] = _gamma_recurrence(a, x_arr[~use_cf])
    if out.ndim == 0:
        return float(out)
    return out


def exp_integral_en(n: float, x):
    """Generalized exponential integral E_n(x) = x^(n-1) Gamma(1-n, x), x > 0."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise DomainError("E_n(x) requires x > 0")
    out = x_arr ** (n - 1.0) * upper_incomplete_gamma(1.0 - n, x_arr)
    if np.ndim(out) == 0:
        return float(out)
    return out
