"""
Network parameters, unit conversions and derived scalar quantities.

Everything in here works in SI linear units. dB and dBm only appear in the
conversion helpers used at the config/CLI boundary.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import DomainError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
# Serving-distance correction factor of the Rayleigh approximation.
BETA = 1.3
# Shape constant of the Crofton-cell probability.
GAMMA = 3.5

Link = Literal["ul", "ul-ue", "dl"]
# UEs closer than r_e to the typical UE: seen at r_e, or ignored
NearField = Literal["clip", "exclude"]


def dbm_to_watt(dbm):
    """dBm -> W. Accepts scalars or arrays."""
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    """W -> dBm. Zero power maps to -inf."""
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(value):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(value, dtype=float))


def per_km2_to_per_m2(density: float) -> float:
    return density * 1e-6


def per_m2_to_per_km2(density: float) -> float:
    return density * 1e6


def path_loss_intercept(frequency_hz: float) -> float:
    """Free-space intercept kappa = (4 pi f / c)^2."""
    return (4.0 * np.pi * frequency_hz / SPEED_OF_LIGHT) ** 2


def active_density(lambda_b: float, lambda_u: float) -> Tuple[float, float]:
    """
    Probability that a cell holds no user (nu) and the density of active BSs.

    Returns:
        (nu, lambda_r) with lambda_r = lambda_b * (1 - nu).
    """
    if lambda_b <= 0:
        raise DomainError(f"BS density must be positive, got {lambda_b}")
    if lambda_u < 0:
        raise DomainError(f"UE density must be non-negative, got {lambda_u}")
    delta = lambda_u / lambda_b
    nu = (GAMMA / (GAMMA + delta)) ** GAMMA
    return nu, lambda_b * (1.0 - nu)


def _open_loop_power(snr_cell_edge: float, noise_ul: float, kappa_u: float,
                     epsilon: float, lambda_b: float, z: float, alpha: float) -> float:
    edge_sq = 1.0 / (16.0 * lambda_b)
    return (snr_cell_edge * noise_ul * kappa_u ** (1.0 - epsilon)
            * (edge_sq + z ** 2) ** ((1.0 - epsilon) * alpha / 2.0))


class NetworkParams(BaseModel):
    """
    Physical and topological configuration of the network.

    Densities are per m^2, powers in W, distances in m. When `p_u_0` is not
    supplied it is derived from the cell-edge SNR target.
    `near_field` applies to UL exposure only.
    """
    model_config = ConfigDict(frozen=True)

    f_u: float
    f_d: float
    bandwidth: float
    lambda_b: float
    lambda_u: float
    alpha: float
    z: float
    p_d: float
    p_u_max: float
    epsilon: float
    p_u_0: float
    g_b: float = 1.0
    noise_ul: float
    noise_dl: float
    tau: float
    r_e: float
    snr_cell_edge: float = 3.0
    near_field: NearField = "clip"

    @model_validator(mode="before")
    @classmethod
    def fill_open_loop_power(cls, data):
        if isinstance(data, dict) and data.get("p_u_0") is None:
            data = dict(data)
            try:
                data["p_u_0"] = _open_loop_power(
                    float(data.get("snr_cell_edge", 3.0)),
                    float(data["noise_ul"]),
                    path_loss_intercept(float(data["f_u"])),
                    float(data["epsilon"]),
                    float(data["lambda_b"]),
                    float(data["z"]),
                    float(data["alpha"]),
                )
            except (KeyError, TypeError, ValueError, ZeroDivisionError):
                # left to field validation
                data.pop("p_u_0", None)
        return data

    @model_validator(mode="after")
    def check_invariants(self):
        if self.alpha <= 2:
            raise ValueError("alpha must be > 2")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.lambda_b <= 0:
            raise ValueError("lambda_b must be positive")
        if self.lambda_u < self.lambda_b:
            raise ValueError("lambda_u must be >= lambda_b")
        for name in ("f_u", "f_d", "bandwidth", "p_d", "p_u_max", "p_u_0", "g_b", "tau", "r_e"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.z < 0 or self.noise_ul < 0 or self.noise_dl < 0:
            raise ValueError("z and noise powers must be non-negative")
        far_field = min(path_loss_intercept(self.f_u), path_loss_intercept(self.f_d)) ** (-1.0 / self.alpha)
        if self.r_e < far_field:
            raise ValueError(f"r_e must be >= {far_field:.4g} m (far-field bound)")
        if self.tau <= self.r_e:
            raise ValueError("tau must exceed r_e")
        return self

    @property
    def derived(self) -> "DerivedParams":
        return derive(self)


@dataclass(frozen=True)
class DerivedParams:
    kappa_u: float
    kappa_d: float
    delta: float
    nu: float
    lambda_r: float
    r_m: float
    r_m_always_capped: bool
    beta: float = BETA
    gamma: float = GAMMA


@lru_cache(maxsize=512)
def derive(params: NetworkParams) -> DerivedParams:
    """Scalar quantities shared by every engine, cached per parameter set."""
    nu, lambda_r = active_density(params.lambda_b, params.lambda_u)
    r_m, capped = max_power_radius(params)
    return DerivedParams(
        kappa_u=path_loss_intercept(params.f_u),
        kappa_d=path_loss_intercept(params.f_d),
        delta=params.lambda_u / params.lambda_b,
        nu=nu,
        lambda_r=lambda_r,
        r_m=r_m,
        r_m_always_capped=capped,
    )


def path_gain(link: Link, distance, params: NetworkParams):
    """
    Path-loss channel gain.

    "ul": UE -> BS, l^u(D) = (D^2+z^2)^(-alpha/2) / kappa_u
    "ul-ue": UE -> UE at ground level, D^(-alpha) / kappa_u
    "dl": BS -> UE, (rho^2+z^2)^(-alpha/2) / kappa_d
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise DomainError("distance must be non-negative")
    if link == "ul":
        return (d ** 2 + params.z ** 2) ** (-params.alpha / 2.0) / path_loss_intercept(params.f_u)
    if link == "ul-ue":
        if np.any(d < params.r_e):
            raise DomainError(f"UE-to-UE distance below exclusion radius {params.r_e} m")
        return d ** (-params.alpha) / path_loss_intercept(params.f_u)
    if link == "dl":
        return (d ** 2 + params.z ** 2) ** (-params.alpha / 2.0) / path_loss_intercept(params.f_d)
    raise DomainError(f"unknown link '{link}'")


def ue_tx_power(serving_distance, params: NetworkParams):
    """Fractional power control truncated at the maximum UE power."""
    gain = path_gain("ul", serving_distance, params)
    return np.minimum(params.p_u_0 * gain ** (-params.epsilon), params.p_u_max)


def max_power_radius(params: NetworkParams) -> Tuple[float, bool]:
    """
    Serving distance beyond which a UE transmits at maximum power.

    Returns (r_m, always_capped). r_m is clipped to [r_e, tau]; the flag is
    set when every UE inside the region transmits at the cap.
    """
    kappa_u = path_loss_intercept(params.f_u)
    if params.epsilon == 0.0:
        if params.p_u_0 > params.p_u_max:
            logger.warning("epsilon = 0 with P0 above the power cap: all UEs transmit at maximum power")
            return params.r_e, True
        return params.tau, False
    ratio = params.p_u_max / (params.p_u_0 * kappa_u ** params.epsilon)
    r_sq = ratio ** (2.0 / (params.alpha * params.epsilon)) - params.z ** 2
    if r_sq <= params.r_e ** 2:
        return params.r_e, True
    r_m = float(np.sqrt(r_sq))
    return min(r_m, params.tau), False


def open_loop_power(params: NetworkParams) -> float:
    """
    Open-loop UL power giving the target mean SNR to a UE at distance
    1/(4 sqrt(lambda_b)) from its BS.
    """
    if params.lambda_b <= 0:
        raise DomainError("lambda_b must be positive")
    return _open_loop_power(params.snr_cell_edge, params.noise_ul, path_loss_intercept(params.f_u),
                            params.epsilon, params.lambda_b, params.z, params.alpha)


def exposure_to_ipd(power, link: Literal["ul", "dl"], params: NetworkParams):
    """Received power (W) -> incident power density (W/m^2)."""
    freq = params.f_u if link == "ul" else params.f_d
    return path_loss_intercept(freq) / (4.0 * np.pi) * np.asarray(power, dtype=float)


def ipd_to_efield(ipd):
    """Incident power density (W/m^2) -> RMS electric field (V/m)."""
    return np.sqrt(120.0 * np.pi * np.asarray(ipd, dtype=float))


def convert_exposure(power, unit: str, params: NetworkParams, link: Optional[str] = None):
    """
    Express received exposure power in the requested unit ("w", "ipd", "efield").
    Total exposure is converted with the DL intercept.
    """
    if unit == "w":
        return np.asarray(power, dtype=float)
    ipd = exposure_to_ipd(power, "ul" if link == "ul" else "dl", params)
    if unit == "ipd":
        return ipd
    if unit == "efield":
        return ipd_to_efield(ipd)
    raise DomainError(f"unknown exposure unit '{unit}'")
