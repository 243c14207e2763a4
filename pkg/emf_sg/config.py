"""
Config file loading and environment settings.

The config is a TOML file with `[network]`, `[quadrature]`, `[mc]` and
`[sweep]` sections. Network keys carry their unit as a suffix and are
converted to SI linear values in `NetworkParams`.
"""
from __future__ import annotations

import logging
import re
import tomllib
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError
from .gilpelaez import QuadraturePolicy
from .units import NearField, NetworkParams, db_to_linear, dbm_to_watt, per_km2_to_per_m2

logger = logging.getLogger(__name__)


class NetworkConfig(BaseModel):
    """The `[network]` section, in the units a user writes them."""
    model_config = ConfigDict(extra="forbid")

    f_u_hz: float = 2.56e9
    f_d_hz: float = 2.68e9
    bandwidth_hz: float = 20e6
    lambda_b_per_km2: float = 10.0
    lambda_u_per_km2: float = 100.0
    alpha: float = 3.25
    z_m: float = 33.0
    p_d_dbm: float = 66.0
    p_u_max_dbm: float = 23.0
    p_u_0_dbm: Optional[float] = None
    noise_dbm: float = -95.4
    noise_ul_dbm: Optional[float] = None
    noise_dl_dbm: Optional[float] = None
    g_b_db: float = 0.0
    tau_m: float = 30_000.0
    r_e_m: float = 0.3
    epsilon: float = 0.4
    snr_cell_edge: float = 3.0
    near_field: NearField = "clip"

    def to_params(self) -> NetworkParams:
        noise_ul = self.noise_dbm if self.noise_ul_dbm is None else self.noise_ul_dbm
        noise_dl = self.noise_dbm if self.noise_dl_dbm is None else self.noise_dl_dbm
        return NetworkParams(
            f_u=self.f_u_hz,
            f_d=self.f_d_hz,
            bandwidth=self.bandwidth_hz,
            lambda_b=per_km2_to_per_m2(self.lambda_b_per_km2),
            lambda_u=per_km2_to_per_m2(self.lambda_u_per_km2),
            alpha=self.alpha,
            z=self.z_m,
            p_d=float(dbm_to_watt(self.p_d_dbm)),
            p_u_max=float(dbm_to_watt(self.p_u_max_dbm)),
            p_u_0=None if self.p_u_0_dbm is None else float(dbm_to_watt(self.p_u_0_dbm)),
            g_b=float(db_to_linear(self.g_b_db)),
            noise_ul=float(dbm_to_watt(noise_ul)),
            noise_dl=float(dbm_to_watt(noise_dl)),
            tau=self.tau_m,
            r_e=self.r_e_m,
            epsilon=self.epsilon,
            snr_cell_edge=self.snr_cell_edge,
            near_field=self.near_field,
        )


class McConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(default=20_000, ge=1)
    seed: int = Field(default=1, ge=0)
    chunk_size: int = Field(default=256, ge=1)


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    points_per_decade: int = Field(default=20, ge=1)
    decades_a: tuple[int, int] = (-1, 5)
    decades_b: tuple[int, int] = (0, 6)

    @model_validator(mode="after")
    def validate_spans(self):
        for span in (self.decades_a, self.decades_b):
            if span[0] >= span[1]:
                raise ValueError("decade span must be increasing")
        return self


class RunConfig(BaseModel):
    """A whole config file after validation."""
    model_config = ConfigDict(extra="forbid")

    network: NetworkConfig = NetworkConfig()
    quadrature: QuadraturePolicy = QuadraturePolicy()
    mc: McConfig = McConfig()
    sweep: SweepConfig = SweepConfig()
    path: Optional[str] = None

    @property
    def params(self) -> NetworkParams:
        return self.network.to_params()


class Settings(BaseSettings):
    """Process-level settings read from the environment (EMF_SG_*)."""
    model_config = SettingsConfigDict(env_prefix="EMF_SG_")

    threads: int = Field(default=0, ge=0)
    registry_url: str = ""
    log_level: str = "INFO"


def _line_of(text: str, section: Optional[str], key: Optional[str]) -> Optional[int]:
    """Best-effort line number of `key` inside `[section]`."""
    if key is None:
        return None
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        header = re.match(r"^\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
            continue
        if re.match(rf"^{re.escape(key)}\s*=", line) and (section is None or current == section):
            return lineno
    return None


def parse_config(text: str, path: Optional[str] = None) -> RunConfig:
    """Parse and validate config text. Raises ConfigError with line/field details."""
    try:
        raw: Dict[str, Any] = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(e))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"malformed config: {e}", path=path, line=line) from e

    try:
        config = RunConfig(**raw, path=path)
        # network parameters must also satisfy the physical invariants
        config.params
    except ValidationError as e:
        err = e.errors()[0]
        loc = [str(part) for part in err.get("loc", ())]
        section = loc[0] if len(loc) > 1 else None
        field = loc[-1] if loc else None
        if field in (None, "__root__") or (section is None and field in RunConfig.model_fields):
            # model-level failure: report the section
            section, field = None, loc[0] if loc else None
        msg = err.get("msg", str(e))
        raise ConfigError(msg, path=path, line=_line_of(text, section, field), field=field) from e
    logger.info(f"Loaded config{' ' + path if path else ''}")
    return config


def load_config(path: Optional[str]) -> RunConfig:
    """Load a config file; `None` gives the built-in defaults."""
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config file not found", path=str(path))
    return parse_config(p.read_text(encoding="utf-8"), path=str(path))
