"""
Pydantic schemas for curves, Monte-Carlo estimates and run manifests.
"""
from __future__ import annotations

import hashlib
import json
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

# Slack on bounds and monotonicity checks of emitted curves.
CURVE_TOL = 1e-9

METRICS = (
    "mean-exposure-ul",
    "mean-exposure-dl",
    "median-exposure-ul",
    "median-exposure-dl",
    "median-exposure-total",
    "cdf-exposure-ul",
    "cdf-exposure-dl",
    "cdf-exposure-total",
    "coverage-ul",
    "coverage-dl",
    "joint-uec",
    "joint-emp-udc",
    "conditional-emp-udc",
)

CurveKind = Literal["cdf", "ccdf", "prob", "value"]


class MetricCurve(BaseModel):
    """Ordered samples threshold -> value with their metadata."""
    metric: str
    kind: CurveKind
    axis: List[float]
    values: List[float]
    half_width: Optional[List[float]] = None
    meta: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode='after')
    def validate_curve(self):
        if len(self.axis) != len(self.values):
            raise ValueError('axis and values must have the same length')
        if self.half_width is not None and len(self.half_width) != len(self.values):
            raise ValueError('half_width must match values')
        axis = np.asarray(self.axis, dtype=float)
        if np.any(np.diff(axis) <= 0):
            raise ValueError('axis must be strictly increasing')
        values = np.asarray(self.values, dtype=float)
        if self.kind in ("cdf", "ccdf", "prob"):
            if np.any(values < -CURVE_TOL) or np.any(values > 1 + CURVE_TOL):
                raise ValueError('probability values must lie in [0, 1]')
        if self.kind == "cdf" and np.any(np.diff(values) < -CURVE_TOL):
            raise ValueError('CDF curve must be non-decreasing')
        if self.kind == "ccdf" and np.any(np.diff(values) > CURVE_TOL):
            raise ValueError('CCDF curve must be non-increasing')
        return self


class McEstimate(BaseModel):
    """Empirical statistic with its 95% normal-approximation half-width."""
    kind: Literal["mean", "median", "cdf", "ccdf", "joint-prob"]
    axis: List[float] = Field(default_factory=list)
    values: List[float]
    half_width_95: List[float]
    n_realizations: int
    n_rejected: int = 0
    seed: int

    @model_validator(mode='after')
    def validate_estimate(self):
        if len(self.values) != len(self.half_width_95):
            raise ValueError('half_width_95 must match values')
        if self.axis and len(self.axis) != len(self.values):
            raise ValueError('axis must match values')
        if self.n_realizations < 1:
            raise ValueError('n_realizations must be >= 1')
        if self.kind in ("cdf", "ccdf", "joint-prob"):
            if any(v < 0 or v > 1 for v in self.values):
                raise ValueError('probabilities must lie in [0, 1]')
        return self


class MetricSpec(BaseModel):
    """A metric name with its fixed thresholds (all linear units)."""
    metric: str
    thresholds: List[float] = Field(default_factory=list)
    t_cov_ul: Optional[float] = None
    t_cov_dl: Optional[float] = None
    t_exp: Optional[float] = None
    # power-cap mass convention of the UL mean
    cap_mass: Literal["outer", "inner"] = "outer"

    @model_validator(mode='after')
    def validate_metric(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric '{self.metric}'; valid: {', '.join(METRICS)}")
        needs = {
            "joint-uec": ("t_cov_ul", "t_exp"),
            "joint-emp-udc": ("t_cov_ul", "t_exp", "t_cov_dl"),
            "conditional-emp-udc": ("t_cov_ul", "t_exp", "t_cov_dl"),
        }.get(self.metric, ())
        for name in needs:
            if getattr(self, name) is None:
                raise ValueError(f"metric '{self.metric}' requires {name}")
        return self


class RunManifest(BaseModel):
    """What produced an output file. Outputs reference it by `digest()`."""
    command: str
    config_path: Optional[str] = None
    params: Dict[str, Any]
    seed: Optional[int] = None
    versions: Dict[str, str]
    options: Dict[str, Any] = Field(default_factory=dict)
    wall_time_s: float = 0.0

    def canonical_json(self) -> str:
        payload = self.model_dump(exclude={"wall_time_s"})
        return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()
