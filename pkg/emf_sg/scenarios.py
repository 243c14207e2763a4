"""
Densification studies: parameter switching rules, density grids, sweeps
and optimum extraction.

Scenario a densifies BSs at a fixed UE/BS ratio; scenario b densifies UEs
on a fixed macro or small-cell layout. Both switch from the macro to the
small-cell parameter set above a density threshold.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from .analytic import evaluate
from .errors import DomainError
from .gilpelaez import QuadraturePolicy
from .schemas import MetricSpec
from .simulate import run_mc
from .units import NetworkParams, dbm_to_watt, per_km2_to_per_m2

logger = logging.getLogger(__name__)

Branch = Literal["macro", "small"]
Engine = Literal["analytic", "mc", "both"]


class CellSet(BaseModel):
    """Parameters that change between macro and small cells."""
    model_config = ConfigDict(frozen=True)

    alpha: float
    z: float
    p_d: float


MACRO_CELLS = CellSet(alpha=3.25, z=33.0, p_d=float(dbm_to_watt(66.0)))
SMALL_CELLS = CellSet(alpha=2.5, z=4.0, p_d=float(dbm_to_watt(40.0)))


class DensificationRule(BaseModel):
    """
    How a swept density maps onto network parameters.

    For scenario-a the swept density is lambda_b and lambda_u = user_ratio *
    lambda_b. For scenario-b it is lambda_u and lambda_b jumps from
    macro_lambda_b to small_lambda_b. The macro set applies up to and
    including switch_threshold (per m^2).
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["scenario-a", "scenario-b"]
    switch_threshold: float
    macro: CellSet = MACRO_CELLS
    small: CellSet = SMALL_CELLS
    user_ratio: float = 10.0
    macro_lambda_b: float = per_km2_to_per_m2(10.0)
    small_lambda_b: float = per_km2_to_per_m2(1e3)


SCENARIO_A = DensificationRule(kind="scenario-a", switch_threshold=per_km2_to_per_m2(100.0))
SCENARIO_B = DensificationRule(kind="scenario-b", switch_threshold=per_km2_to_per_m2(1e3))


def rule_for(name: str) -> DensificationRule:
    """Look up a rule by CLI name ("a", "b", "scenario-a", "scenario-b")."""
    rules = {"a": SCENARIO_A, "b": SCENARIO_B, "scenario-a": SCENARIO_A, "scenario-b": SCENARIO_B}
    if name not in rules:
        raise DomainError(f"unknown scenario '{name}'; valid: a, b")
    return rules[name]


@dataclass(frozen=True)
class ResolvedPoint:
    density: float
    branch: Branch
    params: NetworkParams
    clamped: bool = False


def _branch_of(rule: DensificationRule, density: float) -> Branch:
    return "macro" if density <= rule.switch_threshold else "small"


def resolve_point(rule: DensificationRule, density: float, base: NetworkParams,
                  branch: Optional[Branch] = None) -> ResolvedPoint:
    """Parameters for one grid point; `branch` forces the parameter set."""
    if not density > 0:
        raise DomainError(f"density must be positive, got {density}")
    branch = branch or _branch_of(rule, density)
    cells = rule.macro if branch == "macro" else rule.small
    if rule.kind == "scenario-a":
        lambda_b, lambda_u = density, rule.user_ratio * density
    else:
        lambda_b = rule.macro_lambda_b if branch == "macro" else rule.small_lambda_b
        lambda_u = density
    clamped = lambda_u < lambda_b
    if clamped:
        logger.warning(f"{rule.kind}: lambda_u {lambda_u:.4g} below lambda_b {lambda_b:.4g} m^-2, clamped")
        lambda_u = lambda_b
    values = base.model_dump(exclude={"p_u_0"})
    values.update(alpha=cells.alpha, z=cells.z, p_d=cells.p_d, lambda_b=lambda_b, lambda_u=lambda_u)
    # open-loop power depends on lambda_b and is recomputed
    return ResolvedPoint(density=density, branch=branch, params=NetworkParams.model_validate(values),
                         clamped=clamped)


def params_for(rule: DensificationRule, density: float, base: NetworkParams) -> NetworkParams:
    return resolve_point(rule, density, base).params


def rb_capacity(bandwidth: float, scs: float, guard_fraction: float, subframes: int) -> int:
    """Number of resource blocks: (B - 2 * guard * B) / (scs * subframes), floored."""
    if bandwidth <= 0 or scs <= 0 or subframes <= 0 or guard_fraction < 0:
        raise DomainError("bandwidth, scs and subframes must be positive, guard non-negative")
    usable = bandwidth * (1.0 - 2.0 * guard_fraction)
    if usable <= 0:
        raise DomainError("guard bands leave no usable bandwidth")
    return int(math.floor(usable / (scs * subframes) + 1e-9))


def density_grid(decades: Sequence[int], points_per_decade: int = 20) -> np.ndarray:
    """Log-spaced densities (m^-2) from 10^k0 to 10^k1 per km^2, both ends included."""
    k0, k1 = decades
    if k1 <= k0 or points_per_decade < 1:
        raise DomainError("grid needs k0 < k1 and at least one point per decade")
    exponents = np.arange(k0 * points_per_decade, k1 * points_per_decade + 1) / points_per_decade
    return per_km2_to_per_m2(10.0 ** exponents)


def grid_points(rule: DensificationRule, densities: Sequence[float], base: NetworkParams) -> List[ResolvedPoint]:
    """Resolve a grid; a density on the switch yields one point per branch."""
    d = np.asarray(densities, dtype=float)
    if d.size == 0:
        raise DomainError("empty density grid")
    if np.any(np.diff(d) <= 0):
        raise DomainError("density grid must be strictly ascending")
    points = []
    for density in d:
        if math.isclose(density, rule.switch_threshold, rel_tol=1e-9):
            points.append(resolve_point(rule, float(density), base, "macro"))
            points.append(resolve_point(rule, float(density), base, "small"))
        else:
            points.append(resolve_point(rule, float(density), base))
    return points


@dataclass
class SweepRow:
    density: float
    branch: Branch
    value: float
    half_width: Optional[float] = None
    mc_value: Optional[float] = None
    clamped: bool = False

    @property
    def discrepancy(self) -> Optional[float]:
        if self.mc_value is None:
            return None
        return abs(self.value - self.mc_value)


@dataclass
class SweepResult:
    metric: str
    engine: Engine
    rows: List[SweepRow] = field(default_factory=list)
    optimum_index: int = 0
    step_decades: float = 0.0

    @property
    def optimum(self) -> SweepRow:
        return self.rows[self.optimum_index]


def _scalar_spec(spec: MetricSpec) -> None:
    if spec.metric.startswith(("cdf-exposure-", "coverage-")) and len(spec.thresholds) != 1:
        raise DomainError(f"sweeping '{spec.metric}' needs exactly one threshold")


def sweep(rule: DensificationRule, densities: Sequence[float], spec: MetricSpec, base: NetworkParams,
          engine: Engine = "analytic", policy: QuadraturePolicy = QuadraturePolicy(),
          n: int = 20_000, seed: int = 1, threads: int = 0) -> SweepResult:
    """
    Evaluate a scalar metric over a density grid and locate its maximum.

    The optimum is the first grid point attaining the largest value; its
    resolution is the local grid step in decades. With engine "both" the
    optimum is taken on the analytic values.
    """
    if engine not in ("analytic", "mc", "both"):
        raise DomainError(f"unknown engine '{engine}'")
    _scalar_spec(spec)
    points = grid_points(rule, densities, base)

    def analytic_value(point: ResolvedPoint) -> float:
        value = evaluate(spec, point.params, policy).values[0]
        logger.info(f"{rule.kind} {spec.metric} at {point.density:.4g} m^-2 ({point.branch}): {value:.6g}")
        return value

    analytic_values: List[Optional[float]] = [None] * len(points)
    if engine in ("analytic", "both"):
        workers = threads if threads > 0 else None
        with ThreadPoolExecutor(max_workers=workers) as pool:
            analytic_values = list(pool.map(analytic_value, points))

    rows = []
    for point, value in zip(points, analytic_values):
        row = SweepRow(density=point.density, branch=point.branch, value=value if value is not None else 0.0,
                       clamped=point.clamped)
        if engine in ("mc", "both"):
            # MC parallelizes internally over realizations
            estimate = run_mc(point.params, [spec], n, seed, threads=threads)[spec.metric]
            row.half_width = estimate.half_width_95[0]
            if engine == "mc":
                row.value = estimate.values[0]
            else:
                row.mc_value = estimate.values[0]
        rows.append(row)

    values = np.array([r.value for r in rows])
    best = int(np.argmax(values))
    d = np.array([r.density for r in rows])
    neighbours = [abs(np.log10(d[j] / d[best])) for j in (best - 1, best + 1)
                  if 0 <= j < len(d) and d[j] != d[best]]
    step = min(neighbours) if neighbours else 0.0
    result = SweepResult(metric=spec.metric, engine=engine, rows=rows, optimum_index=best, step_decades=step)
    logger.info(f"{rule.kind} {spec.metric}: optimum {result.optimum.value:.6g} "
                f"at {result.optimum.density:.4g} m^-2 (grid step {step:.3g} decades)")
    return result
