"""
Point-process sampling and serving-distance laws of the type-II
Poisson-Voronoi network.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import IO, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError
from .units import BETA, NetworkParams

logger = logging.getLogger(__name__)

# Window margin in units of the typical cell radius 1/sqrt(pi lambda_b).
WINDOW_MARGIN_CELLS = 5.0
MAX_RESAMPLES = 100_000


@dataclass(frozen=True)
class NetworkRealization:
    """
    One sampled network. BS 0 sits at the origin and is the typical BS;
    the typical UE is the user it selected.

    Attributes:
        bs_points: (n_b, 2) BS positions in m
        ue_points: (n_u, 2) UE positions in m
        association: (n_u,) index of each UE's nearest BS
        selected_ue: (n_b,) index of the active user of each BS, -1 for an empty cell
        typical_ue_index: index of the typical UE in ue_points
        window_radius: sampling disk radius in m
        n_rejected: realizations discarded because the origin cell was empty
    """
    bs_points: np.ndarray
    ue_points: np.ndarray
    association: np.ndarray
    selected_ue: np.ndarray
    typical_ue_index: int
    window_radius: float
    n_rejected: int = 0
    typical_bs_index: int = 0

    @property
    def typical_ue(self) -> np.ndarray:
        return self.ue_points[self.typical_ue_index]

    @property
    def active_bs(self) -> np.ndarray:
        """Indices of BSs with a selected user."""
        return np.flatnonzero(self.selected_ue >= 0)


def sample_hppp(density: float, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous PPP of the given density (m^-2) on a disk centred at the origin."""
    if density < 0:
        raise DomainError(f"density must be non-negative, got {density}")
    if radius <= 0:
        raise DomainError(f"radius must be positive, got {radius}")
    n = rng.poisson(density * np.pi * radius ** 2)
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def window_radius(params: NetworkParams) -> float:
    return params.tau + WINDOW_MARGIN_CELLS / np.sqrt(np.pi * params.lambda_b)


def nearest_bs(bs_points: np.ndarray, ue_points: np.ndarray) -> np.ndarray:
    """Index of the nearest BS for every UE, ties to the lowest index."""
    if len(ue_points) == 0:
        return np.zeros(0, dtype=np.intp)
    if len(bs_points) == 1:
        return np.zeros(len(ue_points), dtype=np.intp)
    tree = cKDTree(bs_points)
    dist, idx = tree.query(ue_points, k=2)
    tie = dist[:, 0] == dist[:, 1]
    return np.where(tie, np.minimum(idx[:, 0], idx[:, 1]), idx[:, 0]).astype(np.intp)


def select_users(association: np.ndarray, n_bs: int, rng: np.random.Generator) -> np.ndarray:
    """One uniformly chosen user per non-empty cell, -1 elsewhere."""
    selected = np.full(n_bs, -1, dtype=np.intp)
    if len(association) == 0:
        return selected
    keys = rng.random(len(association))
    order = np.lexsort((keys, association))
    cells, first = np.unique(association[order], return_index=True)
    selected[cells] = order[first]
    return selected


def build_realization(params: NetworkParams, rng: np.random.Generator) -> NetworkRealization:
    """
    Sample BSs (Palm BS at the origin plus an H-PPP) and UEs on the window,
    associate every UE to its nearest BS and pick one user per cell.
    Realizations whose origin cell is empty are resampled.
    """
    radius = window_radius(params)
    rejected = 0
    for _ in range(MAX_RESAMPLES):
        bs = np.vstack((np.zeros((1, 2)), sample_hppp(params.lambda_b, radius, rng)))
        ue = sample_hppp(params.lambda_u, radius, rng)
        association = nearest_bs(bs, ue)
        selected = select_users(association, len(bs), rng)
        if selected[0] >= 0:
            return NetworkRealization(
                bs_points=bs,
                ue_points=ue,
                association=association,
                selected_ue=selected,
                typical_ue_index=int(selected[0]),
                window_radius=radius,
                n_rejected=rejected,
            )
        rejected += 1
    raise DomainError(f"origin cell empty in {MAX_RESAMPLES} consecutive samples; UE density too low")


def interferer_intensity(r, lambda_r: float):
    """Radial intensity (m^-2) of interfering UEs seen from the typical BS."""
    x = lambda_r * np.asarray(r, dtype=float) ** 2
    return lambda_r * (1.0 - np.exp(-6.5 * x) + 2.0 / 7.0 * x * np.exp(-13.0 / 9.0 * x))


def serving_distance_pdf(r, lambda_b: float, beta: float = BETA):
    """
    Corrected Rayleigh density of the serving distance. beta = 1 gives the exact
    law for a user placed independently of the BSs.
    """
    r = np.asarray(r, dtype=float)
    c = beta * np.pi * lambda_b
    return 2.0 * c * r * np.exp(-c * r ** 2)


def serving_distance_cdf(r, lambda_b: float, beta: float = BETA):
    r = np.asarray(r, dtype=float)
    return -np.expm1(-beta * np.pi * lambda_b * r ** 2)


def serving_distance_cdf_between(a, b, lambda_b: float):
    """F(b) - F(a), computed without cancellation for nearby a and b."""
    c = BETA * np.pi * lambda_b
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.exp(-c * a ** 2) * -np.expm1(-c * (b ** 2 - a ** 2))


def serving_distance_quantile(u, lambda_b: float, beta: float = BETA):
    """Inverse of the serving-distance CDF."""
    u = np.asarray(u, dtype=float)
    return np.sqrt(-np.log1p(-u) / (beta * np.pi * lambda_b))


def truncated_serving_pdf(r, d_y, lambda_b: float):
    """Serving-distance density of an interfering cell, conditioned on R_y <= d_y."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > d_y):
        raise DomainError("truncated serving pdf defined on 0 <= r <= d_y")
    return serving_distance_pdf(r, lambda_b) / serving_distance_cdf(d_y, lambda_b)


def dump_realization(realization: NetworkRealization, out: Union[str, IO[str]]) -> int:
    """
    Write a realization as CSV rows `kind, x_m, y_m, serving_bs, selected`.
    Returns the number of data rows.
    """
    close = False
    if isinstance(out, str):
        out = open(out, "w", newline="", encoding="utf-8")
        close = True
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["kind", "x_m", "y_m", "serving_bs", "selected"])
        active = set(realization.selected_ue[realization.selected_ue >= 0].tolist())
        for i, (x, y) in enumerate(realization.bs_points):
            writer.writerow(["bs", f"{x:.9g}", f"{y:.9g}", i, int(realization.selected_ue[i] >= 0)])
        for j, (x, y) in enumerate(realization.ue_points):
            writer.writerow(["ue", f"{x:.9g}", f"{y:.9g}", int(realization.association[j]), int(j in active)])
    finally:
        if close:
            out.close()
    return len(realization.bs_points) + len(realization.ue_points)
