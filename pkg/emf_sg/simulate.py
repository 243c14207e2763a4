"""
Monte-Carlo oracle: sample full type-II Poisson-Voronoi networks and
measure SINR and exposure at the typical nodes.

Every realization draws from its own substream spawned from one
SeedSequence, so results do not depend on how realizations are spread over
worker threads.
"""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Dict, List, Sequence, Union

import numpy as np

from .errors import DomainError
from .geometry import NetworkRealization, build_realization
from .schemas import McEstimate, MetricSpec
from .units import NetworkParams, path_gain, ue_tx_power

logger = logging.getLogger(__name__)

Z_95 = 1.96
SAMPLE_FIELDS = ("realization_id", "sinr_ul", "sinr_dl", "exp_ul_w", "exp_dl_w", "r0_m")


@dataclass(frozen=True)
class SampleRecord:
    """Measurements on one realization (powers in W, SINR linear)."""
    sinr_ul: float
    sinr_dl: float
    exp_ul_w: float
    exp_dl_w: float
    r0_m: float
    # Serving signal plus DL interference seen by the SINR receiver; the
    # joint DL event is evaluated on this power.
    dl_coupled_w: float = 0.0
    n_rejected: int = 0


def nearfield_clip(distance, r_e: float):
    """Clip UE-UE distances from below at the exclusion radius."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise DomainError("distance must be non-negative")
    return np.maximum(d, r_e)


def _ratio(signal: float, interference: float, noise: float) -> float:
    total = interference + noise
    return signal / total if total > 0 else float("inf")


def measure_realization(realization: NetworkRealization, params: NetworkParams,
                        rng: np.random.Generator) -> SampleRecord:
    """
    SINR at the typical BS and UE plus UL and DL exposure at the typical UE.
    Emitters farther than tau from the receiver are ignored.
    """
    bs = realization.bs_points
    ue = realization.ue_points
    typical = realization.typical_ue_index
    y0 = realization.typical_ue
    r0 = float(np.hypot(*y0))

    active = realization.active_bs
    others = active[active != realization.typical_bs_index]

    # uplink SINR at the typical BS (origin)
    tx = ue[realization.selected_ue[others]]
    tx_serving = np.hypot(*(tx - bs[others]).T)
    to_origin = np.hypot(*tx.T)
    h_ul = rng.exponential(size=len(others))
    h0_ul = rng.exponential()
    near = to_origin <= params.tau
    i_ul = float(np.sum((ue_tx_power(tx_serving, params) * params.g_b
                         * path_gain("ul", to_origin, params) * h_ul)[near]))
    s_ul = float(ue_tx_power(r0, params) * params.g_b * path_gain("ul", r0, params)) * h0_ul
    sinr_ul = _ratio(s_ul, i_ul, params.noise_ul)

    # downlink SINR at the typical UE
    rho = np.hypot(*(bs[others] - y0).T)
    h_dl = rng.exponential(size=len(others))
    h0_dl = rng.exponential()
    near = rho <= params.tau
    i_dl = float(np.sum((params.p_d * path_gain("dl", rho, params) * h_dl)[near]))
    s_dl = float(params.p_d * path_gain("dl", r0, params)) * h0_dl
    sinr_dl = _ratio(s_dl, i_dl, params.noise_dl)

    # uplink exposure from every other UE, each at its own FPC power
    mask = np.arange(len(ue)) != typical
    emitters = ue[mask]
    serving = np.hypot(*(emitters - bs[realization.association[mask]]).T)
    dist = np.hypot(*(emitters - y0).T)
    h_exp_ul = rng.exponential(size=len(emitters))
    near = dist <= params.tau
    if params.near_field == "exclude":
        near &= dist >= params.r_e
    gain = path_gain("ul-ue", nearfield_clip(dist, params.r_e), params)
    exp_ul = float(np.sum((ue_tx_power(serving, params) * gain * h_exp_ul)[near]))

    # downlink exposure from all active BSs, serving BS included
    rho_all = np.hypot(*(bs[active] - y0).T)
    h_exp_dl = rng.exponential(size=len(active))
    near = rho_all <= params.tau
    exp_dl = float(np.sum((params.p_d * path_gain("dl", rho_all, params) * h_exp_dl)[near]))

    return SampleRecord(sinr_ul=sinr_ul, sinr_dl=sinr_dl, exp_ul_w=exp_ul, exp_dl_w=exp_dl,
                        r0_m=r0, dl_coupled_w=s_dl + i_dl, n_rejected=realization.n_rejected)


def _simulate_one(params: NetworkParams, seed: np.random.SeedSequence) -> SampleRecord:
    rng = np.random.default_rng(seed)
    return measure_realization(build_realization(params, rng), params, rng)


@dataclass
class McSamples:
    """Per-realization measurements in realization order."""
    sinr_ul: np.ndarray
    sinr_dl: np.ndarray
    exp_ul_w: np.ndarray
    exp_dl_w: np.ndarray
    r0_m: np.ndarray
    dl_coupled_w: np.ndarray
    n_rejected: int
    seed: int

    @property
    def n(self) -> int:
        return len(self.r0_m)

    @property
    def exp_total_w(self) -> np.ndarray:
        return self.exp_ul_w + self.exp_dl_w

    def exposure(self, link: str) -> np.ndarray:
        if link == "ul":
            return self.exp_ul_w
        if link == "dl":
            return self.exp_dl_w
        if link == "total":
            return self.exp_total_w
        raise DomainError(f"unknown link '{link}'")

    def _estimate(self, kind: str, values, half_width, axis=()) -> McEstimate:
        return McEstimate(kind=kind, axis=list(axis), values=[float(v) for v in values],
                          half_width_95=[float(h) for h in half_width], n_realizations=self.n,
                          n_rejected=self.n_rejected, seed=self.seed)

    def _proportion(self, kind: str, hits: np.ndarray, axis=(), n_eff=None) -> McEstimate:
        n = self.n if n_eff is None else n_eff
        p = hits.sum(axis=-1) / max(n, 1)
        hw = Z_95 * np.sqrt(p * (1.0 - p) / max(n, 1))
        return self._estimate(kind, np.atleast_1d(p), np.atleast_1d(hw), axis)

    def mean(self, x: np.ndarray) -> McEstimate:
        hw = Z_95 * np.std(x, ddof=1) / np.sqrt(self.n) if self.n > 1 else 0.0
        return self._estimate("mean", [np.mean(x)], [hw])

    def median(self, x: np.ndarray) -> McEstimate:
        """Sample median with a distribution-free band from order statistics."""
        ordered = np.sort(x)
        n = self.n
        spread = Z_95 * np.sqrt(n) / 2.0
        lo = int(np.clip(np.floor(n / 2.0 - spread), 0, n - 1))
        hi = int(np.clip(np.ceil(n / 2.0 + spread), 0, n - 1))
        return self._estimate("median", [np.median(ordered)], [0.5 * (ordered[hi] - ordered[lo])])

    def estimate(self, spec: MetricSpec) -> McEstimate:
        """Empirical counterpart of an analytic metric."""
        name = spec.metric
        t = np.asarray(spec.thresholds, dtype=float)
        if name.startswith("mean-exposure-"):
            return self.mean(self.exposure(name.rsplit("-", 1)[1]))
        if name.startswith("median-exposure-"):
            return self.median(self.exposure(name.rsplit("-", 1)[1]))
        if name.startswith("cdf-exposure-"):
            x = self.exposure(name.rsplit("-", 1)[1])
            return self._proportion("cdf", x[None, :] < t[:, None], t)
        if name in ("coverage-ul", "coverage-dl"):
            x = self.sinr_ul if name == "coverage-ul" else self.sinr_dl
            return self._proportion("ccdf", x[None, :] > t[:, None], t)
        if name == "joint-uec":
            hits = (self.sinr_ul > spec.t_cov_ul) & (self.exp_ul_w < spec.t_exp)
            return self._proportion("joint-prob", hits)
        covered = (self.sinr_ul > spec.t_cov_ul) & (self.sinr_dl > spec.t_cov_dl)
        low = self.exp_ul_w + self.dl_coupled_w < spec.t_exp
        if name == "joint-emp-udc":
            return self._proportion("joint-prob", covered & low)
        if name == "conditional-emp-udc":
            n_cov = int(covered.sum())
            if n_cov == 0:
                raise DomainError("no realization meets both coverage thresholds")
            return self._proportion("joint-prob", (covered & low)[covered], n_eff=n_cov)
        raise DomainError(f"unknown metric '{name}'")


def _resolve_threads(threads: int) -> int:
    if threads and threads > 0:
        return threads
    return os.cpu_count() or 1


def simulate(params: NetworkParams, n: int, seed: int, threads: int = 0,
             chunk_size: int = 256) -> McSamples:
    """
    Sample n accepted realizations.

    Realization i always uses child i of SeedSequence(seed); chunks are
    mapped over a thread pool and reassembled in order.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    children = np.random.SeedSequence(seed).spawn(n)
    chunks = [children[i:i + chunk_size] for i in range(0, n, chunk_size)]

    def run_chunk(chunk: Sequence[np.random.SeedSequence]) -> List[SampleRecord]:
        return [_simulate_one(params, child) for child in chunk]

    workers = min(_resolve_threads(threads), len(chunks))
    logger.info(f"Simulating {n} realizations on {workers} thread(s), seed {seed}")
    if workers == 1:
        results = [run_chunk(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, chunks))
    records = [record for chunk in results for record in chunk]

    def column(name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in records], dtype=float)

    samples = McSamples(
        sinr_ul=column("sinr_ul"),
        sinr_dl=column("sinr_dl"),
        exp_ul_w=column("exp_ul_w"),
        exp_dl_w=column("exp_dl_w"),
        r0_m=column("r0_m"),
        dl_coupled_w=column("dl_coupled_w"),
        n_rejected=sum(r.n_rejected for r in records),
        seed=seed,
    )
    rejected_share = samples.n_rejected / (n + samples.n_rejected)
    logger.info(f"Rejected {samples.n_rejected} realizations with an empty typical cell "
                f"(share {rejected_share:.4f}, nu = {params.derived.nu:.4f})")
    return samples


def run_mc(params: NetworkParams, specs: Sequence[MetricSpec], n: int, seed: int,
           threads: int = 0, chunk_size: int = 256) -> Dict[str, McEstimate]:
    """Simulate once and estimate every requested metric on the same samples."""
    samples = simulate(params, n, seed, threads=threads, chunk_size=chunk_size)
    return {spec.metric: samples.estimate(spec) for spec in specs}


def write_samples(samples: McSamples, out: Union[str, IO[str]]) -> int:
    """Raw-sample CSV dump, one row per realization. Returns the row count."""
    close = False
    if isinstance(out, str):
        out = open(out, "w", newline="", encoding="utf-8")
        close = True
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(SAMPLE_FIELDS)
        for i in range(samples.n):
            writer.writerow([i] + [f"{v:.9g}" for v in (samples.sinr_ul[i], samples.sinr_dl[i],
                                                         samples.exp_ul_w[i], samples.exp_dl_w[i],
                                                         samples.r0_m[i])])
    finally:
        if close:
            out.close()
    return samples.n
