"""Alternating antenna selection / passive beamforming drivers."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..beamforming import bcd_beamform, stochastic_bcd_beamform
from ..capacity import AntennaSet, ReflectionState, capacity
from ..channel import ChannelEnsemble, ChannelTriple
from ..selection import greedy_select, random_select
from ..stochastic_selection import (
    EnsembleSource,
    continuous_greedy,
    empirical_capacity,
    pipage_round,
    simple_greedy_empirical,
    spgm,
)

STOCHASTIC_METHODS = ("spgm", "continuous_greedy", "simple_greedy", "random")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AltOptSettings:
    n_select: int
    snr: float
    seed: int = 0
    eps_alt: float = 1e-4
    max_rounds: int = 10
    bcd_tol: float = 1e-6
    bcd_max_sweeps: int = 50
    beamform: bool = True
    # stochastic regime
    method: str = "spgm"
    spgm_T: int = 200
    spgm_B: int = 32
    cg_delta: float | None = None
    cg_B: int = 64


@dataclass
class Round:
    index: int
    antennas: AntennaSet
    state: ReflectionState
    capacity: float


@dataclass
class AltOptReport:
    rounds: list[Round] = field(default_factory=list)
    wall_times: dict[str, float] = field(default_factory=lambda: {"selection": 0.0, "beamforming": 0.0})
    converged: bool = False
    seed: int = 0

    @property
    def capacity(self) -> float:
        return self.rounds[-1].capacity if self.rounds else 0.0

    @property
    def antennas(self) -> AntennaSet:
        return self.rounds[-1].antennas

    @property
    def state(self) -> ReflectionState:
        return self.rounds[-1].state


def _initial_state(N: int, rng: np.random.Generator) -> ReflectionState:
    return ReflectionState.random(N, rng)


def alternating_optimize_perfect(t: ChannelTriple, cfg: AltOptSettings) -> AltOptReport:
    """Greedy selection and closed-form BCD, alternated from random phases.

    Each phase keeps the incumbent when its candidate is worse, so the
    reported capacity never decreases between rounds.
    """
    rng = np.random.default_rng(cfg.seed)
    report = AltOptReport(seed=cfg.seed)
    r = _initial_state(t.N, rng)
    S: AntennaSet | None = None
    best = -np.inf
    for k in range(cfg.max_rounds):
        tic = time.perf_counter()
        S_new = greedy_select(t, r, cfg.n_select, cfg.snr)
        c_new = capacity(t, S_new, r, cfg.snr)
        if S is None or c_new >= best:
            S, best = S_new, c_new
        report.wall_times["selection"] += time.perf_counter() - tic

        if cfg.beamform and t.N > 0:
            tic = time.perf_counter()
            r_new = bcd_beamform(t, S, r, cfg.snr, cfg.bcd_tol, cfg.bcd_max_sweeps)
            c_new = capacity(t, S, r_new, cfg.snr)
            if c_new >= best:
                r, best = r_new, c_new
            report.wall_times["beamforming"] += time.perf_counter() - tic

        gain = best - report.rounds[-1].capacity if report.rounds else np.inf
        report.rounds.append(Round(k, S, r, best))
        # nothing alternates without beamforming, and a full set is forced
        if not cfg.beamform or t.N == 0 or gain < cfg.eps_alt:
            report.converged = True
            break
    return report


def _stochastic_select(
    e: ChannelEnsemble, r: ReflectionState, cfg: AltOptSettings, rng: np.random.Generator
) -> AntennaSet:
    L = e.samples[0].L
    if cfg.method == "random":
        return random_select(L, cfg.n_select, rng)
    if cfg.method == "simple_greedy":
        return simple_greedy_empirical(e, r, cfg.snr, cfg.n_select)
    src = EnsembleSource(e.samples, r)
    if cfg.method == "spgm":
        x = spgm(src, r, cfg.snr, cfg.n_select, T=cfg.spgm_T, B=cfg.spgm_B, rng=rng)
    else:
        x = continuous_greedy(src, r, cfg.snr, cfg.n_select, delta=cfg.cg_delta, B=cfg.cg_B, rng=rng)
    return pipage_round(x, cfg.n_select, rng)


def alternating_optimize_stochastic(e: ChannelEnsemble, cfg: AltOptSettings) -> AltOptReport:
    """Sample-based selection and relaxed BCD on the ensemble-mean capacity."""
    if cfg.method not in STOCHASTIC_METHODS:
        raise ConfigError(f"unknown selection method {cfg.method!r}; choose from {STOCHASTIC_METHODS}")
    rng = np.random.default_rng(cfg.seed)
    N = e.samples[0].N
    report = AltOptReport(seed=cfg.seed)
    r = _initial_state(N, rng)
    S: AntennaSet | None = None
    best = -np.inf
    for k in range(cfg.max_rounds):
        tic = time.perf_counter()
        S_new = _stochastic_select(e, r, cfg, rng)
        c_new = empirical_capacity(e, S_new, r, cfg.snr)
        if S is None or c_new >= best:
            S, best = S_new, c_new
        report.wall_times["selection"] += time.perf_counter() - tic

        if cfg.beamform and N > 0:
            tic = time.perf_counter()
            r_new = stochastic_bcd_beamform(e, S, r, cfg.snr, cfg.bcd_tol, cfg.bcd_max_sweeps)
            c_new = empirical_capacity(e, S, r_new, cfg.snr)
            if c_new >= best:
                r, best = r_new, c_new
            report.wall_times["beamforming"] += time.perf_counter() - tic

        gain = best - report.rounds[-1].capacity if report.rounds else np.inf
        report.rounds.append(Round(k, S, r, best))
        if not cfg.beamform or N == 0 or gain < cfg.eps_alt:
            report.converged = True
            break
    return report


def greedy_random_phase(t: ChannelTriple, cfg: AltOptSettings) -> tuple[AntennaSet, ReflectionState, float]:
    """Greedy selection under random phases (no beamforming)."""
    r = _initial_state(t.N, np.random.default_rng(cfg.seed))
    S = greedy_select(t, r, cfg.n_select, cfg.snr)
    return S, r, capacity(t, S, r, cfg.snr)


def beamform_random_subset(t: ChannelTriple, cfg: AltOptSettings) -> tuple[AntennaSet, ReflectionState, float]:
    """BCD on a uniformly random antenna subset."""
    rng = np.random.default_rng(cfg.seed)
    r = _initial_state(t.N, rng)
    S = random_select(t.L, cfg.n_select, rng)
    if t.N:
        r = bcd_beamform(t, S, r, cfg.snr, cfg.bcd_tol, cfg.bcd_max_sweeps)
    return S, r, capacity(t, S, r, cfg.snr)


def greedy_no_ris(t: ChannelTriple, cfg: AltOptSettings) -> tuple[AntennaSet, ReflectionState, float]:
    r = ReflectionState.disabled(t.N)
    S = greedy_select(t, r, cfg.n_select, cfg.snr)
    return S, r, capacity(t, S, r, cfg.snr)
