"""Sample-based antenna selection through the multilinear extension.

F(x) = E_H E_{S~x}[C_H(S)], where each antenna enters S independently with
probability x_i.  Its gradient is estimated from random sets and channel
draws, and is consumed by continuous greedy or stochastic projected
gradient ascent over {0 <= x <= 1, sum(x) <= N_S}; pipage rounding turns
the fractional point into an antenna set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .capacity import (
    AntennaSet,
    GramEvaluator,
    ReflectionState,
    capacity_of_matrix,
    effective_channel_full,
    naive_gradient,
)
from .channel import ChannelEnsemble, ChannelTriple, SystemConfig, sample_triple
from .numerics import project_capped_simplex
from .selection import greedy_on_columns

FRACTIONAL_EPS = 1e-12


# --- channel sources -------------------------------------------------------


class EnsembleSource:
    """Cycles through the effective channels of a fixed ensemble."""

    def __init__(self, samples: Sequence[ChannelTriple], r: ReflectionState):
        self.columns = [effective_channel_full(t, r) for t in samples]
        self._cursor = 0

    @property
    def L(self) -> int:
        return self.columns[0].shape[1]

    def next_columns(self, rng: np.random.Generator) -> np.ndarray:
        c = self.columns[self._cursor]
        self._cursor = (self._cursor + 1) % len(self.columns)
        return c


class GenerativeSource:
    """Fresh channel draws from the generative model at fixed user positions."""

    def __init__(self, config: SystemConfig, user_positions: np.ndarray, r: ReflectionState):
        self.config = config
        self.user_positions = np.asarray(user_positions)
        self.r = r

    @property
    def L(self) -> int:
        return self.config.L

    def next_columns(self, rng: np.random.Generator) -> np.ndarray:
        t = sample_triple(self.config, self.user_positions, rng)
        return effective_channel_full(t, self.r)


@dataclass(frozen=True)
class ChannelSampler:
    """Generative channel model: configuration plus fixed user positions."""

    config: SystemConfig
    user_positions: np.ndarray


Sampler = ChannelEnsemble | ChannelSampler | ChannelTriple | EnsembleSource | GenerativeSource


def column_source(sampler, r: ReflectionState):
    if isinstance(sampler, (EnsembleSource, GenerativeSource)):
        return sampler
    if isinstance(sampler, ChannelEnsemble):
        return EnsembleSource(sampler.samples, r)
    if isinstance(sampler, ChannelTriple):
        return EnsembleSource([sampler], r)
    if isinstance(sampler, ChannelSampler):
        return GenerativeSource(sampler.config, sampler.user_positions, r)
    if isinstance(sampler, (list, tuple)):
        return EnsembleSource(list(sampler), r)
    raise TypeError(f"cannot draw channels from {type(sampler).__name__}")


# --- estimators ------------------------------------------------------------


@dataclass(frozen=True)
class GradientEstimate:
    phi: np.ndarray
    batch_size: int
    source: str
    stderr: np.ndarray | None = None


def multilinear_value(
    sampler,
    x: np.ndarray,
    r: ReflectionState,
    snr: float,
    B: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte-Carlo estimate of F(x); returns (mean, standard error)."""
    if B < 1:
        raise ValueError("B must be at least 1")
    src = column_source(sampler, r)
    x = np.asarray(x, dtype=float)
    vals = np.empty(B)
    for b in range(B):
        cols = src.next_columns(rng)
        mask = rng.random(x.size) < x
        vals[b] = capacity_of_matrix(cols[:, mask], snr)
    se = float(vals.std(ddof=1) / np.sqrt(B)) if B > 1 else float("nan")
    return float(vals.mean()), se


def gradient_estimate(
    sampler,
    x: np.ndarray,
    r: ReflectionState,
    snr: float,
    B: int,
    rng: np.random.Generator,
    mode: str = "fast",
) -> GradientEstimate:
    """Average of B draws of phi_i = C(S + {i}) - C(S - {i}), S ~ x.

    ``fast`` factors G(S) once per draw and gets every entry from a rank-1
    identity; ``naive`` evaluates the determinant differences directly.
    Both consume the random stream identically.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    if mode not in ("fast", "naive"):
        raise ValueError(f"unknown gradient mode {mode!r}")
    src = column_source(sampler, r)
    x = np.asarray(x, dtype=float)
    draws = np.empty((B, x.size))
    for b in range(B):
        cols = src.next_columns(rng)
        S = np.flatnonzero(rng.random(x.size) < x)
        if mode == "fast":
            draws[b] = GramEvaluator(cols, S, snr).full_gradient()
        else:
            draws[b] = naive_gradient(cols, S, snr)
    se = draws.std(axis=0, ddof=1) / np.sqrt(B) if B > 1 else None
    return GradientEstimate(draws.mean(axis=0), B, mode, se)


# --- continuous optimizers -------------------------------------------------


def top_k_vertex(phi: np.ndarray, N_S: int) -> np.ndarray:
    """0/1 indicator of the N_S largest entries (lowest index on ties)."""
    phi = np.asarray(phi, dtype=float)
    order = np.argsort(-phi, kind="stable")
    v = np.zeros(phi.size)
    v[order[:N_S]] = 1.0
    return v


def theoretical_batch_size(delta: float, L: int) -> int:
    """Sample count 10 / delta^2 * (1 + ln L) prescribed for continuous greedy."""
    return int(math.ceil(10.0 / delta**2 * (1.0 + math.log(L))))


def continuous_greedy(
    sampler,
    r: ReflectionState,
    snr: float,
    N_S: int,
    delta: float | None = None,
    B: int = 64,
    rng: np.random.Generator | None = None,
    theoretical_batch: bool = False,
    mode: str = "fast",
) -> np.ndarray:
    """x(0) = 0, then x += delta * (best vertex for the estimated gradient)."""
    rng = rng if rng is not None else np.random.default_rng()
    if delta is None:
        delta = 1.0 / (9 * N_S**2)
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    src = column_source(sampler, r)
    if theoretical_batch:
        B = theoretical_batch_size(delta, src.L)
    x = np.zeros(src.L)
    t = 0.0
    while t < 1.0 - 1e-12:
        step = min(delta, 1.0 - t)
        phi = gradient_estimate(src, x, r, snr, B, rng, mode).phi
        x = np.minimum(x + step * top_k_vertex(phi, N_S), 1.0)
        t += step
    return x


@dataclass(frozen=True)
class SmoothnessSpec:
    """Constants for the 1 / (L + (delta / R) sqrt(t)) step rule."""

    L_smooth: float
    delta_var: float
    R_diam: float

    def step(self, t: int) -> float:
        return 1.0 / (self.L_smooth + self.delta_var / self.R_diam * math.sqrt(t))


def inv_sqrt_step(t: int) -> float:
    return 1.0 / math.sqrt(t)


def sample_tau(T: int, rng: np.random.Generator) -> int:
    """1-based iterate index: 1 and T w.p. 1/(2(T-1)), the rest w.p. 1/(T-1)."""
    if T == 1:
        return 1
    p = np.full(T, 1.0 / (T - 1))
    p[0] = p[-1] = 1.0 / (2 * (T - 1))
    return int(rng.choice(T, p=p / p.sum())) + 1


@dataclass
class SPGMResult:
    x: np.ndarray
    tau: int
    iterates: list[np.ndarray] | None = None


def spgm(
    sampler,
    r: ReflectionState,
    snr: float,
    N_S: int,
    T: int = 200,
    step_rule: str | Callable[[int], float] | SmoothnessSpec = "inv_sqrt",
    B: int = 32,
    rng: np.random.Generator | None = None,
    x0: np.ndarray | None = None,
    eval_batch: int | None = None,
    mode: str = "fast",
    full_output: bool = False,
):
    """Stochastic projected gradient ascent on F over the capped simplex.

    Iterates x^{t+1} = proj(x^t + mu_t phi_t) for t = 1..T.  The returned
    point is the better (under a Monte-Carlo evaluation of F) of the
    randomly drawn iterate x^tau and the last iterate.
    """
    rng = rng if rng is not None else np.random.default_rng()
    if T < 1:
        raise ValueError("T must be at least 1")
    if step_rule == "inv_sqrt":
        mu = inv_sqrt_step
    elif isinstance(step_rule, SmoothnessSpec):
        mu = step_rule.step
    elif callable(step_rule):
        mu = step_rule
    else:
        raise ValueError(f"unknown step rule {step_rule!r}")
    src = column_source(sampler, r)
    L = src.L
    x = np.full(L, N_S / L) if x0 is None else project_capped_simplex(np.asarray(x0, float), N_S)
    iterates = [x]
    for t in range(1, T + 1):
        phi = gradient_estimate(src, x, r, snr, B, rng, mode).phi
        x = project_capped_simplex(x + mu(t) * phi, N_S)
        iterates.append(x)
    tau = sample_tau(T, rng)
    chosen, last = iterates[tau - 1], iterates[-1]
    if not np.array_equal(chosen, last):
        nb = eval_batch or 4 * B
        v_tau, _ = multilinear_value(src, chosen, r, snr, nb, rng)
        v_last, _ = multilinear_value(src, last, r, snr, nb, rng)
        if v_last > v_tau:
            chosen = last
    if full_output:
        return SPGMResult(chosen, tau, iterates)
    return chosen


# --- rounding --------------------------------------------------------------


def lift_to_face(x: np.ndarray, N_S: int) -> np.ndarray:
    """Raise coordinates (largest first) until sum(x) = N_S."""
    x = np.array(x, dtype=float)
    deficit = N_S - x.sum()
    if deficit <= 1e-9:
        return x
    order = np.argsort(-x, kind="stable")
    for i in order:
        if deficit <= 0:
            break
        room = 1.0 - x[i]
        if room <= 0:
            continue
        inc = min(room, deficit)
        x[i] += inc
        deficit -= inc
    if deficit > 1e-9:
        raise ValueError(f"cannot lift x to sum {N_S}: all coordinates already at 1")
    return x


def pipage_round(
    x: np.ndarray,
    N_S: int,
    rng: np.random.Generator,
    on_swap: Callable[[np.ndarray], None] | None = None,
) -> AntennaSet:
    """Randomized pipage rounding over the uniform matroid.

    Each swap moves mass between two fractional coordinates so that the
    sum is unchanged and each coordinate is a martingale, leaving at least
    one of the pair integral.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-9) or np.any(x > 1 + 1e-9):
        raise ValueError("x must lie in [0, 1]")
    total = x.sum()
    if total > N_S + 1e-6:
        raise ValueError(f"sum(x) = {total} exceeds N_S = {N_S}")
    x = lift_to_face(np.clip(x, 0.0, 1.0), N_S)
    target = int(round(x.sum()))
    if abs(x.sum() - target) > 1e-6:
        raise ValueError(f"sum(x) = {x.sum()} is not integral")

    def fractional():
        return np.flatnonzero((x > FRACTIONAL_EPS) & (x < 1.0 - FRACTIONAL_EPS))

    frac = fractional()
    while frac.size >= 2:
        i, j = frac[0], frac[1]
        up = min(1.0 - x[i], x[j])
        down = min(x[i], 1.0 - x[j])
        if rng.random() < down / (up + down):
            x[i] += up
            x[j] -= up
        else:
            x[i] -= down
            x[j] += down
        # snap the coordinate that hit its bound
        for k in (i, j):
            if x[k] < FRACTIONAL_EPS:
                x[k] = 0.0
            elif x[k] > 1.0 - FRACTIONAL_EPS:
                x[k] = 1.0
        if on_swap is not None:
            on_swap(x.copy())
        frac = fractional()
    selected = np.flatnonzero(x > 0.5)
    if selected.size != target:
        raise AssertionError(f"pipage rounding produced {selected.size} antennas, expected {target}")
    return tuple(int(i) for i in selected)


# --- baselines -------------------------------------------------------------


def simple_greedy_empirical(
    ensemble: ChannelEnsemble | Sequence[ChannelTriple],
    r: ReflectionState,
    snr: float,
    N_S: int,
    mode: str = "naive",
) -> AntennaSet:
    """Greedy on the sample-mean capacity over the whole ensemble.

    The default evaluates each candidate set's capacity directly, the
    baseline the fast-gradient methods are measured against; ``mode="fast"``
    reuses the Gram-inverse machinery instead.
    """
    samples = ensemble.samples if isinstance(ensemble, ChannelEnsemble) else list(ensemble)
    cols = [effective_channel_full(t, r) for t in samples]
    return greedy_on_columns(cols, N_S, snr, mode=mode)


def empirical_capacity(
    ensemble: ChannelEnsemble | Sequence[ChannelTriple],
    S: Sequence[int],
    r: ReflectionState,
    snr: float,
) -> float:
    samples = ensemble.samples if isinstance(ensemble, ChannelEnsemble) else list(ensemble)
    idx = list(S)
    return float(
        np.mean([capacity_of_matrix(effective_channel_full(t, r)[:, idx], snr) for t in samples])
    )
