"""Antenna selection with perfect CSI."""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .capacity import (
    AntennaSet,
    GramEvaluator,
    ReflectionState,
    capacity_of_matrix,
    effective_channel_full,
)
from .channel import ChannelTriple
from .numerics import logdet_hpd_batch

DEFAULT_SUBSET_BUDGET = 10**6
_EXHAUSTIVE_CHUNK = 4096


class BudgetExceededError(RuntimeError):
    def __init__(self, count: int, budget: int):
        super().__init__(f"exhaustive search over {count} subsets exceeds budget {budget}")
        self.count = count
        self.budget = budget


def greedy_on_columns(
    columns: Sequence[np.ndarray],
    n_select: int,
    snr: float,
    return_trace: bool = False,
    mode: str = "fast",
):
    """Greedy maximization of the mean capacity over one or more channels.

    ``columns`` is a list of K x L effective channels; the objective is the
    average of their capacities.  Each step adds the antenna with the
    largest average marginal gain, lowest index on ties.  ``fast`` keeps a
    Gram inverse per channel; ``naive`` evaluates every candidate set's
    capacity from scratch.
    """
    if mode not in ("fast", "naive"):
        raise ValueError(f"unknown greedy mode {mode!r}")
    L = columns[0].shape[1]
    if not 0 <= n_select <= L:
        raise ValueError(f"cannot select {n_select} of {L} antennas")
    evaluators = [GramEvaluator(c, (), snr) for c in columns] if mode == "fast" else None
    chosen = np.zeros(L, dtype=bool)
    trace = [0.0]
    for _ in range(n_select):
        if mode == "fast":
            gain = np.mean([g.full_gradient() for g in evaluators], axis=0)
        else:
            base = list(np.flatnonzero(chosen))
            gain = np.full(L, -np.inf)
            for i in np.flatnonzero(~chosen):
                gain[i] = np.mean([capacity_of_matrix(c[:, base + [i]], snr) for c in columns])
            gain -= trace[-1]
        gain[chosen] = -np.inf
        i = int(np.argmax(gain))
        chosen[i] = True
        if mode == "fast":
            for g in evaluators:
                g.add(i)
            trace.append(float(np.mean([g.capacity for g in evaluators])))
        else:
            trace.append(trace[-1] + float(gain[i]))
    S = tuple(int(i) for i in np.flatnonzero(chosen))
    if return_trace:
        return S, trace
    return S


def greedy_select(
    t: ChannelTriple,
    r: ReflectionState,
    N_S: int,
    snr: float,
    return_trace: bool = False,
):
    """Greedy antenna selection from the empty set; N_S * L marginal gains."""
    return greedy_on_columns([effective_channel_full(t, r)], N_S, snr, return_trace)


def _subset_capacities(columns: np.ndarray, subsets: np.ndarray, snr: float) -> np.ndarray:
    # batched K x K Gram per subset: I + snr * U_S U_S^H
    u = columns[:, subsets]  # K x B x n
    u = np.transpose(u, (1, 0, 2))
    K = columns.shape[0]
    gram = np.eye(K)[None] + snr * (u @ np.conj(np.transpose(u, (0, 2, 1))))
    return logdet_hpd_batch(gram)


def exhaustive_on_columns(
    columns: np.ndarray,
    n_select: int,
    snr: float,
    budget: int = DEFAULT_SUBSET_BUDGET,
) -> tuple[AntennaSet, float]:
    L = columns.shape[1]
    count = math.comb(L, n_select)
    if count > budget:
        raise BudgetExceededError(count, budget)
    if n_select == 0:
        return (), 0.0
    best_val, best_set = -np.inf, None
    combos = itertools.combinations(range(L), n_select)
    while True:
        chunk = list(itertools.islice(combos, _EXHAUSTIVE_CHUNK))
        if not chunk:
            break
        arr = np.array(chunk)
        vals = _subset_capacities(columns, arr, snr)
        j = int(np.argmax(vals))  # first max keeps lexicographic tie-break
        if vals[j] > best_val:
            best_val, best_set = float(vals[j]), tuple(int(i) for i in arr[j])
    return best_set, best_val


def exhaustive_select(
    t: ChannelTriple,
    r: ReflectionState,
    N_S: int,
    snr: float,
    budget: int = DEFAULT_SUBSET_BUDGET,
) -> tuple[AntennaSet, float]:
    """True optimum over all N_S-subsets; refuses when C(L, N_S) > budget."""
    return exhaustive_on_columns(effective_channel_full(t, r), N_S, snr, budget)


def random_select(L: int, N_S: int, rng: np.random.Generator) -> AntennaSet:
    if not 0 <= N_S <= L:
        raise ValueError(f"cannot select {N_S} of {L} antennas")
    return tuple(sorted(int(i) for i in rng.choice(L, size=N_S, replace=False)))
