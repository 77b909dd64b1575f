"""Effective channel, sum capacity, and incremental marginal gains.

Antenna sets are plain sorted tuples of column indices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .channel import ChannelTriple
from .numerics import (
    SINGULAR_UPDATE_THRESHOLD,
    InverseCache,
    SingularUpdateError,
    logdet_hpd,
    sm_rank1_inverse,
)

log = logging.getLogger(__name__)

AntennaSet = tuple[int, ...]

UNIT_MODULUS_TOL = 1e-9


def as_antenna_set(indices: Iterable[int], L: int | None = None) -> AntennaSet:
    s = tuple(sorted(int(i) for i in indices))
    if len(set(s)) != len(s):
        raise ValueError(f"duplicate antenna indices in {s}")
    if s and (s[0] < 0 or (L is not None and s[-1] >= L)):
        raise IndexError(f"antenna index out of range [0, {L}): {s}")
    return s


@dataclass(frozen=True)
class ReflectionState:
    """RIS reflection coefficients (the diagonal of Theta).

    ``mode='disabled'`` is the no-RIS baseline with every coefficient 0.
    """

    beta: np.ndarray
    mode: str = "active"

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=complex).reshape(-1)
        object.__setattr__(self, "beta", beta)
        if self.mode == "active":
            if beta.size and np.abs(np.abs(beta) - 1.0).max() > UNIT_MODULUS_TOL:
                raise ValueError("active reflection coefficients must be unit modulus")
        elif self.mode == "disabled":
            if np.any(beta != 0):
                raise ValueError("disabled reflection state must be all zeros")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def N(self) -> int:
        return self.beta.size

    @classmethod
    def from_phases(cls, phases: np.ndarray) -> "ReflectionState":
        return cls(np.exp(1j * np.asarray(phases, dtype=float)))

    @classmethod
    def random(cls, N: int, rng: np.random.Generator) -> "ReflectionState":
        return cls.from_phases(rng.uniform(0.0, 2 * np.pi, size=N))

    @classmethod
    def disabled(cls, N: int) -> "ReflectionState":
        return cls(np.zeros(N, dtype=complex), mode="disabled")

    @classmethod
    def ones(cls, N: int) -> "ReflectionState":
        return cls(np.ones(N, dtype=complex))


def effective_channel_full(t: ChannelTriple, r: ReflectionState) -> np.ndarray:
    """Hhat + R diag(beta) T over all L antennas (K x L)."""
    if r.N != t.N:
        raise ValueError(f"reflection state has {r.N} elements, channel has {t.N}")
    if t.N == 0:
        return t.direct.copy()
    return t.direct + (t.ris_user * r.beta[None, :]) @ t.bs_ris


def effective_channel(t: ChannelTriple, S: Sequence[int], r: ReflectionState) -> np.ndarray:
    S = as_antenna_set(S, t.L)
    return effective_channel_full(t, r)[:, list(S)]


def capacity_of_matrix(h: np.ndarray, snr: float) -> float:
    """log2 det(I + snr H^H H) using the smaller of the two Gram matrices."""
    if snr <= 0:
        raise ValueError("snr must be positive")
    K, n = h.shape
    if n == 0 or K == 0:
        return 0.0
    if K <= n:
        gram = np.eye(K) + snr * (h @ h.conj().T)
    else:
        gram = np.eye(n) + snr * (h.conj().T @ h)
    return logdet_hpd(gram)


def capacity(t: ChannelTriple, S: Sequence[int], r: ReflectionState, snr: float) -> float:
    return capacity_of_matrix(effective_channel(t, S, r), snr)


def capacity_of_columns(columns: np.ndarray, S: Sequence[int], snr: float) -> float:
    return capacity_of_matrix(columns[:, list(S)], snr)


class GramEvaluator:
    """G(S) = I_K + snr * sum_{j in S} u_j u_j^H with a cached inverse.

    Single-owner mutable: ``add`` and ``remove`` update the cache by
    Sherman-Morrison in O(K^2).
    """

    def __init__(self, columns: np.ndarray, S: Iterable[int], snr: float):
        self.columns = np.asarray(columns, dtype=complex)
        self.snr = float(snr)
        self.current_set = as_antenna_set(S, self.columns.shape[1])
        self._refactorize()

    @property
    def K(self) -> int:
        return self.columns.shape[0]

    @property
    def L(self) -> int:
        return self.columns.shape[1]

    @property
    def cache(self) -> InverseCache:
        return self._cache

    @property
    def capacity(self) -> float:
        return self._cache.log_det_bits

    def gram(self, S: Iterable[int] | None = None) -> np.ndarray:
        idx = list(self.current_set if S is None else S)
        u = self.columns[:, idx]
        return np.eye(self.K) + self.snr * (u @ u.conj().T)

    def _refactorize(self) -> None:
        self._cache = InverseCache.from_matrix(self.gram())

    def add(self, i: int) -> None:
        if i in self.current_set:
            raise ValueError(f"antenna {i} already selected")
        self._cache = sm_rank1_inverse(self._cache, self.columns[:, i], self.snr)
        self.current_set = as_antenna_set((*self.current_set, i))

    def remove(self, i: int) -> None:
        if i not in self.current_set:
            raise ValueError(f"antenna {i} is not selected")
        self.current_set = tuple(j for j in self.current_set if j != i)
        try:
            self._cache = sm_rank1_inverse(self._cache, self.columns[:, i], -self.snr)
        except SingularUpdateError:
            log.info("singular downdate removing antenna %d; refactorizing", i)
            self._refactorize()

    def _quadratic_forms(self) -> np.ndarray:
        # q_i = u_i^H G(S)^-1 u_i for every column at once
        w = self._cache.matrix_inverse @ self.columns
        return np.real(np.einsum("kl,kl->l", self.columns.conj(), w))

    def _gains(self, q: np.ndarray, idx: np.ndarray) -> np.ndarray:
        member = np.zeros(self.L, dtype=bool)
        member[list(self.current_set)] = True
        q = q[idx]
        inside = member[idx]
        out = np.empty(idx.size)
        out[~inside] = np.log2(1.0 + self.snr * q[~inside])
        # for i in S: C(S) - C(S\{i}) = -log2(1 - snr q_i), the downdate denominator
        denom = 1.0 - self.snr * q[inside]
        gains_in = np.empty(denom.size)
        ok = denom > SINGULAR_UPDATE_THRESHOLD
        gains_in[ok] = -np.log2(denom[ok])
        for pos in np.flatnonzero(~ok):
            i = int(idx[inside][pos])
            log.info("singular downdate for antenna %d; using dense refactorization", i)
            rest = [j for j in self.current_set if j != i]
            gains_in[pos] = self.capacity - logdet_hpd(self.gram(rest))
        out[inside] = gains_in
        return out

    def marginal_gain(self, i: int) -> float:
        """C(S + {i}) - C(S - {i}) in bits."""
        u = self.columns[:, i]
        q = np.array([np.real(np.vdot(u, self._cache.matrix_inverse @ u))])
        full = np.zeros(self.L)
        full[i] = q[0]
        return float(self._gains(full, np.array([i]))[0])

    def full_gradient(self) -> np.ndarray:
        """Marginal gains of all L antennas: one K^3 inverse, K^2 per column."""
        return self._gains(self._quadratic_forms(), np.arange(self.L))


def gram_init(columns: np.ndarray, S: Iterable[int], snr: float) -> GramEvaluator:
    return GramEvaluator(columns, S, snr)


def marginal_gain(g: GramEvaluator, i: int) -> float:
    return g.marginal_gain(i)


def full_gradient(g: GramEvaluator) -> np.ndarray:
    return g.full_gradient()


def naive_gradient(columns: np.ndarray, S: Iterable[int], snr: float) -> np.ndarray:
    """Reference marginal gains by explicit |S|-sized determinants per antenna."""
    S = set(as_antenna_set(S, columns.shape[1]))
    out = np.empty(columns.shape[1])
    for i in range(columns.shape[1]):
        with_i = sorted(S | {i})
        without_i = sorted(S - {i})
        out[i] = _capacity_column_gram(columns, with_i, snr) - _capacity_column_gram(
            columns, without_i, snr
        )
    return out


def _capacity_column_gram(columns: np.ndarray, S: list[int], snr: float) -> float:
    if not S:
        return 0.0
    h = columns[:, S]
    return logdet_hpd(np.eye(len(S)) + snr * (h.conj().T @ h))
