"""Passive beamforming by block coordinate ascent over the RIS coefficients.

With all coefficients but beta_n fixed, the capacity is
log2 det(P + beta_n Q + conj(beta_n) Q^H) with Q rank one.  Under perfect
CSI the unit-modulus maximizer has a closed form; over a sample ensemble
each coordinate is solved on the unit disk and projected back at the end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .capacity import ReflectionState, as_antenna_set, capacity_of_matrix
from .channel import ChannelEnsemble, ChannelTriple
from .numerics import LN2, logdet_hpd, logdet_hpd_batch, rank1_generalized_eig

IDENTITY_RTOL = 1e-9
ZERO_EIG = 1e-12


class SubproblemIdentityError(AssertionError):
    """Coordinate subproblem does not reproduce the capacity it was built from."""


class NonConcavityError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoordinateSubproblem:
    """P Hermitian PD and Q = a b^H for one RIS coordinate."""

    P: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def Q(self) -> np.ndarray:
        return np.outer(self.a, self.b.conj())

    def matrix(self, beta: complex) -> np.ndarray:
        q = self.Q
        return self.P + beta * q + np.conj(beta) * q.conj().T

    def objective(self, beta: complex) -> float:
        return logdet_hpd(self.matrix(beta))


@dataclass
class BCDTrace:
    capacities: list[float] = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False


def _coordinate_vectors(t: ChannelTriple, S: Sequence[int], n: int) -> tuple[np.ndarray, np.ndarray]:
    # rho_n is column n of R; T(S) = [t_1, ..., t_N]^H so t_n = conj(row n)
    return t.ris_user[:, n], np.conj(t.bs_ris[n, list(S)])


def _subproblem(h: np.ndarray, rho: np.ndarray, tvec: np.ndarray, beta_n: complex, snr: float):
    b_mat = h - beta_n * np.outer(rho, tvec.conj())
    P = (
        np.eye(h.shape[0])
        + snr * np.vdot(tvec, tvec).real * np.outer(rho, rho.conj())
        + snr * (b_mat @ b_mat.conj().T)
    )
    return CoordinateSubproblem(P, snr * rho, b_mat @ tvec), b_mat


def build_coordinate_subproblem(
    t: ChannelTriple,
    S: Sequence[int],
    r: ReflectionState,
    n: int,
    snr: float,
    verify: bool = True,
) -> CoordinateSubproblem:
    """P_n and Q_n for coordinate ``n`` with the other coefficients fixed.

    With B = Hhat(S) + sum_{i != n} beta_i rho_i t_i^H:
    P = I + snr |t_n|^2 rho_n rho_n^H + snr B B^H and Q = snr rho_n (B t_n)^H.
    """
    S = as_antenna_set(S, t.L)
    if not S:
        raise ValueError("need at least one selected antenna")
    if not 0 <= n < t.N:
        raise IndexError(f"coordinate {n} out of range [0, {t.N})")
    beta = r.beta
    h = t.direct[:, list(S)] + (t.ris_user * beta[None, :]) @ t.bs_ris[:, list(S)]
    rho, tvec = _coordinate_vectors(t, S, n)
    sub, b_mat = _subproblem(h, rho, tvec, beta[n], snr)
    if verify:
        probe = beta[n] if abs(abs(beta[n]) - 1.0) < 1e-9 else 1.0 + 0j
        lhs = sub.objective(probe)
        rhs = capacity_of_matrix(b_mat + probe * np.outer(rho, tvec.conj()), snr)
        if abs(lhs - rhs) > IDENTITY_RTOL * max(1.0, abs(rhs)):
            raise SubproblemIdentityError(
                f"coordinate {n}: subproblem gives {lhs!r}, capacity is {rhs!r}"
            )
    return sub


def closed_form_beta(sub: CoordinateSubproblem) -> complex:
    """Unit-modulus maximizer exp(-j arg lambda), lambda = tr(P^-1 Q).

    A vanishing lambda means the objective does not depend on the phase;
    1 is returned so the coefficient stays unit modulus.
    """
    lam = rank1_generalized_eig(sub.P, sub.Q, check=False)
    if abs(lam) < ZERO_EIG:
        return 1.0 + 0j
    return complex(np.exp(-1j * np.angle(lam)))


def bcd_beamform(
    t: ChannelTriple,
    S: Sequence[int],
    r0: ReflectionState,
    snr: float,
    tol: float = 1e-6,
    max_sweeps: int = 50,
    return_trace: bool = False,
):
    """Cyclic closed-form coordinate updates until a sweep gains less than ``tol``.

    The capacity is nondecreasing after every coordinate update; an update
    that would lose capacity to rounding is not applied.
    """
    if r0.mode != "active":
        raise ValueError("beamforming needs an active (unit-modulus) starting state")
    if tol <= 0:
        raise ValueError("tol must be positive")
    S = as_antenna_set(S, t.L)
    beta = r0.beta.copy()
    h = t.direct[:, list(S)] + (t.ris_user * beta[None, :]) @ t.bs_ris[:, list(S)]
    current = capacity_of_matrix(h, snr)
    trace = BCDTrace([current])
    if t.N == 0 or not S:
        trace.converged = True
        return (ReflectionState(beta), trace) if return_trace else ReflectionState(beta)

    for sweep in range(max_sweeps):
        start = current
        for n in range(t.N):
            rho, tvec = _coordinate_vectors(t, S, n)
            sub, b_mat = _subproblem(h, rho, tvec, beta[n], snr)
            candidate = closed_form_beta(sub)
            value = sub.objective(candidate)
            if value >= current:
                beta[n] = candidate
                h = b_mat + candidate * np.outer(rho, tvec.conj())
                current = value
            trace.capacities.append(current)
        trace.sweeps = sweep + 1
        if current - start < tol:
            trace.converged = True
            break
    state = ReflectionState(beta / np.abs(beta))
    return (state, trace) if return_trace else state


# --- sample-average regime -------------------------------------------------


@dataclass(frozen=True)
class BatchSubproblem:
    """Per-sample coordinate subproblems stacked on the leading axis."""

    P: np.ndarray  # s x K x K
    a: np.ndarray  # s x K
    b: np.ndarray  # s x K

    @property
    def s(self) -> int:
        return self.P.shape[0]

    def matrices(self, beta: complex) -> np.ndarray:
        q = self.a[:, :, None] * self.b.conj()[:, None, :]
        return self.P + beta * q + np.conj(beta) * np.conj(np.transpose(q, (0, 2, 1)))

    def objective(self, beta: complex) -> float:
        return float(np.mean(logdet_hpd_batch(self.matrices(beta))))

    def ascent_direction(self, beta: complex) -> complex:
        """d f / d Re(beta) + j d f / d Im(beta) = 2 conj(mean tr(M^-1 Q) / ln 2)."""
        m = self.matrices(beta)
        w = np.linalg.solve(m, self.a[:, :, None])[:, :, 0]
        g = np.mean(np.einsum("sk,sk->s", self.b.conj(), w)) / LN2
        return complex(2.0 * np.conj(g))

    def objective_and_direction(self, beta: complex) -> tuple[float, complex]:
        m = self.matrices(beta)
        chol = np.linalg.cholesky(m)
        f = float(np.mean(2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=1, axis2=2))), axis=1)) / LN2)
        w = np.linalg.solve(m, self.a[:, :, None])[:, :, 0]
        g = np.mean(np.einsum("sk,sk->s", self.b.conj(), w)) / LN2
        return f, complex(2.0 * np.conj(g))


def _disk(beta: complex) -> complex:
    r = abs(beta)
    return beta / r if r > 1.0 else beta


def maximize_on_disk(
    sub: BatchSubproblem,
    beta0: complex = 0j,
    max_iter: int = 2000,
    gtol: float = 1e-10,
) -> complex:
    """Projected gradient ascent with backtracking on the closed unit disk."""
    beta = _disk(complex(beta0))
    f, d = sub.objective_and_direction(beta)
    if abs(d) == 0.0:
        return beta
    step = 1.0 / abs(d)
    for _ in range(max_iter):
        step *= 2.0
        while True:
            cand = _disk(beta + step * d)
            move = cand - beta
            f_cand, d_cand = sub.objective_and_direction(cand)
            # sufficient increase for projected ascent
            lin = (np.conj(d) * move).real
            if f_cand >= f + lin - abs(move) ** 2 / (2.0 * step) - 1e-15 * max(1.0, abs(f)):
                break
            step *= 0.5
            if step * abs(d) < 1e-18:
                if abs(move) > 1e-6 and f_cand < f - 1e-9:
                    raise NonConcavityError(
                        f"no ascent step from beta={beta!r}: objective {f!r} -> {f_cand!r}"
                    )
                return beta
        beta, f, d = cand, f_cand, d_cand
        if abs(move) / step < gtol:
            break
    return beta


def _sample_coordinate_arrays(samples: Sequence[ChannelTriple], S: Sequence[int]):
    idx = list(S)
    direct = np.stack([t.direct[:, idx] for t in samples])  # s x K x n
    bs_ris = np.stack([t.bs_ris[:, idx] for t in samples])  # s x N x n
    ris_user = np.stack([t.ris_user for t in samples])  # s x K x N
    return direct, bs_ris, ris_user


def _batch_subproblem(h, rho, tvec, beta_n, snr):
    # h: s x K x n, rho: s x K, tvec: s x n
    outer = rho[:, :, None] * tvec.conj()[:, None, :]
    b_mat = h - beta_n * outer
    tnorm = np.einsum("sn,sn->s", tvec.conj(), tvec).real
    K = h.shape[1]
    P = (
        np.eye(K)[None]
        + snr * tnorm[:, None, None] * (rho[:, :, None] * rho.conj()[:, None, :])
        + snr * (b_mat @ np.conj(np.transpose(b_mat, (0, 2, 1))))
    )
    b = np.einsum("skn,sn->sk", b_mat, tvec)
    return BatchSubproblem(P, snr * rho, b), b_mat, outer


def _mean_capacity(h: np.ndarray, snr: float) -> float:
    K = h.shape[1]
    gram = np.eye(K)[None] + snr * (h @ np.conj(np.transpose(h, (0, 2, 1))))
    return float(np.mean(logdet_hpd_batch(gram)))


def relaxed_coordinate_solve(
    ensemble: ChannelEnsemble | Sequence[ChannelTriple],
    S: Sequence[int],
    r: ReflectionState | np.ndarray,
    n: int,
    snr: float,
) -> complex:
    """Maximize the sample-mean coordinate objective over |beta_n| <= 1."""
    samples = ensemble.samples if isinstance(ensemble, ChannelEnsemble) else list(ensemble)
    beta = np.asarray(r.beta if isinstance(r, ReflectionState) else r, dtype=complex)
    S = as_antenna_set(S, samples[0].L)
    direct, bs_ris, ris_user = _sample_coordinate_arrays(samples, S)
    h = direct + (ris_user * beta[None, None, :]) @ bs_ris
    sub, _, _ = _batch_subproblem(h, ris_user[:, :, n], np.conj(bs_ris[:, n, :]), beta[n], snr)
    return maximize_on_disk(sub, beta[n])


def project_unit_modulus(beta: np.ndarray) -> np.ndarray:
    """beta / |beta| elementwise, with 0 mapped to 1."""
    beta = np.asarray(beta, dtype=complex)
    mag = np.abs(beta)
    out = np.ones_like(beta)
    nz = mag > 0
    out[nz] = beta[nz] / mag[nz]
    return out


def stochastic_bcd_beamform(
    ensemble: ChannelEnsemble | Sequence[ChannelTriple],
    S: Sequence[int],
    r0: ReflectionState,
    snr: float,
    tol: float = 1e-6,
    max_sweeps: int = 50,
    return_trace: bool = False,
):
    """Coordinate sweeps of the relaxed disk problem, then unit-modulus projection.

    The trace records the sample-mean capacity with the relaxed
    coefficients after each coordinate update.
    """
    if r0.mode != "active":
        raise ValueError("beamforming needs an active (unit-modulus) starting state")
    samples = ensemble.samples if isinstance(ensemble, ChannelEnsemble) else list(ensemble)
    S = as_antenna_set(S, samples[0].L)
    beta = r0.beta.copy()
    N = beta.size
    trace = BCDTrace()
    if N == 0 or not S:
        trace.converged = True
        return (ReflectionState(beta), trace) if return_trace else ReflectionState(beta)

    direct, bs_ris, ris_user = _sample_coordinate_arrays(samples, S)
    h = direct + (ris_user * beta[None, None, :]) @ bs_ris
    current = _mean_capacity(h, snr)
    trace.capacities.append(current)
    for sweep in range(max_sweeps):
        start = current
        for n in range(N):
            rho, tvec = ris_user[:, :, n], np.conj(bs_ris[:, n, :])
            sub, b_mat, outer = _batch_subproblem(h, rho, tvec, beta[n], snr)
            beta[n] = maximize_on_disk(sub, beta[n])
            h = b_mat + beta[n] * outer
            current = _mean_capacity(h, snr)
            trace.capacities.append(current)
        trace.sweeps = sweep + 1
        if current - start < tol:
            trace.converged = True
            break
    state = ReflectionState(project_unit_modulus(beta))
    return (state, trace) if return_trace else state
