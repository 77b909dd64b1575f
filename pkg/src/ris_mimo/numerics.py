"""Complex-matrix kernels shared by the optimizers.

All log-determinants are returned in bits (base 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)

SINGULAR_UPDATE_THRESHOLD = 1e-12
HERMITIAN_RTOL = 1e-10
RANK1_RTOL = 1e-8
BISECTION_TOL = 1e-10
BISECTION_MAX_ITER = 200


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix expected to be Hermitian positive definite is not."""

    def __init__(self, message: str, minor: int | None = None):
        super().__init__(message)
        self.minor = minor


class SingularUpdateError(ArithmeticError):
    """Rank-1 update whose denominator is numerically zero."""


class RankContractError(ValueError):
    """Matrix expected to be rank 1 has a significant second singular value."""


def _leading_minor_failure(m: np.ndarray) -> int:
    # smallest k such that the leading k x k block is not positive definite
    for k in range(1, m.shape[0] + 1):
        try:
            np.linalg.cholesky(m[:k, :k])
        except np.linalg.LinAlgError:
            return k
    return m.shape[0]


def check_hermitian(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> None:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.abs(m).max(initial=0.0), 1.0)
    if np.abs(m - m.conj().T).max(initial=0.0) > rtol * scale:
        raise NotPositiveDefiniteError("matrix is not Hermitian")


def cholesky_hpd(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a Hermitian positive definite matrix.

    Raises NotPositiveDefiniteError naming the first leading minor that is
    not positive definite.
    """
    m = np.asarray(m, dtype=complex)
    check_hermitian(m)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        k = _leading_minor_failure(m)
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite: leading minor of order {k} fails",
            minor=k,
        ) from None


def logdet_hpd(m: np.ndarray) -> float:
    """log2 det(m) for a Hermitian positive definite matrix, via Cholesky."""
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    chol = cholesky_hpd(m)
    return float(2.0 * np.sum(np.log(np.real(np.diag(chol)))) / LN2)


def logdet_hpd_batch(ms: np.ndarray) -> np.ndarray:
    """Batched log2 det over the leading axis; no Hermitian check."""
    chol = np.linalg.cholesky(ms)
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log(diag), axis=-1) / LN2


@dataclass(frozen=True)
class InverseCache:
    """Inverse of a Hermitian PD matrix together with its log2-determinant."""

    matrix_inverse: np.ndarray
    log_det_bits: float

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "InverseCache":
        m = np.asarray(m, dtype=complex)
        chol = cholesky_hpd(m)
        eye = np.eye(m.shape[0], dtype=complex)
        linv = np.linalg.solve(chol, eye)
        inv = linv.conj().T @ linv
        logdet = float(2.0 * np.sum(np.log(np.real(np.diag(chol)))) / LN2)
        return cls(inv, logdet)

    @property
    def dim(self) -> int:
        return self.matrix_inverse.shape[0]


def sm_rank1_inverse(cache: InverseCache, u: np.ndarray, c: float) -> InverseCache:
    """Cache for M + c u u^H given the cache for M (Sherman-Morrison).

    ``c`` may be negative (downdate).  Raises SingularUpdateError when
    |1 + c u^H M^-1 u| is below the singular-update threshold; callers are
    expected to refactorize from scratch in that case.
    """
    u = np.asarray(u, dtype=complex).reshape(-1)
    inv = cache.matrix_inverse
    w = inv @ u
    denom = 1.0 + c * np.real(np.vdot(u, w))
    if abs(denom) < SINGULAR_UPDATE_THRESHOLD:
        raise SingularUpdateError(f"rank-1 update denominator {denom:.3e} is singular")
    if denom < 0:
        raise NotPositiveDefiniteError("rank-1 downdate leaves the matrix indefinite")
    new_inv = inv - (c / denom) * np.outer(w, w.conj())
    new_inv = 0.5 * (new_inv + new_inv.conj().T)
    return InverseCache(new_inv, cache.log_det_bits + float(np.log2(denom)))


def rank1_generalized_eig(p: np.ndarray, q: np.ndarray, check: bool = True) -> complex:
    """The only nonzero eigenvalue of P^-1 Q for rank-1 Q.

    For Q = a b^H the eigenvalue is trace(P^-1 Q) = b^H P^-1 a, so no
    eigendecomposition is needed.  Returns 0 when the trace is below 1e-12
    in magnitude.
    """
    p = np.atleast_2d(np.asarray(p, dtype=complex))
    q = np.atleast_2d(np.asarray(q, dtype=complex))
    if check and q.shape[0] > 1:
        sv = np.linalg.svd(q, compute_uv=False)
        if sv[0] > 0 and sv[1] > RANK1_RTOL * sv[0]:
            raise RankContractError(
                f"Q is not rank 1: singular values {sv[0]:.3e}, {sv[1]:.3e}"
            )
    lam = complex(np.trace(np.linalg.solve(p, q)))
    if abs(lam) < SINGULAR_UPDATE_THRESHOLD:
        return 0j
    return lam


def project_capped_simplex(u: np.ndarray, cap: float) -> np.ndarray:
    """Euclidean projection onto {x : 0 <= x <= 1, sum(x) <= cap}.

    The projection is clip(u - tau, 0, 1) where tau = 0 if the clipped
    point is already feasible, otherwise tau >= 0 solves sum = cap.  tau is
    bracketed by bisection and then polished in closed form on the
    identified free set.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError("u must be a vector")
    if not 1 <= cap <= u.size:
        raise ValueError(f"cap must lie in [1, {u.size}], got {cap}")
    x = np.clip(u, 0.0, 1.0)
    if x.sum() <= cap:
        return x

    def excess(tau: float) -> float:
        return float(np.clip(u - tau, 0.0, 1.0).sum() - cap)

    def polish(tau: float) -> np.ndarray | None:
        # on a fixed active set the clipped sum is linear in tau
        shifted = u - tau
        ones = shifted >= 1.0
        free = (shifted > 0.0) & ~ones
        if not free.any():
            return None
        tau_exact = (u[free].sum() + ones.sum() - cap) / free.sum()
        candidate = np.clip(u - tau_exact, 0.0, 1.0)
        if abs(candidate.sum() - cap) <= BISECTION_TOL:
            return candidate
        return None

    lo, hi = 0.0, float(u.max())
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        found = polish(mid)
        if found is not None:
            return found
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < BISECTION_TOL:
            break
    tau = 0.5 * (lo + hi)
    return polish(tau) if polish(tau) is not None else np.clip(u - tau, 0.0, 1.0)
