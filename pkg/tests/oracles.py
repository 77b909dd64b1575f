"""Reference implementations used as test oracles.

Each one recomputes a quantity by a route that shares no code with the
package: cofactor determinants, dense assembly, subset enumeration, grids.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def cofactor_det(m: np.ndarray) -> complex:
    """Laplace expansion along the first row (fine up to dim 6)."""
    m = np.asarray(m, dtype=complex)
    n = m.shape[0]
    if n == 0:
        return 1.0 + 0j
    if n == 1:
        return m[0, 0]
    total = 0j
    for j in range(n):
        minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
        total += (-1) ** j * m[0, j] * cofactor_det(minor)
    return total


def dense_effective(direct, bs_ris, ris_user, beta) -> np.ndarray:
    """Hhat + R diag(beta) T assembled with explicit loops."""
    K, L = direct.shape
    N = bs_ris.shape[0]
    h = np.array(direct, dtype=complex)
    for k in range(K):
        for l in range(L):
            for n in range(N):
                h[k, l] += ris_user[k, n] * beta[n] * bs_ris[n, l]
    return h


def capacity_hh(h: np.ndarray, snr: float) -> float:
    """log2 det(I + snr H^H H) with the |S| x |S| Gram and a plain det."""
    h = np.asarray(h, dtype=complex)
    if h.shape[1] == 0:
        return 0.0
    g = np.eye(h.shape[1]) + snr * h.conj().T @ h
    return float(np.log2(np.linalg.det(g).real))


def set_capacity(columns: np.ndarray, S, snr: float) -> float:
    return capacity_hh(columns[:, sorted(S)], snr)


def all_subsets(L: int):
    for r in range(L + 1):
        yield from itertools.combinations(range(L), r)


def exact_multilinear(columns: np.ndarray, x: np.ndarray, snr: float) -> float:
    """F(x) by enumerating all 2^L subsets."""
    L = columns.shape[1]
    total = 0.0
    for S in all_subsets(L):
        mask = np.zeros(L, dtype=bool)
        mask[list(S)] = True
        p = float(np.prod(np.where(mask, x, 1.0 - x)))
        if p:
            total += p * set_capacity(columns, S, snr)
    return total


def exact_partials(columns: np.ndarray, x: np.ndarray, snr: float) -> np.ndarray:
    """dF/dx_i = E[C(S + i) - C(S - i)] with S ~ x, by enumeration."""
    L = columns.shape[1]
    out = np.zeros(L)
    for i in range(L):
        x1, x0 = x.copy(), x.copy()
        x1[i], x0[i] = 1.0, 0.0
        out[i] = exact_multilinear(columns, x1, snr) - exact_multilinear(columns, x0, snr)
    return out


def exhaustive_best(columns_list, n_select: int, snr: float) -> tuple[tuple[int, ...], float]:
    """Best mean capacity over all n_select-subsets (plain loops)."""
    L = columns_list[0].shape[1]
    best, best_set = -math.inf, None
    for S in itertools.combinations(range(L), n_select):
        v = float(np.mean([set_capacity(c, S, snr) for c in columns_list]))
        if v > best:
            best, best_set = v, S
    return best_set, best


def random_columns(rng: np.random.Generator, K: int, L: int, scale: float = 1.0) -> np.ndarray:
    return scale * (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))) / np.sqrt(2)


def random_triple_arrays(rng: np.random.Generator, K: int, L: int, N: int):
    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    return cn(K, L), cn(N, L), cn(K, N)


def phase_grid(points: int) -> np.ndarray:
    return np.exp(1j * np.linspace(0.0, 2 * np.pi, points, endpoint=False))


def polar_grid(n_angle: int, n_radius: int) -> np.ndarray:
    radii = np.linspace(0.0, 1.0, n_radius)
    angles = np.linspace(0.0, 2 * np.pi, n_angle, endpoint=False)
    return (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()
