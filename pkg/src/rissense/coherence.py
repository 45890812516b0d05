"""Measurement matrix, pairwise column coherences and average mutual
coherence, plus an orthogonal matching pursuit recovery check."""

from __future__ import annotations

import csv
import io

import numpy as np

from .channel import SensingDictionary
from .ris import ConfigurationMatrix


class DegenerateColumnError(ValueError):
    """A measurement-matrix column has zero norm (an unobservable block)."""

    def __init__(self, column: int):
        super().__init__(f"measurement matrix column {column} is zero")
        self.column = column


def measurement_matrix(T: ConfigurationMatrix | np.ndarray,
                       A: SensingDictionary | np.ndarray) -> np.ndarray:
    """Gamma = T A, shape (K, M)."""
    t = T.durations if isinstance(T, ConfigurationMatrix) else np.asarray(T, dtype=float)
    a = A.A if isinstance(A, SensingDictionary) else np.asarray(A)
    if t.ndim != 2 or a.ndim != 2 or t.shape[1] != a.shape[0]:
        raise ValueError(f"cannot multiply {t.shape} by {a.shape}")
    return t @ a


def pair_indices(M: int) -> tuple[np.ndarray, np.ndarray]:
    """Pairs (m, m') with m < m' in the order (0,1), (0,2), ..., (M-2, M-1)."""
    return np.triu_indices(M, k=1)


def coherence_matrix(G: np.ndarray) -> np.ndarray:
    """Full M x M matrix of normalized Hermitian inner products."""
    G = np.asarray(G)
    gram = G.conj().T @ G
    norms = np.sqrt(np.real(np.diagonal(gram)))
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateColumnError(int(zero[0]))
    return gram / np.outer(norms, norms)


def column_coherences(G: np.ndarray) -> np.ndarray:
    """u_{m,m'} = <g_m, g_m'> / (|g_m| |g_m'|) for m < m' (conjugate-linear in g_m)."""
    C = coherence_matrix(G)
    return C[pair_indices(C.shape[0])]


def average_mutual_coherence(G: np.ndarray) -> float:
    """Mean |u| over ordered pairs m != m'; lies in [0, 1]."""
    G = np.asarray(G)
    M = G.shape[1]
    if M < 2:
        raise ValueError("average mutual coherence needs at least two columns")
    u = column_coherences(G)
    return float(2.0 * np.sum(np.abs(u)) / (M * (M - 1)))


def mu_of(T: ConfigurationMatrix | np.ndarray, A: SensingDictionary | np.ndarray) -> float:
    return average_mutual_coherence(measurement_matrix(T, A))


def omp_recover(G: np.ndarray, y: np.ndarray, sparsity: int) -> tuple[np.ndarray, float]:
    """Orthogonal matching pursuit.

    Picks ``sparsity`` columns greedily by normalized correlation with the
    residual, re-fitting all selected coefficients by least squares after
    each pick. Stops early once the residual vanishes.

    Returns
    -------
    estimate : ndarray, complex (M,)
    residual_norm : float
    """
    G = np.asarray(G, dtype=complex)
    y = np.asarray(y, dtype=complex)
    K, M = G.shape
    if sparsity > K:
        raise ValueError(f"sparsity {sparsity} exceeds number of measurements {K}")
    norms = np.linalg.norm(G, axis=0)
    if not np.any(norms):
        raise ValueError("measurement matrix is zero")
    safe = np.where(norms > 0, norms, np.inf)
    estimate = np.zeros(M, dtype=complex)
    residual = y.copy()
    support: list[int] = []
    scale = np.linalg.norm(y)
    for _ in range(sparsity):
        if np.linalg.norm(residual) <= 1e-13 * max(scale, 1e-300):
            break
        score = np.abs(G.conj().T @ residual) / safe
        score[support] = -1.0
        support.append(int(np.argmax(score)))
        coef, *_ = np.linalg.lstsq(G[:, support], y, rcond=None)
        residual = y - G[:, support] @ coef
    if support:
        estimate[support] = coef
    return estimate, float(np.linalg.norm(residual))


def coherence_report(G: np.ndarray) -> str:
    """CSV table of (m, m_prime, abs_u) rows, then a ``# mu=...`` summary line."""
    C = coherence_matrix(G)
    rows, cols = pair_indices(C.shape[0])
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["m", "m_prime", "abs_u"])
    for m, mp in zip(rows, cols):
        w.writerow([int(m), int(mp), f"{abs(C[m, mp]):.12g}"])
    out.write(f"# mu={average_mutual_coherence(G):.12g}\n")
    return out.getvalue()
