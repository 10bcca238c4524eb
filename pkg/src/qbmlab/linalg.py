"""Dense Hermitian linear algebra for thermal-state models.

Everything here works on plain complex ndarrays at full-matrix scale
(a handful of qubits, dimension at most a few thousand). Gibbs weights
are always computed in the eigenbasis with a max-shift so that matrix
norms up to ~50 stay far away from overflow.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

# Relative Frobenius tolerance below which an operator is silently
# symmetrized; beyond it the input is rejected as non-Hermitian.
HERMITICITY_RTOL = 1e-8

__all__ = [
    "EigenSystem",
    "hermitize",
    "hermitian_eigendecompose",
    "gibbs_state",
    "matrix_log_psd",
    "frechet_exp_neg",
    "von_neumann_entropy",
    "relative_entropy",
    "distance",
    "kron",
    "expectation_value",
    "validate_density_matrix",
]


class EigenSystem(NamedTuple):
    """Eigendecomposition of a Hermitian matrix.

    eigenvalues are real and ascending; eigenvectors holds the matching
    orthonormal eigenvectors as columns.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_square_matrix(A, name: str = "matrix") -> np.ndarray:
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {A.shape}")
    return A


def hermitize(A: np.ndarray) -> np.ndarray:
    """Return the Hermitian part (A + A^*) / 2."""
    return (A + A.conj().T) / 2.0


def _require_hermitian(A, name: str = "matrix", rtol: float = HERMITICITY_RTOL) -> np.ndarray:
    """Check A is Hermitian up to rtol * ||A||_F, then symmetrize it."""
    A = _as_square_matrix(A, name)
    scale = np.linalg.norm(A)
    defect = np.linalg.norm(A - A.conj().T)
    if defect > rtol * scale:
        raise ValueError(
            f"{name} is not Hermitian: defect {defect:.3e} exceeds "
            f"{rtol:.1e} * norm {scale:.3e}"
        )
    return hermitize(A)


def hermitian_eigendecompose(A: np.ndarray) -> EigenSystem:
    """Eigendecompose a Hermitian matrix.

    The input may be non-Hermitian at the rounding level (it is
    symmetrized first); a defect beyond 1e-8 * ||A||_F is an error.
    """
    H = _require_hermitian(A, "operator")
    evals, evecs = np.linalg.eigh(H)
    return EigenSystem(evals, evecs)


def gibbs_state(H: np.ndarray) -> tuple[np.ndarray, float]:
    """Thermal state of H at unit inverse temperature.

    Returns (rho, logZ) with rho = e^{-H} / Tr[e^{-H}]. Weights are
    formed as e^{-(lambda_i - lambda_min)} so only ratios of order one
    are ever exponentiated; logZ is shift-corrected.
    """
    evals, V = hermitian_eigendecompose(H)
    shift = evals[0]
    weights = np.exp(-(evals - shift))
    total = weights.sum()
    rho = (V * (weights / total)) @ V.conj().T
    log_z = float(np.log(total) - shift)
    return hermitize(rho), log_z


def matrix_log_psd(A: np.ndarray, clip: float = 1e-10) -> np.ndarray:
    """Matrix logarithm of a positive semidefinite operator.

    Eigenvalues below `clip` are raised to `clip` before taking logs,
    which keeps logs of rank-deficient operators finite. Eigenvalues
    below -1e-8 mean the input was not PSD and are rejected.
    """
    if clip <= 0:
        raise ValueError(f"clip must be positive, got {clip}")
    evals, V = hermitian_eigendecompose(A)
    if evals[0] < -1e-8:
        raise ValueError(f"matrix has negative eigenvalue {evals[0]:.3e}, not PSD")
    logs = np.log(np.maximum(evals, clip))
    return hermitize((V * logs) @ V.conj().T)


def frechet_exp_neg(H: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Directional derivative of H -> e^{-H} along E.

    Computed in the eigenbasis of H via divided differences of
    x -> e^{-x}: entry (i, j) of the rotated E is scaled by
    (e^{-a} - e^{-b}) / (a - b) for eigenvalue pair (a, b), with the
    confluent limit -e^{-(a+b)/2} used when |a - b| < 1e-8.
    """
    evals, V = hermitian_eigendecompose(H)
    E = _require_hermitian(E, "direction")
    if E.shape != V.shape:
        raise ValueError(f"direction shape {E.shape} does not match {V.shape}")
    a = evals[:, None]
    b = evals[None, :]
    diff = a - b
    near = np.abs(diff) < 1e-8
    kernel = np.where(
        near,
        -np.exp(-(a + b) / 2.0),
        (np.exp(-a) - np.exp(-b)) / np.where(near, 1.0, diff),
    )
    rotated = V.conj().T @ E @ V
    return V @ (rotated * kernel) @ V.conj().T


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Entropy -Tr[rho log rho] in nats, with 0 log 0 = 0."""
    evals, _ = hermitian_eigendecompose(rho)
    p = evals[evals > 1e-18]
    return float(-np.sum(p * np.log(p)))


def relative_entropy(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Quantum relative entropy S(rho || sigma) = Tr[rho (log rho - log sigma)].

    Uses the convention 0 log 0 = 0 on rho's null space. sigma must be
    full rank: any eigenvalue below 1e-14 is a hard error, since the
    divergence is infinite (or numerically meaningless) there.
    """
    p, U = hermitian_eigendecompose(rho)
    q, W = hermitian_eigendecompose(sigma)
    if rho.shape != sigma.shape:
        raise ValueError(f"shape mismatch {rho.shape} vs {sigma.shape}")
    if q[0] < 1e-14:
        raise ValueError(f"sigma eigenvalue {q[0]:.3e} below 1e-14; S(rho||sigma) diverges")
    p = np.maximum(p, 0.0)
    support = p > 1e-18
    plogp = float(np.sum(p[support] * np.log(p[support])))
    # Tr[rho log sigma] = sum_j <w_j|rho|w_j> log q_j expanded over rho's eigenbasis
    overlap = np.abs(U.conj().T @ W) ** 2
    cross = float((p @ overlap) @ np.log(q))
    return plogp - cross


def distance(rho: np.ndarray, sigma: np.ndarray, kind: str = "trace") -> float:
    """Trace distance (half the trace norm of the difference) or Frobenius distance."""
    rho = _as_square_matrix(rho, "rho")
    sigma = _as_square_matrix(sigma, "sigma")
    if rho.shape != sigma.shape:
        raise ValueError(f"shape mismatch {rho.shape} vs {sigma.shape}")
    delta = rho - sigma
    if kind == "trace":
        evals, _ = hermitian_eigendecompose(delta)
        return float(np.abs(evals).sum() / 2.0)
    if kind == "frobenius":
        return float(np.linalg.norm(delta))
    raise ValueError(f"unknown distance kind {kind!r}; use 'trace' or 'frobenius'")


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kronecker product with the first factor on the leftmost (slowest) index."""
    A = np.asarray(A, dtype=np.complex128)
    B = np.asarray(B, dtype=np.complex128)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("kron expects two matrices")
    return np.kron(A, B)


def expectation_value(state: np.ndarray, observable: np.ndarray) -> float:
    """Re Tr[state @ observable] for a Hermitian observable."""
    return float(np.sum(state * observable.T).real)


def validate_density_matrix(rho: np.ndarray, name: str = "state") -> np.ndarray:
    """Check Hermiticity (1e-10), positivity (evals >= -1e-10) and unit trace (1e-10)."""
    rho = _as_square_matrix(rho, name)
    scale = max(1.0, float(np.linalg.norm(rho)))
    if np.linalg.norm(rho - rho.conj().T) > 1e-10 * scale:
        raise ValueError(f"{name} is not Hermitian within 1e-10")
    trace = complex(np.trace(rho))
    if abs(trace - 1.0) > 1e-10:
        raise ValueError(f"{name} trace {trace} differs from 1 beyond 1e-10")
    evals = np.linalg.eigvalsh(hermitize(rho))
    if evals[0] < -1e-10:
        raise ValueError(f"{name} has eigenvalue {evals[0]:.3e} below -1e-10")
    return rho
