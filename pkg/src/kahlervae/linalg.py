"""Complex linear-algebra kernel: Hermitian checks, factorizations, log-dets.

Everything operates on plain ``numpy`` complex arrays.  A complex128 array is
already a pair of float64 planes, so the real-surrogate layout used by the
finite-difference calculus and the VAE costs nothing to obtain (``.view``).

Positive semi-definiteness is decided against a relative tolerance
``PSD_RTOL * scale`` because finite-difference noise downstream makes exact
zero tests brittle.
"""

from __future__ import annotations

import numpy as np

from .errors import NonHermitianInput, NotPD, NotPSD

# min eigenvalue >= -PSD_RTOL * ||S||_F counts as PSD
PSD_RTOL = 1e-10
HERMITIAN_RTOL = 1e-8


def frobenius(m: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(m)))


def hermitian_part(m: np.ndarray) -> np.ndarray:
    """(M + M^dagger)/2 - the projection used to absorb FD asymmetry."""
    m = np.asarray(m)
    return 0.5 * (m + m.conj().T)


def is_hermitian(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(frobenius(m), 1.0)
    return bool(np.max(np.abs(m - m.conj().T)) <= rtol * scale)


def require_hermitian(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if not is_hermitian(m, rtol):
        raise NonHermitianInput(
            f"matrix violates Hermitian symmetry beyond rtol={rtol}"
        )
    return m


def min_eigenvalue(s: np.ndarray) -> float:
    """Smallest (real) eigenvalue of a Hermitian matrix."""
    s = require_hermitian(s)
    return float(np.linalg.eigvalsh(hermitian_part(s))[0])


def is_psd(s: np.ndarray, rtol: float = PSD_RTOL) -> bool:
    s = np.asarray(s)
    scale = max(frobenius(s), 1.0)
    return min_eigenvalue(s) >= -rtol * scale


def hermitian_sqrt_factor(s: np.ndarray, rtol: float = PSD_RTOL) -> np.ndarray:
    """Factor Gamma with Gamma^dagger Gamma = S for PSD Hermitian S.

    Built from the eigendecomposition S = U diag(lam) U^dagger as
    Gamma = diag(sqrt(lam)) U^dagger; the factor is unique only up to a
    unitary on the left, so callers must compare Gamma^dagger Gamma, not Gamma.
    """
    s = require_hermitian(s)
    lam, u = np.linalg.eigh(hermitian_part(s))
    scale = max(frobenius(s), 1.0)
    if lam[0] < -rtol * scale:
        raise NotPSD(f"min eigenvalue {lam[0]:.3e} < -{rtol:.0e} * {scale:.3e}")
    lam = np.clip(lam, 0.0, None)
    return np.sqrt(lam)[:, None] * u.conj().T


def logdet_hermitian(s: np.ndarray) -> float:
    """log det of a positive-definite Hermitian matrix.

    Diagonal inputs take the exact fast path sum(log diag); dense inputs go
    through Cholesky.  Raises NotPD when any eigenvalue is <= 0.
    """
    s = np.asarray(s, dtype=complex)
    if s.ndim == 1:  # diagonal provided as a vector
        d = np.real(s)
        if np.any(d <= 0):
            raise NotPD("diagonal entry <= 0")
        return float(np.sum(np.log(d)))
    s = require_hermitian(s)
    diag = np.real(np.diag(s))
    if np.allclose(s, np.diag(diag), atol=1e-14 * max(frobenius(s), 1.0)):
        if np.any(diag <= 0):
            raise NotPD("diagonal entry <= 0")
        return float(np.sum(np.log(diag)))
    try:
        chol = np.linalg.cholesky(hermitian_part(s))
    except np.linalg.LinAlgError as exc:
        raise NotPD(f"Cholesky failed: {exc}") from exc
    return float(2.0 * np.sum(np.log(np.real(np.diag(chol)))))
