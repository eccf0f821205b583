"""Exact complex-Gaussian Fisher metric plus its two independent oracles.

For a likelihood x|z ~ CN(mu(z), Sigma(z)) with diagonal Sigma and circular
noise, writing A = d mu/dz and B = d mu/dzbar for the two Wirtinger blocks of
the mean Jacobian, the Fisher information Hermitian metric is

    h = conj(A^dag Sigma^-1 A) + B^dag Sigma^-1 B + T,
    T[a, b] = Tr(Sigma^-1 (d_a Sigma) Sigma^-1 (d_bbar Sigma)),

derived by expanding E[d_a log p * d_bbar log p] with the circular moment
identities.  Two facts make this checkable without trusting the expansion:
h equals the Monte Carlo average of Wirtinger score outer products, and h
equals the mixed Hessian of KL(p(.|z) || p(.|z')) in z' at z' = z.  Both are
implemented below against the same model interface and agree with constant 1
(no hidden factor of 2; the identity decoder mu(z) = z, Sigma = I yields h = I,
while the real-valued mean map mu = A(z + zbar) + c yields 2 A^T Sigma^-1 A,
which is where the familiar "2 Re" form comes from).

Sigma(z) is differentiated by the same finite-difference machinery as mu(z);
there is no analytic shortcut for d Sigma.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from . import cgaussian
from .errors import NonFiniteEvaluation, NotPSD
from .linalg import frobenius, hermitian_part, min_eigenvalue
from .wirtinger import default_step, mixed_hessian_scalar, wirtinger_jacobian

PSD_REPORT_RTOL = 1e-8


class Provenance(str, Enum):
    EXACT_FISHER = "exact-fisher"
    KL_HESSIAN = "kl-hessian"
    MC_ESTIMATE = "mc-estimate"
    MIXTURE = "mixture"
    PROXY = "high-rank-proxy"
    DIAGONAL = "diagonal"


@dataclass(frozen=True)
class HermitianMetric:
    """A d x d Hermitian PSD matrix attached to a latent point.

    The Riemannian/Kahler split h = g - i omega is exposed as accessors.
    """

    matrix: np.ndarray
    provenance: Provenance
    at: np.ndarray

    @property
    def g(self) -> np.ndarray:
        return np.real(self.matrix)

    @property
    def omega(self) -> np.ndarray:
        return -np.imag(self.matrix)

    def min_eigenvalue(self) -> float:
        return min_eigenvalue(self.matrix)


@dataclass(frozen=True)
class DecoderStatModel:
    """Likelihood head x|z ~ CN(mean_map(z), diag(cov_map(z)))."""

    mean_map: Callable[[np.ndarray], np.ndarray]
    cov_map: Callable[[np.ndarray], np.ndarray]
    latent_dim: int
    data_dim: int

    def params_at(self, z: np.ndarray) -> cgaussian.ComplexGaussianParams:
        sigma = np.asarray(self.cov_map(z), dtype=float)
        if np.any(sigma <= 0):
            raise NonFiniteEvaluation("cov_map produced a nonpositive entry")
        return cgaussian.ComplexGaussianParams(
            mu=np.asarray(self.mean_map(z), dtype=complex), sigma=sigma
        )


def metric_terms(
    model: DecoderStatModel, z: np.ndarray, fd_step: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(mean term, covariance-derivative trace term) of the exact metric."""
    z = np.asarray(z, dtype=complex)
    jac_mu = wirtinger_jacobian(model.mean_map, z, fd_step)
    jac_sig = wirtinger_jacobian(lambda w: np.asarray(model.cov_map(w)), z, fd_step)
    sig = np.asarray(model.cov_map(z), dtype=float)
    inv = 1.0 / sig
    A, B = jac_mu.d_z, jac_mu.d_zbar
    mean_term = np.conj(A.conj().T @ (inv[:, None] * A)) + B.conj().T @ (
        inv[:, None] * B
    )
    # Tr(S^-1 d_a S S^-1 d_bbar S) with diagonal S: a weighted column product.
    Sz = inv[:, None] * jac_sig.d_z
    Szb = inv[:, None] * jac_sig.d_zbar
    trace_term = np.einsum("ka,kb->ab", Sz, Szb)
    return mean_term, trace_term


def exact_fisher_metric(
    model: DecoderStatModel, z: np.ndarray, fd_step: float | None = None
) -> HermitianMetric:
    mean_term, trace_term = metric_terms(model, z, fd_step)
    h = hermitian_part(mean_term + trace_term)
    if not np.all(np.isfinite(h)):
        raise NonFiniteEvaluation("exact metric assembly hit NaN/Inf")
    scale = max(frobenius(h), 1.0)
    lo = min_eigenvalue(h)
    if lo < -PSD_REPORT_RTOL * scale:
        raise NotPSD(f"exact Fisher metric has eigenvalue {lo:.3e} (scale {scale:.3e})")
    return HermitianMetric(matrix=h, provenance=Provenance.EXACT_FISHER, at=z)


def display_form_terms(
    model: DecoderStatModel, z: np.ndarray, fd_step: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(2 Re A^dag Sigma^-1 B, trace term): the textbook display of the metric.

    Coincides with ``metric_terms`` exactly when the mean map is real valued
    with a real Jacobian pair (B = A real), i.e. the image-decoder regime;
    tests for the analytic expectation+covariance identity use it as the
    closed-form side.
    """
    z = np.asarray(z, dtype=complex)
    jac_mu = wirtinger_jacobian(model.mean_map, z, fd_step)
    sig = np.asarray(model.cov_map(z), dtype=float)
    inv = 1.0 / sig
    cross = jac_mu.d_z.conj().T @ (inv[:, None] * jac_mu.d_zbar)
    _, trace_term = metric_terms(model, z, fd_step)
    return 2.0 * np.real(cross), trace_term


def score_batch(
    model: DecoderStatModel,
    z: np.ndarray,
    xs: np.ndarray,
    fd_step: float | None = None,
) -> np.ndarray:
    """Wirtinger scores d log p(x|z)/dz for a batch of draws, shape (m, d).

    Central differences of the log density in each latent coordinate; the
    density evaluations broadcast over the sample axis so the whole batch
    costs 4d parameter evaluations.
    """
    z = np.asarray(z, dtype=complex)
    h = default_step(z) if fd_step is None else float(fd_step)
    d = z.size
    scores = np.empty((xs.shape[0], d), dtype=complex)
    for a in range(d):
        ex = np.zeros(d, dtype=complex)
        ex[a] = h
        ey = np.zeros(d, dtype=complex)
        ey[a] = 1j * h
        fx = (
            cgaussian.log_density(model.params_at(z + ex), xs)
            - cgaussian.log_density(model.params_at(z - ex), xs)
        ) / (2 * h)
        fy = (
            cgaussian.log_density(model.params_at(z + ey), xs)
            - cgaussian.log_density(model.params_at(z - ey), xs)
        ) / (2 * h)
        scores[:, a] = 0.5 * (fx - 1j * fy)
    if not np.all(np.isfinite(scores)):
        raise NonFiniteEvaluation("score stencil hit NaN/Inf")
    return scores


def mc_fisher_estimate(
    model: DecoderStatModel,
    z: np.ndarray,
    samples: int,
    fd_step: float | None = None,
    rng: np.random.Generator | None = None,
) -> HermitianMetric:
    """h = E[d_a log p d_bbar log p] by Monte Carlo over x ~ CN(mu(z), Sigma(z))."""
    if samples <= 0:
        raise ValueError("mc_fisher_estimate needs a positive sample count")
    if rng is None:
        rng = np.random.default_rng(0)
    z = np.asarray(z, dtype=complex)
    xs = cgaussian.sample(model.params_at(z), samples, rng)
    s = score_batch(model, z, xs, fd_step)
    h = hermitian_part(np.einsum("ma,mb->ab", s, s.conj()) / samples)
    return HermitianMetric(matrix=h, provenance=Provenance.MC_ESTIMATE, at=z)


def kl_potential(model: DecoderStatModel, z_fixed: np.ndarray, z_var: np.ndarray) -> float:
    """KL(p(x|z_fixed) || p(x|z_var)): the relative-entropy potential in z_var."""
    return cgaussian.kl_complex_gaussian(
        model.params_at(np.asarray(z_fixed, dtype=complex)),
        model.params_at(np.asarray(z_var, dtype=complex)),
    )


def kl_hessian_metric(
    model: DecoderStatModel,
    z: np.ndarray,
    fd_step: float | None = None,
    differentiate: str = "second",
) -> HermitianMetric:
    """Mixed FD Hessian of the KL potential at coinciding arguments.

    ``differentiate="second"`` (default) varies z'; "first" varies the first
    argument instead and exists only to confirm the symmetry of the identity.
    """
    z = np.asarray(z, dtype=complex)
    if differentiate == "second":
        pot = lambda w: kl_potential(model, z, w)
    elif differentiate == "first":
        pot = lambda w: kl_potential(model, w, z)
    else:
        raise ValueError("differentiate must be 'second' or 'first'")
    step = fd_step if fd_step is not None else 1e-3 * (1.0 + float(np.max(np.abs(z))))
    h = mixed_hessian_scalar(pot, z, step)
    return HermitianMetric(matrix=h, provenance=Provenance.KL_HESSIAN, at=z)
