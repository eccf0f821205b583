"""Circular complex normal distribution with diagonal covariance.

Parameters are (mu, sigma, delta): complex mean, the positive diagonal of the
covariance Sigma = E[v v^dagger] (variance units), and the per-coordinate
relation parameter delta constrained |delta_k| < sigma_k.  All geometry
operations require delta = 0 (circular case), in which case the density is

    p(x) = exp(-(x-mu)^dagger Sigma^-1 (x-mu)) / (pi^n det Sigma),

i.e. no factor 1/2 in the exponent, unlike the real multivariate Gaussian.
The relation parameter exists only for the VAE head (KL to the standard prior
and the reparameterization path); enforcing delta = 0 at operation boundaries
avoids silent misuse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidRelation,
    RelationNotSupported,
    UnknownIdentity,
)


@dataclass(frozen=True)
class ComplexGaussianParams:
    mu: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray | None = None

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=complex)
        sigma = np.asarray(self.sigma, dtype=float)
        delta = (
            np.zeros_like(mu)
            if self.delta is None
            else np.asarray(self.delta, dtype=complex)
        )
        if not (mu.shape == sigma.shape == delta.shape):
            raise DimensionMismatch(
                f"mu/sigma/delta shapes differ: {mu.shape}, {sigma.shape}, {delta.shape}"
            )
        if np.any(sigma <= 0):
            raise InvalidRelation("sigma entries must be strictly positive")
        if np.any(np.abs(delta) >= sigma):
            raise InvalidRelation("|delta_k| must be < sigma_k")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "delta", delta)

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def is_circular(self) -> bool:
        return bool(np.all(self.delta == 0))

    def require_circular(self, op: str) -> None:
        if not self.is_circular:
            raise RelationNotSupported(f"{op} requires delta = 0")


def log_density(p: ComplexGaussianParams, x: np.ndarray) -> np.ndarray:
    """log p(x) for circular params; broadcasts over leading axes of x."""
    p.require_circular("log_density")
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] != p.dim:
        raise DimensionMismatch(f"x has dim {x.shape[-1]}, params have {p.dim}")
    v = x - p.mu
    quad = np.sum(np.abs(v) ** 2 / p.sigma, axis=-1)
    const = np.sum(np.log(p.sigma)) + p.dim * np.log(np.pi)
    out = -quad - const
    return out if out.ndim else float(out)


def sample(
    p: ComplexGaussianParams, count: int, rng: np.random.Generator
) -> np.ndarray:
    """(count, n) circular draws: E[v]=0, E[v v^dagger]=Sigma, E[v v^T]=0."""
    p.require_circular("sample")
    half = np.sqrt(p.sigma / 2.0)
    eps = rng.standard_normal((count, p.dim)) + 1j * rng.standard_normal(
        (count, p.dim)
    )
    return p.mu + half * eps


MOMENT_IDENTITIES = (
    "mean",  # E[v] = 0
    "covariance",  # E[v v^dagger] = Sigma
    "quadratic",  # E[v^dag M v] = Tr(M Sigma)
    "quartic",  # E[v^dag M v v^dag N v] = Tr(M S N S) + Tr(M S) Tr(N S)
    "sandwich",  # E[a^dag v v^dag M v v^dag b] = a^dag S M S b + (a^dag S b) Tr(M S)
    "bilinear",  # E[a^dag M v v^dag N b] = a^dag M S N b
)


@dataclass(frozen=True)
class MomentQuery:
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    a: np.ndarray | None = None
    b: np.ndarray | None = None


@dataclass(frozen=True)
class MomentComparison:
    identity: str
    closed_form: np.ndarray | complex
    estimate: np.ndarray | complex
    stderr: float
    n_samples: int

    def within(self, k_sigma: float = 3.0) -> bool:
        gap = np.max(np.abs(np.asarray(self.estimate) - np.asarray(self.closed_form)))
        return bool(gap <= k_sigma * self.stderr)


def _stderr(samples: np.ndarray) -> float:
    flat = samples.reshape(samples.shape[0], -1)
    var = np.var(flat.real, axis=0) + np.var(flat.imag, axis=0)
    return float(np.max(np.sqrt(var / samples.shape[0])))


def moment_oracle(
    p: ComplexGaussianParams,
    query: MomentQuery,
    which: str,
    mc_samples: int,
    rng: np.random.Generator,
) -> MomentComparison:
    """Closed form vs Monte Carlo for the circular-Gaussian moment identities.

    Returns both sides plus the MC standard error so tests can compare at a
    stated number of sigmas without re-deriving anything.
    """
    if which not in MOMENT_IDENTITIES:
        raise UnknownIdentity(f"unknown identity {which!r}; known: {MOMENT_IDENTITIES}")
    p.require_circular("moment_oracle")
    S = np.diag(p.sigma).astype(complex)
    v = sample(p, mc_samples, rng) - p.mu  # (m, n)

    if which == "mean":
        closed = np.zeros(p.dim, dtype=complex)
        per = v
    elif which == "covariance":
        closed = S
        per = np.einsum("mi,mj->mij", v, v.conj())
    elif which == "quadratic":
        M = np.asarray(query.A, dtype=complex)
        closed = np.trace(M @ S)
        per = np.einsum("mi,ij,mj->m", v.conj(), M, v)
    elif which == "quartic":
        M = np.asarray(query.A, dtype=complex)
        N = np.asarray(query.B, dtype=complex)
        closed = np.trace(M @ S @ N @ S) + np.trace(M @ S) * np.trace(N @ S)
        qm = np.einsum("mi,ij,mj->m", v.conj(), M, v)
        qn = np.einsum("mi,ij,mj->m", v.conj(), N, v)
        per = qm * qn
    elif which == "sandwich":
        M = np.asarray(query.A, dtype=complex)
        a = np.asarray(query.a, dtype=complex)
        b = np.asarray(query.b, dtype=complex)
        closed = a.conj() @ S @ M @ S @ b + (a.conj() @ S @ b) * np.trace(M @ S)
        av = v @ a.conj()  # a^dag v per sample
        vb = v.conj() @ b  # v^dag b per sample
        qm = np.einsum("mi,ij,mj->m", v.conj(), M, v)
        per = av * qm * vb
    else:  # bilinear
        M = np.asarray(query.A, dtype=complex)
        N = np.asarray(query.B, dtype=complex)
        a = np.asarray(query.a, dtype=complex)
        b = np.asarray(query.b, dtype=complex)
        closed = a.conj() @ M @ S @ N @ b
        aMv = v @ (a.conj() @ M)
        vNb = v.conj() @ (N @ b)
        per = aMv * vNb

    per = np.asarray(per)
    estimate = per.mean(axis=0)
    return MomentComparison(
        identity=which,
        closed_form=closed,
        estimate=estimate,
        stderr=_stderr(per.reshape(mc_samples, -1)),
        n_samples=mc_samples,
    )


def kl_complex_gaussian(p: ComplexGaussianParams, q: ComplexGaussianParams) -> float:
    """KL(p || q) for circular diagonal complex Gaussians.

    sum_k [ s_k / t_k + |mu_k - nu_k|^2 / t_k - 1 + ln(t_k / s_k) ]
    with s = diag Sigma_p, t = diag Sigma_q.  Nonnegative, zero iff p = q.
    """
    p.require_circular("kl_complex_gaussian")
    q.require_circular("kl_complex_gaussian")
    if p.dim != q.dim:
        raise DimensionMismatch(f"dims differ: {p.dim} vs {q.dim}")
    ratio = p.sigma / q.sigma
    mean_term = np.abs(p.mu - q.mu) ** 2 / q.sigma
    return float(np.sum(ratio + mean_term - 1.0 - np.log(ratio)))


def kl_to_standard_prior(p: ComplexGaussianParams) -> float:
    """mu^dag mu + || sigma - 1 - log sqrt(sigma^2 - |delta|^2) ||_1 (VAE head form)."""
    inner = p.sigma - 1.0 - 0.5 * np.log(p.sigma**2 - np.abs(p.delta) ** 2)
    return float(np.real(np.vdot(p.mu, p.mu)) + np.sum(np.abs(inner)))


def reparameterization_coefficients(
    p: ComplexGaussianParams,
) -> tuple[np.ndarray, np.ndarray]:
    """(psi_re, psi_im) with psi_im = (sigma+delta)/(2 sigma + 2 Re delta) and
    psi_re = i sqrt(sigma^2 - |delta|^2) / (2 sigma + 2 Re delta), verbatim."""
    denom = 2.0 * p.sigma + 2.0 * np.real(p.delta)
    psi_im = (p.sigma + p.delta) / denom
    psi_re = 1j * np.sqrt(p.sigma**2 - np.abs(p.delta) ** 2) / denom
    return psi_re, psi_im


def reparameterize(
    p: ComplexGaussianParams, eps_re: np.ndarray, eps_im: np.ndarray
) -> np.ndarray:
    """mu + psi_re * eps_re + psi_im * eps_im; deterministic in its inputs.

    The noise vectors are standard normal draws supplied by the caller; only
    mean correctness and linearity in (eps_re, eps_im) are contractual - the
    induced second moments are not pinned down.
    """
    eps_re = np.asarray(eps_re, dtype=float)
    eps_im = np.asarray(eps_im, dtype=float)
    if eps_re.shape[-1] != p.dim or eps_im.shape[-1] != p.dim:
        raise DimensionMismatch("noise dimension must match parameter dimension")
    psi_re, psi_im = reparameterization_coefficients(p)
    return p.mu + psi_re * eps_re + psi_im * eps_im
