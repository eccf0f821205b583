"""Mixture potential over decoded latent points and its induced Hermitian metric.

An atlas is a stored collection {a_i, mu_i, Sigma_i} of previously decoded
points in data space with mixing weights a_i and a temperature rho.  With
Psi_i(z) = (x(z)-mu_i)^dagger Sigma_i^-1 (x(z)-mu_i), the scalar potential is
the Gaussian-mixture log likelihood

    K(z) = rho^2 * log sum_i a_i exp(-Psi_i(z)/rho^2),

evaluated in log-sum-exp form, with softmax responsibilities
w_i = softmax(log a_i - Psi_i/rho^2).  The metric attached to z is

    h = E_w[dd-bar Psi] + (1/rho^2) Cov_w(d Psi, d-bar Psi),

a sum of two PSD terms, hence PSD for every atlas and every z.  Note the
exact softmax-Hessian identity for K runs with the opposite sign on the
expectation term:

    dd-bar K = -E_w[dd-bar Psi] + (1/rho^2) Cov_w(d Psi, d-bar Psi),

exposed as ``MixtureMetricReport.potential_mixed_hessian`` and verified by
finite differences in the tests.  The PSD combination above is the one that
matches the Fisher metric in the saturated-weights regime (w_i -> 1 for the
component nearest to x(z)) and is the object every sampler and experiment
consumes.

All per-component derivatives reuse one Wirtinger Jacobian of the decoder at
z - the v_i differ only by constant shifts - so a metric evaluation costs one
finite-difference pass plus O(N d n) arithmetic, with no nearest-neighbour
search.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from . import cgaussian
from . import fisher as fisher_mod
from .errors import (
    DegenerateFit,
    EmptyAtlas,
    EmptyDirections,
    IndexOutOfRange,
    NonFiniteEvaluation,
    NotPD,
)
from .fisher import DecoderStatModel, HermitianMetric, Provenance
from .linalg import frobenius, hermitian_part, min_eigenvalue
from .wirtinger import batch_wirtinger_jacobian, mixed_hessian_scalar

BatchMap = Callable[[np.ndarray], np.ndarray]

DEFAULT_GAMMA_FLOOR = 1e-6
LOGDET_CLAMP = (-40.0, 40.0)


def vectorize_decoder(f_single: Callable[[np.ndarray], np.ndarray]) -> BatchMap:
    """Adapt a single-point map C^d -> C^n to the (m, d) -> (m, n) convention."""

    def f_batch(zs: np.ndarray) -> np.ndarray:
        zs = np.atleast_2d(zs)
        return np.stack([np.asarray(f_single(z)) for z in zs])

    return f_batch


@dataclass(frozen=True)
class LatentAtlas:
    """Mixture components over decoder outputs plus the decoder itself.

    ``decoder`` must accept an (m, d) batch of latent points and return an
    (m, n) batch; it is treated as immutable and reentrant.
    """

    weights_a: np.ndarray  # (N,) positive, sums to 1
    mus: np.ndarray  # (N, n) complex, data space
    sigmas: np.ndarray  # (N, n) positive diagonal covariances
    rho: float
    decoder: BatchMap | None
    latent_dim: int

    def __post_init__(self):
        a = np.asarray(self.weights_a, dtype=float)
        mus = np.atleast_2d(np.asarray(self.mus, dtype=complex))
        sig = np.atleast_2d(np.asarray(self.sigmas, dtype=float))
        if a.size == 0:
            raise EmptyAtlas("atlas needs at least one component")
        if not (a.shape[0] == mus.shape[0] == sig.shape[0]):
            raise ValueError("component counts disagree across a/mu/sigma")
        if mus.shape != sig.shape:
            raise ValueError("mu and sigma shapes disagree")
        if np.any(a <= 0) or abs(a.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(sig < DEFAULT_GAMMA_FLOOR):
            raise ValueError(
                f"sigma entries must be >= {DEFAULT_GAMMA_FLOOR} (variance floor)"
            )
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        object.__setattr__(self, "weights_a", a)
        object.__setattr__(self, "mus", mus)
        object.__setattr__(self, "sigmas", sig)

    @property
    def n_components(self) -> int:
        return self.weights_a.size

    @property
    def data_dim(self) -> int:
        return self.mus.shape[1]

    def decode(self, zs: np.ndarray) -> np.ndarray:
        if self.decoder is None:
            raise EmptyAtlas("atlas has no decoder attached")
        return np.asarray(self.decoder(np.atleast_2d(np.asarray(zs, dtype=complex))))

    def with_decoder(self, decoder: BatchMap) -> "LatentAtlas":
        return LatentAtlas(
            self.weights_a, self.mus, self.sigmas, self.rho, decoder, self.latent_dim
        )


def median_rho(mus: np.ndarray, sigmas: np.ndarray) -> float:
    """Median of pairwise sqrt(Psi) between components (median heuristic)."""
    mus = np.atleast_2d(np.asarray(mus, dtype=complex))
    sigmas = np.atleast_2d(np.asarray(sigmas, dtype=float))
    n = mus.shape[0]
    if n < 2:
        return 1.0
    vals = []
    for j in range(n):
        diff = np.abs(mus - mus[j]) ** 2 / sigmas[j]
        psi = diff.sum(axis=1)
        vals.extend(np.sqrt(psi[np.arange(n) != j]))
    med = float(np.median(vals))
    return med if med > 0 else 1.0


def build_atlas(
    mus: np.ndarray,
    sigmas: np.ndarray,
    decoder: BatchMap | None,
    latent_dim: int,
    weights_a: np.ndarray | None = None,
    rho: float | None = None,
    gamma_floor: float = DEFAULT_GAMMA_FLOOR,
) -> LatentAtlas:
    """Normalizing constructor: uniform weights and the median-rho default."""
    mus = np.atleast_2d(np.asarray(mus, dtype=complex))
    sigmas = np.clip(np.atleast_2d(np.asarray(sigmas, dtype=float)), gamma_floor, None)
    n = mus.shape[0]
    a = (
        np.full(n, 1.0 / n)
        if weights_a is None
        else np.asarray(weights_a, dtype=float) / np.sum(weights_a)
    )
    r = median_rho(mus, sigmas) if rho is None else float(rho)
    return LatentAtlas(a, mus, sigmas, r, decoder, latent_dim)


# ---------------------------------------------------------------------------
# potential / weights
# ---------------------------------------------------------------------------


def quadforms_from_outputs(atlas: LatentAtlas, xs: np.ndarray) -> np.ndarray:
    """Psi_i for decoded outputs: (m, n) -> (m, N)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=complex))
    diff = xs[:, None, :] - atlas.mus[None, :, :]
    return np.einsum("min,in->mi", np.abs(diff) ** 2, 1.0 / atlas.sigmas).real


def quad_form(atlas: LatentAtlas, i: int, z: np.ndarray) -> float:
    if not 0 <= i < atlas.n_components:
        raise IndexOutOfRange(f"component {i} of {atlas.n_components}")
    x = atlas.decode(z)[0]
    v = x - atlas.mus[i]
    return float(np.sum(np.abs(v) ** 2 / atlas.sigmas[i]))


def component_quadforms(atlas: LatentAtlas, z: np.ndarray) -> np.ndarray:
    return quadforms_from_outputs(atlas, atlas.decode(z))[0]


def _log_scores(atlas: LatentAtlas, psis: np.ndarray) -> np.ndarray:
    return np.log(atlas.weights_a) - psis / atlas.rho**2


def potential(atlas: LatentAtlas, z: np.ndarray) -> float:
    """rho^2 * LSE_i(log a_i - Psi_i / rho^2); overflow safe."""
    psis = component_quadforms(atlas, z)
    return float(atlas.rho**2 * logsumexp(_log_scores(atlas, psis)))


def weights(atlas: LatentAtlas, z: np.ndarray) -> np.ndarray:
    """Softmax responsibilities; nonnegative, sum to 1."""
    psis = component_quadforms(atlas, z)
    return softmax(_log_scores(atlas, psis))


# ---------------------------------------------------------------------------
# metric
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureMetricReport:
    metric: HermitianMetric
    weights: np.ndarray
    expectation_term: np.ndarray
    covariance_term: np.ndarray
    rho: float

    def potential_mixed_hessian(self) -> np.ndarray:
        """Exact dd-bar of the log-mixture potential (softmax-Hessian identity)."""
        return -self.expectation_term + self.covariance_term / self.rho**2


def _component_derivatives(
    atlas: LatentAtlas, z: np.ndarray, fd_step: float | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Shared-Jacobian assembly: (psis, w, grads (N, d), hessians (N, d, d))."""
    z = np.asarray(z, dtype=complex)
    if atlas.decoder is None:
        raise EmptyAtlas("metric evaluation needs a decoder")
    d_z, d_zbar, _ = batch_wirtinger_jacobian(atlas.decoder, z[None, :], fd_step)
    A, B = d_z[0], d_zbar[0]  # (n, d) each
    x = atlas.decode(z)[0]
    v = x[None, :] - atlas.mus  # (N, n)
    t = 1.0 / atlas.sigmas  # (N, n)
    psis = np.einsum("in,in->i", np.abs(v) ** 2, t).real
    w = softmax(_log_scores(atlas, psis))
    # d_a Psi_i = B_a^dag (t v)_i + (t conj(v))_i . A_a
    grads = np.einsum("ka,ik->ia", B.conj(), t * v) + np.einsum(
        "ka,ik->ia", A, t * v.conj()
    )
    # dd-bar Psi_i = conj(A^dag t_i A) + B^dag t_i B
    hess = np.einsum("ka,ik,kb->iab", A, t, A.conj()) + np.einsum(
        "ka,ik,kb->iab", B.conj(), t, B
    )
    return psis, w, grads, hess


def mixture_metric(
    atlas: LatentAtlas, z: np.ndarray, fd_step: float | None = None
) -> MixtureMetricReport:
    """Expectation + covariance metric at z, with the full report of its parts."""
    z = np.asarray(z, dtype=complex)
    _, w, grads, hess = _component_derivatives(atlas, z, fd_step)
    expectation = np.einsum("i,iab->ab", w, hess)
    mean_grad = w @ grads
    cov = np.einsum("i,ia,ib->ab", w, grads, grads.conj()) - np.outer(
        mean_grad, mean_grad.conj()
    )
    expectation = hermitian_part(expectation)
    cov = hermitian_part(cov)
    h = expectation + cov / atlas.rho**2
    if not np.all(np.isfinite(h)):
        raise NonFiniteEvaluation("mixture metric assembly hit NaN/Inf")
    metric = HermitianMetric(matrix=h, provenance=Provenance.MIXTURE, at=z)
    return MixtureMetricReport(
        metric=metric,
        weights=w,
        expectation_term=expectation,
        covariance_term=cov,
        rho=atlas.rho,
    )


@dataclass(frozen=True)
class ScoringArrays:
    """Per-atlas arrays reused across batched metric evaluations."""

    t: np.ndarray  # (N, n) inverse diagonal covariances
    tmus: np.ndarray  # t * mus
    q0: np.ndarray  # (N,) sum_n t |mus|^2
    log_a: np.ndarray  # (N,)


def scoring_arrays(atlas: LatentAtlas) -> ScoringArrays:
    t = 1.0 / atlas.sigmas
    return ScoringArrays(
        t=t,
        tmus=t * atlas.mus,
        q0=np.einsum("in,in->i", t, np.abs(atlas.mus) ** 2).real,
        log_a=np.log(atlas.weights_a),
    )


def expanded_quadforms(arrays: ScoringArrays, xs: np.ndarray) -> np.ndarray:
    """Psi in matmul form: |x|^2 t^T - 2 Re(conj(x) (t mu)^T) + q0, clipped >= 0."""
    xs = np.atleast_2d(np.asarray(xs, dtype=complex))
    psis = (
        np.abs(xs) ** 2 @ arrays.t.T
        - 2.0 * np.real(xs.conj() @ arrays.tmus.T)
        + arrays.q0[None, :]
    )
    return np.maximum(psis, 0.0)


def responsibilities(
    atlas: LatentAtlas, arrays: ScoringArrays, xs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    psis = expanded_quadforms(arrays, xs)
    w = softmax(arrays.log_a[None, :] - psis / atlas.rho**2, axis=1)
    return psis, w


def metric_diag_batch(
    atlas: LatentAtlas, zs: np.ndarray, fd_step: float | None = None
) -> np.ndarray:
    """Diagonal metric entries for a batch of latents, shape (m, d); real >= 0.

    One stacked decoder pass for all Jacobians, then matmul-shaped
    contractions against the atlas (no (m, N, n) temporaries); this is the
    fast path behind diagonal log-det scoring.
    """
    zs = np.atleast_2d(np.asarray(zs, dtype=complex))
    if atlas.decoder is None:
        raise EmptyAtlas("metric evaluation needs a decoder")
    d_z, d_zbar, _ = batch_wirtinger_jacobian(atlas.decoder, zs, fd_step)  # (m,n,d)
    xs = atlas.decode(zs)  # (m, n)
    arrays = scoring_arrays(atlas)
    _, w = responsibilities(atlas, arrays, xs)
    t = arrays.t
    # diag dd-bar Psi_i = sum_k t_ik (|A_ka|^2 + |B_ka|^2)
    jac_sq = np.abs(d_z) ** 2 + np.abs(d_zbar) ** 2  # (m, n, d)
    hd = np.einsum("mnd,in->mid", jac_sq, t, optimize=True)
    exp_diag = np.einsum("mi,mid->md", w, hd)
    # d_a Psi_i split into x-dependent and component-constant contractions;
    # the conj(mu) contraction reuses tmus via A @ conj(tmus)^T = conj(conj(A) @ tmus^T)
    bj = d_zbar.conj()
    g = (
        np.einsum("mnd,in->mid", bj * xs[:, :, None] + d_z * xs.conj()[:, :, None], t, optimize=True)
        - np.einsum("mnd,in->mid", bj, arrays.tmus, optimize=True)
        - np.conj(np.einsum("mnd,in->mid", d_z.conj(), arrays.tmus, optimize=True))
    )
    gmean = np.einsum("mi,mid->md", w, g)
    cov_diag = np.einsum("mi,mid->md", w, np.abs(g) ** 2) - np.abs(gmean) ** 2
    diag = exp_diag + cov_diag / atlas.rho**2
    return np.maximum(diag.real, 0.0)


def log_det_metric_batch(
    atlas: LatentAtlas,
    zs: np.ndarray,
    mode: str = "diagonal",
    fd_step: float | None = None,
    clamp: tuple[float, float] = LOGDET_CLAMP,
) -> tuple[np.ndarray, np.ndarray]:
    """(log-det values, clamp mask) for a batch of latent points.

    Diagonal mode sums logs of the (real, nonnegative) diagonal entries; full
    mode assembles the whole metric per point.  Values land in ``clamp``; the
    mask records which candidates hit a bound so callers can enforce a clamp
    budget instead of silently flattening scores.
    """
    zs = np.atleast_2d(np.asarray(zs, dtype=complex))
    if mode == "diagonal":
        diag = metric_diag_batch(atlas, zs, fd_step)
        with np.errstate(divide="ignore"):
            vals = np.sum(np.log(diag), axis=1)
    elif mode == "full":
        vals = np.empty(zs.shape[0])
        for j, z in enumerate(zs):
            h = mixture_metric(atlas, z, fd_step).metric.matrix
            eig = np.linalg.eigvalsh(h)
            with np.errstate(divide="ignore"):
                vals[j] = np.sum(np.log(np.maximum(eig, 0.0)))
    else:
        raise ValueError("mode must be 'diagonal' or 'full'")
    vals = np.nan_to_num(vals, nan=clamp[0], posinf=clamp[1], neginf=clamp[0])
    clipped = np.clip(vals, clamp[0], clamp[1])
    mask = clipped != vals
    return clipped, mask


def log_det_metric(
    atlas: LatentAtlas,
    z: np.ndarray,
    mode: str = "diagonal",
    fd_step: float | None = None,
    clamp: tuple[float, float] = LOGDET_CLAMP,
) -> float:
    vals, _ = log_det_metric_batch(
        atlas, np.asarray(z, dtype=complex)[None, :], mode, fd_step, clamp
    )
    return float(vals[0])


def _logdet_full_strict(atlas: LatentAtlas, z: np.ndarray, fd_step) -> float:
    h = mixture_metric(atlas, z, fd_step).metric.matrix
    eig = np.linalg.eigvalsh(h)
    if eig[0] <= 0:
        raise NotPD(f"mixture metric not PD at z (min eig {eig[0]:.3e})")
    return float(np.sum(np.log(eig)))


# ---------------------------------------------------------------------------
# certificates and diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PshCertificate:
    min_eigenvalue: float
    scale: float
    threshold: float
    passed: bool
    n_points: int


def psh_certificate(
    atlas: LatentAtlas | None,
    points: Sequence[np.ndarray],
    fd_step: float | None = None,
    metric_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    rtol: float = 1e-6,
) -> PshCertificate:
    """Min metric eigenvalue over points vs -rtol * (median metric scale).

    ``metric_fn`` overrides the mixture metric so degenerate or adversarial
    potentials can be fed through the same certificate (negative controls).
    """
    mats = []
    for z in points:
        if metric_fn is not None:
            mats.append(np.asarray(metric_fn(np.asarray(z, dtype=complex))))
        else:
            mats.append(mixture_metric(atlas, z, fd_step).metric.matrix)
    lows = [min_eigenvalue(m) for m in mats]
    scale = float(np.median([max(frobenius(m), 1e-30) for m in mats]))
    threshold = -rtol * scale
    low = float(min(lows))
    return PshCertificate(
        min_eigenvalue=low,
        scale=scale,
        threshold=threshold,
        passed=low >= threshold,
        n_points=len(mats),
    )


def high_rank_proxy(
    atlas: LatentAtlas,
    z: np.ndarray,
    directions: np.ndarray,
    fd_step: float | None = None,
) -> HermitianMetric:
    """(rho^2/K) sum_k g_k g_k^dagger with g_k = J_F^dagger v_k.

    F whitens the decoder residual against the responsibility-weighted mixture
    mean, F(z') = Sigma_w^-1/2 (x(z') - m(z')) with m(z') = sum_i w_i(z') mu_i;
    the whitening diagonal Sigma_w is frozen at the base point.  PSD by
    construction, rank <= K.
    """
    z = np.asarray(z, dtype=complex)
    directions = np.atleast_2d(np.asarray(directions, dtype=complex))
    if directions.size == 0:
        raise EmptyDirections("need at least one direction")
    w0 = weights(atlas, z)
    sigma_w = w0 @ atlas.sigmas  # (n,)
    white = 1.0 / np.sqrt(sigma_w)

    def F(zs: np.ndarray) -> np.ndarray:
        xs = atlas.decode(zs)
        psis = quadforms_from_outputs(atlas, xs)
        ws = softmax(
            np.log(atlas.weights_a)[None, :] - psis / atlas.rho**2, axis=1
        )
        m = ws @ atlas.mus
        return white[None, :] * (xs - m)

    d_z, _, _ = batch_wirtinger_jacobian(F, z[None, :], fd_step)
    jf = d_z[0]  # (n, d)
    gs = jf.conj().T @ directions.T  # (d, K)
    K = directions.shape[0]
    h = (atlas.rho**2 / K) * (gs @ gs.conj().T)
    return HermitianMetric(
        matrix=hermitian_part(h), provenance=Provenance.PROXY, at=z
    )


def ricci_from_logdet(
    logdet_fn: Callable[[np.ndarray], float], z: np.ndarray, step: float | None = None
) -> np.ndarray:
    """Ric[a, b] = -d^2 log det h / dz^a dzbar^b, Hermitian-symmetrized."""
    return -mixed_hessian_scalar(logdet_fn, np.asarray(z, dtype=complex), step)


def ricci_logdet(
    atlas: LatentAtlas, z: np.ndarray, fd_step: float | None = None
) -> np.ndarray:
    """Ricci form of the mixture metric from the unclamped full log-det."""
    z = np.asarray(z, dtype=complex)
    step = fd_step
    return ricci_from_logdet(
        lambda w: _logdet_full_strict(atlas, w, fd_step), z, step
    )


def theorem_linear_response_fit(
    atlas: LatentAtlas,
    points: Sequence[np.ndarray],
    fd_step: float | None = None,
) -> tuple[np.ndarray, float]:
    """Fit M in (d_a v)(z) ~ M Sigma^-1 v(z) over sampled points.

    v(z) = x(z) - m(z) is the residual against the weighted mixture mean and
    Sigma the responsibility-weighted diagonal at each point.  Returns the
    min-norm least-squares M and the mean cosine similarity between Jacobian
    columns and M Sigma^-1 v.  The regressors usually span only a subspace of
    data space (a decoder's image is low dimensional), which is fine for the
    cosine; DegenerateFit fires when there are fewer than two samples per
    independent regressor direction, where the fit would mostly interpolate.
    """
    if len(points) < 2:
        raise DegenerateFit("need at least two points")
    regressors, targets = [], []
    for z in points:
        z = np.asarray(z, dtype=complex)
        w = weights(atlas, z)
        m = w @ atlas.mus
        sigma_w = w @ atlas.sigmas

        def vmap(zs: np.ndarray) -> np.ndarray:
            xs = atlas.decode(zs)
            psis = quadforms_from_outputs(atlas, xs)
            ws = softmax(
                np.log(atlas.weights_a)[None, :] - psis / atlas.rho**2, axis=1
            )
            return xs - ws @ atlas.mus

        d_z, _, _ = batch_wirtinger_jacobian(vmap, z[None, :], fd_step)
        jv = d_z[0]  # (n, d)
        x = atlas.decode(z)[0]
        r = (x - m) / sigma_w
        for a in range(jv.shape[1]):
            regressors.append(r)
            targets.append(jv[:, a])
    R = np.stack(regressors)  # (T*d, n)
    Y = np.stack(targets)  # (T*d, n)
    rank = np.linalg.matrix_rank(R)
    if R.shape[0] < 2 * rank:
        raise DegenerateFit(
            f"{R.shape[0]} stacked samples for rank-{rank} regressors: "
            "the fit would interpolate rather than test the hypothesis"
        )
    Mt, *_ = np.linalg.lstsq(R, Y, rcond=None)
    M = Mt.T
    fitted = R @ M.T  # rows: M r_t
    num = np.real(np.sum(np.conj(Y) * fitted, axis=1))
    den = np.linalg.norm(Y, axis=1) * np.linalg.norm(fitted, axis=1)
    ok = den > 1e-30
    cosine = float(np.mean(num[ok] / den[ok])) if np.any(ok) else 0.0
    return M, cosine


def theorem3_diagnostic(
    atlas: LatentAtlas,
    points: Sequence[np.ndarray],
    fd_step: float | None = None,
) -> float:
    """Mean cosine similarity of the linear-response hypothesis (+1 is exact)."""
    _, cosine = theorem_linear_response_fit(atlas, points, fd_step)
    return cosine


# ---------------------------------------------------------------------------
# continuous-expectation identity oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpectationIdentityResult:
    lhs: np.ndarray
    rhs: np.ndarray
    rel_gap: float


def appendix_identity_oracle(
    model: DecoderStatModel,
    z: np.ndarray,
    mc_samples: int,
    fd_step: float | None = None,
    rho: float = 1.0,
    rng: np.random.Generator | None = None,
) -> ExpectationIdentityResult:
    """MC check that E[dd-bar Psi] + rho^-2 Cov(d Psi, d-bar Psi) is 2 rho^2 x Fisher.

    Psi(z; x) = -rho^2 log p(x|z) with x ~ CN(mu(z), Sigma(z)).  The closed
    form on the right is rho^2 (4 Re (d mu)^dag Sigma^-1 (d-bar mu)
    + 2 Tr(Sigma^-1 dSigma Sigma^-1 d-bar Sigma)), evaluated from the model's
    Wirtinger Jacobians; it is exact whenever the mean map is real valued with
    a real Jacobian pair, the regime of image decoders.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    z = np.asarray(z, dtype=complex)
    params = model.params_at(z)
    xs = cgaussian.sample(params, mc_samples, rng)

    # Expectation term: dd-bar commutes with the sample mean of Psi.
    def mean_psi(w: np.ndarray) -> float:
        p = model.params_at(w)
        quad = np.mean(np.sum(np.abs(xs - p.mu) ** 2 / p.sigma, axis=1))
        return float(rho**2 * (np.sum(np.log(p.sigma)) + quad))

    step = fd_step
    e_term = mixed_hessian_scalar(mean_psi, z, step)

    # Covariance term from per-draw gradients: d Psi = -rho^2 * score.
    grads = -(rho**2) * fisher_mod.score_batch(model, z, xs, fd_step)
    gmean = grads.mean(axis=0)
    cov = np.einsum("ma,mb->ab", grads, grads.conj()) / mc_samples - np.outer(
        gmean, gmean.conj()
    )
    lhs = hermitian_part(e_term + cov / rho**2)

    mean2re, trace_term = fisher_mod.display_form_terms(model, z, fd_step)
    rhs = rho**2 * (2.0 * mean2re + 2.0 * trace_term)
    rel = float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-30))
    return ExpectationIdentityResult(lhs=lhs, rhs=rhs, rel_gap=rel)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

ATLAS_MAGIC = b"KATL"
ATLAS_VERSION = 1


def atlas_to_bytes(atlas: LatentAtlas) -> bytes:
    """Flat little-endian record; complex arrays interleave re/im."""
    buf = io.BytesIO()
    buf.write(ATLAS_MAGIC)
    buf.write(
        struct.pack(
            "<IIII",
            ATLAS_VERSION,
            atlas.n_components,
            atlas.latent_dim,
            atlas.data_dim,
        )
    )
    buf.write(struct.pack("<d", atlas.rho))
    for i in range(atlas.n_components):
        buf.write(struct.pack("<d", float(atlas.weights_a[i])))
        inter = np.empty(2 * atlas.data_dim, dtype="<f8")
        inter[0::2] = atlas.mus[i].real
        inter[1::2] = atlas.mus[i].imag
        buf.write(inter.tobytes())
        buf.write(atlas.sigmas[i].astype("<f8").tobytes())
    return buf.getvalue()


def atlas_from_bytes(data: bytes, decoder: BatchMap | None = None) -> LatentAtlas:
    if data[:4] != ATLAS_MAGIC:
        raise ValueError(f"bad atlas magic {data[:4]!r}")
    version, n_comp, d, n = struct.unpack("<IIII", data[4:20])
    if version != ATLAS_VERSION:
        raise ValueError(f"unsupported atlas version {version}")
    (rho,) = struct.unpack("<d", data[20:28])
    off = 28
    a = np.empty(n_comp)
    mus = np.empty((n_comp, n), dtype=complex)
    sig = np.empty((n_comp, n))
    for i in range(n_comp):
        (a[i],) = struct.unpack("<d", data[off : off + 8])
        off += 8
        inter = np.frombuffer(data, dtype="<f8", count=2 * n, offset=off)
        mus[i] = inter[0::2] + 1j * inter[1::2]
        off += 16 * n
        sig[i] = np.frombuffer(data, dtype="<f8", count=n, offset=off)
        off += 8 * n
    return LatentAtlas(a, mus, sig, rho, decoder, d)


def save_atlas(atlas: LatentAtlas, path) -> None:
    with open(path, "wb") as fh:
        fh.write(atlas_to_bytes(atlas))


def load_atlas(path, decoder: BatchMap | None = None) -> LatentAtlas:
    with open(path, "rb") as fh:
        return atlas_from_bytes(fh.read(), decoder)


def atlas_to_text(atlas: LatentAtlas) -> str:
    """Human-readable companion export of the binary record."""
    lines = [
        f"atlas version={ATLAS_VERSION} components={atlas.n_components} "
        f"latent_dim={atlas.latent_dim} data_dim={atlas.data_dim} rho={atlas.rho!r}"
    ]
    for i in range(atlas.n_components):
        mu = " ".join(f"{c.real!r}{c.imag:+}j" for c in atlas.mus[i])
        sig = " ".join(repr(s) for s in atlas.sigmas[i])
        lines.append(f"component {i}: a={atlas.weights_a[i]!r}")
        lines.append(f"  mu: {mu}")
        lines.append(f"  sigma: {sig}")
    return "\n".join(lines) + "\n"
