"""Metric-aware latent sampling: overdraw, log-det scoring, softmax selection.

The loop: encode a data batch to posteriors, overdraw jittered candidates
z = mu + jitter * sigma (.) eps with eps ~ CN(0, I), score each candidate by
the (clamped, optionally mean-normalized) metric log-det

    w_j = -alpha * ell_j^2 - lambda * ||z_j||^2,

turn scores into probabilities with a temperature softmax after subtracting
the batch mean, and keep ``count`` indices drawn from the multinomial without
replacement.  With alpha = lambda = 0 the probabilities are uniform and the
procedure reduces to plain posterior sampling with jitter - that is the
baseline arm of the outlier experiments, run through the same code path.

"Accumulated mean" normalization subtracts a running mean of ell maintained
across all batches seen so far (state supplied by the caller); it exists
because the reference protocol runs one dataset without normalization and the
other with it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cvae, kahler
from .errors import ClampRateExceeded, InsufficientCandidates, InsufficientSupport

MAX_CLAMP_FRACTION = 0.05


@dataclass(frozen=True)
class SamplerConfig:
    overdraw: float = 4.0
    alpha: float = 0.0
    lam: float = 0.0
    temperature: float = 1.0
    jitter: float = 1.0
    normalize_mode: str = "none"  # or "accumulated-mean"
    logdet_mode: str = "diagonal"  # or "full"

    def __post_init__(self):
        if self.overdraw < 1:
            raise ValueError("overdraw factor must be >= 1")
        if self.alpha < 0 or self.lam < 0:
            raise ValueError("alpha and lambda must be nonnegative")
        if self.temperature <= 0 or self.jitter <= 0:
            raise ValueError("temperature and jitter must be positive")
        if self.normalize_mode not in ("none", "accumulated-mean"):
            raise ValueError("normalize_mode must be 'none' or 'accumulated-mean'")
        if self.logdet_mode not in ("diagonal", "full"):
            raise ValueError("logdet_mode must be 'diagonal' or 'full'")


@dataclass
class RunningMean:
    """Accumulated mean of log-det scores across sampler batches."""

    count: int = 0
    mean: float = 0.0

    def update(self, values: np.ndarray) -> float:
        values = np.asarray(values, dtype=float)
        total = self.mean * self.count + float(values.sum())
        self.count += values.size
        self.mean = total / self.count if self.count else 0.0
        return self.mean


@dataclass(frozen=True)
class SampleBatch:
    candidates: np.ndarray  # (M, d) complex latent points
    logdets: np.ndarray  # (M,) raw clamped log-dets
    scores: np.ndarray  # (M,) w_j
    probs: np.ndarray  # (M,) softmax((w - mean w)/temperature)
    selected: np.ndarray  # (count,) distinct indices into candidates

    @property
    def selected_latents(self) -> np.ndarray:
        return self.candidates[self.selected]


def softmax_scores(scores: np.ndarray, temperature: float) -> np.ndarray:
    """softmax((w - mean w)/temperature); shift-invariant and overflow safe."""
    scores = np.asarray(scores, dtype=float)
    logits = (scores - scores.mean()) / temperature
    logits -= logits.max()
    e = np.exp(logits)
    return e / e.sum()


def multinomial_without_replacement(
    probs: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """k distinct indices by sequential draw-and-renormalize."""
    probs = np.asarray(probs, dtype=float).copy()
    support = int(np.sum(probs > 0))
    if k > support:
        raise InsufficientSupport(f"need {k} draws from support of size {support}")
    out = np.empty(k, dtype=int)
    for j in range(k):
        p = probs / probs.sum()
        pick = int(rng.choice(probs.size, p=p))
        out[j] = pick
        probs[pick] = 0.0
    return out


def score_candidates(
    atlas: kahler.LatentAtlas,
    zs: np.ndarray,
    cfg: SamplerConfig,
    state: RunningMean | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(log-dets after normalization policy, scores w_j) for candidate latents.

    Raises ClampRateExceeded if more than 5% of the batch hit the log-det
    clamp bounds: a clamped score carries no ranking information, so a batch
    dominated by clamps would silently degrade to noise.
    """
    zs = np.atleast_2d(np.asarray(zs, dtype=complex))
    ell, clamped = kahler.log_det_metric_batch(atlas, zs, mode=cfg.logdet_mode)
    frac = float(clamped.mean())
    if frac > MAX_CLAMP_FRACTION:
        raise ClampRateExceeded(
            f"{frac:.1%} of candidates hit the log-det clamp (allowed "
            f"{MAX_CLAMP_FRACTION:.0%})"
        )
    if cfg.normalize_mode == "accumulated-mean":
        if state is None:
            state = RunningMean()
        mean = state.update(ell)
        ell_norm = ell - mean
    else:
        ell_norm = ell
    norms = np.sum(np.abs(zs) ** 2, axis=1)
    scores = -cfg.alpha * ell_norm**2 - cfg.lam * norms
    return ell, scores


def metric_sample(
    model: cvae.CVaeModel,
    atlas: kahler.LatentAtlas,
    data_batch: np.ndarray,
    cfg: SamplerConfig,
    count: int,
    rng: np.random.Generator,
    state: RunningMean | None = None,
) -> SampleBatch:
    """Overdraw jittered posterior candidates and keep a metric-scored subset."""
    data_batch = np.atleast_2d(np.asarray(data_batch, dtype=float))
    n_cand = int(np.ceil(cfg.overdraw * count))
    if n_cand < count:
        raise InsufficientCandidates(f"{n_cand} candidates for {count} draws")
    rows = data_batch[rng.integers(0, data_batch.shape[0], size=n_cand)]
    mu, sigma, _ = cvae.encode_batch(model, rows)
    eps = (
        rng.standard_normal(mu.shape) + 1j * rng.standard_normal(mu.shape)
    ) / np.sqrt(2.0)
    zs = mu + cfg.jitter * sigma * eps
    ell, scores = score_candidates(atlas, zs, cfg, state)
    probs = softmax_scores(scores, cfg.temperature)
    selected = multinomial_without_replacement(probs, count, rng)
    return SampleBatch(
        candidates=zs, logdets=ell, scores=scores, probs=probs, selected=selected
    )


def volume_density(
    atlas: kahler.LatentAtlas | None,
    grid: np.ndarray,
    metric_fn=None,
    logdet_mode: str = "full",
) -> np.ndarray:
    """det h at each grid node, normalized to sum 1 (Riemann-sum surrogate).

    ``metric_fn(z) -> Hermitian matrix`` overrides the mixture metric so
    planted analytic metrics can be pushed through the same normalization.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=complex))
    dets = np.empty(grid.shape[0])
    if metric_fn is not None:
        for j, z in enumerate(grid):
            m = np.atleast_2d(np.asarray(metric_fn(z)))
            dets[j] = max(float(np.real(np.linalg.det(m))), 0.0)
    else:
        ell, _ = kahler.log_det_metric_batch(atlas, grid, mode=logdet_mode)
        dets = np.exp(ell)
    total = dets.sum()
    if total <= 0:
        raise ValueError("volume element vanished on the whole grid")
    return dets / total
