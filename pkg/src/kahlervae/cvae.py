"""Small complex VAE on real surrogates with hand-rolled backpropagation.

Architecture: complex affine layers realized as 2x2 real blocks (the
C-linear constraint ties the four real blocks to one (W_re, W_im) pair) with
a split activation, tanh applied to real and imaginary parts separately.
This keeps the decoder smooth enough for Wirtinger finite differences while
training with plain real backprop on one shared parameterization.

Encoder head: f(x) -> (mu, sigma, delta) with sigma = exp(Re(log sigma^2)/2)
and delta = sigma * bound * (tanh r_re + i tanh r_im)/sqrt(2), so
|delta_k| < sigma_k holds by construction.  Decoder output is complex; the
real part is taken only against the (real) pixel data, and the mean imaginary
magnitude is tracked per epoch as the eps diagnostic.

Loss (per-batch means):

    total = reconstruction + beta * kl + gamma * geometric
    reconstruction = mean ||x - Re g(z~)||^2
    kl             = mean [ mu^dag mu + || sigma - 1 - log sqrt(sigma^2-|delta|^2) ||_1 ]
    geometric      = mean [ z~^dag z~ / 2 - log det h(z~) / 2 ]

The metric h comes from a frozen atlas snapshot refreshed every
``metric_refresh_every`` iterations; between refreshes the log-det term
contributes its stored average gradient (a constant vector in the latent
surrogate), while the z~^dag z~/2 part is differentiated live.  Optimizer is
plain momentum SGD: deterministic and dependency free, adequate at desk scale.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import kahler
from .cgaussian import ComplexGaussianParams
from .errors import DimensionMismatch, MissingAtlas, NonFiniteLoss
from .kahler import LatentAtlas

DELTA_BOUND = 0.95
_DELTA_SCALE = DELTA_BOUND / np.sqrt(2.0)
LOGVAR_CAP = 6.0  # half-log-variance soft bound: sigma stays in [e^-3, e^3]

LAYER_NAMES = ("enc0", "mu", "lv", "dr", "dec0", "dec1")


# ---------------------------------------------------------------------------
# configs and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 1.0
    gamma: float = 0.0
    metric_refresh_every: int = 50
    rho: float | None = None  # None -> median heuristic at refresh time
    alpha: float = 0.0
    lam: float = 0.0
    temperature: float = 1.0
    jitter: float = 1.0
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.02
    momentum: float = 0.9
    seed: int = 0
    atlas_size: int = 64
    atlas_sigma_mode: str = "fitted"  # or "unit"
    logdet_mode: str = "diagonal"

    def __post_init__(self):
        if self.beta < 0 or self.gamma < 0 or self.alpha < 0 or self.lam < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.metric_refresh_every < 1:
            raise ValueError("refresh interval must be >= 1")
        for name in ("temperature", "jitter", "learning_rate"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction: float
    kl: float
    geometric: float
    total: float


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    reconstruction: float
    kl: float
    geometric: float
    total: float
    eps_diag: float


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


@dataclass
class Affine:
    w_re: np.ndarray
    w_im: np.ndarray
    b_re: np.ndarray
    b_im: np.ndarray

    @classmethod
    def create(cls, k_in: int, k_out: int, scale: float, rng: np.random.Generator):
        s = scale / np.sqrt(max(k_in, 1))
        return cls(
            w_re=s * rng.standard_normal((k_out, k_in)),
            w_im=s * rng.standard_normal((k_out, k_in)),
            b_re=np.zeros(k_out),
            b_im=np.zeros(k_out),
        )

    def zero_like(self) -> "Affine":
        return Affine(
            np.zeros_like(self.w_re),
            np.zeros_like(self.w_im),
            np.zeros_like(self.b_re),
            np.zeros_like(self.b_im),
        )

    def arrays(self):
        return (self.w_re, self.w_im, self.b_re, self.b_im)


def _split(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = x.shape[-1] // 2
    return x[..., :k], x[..., k:]


def _join(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    return np.concatenate([re, im], axis=-1)


def _affine_fwd(p: Affine, x: np.ndarray) -> np.ndarray:
    xr, xi = _split(x)
    yr = xr @ p.w_re.T - xi @ p.w_im.T + p.b_re
    yi = xr @ p.w_im.T + xi @ p.w_re.T + p.b_im
    return _join(yr, yi)


def _affine_bwd(p: Affine, x: np.ndarray, dy: np.ndarray, g: Affine) -> np.ndarray:
    xr, xi = _split(x)
    dyr, dyi = _split(dy)
    g.w_re += dyr.T @ xr + dyi.T @ xi
    g.w_im += -dyr.T @ xi + dyi.T @ xr
    g.b_re += dyr.sum(axis=0)
    g.b_im += dyi.sum(axis=0)
    dxr = dyr @ p.w_re + dyi @ p.w_im
    dxi = -dyr @ p.w_im + dyi @ p.w_re
    return _join(dxr, dxi)


def _act_fwd(model: "CVaeModel", x: np.ndarray) -> np.ndarray:
    return np.tanh(x) if model.activation == "split-tanh" else x


def _act_bwd(model: "CVaeModel", y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (1.0 - y * y) if model.activation == "split-tanh" else dy


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


class CVaeModel:
    """Encoder (mu, sigma, delta) and complex decoder, one hidden layer each."""

    def __init__(
        self,
        data_dim: int,
        latent_dim: int,
        enc_hidden: int = 32,
        dec_hidden: int = 32,
        init_scale: float = 0.5,
        seed: int = 0,
        activation: str = "split-tanh",
    ):
        if activation not in ("split-tanh", "identity"):
            raise ValueError("activation must be 'split-tanh' or 'identity'")
        self.data_dim = data_dim
        self.latent_dim = latent_dim
        self.enc_hidden = enc_hidden
        self.dec_hidden = dec_hidden
        self.activation = activation
        rng = np.random.default_rng(seed)
        self.layers = {
            "enc0": Affine.create(data_dim, enc_hidden, init_scale, rng),
            "mu": Affine.create(enc_hidden, latent_dim, init_scale, rng),
            "lv": Affine.create(enc_hidden, latent_dim, init_scale, rng),
            "dr": Affine.create(enc_hidden, latent_dim, init_scale, rng),
            "dec0": Affine.create(latent_dim, dec_hidden, init_scale, rng),
            "dec1": Affine.create(dec_hidden, data_dim, init_scale, rng),
        }

    # ---- flat parameter view (checkpointing and FD gradient checks) ----

    def get_flat(self) -> np.ndarray:
        return np.concatenate(
            [a.ravel() for name in LAYER_NAMES for a in self.layers[name].arrays()]
        )

    def set_flat(self, flat: np.ndarray) -> None:
        off = 0
        for name in LAYER_NAMES:
            for a in self.layers[name].arrays():
                a[...] = flat[off : off + a.size].reshape(a.shape)
                off += a.size
        if off != flat.size:
            raise DimensionMismatch(f"flat vector has {flat.size} values, need {off}")

    def n_params(self) -> int:
        return sum(a.size for n in LAYER_NAMES for a in self.layers[n].arrays())

    def zero_grads(self) -> dict:
        return {name: self.layers[name].zero_like() for name in LAYER_NAMES}

    def copy(self) -> "CVaeModel":
        m = CVaeModel(
            self.data_dim,
            self.latent_dim,
            self.enc_hidden,
            self.dec_hidden,
            init_scale=0.0,
            activation=self.activation,
        )
        m.set_flat(self.get_flat())
        return m


def complexify(x: np.ndarray) -> np.ndarray:
    """Real pixel batch (m, n) -> surrogate (m, 2n) with zero imaginary part."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return _join(x, np.zeros_like(x))


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def _encode_batch(model: CVaeModel, xs: np.ndarray) -> dict:
    """Surrogate batch -> encoder caches + (mu, sigma, delta) head outputs."""
    a0 = _affine_fwd(model.layers["enc0"], xs)
    h = _act_fwd(model, a0)
    mu_s = _affine_fwd(model.layers["mu"], h)
    lv_s = _affine_fwd(model.layers["lv"], h)
    dr_s = _affine_fwd(model.layers["dr"], h)
    d = model.latent_dim
    # sigma = exp(Re(log sigma^2)/2) with the raw head softly bounded so the
    # exponential cannot run away during training (identity near zero)
    lv_b = LOGVAR_CAP * np.tanh(lv_s[:, :d] / LOGVAR_CAP)
    sigma = np.exp(0.5 * lv_b)
    t_re = np.tanh(dr_s[:, :d])
    t_im = np.tanh(dr_s[:, d:])
    delta_re = sigma * _DELTA_SCALE * t_re
    delta_im = sigma * _DELTA_SCALE * t_im
    return {
        "x": xs,
        "h": h,
        "mu_s": mu_s,
        "lv_s": lv_s,
        "lv_b": lv_b,
        "dr_s": dr_s,
        "sigma": sigma,
        "t_re": t_re,
        "t_im": t_im,
        "delta_re": delta_re,
        "delta_im": delta_im,
    }


def _decode_batch(model: CVaeModel, zs: np.ndarray) -> dict:
    a1 = _affine_fwd(model.layers["dec0"], zs)
    h = _act_fwd(model, a1)
    y = _affine_fwd(model.layers["dec1"], h)
    return {"z": zs, "h": h, "y": y}


def _reparam_fwd(enc: dict, eps_re: np.ndarray, eps_im: np.ndarray) -> dict:
    """z~ = mu + psi_re * eps_re + psi_im * eps_im on surrogates.

    With t = 2(sigma + Re delta) and s = sqrt(sigma^2 - |delta|^2):
    Re psi_im = 1/2 identically, Im psi_im = Im delta / t, psi_re = i s / t.
    """
    sigma, dre, dim_ = enc["sigma"], enc["delta_re"], enc["delta_im"]
    t = 2.0 * (sigma + dre)
    s = np.sqrt(sigma**2 - dre**2 - dim_**2)
    c2 = s / t
    c3 = dim_ / t
    mu_re, mu_im = _split(enc["mu_s"])
    z_re = mu_re + 0.5 * eps_im
    z_im = mu_im + c2 * eps_re + c3 * eps_im
    return {
        "z": _join(z_re, z_im),
        "t": t,
        "s": s,
        "c2": c2,
        "c3": c3,
        "eps_re": eps_re,
        "eps_im": eps_im,
    }


def decoder_batch_map(model: CVaeModel):
    """Decoder as a complex batch map (m, d) -> (m, n) for the metric machinery."""

    def f(zs: np.ndarray) -> np.ndarray:
        zs = np.atleast_2d(np.asarray(zs, dtype=complex))
        surro = _join(zs.real, zs.imag)
        y = _decode_batch(model, surro)["y"]
        yr, yi = _split(y)
        return yr + 1j * yi

    return f


def encode_batch(model: CVaeModel, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Real data batch (m, n) -> (mu (m,d) complex, sigma (m,d), delta (m,d) complex)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    enc = _encode_batch(model, complexify(xs))
    mu_re, mu_im = _split(enc["mu_s"])
    return (
        mu_re + 1j * mu_im,
        enc["sigma"],
        enc["delta_re"] + 1j * enc["delta_im"],
    )


def encode(model: CVaeModel, x: np.ndarray) -> ComplexGaussianParams:
    """Single data vector -> posterior parameters (mu, sigma, delta)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.data_dim:
        raise DimensionMismatch(f"x has dim {x.size}, model expects {model.data_dim}")
    enc = _encode_batch(model, complexify(x[None, :]))
    mu_re, mu_im = _split(enc["mu_s"])
    return ComplexGaussianParams(
        mu=(mu_re + 1j * mu_im)[0],
        sigma=enc["sigma"][0],
        delta=(enc["delta_re"] + 1j * enc["delta_im"])[0],
    )


def decode(model: CVaeModel, z: np.ndarray) -> np.ndarray:
    """Single latent -> complex data vector (real part is the emitted image)."""
    z = np.asarray(z, dtype=complex).ravel()
    if z.size != model.latent_dim:
        raise DimensionMismatch(f"z has dim {z.size}, model expects {model.latent_dim}")
    return decoder_batch_map(model)(z[None, :])[0]


# ---------------------------------------------------------------------------
# loss and gradients
# ---------------------------------------------------------------------------


def _loss_forward_backward(
    model: CVaeModel,
    batch: np.ndarray,
    eps_re: np.ndarray,
    eps_im: np.ndarray,
    cfg: TrainConfig,
    atlas: LatentAtlas | None,
    stored_grad: np.ndarray | None,
    want_grads: bool = True,
) -> tuple[LossBreakdown, dict | None, float]:
    """One batch pass; returns (losses, parameter grads, eps diagnostic)."""
    m = batch.shape[0]
    d = model.latent_dim
    xs = complexify(batch)
    enc = _encode_batch(model, xs)
    rep = _reparam_fwd(enc, eps_re, eps_im)
    dec = _decode_batch(model, rep["z"])
    y_re, y_im = _split(dec["y"])

    resid = y_re - batch
    reconstruction = float(np.mean(np.sum(resid**2, axis=1)))
    eps_diag = float(np.mean(np.abs(y_im)))

    mu_re, mu_im = _split(enc["mu_s"])
    sigma, dre, dim_ = enc["sigma"], enc["delta_re"], enc["delta_im"]
    s2 = sigma**2 - dre**2 - dim_**2
    inner = sigma - 1.0 - 0.5 * np.log(s2)
    sign = np.where(inner >= 0, 1.0, -1.0)
    kl = float(np.mean(np.sum(mu_re**2 + mu_im**2 + np.abs(inner), axis=1)))

    geometric = 0.0
    z_re, z_im = _split(rep["z"])
    if cfg.gamma > 0:
        if atlas is None:
            raise MissingAtlas("gamma > 0 requires an atlas snapshot")
        zc = z_re + 1j * z_im
        logdets, _ = kahler.log_det_metric_batch(atlas, zc, mode=cfg.logdet_mode)
        geometric = float(
            np.mean(0.5 * np.sum(z_re**2 + z_im**2, axis=1) - 0.5 * logdets)
        )

    total = reconstruction + cfg.beta * kl + cfg.gamma * geometric
    losses = LossBreakdown(reconstruction, kl, geometric, total)
    if not want_grads:
        return losses, None, eps_diag

    grads = model.zero_grads()
    # reconstruction head
    dy = _join(2.0 * resid / m, np.zeros_like(y_im))
    dh1 = _affine_bwd(model.layers["dec1"], dec["h"], dy, grads["dec1"])
    da1 = _act_bwd(model, dec["h"], dh1)
    dz = _affine_bwd(model.layers["dec0"], rep["z"], da1, grads["dec0"])
    dz_re, dz_im = _split(dz)
    # geometric term: live z~ norm part + frozen stored log-det gradient
    if cfg.gamma > 0:
        sg = stored_grad if stored_grad is not None else np.zeros(2 * d)
        dz_re = dz_re + (cfg.gamma / m) * (z_re + sg[None, :d])
        dz_im = dz_im + (cfg.gamma / m) * (z_im + sg[None, d:])
    # reparameterization backward
    dmu_re = dz_re.copy()
    dmu_im = dz_im.copy()
    dc2 = dz_im * rep["eps_re"]
    dc3 = dz_im * rep["eps_im"]
    t, s = rep["t"], rep["s"]
    dsig_rep = dc2 * ((sigma / s) * t - 2.0 * s) / t**2 + dc3 * (-2.0 * dim_ / t**2)
    ddre_rep = dc2 * ((-dre / s) * t - 2.0 * s) / t**2 + dc3 * (-2.0 * dim_ / t**2)
    ddim_rep = dc2 * (-dim_ / (s * t)) + dc3 / t
    # KL backward
    w_kl = cfg.beta / m
    dmu_re += w_kl * 2.0 * mu_re
    dmu_im += w_kl * 2.0 * mu_im
    dsig_kl = w_kl * sign * (1.0 - sigma / s2)
    ddre_kl = w_kl * sign * (dre / s2)
    ddim_kl = w_kl * sign * (dim_ / s2)
    dsig = dsig_rep + dsig_kl
    ddre = ddre_rep + ddre_kl
    ddim = ddim_rep + ddim_kl
    # delta = sigma * scale * tanh(raw): joint dependence on sigma and raw
    dsig = dsig + ddre * _DELTA_SCALE * enc["t_re"] + ddim * _DELTA_SCALE * enc["t_im"]
    ddr_s = _join(
        ddre * sigma * _DELTA_SCALE * (1.0 - enc["t_re"] ** 2),
        ddim * sigma * _DELTA_SCALE * (1.0 - enc["t_im"] ** 2),
    )
    lv_gate = 1.0 - (enc["lv_b"] / LOGVAR_CAP) ** 2  # tanh bound chain factor
    dlv_s = _join(dsig * 0.5 * sigma * lv_gate, np.zeros_like(sigma))
    dmu_s = _join(dmu_re, dmu_im)
    # encoder backward
    dh = _affine_bwd(model.layers["mu"], enc["h"], dmu_s, grads["mu"])
    dh += _affine_bwd(model.layers["lv"], enc["h"], dlv_s, grads["lv"])
    dh += _affine_bwd(model.layers["dr"], enc["h"], ddr_s, grads["dr"])
    da0 = _act_bwd(model, enc["h"], dh)
    _affine_bwd(model.layers["enc0"], xs, da0, grads["enc0"])
    return losses, grads, eps_diag


def loss(
    model: CVaeModel,
    batch: np.ndarray,
    atlas: LatentAtlas | None,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    noise: tuple[np.ndarray, np.ndarray] | None = None,
) -> LossBreakdown:
    """Loss breakdown on a batch; noise may be supplied for determinism."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.size == 0:
        raise ValueError("batch must be nonempty")
    if noise is None:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        eps_re = rng.standard_normal((batch.shape[0], model.latent_dim))
        eps_im = rng.standard_normal((batch.shape[0], model.latent_dim))
    else:
        eps_re, eps_im = noise
    out, _, _ = _loss_forward_backward(
        model, batch, eps_re, eps_im, cfg, atlas, None, want_grads=False
    )
    return out


# ---------------------------------------------------------------------------
# atlas snapshot
# ---------------------------------------------------------------------------


def build_atlas_from_model(
    model: CVaeModel,
    data: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> LatentAtlas:
    """Encode a reservoir of training rows and freeze it as mixture components.

    Each reservoir point contributes one component: a_i = 1/N, mu_i the
    decoded posterior mean, Sigma_i the fitted global diagonal residual
    variance of the decoder (mode "fitted"), that component's own squared
    residual (mode "per-component"), or ones (mode "unit").
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n_keep = min(cfg.atlas_size, data.shape[0])
    idx = rng.choice(data.shape[0], size=n_keep, replace=False)
    rows = data[np.sort(idx)]
    enc = _encode_batch(model, complexify(rows))
    mu_re, mu_im = _split(enc["mu_s"])
    z_mean = mu_re + 1j * mu_im
    decoded = decoder_batch_map(model)(z_mean)
    resid = decoded - rows  # complex residual against real pixels
    if cfg.atlas_sigma_mode == "fitted":
        var = np.maximum(np.mean(np.abs(resid) ** 2, axis=0), 1e-3)
        sigmas = np.tile(var, (n_keep, 1))
    elif cfg.atlas_sigma_mode == "per-component":
        sigmas = np.maximum(np.abs(resid) ** 2, 1e-3)
    elif cfg.atlas_sigma_mode == "unit":
        sigmas = np.ones((n_keep, decoded.shape[1]))
    else:
        raise ValueError(
            "atlas_sigma_mode must be 'fitted', 'per-component', or 'unit'"
        )
    return kahler.build_atlas(
        decoded,
        sigmas,
        decoder_batch_map(model),
        latent_dim=model.latent_dim,
        rho=cfg.rho,
    )


def _stored_logdet_gradient(
    atlas: LatentAtlas, zs: np.ndarray, mode: str, h: float = 1e-3
) -> np.ndarray:
    """Average surrogate gradient of -log det h(z)/2 over the given latents."""
    zs = np.atleast_2d(np.asarray(zs, dtype=complex))
    d = zs.shape[1]
    grad = np.zeros(2 * d)
    for a in range(2 * d):
        shift = np.zeros(d, dtype=complex)
        shift[a % d] = h if a < d else 1j * h
        up, _ = kahler.log_det_metric_batch(atlas, zs + shift, mode=mode)
        dn, _ = kahler.log_det_metric_batch(atlas, zs - shift, mode=mode)
        grad[a] = float(np.mean(-0.5 * (up - dn) / (2 * h)))
    return grad


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: CVaeModel
    log: list[EpochStats]
    atlas: LatentAtlas


def train(model: CVaeModel, data: np.ndarray, cfg: TrainConfig) -> TrainResult:
    """Momentum SGD on the total loss with periodic metric refresh.

    The atlas (and the stored log-det gradient it implies) is rebuilt every
    ``metric_refresh_every`` iterations when gamma > 0 and frozen in between.
    The metrics log records per-epoch loss means plus the imaginary-output
    diagnostic; identical seeds give identical logs.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    rng = np.random.default_rng(cfg.seed)
    velocity = model.zero_grads()
    atlas: LatentAtlas | None = None
    stored_grad: np.ndarray | None = None
    log: list[EpochStats] = []
    iteration = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(data.shape[0])
        sums = np.zeros(4)
        eps_sum = 0.0
        n_batches = 0
        for start in range(0, data.shape[0], cfg.batch_size):
            batch = data[order[start : start + cfg.batch_size]]
            if cfg.gamma > 0 and iteration % cfg.metric_refresh_every == 0:
                atlas = build_atlas_from_model(model, data, cfg, rng)
                enc = _encode_batch(model, complexify(batch))
                zc = _split(enc["mu_s"])[0] + 1j * _split(enc["mu_s"])[1]
                stored_grad = _stored_logdet_gradient(atlas, zc, cfg.logdet_mode)
            eps_re = rng.standard_normal((batch.shape[0], model.latent_dim))
            eps_im = rng.standard_normal((batch.shape[0], model.latent_dim))
            losses, grads, eps_diag = _loss_forward_backward(
                model, batch, eps_re, eps_im, cfg, atlas, stored_grad
            )
            if not np.isfinite(losses.total):
                raise NonFiniteLoss(
                    f"loss is not finite at iteration {iteration}",
                    batch_index=iteration,
                )
            for name in LAYER_NAMES:
                for v, g, p in zip(
                    velocity[name].arrays(),
                    grads[name].arrays(),
                    model.layers[name].arrays(),
                ):
                    v *= cfg.momentum
                    v -= cfg.learning_rate * g
                    p += v
            sums += (losses.reconstruction, losses.kl, losses.geometric, losses.total)
            eps_sum += eps_diag
            n_batches += 1
            iteration += 1
        log.append(
            EpochStats(
                epoch=epoch,
                reconstruction=float(sums[0] / n_batches),
                kl=float(sums[1] / n_batches),
                geometric=float(sums[2] / n_batches),
                total=float(sums[3] / n_batches),
                eps_diag=float(eps_sum / n_batches),
            )
        )
    final_atlas = build_atlas_from_model(model, data, cfg, rng)
    return TrainResult(model=model, log=log, atlas=final_atlas)


# ---------------------------------------------------------------------------
# gradient check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_err: float
    n_checked: int
    worst_index: int


def gradient_check(
    model: CVaeModel,
    batch: np.ndarray,
    cfg: TrainConfig,
    n_params: int = 50,
    rng: np.random.Generator | None = None,
    fd_step: float = 1e-5,
) -> GradCheckReport:
    """Analytic parameter gradient vs central FD on random coordinates.

    Runs the gamma = 0 path (reconstruction + beta KL) with frozen noise so
    both sides differentiate the same deterministic function.
    """
    if rng is None:
        rng = np.random.default_rng(123)
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    cfg0 = replace(cfg, gamma=0.0)
    eps_re = rng.standard_normal((batch.shape[0], model.latent_dim))
    eps_im = rng.standard_normal((batch.shape[0], model.latent_dim))
    _, grads, _ = _loss_forward_backward(
        model, batch, eps_re, eps_im, cfg0, None, None
    )
    flat_grad = np.concatenate(
        [g.ravel() for name in LAYER_NAMES for g in grads[name].arrays()]
    )
    base = model.get_flat()
    probe = model.copy()
    idx = rng.choice(base.size, size=min(n_params, base.size), replace=False)
    worst, worst_i = 0.0, -1
    for i in idx:
        h = fd_step * (1.0 + abs(base[i]))
        for sgn, store in ((1.0, "up"), (-1.0, "dn")):
            vec = base.copy()
            vec[i] += sgn * h
            probe.set_flat(vec)
            val = _loss_forward_backward(
                probe, batch, eps_re, eps_im, cfg0, None, None, want_grads=False
            )[0].total
            if store == "up":
                up = val
            else:
                dn = val
        fd = (up - dn) / (2 * h)
        scale = max(abs(fd), abs(flat_grad[i]), 1e-8)
        rel = abs(fd - flat_grad[i]) / scale
        if rel > worst:
            worst, worst_i = rel, int(i)
    return GradCheckReport(max_rel_err=worst, n_checked=len(idx), worst_index=worst_i)


# ---------------------------------------------------------------------------
# Ricci-enhanced penalty
# ---------------------------------------------------------------------------


def ricci_penalty_from_ric(ric_matrices: np.ndarray) -> float:
    """mean_j || (i/2) I + Ric_j / 2 ||_F via the trace form sqrt(Tr(M M^dag))."""
    ric_matrices = np.asarray(ric_matrices, dtype=complex)
    if ric_matrices.ndim == 2:
        ric_matrices = ric_matrices[None, ...]
    d = ric_matrices.shape[-1]
    eye = np.eye(d)
    vals = []
    for ric in ric_matrices:
        m = 0.5j * eye + 0.5 * ric
        vals.append(np.sqrt(np.real(np.trace(m @ m.conj().T))))
    return float(np.mean(vals))


def ricci_regularizer(
    model: CVaeModel,
    z_batch: np.ndarray,
    atlas: LatentAtlas,
    cfg: TrainConfig,
    fd_step: float | None = None,
) -> float:
    """gamma * mean_j ||(i/2) dd-bar z^dag z + Ric/2||_F with Ric from the atlas."""
    z_batch = np.atleast_2d(np.asarray(z_batch, dtype=complex))
    rics = np.stack([kahler.ricci_logdet(atlas, z, fd_step) for z in z_batch])
    return cfg.gamma * ricci_penalty_from_ric(rics)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"CVAE"
CHECKPOINT_VERSION = 1


def save_model(model: CVaeModel, path) -> None:
    flat = model.get_flat()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(
            struct.pack(
                "<IIIIIQ",
                CHECKPOINT_VERSION,
                model.data_dim,
                model.latent_dim,
                model.enc_hidden,
                model.dec_hidden,
                flat.size,
            )
        )
        fh.write(flat.astype("<f8").tobytes())
    with open(str(path) + ".config.txt", "w") as fh:
        fh.write(
            "format = cvae-checkpoint\n"
            f"version = {CHECKPOINT_VERSION}\n"
            f"data_dim = {model.data_dim}\n"
            f"latent_dim = {model.latent_dim}\n"
            f"enc_hidden = {model.enc_hidden}\n"
            f"dec_hidden = {model.dec_hidden}\n"
            f"activation = {model.activation}\n"
            f"delta_bound = {DELTA_BOUND}\n"
        )


def load_model(path) -> CVaeModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {data[:4]!r}")
    version, n, d, eh, dh, count = struct.unpack("<IIIIIQ", data[4:32])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    model = CVaeModel(n, d, eh, dh, init_scale=0.0)
    flat = np.frombuffer(data, dtype="<f8", count=count, offset=32)
    model.set_flat(flat.copy())
    return model
