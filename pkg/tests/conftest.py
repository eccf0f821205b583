"""Shared builders for random-but-seeded geometric fixtures."""

import numpy as np
import pytest

from kahlervae import cvae, fisher, kahler


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_complex(rng, *shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def make_stat_model(rng, d=2, n=3, vary_sigma=True, real_mean=False):
    """Random pluriharmonic decoder likelihood for Fisher-metric tests."""
    if real_mean:
        w = rng.standard_normal((n, d))
        c = rng.standard_normal(n)
        mean = lambda z: w @ (z + np.conj(z)) + c
    else:
        w1 = random_complex(rng, n, d)
        w2 = random_complex(rng, n, d)
        c = random_complex(rng, n)
        mean = lambda z: w1 @ z + w2 @ np.conj(z) + c
    s0 = rng.uniform(0.5, 1.5, size=n)
    if vary_sigma:
        q = 0.3 * rng.standard_normal((n, d))
        cov = lambda z: s0 * np.exp(q @ (np.abs(z) ** 2))
    else:
        cov = lambda z: s0
    return fisher.DecoderStatModel(mean_map=mean, cov_map=cov, latent_dim=d, data_dim=n)


def make_affine_atlas(rng, n_components=4, d=2, n=3, rho=None):
    """Random atlas over a pluriharmonic affine batch decoder."""
    a_mat = random_complex(rng, n, d)
    b_mat = random_complex(rng, n, d)
    c = random_complex(rng, n)
    decoder = lambda zs: np.atleast_2d(zs) @ a_mat.T + np.conj(np.atleast_2d(zs)) @ b_mat.T + c
    mus = random_complex(rng, n_components, n)
    sigmas = rng.uniform(0.5, 2.0, size=(n_components, n))
    atlas = kahler.build_atlas(
        mus, sigmas, decoder, latent_dim=d,
        rho=float(rng.uniform(0.6, 1.5)) if rho is None else rho,
    )
    return atlas, (a_mat, b_mat, c)


def make_toy_clusters(rng, n_rows=60, dim=6):
    a = rng.normal(0.3, 0.04, size=(n_rows // 2, dim))
    b = rng.normal(0.7, 0.04, size=(n_rows - n_rows // 2, dim))
    return np.clip(np.concatenate([a, b]), 0.0, 1.0)


def make_trained_toy(seed=0, epochs=30, gamma=0.0, dim=6, latent=2):
    rng = np.random.default_rng(seed)
    data = make_toy_clusters(rng, n_rows=80, dim=dim)
    model = cvae.CVaeModel(dim, latent, 12, 12, seed=seed)
    cfg = cvae.TrainConfig(
        beta=0.05, gamma=gamma, epochs=epochs, batch_size=16,
        learning_rate=0.02, seed=seed, atlas_size=24,
    )
    return cvae.train(model, data, cfg), data, cfg
