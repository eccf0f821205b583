"""Experiment harness: trains desk-scale models and emits CSV + SVG artifacts.

Each ``run_*`` function takes an ExperimentSpec, writes its outputs under
``spec.outdir``, and returns a summary dataclass.  All randomness flows from
``spec.seed``; outputs carry seed/config/content headers and are byte-stable
across reruns (the runtime benchmark's wall-clock medians are the one
necessarily nondeterministic payload).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components

from . import config as cfgmod
from . import cvae, fisher, ingest, kahler, sampler, svgplot, wirtinger
from .config import ExperimentSpec, write_csv, write_text
from .errors import DisconnectedGraph

MNIST_IMAGE_NAMES = ("train-images-idx3-ubyte", "train-images.idx3-ubyte")
MNIST_LABEL_NAMES = ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte")


# ---------------------------------------------------------------------------
# dataset resolution and shared model plumbing
# ---------------------------------------------------------------------------


def _find_mnist() -> ingest.Dataset | None:
    root = cfgmod.data_root()
    if root is None:
        return None
    for sub in (root, root / "mnist", root / "MNIST"):
        for name in MNIST_IMAGE_NAMES:
            img = sub / name
            if img.exists():
                labels = None
                for lname in MNIST_LABEL_NAMES:
                    if (sub / lname).exists():
                        labels = sub / lname
                        break
                return ingest.load_mnist(img, labels)
    return None


def resolve_dataset(spec: ExperimentSpec) -> tuple[ingest.Dataset, ingest.Dataset]:
    """(train, eval) datasets at desk scale, deterministic in spec.seed."""
    choice = spec.dataset
    ds = None
    if choice in ("auto", "mnist"):
        ds = _find_mnist()
        if ds is not None:
            ds = ingest.subset_and_downsample(
                ds, min(len(ds), spec.train_count + spec.eval_count), (14, 14), spec.seed
            )
        elif choice == "mnist":
            raise FileNotFoundError(
                f"no MNIST IDX files under ${cfgmod.DATA_ROOT_ENV}; see docs/datasets.md"
            )
    if ds is None and choice in ("auto", "digits"):
        try:
            ds = ingest.bundled_digits()
        except ImportError:
            if choice == "digits":
                raise
    if ds is None:
        ds = ingest.synthetic_clusters(
            n_clusters=4, dim=36, separation=10.0, seed=spec.seed, per_cluster=400
        )
    total = min(len(ds), spec.train_count + spec.eval_count)
    ds = ingest.subset_and_downsample(ds, total, None, spec.seed)
    n_train = min(spec.train_count, total - 1)
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(total)
    train = ingest.Dataset(
        ds.items[order[:n_train]],
        ds.shape,
        ds.labels[order[:n_train]] if ds.labels is not None else None,
        ds.provenance + " | split=train",
    )
    evalset = ingest.Dataset(
        ds.items[order[n_train:]],
        ds.shape,
        ds.labels[order[n_train:]] if ds.labels is not None else None,
        ds.provenance + " | split=eval",
    )
    return train, evalset


def train_arm(spec: ExperimentSpec, data: np.ndarray, arm: str) -> cvae.TrainResult:
    """Train one experiment arm from the shared init seed.

    The baseline arm is literally the gamma = 0 configuration of the same
    pipeline; nothing else differs between arms.
    """
    model = cvae.CVaeModel(
        data_dim=data.shape[1],
        latent_dim=spec.latent_dim,
        enc_hidden=spec.enc_hidden,
        dec_hidden=spec.dec_hidden,
        seed=spec.seed,
    )
    cfg = replace(spec.train, seed=spec.seed, atlas_size=spec.atlas_components)
    if arm == "baseline":
        cfg = replace(cfg, gamma=0.0)
    elif arm != "kahler":
        raise ValueError("arm must be 'baseline' or 'kahler'")
    return cvae.train(model, data, cfg)


def arm_sampler_config(spec: ExperimentSpec, arm: str) -> sampler.SamplerConfig:
    if arm == "baseline":
        return replace(spec.sampler, alpha=0.0, lam=0.0)
    return spec.sampler


def generate_images(
    model: cvae.CVaeModel,
    atlas: kahler.LatentAtlas,
    data: np.ndarray,
    scfg: sampler.SamplerConfig,
    count: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """(images (count, n) real, latents (count, d)) via chunked metric sampling."""
    state = sampler.RunningMean()
    decoder = cvae.decoder_batch_map(model)
    images, latents = [], []
    remaining = count
    while remaining > 0:
        chunk = min(64, remaining)
        batch = sampler.metric_sample(model, atlas, data, scfg, chunk, rng, state)
        zs = batch.selected_latents
        images.append(np.real(decoder(zs)))
        latents.append(zs)
        remaining -= chunk
    return np.concatenate(images), np.concatenate(latents)


def nn_distances(queries: np.ndarray, refs: np.ndarray, exclude_self: bool = False) -> np.ndarray:
    """Euclidean nearest-neighbour distance of each query against refs (chunked)."""
    queries = np.asarray(queries, dtype=float)
    refs = np.asarray(refs, dtype=float)
    out = np.empty(queries.shape[0])
    ref_sq = np.sum(refs**2, axis=1)
    for start in range(0, queries.shape[0], 256):
        q = queries[start : start + 256]
        d2 = np.sum(q**2, axis=1)[:, None] - 2.0 * q @ refs.T + ref_sq[None, :]
        if exclude_self:
            rows = np.arange(start, start + q.shape[0])
            d2[np.arange(q.shape[0]), rows] = np.inf
        out[start : start + q.shape[0]] = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
    return out


def fitted_likelihood_model(
    model: cvae.CVaeModel, data: np.ndarray
) -> tuple[fisher.DecoderStatModel, np.ndarray]:
    """Decoder likelihood with the global fitted diagonal residual variance."""
    mu, _, _ = cvae.encode_batch(model, data)
    decoded = cvae.decoder_batch_map(model)(mu)
    var = np.maximum(np.mean(np.abs(decoded - data) ** 2, axis=0), 1e-3)
    stat = fisher.DecoderStatModel(
        mean_map=lambda z: cvae.decode(model, z),
        cov_map=lambda z: var,
        latent_dim=model.latent_dim,
        data_dim=model.data_dim,
    )
    return stat, var


def posterior_latents(
    model: cvae.CVaeModel, data: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Aggregate-posterior draws: encode random rows, one reparameterized z each."""
    rows = data[rng.integers(0, data.shape[0], size=count)]
    mu, sigma, _ = cvae.encode_batch(model, rows)
    eps = (rng.standard_normal(mu.shape) + 1j * rng.standard_normal(mu.shape)) / np.sqrt(2)
    return mu + sigma * eps


# ---------------------------------------------------------------------------
# distributional equivalence of the metric terms (KS experiment)
# ---------------------------------------------------------------------------


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


@dataclass(frozen=True)
class CdfEquivalenceResult:
    ks: float
    n_points: int
    n_components: int
    csv: Path
    plot: Path


def run_cdf_equivalence(
    spec: ExperimentSpec, n_points: int = 200, n_components: int = 300
) -> CdfEquivalenceResult:
    """CDF of the (1,1) Fisher mean-term entry vs its mixture expectation analog.

    n_points latent samples, expectation over an n_components atlas; emits
    both empirical CDFs and the Kolmogorov-Smirnov statistic between them.
    """
    rng = np.random.default_rng(spec.seed)
    train, _ = resolve_dataset(spec)
    result = train_arm(spec, train.items, "kahler" if spec.train.gamma > 0 else "baseline")
    model = result.model
    stat, var = fitted_likelihood_model(model, train.items)
    atlas = cvae.build_atlas_from_model(
        model,
        train.items,
        replace(spec.train, atlas_size=n_components, atlas_sigma_mode="per-component"),
        rng,
    )
    zs = posterior_latents(model, train.items, n_points, rng)
    fisher_vals = np.empty(n_points)
    expect_vals = np.empty(n_points)
    for j, z in enumerate(zs):
        mean_term, _ = fisher.metric_terms(stat, z)
        fisher_vals[j] = float(np.real(mean_term[0, 0]))
        rep = kahler.mixture_metric(atlas, z)
        expect_vals[j] = float(np.real(rep.expectation_term[0, 0]))
    ks = ks_statistic(fisher_vals, expect_vals)
    digest = cfgmod.config_digest(spec)
    out = Path(spec.outdir)
    fv, ev = np.sort(fisher_vals), np.sort(expect_vals)
    csv = write_csv(
        out / "cdf_equivalence.csv",
        ["rank", "fisher_first_term_11", "expectation_analog_11"],
        [(i, fv[i], ev[i]) for i in range(n_points)],
        spec.seed,
        digest,
    )
    cdf_y = (np.arange(n_points) + 1) / n_points
    plot = write_text(
        out / "cdf_equivalence.svg",
        svgplot.line_plot(
            [(fv, cdf_y, "fisher first term"), (ev, cdf_y, "expectation analog")],
            title=f"Empirical CDFs (KS = {ks:.4f})",
            xlabel="(1,1) real entry",
            ylabel="CDF",
        ),
    )
    write_text(
        out / "cdf_equivalence_summary.txt",
        f"seed = {spec.seed}\nconfig = {digest}\nks_statistic = {ks!r}\n"
        f"n_points = {n_points}\nn_components = {n_components}\n",
    )
    return CdfEquivalenceResult(ks, n_points, n_components, csv, plot)


# ---------------------------------------------------------------------------
# runtime benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RuntimeResult:
    sizes: list[int]
    expectation_ms: list[float]
    nn_ms: list[float]
    slope: float
    csv: Path
    plot: Path


def _benchmark_atlas(
    n_components: int, d: int, n: int, rng, hidden: int = 32
) -> kahler.LatentAtlas:
    """Synthetic atlas over a small MLP decoder (the realistic cost model:
    every differentiation pass pays real forward evaluations)."""
    model = cvae.CVaeModel(
        data_dim=n, latent_dim=d, enc_hidden=8, dec_hidden=hidden,
        seed=int(rng.integers(0, 2**31)),
    )
    decoder = cvae.decoder_batch_map(model)
    zc = (rng.standard_normal((n_components, d)) + 1j * rng.standard_normal((n_components, d))) / np.sqrt(2)
    mus = decoder(zc) + 0.1 * (rng.standard_normal((n_components, n)) + 1j * rng.standard_normal((n_components, n)))
    sigmas = rng.uniform(0.5, 2.0, size=(n_components, n))
    return kahler.build_atlas(mus, sigmas, decoder, latent_dim=d, rho=3.0)


def _jacobian_column(decoder, zs: np.ndarray, col: int, h: float = 1e-4):
    """(d_z, d_zbar) columns of the decoder Jacobian at each z, shape (m, n)."""
    m, d = zs.shape
    ex = np.zeros(d, complex)
    ex[col] = h
    ey = np.zeros(d, complex)
    ey[col] = 1j * h
    fx = (decoder(zs + ex) - decoder(zs - ex)) / (2 * h)
    fy = (decoder(zs + ey) - decoder(zs - ey)) / (2 * h)
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def _expectation_entry11_batch(
    atlas: kahler.LatentAtlas,
    zs: np.ndarray,
    arrays: kahler.ScoringArrays,
    chunk: int = 8000,
) -> np.ndarray:
    """(1,1) metric entry for a query batch via the shared-Jacobian softmax route.

    One Jacobian-column stencil for the whole batch, then a single streaming
    pass over the components: quadforms, responsibilities, and the weighted
    first/second moments all fold into (m, n) x (n, C) matmuls per component
    chunk with a running log-sum-exp normalizer.  No retrieval structure, no
    per-query control flow, and no (m, N) intermediates.
    """
    a1, b1 = _jacobian_column(atlas.decoder, zs, 0)  # (m, n) each
    xs = atlas.decode(zs)
    m = xs.shape[0]
    # one real gemm against t carries |x|^2, the Jacobian magnitudes, and the
    # re/im planes of the gradient coefficient; one complex gemm against
    # t*mus carries the quadform cross term and the two constant
    # contractions - everything else is per-chunk elementwise
    x1 = b1.conj() * xs + a1 * xs.conj()
    real_stack = np.concatenate(
        [np.abs(xs) ** 2, np.abs(a1) ** 2 + np.abs(b1) ** 2, x1.real, x1.imag]
    )
    cplx_stack = np.concatenate([xs.conj(), b1.conj(), a1.conj()])
    inv_rho2 = 1.0 / atlas.rho**2
    runmax = np.full(m, -np.inf)
    s0 = np.zeros(m)
    sh = np.zeros(m)
    sg = np.zeros(m, dtype=complex)
    sg2 = np.zeros(m)
    n_comp = arrays.t.shape[0]
    for lo in range(0, n_comp, chunk):
        t_c = arrays.t[lo : lo + chunk]
        tmus_c = arrays.tmus[lo : lo + chunk]
        r = real_stack @ t_c.T  # rows: [xa t | jac_sq t | Re(x1) t | Im(x1) t]
        c = cplx_stack @ tmus_c.T  # rows: [xc tmu | b1bar tmu | a1bar tmu]
        psis = np.maximum(r[:m] - 2.0 * np.real(c[:m]) + arrays.q0[lo : lo + chunk], 0.0)
        logits = arrays.log_a[lo : lo + chunk][None, :] - psis * inv_rho2
        h11 = r[m : 2 * m]
        g = r[2 * m : 3 * m] + 1j * r[3 * m :] - c[m : 2 * m] - np.conj(c[2 * m :])
        newmax = np.maximum(runmax, logits.max(axis=1))
        rescale = np.exp(runmax - newmax)
        e = np.exp(logits - newmax[:, None])
        s0 = s0 * rescale + e.sum(axis=1)
        sh = sh * rescale + np.einsum("mi,mi->m", e, h11)
        sg = sg * rescale + np.einsum("mi,mi->m", e, g)
        sg2 = sg2 * rescale + np.einsum("mi,mi->m", e, np.abs(g) ** 2)
        runmax = newmax
    e_term = sh / s0
    gmean = sg / s0
    cov = sg2 / s0 - np.abs(gmean) ** 2
    return e_term + cov * inv_rho2


def _nn_entry11_batch(
    atlas: kahler.LatentAtlas,
    zs: np.ndarray,
    arrays: kahler.ScoringArrays,
    k: int = 10,
) -> np.ndarray:
    """(1,1) entry via exact nearest-neighbour retrieval + local Fisher assembly.

    The comparison baseline is the retrieval procedure the softmax route
    makes unnecessary: per query, an exact ranked search over all components
    (full quadform pass + sort), then the local Fisher term assembled from
    each neighbour's whitened residual map with its own finite-difference
    pass - per-point differentiation instead of one shared Jacobian.
    """
    m = zs.shape[0]
    k = min(k, atlas.n_components)
    out = np.empty(m)
    for q in range(m):
        x = atlas.decode(zs[q : q + 1])
        psi_q = kahler.expanded_quadforms(arrays, x)[0]
        order = np.argsort(psi_q)  # exact ranked retrieval
        neigh = order[:k]
        kern = np.exp(-(psi_q[neigh] - psi_q[neigh].min()) / atlas.rho**2)
        kern /= kern.sum()
        entry = 0.0
        for w_j, j in zip(kern, neigh):
            white = 1.0 / np.sqrt(atlas.sigmas[j])

            def resid(zb, j=j, white=white):
                return white[None, :] * (atlas.decode(zb) - atlas.mus[j])

            c1, c1b = _jacobian_column(resid, zs[q : q + 1], 0)
            entry += w_j * float(np.sum(np.abs(c1) ** 2 + np.abs(c1b) ** 2))
        out[q] = entry
    return out


def run_runtime_benchmark(
    spec: ExperimentSpec,
    sizes: tuple[int, ...] = (100, 1000, 10000, 100000),
    repetitions: int = 9,
    queries: int = 64,
) -> RuntimeResult:
    """Median per-query wall-clock of the two metric construction routes.

    The reported slope is the log-log fit of the expectation route over the
    sizes >= 1000, where the O(N n) distance pass dominates fixed stencil
    overhead.
    """
    rng = np.random.default_rng(spec.seed)
    d, n = spec.latent_dim, 16
    exp_ms, nn_ms = [], []
    for size in sizes:
        atlas = _benchmark_atlas(size, d, n, rng)
        arrays = kahler.scoring_arrays(atlas)  # one-time atlas cost, shared by arms
        zq = (rng.standard_normal((queries, d)) + 1j * rng.standard_normal((queries, d))) / np.sqrt(2)
        _expectation_entry11_batch(atlas, zq[:2], arrays)  # warm both paths
        _nn_entry11_batch(atlas, zq[:2], arrays)
        te, tn = [], []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            _expectation_entry11_batch(atlas, zq, arrays)
            te.append((time.perf_counter() - t0) / queries * 1e3)
            t0 = time.perf_counter()
            _nn_entry11_batch(atlas, zq, arrays)
            tn.append((time.perf_counter() - t0) / queries * 1e3)
        exp_ms.append(float(np.median(te)))
        nn_ms.append(float(np.median(tn)))
    big = [i for i, s in enumerate(sizes) if s >= 1000]
    slope = float(
        np.polyfit(np.log10([sizes[i] for i in big]), np.log10([exp_ms[i] for i in big]), 1)[0]
    )
    digest = cfgmod.config_digest(spec)
    out = Path(spec.outdir)
    csv = write_csv(
        out / "runtime.csv",
        ["atlas_size", "expectation_ms_per_query", "nn_ms_per_query"],
        list(zip(sizes, exp_ms, nn_ms)),
        spec.seed,
        digest,
    )
    plot = write_text(
        out / "runtime.svg",
        svgplot.line_plot(
            [
                (np.log10(sizes), np.log10(exp_ms), "expectation route"),
                (np.log10(sizes), np.log10(nn_ms), "nn-search baseline"),
            ],
            title=f"Metric entry construction (log-log; slope {slope:.2f})",
            xlabel="log10 atlas size",
            ylabel="log10 ms/query",
        ),
    )
    write_text(
        out / "runtime_summary.txt",
        f"seed = {spec.seed}\nconfig = {digest}\nslope_expectation = {slope!r}\n"
        + "".join(
            f"N={s}: expectation {e!r} ms, nn {nn!r} ms\n"
            for s, e, nn in zip(sizes, exp_ms, nn_ms)
        ),
    )
    return RuntimeResult(list(sizes), exp_ms, nn_ms, slope, csv, plot)


# ---------------------------------------------------------------------------
# outlier experiment (the headline table)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutlierReport:
    arm: str
    mean_nn: float
    p95: float
    p99: float
    pct_beyond_95: float
    pct_beyond_99: float

    def __post_init__(self):
        if self.p95 > self.p99 + 1e-12:
            raise ValueError("percentiles must be monotone")
        for v in (self.pct_beyond_95, self.pct_beyond_99):
            if not 0.0 <= v <= 1.0:
                raise ValueError("outlier fractions must lie in [0, 1]")


@dataclass(frozen=True)
class OutlierExperimentResult:
    baseline: OutlierReport
    kahler: OutlierReport
    train_p95: float
    train_p99: float
    csv: Path


def _outlier_report(
    arm: str, generated: np.ndarray, train_rows: np.ndarray, t95: float, t99: float
) -> OutlierReport:
    d = nn_distances(generated, train_rows)
    return OutlierReport(
        arm=arm,
        mean_nn=float(d.mean()),
        p95=float(np.percentile(d, 95)),
        p99=float(np.percentile(d, 99)),
        pct_beyond_95=float(np.mean(d > t95)),
        pct_beyond_99=float(np.mean(d > t99)),
    )


def run_outlier_experiment(spec: ExperimentSpec) -> OutlierExperimentResult:
    """Baseline vs metric-scored sampling: nearest-neighbour outlier statistics.

    Both arms share the initialization seed and beta; the baseline is the
    gamma = alpha = lambda = 0 configuration.  Distances are computed in pixel
    space by default (``spec.feature_space`` switches to encoder features).
    """
    train, _ = resolve_dataset(spec)
    rows = train.items
    self_d = nn_distances(rows, rows, exclude_self=True)
    t95, t99 = float(np.percentile(self_d, 95)), float(np.percentile(self_d, 99))
    reports = {}
    for arm in ("baseline", "kahler"):
        result = train_arm(spec, rows, arm)
        scfg = arm_sampler_config(spec, arm)
        gen_rng = np.random.default_rng(spec.seed + 1)
        images, _ = generate_images(
            result.model, result.atlas, rows, scfg, spec.gen_count, gen_rng
        )
        if spec.feature_space:
            queries = np.abs(cvae.encode_batch(result.model, np.clip(images, 0, 1))[0])
            refs = np.abs(cvae.encode_batch(result.model, rows)[0])
        else:
            queries, refs = images, rows
        reports[arm] = _outlier_report(arm, queries, refs, t95, t99)
    digest = cfgmod.config_digest(spec)
    out = Path(spec.outdir)
    rowsout = [
        ("training_self", "", t95, t99, "", ""),
    ] + [
        (
            r.arm,
            r.mean_nn,
            r.p95,
            r.p99,
            r.pct_beyond_95,
            r.pct_beyond_99,
        )
        for r in (reports["baseline"], reports["kahler"])
    ]
    csv = write_csv(
        out / "outliers.csv",
        ["arm", "mean_nn", "p95", "p99", "pct_beyond_95", "pct_beyond_99"],
        rowsout,
        spec.seed,
        digest,
    )
    return OutlierExperimentResult(
        baseline=reports["baseline"],
        kahler=reports["kahler"],
        train_p95=t95,
        train_p99=t99,
        csv=csv,
    )


# ---------------------------------------------------------------------------
# curvature-weighted Laplacian eigenmaps
# ---------------------------------------------------------------------------


def knn_weight_matrix(points: np.ndarray, k: int = 10) -> np.ndarray:
    """Symmetric Gaussian-kernel kNN weights with median-distance bandwidth."""
    pts = np.asarray(points, dtype=float)
    m = pts.shape[0]
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    bw2 = float(np.median(d2[np.isfinite(d2)]))
    w = np.zeros((m, m))
    for i in range(m):
        idx = np.argpartition(d2[i], k)[:k]
        w[i, idx] = np.exp(-d2[i, idx] / bw2)
    return np.maximum(w, w.T)


def graph_laplacian(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    deg = np.diag(w.sum(axis=1))
    return deg - w, deg


def solve_eigenmaps(
    w: np.ndarray, n_vecs: int = 2, generalized: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Smallest nontrivial eigenpairs of L v = lambda D v (or L v = lambda v).

    The lambda = 0 constant eigenvector is excluded; eigenvector signs are
    fixed by making the largest-magnitude entry positive so outputs are
    rerun-stable.  Raises DisconnectedGraph when the graph is not connected.
    """
    n_comp, _ = connected_components(w > 0, directed=False)
    if n_comp > 1:
        raise DisconnectedGraph(
            f"graph has {n_comp} connected components", n_components=n_comp
        )
    L, D = graph_laplacian(w)
    vals, vecs = eigh(L, D if generalized else None)
    take = slice(1, 1 + n_vecs)
    out_vals = vals[take]
    out_vecs = vecs[:, take].copy()
    for j in range(out_vecs.shape[1]):
        lead = np.argmax(np.abs(out_vecs[:, j]))
        if out_vecs[lead, j] < 0:
            out_vecs[:, j] = -out_vecs[:, j]
    return out_vals, out_vecs


@dataclass(frozen=True)
class EigenmapsResult:
    arm_stats: dict
    csv: Path
    plot: Path


def run_eigenmaps(spec: ExperimentSpec, n_samples: int = 200, k: int = 10) -> EigenmapsResult:
    """Embedding of prior-sampled vs metric-sampled latents on a det-h weighted graph."""
    rng = np.random.default_rng(spec.seed)
    train, _ = resolve_dataset(spec)
    result = train_arm(spec, train.items, "kahler" if spec.train.gamma > 0 else "baseline")
    model, atlas = result.model, result.atlas
    d = spec.latent_dim
    prior = (rng.standard_normal((n_samples, d)) + 1j * rng.standard_normal((n_samples, d))) / np.sqrt(2)
    _, metric_z = generate_images(
        model, atlas, train.items, spec.sampler, n_samples, rng
    )
    arms = {"prior": prior, "metric": metric_z}
    rows = []
    series = []
    stats = {}
    for arm, zs in arms.items():
        ell, _ = kahler.log_det_metric_batch(atlas, zs, mode=spec.sampler.logdet_mode)
        dets = np.exp(ell - np.median(ell))  # common rescale: cancels in L v = lam D v
        w = knn_weight_matrix(wirtinger.to_real(zs), k=k)
        scale = 0.5 * (dets[:, None] + dets[None, :])
        vals, vecs = solve_eigenmaps(w * scale, n_vecs=2)
        var1, var2 = float(np.var(vecs[:, 0])), float(np.var(vecs[:, 1]))
        stats[arm] = {
            "eigenvalues": [float(v) for v in vals],
            "coord_variance_ratio": var2 / var1 if var1 > 0 else float("inf"),
        }
        rows.extend((arm, i, vecs[i, 0], vecs[i, 1]) for i in range(n_samples))
        series.append((vecs[:, 0], vecs[:, 1], arm))
    digest = cfgmod.config_digest(spec)
    out = Path(spec.outdir)
    csv = write_csv(
        out / "eigenmaps.csv", ["arm", "index", "v1", "v2"], rows, spec.seed, digest
    )
    plot = write_text(
        out / "eigenmaps.svg",
        svgplot.scatter_plot(
            series, title="Curvature-weighted eigenmaps embedding", xlabel="v1", ylabel="v2"
        ),
    )
    write_text(
        out / "eigenmaps_summary.txt",
        f"seed = {spec.seed}\nconfig = {digest}\n"
        + "".join(
            f"{arm}: eigenvalues={s['eigenvalues']} coord_variance_ratio={s['coord_variance_ratio']!r}\n"
            for arm, s in stats.items()
        ),
    )
    return EigenmapsResult(arm_stats=stats, csv=csv, plot=plot)


# ---------------------------------------------------------------------------
# diagnostics bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsResult:
    linear_response_cosine: float
    pluriharmonic_median: float
    eps_imaginary: float
    csv: Path


def run_diagnostics(
    spec: ExperimentSpec, n_points: int = 40, n_hist: int = 100
) -> DiagnosticsResult:
    """Linear-response cosine, mixed-derivative histogram, imaginary diagnostic."""
    rng = np.random.default_rng(spec.seed)
    train, evalset = resolve_dataset(spec)
    result = train_arm(spec, train.items, "kahler" if spec.train.gamma > 0 else "baseline")
    model, atlas = result.model, result.atlas
    pts = list(posterior_latents(model, train.items, n_points, rng))
    cosine = kahler.theorem3_diagnostic(atlas, pts)
    decoder_single = lambda z: cvae.decode(model, z)
    residuals = []
    d = model.latent_dim
    hist_z = posterior_latents(model, train.items, max(1, n_hist // d), rng)
    for z in hist_z:
        for a in range(d):
            vals = wirtinger.mixed_second_component(decoder_single, z, a, a)
            residuals.append(float(np.max(np.abs(vals))))
            if len(residuals) >= n_hist:
                break
        if len(residuals) >= n_hist:
            break
    residuals = np.asarray(residuals)
    eval_rows = evalset.items if len(evalset) else train.items
    mu, _, _ = cvae.encode_batch(model, eval_rows)
    decoded = cvae.decoder_batch_map(model)(mu)
    eps_imag = float(np.mean(np.abs(decoded.imag)))
    digest = cfgmod.config_digest(spec)
    out = Path(spec.outdir)
    csv = write_csv(
        out / "diagnostics.csv",
        ["quantity", "value"],
        [
            ("linear_response_cosine", cosine),
            ("pluriharmonic_residual_median", float(np.median(residuals))),
            ("pluriharmonic_residual_max", float(np.max(residuals))),
            ("eps_imaginary_mean", eps_imag),
        ],
        spec.seed,
        digest,
    )
    write_text(
        out / "pluriharmonic_hist.svg",
        svgplot.histogram(
            residuals, bins=20, title="Mixed second derivatives of the decoder",
            xlabel="max |d dbar decoder_k|",
        ),
    )
    write_csv(
        out / "pluriharmonic_hist.csv",
        ["index", "residual"],
        list(enumerate(residuals)),
        spec.seed,
        digest,
    )
    return DiagnosticsResult(
        linear_response_cosine=cosine,
        pluriharmonic_median=float(np.median(residuals)),
        eps_imaginary=eps_imag,
        csv=csv,
    )


# ---------------------------------------------------------------------------
# plain training run
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainRunResult:
    checkpoint: Path
    metrics_csv: Path
    atlas_path: Path
    final: cvae.EpochStats


def run_train(spec: ExperimentSpec) -> TrainRunResult:
    """Train one model per spec.train, saving checkpoint, metrics log, atlas."""
    train, _ = resolve_dataset(spec)
    arm = "kahler" if spec.train.gamma > 0 else "baseline"
    result = train_arm(spec, train.items, arm)
    out = Path(spec.outdir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.cvae"
    cvae.save_model(result.model, ckpt)
    digest = cfgmod.config_digest(spec)
    metrics = write_csv(
        out / "metrics.csv",
        ["epoch", "reconstruction", "kl", "geometric", "total", "eps_diag"],
        [
            (r.epoch, r.reconstruction, r.kl, r.geometric, r.total, r.eps_diag)
            for r in result.log
        ],
        spec.seed,
        digest,
    )
    atlas_path = out / "atlas.katl"
    kahler.save_atlas(result.atlas, atlas_path)
    write_text(out / "atlas.txt", kahler.atlas_to_text(result.atlas))
    return TrainRunResult(
        checkpoint=ckpt,
        metrics_csv=metrics,
        atlas_path=atlas_path,
        final=result.log[-1],
    )


RUNNERS = {
    "cdf-equivalence": run_cdf_equivalence,
    "runtime": run_runtime_benchmark,
    "outliers": run_outlier_experiment,
    "eigenmaps": run_eigenmaps,
    "diagnostics": run_diagnostics,
    "train": run_train,
}


def run_experiment(spec: ExperimentSpec):
    return RUNNERS[spec.experiment](spec)
