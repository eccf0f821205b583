"""Command-line entry points: train, sample, experiment, verify.

Configuration precedence: key=value config file (--config), then repeatable
--set key=value overrides, then the dedicated sampler flags.  Exit codes:
0 success, 1 a verification criterion or experiment assertion failed,
2 bad input (argument errors, missing files, malformed config).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import cvae, experiments, kahler, sampler, verification
from .errors import KahlerVaeError


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable), e.g. --set train.beta=0.5",
    )
    p.add_argument("--outdir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dataset", default=None, choices=("auto", "digits", "synthetic", "mnist"))


def _add_sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=None, help="log-det^2 score weight")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="||z||^2 score weight")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--jitter", type=float, default=None)
    p.add_argument("--overdraw", type=float, default=None)
    p.add_argument("--normalize", choices=("none", "mean"), default=None)
    p.add_argument("--logdet", choices=("diag", "full"), default=None)


def _collect_mapping(args) -> dict[str, str]:
    mapping: dict[str, str] = {}
    if args.config:
        mapping.update(cfgmod.load_config(args.config))
    for item in args.overrides:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    if args.outdir is not None:
        mapping["outdir"] = args.outdir
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    if args.dataset is not None:
        mapping["dataset"] = args.dataset
    flag_map = {
        "alpha": "sampler.alpha",
        "lam": "sampler.lam",
        "temperature": "sampler.temperature",
        "jitter": "sampler.jitter",
        "overdraw": "sampler.overdraw",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            mapping[key] = str(value)
    if getattr(args, "normalize", None) is not None:
        mapping["sampler.normalize_mode"] = (
            "accumulated-mean" if args.normalize == "mean" else "none"
        )
    if getattr(args, "logdet", None) is not None:
        mapping["sampler.logdet_mode"] = (
            "diagonal" if args.logdet == "diag" else "full"
        )
    return mapping


def _cmd_train(args) -> int:
    spec = cfgmod.spec_from_mapping("train", _collect_mapping(args))
    res = experiments.run_train(spec)
    print(f"checkpoint: {res.checkpoint}")
    print(f"metrics:    {res.metrics_csv}")
    print(f"atlas:      {res.atlas_path}")
    print(
        f"final epoch {res.final.epoch}: total {res.final.total:.5f} "
        f"(reconstruction {res.final.reconstruction:.5f}, kl {res.final.kl:.5f}, "
        f"geometric {res.final.geometric:.5f}, eps {res.final.eps_diag:.2e})"
    )
    return 0


def _cmd_sample(args) -> int:
    spec = cfgmod.spec_from_mapping("train", _collect_mapping(args))
    model = cvae.load_model(args.checkpoint)
    train_ds, _ = experiments.resolve_dataset(spec)
    if args.atlas:
        atlas = kahler.load_atlas(args.atlas, cvae.decoder_batch_map(model))
    else:
        atlas = cvae.build_atlas_from_model(
            model, train_ds.items, spec.train, np.random.default_rng(spec.seed)
        )
    rng = np.random.default_rng(spec.seed)
    images, latents = experiments.generate_images(
        model, atlas, train_ds.items, spec.sampler, args.count, rng
    )
    out = Path(spec.outdir)
    digest = cfgmod.config_digest(spec)
    cfgmod.write_csv(
        out / "generated.csv",
        [f"px{k}" for k in range(images.shape[1])],
        images.tolist(),
        spec.seed,
        digest,
    )
    cfgmod.write_csv(
        out / "latents.csv",
        [f"re{k}" for k in range(latents.shape[1])] + [f"im{k}" for k in range(latents.shape[1])],
        np.concatenate([latents.real, latents.imag], axis=1).tolist(),
        spec.seed,
        digest,
    )
    print(f"wrote {images.shape[0]} samples under {out}")
    return 0


def _cmd_experiment(args) -> int:
    spec = cfgmod.spec_from_mapping(args.id, _collect_mapping(args))
    result = experiments.run_experiment(spec)
    print(f"experiment {args.id} complete; outputs under {spec.outdir}")
    if args.id == "outliers":
        b, k = result.baseline, result.kahler
        print(
            f"training thresholds: p95 {result.train_p95:.4f} p99 {result.train_p99:.4f}"
        )
        for r in (b, k):
            print(
                f"{r.arm:9s} mean {r.mean_nn:.4f} p95 {r.p95:.4f} p99 {r.p99:.4f} "
                f"beyond95 {r.pct_beyond_95:.3f} beyond99 {r.pct_beyond_99:.3f}"
            )
        ok = k.p95 < b.p95 and k.p99 < b.p99
        return 0 if ok else 1
    if args.id == "runtime":
        print(
            f"slope {result.slope:.2f}; at N=1e4 expectation "
            f"{result.expectation_ms[result.sizes.index(10000)]:.2f}ms vs "
            f"nn {result.nn_ms[result.sizes.index(10000)]:.2f}ms"
        )
    if args.id == "cdf-equivalence":
        print(f"KS statistic {result.ks:.4f}")
    if args.id == "diagnostics":
        print(
            f"cosine {result.linear_response_cosine:.3f}, pluriharmonic median "
            f"{result.pluriharmonic_median:.2e}, eps {result.eps_imaginary:.2e}"
        )
    return 0


def _cmd_verify(args) -> int:
    numbers = args.criterion or None
    results = verification.run_all(numbers)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kahlervae",
        description="complex-VAE latent geometry: training, metric sampling, experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and save checkpoint + atlas")
    _add_common(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_sample = sub.add_parser("sample", help="metric-scored sampling from a checkpoint")
    _add_common(p_sample)
    _add_sampler_flags(p_sample)
    p_sample.add_argument("--checkpoint", required=True)
    p_sample.add_argument("--atlas", default=None, help="atlas file (default: rebuild)")
    p_sample.add_argument("--count", type=int, default=64)
    p_sample.set_defaults(func=_cmd_sample)

    p_exp = sub.add_parser("experiment", help="run a named experiment")
    p_exp.add_argument("id", choices=cfgmod.EXPERIMENTS)
    _add_common(p_exp)
    _add_sampler_flags(p_exp)
    p_exp.add_argument(
        "--feature-space",
        action="store_true",
        help="outlier distances in encoder features instead of pixel space",
    )
    p_exp.set_defaults(func=_cmd_experiment)

    p_verify = sub.add_parser("verify", help="run the acceptance criteria")
    p_verify.add_argument(
        "--criterion", type=int, action="append", help="run only this criterion (repeatable)"
    )
    p_verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "feature_space", False):
        args.overrides.append("feature_space=true")
    try:
        return args.func(args)
    except (KahlerVaeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
