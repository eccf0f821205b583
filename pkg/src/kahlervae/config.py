"""Experiment specification, key=value config files, and deterministic CSV io.

Config files are flat ``key = value`` lines (# comments allowed) with dotted
prefixes routing to the nested dataclasses: ``train.beta = 0.5``,
``sampler.jitter = 4``, bare keys for the spec itself.  CLI flags override
file values.

Every CSV written here carries three header comment lines - the seed, a hash
of the generating configuration, and a content hash of the data rows - and no
timestamps, so a rerun with the same seed is byte-identical.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

from .cvae import TrainConfig
from .sampler import SamplerConfig

DATA_ROOT_ENV = "KAHLERVAE_DATA_ROOT"

EXPERIMENTS = (
    "cdf-equivalence",
    "runtime",
    "outliers",
    "eigenmaps",
    "diagnostics",
    "train",
)


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    outdir: str = "out"
    seed: int = 0
    dataset: str = "auto"  # auto | digits | synthetic | mnist
    train: TrainConfig = field(default_factory=TrainConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    latent_dim: int = 4
    enc_hidden: int = 24
    dec_hidden: int = 24
    train_count: int = 1200
    eval_count: int = 300
    gen_count: int = 600
    atlas_components: int = 64
    feature_space: bool = False  # outlier distances in encoder features instead of pixels

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}"
            )


def data_root() -> Path | None:
    value = os.environ.get(DATA_ROOT_ENV)
    return Path(value) if value else None


def load_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(value: str, target_type) -> object:
    if target_type is bool:
        return value.lower() in ("1", "true", "yes", "on")
    if target_type is float or target_type == "float | None":
        return None if value.lower() == "none" else float(value)
    if target_type is int:
        return int(value)
    return value


def _apply(dc, overrides: dict[str, str]):
    fields = {f.name: f for f in dataclasses.fields(dc)}
    updates = {}
    for key, value in overrides.items():
        if key not in fields:
            raise ValueError(f"unknown config key {key!r} for {type(dc).__name__}")
        ftype = fields[key].type
        if isinstance(ftype, str):
            ftype = {"int": int, "float": float, "bool": bool, "str": str}.get(
                ftype.split(" ")[0], ftype
            )
        updates[key] = _coerce(value, ftype)
    return dataclasses.replace(dc, **updates)


def spec_from_mapping(experiment: str, mapping: dict[str, str]) -> ExperimentSpec:
    """Build an ExperimentSpec from flat dotted keys (file and CLI merged)."""
    train_kv = {k[6:]: v for k, v in mapping.items() if k.startswith("train.")}
    sampler_kv = {k[8:]: v for k, v in mapping.items() if k.startswith("sampler.")}
    top_kv = {k: v for k, v in mapping.items() if "." not in k}
    spec = ExperimentSpec(experiment=experiment)
    spec = _apply(spec, top_kv)
    return dataclasses.replace(
        spec,
        train=_apply(spec.train, train_kv),
        sampler=_apply(spec.sampler, sampler_kv),
    )


def config_digest(spec: ExperimentSpec) -> str:
    """Hash of the semantic configuration: output location does not count."""
    neutral = dataclasses.replace(spec, outdir="")
    return hashlib.sha256(repr(neutral).encode()).hexdigest()[:12]


def format_float(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns: list[str], rows, seed: int, config_hash: str) -> Path:
    """CSV with seed / config / content-hash header lines; rerun-stable bytes."""
    body_lines = [",".join(columns)]
    for row in rows:
        body_lines.append(",".join(format_float(v) for v in row))
    body = "\n".join(body_lines) + "\n"
    content = hashlib.sha256(body.encode()).hexdigest()[:12]
    header = (
        f"# seed = {seed}\n# config = {config_hash}\n# content = {content}\n"
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(header + body)
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
