"""Pipeline configuration files (TOML or JSON).

Top-level keys::

    seed, held_out_fraction, n_anchors, label_rule
    [corpus]   n_sources, size, n_frames, fps, families
    [train]    epochs, lr, batch_size, seed, use_conf, mirror, t_warmup, init_scale
    [[stages]] stage, n_ensemble_pairs, severity, k_levels, per_level, carryover, max_misclassified
    [[teachers]] name, weights = {metric = w}, noise, deviation = {metric = w}
    [paths]    output_dir, corpus_root, encoder
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .metrics import METRIC_NAMES
from .pipeline import CorpusConfig, StageConfig, TeacherSpec, W2SConfig
from .student import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

PATH_KEYS = ("output_dir", "corpus_root", "encoder")


@dataclass(frozen=True)
class PipelineConfig:
    w2s: W2SConfig
    paths: dict


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in [{section}]; valid keys: {sorted(allowed)}")


def _build(cls, section: str, data: dict):
    names = [f.name for f in fields(cls)]
    _check_keys(section, data, names)
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def _teacher(data: dict, idx: int) -> TeacherSpec:
    section = f"teachers.{idx}"
    _check_keys(section, data, ("name", "weights", "noise", "deviation"))
    for key in ("weights", "deviation"):
        bad = sorted(set(data.get(key, {})) - set(METRIC_NAMES))
        if bad:
            raise ConfigError(f"[{section}.{key}] names unknown metrics {bad}; valid: {list(METRIC_NAMES)}")
    return TeacherSpec(
        name=str(data["name"]),
        weights=tuple(sorted(data.get("weights", {}).items())),
        noise=float(data.get("noise", 0.5)),
        deviation=tuple(sorted(data.get("deviation", {}).items())),
    )


def parse_config(data: dict, base_dir: Path | None = None) -> PipelineConfig:
    top = ("seed", "held_out_fraction", "n_anchors", "label_rule",
           "corpus", "train", "stages", "teachers", "paths")
    _check_keys("top level", data, top)
    kw = {k: data[k] for k in ("seed", "held_out_fraction", "n_anchors", "label_rule") if k in data}
    if "corpus" in data:
        kw["corpus"] = _build(CorpusConfig, "corpus", data["corpus"])
    if "train" in data:
        kw["train"] = _build(TrainConfig, "train", data["train"])
    if "stages" in data:
        stages = tuple(_build(StageConfig, f"stages.{i}", s) for i, s in enumerate(data["stages"]))
        if [s.stage for s in stages] != list(range(1, len(stages) + 1)):
            raise ConfigError("stages must be numbered 1, 2, ... in order")
        kw["stages"] = stages
    if "teachers" in data:
        kw["teachers"] = tuple(_teacher(t, i) for i, t in enumerate(data["teachers"]))
    paths = dict(data.get("paths", {}))
    _check_keys("paths", paths, PATH_KEYS)
    base = base_dir or Path.cwd()
    for key in ("output_dir", "corpus_root"):
        if key in paths:
            paths[key] = str((base / paths[key]).resolve())
    if "corpus_root" in paths and not Path(paths["corpus_root"]).is_dir():
        raise ConfigError(f"corpus_root {paths['corpus_root']} does not exist")
    try:
        w2s = W2SConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return PipelineConfig(w2s, paths)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    raw = path.read_bytes()
    try:
        data = json.loads(raw) if path.suffix == ".json" else tomllib.loads(raw.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, path.parent)
