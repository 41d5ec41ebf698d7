"""Run configuration: one flat, human-readable key=value file drives every
command.

Keys are dotted paths into the section dataclasses (``sde.sigma0 = 0.01``,
``train.adam.learning_rate = 2e-4``); values are coerced by the type of the
field they replace.  Three presets bundle the documented defaults: ``paper``
(formula-test noise schedule, full-size model), ``wide`` (practical prior
scale, full-size model), and ``desk`` (small model and short segments for
CI-speed work).  Cross-module consistency is checked at load time so a
mismatch is a named refusal instead of silent garbage.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, is_dataclass
from pathlib import Path

from .errors import ConfigError
from .features import FeatureConfig
from .nn import AdamConfig
from .sampler import SamplerConfig
from .scorenet import ScoreNetConfig
from .sde import SdeSpec
from .training import TrainingConfig

PRESETS = ("paper", "wide", "desk")


@dataclass
class PathsConfig:
    dataset_dir: str = "data"
    cache_dir: str = "cache"
    checkpoint_dir: str = "checkpoints"
    output_dir: str = "out"


@dataclass
class RunConfig:
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    sde: SdeSpec = field(default_factory=SdeSpec.wide)
    model: ScoreNetConfig = field(default_factory=ScoreNetConfig)
    train: TrainingConfig = field(default_factory=TrainingConfig)
    sample: SamplerConfig = field(default_factory=SamplerConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


def preset_config(name: str) -> RunConfig:
    if name == "paper":
        return RunConfig(sde=SdeSpec.paper())
    if name == "wide":
        return RunConfig(sde=SdeSpec.wide())
    if name == "desk":
        return RunConfig(
            sde=SdeSpec.wide(),
            model=ScoreNetConfig.desk(),
            train=TrainingConfig(segment_length=4096, max_steps=2000,
                                 checkpoint_every=500),
        )
    raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")


# ---- generic dataclass <-> flat key tree ------------------------------------


def _to_tree(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = _to_tree(v) if is_dataclass(v) else v
    return out


def _flatten(tree: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def _format_value(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(raw: str, current, key: str):
    raw = raw.strip()
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(current, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if isinstance(current, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if isinstance(current, (tuple, list)):
        if raw == "":
            return ()
        try:
            return tuple(int(x) for x in raw.split(","))
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from None
    return raw


def _rebuild(cls, tree: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        v = tree[f.name]
        if isinstance(v, dict):
            kwargs[f.name] = _rebuild(_field_dataclass(cls, f), v)
        else:
            kwargs[f.name] = v
    return cls(**kwargs)


def _field_dataclass(cls, f):
    # default_factory carries the concrete nested dataclass type
    if f.default_factory is not dataclasses.MISSING:  # type: ignore[attr-defined]
        return type(f.default_factory())
    return type(f.default)


def serialize_config(cfg: RunConfig) -> str:
    """Every effective key, one per line, grouped by section."""
    lines = ["# vewave run configuration (all keys shown with effective values)"]
    flat = _flatten(_to_tree(cfg))
    section = None
    for key in flat:
        sec = key.split(".", 1)[0]
        if sec != section:
            lines.append("")
            section = sec
        lines.append(f"{key} = {_format_value(flat[key])}")
    return "\n".join(lines) + "\n"


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Rebuild the config with string overrides applied (and re-validated)."""
    tree = _to_tree(cfg)
    flat = _flatten(tree)
    for key, raw in overrides.items():
        if key not in flat:
            raise ConfigError(f"unknown configuration key {key!r}")
        node = tree
        *parents, leaf = key.split(".")
        for p in parents:
            node = node[p]
        node[leaf] = _coerce(raw, flat[key], key)
    return _rebuild(RunConfig, tree)


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse `key = value` lines (#-comments and blanks ignored) over a base."""
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = stripped.split("=", 1)
        overrides[key.strip()] = raw.strip()
    return apply_overrides(base or RunConfig(), overrides)


def load_config(path=None, preset: str = "wide", overrides: dict | None = None) -> RunConfig:
    """Preset -> optional file -> optional overrides, then cross-validate."""
    cfg = preset_config(preset)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        cfg = parse_config_text(p.read_text(), base=cfg)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    validate_run_config(cfg)
    return cfg


def validate_run_config(cfg: RunConfig) -> None:
    """Cross-module consistency, with the violated relation named."""
    if cfg.model.hop != cfg.feature.hop_length:
        raise ConfigError(
            f"model.upsample_strides product {cfg.model.hop} != "
            f"feature.hop_length {cfg.feature.hop_length}"
        )
    if cfg.model.mel_bins != cfg.feature.n_mels:
        raise ConfigError(
            f"model.mel_bins {cfg.model.mel_bins} != feature.n_mels {cfg.feature.n_mels}"
        )
    if cfg.train.segment_length % cfg.feature.hop_length != 0:
        raise ConfigError(
            f"train.segment_length {cfg.train.segment_length} is not a multiple "
            f"of feature.hop_length {cfg.feature.hop_length}"
        )
