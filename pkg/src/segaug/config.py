"""Flat ``key = value`` run configuration.

One key per line, ``#`` starts a comment. Keys cover the training options,
the dataset generator, the experiment protocol and the architecture specs
(prefixed ``generator.``, ``discriminator.`` and ``segmentor.``). The keys
``image_size``, ``n_classes``, ``n_modalities`` and ``n_labels`` are shared
by the dataset and every model. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

from .data.shapesmed import ShapesMedConfig
from .models.specs import DiscriminatorSpec, GeneratorSpec, SegmentorSpec
from .pipeline.config import ExperimentConfig, TrainConfig

SHARED = ("image_size", "n_classes", "n_modalities", "n_labels")
EXPERIMENT_KEYS = {"n_folds": int, "test_fraction": float, "target_class": int}
SPECS = {"generator": GeneratorSpec, "discriminator": DiscriminatorSpec, "segmentor": SegmentorSpec}
# derived by TrainConfig.sync and therefore not settable
DERIVED = {
    "segmentor.n_modalities",
    "segmentor.n_labels",
    "discriminator.label_channels",
    "discriminator.n_modalities",
    "discriminator.feat_channels",
}


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


def _field_defaults(cls) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            out[f.name] = f.default_factory()
    return out


def _known_keys() -> dict[str, object]:
    """Map every accepted key to an example default (used for type coercion)."""
    keys: dict[str, object] = {}
    for name, default in _field_defaults(TrainConfig).items():
        if name not in SPECS:
            keys[name] = default
    for name, default in _field_defaults(ShapesMedConfig).items():
        keys["data_seed" if name == "seed" else name] = default
    for k, t in EXPERIMENT_KEYS.items():
        keys[k] = t(0)
    for prefix, cls in SPECS.items():
        for name, default in _field_defaults(cls).items():
            key = f"{prefix}.{name}"
            if name in SHARED or key in DERIVED:
                continue
            keys[key] = default
    return keys


KNOWN_KEYS = _known_keys()


def _coerce(raw: str, example, key: str, line: int | None):
    try:
        if isinstance(example, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if isinstance(example, int):
            return int(raw)
        if isinstance(example, float):
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("must be finite")
            return v
        if isinstance(example, list):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            conv = float if key.startswith("class_") else int
            return [conv(x) for x in items]
        return raw
    except ValueError as exc:
        raise ConfigError(str(exc), key, line) from None


def parse_config_text(text: str) -> tuple[dict, dict]:
    """Return (values, line numbers) for a key=value document."""
    values, lines = {}, {}
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=n)
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=n)
        if key not in KNOWN_KEYS:
            raise ConfigError("unknown key", key, n)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key, n)
        values[key] = _coerce(value, KNOWN_KEYS[key], key, n)
        lines[key] = n
    return values, lines


def build_config(values: dict, lines: dict | None = None) -> ExperimentConfig:
    lines = lines or {}

    def fail(msg, key):
        raise ConfigError(msg, key, lines.get(key))

    for key, v in values.items():
        if key not in KNOWN_KEYS:
            fail("unknown key", key)
    data_kw = {}
    for name in _field_defaults(ShapesMedConfig):
        key = "data_seed" if name == "seed" else name
        if key in values:
            data_kw[name] = values[key]
    try:
        data = ShapesMedConfig(**data_kw)
        data.validate()
    except ValueError as exc:
        msg = str(exc)
        key = msg.split(":", 1)[0] if ":" in msg else None
        key = "data_seed" if key == "seed" else key
        fail(msg.split(": ", 1)[-1] if key in KNOWN_KEYS else msg, key if key in KNOWN_KEYS else None)

    shared = {k: getattr(data, k) for k in SHARED}
    specs = {}
    for prefix, cls in SPECS.items():
        kw = {name: values[f"{prefix}.{name}"] for name in _field_defaults(cls) if f"{prefix}.{name}" in values}
        if prefix == "generator":
            kw.update(shared)
            if "generator.n_upsamples" not in values and shared["image_size"] >= 32:
                # keep the 8x8 base resolution of the default layout
                kw["n_upsamples"] = int(math.log2(shared["image_size"])) - 3
            if "generator.n_blocks" not in values and "n_upsamples" in kw:
                kw["n_blocks"] = kw["n_upsamples"] + 2
        elif prefix == "segmentor":
            kw.update(n_modalities=shared["n_modalities"], n_labels=shared["n_labels"])
        try:
            specs[prefix] = cls(**kw)
        except ValueError as exc:
            bad = [k for k in kw if f"{prefix}.{k}" in values]
            key = f"{prefix}.{bad[0]}" if bad else "image_size"
            fail(str(exc), key)

    train_kw = {n: values[n] for n in _field_defaults(TrainConfig) if n not in SPECS and n in values}
    train = TrainConfig(**train_kw, **specs)
    try:
        train.validate()
    except ValueError as exc:
        key, _, msg = str(exc).partition(": ")
        fail(msg, key) if key in KNOWN_KEYS else fail(str(exc), None)
    if specs["segmentor"].downsample_factor > data.image_size:
        fail("segmentor downsamples more than the image size allows", "segmentor.stage_depths")

    exp = ExperimentConfig(train=train, data=data)
    for k, t in EXPERIMENT_KEYS.items():
        if k in values:
            setattr(exp, k, values[k])
    if exp.n_folds < 1:
        fail("must be at least 1", "n_folds")
    if not 0 < exp.test_fraction < 1:
        fail("must lie in (0, 1)", "test_fraction")
    if exp.target_class >= data.n_classes or exp.target_class < -1:
        fail(f"must be -1 or a class in [0, {data.n_classes})", "target_class")
    return exp


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a config file (or the defaults when ``path`` is None) plus overrides."""
    values, lines = ({}, {})
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"not UTF-8 text ({exc.reason})") from None
        values, lines = parse_config_text(text)
    for k, v in (overrides or {}).items():
        if k not in KNOWN_KEYS:
            raise ConfigError("unknown key", k)
        values[k] = _coerce(str(v), KNOWN_KEYS[k], k, None) if isinstance(v, str) else v
    return build_config(values, lines)


def dump_config(cfg: ExperimentConfig) -> str:
    d = cfg.to_dict()
    rows = []
    for key in KNOWN_KEYS:
        if key in d:
            rows.append(f"{key} = {d[key]}")
    return "\n".join(rows) + "\n"
