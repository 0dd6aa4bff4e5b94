"""Procedural stand-in for multi-center lesion data with controllable class imbalance.

Each record is an elliptical "anatomy" with nested lesion blobs drawn into the
label mask. Image channels are rendered from the mask; the global class sets
the appearance (intensity gain, stripe texture frequency, noise level).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .records import Record


def _default_styles(k: int) -> tuple[list, list, list]:
    gains = list(np.round(np.linspace(1.0, 0.5, k), 4)) if k > 1 else [1.0]
    freqs = list(np.round(np.linspace(2.0, 8.0, k), 4)) if k > 1 else [4.0]
    noise = list(np.round(np.linspace(0.02, 0.12, k), 4)) if k > 1 else [0.05]
    return [float(x) for x in gains], [float(x) for x in freqs], [float(x) for x in noise]


@dataclass
class ShapesMedConfig:
    n_records: int = 100
    image_size: int = 64
    n_classes: int = 3
    n_modalities: int = 2
    n_labels: int = 2
    class_proportions: list = field(default_factory=lambda: [0.7, 0.2, 0.1])
    class_gains: list = field(default_factory=list)
    class_frequencies: list = field(default_factory=list)
    class_noise: list = field(default_factory=list)
    lesion_count_min: int = 1
    lesion_count_max: int = 2
    lesion_radius_min: float = 0.08
    lesion_radius_max: float = 0.16
    texture_amplitude: float = 0.15
    seed: int = 0

    def __post_init__(self):
        gains, freqs, noise = _default_styles(self.n_classes)
        self.class_gains = list(self.class_gains) or gains
        self.class_frequencies = list(self.class_frequencies) or freqs
        self.class_noise = list(self.class_noise) or noise
        self.class_proportions = [float(p) for p in self.class_proportions]

    def validate(self) -> None:
        k = self.n_classes
        props = np.asarray(self.class_proportions, dtype=np.float64)
        if len(props) != k:
            raise ValueError(f"class_proportions: expected {k} values, got {len(props)}")
        if np.any(props <= 0) or abs(props.sum() - 1.0) > 1e-9:
            raise ValueError(f"class_proportions: must be positive and sum to 1 (sum={props.sum():.12g})")
        for name in ("class_gains", "class_frequencies", "class_noise"):
            if len(getattr(self, name)) != k:
                raise ValueError(f"{name}: expected {k} values")
        if self.image_size < 16 or self.image_size & (self.image_size - 1):
            raise ValueError(f"image_size: {self.image_size} not supported (power of 2, >= 16)")
        if self.n_records < 1 or self.n_labels < 1 or self.n_modalities < 1:
            raise ValueError("n_records, n_labels and n_modalities must be positive")
        if not 1 <= self.lesion_count_min <= self.lesion_count_max:
            raise ValueError("lesion count range invalid")
        if not 0 < self.lesion_radius_min <= self.lesion_radius_max < 0.5:
            raise ValueError("lesion radius range invalid")


def class_counts(n: int, proportions) -> list[int]:
    """Floor allocation; the remainder goes to the largest class."""
    props = np.asarray(proportions, dtype=np.float64)
    counts = np.floor(props * n + 1e-9).astype(int)
    counts[int(np.argmax(props))] += n - int(counts.sum())
    return counts.tolist()


def _modality_table(n_modalities: int, n_labels: int) -> np.ndarray:
    """Intensity per (modality, region) where region 0 = air, 1 = tissue, 2.. = lesion labels."""
    table = np.empty((n_modalities, n_labels + 2))
    for m in range(n_modalities):
        table[m, 0] = -0.9
        table[m, 1] = -0.2 + 0.3 * (m % 2)
        for lab in range(1, n_labels + 1):
            phase = (lab + m) % (n_labels + 1)
            table[m, lab + 1] = 0.25 + 0.45 * phase / max(n_labels, 1)
    return table


def _render(cfg: ShapesMedConfig, global_class: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    s = cfg.image_size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64) + 0.5
    cy, cx = s / 2 + rng.uniform(-0.05, 0.05, 2) * s
    ay, ax = rng.uniform(0.32, 0.4, 2) * s
    anatomy = ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2 <= 1.0
    region = np.where(anatomy, 1, 0)
    mask = np.zeros((s, s), dtype=np.uint8)
    for _ in range(rng.integers(cfg.lesion_count_min, cfg.lesion_count_max + 1)):
        r = rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max) * s
        ang = rng.uniform(0, 2 * np.pi)
        rad = rng.uniform(0, 0.6)
        ly = cy + rad * (ay - r) * np.sin(ang)
        lx = cx + rad * (ax - r) * np.cos(ang)
        stretch = rng.uniform(0.75, 1.25)
        d = np.sqrt(((yy - ly) / (r * stretch)) ** 2 + ((xx - lx) / (r / stretch)) ** 2)
        for lab in range(1, cfg.n_labels + 1):
            inside = d <= 1.0 - (lab - 1) / (cfg.n_labels + 1)
            mask[inside] = lab
    region = np.where(mask > 0, mask.astype(int) + 1, region)

    table = _modality_table(cfg.n_modalities, cfg.n_labels)
    theta = rng.uniform(0, np.pi)
    phi = rng.uniform(0, 2 * np.pi)
    freq = cfg.class_frequencies[global_class]
    stripes = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) / s + phi)
    texture = cfg.texture_amplitude * stripes * (region > 0)
    gain = cfg.class_gains[global_class]
    sigma = cfg.class_noise[global_class]
    image = np.empty((cfg.n_modalities, s, s), dtype=np.float32)
    for m in range(cfg.n_modalities):
        chan = gain * (table[m][region] + texture) + sigma * rng.standard_normal((s, s))
        image[m] = np.clip(chan, -1.0, 1.0)
    return image, mask


def generate_shapesmed(cfg: ShapesMedConfig) -> list[Record]:
    """Deterministic surrogate dataset; record i uses its own RNG stream."""
    cfg.validate()
    counts = class_counts(cfg.n_records, cfg.class_proportions)
    classes = np.repeat(np.arange(cfg.n_classes), counts)
    np.random.default_rng(cfg.seed).shuffle(classes)
    records = []
    for i, c in enumerate(classes):
        rng = np.random.default_rng([cfg.seed, i])
        image, mask = _render(cfg, int(c), rng)
        records.append(Record(image=image, mask=mask, global_class=int(c), id=f"rec{i:05d}"))
    return records
