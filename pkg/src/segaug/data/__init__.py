from .records import (
    ManifestEntry,
    Record,
    load_dataset,
    load_record,
    read_manifest,
    read_pgm,
    save_dataset,
    save_record,
    write_manifest,
    write_pgm,
)
from .shapesmed import ShapesMedConfig, class_counts, generate_shapesmed
from .splits import split_protocol

__all__ = [
    "ManifestEntry",
    "Record",
    "ShapesMedConfig",
    "class_counts",
    "generate_shapesmed",
    "load_dataset",
    "load_record",
    "read_manifest",
    "read_pgm",
    "save_dataset",
    "save_record",
    "split_protocol",
    "write_manifest",
    "write_pgm",
]
