"""Record type, record files, manifests and PGM dumps."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff.serialize import FormatError, load_container, save_container

MANIFEST_VERSION = 1
_MANIFEST_MAGIC = f"#segaug-manifest {MANIFEST_VERSION}"


@dataclass
class Record:
    image: np.ndarray  # (C_mod, S, S) float32 in [-1, 1]
    mask: np.ndarray  # (S, S) uint8 labels in [0, L]
    global_class: int
    id: str
    split: str = "train"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Record)
            and self.id == other.id
            and self.global_class == other.global_class
            and self.split == other.split
            and self.image.dtype == other.image.dtype
            and np.array_equal(self.image, other.image)
            and self.mask.dtype == other.mask.dtype
            and np.array_equal(self.mask, other.mask)
        )


def save_record(path, record: Record) -> None:
    if any(ch in record.id for ch in "\t\n"):
        raise FormatError("record id may not contain tabs or newlines")
    header = {"record": f"{record.id}\t{record.global_class}\t{record.split}"}
    entries = {
        "image": np.asarray(record.image, dtype=np.float32),
        "mask": np.asarray(record.mask, dtype=np.uint8),
    }
    save_container(path, header, entries)


def load_record(path) -> Record:
    header, entries = load_container(path)
    try:
        rid, cls, split = header["record"].split("\t")
        cls = int(cls)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed record header") from exc
    if set(entries) != {"image", "mask"}:
        raise FormatError(f"{path}: expected image and mask entries, found {sorted(entries)}")
    image, mask = entries["image"], entries["mask"]
    if image.dtype != np.float32 or mask.dtype != np.uint8:
        raise FormatError(f"{path}: wrong entry dtypes {image.dtype}, {mask.dtype}")
    if image.ndim != 3 or mask.shape != image.shape[1:]:
        raise FormatError(f"{path}: inconsistent shapes {image.shape}, {mask.shape}")
    return Record(image=image, mask=mask, global_class=cls, id=rid, split=split)


@dataclass
class ManifestEntry:
    path: str
    global_class: int
    split: str


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    seen = set()
    lines = [_MANIFEST_MAGIC]
    for e in entries:
        if e.path in seen:
            raise FormatError(f"duplicate manifest path {e.path}")
        seen.add(e.path)
        lines.append(f"{e.path}\t{e.global_class}\t{e.split}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path, n_classes: int | None = None) -> list[ManifestEntry]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != _MANIFEST_MAGIC:
        raise FormatError(f"{path}: missing manifest header")
    out, seen = [], set()
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
        p, cls, split = parts
        try:
            cls = int(cls)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: class id is not an integer") from exc
        if cls < 0 or (n_classes is not None and cls >= n_classes):
            raise FormatError(f"{path}:{lineno}: class id {cls} out of range")
        if p in seen:
            raise FormatError(f"{path}:{lineno}: duplicate path {p}")
        seen.add(p)
        out.append(ManifestEntry(p, cls, split))
    return out


def save_dataset(out_dir, records: list[Record], manifest_name: str = "manifest.tsv") -> Path:
    out_dir = Path(out_dir)
    (out_dir / "records").mkdir(parents=True, exist_ok=True)
    entries = []
    for r in records:
        rel = f"records/{r.id}.rgt"
        save_record(out_dir / rel, r)
        entries.append(ManifestEntry(rel, r.global_class, r.split))
    mpath = out_dir / manifest_name
    write_manifest(mpath, entries)
    return mpath


def load_dataset(data_dir, manifest_name: str = "manifest.tsv") -> list[Record]:
    data_dir = Path(data_dir)
    mpath = data_dir / manifest_name
    if not mpath.exists():
        raise FileNotFoundError(f"no manifest at {mpath}")
    records = []
    for e in read_manifest(mpath):
        r = load_record(data_dir / e.path)
        if r.global_class != e.global_class:
            raise FormatError(f"{e.path}: class in file ({r.global_class}) disagrees with manifest ({e.global_class})")
        records.append(r)
    return records


def write_pgm(path, channel: np.ndarray) -> None:
    """Binary PGM (P5) of a 2-D array in [-1, 1]."""
    arr = np.asarray(channel, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    px = np.clip(np.round((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)
    h, w = px.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(px.tobytes())
    os.chmod(path, 0o644)


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise FormatError("not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
