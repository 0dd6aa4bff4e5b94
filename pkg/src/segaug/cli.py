"""Synthetic augmentation experiments for class-imbalanced segmentation.

Exit status: 0 success, 1 self-check failure, 2 usage or configuration
error, 3 numeric divergence, 4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .autodiff import NumericError, set_default_dtype
from .autodiff.serialize import FormatError
from .config import ConfigError, dump_config, load_config
from .data import generate_shapesmed, load_dataset, save_dataset, write_pgm
from .data.records import ManifestEntry, write_manifest, save_record

log = logging.getLogger("segaug")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def _config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides["data_seed"] = args.seed
    return load_config(args.config, overrides)


def _train_records(data_dir):
    records = load_dataset(data_dir)
    train = [r for r in records if r.split == "train"]
    if not train:
        raise UsageError(f"{data_dir}: no records with split 'train'")
    return train


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    records = generate_shapesmed(cfg.data)
    manifest = save_dataset(args.out, records)
    (Path(args.out) / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
    counts = np.bincount([r.global_class for r in records], minlength=cfg.data.n_classes)
    print(f"wrote {len(records)} records to {manifest.parent} (class counts {counts.tolist()})")
    return EXIT_OK


def cmd_train(args) -> int:
    from .models import FrozenSegmentor, load_checkpoint, save_checkpoint
    from .pipeline import train_redgan, train_segmentor

    cfg = _config(args)
    train_cfg = cfg.train
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    trace_path = out.parent / "loss_trace.csv"
    if args.what == "seg":
        records = _train_records(args.data)
        res = train_segmentor(records, train_cfg)
        steps_per_epoch = -(-len(records) // train_cfg.batch_size)
        _write_csv(
            trace_path,
            ["step", "epoch", "loss"],
            [(i, i // steps_per_epoch, f"{v:.8g}") for i, v in enumerate(res.step_losses)],
        )
        save_checkpoint(out, {"segmentor": res.model}, {"fingerprint": cfg.fingerprint()})
        print(f"segmentor: {len(res.step_losses)} steps, final epoch loss {res.epoch_losses[-1]:.4f} -> {out}")
        return EXIT_OK

    if args.seg is None:
        raise UsageError("train gan needs --seg <segmentor checkpoint> (the frozen third player)")
    if not Path(args.seg).is_file():
        raise UsageError(f"segmentor checkpoint not found: {args.seg}")
    models, _ = load_checkpoint(args.seg)
    if "segmentor" not in models:
        raise UsageError(f"{args.seg} holds no segmentor")
    seg = models["segmentor"]
    train_cfg.segmentor = seg.spec
    train_cfg.third_player = not args.no_third_player
    train_cfg.sync()
    records = _train_records(args.data)
    res = train_redgan(records, FrozenSegmentor(seg), train_cfg)
    cols = ["step", "d_loss", "g_hinge", "fm", "g_loss"]
    _write_csv(trace_path, cols, [[row["step"]] + [f"{row[c]:.8g}" for c in cols[1:]] for row in res.trace])
    save_checkpoint(
        out,
        {"generator": res.generator, "discriminator": res.discriminator},
        {"third_player": str(train_cfg.third_player).lower(), "fingerprint": cfg.fingerprint()},
    )
    print(f"gan: {len(res.trace)} steps (third player {'on' if train_cfg.third_player else 'off'}) -> {out}")
    return EXIT_OK


def _grid(images: np.ndarray, cols: int = 8) -> np.ndarray:
    """Tile (N, S, S) into one 2-D array with a 1-pixel dark border."""
    n, s, _ = images.shape
    cols = min(cols, n)
    rows = -(-n // cols)
    out = -np.ones((rows * (s + 1) + 1, cols * (s + 1) + 1))
    for i, img in enumerate(images):
        r, c = divmod(i, cols)
        out[1 + r * (s + 1) : 1 + r * (s + 1) + s, 1 + c * (s + 1) : 1 + c * (s + 1) + s] = img
    return out


def cmd_synth(args) -> int:
    from .models import load_checkpoint
    from .pipeline import synthesize_strategy_I, synthesize_strategy_II

    if args.strategy == "I" and args.cls is None:
        raise UsageError("strategy I needs --class")
    if not Path(args.checkpoint).is_file():
        raise UsageError(f"generator checkpoint not found: {args.checkpoint}")
    models, _ = load_checkpoint(args.checkpoint)
    if "generator" not in models:
        raise UsageError(f"{args.checkpoint} holds no generator")
    gen = models["generator"]
    train = _train_records(args.data)
    if args.strategy == "I":
        if not 0 <= args.cls < gen.spec.n_classes:
            raise UsageError(f"--class {args.cls} outside [0, {gen.spec.n_classes})")
        batch = synthesize_strategy_I(gen, train, args.cls)
    else:
        batch = synthesize_strategy_II(gen, train)
    out = Path(args.out)
    (out / "records").mkdir(parents=True, exist_ok=True)
    entries, prov = [], []
    for it in batch:
        rec = it.to_record()
        rel = f"records/{rec.id}.rgt"
        save_record(out / rel, rec)
        entries.append(ManifestEntry(rel, rec.global_class, rec.split))
        prov.append((rec.id, it.source_id, it.class_id))
    write_manifest(out / "manifest.tsv", entries)
    _write_csv(out / "provenance.csv", ["id", "source_id", "class_id"], prov)
    if args.grid and len(batch):
        imgs = np.stack([it.image for it in batch][: args.grid_size])
        for m in range(imgs.shape[1]):
            write_pgm(out / f"grid_mod{m}.pgm", _grid(imgs[:, m]))
    print(f"synthesized {len(batch)} records (strategy {args.strategy}) -> {out}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    from .pipeline.experiment import run_experiment
    from .pipeline.report import write_report

    cfg = _config(args)
    if args.data:
        records = load_dataset(args.data)
    else:
        records = generate_shapesmed(cfg.data)
    strategies = args.strategy or ["I", "II"]
    if "I" in strategies and args.cls is None and cfg.target_class < 0:
        log.info("strategy I without --class: using the rarest class")
    report = run_experiment(
        cfg, records, strategies=strategies, target_class=args.cls, progress=lambda m: log.info("%s", m)
    )
    paths = write_report(args.out, report)
    failed = sum(c.failed for c in report.cells)
    for key, err in sorted(report.errors.items()):
        print(f"failed: condition {key[0]} fold {key[1]}: {err}", file=sys.stderr)
    print(f"report: {paths['cells']} ({len(report.cells)} cells, {failed} failed)")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck

    t0 = time.perf_counter()
    results = run_selfcheck()
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:<22} {r.seconds:7.2f}s  {r.detail}")
        for f in r.failures:
            print(f"     failed: {f}")
        ok &= r.passed
    print(f"selfcheck {'passed' if ok else 'FAILED'} in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # subcommands repeat the global flags; their defaults must not clobber
        # values given before the subcommand name
        kw = {"default": argparse.SUPPRESS} if suppress else {}
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--config", help="key=value configuration file", **kw)
        g.add_argument("--seed", type=int, help="overrides the training and dataset seeds", **kw)
        g.add_argument("--threads", type=int, help="cap BLAS threads (1 = deterministic)", **kw)
        g.add_argument("--f64", action="store_true", help="compute in float64", **kw)
        g.add_argument("-v", "--verbose", action="store_true", **kw)
        return g

    common = global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="segaug", description=__doc__.splitlines()[0], parents=[global_flags(False)])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write a ShapesMed dataset")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train the segmentor or the three-player GAN")
    t.add_argument("what", choices=["seg", "gan"])
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path; loss_trace.csv goes next to it")
    t.add_argument("--seg", help="frozen segmentor checkpoint (train gan)")
    t.add_argument("--no-third-player", action="store_true", help="feed zeros instead of segmentor features")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("synth", parents=[common], help="synthesize records with a trained generator")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--strategy", choices=["I", "II"], required=True)
    s.add_argument("--class", dest="cls", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--grid", action="store_true", help="also write one PGM image grid per modality")
    s.add_argument("--grid-size", type=int, default=32)
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("experiment", parents=[common], help="cross-validated augmentation experiment")
    e.add_argument("--data", help="dataset directory (default: generate from the config)")
    e.add_argument("--out", required=True)
    e.add_argument("--strategy", action="append", choices=["I", "II", "synthetic"])
    e.add_argument("--class", dest="cls", type=int)
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("selfcheck", parents=[common], help="gradient checks and reference oracles")
    c.set_defaults(func=cmd_selfcheck)
    return p


def _thread_limit(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise UsageError("--threads must be at least 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    set_default_dtype(np.float64 if args.f64 else np.float32)
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, FormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    finally:
        set_default_dtype(np.float32)


if __name__ == "__main__":
    sys.exit(main())
