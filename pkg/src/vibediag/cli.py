"""Command-line front end for the diagnosis pipeline.

Stages write only into their --out directory and leave a manifest.json
recording the command, package version, resolved seed, the full config
echo and sha256 checksums of every artifact, so any run can be reproduced
from its manifest alone.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

import vibediag
from vibediag.band_features import find_torsional_peaks, magnitude_spectrum
from vibediag.config import RunConfig, config_to_dict, load_config, resolve_seed
from vibediag.embedding import pca_fit, pca_reduce, subsample_indices, tsne
from vibediag.hht import write_image
from vibediag.hybrid_model import (
    BRANCH_BUILDERS,
    SpectrumImage,
    assign_splits,
    classification_report,
    confusion_to_csv,
    evaluate_arrays,
    load_dataset,
    render_report,
    save_dataset,
)
from vibediag.nn_engine import load_model, save_model, train
from vibediag.pipeline import featurize_recordings, load_recordings_dir
from vibediag.signal_model import (
    FaultLabel,
    Recording,
    load_recording,
    preset_spec,
    save_recording,
    synthesize_recording,
)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: Path, command: str, seed: int, config: RunConfig,
                   artifacts: list[Path], extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "version": vibediag.__version__,
        "seed": seed,
        "config": config_to_dict(config),
        "artifacts": {str(p.relative_to(out_dir)): _sha256(p) for p in sorted(artifacts)},
    }
    if extra:
        manifest["extra"] = extra
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _prepare_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _override(obj, name, value):
    if value is not None:
        setattr(obj, name, value)


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    sim = config.simulate
    for name in ("duration_s", "noise_sigma", "sample_rate_hz", "recordings_per_class"):
        _override(sim, name, getattr(args, name))
    out = _prepare_out(args.out)
    artifacts = []
    for label in FaultLabel:
        for rep in range(sim.recordings_per_class):
            spec = preset_spec(
                label,
                duration_s=sim.duration_s,
                sample_rate_hz=sim.sample_rate_hz,
                shaft_hz=sim.shaft_hz,
                noise_sigma=sim.noise_sigma,
                impulse_amplitude=sim.impulse_amplitude,
            )
            rec_seed = seed * 1000 + int(label) * 10 + rep
            rec_id = f"{label.canonical_name.lower()}-r{rep}"
            rec = synthesize_recording(spec, rec_seed, id=rec_id)
            path = out / f"{rec_id}.csv"
            save_recording(rec, path)
            artifacts.extend([path, path.with_suffix("").with_suffix(".meta.json")])
    write_manifest(out, "simulate", seed, config, artifacts)
    print(f"simulate: wrote {len(artifacts) // 2} recordings to {out}")
    return 0


def cmd_srs(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    band = config.band
    _override(band, "search_lo_hz", args.lo)
    _override(band, "search_hi_hz", args.hi)
    rec = load_recording(args.recording)
    spectrum = magnitude_spectrum(rec.angular, rec.sample_rate_hz, taper=band.taper)
    peaks = find_torsional_peaks(spectrum, band.search_lo_hz, band.search_hi_hz)
    payload = {
        "peaks_hz": [p.center_hz for p in peaks],
        "prominence": [p.prominence for p in peaks],
    }
    if args.out:
        out = _prepare_out(Path(args.out).parent or Path("."))
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload))
    return 0


def cmd_featurize(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    _override(config.segmentation, "window_len", args.window_len)
    _override(config.segmentation, "hop", args.hop)
    _override(config.hht, "channels", args.channels)
    _override(config.hht, "freq_max_hz", args.freq_max_hz)
    if args.srs:
        rec = load_recording(args.srs)
        spectrum = magnitude_spectrum(rec.angular, rec.sample_rate_hz, taper=config.band.taper)
        peaks = find_torsional_peaks(spectrum, config.band.search_lo_hz, config.band.search_hi_hz)
        config.band.centers_hz = tuple(p.center_hz for p in peaks)
    recordings = load_recordings_dir(args.recordings)
    dataset = featurize_recordings(recordings, config, jobs=args.jobs, seed=seed)
    out = _prepare_out(args.out)
    save_dataset(dataset, out)
    write_manifest(out, "featurize", seed, config,
                   [out / "dataset.json", out / "dataset.bin"],
                   extra={"examples": len(dataset)})
    print(f"featurize: {len(dataset)} windows -> {out}")
    return 0


def cmd_split(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    spec = config.split
    spec.seed = seed
    _override(spec, "test_fraction", args.test_fraction)
    _override(spec, "val_fraction", args.val_fraction)
    if args.stratified:
        spec.stratified = True
    dataset_dir = Path(args.dataset)
    dataset = load_dataset(dataset_dir)
    assign_splits(dataset, spec)
    save_dataset(dataset, dataset_dir)
    write_manifest(dataset_dir, "split", seed, config,
                   [dataset_dir / "dataset.json", dataset_dir / "dataset.bin"],
                   extra={name: len(keys) for name, keys in dataset.splits.items()})
    counts = {name: len(keys) for name, keys in dataset.splits.items()}
    print(f"split: {counts}")
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    tcfg = config.train
    tcfg.seed = seed
    for name in ("learning_rate", "batch_size", "max_epochs", "patience"):
        _override(tcfg, name, getattr(args, name))

    dataset = load_dataset(args.dataset)
    channels = dataset.images.shape[3]
    model = BRANCH_BUILDERS[args.branch](channels=channels, seed=seed)

    def arrays(split_name):
        images, feats, _, onehot = dataset.arrays_for(split_name)
        if args.branch == "cnn":
            return images, None, onehot
        if args.branch == "mlp":
            return None, feats, onehot
        return images, feats, onehot

    model, history = train(model, arrays("train"), arrays("val"), tcfg)

    out = _prepare_out(args.out)
    config_echo = {"branch": args.branch, "dataset": str(Path(args.dataset).resolve()),
                   "dataset_sha256": _sha256(Path(args.dataset) / "dataset.bin")}
    save_model(model, out, seed=seed, config={**config_echo, **config_to_dict(config)["train"]})
    history.to_csv(out / "history.csv")
    write_manifest(out, "train", seed, config,
                   [out / "model.json", out / "model.bin", out / "history.csv"],
                   extra={"branch": args.branch, "epochs_run": len(history),
                          "best_epoch": history.best_epoch,
                          "best_val_loss": min(history.val_loss)})
    print(f"train[{args.branch}]: {len(history)} epochs, best epoch {history.best_epoch}, "
          f"val acc {history.val_accuracy[history.best_epoch - 1]:.4f}")
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    dataset = load_dataset(args.dataset)
    model, model_manifest = load_model(args.checkpoint)
    branch = (model_manifest.get("config") or {}).get("branch", "hybrid")
    images, feats, labels, _ = dataset.arrays_for(args.split)
    if branch == "cnn":
        feats = None
    elif branch == "mlp":
        images = None
    metrics = evaluate_arrays(model, images, feats, labels)
    report = classification_report(metrics)

    out = _prepare_out(args.out)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    confusion_to_csv(metrics.confusion, out / "confusion.csv")
    write_manifest(out, "eval", seed, config,
                   [out / "report.json", out / "confusion.csv"],
                   extra={"split": args.split, "branch": branch, "accuracy": metrics.accuracy})
    print(render_report(metrics))
    return 0


def cmd_embed(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    config.tsne.seed = seed
    _override(config.tsne, "perplexity", args.perplexity)
    _override(config.tsne, "iterations", args.iterations)

    dataset = load_dataset(args.dataset)
    flat = dataset.images.reshape(len(dataset), -1)
    model = pca_fit(flat)

    out = _prepare_out(args.out)
    curve_lines = ["k,cumulative_ratio"] + [
        f"{k + 1},{float(r)!r}" for k, r in enumerate(model.cumulative_ratio)
    ]
    (out / "variance_curve.csv").write_text("\n".join(curve_lines) + "\n")

    target = args.target if args.target is not None else 0.99
    if target >= model.cumulative_ratio[-1]:
        target = int(model.cumulative_ratio.size)  # fall back to full rank
    reduced = pca_reduce(model, flat, target)

    picked = subsample_indices(len(dataset), args.max_points, seed)
    embedding, kl = tsne(reduced[picked], config.tsne)
    rows = ["id,x,y,label"]
    for pos, idx in enumerate(picked):
        label = FaultLabel(int(dataset.labels[idx]))
        rows.append(f"{dataset.provenance[idx]},{float(embedding[pos, 0])!r},"
                    f"{float(embedding[pos, 1])!r},{label.canonical_name}")
    (out / "embedding.csv").write_text("\n".join(rows) + "\n")
    write_manifest(out, "embed", seed, config,
                   [out / "variance_curve.csv", out / "embedding.csv"],
                   extra={"points": int(picked.size),
                          "components": int(reduced.shape[1]),
                          "kl_after_exaggeration": float(kl[min(config.tsne.exaggeration_iters, len(kl) - 1)]),
                          "kl_final": float(kl[-1])})
    print(f"embed: {picked.size} points, {reduced.shape[1]} components -> {out}")
    return 0


def cmd_export_images(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    dataset = load_dataset(args.dataset)
    out = _prepare_out(args.out)
    suffix = ".ppm" if dataset.images.shape[3] == 3 else ".pgm"
    artifacts = []
    for i, key in enumerate(dataset.provenance):
        image = SpectrumImage(pixels=dataset.images[i], freq_max_hz=0.0)
        path = out / (key.replace(":", "_") + suffix)
        write_image(image, path)
        artifacts.append(path)
    write_manifest(out, "export-images", seed, config, artifacts)
    print(f"export-images: {len(artifacts)} files -> {out}")
    return 0


def cmd_import(args) -> int:
    """Adapt an externally downloaded raw CSV into the recording format."""
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    src = Path(args.src)
    raw = np.loadtxt(src, delimiter=args.delimiter, skiprows=1 if args.has_header else 0)
    if raw.ndim == 1:
        raw = raw[:, None]
    linear_cols = [int(c) for c in args.linear_cols.split(",")]
    if len(linear_cols) not in (1, 2):
        raise ValueError("--linear-cols takes one or two comma-separated column indices")
    linear = raw[:, linear_cols].T
    angular = raw[:, int(args.angular_col)]
    rec = Recording(
        sample_rate_hz=args.sample_rate_hz,
        rpm=args.rpm,
        label=FaultLabel.from_name(args.label),
        linear=linear,
        angular=angular,
        id=args.id or src.stem,
    )
    out = _prepare_out(args.out)
    path = out / f"{rec.id}.csv"
    save_recording(rec, path)
    write_manifest(out, "import", seed, config,
                   [path, path.with_suffix("").with_suffix(".meta.json")])
    print(f"import: {src} -> {path} ({rec.n_samples} samples)")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--seed", type=int, help="seed (falls back to config, then $VIBEDIAG_SEED)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vibediag",
                                     description="Bearing fault diagnosis pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize one recording set per fault class")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--duration-s", dest="duration_s", type=float)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--sample-rate-hz", dest="sample_rate_hz", type=float)
    p.add_argument("--recordings-per-class", dest="recordings_per_class", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("srs", help="locate torsional resonance peaks in a shock recording")
    _add_common(p)
    p.add_argument("--recording", required=True)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_srs)

    p = sub.add_parser("featurize", help="windows -> spectrum images + band features")
    _add_common(p)
    p.add_argument("--recordings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--srs", help="shock recording; overrides band centers")
    p.add_argument("--window-len", dest="window_len", type=int)
    p.add_argument("--hop", type=int)
    p.add_argument("--channels", type=int, choices=(1, 3))
    p.add_argument("--freq-max-hz", dest="freq_max_hz", type=float)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("split", help="attach train/val/test membership and the feature scaler")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--stratified", action="store_true")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model branch on a featurized dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--branch", choices=("hybrid", "cnn", "mlp"), default="hybrid")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="PCA variance curve + t-SNE map of the images")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", type=float, help="variance fraction for PCA reduction")
    p.add_argument("--max-points", dest="max_points", type=int, default=2000)
    p.add_argument("--perplexity", type=float)
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("export-images", help="write one PPM/PGM per window")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_images)

    p = sub.add_parser("import", help="adapt an external raw CSV into the recording format")
    _add_common(p)
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sample-rate-hz", dest="sample_rate_hz", type=float, required=True)
    p.add_argument("--rpm", type=float, required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--id")
    p.add_argument("--linear-cols", dest="linear_cols", default="0")
    p.add_argument("--angular-col", dest="angular_col", default="1")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--has-header", dest="has_header", action="store_true")
    p.set_defaults(func=cmd_import)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
