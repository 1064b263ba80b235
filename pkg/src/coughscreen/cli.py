"""Command-line surface: featurize corpora, train, evaluate, and screen.

Exit codes: 0 success, 1 data errors, 2 usage errors. All tabular output
is also written as CSV next to the text report. A config file of
`key = value` lines (keys matching long flag names, # comments allowed)
can preset any flag; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import datasets
from .audio import AudioClip, PIPELINE_RATE, fit_detection_window, fit_diagnosis_window, read_wav, resample
from .errors import CoughScreenError, TaskMismatch
from .features import PROFILES, FeatureProfile, featurize
from .metrics import (
    confusion_matrix,
    confusion_to_csv,
    derive_metrics,
    metrics_to_csv,
    render_confusion_table,
    render_metrics_table,
)
from .models import build_detection_spec, build_diagnosis_spec, load_model, predict, save_model
from .training import TrainConfig, evaluate, train

_SCREEN_COLUMNS = (
    "path",
    "p_cough",
    "gate",
    "p_bronchiolitis",
    "p_bronchitis",
    "p_pertussis",
    "label",
)


def _resolve_profile(name: str) -> FeatureProfile:
    if name in PROFILES:
        return PROFILES[name]
    path = Path(name)
    if path.exists():
        values = _read_kv_file(path)
        fields = {
            k: (int(v) if k not in ("f_min", "f_max", "db_floor") else float(v))
            for k, v in values.items()
        }
        return FeatureProfile(**fields)
    raise CoughScreenError(f"unknown profile {name!r} (not builtin, not a file)")


def _read_kv_file(path) -> dict[str, str]:
    values = {}
    for line_num, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CoughScreenError(f"{path}:{line_num}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _task_spec_builder(task: str):
    return build_detection_spec if task == "detection" else build_diagnosis_spec


# -- featurize -------------------------------------------------------------

def cmd_featurize(args) -> int:
    profile = _resolve_profile(args.profile)
    manifest = datasets.load_manifest(args.manifest, args.task)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run(entry):
        try:
            _, hit = datasets.featurize_entry_cached(entry.path, args.task, profile, out_dir)
            return entry, hit, None
        except Exception as exc:  # report per file, keep going
            return entry, False, exc

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        results = list(pool.map(run, manifest.entries))

    counts: dict[str, int] = {}
    errors = []
    hits = 0
    for entry, hit, exc in results:
        if exc is not None:
            errors.append((entry.path, exc))
        else:
            counts[entry.label] = counts.get(entry.label, 0) + 1
            hits += int(hit)
    summary = ", ".join(f"{label}: {counts.get(label, 0)}" for label in manifest.label_names)
    print(f"featurized {summary} (cache hits: {hits})")
    for path, exc in errors:
        print(f"error: {path}: {exc}", file=sys.stderr)
    return 1 if errors else 0


# -- train -----------------------------------------------------------------

def cmd_train(args) -> int:
    profile = _resolve_profile(args.profile)
    manifest = datasets.load_manifest(args.manifest, args.task)
    assignment = datasets.stratified_split(manifest, seed=args.seed)

    train_data = datasets.load_split_arrays(manifest, assignment, "train", profile, args.cache_dir)
    val_data = datasets.load_split_arrays(manifest, assignment, "val", profile, args.cache_dir)

    spec = _task_spec_builder(args.task)((1, profile.image_h, profile.image_w), filters=args.filters, dense_units=args.dense_units)
    config = TrainConfig(
        max_epochs=args.max_epochs,
        patience=args.patience,
        batch_size=args.batch_size,
        seed=args.seed,
        learning_rate=args.learning_rate,
        min_delta=args.min_delta,
    )
    model, history = train(spec, train_data, val_data, config)
    save_model(model, args.out)
    history.to_csv(args.history or f"{args.out}.history.csv")
    print(
        f"trained {args.task} model: best epoch {history.best_epoch}, "
        f"validation loss {model.best_val_loss:.6f}, stopped by {history.stop_reason}"
    )
    print(f"model written to {args.out}")
    return 0


# -- evaluate ----------------------------------------------------------------

def cmd_evaluate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.predictions:
        label_names = datasets.TASK_CLASSES[args.task]
        pairs = _read_prediction_pairs(args.predictions, label_names)
        cm = confusion_matrix(pairs, label_names)
        report = derive_metrics(cm)
    else:
        if not args.model:
            print("error: evaluate needs --model or --predictions", file=sys.stderr)
            return 2
        model = load_model(args.model)
        manifest = datasets.load_manifest(args.manifest, args.task)
        if model.spec.n_classes != len(manifest.label_names):
            raise TaskMismatch(
                f"{model.spec.n_classes}-class model cannot evaluate task {args.task!r} "
                f"({len(manifest.label_names)} classes)"
            )
        profile = _resolve_profile(args.profile)
        if (profile.image_h, profile.image_w) != model.spec.input_shape[1:]:
            raise TaskMismatch(
                f"profile image {profile.image_h}x{profile.image_w} does not match "
                f"model input {model.spec.input_shape[1:]}"
            )
        assignment = datasets.stratified_split(manifest, seed=args.seed)
        if args.split == "all":
            images, labels = [], []
            for split in ("train", "val", "test"):
                x, y = datasets.load_split_arrays(manifest, assignment, split, profile, args.cache_dir)
                images.append(x)
                labels.append(y)
            data = (np.concatenate(images), np.concatenate(labels))
        else:
            data = datasets.load_split_arrays(manifest, assignment, args.split, profile, args.cache_dir)
        cm, report, mean_loss = evaluate(model, data)
        print(f"mean loss: {mean_loss:.6f}")

    print(render_metrics_table(report, positive_only=len(cm.label_names) == 2))
    print()
    print(render_confusion_table(cm, normalized=True))
    metrics_to_csv(report, out_dir / "metrics.csv")
    confusion_to_csv(cm, out_dir / "confusion.csv")
    return 0


def _read_prediction_pairs(path, label_names):
    to_idx = {name: i for i, name in enumerate(label_names)}
    pairs = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"actual", "predicted"} <= set(reader.fieldnames):
            raise CoughScreenError(f"{path}: predictions need 'actual,predicted' columns")
        for row_num, row in enumerate(reader, start=2):
            try:
                pairs.append((to_idx[row["actual"].strip()], to_idx[row["predicted"].strip()]))
            except KeyError as exc:
                raise CoughScreenError(f"{path}:{row_num}: unknown label {exc}") from None
    return pairs


# -- screen ------------------------------------------------------------------

def _energy_centered_window(clip: AudioClip, seconds: float) -> AudioClip:
    """2 s cut centered on the short-time-energy peak of the clip."""
    target = int(round(seconds * clip.sample_rate))
    if clip.samples.size <= target:
        return fit_diagnosis_window(clip)
    window = max(1, int(0.05 * clip.sample_rate))
    energy = np.convolve(clip.samples**2, np.ones(window), mode="same")
    center = int(np.argmax(energy))
    start = min(max(center - target // 2, 0), clip.samples.size - target)
    return clip.with_samples(clip.samples[start : start + target])


def cmd_screen(args) -> int:
    detector = load_model(args.detection_model)
    diagnoser = load_model(args.diagnosis_model)
    if detector.spec.n_classes != 2:
        raise TaskMismatch("--detection-model must be a 2-class model")
    if diagnoser.spec.n_classes != 3:
        raise TaskMismatch("--diagnosis-model must be a 3-class model")
    profile = _resolve_profile(args.profile)

    def run(path):
        try:
            clip = resample(read_wav(path), PIPELINE_RATE)
            det_image = featurize(fit_detection_window(clip), profile)
            det_probs, _ = predict(detector, det_image)
            p_cough = det_probs.as_dict().get("cough", float(det_probs.probs[1]))
            row = {"path": str(path), "p_cough": f"{p_cough:.4f}"}
            if p_cough >= args.threshold:
                if args.window == "energy":
                    window = _energy_centered_window(clip, 2.0)
                else:
                    window = fit_diagnosis_window(clip)
                diag_probs, label = predict(diagnoser, featurize(window, profile))
                row["gate"] = "pass"
                for name, p in diag_probs.as_dict().items():
                    row[f"p_{name}"] = f"{p:.4f}"
                row["label"] = label
            else:
                row["gate"] = "skip"
            return row, None
        except Exception as exc:
            return {"path": str(path), "gate": "error"}, exc

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        results = list(pool.map(run, args.audio))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    errors = []
    with open(out_dir / "screen.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=_SCREEN_COLUMNS)
        writer.writeheader()
        for row, exc in results:
            writer.writerow({k: row.get(k, "") for k in _SCREEN_COLUMNS})
            line = "  ".join(f"{k}={row[k]}" for k in _SCREEN_COLUMNS if k in row)
            print(line)
            if exc is not None:
                errors.append((row["path"], exc))
    for path, exc in errors:
        print(f"error: {path}: {exc}", file=sys.stderr)
    return 1 if errors else 0


# -- parser ------------------------------------------------------------------

def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="coughscreen", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", default="paper", help="paper, desk, or a profile file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--config", default=None, help="key=value file presetting any flag")

    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    p = subparsers["featurize"] = sub.add_parser(
        "featurize", parents=[common], help="cache spectrogram images for a manifest"
    )
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=("detection", "diagnosis"), required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_featurize)

    p = subparsers["train"] = sub.add_parser(
        "train", parents=[common], help="train a model from a manifest"
    )
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=("detection", "diagnosis"), required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--history", default=None, help="per-epoch CSV path (default: <out>.history.csv)")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--filters", type=int, default=32)
    p.add_argument("--dense-units", type=int, default=128)
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--min-delta", type=float, default=1e-4)
    p.set_defaults(func=cmd_train)

    p = subparsers["evaluate"] = sub.add_parser(
        "evaluate", parents=[common], help="metric tables for a model or predictions"
    )
    p.add_argument("--model", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--task", choices=("detection", "diagnosis"), required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--predictions", default=None, help="actual,predicted CSV instead of a model")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_evaluate)

    p = subparsers["screen"] = sub.add_parser(
        "screen", parents=[common], help="detect then diagnose audio files"
    )
    p.add_argument("--detection-model", required=True)
    p.add_argument("--diagnosis-model", required=True)
    p.add_argument("--threshold", type=float, default=0.5, help="detection gate on P(cough)")
    p.add_argument("--window", choices=("energy", "leading"), default="energy")
    p.add_argument("--out-dir", default=".")
    p.add_argument("audio", nargs="+")
    p.set_defaults(func=cmd_screen)

    return parser, subparsers


def _apply_config(subparsers, argv):
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    values = _read_kv_file(known.config)
    for sub in subparsers.values():
        for action in sub._actions:
            if action.dest in values:
                value = values[action.dest]
                if action.type is not None:
                    value = action.type(value)
                sub.set_defaults(**{action.dest: value})


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, subparsers = build_parser()
    try:
        _apply_config(subparsers, argv)
        args = parser.parse_args(argv)
        if args.command == "evaluate" and not args.predictions and not args.manifest:
            parser.error("evaluate needs --manifest (with --model) or --predictions")
        return args.func(args)
    except CoughScreenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
