"""Confusion matrices, one-vs-rest metrics, stratified fold planning,
per-condition evaluation and inference timing."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import nrc_net
from .errors import ClassError, ConfigError, StratifyError
from .noise_lab import rng_for
from .tf_transforms import load_tfimage


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ClassError(f"confusion matrix must be square, got {counts.shape}")
        if (counts < 0).any():
            raise ClassError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]


def confusion(labels, predictions, n_classes: int = 5) -> ConfusionMatrix:
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape or labels.ndim != 1:
        raise ClassError("labels and predictions must be equal-length vectors")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes
                        or predictions.min() < 0 or predictions.max() >= n_classes):
        raise ClassError(f"class index outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return ConfusionMatrix(counts)


def metrics(cm: ConfusionMatrix) -> dict:
    """One-vs-rest accuracy/sensitivity/specificity per class, macro and micro
    averages, and overall accuracy (trace/total).

    Classes with no true samples have undefined sensitivity; they are omitted
    from the macro mean and listed under ``undefined_sensitivity``.
    """
    counts = cm.counts
    total = cm.total
    if total <= 0:
        raise ClassError("empty confusion matrix")
    per_class = []
    undefined = []
    tn_sum, fp_sum = 0, 0
    for c in range(cm.n_classes):
        tp = int(counts[c, c])
        fn = int(counts[c].sum()) - tp
        fp = int(counts[:, c].sum()) - tp
        tn = total - tp - fn - fp
        tn_sum += tn
        fp_sum += fp
        sens = tp / (tp + fn) if (tp + fn) > 0 else None
        spec = tn / (tn + fp) if (tn + fp) > 0 else None
        if sens is None:
            undefined.append(c)
        per_class.append({"accuracy": (tp + tn) / total,
                          "sensitivity": sens, "specificity": spec})
    defined_sens = [m["sensitivity"] for m in per_class if m["sensitivity"] is not None]
    defined_spec = [m["specificity"] for m in per_class if m["specificity"] is not None]
    trace = int(np.trace(counts))
    return {
        "overall_accuracy": trace / total,
        "per_class": per_class,
        "macro": {
            "accuracy": float(np.mean([m["accuracy"] for m in per_class])),
            "sensitivity": float(np.mean(defined_sens)) if defined_sens else None,
            "specificity": float(np.mean(defined_spec)) if defined_spec else None,
        },
        "micro": {
            "sensitivity": trace / total,
            "specificity": tn_sum / (tn_sum + fp_sum) if (tn_sum + fp_sum) else None,
        },
        "undefined_sensitivity": undefined,
    }


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: dict  # sample id -> fold index
    seed: int

    def fold_members(self, fold: int) -> list:
        return [sid for sid, f in self.assignments.items() if f == fold]

    def fold_sizes(self) -> list:
        sizes = [0] * self.k
        for f in self.assignments.values():
            sizes[f] += 1
        return sizes


def kfold_plan(items, k: int = 10, seed: int = 0) -> FoldPlan:
    """Seeded stratified partition of (sample id, label) pairs into k folds.

    Samples are dealt round-robin within each class, with the starting fold
    carried across classes so overall fold sizes differ by at most one.
    """
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if hasattr(items, "entries"):  # Manifest
        items = [(path, label) for path, label, _ in items.entries]
    by_class: dict = {}
    for sid, label in items:
        by_class.setdefault(label, []).append(sid)
    for label, ids in by_class.items():
        if len(ids) < k:
            raise StratifyError(f"class {label!r} has {len(ids)} samples < k={k}")
    rng = rng_for(seed, 3)
    assignments = {}
    offset = 0
    for label in sorted(by_class):
        ids = by_class[label]
        for i, idx in enumerate(rng.permutation(len(ids))):
            assignments[ids[int(idx)]] = (offset + i) % k
        offset = (offset + len(ids)) % k
    return FoldPlan(k=k, assignments=assignments, seed=seed)


def time_inference(model, n_samples: int = 16, repetitions: int = 5) -> dict:
    """Median wall seconds per sample at batch size 1. Reported only; never a
    pass/fail target (hardware dependent)."""
    if n_samples < 1:
        raise ConfigError(f"n_samples must be >= 1, got {n_samples}")
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    shape = (1,) + model.config.input_shape
    batch = rng_for(model.seed, 4).random(shape, dtype=np.float32)
    model.set_mode("eval")
    nrc_net.forward(model, batch)  # warm-up
    raw = []
    for _ in range(repetitions):
        start = time.perf_counter()
        for _ in range(n_samples):
            nrc_net.forward(model, batch)
        raw.append((time.perf_counter() - start) / n_samples)
    return {"seconds_per_sample": float(np.median(raw)), "raw": raw,
            "n_samples": n_samples, "repetitions": repetitions}


@dataclass
class EvalReport:
    conditions: list = field(default_factory=list)
    results: dict = field(default_factory=dict)  # condition -> metrics + confusion
    param_count: int = 0
    timing: dict = field(default_factory=dict)
    config_hash: str = ""
    seed: int = 0
    training_condition: str = ""

    def accuracy_table(self) -> list:
        return [(cond, self.results[cond]["metrics"]["overall_accuracy"])
                for cond in self.conditions]

    def noisy_average(self) -> float | None:
        noisy = [acc for cond, acc in self.accuracy_table() if cond != "clean"]
        return float(np.mean(noisy)) if noisy else None

    def to_dict(self) -> dict:
        return {"conditions": self.conditions, "results": self.results,
                "param_count": self.param_count, "timing": self.timing,
                "config_hash": self.config_hash, "seed": self.seed,
                "training_condition": self.training_condition,
                "noisy_average_accuracy": self.noisy_average()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write_accuracy_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("condition,accuracy\n")
            for cond, acc in self.accuracy_table():
                fh.write(f"{cond},{acc:.6f}\n")
            avg = self.noisy_average()
            if avg is not None:
                fh.write(f"noisy_average,{avg:.6f}\n")


def _load_image_batch(paths) -> np.ndarray:
    pixels = []
    for path in paths:
        pixels.append(load_tfimage(path).pixels)
    return np.stack(pixels)


def evaluate(checkpoint_path, condition_manifests: dict, seed: int = 0,
             config_hash: str = "", training_condition: str = "",
             batch_size: int = 16, timing_samples: int = 8) -> EvalReport:
    """Eval-mode inference over per-condition image lists.

    ``condition_manifests`` maps a condition name (e.g. "clean", "15db") to a
    list of (tfimage path, class index) pairs. Missing image files surface as
    FileNotFoundError carrying the path.
    """
    model = nrc_net.load_model(checkpoint_path)
    n_classes = model.config.n_classes
    report = EvalReport(param_count=nrc_net.count_params(model),
                        config_hash=config_hash, seed=seed,
                        training_condition=training_condition)
    for cond, entries in condition_manifests.items():
        paths = [p for p, _ in entries]
        labels = np.asarray([lab for _, lab in entries], dtype=np.int64)
        preds = np.empty(len(paths), dtype=np.int64)
        for start in range(0, len(paths), batch_size):
            batch = _load_image_batch(paths[start:start + batch_size])
            probs = nrc_net.forward(model, batch)
            preds[start:start + len(batch)] = probs.argmax(axis=1)
        cm = confusion(labels, preds, n_classes=n_classes)
        report.conditions.append(cond)
        report.results[cond] = {"metrics": metrics(cm),
                                "confusion": cm.counts.tolist(),
                                "n_samples": int(len(paths))}
    report.timing = time_inference(model, n_samples=timing_samples, repetitions=3)
    return report
