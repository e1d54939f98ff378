"""Staged artifact pipeline behind the CLI.

Each stage reads the previous stage's artifacts, writes its own under the
work directory, and records a ``stage.json`` manifest carrying the config
hash, hashes of its inputs, and a digest of its outputs. Rerunning a stage
whose manifest still matches is a no-op ("0 rebuilt"). A work directory only
ever holds artifacts for one config hash; anything else is refused.
"""

from __future__ import annotations

import csv
import hashlib
import json
import shutil
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import nrc_net
from .config import ExperimentConfig
from .errors import ConfigError, NrcError, StageOrderError
from .eval_harness import evaluate, kfold_plan
from .nrc_net import CLASS_ORDER, build_model, save_model
from .noise_lab import MixSpec, build_noisy_corpus, synth_corpus
from .preprocess import prepare_lung, prepare_pcg
from .signal_io import load_manifest, read_wav, save_manifest, write_wav
from .tf_transforms import (load_tfimage, render_image, save_png, save_tfimage,
                            transform_frame)

STAGES = ("prepare", "mix", "transform", "train", "eval", "report")


# ---------------------------------------------------------------------------
# Artifact bookkeeping
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def stamp_workdir(work: Path, config_hash: str) -> None:
    work.mkdir(parents=True, exist_ok=True)
    stamp = work / "workdir.json"
    if stamp.exists():
        recorded = json.loads(stamp.read_text())["config_hash"]
        if recorded != config_hash:
            raise ConfigError(
                f"{work} holds artifacts for config {recorded}, refusing to mix "
                f"with {config_hash}; use a fresh work dir")
    else:
        stamp.write_text(json.dumps({"config_hash": config_hash}, sort_keys=True))


def _stage_dir(cfg: ExperimentConfig, stage: str) -> Path:
    return cfg.work_path() / stage


def _stage_manifest(stage_dir: Path) -> Path:
    return stage_dir / "stage.json"


def require_stage(cfg: ExperimentConfig, stage: str) -> Path:
    manifest = _stage_manifest(_stage_dir(cfg, stage))
    if not manifest.exists():
        raise StageOrderError(f"stage '{stage}' has not run yet; run it first")
    return manifest


def _hash_inputs(paths) -> dict:
    return {str(p): _sha256(Path(p)) for p in sorted(str(x) for x in paths)}


def _cache_hit(stage_dir: Path, config_hash: str, inputs: dict) -> bool:
    manifest = _stage_manifest(stage_dir)
    if not manifest.exists():
        return False
    try:
        recorded = json.loads(manifest.read_text())
    except ValueError:
        return False
    if recorded.get("config_hash") != config_hash:
        return False
    if recorded.get("inputs") != inputs:
        return False
    return all((stage_dir / rel).exists() for rel in recorded.get("outputs", []))


def _finish_stage(stage_dir: Path, stage: str, cfg: ExperimentConfig,
                  inputs: dict, extra: dict | None = None) -> None:
    outputs = sorted(str(p.relative_to(stage_dir))
                     for p in stage_dir.rglob("*")
                     if p.is_file() and p.name != "stage.json")
    digest = hashlib.sha256()
    for rel in outputs:
        digest.update(rel.encode())
        digest.update(bytes.fromhex(_sha256(stage_dir / rel)))
    record = {"stage": stage, "config_hash": cfg.content_hash(),
              "seed": cfg.seed, "inputs": inputs, "outputs": outputs,
              "outputs_hash": digest.hexdigest()}
    record.update(extra or {})
    _stage_manifest(stage_dir).write_text(json.dumps(record, sort_keys=True,
                                                     indent=1))


def _begin_stage(cfg: ExperimentConfig, stage: str, inputs: dict):
    """Returns (stage_dir, cached). A cache hit leaves artifacts untouched."""
    work = cfg.work_path()
    stamp_workdir(work, cfg.content_hash())
    stage_dir = _stage_dir(cfg, stage)
    if _cache_hit(stage_dir, cfg.content_hash(), inputs):
        return stage_dir, True
    if stage_dir.exists():
        shutil.rmtree(stage_dir)
    stage_dir.mkdir(parents=True)
    return stage_dir, False


def _parallel_map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with Pool(processes=workers) as pool:
        return list(pool.imap(fn, items, chunksize=4))


# ---------------------------------------------------------------------------
# Frame stores
# ---------------------------------------------------------------------------

def _save_frame_store(stage_dir: Path, name: str, samples: np.ndarray,
                      rows) -> None:
    np.save(stage_dir / f"{name}.npy", np.asarray(samples, dtype=np.float64))
    with open(stage_dir / f"{name}_index.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["origin", "label", "split"])
        writer.writerows(rows)


def _load_frame_store(stage_dir: Path, name: str):
    samples = np.load(stage_dir / f"{name}.npy")
    with open(stage_dir / f"{name}_index.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [tuple(row) for row in reader]
    return samples, rows


def _frame_id(rel_path: str) -> str:
    stem = rel_path.rsplit(".", 1)[0]
    return stem.replace("/", "_").replace("\\", "_")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def run_synth(n_per_class: int, seed: int, out_dir) -> dict:
    """Write synthetic heart and lung WAVs plus their manifests."""
    out = Path(out_dir)
    (out / "wavs").mkdir(parents=True, exist_ok=True)
    corpus = synth_corpus(n_per_class, seed)
    heart_rows, lung_rows = [], []
    for i, frame in enumerate(corpus.heart):
        rel = f"wavs/{frame.origin}.wav"
        write_wav(out / rel, _frame_clip(frame))
        split = "test" if i % 5 == 4 else "train"
        heart_rows.append((rel, frame.label, split))
    for i, frame in enumerate(corpus.lung):
        rel = f"wavs/{frame.origin}.wav"
        write_wav(out / rel, _frame_clip(frame))
        lung_rows.append((rel, "LUNG", "train"))
    save_manifest(out / "heart_manifest.csv", heart_rows)
    save_manifest(out / "lung_manifest.csv", lung_rows)
    return {"heart": len(heart_rows), "lung": len(lung_rows), "dir": str(out)}


def _frame_clip(frame):
    from .signal_io import SignalClip

    return SignalClip(frame.samples, frame.rate, label=frame.label,
                      source_id=frame.origin)


def _prepare_one(args):
    kind, path, label, opts = args
    clip = read_wav(path, label=label)
    if kind == "heart":
        frame = prepare_pcg(clip, band=opts.pcg_band, order=opts.pcg_order,
                            pad=opts.pad, overflow=opts.overflow)
    else:
        frame = prepare_lung(clip, band=opts.lung_band, order=opts.lung_order,
                             pad=opts.pad, overflow=opts.overflow)
    return frame.samples


def run_prepare(cfg: ExperimentConfig, workers: int = 1,
                skip_bad: bool = False) -> dict:
    """Preprocess every manifest entry into the fixed-length frame store."""
    cfg.validate()
    manifests = [cfg.heart_manifest]
    if cfg.lung_manifest:
        manifests.append(cfg.lung_manifest)
    wav_paths = []
    loaded = {}
    for mpath in manifests:
        man = load_manifest(mpath)
        loaded[mpath] = man
        wav_paths.extend(str(man.resolve(rel)) for rel, _, _ in man.entries)
    inputs = _hash_inputs(manifests + wav_paths)
    stage_dir, cached = _begin_stage(cfg, "prepare", inputs)
    if cached:
        return {"rebuilt": 0, "cached": True}

    failures = []
    counts = {}
    for kind, mpath in (("heart", cfg.heart_manifest),
                        ("lung", cfg.lung_manifest)):
        if not mpath:
            continue
        man = loaded[mpath]
        samples, rows = [], []
        for rel, label, split in man.entries:
            try:
                frame_samples = _prepare_one(
                    (kind, str(man.resolve(rel)), label, cfg.preprocess))
            except (NrcError, OSError) as exc:
                failures.append(f"{man.resolve(rel)}: {exc}")
                continue
            samples.append(frame_samples)
            rows.append((_frame_id(rel), label, split))
        if not samples:
            failures.append(f"{mpath}: no usable entries")
            continue
        _save_frame_store(stage_dir, f"{kind}_frames", np.stack(samples), rows)
        counts[kind] = len(rows)

    if failures and not skip_bad:
        shutil.rmtree(stage_dir, ignore_errors=True)
        raise ConfigError("prepare failed for {} file(s):\n  {}".format(
            len(failures), "\n  ".join(failures)))
    _finish_stage(stage_dir, "prepare", cfg, inputs,
                  extra={"counts": counts, "skipped": len(failures)})
    return {"rebuilt": sum(counts.values()), "skipped": len(failures),
            "cached": False}


def _mix_specs(cfg: ExperimentConfig):
    return [MixSpec(float(db), cfg.mix.noise_kind) for db in cfg.mix.snr_db]


def run_mix(cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Build the per-SNR noisy frame stores plus pairing sidecars."""
    cfg.validate()
    inputs = _hash_inputs([require_stage(cfg, "prepare")])
    stage_dir, cached = _begin_stage(cfg, "mix", inputs)
    if cached:
        return {"rebuilt": 0, "cached": True}

    prep_dir = _stage_dir(cfg, "prepare")
    heart, heart_rows = _load_frame_store(prep_dir, "heart_frames")
    lung = None
    if cfg.mix.noise_kind == "lung":
        lung, _ = _load_frame_store(prep_dir, "lung_frames")

    from .preprocess import Frame

    heart_frames = [Frame(heart[i], label=row[1], origin=row[0])
                    for i, row in enumerate(heart_rows)]
    lung_frames = None
    if lung is not None:
        lung_frames = [Frame(lung[i], label="LUNG", origin=f"lung_{i:04d}")
                       for i in range(len(lung))]

    _save_frame_store(stage_dir, "frames_clean", heart, heart_rows)
    levels = build_noisy_corpus(heart_frames, lung_frames, _mix_specs(cfg),
                                cfg.seed)
    conditions = ["clean"]
    for level in levels:
        tag = level.spec.tag
        stacked = np.stack([nf.samples for nf in level.frames])
        _save_frame_store(stage_dir, f"frames_{tag}", stacked, heart_rows)
        (stage_dir / f"sidecar_{tag}.json").write_text(
            json.dumps(level.sidecar(cfg.seed), sort_keys=True))
        conditions.append(tag)
    (stage_dir / "conditions.json").write_text(
        json.dumps({"conditions": conditions,
                    "snr_db": {level.spec.tag: level.spec.snr_db
                               for level in levels}}, sort_keys=True))
    _finish_stage(stage_dir, "mix", cfg, inputs,
                  extra={"conditions": conditions, "frames": len(heart_rows)})
    return {"rebuilt": len(conditions) * len(heart_rows), "cached": False}


def _transform_worker(item):
    samples, kind, topts, out_path, source, snr_db = item
    matrix = transform_frame(samples, kind, stft_params=topts.stft,
                             mfcc_params=topts.mfcc, morse_params=topts.cwt,
                             cqt_params=topts.cqt)
    save_tfimage(out_path, render_image(matrix, kind, source=source,
                                        snr_db=snr_db))
    return out_path


def run_transform(cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Render every frame of every condition to a raw image tensor."""
    cfg.validate()
    inputs = _hash_inputs([require_stage(cfg, "mix")])
    stage_dir, cached = _begin_stage(cfg, "transform", inputs)
    if cached:
        return {"rebuilt": 0, "cached": True}

    mix_dir = _stage_dir(cfg, "mix")
    cond_info = json.loads((mix_dir / "conditions.json").read_text())
    conditions = cond_info["conditions"]
    snr_map = cond_info["snr_db"]
    (stage_dir / "images").mkdir()

    items, index_rows = [], []
    for cond in conditions:
        samples, rows = _load_frame_store(mix_dir, f"frames_{cond}")
        snr_db = snr_map.get(cond)
        for i, (origin, label, split) in enumerate(rows):
            rel = f"images/{origin}__{cond}.tfimg"
            items.append((samples[i], cfg.transform.kind, cfg.transform,
                          str(stage_dir / rel), origin, snr_db))
            index_rows.append((rel, origin, label, split, cond))

    _parallel_map(_transform_worker, items, workers)
    with open(stage_dir / "index.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "origin", "label", "split", "condition"])
        writer.writerows(index_rows)
    _finish_stage(stage_dir, "transform", cfg, inputs,
                  extra={"images": len(index_rows),
                         "kind": cfg.transform.kind})
    return {"rebuilt": len(index_rows), "cached": False}


def _read_transform_index(cfg: ExperimentConfig):
    stage_dir = _stage_dir(cfg, "transform")
    with open(stage_dir / "index.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return stage_dir, [tuple(row) for row in reader]


def _load_images(stage_dir: Path, rels) -> np.ndarray:
    return np.stack([load_tfimage(stage_dir / rel).pixels for rel in rels])


def run_train(cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Train on the train split pooled over all conditions; hold out one fold
    of the plan for validation and keep the best-validation checkpoint."""
    cfg.validate()
    inputs = _hash_inputs([require_stage(cfg, "transform")])
    stage_dir, cached = _begin_stage(cfg, "train", inputs)
    if cached:
        return {"rebuilt": 0, "cached": True}

    tdir, rows = _read_transform_index(cfg)
    train_rows = [r for r in rows if r[3] == "train"]
    if not train_rows:
        raise ConfigError("no training rows in the transform index")
    plan = kfold_plan([(r[0], r[2]) for r in train_rows], k=cfg.folds,
                      seed=cfg.seed)
    val_ids = set(plan.fold_members(cfg.train.fold))
    fit_rows = [r for r in train_rows if r[0] not in val_ids]
    val_rows = [r for r in train_rows if r[0] in val_ids]

    def dataset(selected):
        images = _load_images(tdir, [r[0] for r in selected])
        labels = np.asarray([CLASS_ORDER.index(r[2]) for r in selected],
                            dtype=np.int64)
        return images, labels

    model = build_model(cfg.model, seed=cfg.seed)
    history = nrc_net.train(model, dataset(fit_rows), dataset(val_rows),
                            hyper=cfg.train.hyper())
    save_model(stage_dir / "checkpoint.nrc", model,
               meta={"config_hash": cfg.content_hash()})
    history.write_csv(stage_dir / "history.csv")
    (stage_dir / "history.json").write_text(history.to_json())
    (stage_dir / "folds.json").write_text(json.dumps(
        {"k": plan.k, "seed": plan.seed, "fold": cfg.train.fold,
         "assignments": plan.assignments}, sort_keys=True))
    hyper = {"batch_size": cfg.train.batch_size, "epochs": cfg.train.epochs,
             "learning_rate": cfg.train.lr, "optimizer": "adam",
             "loss": "categorical_cross_entropy"}
    _finish_stage(stage_dir, "train", cfg, inputs,
                  extra={"hyperparameters": hyper,
                         "train_samples": len(fit_rows),
                         "val_samples": len(val_rows),
                         "best_epoch": history.best_epoch})
    return {"rebuilt": 1, "cached": False,
            "best_val_acc": history.best_val_acc}


def _condition_order(cfg: ExperimentConfig, conditions, snr_map):
    noisy = [c for c in conditions if c != "clean"]
    noisy.sort(key=lambda c: -snr_map.get(c, 0.0))
    return ["clean"] + noisy


def run_eval(cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Per-condition inference on the test split; emits the report JSON and
    the accuracy-vs-SNR table."""
    cfg.validate()
    inputs = _hash_inputs([require_stage(cfg, "train"),
                           require_stage(cfg, "transform")])
    stage_dir, cached = _begin_stage(cfg, "eval", inputs)
    if cached:
        return {"rebuilt": 0, "cached": True}

    tdir, rows = _read_transform_index(cfg)
    cond_info = json.loads(
        (_stage_dir(cfg, "mix") / "conditions.json").read_text())
    order = _condition_order(cfg, cond_info["conditions"], cond_info["snr_db"])
    manifests = {}
    for cond in order:
        test_rows = [r for r in rows if r[3] == "test" and r[4] == cond]
        if not test_rows:
            raise ConfigError(f"no test rows for condition {cond!r}")
        manifests[cond] = [(tdir / r[0], CLASS_ORDER.index(r[2]))
                           for r in test_rows]

    report = evaluate(_stage_dir(cfg, "train") / "checkpoint.nrc", manifests,
                      seed=cfg.seed, config_hash=cfg.content_hash(),
                      training_condition="train_split_all_conditions")
    (stage_dir / "report.json").write_text(report.to_json())
    report.write_accuracy_csv(stage_dir / "accuracy_vs_snr.csv")
    _finish_stage(stage_dir, "eval", cfg, inputs,
                  extra={"conditions": order})
    return {"rebuilt": len(order), "cached": False,
            "accuracy": dict(report.accuracy_table())}


def run_report(cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Collate history and evaluation into plots and sample images."""
    cfg.validate()
    inputs = _hash_inputs([require_stage(cfg, "eval"),
                           require_stage(cfg, "train")])
    stage_dir, cached = _begin_stage(cfg, "report", inputs)
    if cached:
        return {"rebuilt": 0, "cached": True}

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    history = json.loads(
        (_stage_dir(cfg, "train") / "history.json").read_text())
    rows = history["rows"]
    if rows:
        epochs = [r["epoch"] for r in rows]
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
        ax1.plot(epochs, [r["train_loss"] for r in rows], label="train")
        ax1.plot(epochs, [r["val_loss"] for r in rows], label="val")
        ax1.set_xlabel("epoch"), ax1.set_ylabel("loss"), ax1.legend()
        ax2.plot(epochs, [r["train_acc"] for r in rows], label="train")
        ax2.plot(epochs, [r["val_acc"] for r in rows], label="val")
        ax2.set_xlabel("epoch"), ax2.set_ylabel("accuracy"), ax2.legend()
        fig.tight_layout()
        fig.savefig(stage_dir / "history.png", dpi=100)
        plt.close(fig)

    report = json.loads((_stage_dir(cfg, "eval") / "report.json").read_text())
    for cond in report["conditions"]:
        cm = np.asarray(report["results"][cond]["confusion"])
        fig, ax = plt.subplots(figsize=(4.5, 4))
        ax.imshow(cm, cmap="Blues")
        for i in range(cm.shape[0]):
            for j in range(cm.shape[1]):
                ax.text(j, i, str(cm[i, j]), ha="center", va="center",
                        fontsize=8)
        ax.set_xticks(range(len(CLASS_ORDER)), CLASS_ORDER)
        ax.set_yticks(range(len(CLASS_ORDER)), CLASS_ORDER)
        ax.set_xlabel("predicted"), ax.set_ylabel("true")
        ax.set_title(cond)
        fig.tight_layout()
        fig.savefig(stage_dir / f"confusion_{cond}.png", dpi=100)
        plt.close(fig)

    tdir, trows = _read_transform_index(cfg)
    seen = set()
    for rel, origin, label, split, cond in trows:
        if cond == "clean" and label not in seen:
            seen.add(label)
            save_png(stage_dir / f"sample_{label}.png", load_tfimage(tdir / rel))

    _finish_stage(stage_dir, "report", cfg, inputs,
                  extra={"plots": sorted(p.name for p in stage_dir.glob("*.png"))})
    return {"rebuilt": len(list(stage_dir.glob('*.png'))), "cached": False}
