"""Experiment configuration: JSON schema, validation, and content hashing."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .nrc_net import NRCNetConfig, TrainHyper
from .tf_transforms import (CQTParams, MFCCParams, MorseParams, STFTParams,
                            TRANSFORM_KINDS)

WORK_DIR_ENV = "NRC_WORK_DIR"


@dataclass(frozen=True)
class PreprocessOptions:
    pcg_band: tuple = (50.0, 800.0)
    pcg_order: int = 4
    lung_band: tuple = (50.0, 2500.0)
    lung_order: int = 6
    pad: str = "cycle"
    overflow: str = "truncate"


@dataclass(frozen=True)
class MixOptions:
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0)
    noise_kind: str = "lung"


@dataclass(frozen=True)
class TransformOptions:
    kind: str = "cwt"
    stft: STFTParams = field(default_factory=STFTParams)
    mfcc: MFCCParams = field(default_factory=MFCCParams)
    cwt: MorseParams = field(default_factory=MorseParams)
    cqt: CQTParams = field(default_factory=CQTParams)


@dataclass(frozen=True)
class TrainOptions:
    batch_size: int = 16
    epochs: int = 60
    lr: float = 1e-4
    fold: int = 0

    def hyper(self) -> TrainHyper:
        return TrainHyper(batch_size=self.batch_size, epochs=self.epochs,
                          lr=self.lr)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    heart_manifest: str
    lung_manifest: str | None = None
    work_dir: str = "work"
    preprocess: PreprocessOptions = field(default_factory=PreprocessOptions)
    mix: MixOptions = field(default_factory=MixOptions)
    transform: TransformOptions = field(default_factory=TransformOptions)
    model: NRCNetConfig = field(default_factory=NRCNetConfig)
    train: TrainOptions = field(default_factory=TrainOptions)
    folds: int = 10

    def validate(self, check_paths: bool = True) -> None:
        if self.transform.kind not in TRANSFORM_KINDS:
            raise ConfigError(f"transform kind must be one of {TRANSFORM_KINDS}")
        if self.mix.noise_kind == "lung" and not self.lung_manifest:
            raise ConfigError("lung noise requested but no lung manifest configured")
        if not 0 <= self.train.fold < self.folds:
            raise ConfigError(f"fold {self.train.fold} outside [0, {self.folds})")
        self.model.validate()
        if check_paths:
            if not Path(self.heart_manifest).exists():
                raise ConfigError(f"heart manifest not found: {self.heart_manifest}")
            if self.lung_manifest and not Path(self.lung_manifest).exists():
                raise ConfigError(f"lung manifest not found: {self.lung_manifest}")

    def content_hash(self) -> str:
        """Hash of everything that affects artifacts. The work dir location is
        deliberately excluded so a moved tree stays valid."""
        data = asdict(self)
        data.pop("work_dir", None)
        canonical = json.dumps(data, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def work_path(self) -> Path:
        return Path(os.environ.get(WORK_DIR_ENV, self.work_dir))


def _build(cls, data: dict, tuple_keys=()):
    data = dict(data)
    for key in tuple_keys:
        if key in data:
            data[key] = tuple(data[key])
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {cls.__name__} section: {exc}") from None


def config_from_dict(raw: dict) -> ExperimentConfig:
    if "seed" not in raw:
        raise ConfigError("config must set an explicit seed")
    transform_raw = dict(raw.get("transform", {}))
    transform = TransformOptions(
        kind=transform_raw.get("kind", "cwt"),
        stft=_build(STFTParams, transform_raw.get("stft", {})),
        mfcc=_build(MFCCParams, transform_raw.get("mfcc", {})),
        cwt=_build(MorseParams, transform_raw.get("cwt", {})),
        cqt=_build(CQTParams, transform_raw.get("cqt", {})),
    )
    return ExperimentConfig(
        seed=int(raw["seed"]),
        heart_manifest=raw.get("heart_manifest", ""),
        lung_manifest=raw.get("lung_manifest"),
        work_dir=raw.get("work_dir", "work"),
        preprocess=_build(PreprocessOptions, raw.get("preprocess", {}),
                          tuple_keys=("pcg_band", "lung_band")),
        mix=_build(MixOptions, raw.get("mix", {}), tuple_keys=("snr_db",)),
        transform=transform,
        model=NRCNetConfig.from_dict(raw.get("model", {})),
        train=_build(TrainOptions, raw.get("train", {})),
        folds=int(raw.get("folds", 10)),
    )


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if seed_override is not None:
        raw["seed"] = seed_override
    return config_from_dict(raw)
