"""The convolutional-recurrent classifier: spatial extractor, attention block,
parallel-LSTM temporal extractor, and the dense classification head.

Structure (defaults): six conv/BN/relu/maxpool stages take 224x224x3 down to
3x3x128; the attention block squeezes to 32 channels, expands through parallel
1x1/3x3 convolutions back to 128, applies two more 3x3 convolutions and a
squeeze-excitation channel rescale; the 3x3x128 map is read as a 3-step
sequence (width as time, height*channels as features) through two stages of
parallel LSTMs (hidden 64 then 32, concatenated); five dense+relu+dropout
layers and a final softmax produce the 5-class distribution.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericsError, ShapeError
from .noise_lab import rng_for

CLASS_ORDER = ("N", "AS", "MS", "MR", "MVP")


@dataclass(frozen=True)
class HABConfig:
    squeeze_channels: int = 32
    expand_1x1: int = 64
    expand_3x3: int = 64
    post_conv_channels: tuple = (128, 128)
    se_reduction: int = 8


@dataclass(frozen=True)
class NRCNetConfig:
    sfeb_channels: tuple = (16, 32, 64, 64, 128, 128)
    sfeb_kernel: int = 3
    hab: HABConfig = field(default_factory=HABConfig)
    tfeb_hidden: tuple = (64, 32)
    tcb_units: tuple = (512, 256, 128, 64, 32)
    dropout: float = 0.3
    n_classes: int = 5
    input_shape: tuple = (224, 224, 3)

    def validate(self) -> None:
        if len(self.sfeb_channels) != 6:
            raise ConfigError("the spatial extractor uses exactly 6 conv layers")
        if len(self.tcb_units) != 5:
            raise ConfigError("the classification head uses exactly 5 hidden layers")
        if len(self.tfeb_hidden) != 2:
            raise ConfigError("the temporal extractor has exactly 2 LSTM stages")
        if len(self.hab.post_conv_channels) != 2:
            raise ConfigError("the attention block has exactly 2 trailing convs")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0,1), got {self.dropout}")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "NRCNetConfig":
        data = dict(data)
        if "hab" in data and isinstance(data["hab"], dict):
            hab = dict(data["hab"])
            if "post_conv_channels" in hab:
                hab["post_conv_channels"] = tuple(hab["post_conv_channels"])
            data["hab"] = HABConfig(**hab)
        for key in ("sfeb_channels", "tfeb_hidden", "tcb_units", "input_shape"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def _fan_in_uniform(rng, shape, fan_in):
    # He-style bound, suited to the relu stack
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class ModelGraph:
    """Parameters plus the forward computation. ``mode`` toggles batchnorm
    statistics and dropout consistently across the whole network."""

    def __init__(self, config: NRCNetConfig, seed: int):
        config.validate()
        self.config = config
        self.seed = seed
        self.mode = "train"
        self.params: dict[str, ad.Tensor] = {}
        self.bn_states: dict[str, ad.BNState] = {}
        self.step = 0
        self._dropout_rng = rng_for(seed, 2)
        self._build(rng_for(seed, 0))

    # -- construction ------------------------------------------------------

    def _add_conv(self, rng, name, k, c_in, c_out):
        shape = (k, k, c_in, c_out)
        self.params[f"{name}.w"] = ad.parameter(
            _fan_in_uniform(rng, shape, k * k * c_in))
        self.params[f"{name}.b"] = ad.parameter(np.zeros(c_out))

    def _add_bn(self, name, channels):
        self.params[f"{name}.gamma"] = ad.parameter(np.ones(channels))
        self.params[f"{name}.beta"] = ad.parameter(np.zeros(channels))
        self.bn_states[name] = ad.BNState.for_channels(channels)

    def _add_dense(self, rng, name, d_in, d_out):
        self.params[f"{name}.w"] = ad.parameter(
            _fan_in_uniform(rng, (d_in, d_out), d_in))
        self.params[f"{name}.b"] = ad.parameter(np.zeros(d_out))

    def _add_lstm(self, rng, name, d_in, hidden):
        limit = 1.0 / np.sqrt(hidden)
        self.params[f"{name}.wx"] = ad.parameter(
            rng.uniform(-limit, limit, size=(d_in, 4 * hidden)))
        self.params[f"{name}.wh"] = ad.parameter(
            rng.uniform(-limit, limit, size=(hidden, 4 * hidden)))
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0  # forget-gate bias
        self.params[f"{name}.b"] = ad.parameter(bias)

    def _build(self, rng):
        cfg = self.config
        h, w, c = cfg.input_shape
        k = cfg.sfeb_kernel
        for i, ch in enumerate(cfg.sfeb_channels):
            self._add_conv(rng, f"sfeb{i}", k, c, ch)
            self._add_bn(f"sfeb{i}.bn", ch)
            c = ch
            h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ConfigError("input too small for six pooling stages")
        self._spatial = (h, w)

        hab = cfg.hab
        self._add_conv(rng, "hab.squeeze", 1, c, hab.squeeze_channels)
        self._add_conv(rng, "hab.e1", 1, hab.squeeze_channels, hab.expand_1x1)
        self._add_conv(rng, "hab.e3", 3, hab.squeeze_channels, hab.expand_3x3)
        c = hab.expand_1x1 + hab.expand_3x3
        for j, ch in enumerate(hab.post_conv_channels):
            self._add_conv(rng, f"hab.post{j}", 3, c, ch)
            c = ch
        se_hidden = max(1, c // hab.se_reduction)
        self._add_dense(rng, "hab.se0", c, se_hidden)
        self._add_dense(rng, "hab.se1", se_hidden, c)

        seq_features = h * c  # height*channels per timestep; width is time
        d = seq_features
        for s, hidden in enumerate(cfg.tfeb_hidden):
            self._add_lstm(rng, f"tfeb{s}.a", d, hidden)
            self._add_lstm(rng, f"tfeb{s}.b", d, hidden)
            d = 2 * hidden

        for j, units in enumerate(cfg.tcb_units):
            self._add_dense(rng, f"tcb{j}", d, units)
            d = units
        self._add_dense(rng, "out", d, cfg.n_classes)

    # -- forward -----------------------------------------------------------

    def logits(self, batch) -> ad.Tensor:
        expected = self.config.input_shape
        x = batch if isinstance(batch, ad.Tensor) else ad.Tensor(
            np.asarray(batch, dtype=ad.default_dtype()))
        if x.values.ndim != 4 or x.values.shape[1:] != expected:
            raise ShapeError(f"expected (N, {expected[0]}, {expected[1]}, "
                             f"{expected[2]}) batch, got {x.values.shape}")
        p = self.params
        h = x
        for i in range(len(self.config.sfeb_channels)):
            h = ad.conv2d(h, p[f"sfeb{i}.w"], p[f"sfeb{i}.b"], padding="same")
            h = ad.batchnorm(h, p[f"sfeb{i}.bn.gamma"], p[f"sfeb{i}.bn.beta"],
                             self.bn_states[f"sfeb{i}.bn"], self.mode)
            h = ad.maxpool2x2(ad.relu(h))

        s = ad.relu(ad.conv2d(h, p["hab.squeeze.w"], p["hab.squeeze.b"]))
        e1 = ad.relu(ad.conv2d(s, p["hab.e1.w"], p["hab.e1.b"]))
        e3 = ad.relu(ad.conv2d(s, p["hab.e3.w"], p["hab.e3.b"], padding="same"))
        h = ad.channel_concat(e1, e3)
        for j in range(len(self.config.hab.post_conv_channels)):
            h = ad.relu(ad.conv2d(h, p[f"hab.post{j}.w"], p[f"hab.post{j}.b"],
                                  padding="same"))
        pooled = ad.global_avg_pool(h)
        gate = ad.relu(ad.dense(pooled, p["hab.se0.w"], p["hab.se0.b"]))
        gate = ad.sigmoid(ad.dense(gate, p["hab.se1.w"], p["hab.se1.b"]))
        h = ad.scale_channels(h, gate)

        n = h.values.shape[0]
        height, width = h.values.shape[1], h.values.shape[2]
        channels = h.values.shape[3]
        seq = ad.transpose(h, (0, 2, 1, 3))  # width becomes the time axis
        seq = ad.reshape(seq, (n, width, height * channels))
        for s_idx in range(len(self.config.tfeb_hidden)):
            a = ad.lstm(seq, p[f"tfeb{s_idx}.a.wx"], p[f"tfeb{s_idx}.a.wh"],
                        p[f"tfeb{s_idx}.a.b"])
            b = ad.lstm(seq, p[f"tfeb{s_idx}.b.wx"], p[f"tfeb{s_idx}.b.wh"],
                        p[f"tfeb{s_idx}.b.b"])
            seq = ad.channel_concat(a, b)
        feat = ad.last_step(seq)

        for j in range(len(self.config.tcb_units)):
            feat = ad.relu(ad.dense(feat, p[f"tcb{j}.w"], p[f"tcb{j}.b"]))
            feat = ad.dropout(feat, self.config.dropout, self._dropout_rng,
                              self.mode)
        return ad.dense(feat, p["out.w"], p["out.b"])

    # -- utilities ---------------------------------------------------------

    def set_mode(self, mode: str) -> None:
        if mode not in ("train", "eval"):
            raise ConfigError(f"unknown mode {mode!r}")
        self.mode = mode

    def parameters(self) -> list:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self) -> dict:
        arrays = {name: p.values.copy() for name, p in self.params.items()}
        for name, st in self.bn_states.items():
            arrays[f"{name}.running_mean"] = st.running_mean.copy()
            arrays[f"{name}.running_var"] = st.running_var.copy()
        return arrays

    def load_state_arrays(self, arrays: dict) -> None:
        for name, p in self.params.items():
            src = arrays[name]
            if src.shape != p.values.shape:
                raise ShapeError(f"{name}: checkpoint shape {src.shape} != "
                                 f"model shape {p.values.shape}")
            p.values = src.astype(p.values.dtype)
        for name, st in self.bn_states.items():
            st.running_mean = arrays[f"{name}.running_mean"].astype(
                st.running_mean.dtype)
            st.running_var = arrays[f"{name}.running_var"].astype(
                st.running_var.dtype)


def build_model(config: NRCNetConfig | None = None, seed: int = 0) -> ModelGraph:
    return ModelGraph(config or NRCNetConfig(), seed)


def forward(model: ModelGraph, batch) -> np.ndarray:
    """Class probabilities, shape (N, n_classes); rows sum to one."""
    if model.mode == "eval":
        with ad.no_grad():
            return ad.softmax_probs(model.logits(batch).values)
    return ad.softmax_probs(model.logits(batch).values)


def count_params(model: ModelGraph) -> int:
    """Trainable element count; batchnorm running statistics excluded."""
    return sum(p.values.size for p in model.params.values())


@dataclass
class TrainHyper:
    batch_size: int = 16
    epochs: int = 60
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = float("nan")

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "best_epoch": self.best_epoch,
                           "best_val_acc": self.best_val_acc}, sort_keys=True)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,train_acc,val_loss,val_acc\n")
            for r in self.rows:
                fh.write(f"{r['epoch']},{r['train_loss']:.6f},{r['train_acc']:.6f},"
                         f"{r['val_loss']:.6f},{r['val_acc']:.6f}\n")


def _onehot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    return np.eye(n_classes, dtype=np.float64)[labels]


def evaluate_loss_acc(model: ModelGraph, images: np.ndarray, labels: np.ndarray,
                      batch_size: int = 64) -> tuple:
    """Eval-mode mean loss and accuracy over a dataset."""
    previous = model.mode
    model.set_mode("eval")
    total_loss, correct = 0.0, 0
    n = len(images)
    with ad.no_grad():
        for start in range(0, n, batch_size):
            xb = images[start:start + batch_size]
            yb = labels[start:start + batch_size]
            logits = model.logits(xb)
            loss = ad.softmax_cross_entropy(
                logits,
                _onehot(yb, model.config.n_classes).astype(logits.values.dtype))
            total_loss += float(loss.values) * len(xb)
            correct += int((logits.values.argmax(axis=1) == yb).sum())
    model.set_mode(previous)
    return total_loss / n, correct / n


def train(model: ModelGraph, train_set, val_set,
          hyper: TrainHyper | None = None,
          stop_at_train_acc: float | None = None) -> TrainHistory:
    """Adam training loop with seeded per-epoch shuffling.

    History rows carry end-of-epoch metrics measured in eval mode (dropout
    off, running batch statistics), for the training and validation sets
    alike; train-mode minibatch noise never enters the record. The
    best-validation-accuracy parameter snapshot is restored into the model
    when training finishes. ``stop_at_train_acc`` lets capacity tests end
    early once training accuracy reaches a target.
    """
    hyper = hyper or TrainHyper()
    images, labels = train_set
    val_images, val_labels = val_set
    if len(images) == 0 or len(val_images) == 0:
        raise ConfigError("train and validation sets must be non-empty")
    images = np.asarray(images, dtype=ad.default_dtype())
    labels = np.asarray(labels, dtype=np.int64)

    params = model.parameters()
    opt = ad.AdamState.for_params(params, lr=hyper.lr, beta1=hyper.beta1,
                                  beta2=hyper.beta2, eps=hyper.eps)
    shuffle_rng = rng_for(model.seed, 1)
    history = TrainHistory()
    best_state = None

    for epoch in range(hyper.epochs):
        model.set_mode("train")
        order = shuffle_rng.permutation(len(images))
        for start in range(0, len(order), hyper.batch_size):
            batch_idx = order[start:start + hyper.batch_size]
            xb = images[batch_idx]
            yb = labels[batch_idx]
            model.zero_grad()
            logits = model.logits(xb)
            loss = ad.softmax_cross_entropy(
                logits, _onehot(yb, model.config.n_classes).astype(logits.values.dtype))
            if not np.isfinite(loss.values):
                raise NumericsError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            ad.adam_step(params, opt)
            model.step += 1

        train_loss, train_acc = evaluate_loss_acc(model, images, labels)
        val_loss, val_acc = evaluate_loss_acc(model, val_images, val_labels)
        history.rows.append({"epoch": epoch, "train_loss": train_loss,
                             "train_acc": train_acc, "val_loss": val_loss,
                             "val_acc": val_acc})
        if history.best_epoch < 0 or val_acc > history.best_val_acc:
            history.best_epoch = epoch
            history.best_val_acc = val_acc
            best_state = model.state_arrays()
        if stop_at_train_acc is not None and train_acc >= stop_at_train_acc:
            break

    if best_state is not None:
        model.load_state_arrays(best_state)
    model.set_mode("eval")
    return history


def save_model(path, model: ModelGraph, meta: dict | None = None) -> None:
    info = {"config": json.loads(model.config.to_json()), "seed": model.seed,
            "step": model.step, "dtype": str(np.dtype(ad.default_dtype())),
            "optimizer_state": False}
    info.update(meta or {})
    ad.save_checkpoint(path, model.state_arrays(), info)


def load_model(path) -> ModelGraph:
    arrays, meta = ad.load_checkpoint(path)
    config = NRCNetConfig.from_dict(meta["config"])
    model = ModelGraph(config, int(meta.get("seed", 0)))
    model.step = int(meta.get("step", 0))
    model.load_state_arrays(arrays)
    model.set_mode("eval")
    return model
