"""Adversarial domain-adaptation training: model assembly, the training
loop, the no-adaptation baseline, prediction and checkpointing.

Each optimization step pairs one source batch with one target batch. Both
feed the domain classifier (source = 0, target = 1); labeled samples feed
the activity head. The feature extractor descends the label loss while
ascending the domain loss through the gradient-reversal rule, pushing it
toward features the domain classifier cannot separate.
"""
from __future__ import annotations

import json
import struct
import time
from copy import deepcopy
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import nn
from .datasets import ActivityLabel, DomainTag, LabeledWindow

CHECKPOINT_MAGIC = b"EARDANN\x00"
CHECKPOINT_VERSION = 1


class CheckpointVersionError(ValueError):
    """Checkpoint written by an incompatible format version."""


class CheckpointCorruptError(ValueError):
    """Checkpoint file truncated or structurally damaged."""


@dataclass
class DannModel:
    """Parameter bundle: feature extractor plus the two classification heads."""

    extractor: nn.BiLstmParams
    label_head: nn.HeadParams
    domain_head: nn.HeadParams
    domain_weight: float = 0.3

    def __post_init__(self):
        if self.domain_weight < 0:
            raise ValueError("domain_weight must be non-negative")
        if self.label_head.classes != len(ActivityLabel):
            raise ValueError(f"label head must have {len(ActivityLabel)} outputs")
        if self.domain_head.classes != 2:
            raise ValueError("domain head must have 2 outputs")

    def copy(self) -> "DannModel":
        return deepcopy(self)


@dataclass
class TrainConfig:
    domain_weight: float = 0.3
    batch_size: int = 32
    epochs: int = 200
    learning_rate: float = 1e-3
    seed: int = 0
    target_filter_enabled: bool = True
    checkpoint_selection: str = "best_target_val"  # or "last"
    supervised_target: bool = True
    hidden_size: int = 16
    num_layers: int = 2
    head_width: int = 32

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.domain_weight < 0:
            raise ValueError("domain_weight must be >= 0")
        if self.checkpoint_selection not in ("last", "best_target_val"):
            raise ValueError(f"unknown checkpoint selection {self.checkpoint_selection!r}")


@dataclass
class EpochRecord:
    epoch: int
    label_loss: float
    domain_loss: float | None
    total: float
    source_val_accuracy: float | None
    target_val_accuracy: float | None


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    selected_epoch: int = 0

    def to_dict(self) -> dict:
        recs = []
        for r in self.epochs:
            rec = {"epoch": r.epoch, "label_loss": r.label_loss, "total": r.total}
            if r.domain_loss is not None:
                rec["domain_loss"] = r.domain_loss
            if r.source_val_accuracy is not None:
                rec["source_val_accuracy"] = r.source_val_accuracy
            if r.target_val_accuracy is not None:
                rec["target_val_accuracy"] = r.target_val_accuracy
            recs.append(rec)
        return {
            "format_version": 1,
            "epochs": recs,
            "wall_clock_seconds": self.wall_clock_seconds,
            "selected_epoch": self.selected_epoch,
        }


# ---------------------------------------------------------------------------
# losses and prediction
# ---------------------------------------------------------------------------

def _as_sample(w: LabeledWindow, use_label: bool):
    return (w.data, int(w.label), int(w.domain), use_label)


def total_loss(source_batch, target_batch, model: DannModel, supervised_target: bool = True):
    """Adversarial objective over one source/target batch pair.

    Returns (E, label_loss, domain_loss) where E = label_loss minus
    domain_weight times domain_loss. The label loss averages over the source
    batch plus, when supervised_target, the target batch; the domain loss
    averages over every sample with source = 0, target = 1 as truth.
    """
    if not source_batch and not target_batch:
        raise ValueError("need at least one sample across both batches")
    batch = [_as_sample(w, True) for w in source_batch]
    batch += [_as_sample(w, supervised_target) for w in target_batch]
    parts = nn.loss_parts(batch, model, model.domain_weight)
    return parts.total, parts.label_loss, parts.domain_loss


def predict(model: DannModel, window):
    """Activity prediction for one window: (label, probability vector).

    Ties break toward the lowest class index; probabilities sum to one.
    """
    data = window.data if isinstance(window, LabeledWindow) else np.asarray(window)
    feature, _ = nn.feature_forward(data, model.extractor)
    logits, _ = nn.head_forward(feature, model.label_head)
    probs = nn._softmax_rows(logits[None, :])[0]
    return ActivityLabel(int(np.argmax(logits))), probs


def _forward_logits(model: DannModel, windows, head, chunk: int = 256):
    out = []
    with threadpool_limits(limits=1):
        for lo in range(0, len(windows), chunk):
            part = np.stack([w.data for w in windows[lo:lo + chunk]])
            feats, _ = nn._features_forward(part, model.extractor)
            logits, _ = nn._head_forward(feats, head)
            out.append(logits)
    return np.concatenate(out, axis=0)


def predict_batch(model: DannModel, windows):
    """Vectorized activity predictions; returns an int label array."""
    if not windows:
        return np.zeros(0, dtype=int)
    logits = _forward_logits(model, windows, model.label_head)
    return np.argmax(logits, axis=1)


def label_accuracy(model: DannModel, windows) -> float | None:
    if not windows:
        return None
    preds = predict_batch(model, windows)
    truth = np.array([int(w.label) for w in windows])
    return float(np.mean(preds == truth))


def domain_accuracy(model: DannModel, windows) -> float | None:
    """Accuracy of the domain classifier against the windows' domain tags."""
    if not windows:
        return None
    logits = _forward_logits(model, windows, model.domain_head)
    preds = np.argmax(logits, axis=1)
    truth = np.array([int(w.domain) for w in windows])
    return float(np.mean(preds == truth))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _build_model(config: TrainConfig, seed_seq) -> DannModel:
    extractor, label_head, domain_head = nn.init_params(
        seed_seq,
        input_dim=2,
        hidden=config.hidden_size,
        num_layers=config.num_layers,
        head_width=config.head_width,
        label_classes=len(ActivityLabel),
        domain_classes=2,
    )
    return DannModel(extractor, label_head, domain_head, domain_weight=config.domain_weight)


def _train_loop(source_splits, target_splits, config: TrainConfig, adapt: bool):
    with threadpool_limits(limits=1):  # small tensors; BLAS threading only adds latency
        return _train_loop_inner(source_splits, target_splits, config, adapt)


def _train_loop_inner(source_splits, target_splits, config: TrainConfig, adapt: bool):
    src_train, src_val, _ = source_splits
    if not src_train:
        raise ValueError("source training set is empty")
    if adapt:
        tgt_train, tgt_val, _ = target_splits
        if not tgt_train:
            raise ValueError("target training set is empty")
    else:
        tgt_train, tgt_val = [], []

    init_ss, src_ss, tgt_ss = np.random.SeedSequence(config.seed).spawn(3)
    src_rng = np.random.default_rng(src_ss)
    tgt_rng = np.random.default_rng(tgt_ss)
    model = _build_model(config, init_ss)
    params = nn.named_arrays(model)
    opt = nn.AdamState(learning_rate=config.learning_rate)

    batch_size = config.batch_size
    steps = max(1, len(src_train) // batch_size)
    weight = config.domain_weight if adapt else 0.0

    report = TrainReport()
    best_metric = -1.0
    best_model = None
    best_epoch = 0
    started = time.perf_counter()

    for epoch in range(1, config.epochs + 1):
        perm = src_rng.permutation(len(src_train))
        label_sum = domain_sum = total_sum = 0.0
        for step in range(steps):
            if len(src_train) >= batch_size:
                idx = perm[step * batch_size:(step + 1) * batch_size]
            else:
                idx = perm
            batch = [_as_sample(src_train[i], True) for i in idx]
            if adapt:
                t_idx = tgt_rng.choice(
                    len(tgt_train), size=batch_size, replace=len(tgt_train) < batch_size,
                )
                batch += [_as_sample(tgt_train[i], config.supervised_target) for i in t_idx]
            parts, grads = nn.backprop_batch(batch, model, weight)
            if not adapt:
                grads = {k: g for k, g in grads.items() if not k.startswith("domain.")}
            nn.adam_step(params, grads, opt)
            label_sum += parts.label_loss
            domain_sum += parts.domain_loss
            total_sum += parts.total

        src_acc = label_accuracy(model, src_val)
        tgt_acc = label_accuracy(model, tgt_val) if adapt else None
        report.epochs.append(EpochRecord(
            epoch=epoch,
            label_loss=label_sum / steps,
            domain_loss=(domain_sum / steps) if adapt else None,
            total=total_sum / steps,
            source_val_accuracy=src_acc,
            target_val_accuracy=tgt_acc,
        ))
        if config.checkpoint_selection == "best_target_val":
            metric = tgt_acc if adapt else src_acc
            if metric is not None and metric > best_metric:
                best_metric = metric
                best_model = model.copy()
                best_epoch = epoch

    report.wall_clock_seconds = time.perf_counter() - started
    if config.checkpoint_selection == "best_target_val" and best_model is not None:
        report.selected_epoch = best_epoch
        return best_model, report
    report.selected_epoch = config.epochs
    return model, report


def train_dann(source_splits, target_splits, config: TrainConfig):
    """Adversarial training over (train, val, test) splits of both domains.

    Every step draws a seeded source batch and a seeded target batch (with
    replacement when the target training set is smaller than the batch
    size), backpropagates the combined objective and applies one
    adaptive-moment update. Deterministic for a fixed seed.
    """
    return _train_loop(source_splits, target_splits, config, adapt=True)


def train_source_only(source_splits, config: TrainConfig):
    """No-adaptation baseline: the identical recipe with the adversarial
    pathway removed. The domain head keeps its initial weights."""
    return _train_loop(source_splits, None, config, adapt=False)


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(model: DannModel, path, seed: int = 0) -> None:
    """Versioned binary checkpoint: header plus raw little-endian float64
    tensors under their parameter names. Round-trips byte-exactly."""
    params = nn.named_arrays(model)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "hidden": model.extractor.hidden,
        "num_layers": len(model.extractor.layers),
        "input_dim": model.extractor.input_dim,
        "head_width": model.label_head.w1.shape[0],
        "label_classes": model.label_head.classes,
        "domain_classes": model.domain_head.classes,
        "domain_weight": model.domain_weight,
        "seed": seed,
        "params": [[k, list(v.shape)] for k, v in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> DannModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(CHECKPOINT_MAGIC) + 8 or not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointCorruptError(f"{path}: not a checkpoint file")
    off = len(CHECKPOINT_MAGIC)
    version, hlen = struct.unpack_from("<II", raw, off)
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, supported {CHECKPOINT_VERSION}"
        )
    off += 8
    if len(raw) < off + hlen:
        raise CheckpointCorruptError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"{path}: unreadable header ({exc})") from None
    off += hlen

    extractor, label_head, domain_head = nn.init_params(
        0,
        input_dim=header["input_dim"],
        hidden=header["hidden"],
        num_layers=header["num_layers"],
        head_width=header["head_width"],
        label_classes=header["label_classes"],
        domain_classes=header["domain_classes"],
    )
    model = DannModel(extractor, label_head, domain_head,
                      domain_weight=header["domain_weight"])
    params = nn.named_arrays(model)
    if [k for k, _ in header["params"]] != list(params.keys()):
        raise CheckpointCorruptError(f"{path}: parameter keys do not match the header dims")
    for key, shape in header["params"]:
        arr = params[key]
        if list(arr.shape) != shape:
            raise CheckpointCorruptError(f"{path}: shape mismatch for {key}")
        nbytes = arr.size * 8
        if len(raw) < off + nbytes:
            raise CheckpointCorruptError(f"{path}: truncated tensor data at {key}")
        arr[...] = np.frombuffer(raw[off:off + nbytes], dtype="<f8").reshape(arr.shape)
        off += nbytes
    if off != len(raw):
        raise CheckpointCorruptError(f"{path}: {len(raw) - off} trailing bytes")
    return model
