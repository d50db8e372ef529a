"""Compact convolutional classifier trained from scratch with SGD + momentum.

Architecture: a configurable stack of (conv3x3 pad 1, ReLU, maxpool2x2)
blocks followed by a single dense head. Small enough to finite-difference
check on a CPU, deep enough to benefit from augmentation.

Training is deterministic: given the same manifest, config and architecture,
two runs produce bit-identical parameters (single-threaded mode).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import SPLIT_TEST, SPLIT_TRAIN, DatasetManifest, Record
from .geometry import resize_bilinear
from .image import load_image
from .layers import (
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
    softmax_cross_entropy,
)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = "earid_ckpt_v1"
DEFAULT_CHANNELS = (8, 16, 32)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    input_size: int = 64

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.input_size < 8:
            raise ValueError(f"input_size must be >= 8, got {self.input_size}")

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "seed": self.seed,
            "input_size": self.input_size,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)


@dataclass
class CompactCnn:
    """Parameter container; conv blocks are conv3x3 + ReLU + maxpool2x2."""

    conv_ws: list[np.ndarray]
    conv_bs: list[np.ndarray]
    dense_w: np.ndarray
    dense_b: np.ndarray
    input_size: int
    class_labels: list[str] = field(default_factory=list)

    @classmethod
    def build(
        cls,
        class_count: int,
        input_size: int,
        channels: tuple[int, ...] = DEFAULT_CHANNELS,
        seed: int = 0,
        class_labels: list[str] | None = None,
    ) -> "CompactCnn":
        """He-uniform initialization from the seed; biases start at zero."""
        if class_count < 2:
            raise ValueError(f"need at least 2 classes, got {class_count}")
        if input_size % (2 ** len(channels)) != 0:
            raise ValueError(
                f"input_size {input_size} must be divisible by {2 ** len(channels)}"
            )
        rng = np.random.default_rng(seed)
        conv_ws, conv_bs = [], []
        in_c = 3
        for out_c in channels:
            fan_in = in_c * 9
            limit = np.sqrt(6.0 / fan_in)
            conv_ws.append(rng.uniform(-limit, limit, size=(out_c, in_c, 3, 3)))
            conv_bs.append(np.zeros(out_c))
            in_c = out_c
        side = input_size // (2 ** len(channels))
        flat = in_c * side * side
        limit = np.sqrt(6.0 / flat)
        dense_w = rng.uniform(-limit, limit, size=(flat, class_count))
        dense_b = np.zeros(class_count)
        if class_labels is not None and len(class_labels) != class_count:
            raise ValueError("class_labels length must equal class_count")
        return cls(
            conv_ws=conv_ws,
            conv_bs=conv_bs,
            dense_w=dense_w,
            dense_b=dense_b,
            input_size=input_size,
            class_labels=list(class_labels) if class_labels else [],
        )

    @property
    def class_count(self) -> int:
        return self.dense_w.shape[1]

    def parameters(self) -> list[np.ndarray]:
        return [*self.conv_ws, *self.conv_bs, self.dense_w, self.dense_b]

    def parameter_names(self) -> list[str]:
        names = [f"conv{i}.w" for i in range(len(self.conv_ws))]
        names += [f"conv{i}.b" for i in range(len(self.conv_bs))]
        return names + ["dense.w", "dense.b"]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def forward(self, x: np.ndarray):
        """Logits plus the caches needed for backward."""
        caches = []
        h = x
        for w, b in zip(self.conv_ws, self.conv_bs):
            h, conv_cache = conv2d_forward(h, w, b, stride=1, pad=1)
            h, mask = relu(h)
            h, pool_idx = maxpool2x2(h)
            caches.append((conv_cache, mask, pool_idx))
        n = h.shape[0]
        flat = h.reshape(n, -1)
        logits, dense_cache = dense_forward(flat, self.dense_w, self.dense_b)
        caches.append((h.shape, dense_cache))
        return logits, caches

    def backward(self, grad_logits: np.ndarray, caches) -> list[np.ndarray]:
        """Gradients in parameters() order."""
        conv_shape, dense_cache = caches[-1]
        grad_flat, grad_dense_w, grad_dense_b = dense_backward(
            grad_logits, dense_cache, self.dense_w
        )
        g = grad_flat.reshape(conv_shape)
        grad_conv_ws: list[np.ndarray] = []
        grad_conv_bs: list[np.ndarray] = []
        for conv_cache, mask, pool_idx in reversed(caches[:-1]):
            g = maxpool2x2_backward(g, pool_idx)
            g = relu_backward(g, mask)
            g, gw, gb = conv2d_backward(g, conv_cache)
            grad_conv_ws.append(gw)
            grad_conv_bs.append(gb)
        grad_conv_ws.reverse()
        grad_conv_bs.reverse()
        return [*grad_conv_ws, *grad_conv_bs, grad_dense_w, grad_dense_b]

    def loss_on(self, x: np.ndarray, labels: np.ndarray) -> float:
        logits, _ = self.forward(x)
        loss, _ = softmax_cross_entropy(logits, labels)
        return loss


def load_batch(records: list[Record], input_size: int) -> np.ndarray:
    """Load, RGB-promote and resize records into an (N, 3, S, S) tensor."""
    tensors = []
    for r in records:
        img = load_image(r.path).as_rgb()
        if img.width != input_size or img.height != input_size:
            img = resize_bilinear(img, input_size, input_size)
        tensors.append(img.pixels.transpose(2, 0, 1))
    return np.stack(tensors)


def _label_index(manifest: DatasetManifest) -> dict[str, int]:
    return {label: i for i, label in enumerate(manifest.labels())}


def train(
    manifest: DatasetManifest,
    cfg: TrainConfig,
    channels: tuple[int, ...] = DEFAULT_CHANNELS,
) -> tuple[CompactCnn, list[dict]]:
    """Mini-batch SGD with momentum over the manifest's TRAIN records.

    Class indices follow sorted label order over the whole manifest. Returns
    the trained model and one metrics dict per epoch (running loss/accuracy
    over that epoch's batches).
    """
    train_records = manifest.subset(SPLIT_TRAIN)
    if not train_records:
        raise ValueError("manifest has no TRAIN records")
    label_index = _label_index(manifest)
    x = load_batch(train_records, cfg.input_size)
    y = np.array([label_index[r.label] for r in train_records])
    model = CompactCnn.build(
        class_count=len(label_index),
        input_size=cfg.input_size,
        channels=channels,
        seed=cfg.seed,
        class_labels=manifest.labels(),
    )
    velocities = [np.zeros_like(p) for p in model.parameters()]
    rng = np.random.default_rng(cfg.seed)
    metrics: list[dict] = []
    n = len(train_records)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb, yb = x[batch], y[batch]
            logits, caches = model.forward(xb)
            loss, grad_logits = softmax_cross_entropy(logits, yb)
            grads = model.backward(grad_logits, caches)
            sgd_step(model.parameters(), grads, velocities, cfg)
            total_loss += loss * len(batch)
            correct += int((logits.argmax(axis=1) == yb).sum())
        metrics.append(
            {"epoch": epoch, "loss": total_loss / n, "accuracy": correct / n}
        )
        log.debug(
            "epoch %d: loss %.4f acc %.3f", epoch, metrics[-1]["loss"], metrics[-1]["accuracy"]
        )
    return model, metrics


def sgd_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    velocities: list[np.ndarray],
    cfg: TrainConfig,
) -> None:
    for p, g, v in zip(params, grads, velocities):
        v *= cfg.momentum
        v -= cfg.learning_rate * g
        p += v


def predict(model: CompactCnn, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Argmax class indices; ties resolve to the lowest index."""
    preds = []
    for start in range(0, x.shape[0], batch_size):
        logits, _ = model.forward(x[start : start + batch_size])
        preds.append(logits.argmax(axis=1))
    return np.concatenate(preds)


def evaluate(
    model: CompactCnn,
    manifest: DatasetManifest,
    cfg: TrainConfig,
    split: str = SPLIT_TEST,
) -> float:
    """Fraction of correct argmax predictions on the given split."""
    records = manifest.subset(split)
    if not records:
        raise ValueError(f"manifest has no {split.upper()} records")
    label_index = _label_index(manifest)
    x = load_batch(records, cfg.input_size)
    y = np.array([label_index[r.label] for r in records])
    return float((predict(model, x) == y).mean())


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    checked: int
    per_layer: dict[str, float]
    per_layer_checked: dict[str, int]
    kink_crossings: int = 0

    def passed(self, threshold: float = 1e-3) -> bool:
        return self.max_rel_error < threshold and all(
            n > 0 for n in self.per_layer_checked.values()
        )


def gradient_check(
    model: CompactCnn,
    x: np.ndarray,
    labels: np.ndarray,
    eps: float = 1e-4,
    samples: int = 200,
    seed: int = 0,
) -> GradCheckResult:
    """Central-difference check of every layer's analytic gradients.

    Samples parameters spread across all layers, perturbs each by +-eps,
    and compares (f(p+eps) - f(p-eps)) / (2 eps) with the analytic
    gradient. A finite difference is only meaningful when the perturbation
    does not cross a ReLU kink or flip a pooling argmax (the loss is only
    piecewise smooth); crossings are detected by comparing the activation
    masks at the two perturbed points, excluded from the error statistics,
    and counted in kink_crossings. Sampling continues until `samples`
    valid comparisons are collected or the parameter pool runs out, so
    `checked` counts valid samples only.
    """
    logits, caches = model.forward(x)
    _, grad_logits = softmax_cross_entropy(logits, labels)
    analytic = model.backward(grad_logits, caches)
    params = model.parameters()
    names = model.parameter_names()
    rng = np.random.default_rng(seed)
    # Candidate queue: every layer contributes an equal share up front (so
    # each layer is represented), followed by spares from the largest
    # layers to replace any kink-crossing samples.
    per_layer_k = max(1, -(-samples // len(params)))  # ceil division
    queue: list[tuple[int, int]] = []
    spares: list[tuple[int, int]] = []
    for i, p in enumerate(params):
        order = rng.permutation(p.size)
        take = min(per_layer_k, p.size)
        queue.extend((i, int(f)) for f in order[:take])
        spares.extend((i, int(f)) for f in order[take : take + samples])
    rng.shuffle(spares)
    queue.extend(spares)

    max_err = 0.0
    checked = 0
    crossings = 0
    per_layer: dict[str, float] = {name: 0.0 for name in names}
    per_layer_checked: dict[str, int] = {name: 0 for name in names}
    for i, fid in queue:
        if checked >= samples:
            if all(v > 0 for v in per_layer_checked.values()):
                break
            if per_layer_checked[names[i]] > 0:
                continue  # only hunting layers with no valid sample yet
        flat = params[i].reshape(-1)
        original = flat[fid]
        flat[fid] = original + eps
        f_plus, masks_plus = _loss_and_masks(model, x, labels)
        flat[fid] = original - eps
        f_minus, masks_minus = _loss_and_masks(model, x, labels)
        flat[fid] = original
        if not all(np.array_equal(a, b) for a, b in zip(masks_plus, masks_minus)):
            crossings += 1
            continue
        numeric = (f_plus - f_minus) / (2 * eps)
        a = float(analytic[i].reshape(-1)[fid])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
        per_layer[names[i]] = max(per_layer[names[i]], err)
        per_layer_checked[names[i]] += 1
        max_err = max(max_err, err)
        checked += 1
    return GradCheckResult(
        max_rel_error=max_err,
        checked=checked,
        per_layer=per_layer,
        per_layer_checked=per_layer_checked,
        kink_crossings=crossings,
    )


def _loss_and_masks(model: CompactCnn, x: np.ndarray, labels: np.ndarray):
    logits, caches = model.forward(x)
    loss, _ = softmax_cross_entropy(logits, labels)
    masks: list[np.ndarray] = []
    for _, relu_mask, pool_idx in caches[:-1]:
        masks.append(relu_mask)
        masks.append(pool_idx)
    return loss, masks


def save_model(model: CompactCnn, path: str | Path) -> None:
    """Checkpoint format: npz with a JSON meta entry plus parameter arrays."""
    path = Path(path)
    meta = {
        "version": CHECKPOINT_VERSION,
        "input_size": model.input_size,
        "conv_channels": [w.shape[0] for w in model.conv_ws],
        "class_labels": model.class_labels,
        "class_count": model.class_count,
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for i, (w, b) in enumerate(zip(model.conv_ws, model.conv_bs)):
        arrays[f"conv{i}_w"] = w
        arrays[f"conv{i}_b"] = b
    arrays["dense_w"] = model.dense_w
    arrays["dense_b"] = model.dense_b
    np.savez(path, **arrays)


def load_model(path: str | Path) -> CompactCnn:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unknown checkpoint version {meta.get('version')!r}")
        n_blocks = len(meta["conv_channels"])
        conv_ws = [data[f"conv{i}_w"] for i in range(n_blocks)]
        conv_bs = [data[f"conv{i}_b"] for i in range(n_blocks)]
        return CompactCnn(
            conv_ws=conv_ws,
            conv_bs=conv_bs,
            dense_w=data["dense_w"],
            dense_b=data["dense_b"],
            input_size=meta["input_size"],
            class_labels=meta["class_labels"],
        )
