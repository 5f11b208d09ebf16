"""Training loop, evaluation, single-image inference, and latency bench.

All randomness (weight init, epoch shuffles, augmentation, dropout) flows
from one seeded stream in a fixed consumption order, so a seed pins the
whole run.  The best checkpoint is written whenever validation loss reaches
a new minimum; ties keep the earlier epoch.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tc
from .config_text import ModelGraph, parse_model_config
from .data import ManifestEntry, SPLIT_NAMES
from .errors import ConfigError, ParameterError, TrainingDiverged
from .images import augment_crop_jitter, load_gray_image, preprocess_image
from .losses import softmax_cross_entropy
from .models import Model, build_preset, load_checkpoint, save_checkpoint
from .optim import make_optimizer
from .tensor import Prng, Tensor

AUGMENT_POLICIES = ("none", "crop-jitter")
EVAL_BATCH = 256


@dataclass
class TrainConfig:
    model: str = "cnn"  # preset name or a config file path
    optimizer: str = "sgd"
    lr: float = 0.01
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    input_side: int = 64
    dropout: bool = True
    augment: str = "none"
    deterministic: bool = True
    crop_fraction: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ParameterError(f"learning rate must be >= 0, got {self.lr}")
        if self.optimizer not in ("sgd", "adam"):
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.augment not in AUGMENT_POLICIES:
            raise ParameterError(f"unknown augmentation policy {self.augment!r}")


@dataclass
class TrainReport:
    config: TrainConfig
    class_names: list[str]
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    best_epoch: int | None = None  # 1-based
    best_val_loss: float | None = None
    checkpoint_path: str | None = None
    batch_size: int = 0
    diverged_at: tuple[int, int] | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


def resolve_graph(config: TrainConfig, class_names: list[str]) -> ModelGraph:
    if config.model in ("ann", "cnn", "resnet18"):
        return build_preset(
            config.model,
            input_side=config.input_side,
            class_count=len(class_names),
            class_names=class_names,
        )
    with open(config.model, "r", encoding="utf-8") as fh:
        graph = parse_model_config(fh.read())
    if graph.class_names is None:
        graph.class_names = list(class_names)
    if graph.class_count != len(class_names):
        raise ConfigError(
            f"config declares {graph.class_count} classes, manifest has {len(class_names)}"
        )
    return graph


def load_subset(
    entries: list[ManifestEntry],
    membership: dict[str, str],
    subset: str,
    data_root: str,
    target_side: int,
    crop_fraction: float = 1.0,
) -> tuple[Tensor, np.ndarray]:
    """Preprocessed images [N, 1, S, S] plus labels for one split subset."""
    if subset not in SPLIT_NAMES:
        raise ParameterError(f"subset must be one of {SPLIT_NAMES}, got {subset!r}")
    chosen = [e for e in entries if membership.get(e.path) == subset]
    xs = np.zeros((len(chosen), 1, target_side, target_side), dtype=np.float32)
    ys = np.zeros(len(chosen), dtype=np.int64)
    for i, entry in enumerate(chosen):
        img = load_gray_image(os.path.join(data_root, entry.path))
        xs[i] = preprocess_image(img, target_side, crop_fraction)
        ys[i] = entry.class_index
    return xs, ys


def _epoch_eval(model: Model, xs: Tensor, ys: np.ndarray) -> tuple[float, float]:
    """Sample-averaged loss and accuracy over a subset in eval mode."""
    total_loss = 0.0
    correct = 0
    n = xs.shape[0]
    for start in range(0, n, EVAL_BATCH):
        xb = xs[start : start + EVAL_BATCH]
        yb = ys[start : start + EVAL_BATCH]
        scores = model.forward_scores(xb)
        value, _ = softmax_cross_entropy(scores, yb)
        total_loss += value * xb.shape[0]
        correct += int((scores.argmax(axis=1) == yb).sum())
    if n == 0:
        raise ParameterError("evaluation subset is empty")
    return total_loss / n, correct / n


def train_run(
    config: TrainConfig,
    entries: list[ManifestEntry],
    membership: dict[str, str],
    data_root: str,
    out_dir: str,
    log=None,
) -> TrainReport:
    """Train per the config; returns the report, writes out_dir/best.ckpt."""
    tc.set_deterministic(config.deterministic)
    class_names = _class_names(entries)
    graph = resolve_graph(config, class_names)
    rng = Prng(config.seed)
    model = Model(graph, dtype=np.float32, rng=rng)
    model.set_dropout(config.dropout)
    side = graph.input_shape[1]
    train_x, train_y = load_subset(
        entries, membership, "train", data_root, side, config.crop_fraction
    )
    val_x, val_y = load_subset(
        entries, membership, "val", data_root, side, config.crop_fraction
    )
    if train_x.shape[0] == 0:
        raise ParameterError("training subset is empty")
    optimizer = make_optimizer(config.optimizer, config.lr)
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "best.ckpt")
    report = TrainReport(
        config=config, class_names=class_names, batch_size=config.batch_size
    )
    order = list(range(train_x.shape[0]))
    for epoch in range(1, config.epochs + 1):
        rng.shuffle(order)
        batch_losses = []
        correct = 0
        for batch_index, start in enumerate(range(0, len(order), config.batch_size)):
            chosen = order[start : start + config.batch_size]
            xb = train_x[chosen]
            yb = train_y[chosen]
            if config.augment == "crop-jitter":
                for j in range(xb.shape[0]):
                    xb[j] = augment_crop_jitter(xb[j], rng)
            scores = model.forward_scores(xb, train=True, rng=rng)
            value, d_scores = softmax_cross_entropy(scores, yb)
            if not np.isfinite(value):
                report.diverged_at = (epoch, batch_index)
                raise TrainingDiverged(epoch, batch_index, report)
            grads = model.backward(d_scores)
            optimizer.step(model.params(), grads)
            batch_losses.append(value)
            correct += int((scores.argmax(axis=1) == yb).sum())
        report.train_loss.append(sum(batch_losses) / len(batch_losses))
        report.train_acc.append(correct / len(order))
        val_loss, val_acc = _epoch_eval(model, val_x, val_y)
        report.val_loss.append(val_loss)
        report.val_acc.append(val_acc)
        if report.best_val_loss is None or val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            save_checkpoint(model, ckpt_path)
            report.checkpoint_path = ckpt_path
        if log is not None:
            log(
                f"epoch {epoch} train_loss {report.train_loss[-1]:.6g} "
                f"train_acc {report.train_acc[-1]:.4f} val_loss {val_loss:.6g} "
                f"val_acc {val_acc:.4f}"
            )
    return report


def _class_names(entries: list[ManifestEntry]) -> list[str]:
    names: dict[int, str] = {}
    for entry in entries:
        names.setdefault(entry.class_index, entry.class_name)
    if not names:
        raise ParameterError("manifest is empty")
    count = max(names) + 1
    if sorted(names) != list(range(count)):
        raise ParameterError("manifest class indices are not contiguous from 0")
    return [names[i] for i in range(count)]


def write_curves_csv(report: TrainReport, path: str) -> None:
    def fmt(x: float) -> str:
        return format(x, ".6g")

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_loss,train_acc,val_loss,val_acc\n")
        for i in range(report.epochs_run):
            fh.write(
                f"{i + 1},{fmt(report.train_loss[i])},{fmt(report.train_acc[i])},"
                f"{fmt(report.val_loss[i])},{fmt(report.val_acc[i])}\n"
            )


@dataclass
class ConfusionMatrix:
    class_names: list[str]
    counts: np.ndarray  # [true, predicted] int64

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_csv_text(self) -> str:
        lines = [",".join(self.class_names)]
        for row in self.counts:
            lines.append(",".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


def evaluate(model: Model, xs: Tensor, ys: np.ndarray) -> tuple[float, ConfusionMatrix]:
    """Eval-mode accuracy plus the full confusion matrix.

    Argmax ties go to the lowest class index.
    """
    classes = model.class_count
    if ys.size and (ys.min() < 0 or ys.max() >= classes):
        raise ConfigError(
            f"labels reach {int(ys.max())} but checkpoint has {classes} classes"
        )
    counts = np.zeros((classes, classes), dtype=np.int64)
    for start in range(0, xs.shape[0], EVAL_BATCH):
        xb = xs[start : start + EVAL_BATCH]
        yb = ys[start : start + EVAL_BATCH]
        scores = model.forward_scores(xb)
        preds = scores.argmax(axis=1)
        np.add.at(counts, (yb, preds), 1)
    names = model.graph.class_names or [f"class_{i}" for i in range(classes)]
    matrix = ConfusionMatrix(class_names=list(names), counts=counts)
    return matrix.accuracy, matrix


def infer_single(
    checkpoint_path: str, image_path: str, crop_fraction: float = 1.0
) -> tuple[str, float, Tensor]:
    """Classify one image: (class name, probability, full probability row)."""
    model = load_checkpoint(checkpoint_path)
    img = load_gray_image(image_path)
    x = preprocess_image(img, model.graph.input_shape[1], crop_fraction)
    probs = model.forward(x[None, ...])[0]
    index = int(probs.argmax())
    names = model.graph.class_names or [f"class_{i}" for i in range(model.class_count)]
    return names[index], float(probs[index]), probs


@dataclass
class BenchReport:
    iterations: int
    mean_ms: float
    median_ms: float
    p95_ms: float


def bench_inference(
    checkpoint_path: str, image_path: str, iterations: int = 100
) -> BenchReport:
    """Time preprocess+forward for one image; one untimed warm-up first."""
    if iterations < 1:
        raise ParameterError(f"iterations must be >= 1, got {iterations}")
    model = load_checkpoint(checkpoint_path)
    img = load_gray_image(image_path)
    side = model.graph.input_shape[1]

    def once():
        x = preprocess_image(img, side)
        return model.forward(x[None, ...])

    once()  # warm-up, untimed
    samples = np.zeros(iterations, dtype=np.float64)
    for i in range(iterations):
        begin = time.perf_counter()
        once()
        samples[i] = (time.perf_counter() - begin) * 1000.0
    return BenchReport(
        iterations=iterations,
        mean_ms=float(samples.mean()),
        median_ms=float(np.median(samples)),
        p95_ms=float(np.percentile(samples, 95)),
    )
