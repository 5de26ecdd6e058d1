"""Adam optimisation, k-fold cross-validation, the training loop, metrics.

Desk-scale defaults (batch 32, 30 epochs) are sized for the procedural
corpus; the full-scale settings (batch 128, 200 epochs) remain reachable
through TrainConfig. Runs are reproducible: per-epoch shuffles derive from
(seed, fold, epoch), every fold starts from a copy of the passed model, and
validation always runs with batch norm in infer mode.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, GradientError
from .imageio import load_image_array
from .models import backward_batch, forward_batch
from .nn import layers as nn_layers
from .nn import ops as nn_ops
from .nn.kernels import channel_sums
from .nn.layers import trainable_arrays
from .nn.ops import softmax_cross_entropy_with_grad
from .util import batched, derive_seed


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    decay: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    folds: int = 5
    seed: int = 0
    # batch norm running stats are re-estimated over this many training
    # samples once fitting ends; the 0.99-momentum EMA needs hundreds of
    # steps to converge, which short desk-scale runs never reach
    bn_refresh_samples: int = 640

    def validate(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.decay < 0:
            raise ValueError("decay must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class Metrics:
    accuracy: float
    confusion: np.ndarray  # confusion[true][pred], counts
    precision: tuple
    recall: tuple
    mean_loss: float


@dataclass
class EpochRecord:
    fold: int
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    fold_metrics: list = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def mean_val_accuracy(self):
        return float(np.mean([m.accuracy for m in self.fold_metrics]))


REPORT_COLUMNS = ("epoch", "fold", "split", "loss", "accuracy")


def write_report(report, path):
    """Line-delimited table, one row per (epoch, fold, split)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(REPORT_COLUMNS) + "\n")
        for r in report.records:
            fh.write(f"{r.epoch}\t{r.fold}\ttrain\t{r.train_loss:.6f}\t{r.train_accuracy:.6f}\n")
            fh.write(f"{r.epoch}\t{r.fold}\tval\t{r.val_loss:.6f}\t{r.val_accuracy:.6f}\n")


# --- Adam ---------------------------------------------------------------------

class AdamState:
    """First/second moment slots, keyed like the (name, array) param list."""

    def __init__(self):
        self.m = {}
        self.v = {}

    def slots(self, name, array):
        if name not in self.m:
            self.m[name] = np.zeros_like(array)
            self.v[name] = np.zeros_like(array)
        return self.m[name], self.v[name]


def effective_lr(config, t):
    """Per-step decayed learning rate: lr / (1 + decay * t)."""
    return config.learning_rate / (1.0 + config.decay * t)


def adam_step(params, grads, state, t, config):
    """One Adam update with bias correction, in place on the parameter arrays.

    params is a list of (name, array); grads maps name -> gradient array.
    """
    if t < 1:
        raise ValueError(f"adam_step: step index must be >= 1, got {t}")
    lr_t = effective_lr(config, t)
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, param in params:
        g = grads[name]
        if g.shape != param.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} != param shape "
                             f"{param.shape} for {name}")
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient for {name}")
        m, v = state.slots(name, param)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        param -= lr_t * mhat / (np.sqrt(vhat) + config.adam_eps)


# --- folds ---------------------------------------------------------------------

def kfold_split(n, k, seed):
    """Partition 0..n-1 into k disjoint shuffled folds, sizes differing by <= 1."""
    if n < k:
        raise ValueError(f"kfold_split: need at least {k} samples, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    folds = []
    pos = 0
    for size in sizes:
        folds.append(np.sort(perm[pos:pos + size]))
        pos += size
    return folds


# --- data loading ---------------------------------------------------------------

def load_manifest_images(manifest, side):
    """Decode and resize every manifest image; returns (uint8 (N,side,side,3), labels)."""
    if not manifest.samples:
        raise DataError("manifest is empty")
    images = np.empty((len(manifest.samples), side, side, 3), np.uint8)
    labels = np.empty(len(manifest.samples), np.int64)
    for i, sample in enumerate(manifest.samples):
        path = manifest.resolve_path(sample)
        try:
            images[i] = load_image_array(path, side)
        except DataError:
            raise
        except Exception as exc:
            raise DataError(f"cannot load image {path}: {exc}") from exc
        labels[i] = sample.label
    return images, labels


# --- metrics ----------------------------------------------------------------------

def metrics_from_predictions(labels, preds, mean_loss=float("nan")):
    """Score argmax predictions: accuracy, 2x2 confusion, per-class precision/recall."""
    labels = np.asarray(labels)
    preds = np.asarray(preds)
    if len(labels) == 0:
        raise DataError("cannot score an empty sample set")
    confusion = np.zeros((2, 2), np.int64)
    for t, p in zip(labels, preds):
        confusion[t, p] += 1
    total = confusion.sum()
    accuracy = float(np.trace(confusion)) / total
    precision = tuple(
        float(confusion[c, c]) / s if (s := confusion[:, c].sum()) else 0.0
        for c in range(2))
    recall = tuple(
        float(confusion[c, c]) / s if (s := confusion[c, :].sum()) else 0.0
        for c in range(2))
    return Metrics(accuracy, confusion, precision, recall, float(mean_loss))


def predict_arrays(model, images, batch_size=32):
    """Infer-mode class probabilities for a uint8 image stack."""
    probs_out = np.empty((len(images), model.spec.num_classes), np.float32)
    for idx in batched(np.arange(len(images)), batch_size):
        x = images[idx].astype(np.float32) / np.float32(255.0)
        probs, _, _ = forward_batch(model, x, mode="infer")
        probs_out[idx] = probs
    return probs_out


def evaluate_arrays(model, images, labels, batch_size=32):
    n = len(images)
    if n == 0:
        raise DataError("cannot evaluate an empty sample set")
    preds = np.empty(n, np.int64)
    loss_sum = 0.0
    for idx in batched(np.arange(n), batch_size):
        x = images[idx].astype(np.float32) / np.float32(255.0)
        probs, logits, _ = forward_batch(model, x, mode="infer")
        loss, _, _ = softmax_cross_entropy_with_grad(logits, labels[idx])
        loss_sum += loss * len(idx)
        preds[idx] = np.argmax(probs, axis=1)
    return metrics_from_predictions(labels, preds, loss_sum / n)


def evaluate(model, manifest, batch_size=32):
    """Argmax predictions scored against manifest labels."""
    images, labels = load_manifest_images(manifest, model.spec.input_side)
    return evaluate_arrays(model, images, labels, batch_size)


# --- training --------------------------------------------------------------------

def _model_params(model):
    params = []
    for i, layer in enumerate(model.spec.layers):
        for attr, arr in trainable_arrays(layer):
            params.append((f"{i}:{layer.name}:{attr}", arr))
    return params


def refresh_batch_norm_stats(model, images, batch_size=32, max_samples=640, seed=0):
    """Re-estimate batch-norm running statistics under the current weights.

    Walks refresh batches through the network with live batch normalisation
    (exactly the distribution training-mode layers see) while accumulating
    exact per-channel input statistics at every batch-norm layer, then
    stores the aggregates as the running mean/variance.
    """
    n = min(len(images), max_samples)
    pick = np.sort(np.random.default_rng(derive_seed(seed, "bn-refresh"))
                   .permutation(len(images))[:n])
    layers = model.spec.layers
    acc = {}
    for batch_ids in batched(pick, batch_size):
        if len(batch_ids) < 2:
            continue
        cur = images[batch_ids].astype(np.float32) / np.float32(255.0)
        for i, layer in enumerate(layers):
            if layer.kind == "softmax":
                break
            if layer.kind == "dense" and cur.ndim == 4:
                cur = cur.reshape(cur.shape[0], -1)
            if layer.kind == "batchnorm":
                s, ss = channel_sums(cur)
                slot = acc.setdefault(i, [np.zeros_like(s), np.zeros_like(ss), 0])
                slot[0] += s
                slot[1] += ss
                slot[2] += cur.shape[0] * cur.shape[1] * cur.shape[2]
                cur, _, _, _ = nn_ops.batch_norm_forward(
                    cur, layer.bn_gamma, layer.bn_beta, "train")
            else:
                cur, _ = nn_layers.layer_forward(layer, cur, "infer")
    for i, (s, ss, count) in acc.items():
        mu = s / count
        var = np.maximum(ss / count - mu * mu, 0.0)
        layers[i].bn_mean = mu.astype(np.float32)
        layers[i].bn_var = var.astype(np.float32)
        layers[i].bn_seeded = True


def fit(model, images, labels, config, val_images=None, val_labels=None,
        fold=0, progress=None):
    """Train one model copy on uint8 image arrays; returns (records, model).

    Shuffling derives from (config.seed, fold, epoch). A trailing batch of
    one sample is dropped: batch norm cannot normalise it.
    """
    fold_model = model.clone()
    fold_model.mode = "train"
    params = _model_params(fold_model)
    state = AdamState()
    records = []
    t = 0
    for epoch in range(config.epochs):
        rng = np.random.default_rng(derive_seed(config.seed, "shuffle", fold, epoch))
        order = rng.permutation(len(images))
        loss_sum = 0.0
        hits = 0
        seen = 0
        for batch_ids in batched(order, config.batch_size):
            if len(batch_ids) < 2:
                continue
            x = images[batch_ids].astype(np.float32) / np.float32(255.0)
            y = labels[batch_ids]
            probs, logits, caches = forward_batch(fold_model, x, mode="train",
                                                  want_caches=True)
            loss, _, dlogits = softmax_cross_entropy_with_grad(logits, y)
            if not np.isfinite(loss):
                raise GradientError(
                    f"non-finite loss at fold {fold} epoch {epoch} step {t + 1} "
                    f"(batch samples {batch_ids[:4].tolist()}...)")
            grads_by_layer = backward_batch(fold_model, dlogits.astype(np.float32), caches)
            grads = {}
            for i, layer in enumerate(fold_model.spec.layers):
                for attr, _ in trainable_arrays(layer):
                    grads[f"{i}:{layer.name}:{attr}"] = grads_by_layer[i][attr]
            t += 1
            adam_step(params, grads, state, t, config)
            loss_sum += loss * len(batch_ids)
            hits += int((np.argmax(probs, axis=1) == y).sum())
            seen += len(batch_ids)
        val_loss = float("nan")
        val_acc = float("nan")
        if val_images is not None:
            if config.bn_refresh_samples > 0:
                refresh_batch_norm_stats(fold_model, images, config.batch_size,
                                         config.bn_refresh_samples,
                                         seed=derive_seed(config.seed, fold, epoch))
            fold_model.mode = "infer"
            vm = evaluate_arrays(fold_model, val_images, val_labels, config.batch_size)
            fold_model.mode = "train"
            val_loss, val_acc = vm.mean_loss, vm.accuracy
        record = EpochRecord(fold=fold, epoch=epoch,
                             train_loss=loss_sum / max(seen, 1),
                             train_accuracy=hits / max(seen, 1),
                             val_loss=val_loss, val_accuracy=val_acc)
        records.append(record)
        if progress is not None:
            progress(record)
    if val_images is None and config.bn_refresh_samples > 0:
        refresh_batch_norm_stats(fold_model, images, config.batch_size,
                                 config.bn_refresh_samples,
                                 seed=derive_seed(config.seed, fold, "final"))
    fold_model.mode = "infer"
    return records, fold_model


def train(model, manifest, config, progress=None):
    """k-fold cross-validated training.

    Each fold clones the passed model's initial weights, trains on the other
    k-1 folds (batch norm in train mode) and validates on the held-out fold
    in infer mode. Returns (TrainReport, [trained fold models]).
    """
    config.validate()
    started = time.perf_counter()
    if len({s.label for s in manifest.samples}) < 2:
        raise DataError("training manifest must contain both classes")
    images, labels = load_manifest_images(manifest, model.spec.input_side)
    folds = kfold_split(len(images), config.folds, config.seed)

    report = TrainReport()
    fold_models = []
    for fold_idx, val_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(images)), val_idx)
        records, fold_model = fit(
            model, images[train_idx], labels[train_idx], config,
            val_images=images[val_idx], val_labels=labels[val_idx],
            fold=fold_idx, progress=progress)
        report.records.extend(records)
        report.fold_metrics.append(
            evaluate_arrays(fold_model, images[val_idx], labels[val_idx],
                            config.batch_size))
        fold_models.append(fold_model)
    report.wall_seconds = time.perf_counter() - started
    return report, fold_models
