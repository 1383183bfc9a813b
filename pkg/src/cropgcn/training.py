"""Mini-batch Adam training with validation-loss early stopping."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError, NumericError
from .graph import grid_graph
from .metrics import ConfusionCounts, mcc
from .model import DEFAULT_DIMS, GcnModel, backward, bce_from_logits, forward
from .preprocess import EXCLUDED, Patch, PreprocConfig, SceneSeries, reassemble, scene_patches

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 100
    patience: int = 12
    max_epochs: int = 100
    validation_fraction: float = 0.10
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    preproc: PreprocConfig = field(default_factory=PreprocConfig)
    threshold: float = 0.5
    hidden: tuple[int, ...] = DEFAULT_DIMS[1:-1]

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InputError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 < self.validation_fraction < 1:
            raise InputError(f"validation_fraction must lie in (0, 1), got {self.validation_fraction}")
        for name in ("patience", "batch_size", "max_epochs"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.adam_beta1 < 1 or not 0 <= self.adam_beta2 < 1 or self.adam_epsilon <= 0:
            raise InputError("Adam betas must lie in [0, 1) and epsilon must be > 0")
        if not 0 < self.threshold < 1:
            raise InputError(f"threshold must lie in (0, 1), got {self.threshold}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.preproc.k, *self.hidden, 1)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_bce: float
    val_bce: float
    val_mcc: float
    seconds: float | None = None


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_csv(self, include_time: bool = False) -> str:
        """CSV text; wall time is left blank unless asked for, so logs stay reproducible."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_bce", "val_bce", "val_mcc", "seconds"])
        for r in self.records:
            secs = f"{r.seconds:.3f}" if include_time and r.seconds is not None else ""
            writer.writerow([r.epoch, repr(r.train_bce), repr(r.val_bce), repr(r.val_mcc), secs])
        return buf.getvalue()


def split_dataset(scenes, fraction: float, seed: int):
    """Random disjoint split; the validation share is rounded to nearest, minimum one."""
    scenes = list(scenes)
    if len(scenes) < 2:
        raise InputError(f"need at least 2 scenes to split, got {len(scenes)}")
    if not 0 < fraction < 1:
        raise InputError(f"fraction must lie in (0, 1), got {fraction}")
    n_val = min(len(scenes) - 1, max(1, int(np.floor(len(scenes) * fraction + 0.5))))
    order = np.random.default_rng(seed).permutation(len(scenes))
    val_idx = set(order[:n_val].tolist())
    train = [s for i, s in enumerate(scenes) if i not in val_idx]
    val = [s for i, s in enumerate(scenes) if i in val_idx]
    return train, val


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> AdamState:
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``; inputs are untouched."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InputError("params, grads and state must have the same length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise InputError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
        bad = ~np.isfinite(g)
        if bad.any():
            raise NumericError(
                f"non-finite gradient in parameter {i} (shape {p.shape}): "
                f"{int(bad.sum())} bad entries, first at {np.argwhere(bad)[0].tolist()}"
            )
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon
    t = state.step + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p.append(p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


@dataclass(frozen=True, eq=False)
class _Sample:
    patch: Patch
    labels: np.ndarray  # 0/1 floats, excluded nodes set to 0
    weights: np.ndarray  # 1 for scored nodes, 0 for excluded

    @property
    def graph(self):
        return grid_graph(self.patch.height, self.patch.width)


def _samples(scenes, cfg: PreprocConfig) -> list[_Sample]:
    """Preprocess scenes into training samples in a canonical, content-keyed order."""
    out = []
    for scene in sorted(scenes, key=SceneSeries.content_key):
        if scene.label is None:
            raise InputError(f"scene {scene.name or '<unnamed>'} has no label")
        for patch in scene_patches(scene, cfg):
            keep = patch.labels != EXCLUDED
            labels = np.where(keep, patch.labels, 0).astype(np.float64)
            out.append(_Sample(patch, labels, keep.astype(np.float64)))
    return out


def evaluate_samples(model: GcnModel, samples, threshold: float) -> tuple[float, float]:
    """Mean BCE over scored nodes and the MCC of thresholded predictions."""
    loss_sum, n_scored = 0.0, 0.0
    counts = ConfusionCounts(0, 0, 0, 0)
    for s in samples:
        probs, trace = forward(model, s.graph, s.patch.features)
        keep = s.weights > 0
        loss_sum += float(np.sum(bce_from_logits(trace.logits, s.labels)[keep]))
        n_scored += float(keep.sum())
        pred = probs[keep] >= threshold
        truth = s.labels[keep] > 0.5
        counts = counts + ConfusionCounts(
            tp=int(np.sum(pred & truth)),
            fp=int(np.sum(pred & ~truth)),
            tn=int(np.sum(~pred & ~truth)),
            fn=int(np.sum(~pred & truth)),
        )
    return (loss_sum / n_scored if n_scored else 0.0), mcc(counts)


def batch_gradients(model: GcnModel, batch) -> tuple[list, float]:
    """Summed gradients for a batch, with BCE averaged over all scored nodes of the batch."""
    total = float(sum(s.weights.sum() for s in batch))
    acc = None
    loss = 0.0
    for s in batch:  # fixed reduction order: ascending position in the batch
        _, trace = forward(model, s.graph, s.patch.features)
        grads, part = backward(model, s.graph, trace, s.labels, s.weights, normalizer=total)
        loss += part
        acc = grads if acc is None else [(a + dw, b + db) for (a, b), (dw, db) in zip(acc, grads)]
    return acc, loss


def train(dataset, cfg: TrainConfig = TrainConfig(), validation=None, init_model: GcnModel | None = None):
    """Train a model and return ``(best_model, TrainLog)``.

    Without ``validation`` the dataset is split with ``cfg.validation_fraction``.
    Scenes are ordered by content before splitting and shuffling, so the result
    does not depend on the order in which scenes are passed in.
    """
    dataset = sorted(dataset, key=SceneSeries.content_key)
    if not dataset:
        raise InputError("dataset is empty")
    if validation is None:
        train_scenes, val_scenes = split_dataset(dataset, cfg.validation_fraction, cfg.seed)
    else:
        train_scenes, val_scenes = dataset, list(validation)
    train_samples = _samples(train_scenes, cfg.preproc)
    val_samples = _samples(val_scenes, cfg.preproc)
    if not train_samples:
        raise InputError("no training patches")

    model = init_model.copy() if init_model is not None else GcnModel.init(cfg.dims, seed=cfg.seed)
    if model.dims[0] != cfg.preproc.k:
        raise InputError(f"model input width {model.dims[0]} != k={cfg.preproc.k}")
    params = model.parameters()
    state = AdamState.zeros_like(params)
    best_model, best_val = model.copy(), np.inf
    result = TrainLog()
    wait = 0
    for epoch in range(1, cfg.max_epochs + 1):
        start = time.perf_counter()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_samples))
        loss_sum, node_sum = 0.0, 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [train_samples[j] for j in order[lo : lo + cfg.batch_size]]
            n_scored = float(sum(s.weights.sum() for s in batch))
            if n_scored == 0:
                continue
            grads, loss = batch_gradients(model, batch)
            flat = [g for pair in grads for g in pair]
            params, state = adam_step(params, flat, state, cfg)
            model = model.with_parameters(params)
            loss_sum += loss * n_scored
            node_sum += n_scored
        val_bce, val_mcc = evaluate_samples(model, val_samples, cfg.threshold)
        train_bce = loss_sum / node_sum if node_sum else 0.0
        result.records.append(EpochRecord(epoch, train_bce, val_bce, val_mcc, time.perf_counter() - start))
        log.info("epoch %d train_bce=%.5f val_bce=%.5f val_mcc=%.4f", epoch, train_bce, val_bce, val_mcc)
        if val_bce < best_val:
            best_val, best_model, result.best_epoch = val_bce, model.copy(), epoch
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                result.stopped_early = True
                break
    return best_model, result


def infer_scene(model: GcnModel, scene: SceneSeries, cfg: PreprocConfig = PreprocConfig(), threshold: float = 0.5):
    """Segment one scene into a ``(scale*H) x (scale*W)`` uint8 map of {0, 1}."""
    if model.dims[0] != cfg.k:
        raise InputError(f"model expects k={model.dims[0]} pooled features, config has k={cfg.k}")
    t, b = scene.images.shape[:2]
    if t * b < cfg.k:
        raise InputError(f"scene has T*B={t}*{b}={t * b} channels, fewer than the model's k={cfg.k}")
    if not 0 < threshold < 1:
        raise InputError(f"threshold must lie in (0, 1), got {threshold}")
    scene = replace(scene, label=None)
    patches = scene_patches(scene, cfg)
    maps = []
    for p in patches:
        probs, _ = forward(model, grid_graph(p.height, p.width), p.features)
        maps.append((probs >= threshold).astype(np.uint8).reshape(p.height, p.width))
    return reassemble(maps, [p.tile for p in patches], scale=cfg.scale)
