"""Graph-convolutional segmentation network with hand-written backpropagation.

Each layer computes ``act(A_hat @ H @ W + b)``: ReLU on hidden layers and
sigmoid on the single-unit output layer. The product is evaluated as
``A_hat @ (H @ W)`` so the sparse aggregation always runs on the narrower
side of each layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError, NumericError
from .graph import GridGraph
from .io_formats import atomic_write
from .numerics import CsrMatrix, as_dense, gemm, spmm, transpose_gemm

DEFAULT_DIMS = (80, 64, 32, 16, 8, 1)
MAGIC = b"GCM1"

_P_LO = np.finfo(np.float64).tiny
_P_HI = np.nextafter(1.0, 0.0)


@dataclass
class GcnModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InputError("model needs at least one layer and one bias vector per layer")
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise InputError(f"layer {i}: weight {w.shape} and bias {b.shape} do not agree")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise InputError(f"layer {i} input {w.shape[0]} != previous output {self.weights[i - 1].shape[1]}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericError(f"layer {i} has non-finite parameters")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def with_parameters(self, params) -> GcnModel:
        return GcnModel(list(params[0::2]), list(params[1::2]))

    def copy(self) -> GcnModel:
        return GcnModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @classmethod
    def init(cls, dims=DEFAULT_DIMS, seed: int = 0) -> GcnModel:
        """Glorot-uniform weights, zero biases."""
        if len(dims) < 2 or min(dims) < 1:
            raise InputError(f"dims must list at least two positive widths, got {dims}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, dims=DEFAULT_DIMS) -> GcnModel:
        return cls([np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])], [np.zeros(b) for b in dims[1:]])


@dataclass
class ForwardTrace:
    """Activations kept for the backward pass.

    ``post[0]`` is the input feature matrix; ``post[l + 1]`` is the output of
    layer ``l``. ``pre[l]`` holds layer ``l``'s pre-activation (the final entry
    is the output logit column).
    """

    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)

    @property
    def logits(self) -> np.ndarray:
        return self.pre[-1][:, 0]


def _adjacency(graph) -> CsrMatrix:
    return graph.adjacency if isinstance(graph, GridGraph) else graph


def sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def forward(model: GcnModel, graph, features) -> tuple[np.ndarray, ForwardTrace]:
    """Node probabilities for ``features`` (N x k) on ``graph`` (a GridGraph or its CSR adjacency)."""
    adj = _adjacency(graph)
    h = as_dense(features, "features")
    if h.shape[1] != model.dims[0]:
        raise InputError(f"model expects {model.dims[0]} features per node, got {h.shape[1]}")
    if h.shape[0] != adj.rows:
        raise InputError(f"graph has {adj.rows} nodes but features have {h.shape[0]} rows")
    if model.dims[-1] != 1:
        raise InputError(f"output layer must have one unit, got {model.dims[-1]}")
    trace = ForwardTrace(post=[h])
    last = model.n_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = spmm(adj, gemm(h, w)) + b
        if not np.isfinite(z).all():
            raise NumericError(f"non-finite pre-activation in layer {i}")
        trace.pre.append(z)
        h = np.maximum(z, 0.0) if i < last else sigmoid(z)
        trace.post.append(h)
    # keep probabilities strictly inside (0, 1) even when the logit saturates
    probs = np.clip(trace.post[-1][:, 0], _P_LO, _P_HI)
    return probs, trace


def bce_from_logits(z, y):
    """Elementwise binary cross-entropy, stable for large ``|z|``."""
    return np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))


def backward(model: GcnModel, graph, trace: ForwardTrace, labels, sample_weights=None, normalizer=None):
    """Gradients of the weighted BCE ``sum(w_i * bce_i) / normalizer``.

    ``normalizer`` defaults to ``sum(sample_weights)``, which gives the weighted
    mean; training passes the node count of the whole batch instead so that
    per-patch gradients add up to the batch mean. Returns ``(grads, loss)``
    where ``grads`` is a list of ``(dW, db)`` pairs.
    """
    adj = _adjacency(graph)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    n = adj.rows
    if y.shape != (n,):
        raise InputError(f"expected {n} labels, got {y.shape}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise InputError("labels must be 0 or 1")
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64).reshape(-1)
    if w.shape != (n,) or np.any(w < 0) or not np.isfinite(w).all():
        raise InputError("sample_weights must be finite, non-negative and one per node")
    total = float(w.sum()) if normalizer is None else float(normalizer)
    grads = [(np.zeros_like(wt), np.zeros_like(bs)) for wt, bs in zip(model.weights, model.biases)]
    if total <= 0.0:
        return grads, 0.0
    z = trace.logits
    loss = float(np.sum(w * bce_from_logits(z, y)) / total)
    # sigmoid and BCE fused: d loss / d z = w * (p - y) / total
    dz = ((w / total) * (sigmoid(z) - y))[:, None]
    for i in range(model.n_layers - 1, -1, -1):
        if i < model.n_layers - 1:
            dz = dz * (trace.pre[i] > 0.0)
        # adjacency is symmetric, so A_hat^T dz == A_hat dz
        du = spmm(adj, dz)
        dw = transpose_gemm(trace.post[i], du)
        grads[i] = (dw, dz.sum(axis=0))
        if i:
            dz = gemm(du, np.ascontiguousarray(model.weights[i].T))
    for i, (dw, db) in enumerate(grads):
        if not (np.isfinite(dw).all() and np.isfinite(db).all()):
            raise NumericError(f"non-finite gradient in layer {i}")
    return grads, loss


def count_parameters(model: GcnModel) -> int:
    return sum(w.size + b.size for w, b in zip(model.weights, model.biases))


def predict_map(model: GcnModel, graph, features, threshold: float = 0.5) -> np.ndarray:
    """Binary node labels; probabilities equal to ``threshold`` map to 1."""
    if not 0.0 < threshold < 1.0:
        raise InputError(f"threshold must lie in (0, 1), got {threshold}")
    probs, _ = forward(model, graph, features)
    return (probs >= threshold).astype(np.uint8)


def model_file_size(dims) -> int:
    n_layers = len(dims) - 1
    n_params = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    return 8 + 4 * (n_layers + 1) + 4 * n_params


def model_to_bytes(model: GcnModel) -> bytes:
    dims = model.dims
    parts = [MAGIC, struct.pack("<I", model.n_layers), np.asarray(dims, dtype="<u4").tobytes()]
    for w, b in zip(model.weights, model.biases):
        parts.append(w.astype("<f4").tobytes())
        parts.append(b.astype("<f4").tobytes())
    return b"".join(parts)


def model_from_bytes(data: bytes) -> GcnModel:
    if len(data) < 8:
        raise FormatError(f"model file too short for header: {len(data)} bytes", offset=len(data))
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0)
    (n_layers,) = struct.unpack_from("<I", data, 4)
    if n_layers < 1:
        raise FormatError("model must have at least one layer", offset=4)
    dims_end = 8 + 4 * (n_layers + 1)
    if len(data) < dims_end:
        raise FormatError(f"truncated layer dimensions: need {dims_end} bytes", offset=len(data))
    dims = np.frombuffer(data, dtype="<u4", count=n_layers + 1, offset=8).astype(np.int64)
    if dims.min() < 1:
        bad = int(np.argmin(dims))
        raise FormatError(f"layer dimension {bad} is zero", offset=8 + 4 * bad)
    expected = model_file_size(dims)
    if len(data) < expected:
        raise FormatError(f"truncated parameters: expected {expected} bytes, got {len(data)}", offset=len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after parameters", offset=expected)
    weights, biases = [], []
    pos = dims_end
    for a, b in zip(dims[:-1], dims[1:]):
        weights.append(np.frombuffer(data, dtype="<f4", count=a * b, offset=pos).reshape(a, b).astype(np.float64))
        pos += 4 * a * b
        biases.append(np.frombuffer(data, dtype="<f4", count=b, offset=pos).astype(np.float64))
        pos += 4 * b
    try:
        return GcnModel(weights, biases)
    except NumericError as exc:
        raise FormatError(f"invalid parameters: {exc}") from exc


def save_model(model: GcnModel, path) -> None:
    atomic_write(path, model_to_bytes(model))


def load_model(path) -> GcnModel:
    return model_from_bytes(Path(path).read_bytes())
