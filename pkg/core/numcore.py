"""
Parameter vectors, the two classifiers, evaluation, analytic gradients and clipping.

Both models end in a softmax over num_classes logits and are trained on mean
cross-entropy. The MLP uses a tanh hidden layer.
"""
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from .config import INIT_SCALE
from .errors import ContractViolation
from .models import LabeledDataset, ModelKind, ModelSpec, ParamVec


def init_params(spec: ModelSpec, seed: Union[int, Sequence[int]]) -> ParamVec:
    """Small uniform noise in [-INIT_SCALE, INIT_SCALE], one value per parameter."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-INIT_SCALE, INIT_SCALE, size=spec.num_params)


def zeros(spec: ModelSpec) -> ParamVec:
    return np.zeros(spec.num_params, dtype=np.float64)


def unpack(spec: ModelSpec, params: ParamVec) -> Dict[str, np.ndarray]:
    """Views of the named blocks of params (no copy)."""
    _check_params(spec, params)
    blocks = {}
    offset = 0
    for name, shape in spec.layout():
        size = int(np.prod(shape))
        blocks[name] = params[offset:offset + size].reshape(shape)
        offset += size
    return blocks


def pack(spec: ModelSpec, blocks: Dict[str, np.ndarray]) -> ParamVec:
    return np.concatenate([np.asarray(blocks[name], dtype=np.float64).ravel() for name, _ in spec.layout()])


def _check_params(spec: ModelSpec, params: ParamVec) -> None:
    if params.ndim != 1 or params.shape[0] != spec.num_params:
        raise ContractViolation(
            f"parameter vector has shape {params.shape}, model expects ({spec.num_params},)"
        )


def _check_data(spec: ModelSpec, data: LabeledDataset) -> None:
    if len(data) == 0:
        raise ContractViolation("dataset is empty")
    if data.dim != spec.input_dim:
        raise ContractViolation(f"dataset has {data.dim} features, model expects {spec.input_dim}")
    if data.num_classes > spec.num_classes:
        raise ContractViolation(
            f"dataset has {data.num_classes} classes, model outputs {spec.num_classes}"
        )


def _logits(spec: ModelSpec, blocks: Dict[str, np.ndarray], x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (logits, hidden activations); hidden is empty for LogReg."""
    if spec.kind == ModelKind.LOGREG:
        return x @ blocks["W"] + blocks["b"], np.empty((x.shape[0], 0))
    hidden = np.tanh(x @ blocks["W1"] + blocks["b1"])
    return hidden @ blocks["W2"] + blocks["b2"], hidden


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict(spec: ModelSpec, params: ParamVec, features: np.ndarray) -> np.ndarray:
    """Argmax class per row."""
    logits, _ = _logits(spec, unpack(spec, params), np.asarray(features, dtype=np.float64))
    return logits.argmax(axis=1)


def forward_eval(spec: ModelSpec, params: ParamVec, data: LabeledDataset) -> Tuple[float, float]:
    """
    Mean cross-entropy and accuracy of params on data.

    Returns:
        (loss, accuracy)
    """
    _check_data(spec, data)
    logits, _ = _logits(spec, unpack(spec, params), data.features)
    log_probs = _log_softmax(logits)
    n = len(data)
    loss = float(-log_probs[np.arange(n), data.labels].mean())
    accuracy = float((logits.argmax(axis=1) == data.labels).mean())
    return loss, accuracy


def gradient(spec: ModelSpec, params: ParamVec, data: LabeledDataset) -> ParamVec:
    """Analytic gradient of mean cross-entropy, in the same layout as params."""
    _check_data(spec, data)
    blocks = unpack(spec, params)
    x = data.features
    n = len(data)
    logits, hidden = _logits(spec, blocks, x)
    delta = np.exp(_log_softmax(logits))
    delta[np.arange(n), data.labels] -= 1.0
    delta /= n

    if spec.kind == ModelKind.LOGREG:
        return pack(spec, {"W": x.T @ delta, "b": delta.sum(axis=0)})

    d_hidden = (delta @ blocks["W2"].T) * (1.0 - hidden ** 2)
    return pack(spec, {
        "W1": x.T @ d_hidden,
        "b1": d_hidden.sum(axis=0),
        "W2": hidden.T @ delta,
        "b2": delta.sum(axis=0),
    })


def clip_gradient(g: ParamVec, bound: float) -> ParamVec:
    """Rescale g onto the L2 ball of radius bound; g is returned as-is when inside."""
    if bound <= 0:
        raise ContractViolation(f"clip bound must be positive, got {bound}")
    norm = float(np.linalg.norm(g))
    if norm <= bound:
        return g
    clipped = g * (bound / norm)
    # rounding can leave the norm a hair above bound
    while float(np.linalg.norm(clipped)) > bound:
        clipped = clipped * np.nextafter(1.0, 0.0)
    return clipped
