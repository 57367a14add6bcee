"""
Client side of FedQS: pseudo-global gradient and similarity, quadrant
classification, learning-rate / momentum adaptation, the SBC validation test,
momentum local training and update packaging.
"""
import dataclasses
import logging
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractViolation
from .models import (
    Aggregation, BroadcastInfo, ClientRuntime, Hyper, LabeledDataset,
    LocalUpdate, ModelSpec, ParamVec, PayloadKind, Quadrant, SimilarityKind,
)
from .numcore import clip_gradient, gradient, predict

logger = logging.getLogger(__name__)


def _same_length(u: ParamVec, v: ParamVec) -> None:
    if u.shape != v.shape:
        raise ContractViolation(f"vector shapes differ: {u.shape} vs {v.shape}")


def pseudo_global_gradient(global_now: ParamVec, global_prev: Optional[ParamVec]) -> ParamVec:
    """L_g = w_g^t - w_g^(t-1); zero when there is no previous global yet."""
    if global_prev is None:
        return np.zeros_like(global_now)
    _same_length(global_now, global_prev)
    return global_now - global_prev


def similarity(u: ParamVec, v: ParamVec, kind: SimilarityKind = SimilarityKind.COSINE) -> float:
    """
    Larger means more aligned, whatever the kind.

    Cosine is 1 when either vector is zero. Distance kinds map d to 1 / (1 + d).
    """
    _same_length(u, v)
    if kind == SimilarityKind.COSINE:
        nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
        if nu == 0.0 or nv == 0.0:
            return 1.0
        return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
    if kind == SimilarityKind.EUCLIDEAN:
        return 1.0 / (1.0 + float(np.linalg.norm(u - v)))
    return 1.0 / (1.0 + float(np.abs(u - v).sum()))


def classify(f_i: float, f_bar: float, s_i: float, s_bar: float) -> Quadrant:
    """Fast is strict (f_i > f_bar); unbiased is inclusive (s_i >= s_bar)."""
    fast = f_i > f_bar
    unbiased = s_i >= s_bar
    if fast:
        return Quadrant.FUC if unbiased else Quadrant.FBC
    return Quadrant.SUC if unbiased else Quadrant.SBC


def similarity_ratio(s_bar: float, s_i: float) -> float:
    """G = s_bar / s_i with the zero guards: 0/0 is 1, x/0 is signed infinity."""
    if s_i == 0.0:
        if s_bar == 0.0:
            return 1.0
        return math.copysign(math.inf, s_bar)
    return s_bar / s_i


def momentum_rate(m0: float, k: float, G: float) -> float:
    """
    m = m0 + k (1/G - 1), unclamped. An infinite G contributes 1/G = 0 and a
    zero G a signed infinity, which the caller's clamp absorbs.
    """
    if k == 0:
        return m0
    if math.isinf(G):
        inv = 0.0
    elif G == 0.0:
        inv = math.copysign(math.inf, G)
    else:
        inv = 1.0 / G
    return m0 + k * (inv - 1.0)


def validation_spread(spec: ModelSpec, params: ParamVec, val: LabeledDataset) -> float:
    """max - min per-class recall over the classes present in val."""
    if len(val) == 0:
        raise ContractViolation("validation set is empty")
    predicted = predict(spec, params, val.features)
    recalls = [
        float((predicted[val.labels == c] == c).mean())
        for c in np.unique(val.labels)
    ]
    return max(recalls) - min(recalls)


def adapt(
    rt: ClientRuntime,
    info: BroadcastInfo,
    s_i: float,
    hyper: Hyper,
    spec: ModelSpec,
) -> ClientRuntime:
    """
    Classify the client against the broadcast averages and adjust eta, momentum
    and the feedback flag. Returns a new runtime; rt is not modified.
    """
    if info.f_i <= 0:
        raise ContractViolation(f"client {rt.id}: update speed must be positive, got {info.f_i}")
    quadrant = classify(info.f_i, info.f_bar, s_i, info.s_bar)
    F = info.f_bar / info.f_i
    m = hyper.clamp_momentum(momentum_rate(hyper.m0, hyper.k, similarity_ratio(info.s_bar, s_i)))

    eta = rt.eta
    feedback = False
    momentum_on = True
    if quadrant == Quadrant.FBC:
        feedback, momentum_on = True, False
    elif quadrant == Quadrant.FUC:
        eta = rt.eta - hyper.a * F
    else:
        eta = rt.eta + hyper.a * F
        if quadrant == Quadrant.SBC:
            spread = validation_spread(spec, info.global_params, rt.val_set)
            if spread > hyper.spread_threshold:
                # dispersed per-label recall is handled like FBC
                feedback, momentum_on = True, False
            logger.debug("client %d SBC spread %.3f", rt.id, spread)

    feedback = feedback and hyper.use_feedback
    momentum_on = momentum_on and hyper.use_momentum
    return dataclasses.replace(
        rt,
        eta=hyper.clamp_eta(eta),
        momentum=m if momentum_on else rt.momentum,
        quadrant=quadrant,
        feedback=feedback,
        momentum_enabled=momentum_on,
        similarity=s_i,
    )


def momentum_descent(
    grad_fn: Callable[[ParamVec], ParamVec],
    start: ParamVec,
    eta: float,
    m: float,
    epochs: int,
    grad_clip: float,
    momentum_enabled: bool,
    history: Sequence[ParamVec] = (),
) -> Tuple[ParamVec, ParamVec, Tuple[ParamVec, ...]]:
    """
    E epochs of clipped gradient steps with the FedQS momentum term.

    step_e = sum_{r>=1} m^r g_(e-r) + g_e, over this call's gradients preceded by
    history (oldest first). Intermediate iterates are formed as start - eta * acc
    so that params_end == start - eta * accumulated holds bit for bit.

    Returns:
        (params_end, accumulated, gradients of this call)
    """
    if epochs < 1:
        raise ContractViolation(f"epochs must be >= 1, got {epochs}")
    if eta <= 0:
        raise ContractViolation(f"learning rate must be positive, got {eta}")
    if not 0 <= m < 1:
        raise ContractViolation(f"momentum must lie in [0, 1), got {m}")

    use_momentum = momentum_enabled and m > 0
    seen = list(history) if use_momentum else []
    grads = []
    accumulated = np.zeros_like(start)
    w = start
    for _ in range(epochs):
        g = clip_gradient(grad_fn(w), grad_clip)
        step = g
        if use_momentum:
            step = g.copy()
            for r, past in enumerate(reversed(seen), start=1):
                step += (m ** r) * past
            seen.append(g)
        grads.append(g)
        accumulated = accumulated + step
        w = start - eta * accumulated
    return w, accumulated, tuple(grads)


def local_train(
    spec: ModelSpec,
    start: ParamVec,
    data: LabeledDataset,
    eta: float,
    m: float,
    epochs: int,
    grad_clip: float,
    momentum_enabled: bool,
) -> Tuple[ParamVec, ParamVec]:
    """Full-batch local epochs; returns (params_end, accumulated pseudo-gradient)."""
    params_end, accumulated, _ = momentum_descent(
        lambda w: gradient(spec, w, data), start, eta, m, epochs, grad_clip, momentum_enabled,
    )
    return params_end, accumulated


def local_similarity(rt: ClientRuntime, params_end: ParamVec, kind: SimilarityKind = SimilarityKind.COSINE) -> float:
    """Similarity between the client's displacement from global_now and the last global move."""
    if rt.global_now is None:
        raise ContractViolation(f"client {rt.id} has not received a global model")
    if rt.global_prev is None:
        return 1.0
    displacement = params_end - rt.global_now
    return similarity(displacement, pseudo_global_gradient(rt.global_now, rt.global_prev), kind)


def build_update(
    rt: ClientRuntime,
    params_end: ParamVec,
    accumulated: ParamVec,
    s_i: float,
    strategy: Aggregation,
) -> LocalUpdate:
    if strategy == Aggregation.SGD:
        kind, payload = PayloadKind.PSEUDO_GRAD, accumulated
    else:
        kind, payload = PayloadKind.PARAMS, params_end
    return LocalUpdate(
        client_id=rt.id,
        base_round=rt.base_round,
        payload_kind=kind,
        payload=payload,
        eta_used=rt.eta,
        similarity=s_i,
        feedback=rt.feedback,
        n_i=rt.n_samples,
    )
