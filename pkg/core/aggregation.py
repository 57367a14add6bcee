"""
Server side of FedQS: the state table, speed/similarity averages, feedback
weighting, both aggregation rules, and synchronous aggregation for baselines.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import ContractViolation, PayloadMismatch, StaleUpdateError
from .models import (
    Aggregation, BroadcastInfo, GlobalState, Hyper, LocalUpdate, PayloadKind, StateTable,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Averages:
    f: np.ndarray
    f_bar: float
    s_bar: float


def record_update(table: StateTable, u: LocalUpdate) -> StateTable:
    """n(i) += 1 and s_g(i) <- s_i for the sender; other rows untouched."""
    if not 0 <= u.client_id < table.num_clients:
        raise ContractViolation(f"unknown client id {u.client_id} (N={table.num_clients})")
    table.counts[u.client_id] += 1
    table.sims[u.client_id] = u.similarity
    return table


def averages(table: StateTable) -> Averages:
    """Per-client speed shares f_i, their mean f_bar and the mean similarity s_bar."""
    n = table.num_clients
    total = table.total
    if total == 0:
        f = np.full(n, 1.0 / n)
    else:
        f = table.counts / total
    # the f_i sum to one, so their mean is 1/N; taken directly to keep it exact
    return Averages(f=f, f_bar=1.0 / n, s_bar=float(table.sims.sum() / n))


def capped_ratio(s_bar: float, s_u: float, g_max: float) -> float:
    """G = s_bar / s_u limited to [-g_max, g_max]; 0/0 is 1."""
    if s_u == 0.0:
        if s_bar == 0.0:
            return 1.0
        return math.copysign(g_max, s_bar)
    return max(-g_max, min(g_max, s_bar / s_u))


def raw_feedback_weight(phi: float, F: float, G: float, K: int) -> float:
    """exp(phi - F) / 2^(phi - F) * (1 + G)^2 / K, folded into one exponential."""
    x = phi - F
    return math.exp(x * (1.0 - math.log(2.0))) * (1.0 + G) ** 2 / K


def compute_weights(
    batch: Sequence[LocalUpdate],
    table: StateTable,
    K: int,
    N: int,
    hyper: Hyper,
) -> np.ndarray:
    """
    Normalized aggregation weights for a batch.

    Every update starts at n_i / n. Updates that raised the feedback flag are
    re-weighted with raw_feedback_weight using the table as recorded after the
    whole batch arrived. Raw weights are floored at hyper.weight_floor, then
    normalized to sum to one.
    """
    if len(batch) != K:
        raise ContractViolation(f"batch holds {len(batch)} updates, expected K={K}")
    n = sum(u.n_i for u in batch)
    if n == 0:
        raise ContractViolation("batch carries no samples")
    avg = averages(table)
    phi = K / N
    raw = np.empty(len(batch))
    for j, u in enumerate(batch):
        if u.feedback:
            F = avg.f_bar / avg.f[u.client_id]
            G = capped_ratio(avg.s_bar, u.similarity, hyper.g_max)
            raw[j] = raw_feedback_weight(phi, F, G, K)
        else:
            raw[j] = u.n_i / n
    raw = np.maximum(raw, hyper.weight_floor)
    return raw / raw.sum()


def _require(batch: Sequence[LocalUpdate], kind: PayloadKind) -> None:
    for u in batch:
        if u.payload_kind != kind:
            raise PayloadMismatch(
                f"client {u.client_id} sent {u.payload_kind.value}, aggregation needs {kind.value}"
            )


def aggregate_sgd(g: GlobalState, batch: Sequence[LocalUpdate], p: np.ndarray) -> GlobalState:
    """w_g <- w_g - sum_u p_u * eta_u * U_u."""
    _require(batch, PayloadKind.PSEUDO_GRAD)
    step = np.zeros_like(g.params)
    for weight, u in zip(p, batch):
        step += weight * u.eta_used * u.payload
    return GlobalState(round=g.round + 1, params=g.params - step, eta_g=g.eta_g)


def aggregate_avg(g: GlobalState, batch: Sequence[LocalUpdate], p: np.ndarray) -> GlobalState:
    """w_g <- sum_u p_u * w_u."""
    _require(batch, PayloadKind.PARAMS)
    params = np.zeros_like(g.params)
    for weight, u in zip(p, batch):
        params += weight * u.payload
    return GlobalState(round=g.round + 1, params=params, eta_g=g.eta_g)


def aggregate_sync(g: GlobalState, batch: Sequence[LocalUpdate], strategy: Aggregation) -> GlobalState:
    """
    Synchronous round with data-size weights n_i / n and no feedback.

    Gradient rule: w - eta_g * sum (n_i/n) * U_i, where U_i is the client's
    gradient at the pulled global model; client learning rates play no part.
    Model rule: sum (n_i/n) * w_i.
    """
    seen = set()
    for u in batch:
        if u.base_round != g.round:
            raise StaleUpdateError(
                f"client {u.client_id} trained on round {u.base_round}, current round is {g.round}"
            )
        if u.client_id in seen:
            raise ContractViolation(f"client {u.client_id} appears twice in a synchronous round")
        seen.add(u.client_id)
    n = sum(u.n_i for u in batch)
    if n == 0:
        raise ContractViolation("batch carries no samples")
    weights = np.asarray([u.n_i / n for u in batch])
    if strategy == Aggregation.SGD:
        _require(batch, PayloadKind.PSEUDO_GRAD)
        step = np.zeros_like(g.params)
        for weight, u in zip(weights, batch):
            step += weight * u.payload
        return GlobalState(round=g.round + 1, params=g.params - g.eta_g * step, eta_g=g.eta_g)
    return aggregate_avg(g, batch, weights)


def make_broadcast(g: GlobalState, table: StateTable) -> List[BroadcastInfo]:
    """Immutable per-client snapshot of the global model and the averages."""
    avg = averages(table)
    params = g.params.copy()
    params.setflags(write=False)
    return [
        BroadcastInfo(round=g.round, global_params=params, f_bar=avg.f_bar, s_bar=avg.s_bar, f_i=float(avg.f[i]))
        for i in range(table.num_clients)
    ]
