"""
Deterministic discrete-event simulator for semi-asynchronous and synchronous FL.

Clients train on a virtual clock at heterogeneous speeds. In SAFL mode each
client loops train -> push -> (pull if a newer global exists) -> train; the
server aggregates as soon as K updates are pending. In sync mode the server
activates a seeded subset per round and waits for the slowest of them.
"""
import heapq
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .aggregation import (
    aggregate_avg, aggregate_sgd, aggregate_sync, averages, compute_weights,
    make_broadcast, record_update,
)
from .client import adapt, build_update, local_similarity, momentum_descent
from .config import STREAM_ACTIVATION, STREAM_INIT, STREAM_SPEEDS
from .errors import ContractViolation, FedQSError, SimulationError
from .models import (
    AggBuffer, Aggregation, ClientRuntime, Event, GlobalState, LabeledDataset,
    LocalUpdate, Mode, ModelKind, ModelSpec, ParamVec, RoundRecord, SimConfig,
    StateTable, Trace,
)
from .numcore import forward_eval, gradient, init_params

logger = logging.getLogger(__name__)

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True)
class ClientData:
    train: LabeledDataset
    val: LabeledDataset


@dataclass(frozen=True, eq=False)
class AggregationContext:
    """Handed to an observer after every aggregation."""
    batch: List[LocalUpdate]
    weights: np.ndarray
    table: StateTable
    state: GlobalState
    record: RoundRecord
    runtimes: List[ClientRuntime]


Observer = Callable[[AggregationContext], None]


def assign_speeds(num_clients: int, ratio: float, seed: Seed) -> np.ndarray:
    """Speed multipliers drawn uniformly from [1, ratio]."""
    if ratio < 1:
        raise ContractViolation(f"speed ratio must be >= 1, got {ratio}")
    if ratio == 1:
        return np.ones(num_clients)
    return np.random.default_rng(seed).uniform(1.0, ratio, size=num_clients)


def staleness_of(update: LocalUpdate, current_round: int) -> int:
    age = current_round - update.base_round
    if age < 0:
        raise ContractViolation(
            f"client {update.client_id} reports base round {update.base_round} ahead of round {current_round}"
        )
    return age


def model_spec_for(cfg: SimConfig, data: LabeledDataset) -> ModelSpec:
    hidden = cfg.hidden_dim if cfg.model_kind == ModelKind.MLP else 0
    return ModelSpec(cfg.model_kind, data.dim, data.num_classes, hidden)


class Simulator:
    """
    One simulated training run. Owns the clients, the server state and the clock.
    """

    def __init__(
        self,
        cfg: SimConfig,
        clients: Sequence[ClientData],
        testset: LabeledDataset,
        observer: Optional[Observer] = None,
    ):
        if len(clients) != cfg.num_clients:
            raise ContractViolation(f"{len(clients)} client datasets for N={cfg.num_clients}")
        if cfg.mode == Mode.SYNC and cfg.strategy.is_fedqs:
            raise ContractViolation("sync mode runs the baseline strategies only")
        self.cfg = cfg
        self.hyper = cfg.hyper
        self.aggregation = cfg.strategy.aggregation
        self.spec = model_spec_for(cfg, testset)
        self.testset = testset
        self.observer = observer
        self.speeds = assign_speeds(cfg.num_clients, cfg.speed_ratio, [cfg.seed, STREAM_SPEEDS])
        self.table = StateTable.fresh(cfg.num_clients)
        self.buffer = AggBuffer()
        self.state = GlobalState(0, init_params(self.spec, [cfg.seed, STREAM_INIT]), self.hyper.eta_g)
        self.runtimes = [
            ClientRuntime(id=i, train_set=c.train, val_set=c.val, eta=self.hyper.eta0)
            for i, c in enumerate(clients)
        ]
        self.vtime = 0.0
        self.trace = Trace(initial_params=self.state.params.copy())
        self._in_flight: Dict[int, LocalUpdate] = {}

    # ---- client side ----

    def _pull(self, cid: int) -> None:
        """Adopt the current global model, then adapt (FedQS strategies only)."""
        rt = self.runtimes[cid]
        rt.global_prev = rt.global_now
        rt.global_now = self.state.params
        rt.base_round = self.state.round
        rt.params = self.state.params
        if self.cfg.strategy.is_fedqs:
            info = make_broadcast(self.state, self.table)[cid]
            self.runtimes[cid] = adapt(rt, info, rt.similarity, self.hyper, self.spec)

    def _train(self, cid: int) -> float:
        """Run one local session; the update is held until its completion event. Returns the duration."""
        rt = self.runtimes[cid]
        epochs = self.local_epochs
        history = rt.grad_history if self.hyper.momentum_carryover else ()
        params_end, accumulated, grads = momentum_descent(
            lambda w: gradient(self.spec, w, rt.train_set),
            rt.params, rt.eta, rt.momentum, epochs,
            self.hyper.grad_clip, rt.momentum_enabled, history,
        )
        s_i = local_similarity(rt, params_end, self.hyper.sim_kind)
        self._in_flight[cid] = build_update(rt, params_end, accumulated, s_i, self.aggregation)
        rt.params = params_end
        rt.similarity = s_i
        if self.hyper.momentum_carryover:
            rt.grad_history = grads
        return self.cfg.cost.duration(rt.n_samples, epochs, float(self.speeds[cid]))

    @property
    def local_epochs(self) -> int:
        """Sync gradient clients send a single gradient taken at the pulled global model."""
        if self.cfg.mode == Mode.SYNC and self.aggregation == Aggregation.SGD:
            return 1
        return self.cfg.local_epochs

    # ---- server side ----

    def _evaluate(self, batch: List[LocalUpdate], weights: np.ndarray, staleness: List[int]) -> None:
        loss, acc = forward_eval(self.spec, self.state.params, self.testset)
        avg = averages(self.table)
        record = RoundRecord(
            round=self.state.round,
            vtime=self.vtime,
            test_acc=acc,
            test_loss=loss,
            mean_staleness=float(np.mean(staleness)),
            num_feedback=sum(1 for u in batch if u.feedback),
            f_bar=avg.f_bar,
            s_bar=avg.s_bar,
        )
        self.trace.records.append(record)
        if self.cfg.keep_updates:
            self.trace.batches.append(list(batch))
        logger.debug(
            "round %d t=%.3f acc=%.4f loss=%.4f staleness=%.2f",
            record.round, record.vtime, acc, loss, record.mean_staleness,
        )
        if self.observer is not None:
            self.observer(AggregationContext(batch, weights, self.table, self.state, record, self.runtimes))

    def _receive(self, update: LocalUpdate) -> None:
        record_update(self.table, update)
        self.buffer.push(update)
        if not self.buffer.ready(self.cfg.k_trigger):
            return
        batch = self.buffer.take(self.cfg.k_trigger)
        staleness = [staleness_of(u, self.state.round) for u in batch]
        weights = compute_weights(batch, self.table, self.cfg.k_trigger, self.cfg.num_clients, self.hyper)
        if self.aggregation == Aggregation.SGD:
            self.state = aggregate_sgd(self.state, batch, weights)
        else:
            self.state = aggregate_avg(self.state, batch, weights)
        self._evaluate(batch, weights, staleness)

    # ---- loops ----

    def run(self) -> Trace:
        try:
            if self.cfg.mode == Mode.SYNC:
                self._run_sync()
            else:
                self._run_safl()
        except SimulationError:
            raise
        except FedQSError as exc:
            raise SimulationError(str(exc), self.state.round) from exc
        self.trace.final_params = self.state.params.copy()
        last = self.trace.records[-1]
        logger.info(
            "%s/%s finished %d rounds at t=%.2f, acc=%.4f",
            self.cfg.strategy.value, self.cfg.mode.value, last.round, last.vtime, last.test_acc,
        )
        return self.trace

    def _run_safl(self) -> None:
        queue: List[Event] = []
        for cid in range(self.cfg.num_clients):
            self._pull(cid)
            heapq.heappush(queue, Event(self._train(cid), cid))
        while self.state.round < self.cfg.rounds:
            event = heapq.heappop(queue)
            if event.time < self.vtime:
                raise SimulationError(f"clock moved backwards to {event.time}", self.state.round)
            self.vtime = event.time
            # clients finishing at the same instant all push before any of them resumes
            finished = [event.client_id]
            while queue and queue[0].time == event.time:
                finished.append(heapq.heappop(queue).client_id)
            for cid in finished:
                self._receive(self._in_flight.pop(cid))
                if self.state.round >= self.cfg.rounds:
                    return
            for cid in finished:
                if self.state.round > self.runtimes[cid].base_round:
                    self._pull(cid)
                heapq.heappush(queue, Event(self.vtime + self._train(cid), cid))

    def _run_sync(self) -> None:
        rng = np.random.default_rng([self.cfg.seed, STREAM_ACTIVATION])
        count = self.cfg.activations
        while self.state.round < self.cfg.rounds:
            chosen = np.sort(rng.choice(self.cfg.num_clients, size=count, replace=False))
            durations = []
            for cid in chosen:
                self._pull(int(cid))
                durations.append(self._train(int(cid)))
            batch = [self._in_flight.pop(int(cid)) for cid in chosen]
            self.vtime += max(durations)
            for u in batch:
                record_update(self.table, u)
            staleness = [staleness_of(u, self.state.round) for u in batch]
            n = sum(u.n_i for u in batch)
            weights = np.asarray([u.n_i / n for u in batch])
            self.state = aggregate_sync(self.state, batch, self.aggregation)
            self._evaluate(batch, weights, staleness)


def run_safl(
    cfg: SimConfig,
    clients: Sequence[ClientData],
    testset: LabeledDataset,
    observer: Optional[Observer] = None,
) -> Trace:
    if cfg.mode != Mode.SAFL:
        raise ContractViolation(f"run_safl needs mode safl, got {cfg.mode.value}")
    return Simulator(cfg, clients, testset, observer).run()


def run_sync(
    cfg: SimConfig,
    clients: Sequence[ClientData],
    testset: LabeledDataset,
    observer: Optional[Observer] = None,
) -> Trace:
    if cfg.mode != Mode.SYNC:
        raise ContractViolation(f"run_sync needs mode sync, got {cfg.mode.value}")
    return Simulator(cfg, clients, testset, observer).run()


def simulate(
    cfg: SimConfig,
    clients: Sequence[ClientData],
    testset: LabeledDataset,
    observer: Optional[Observer] = None,
) -> Trace:
    """Run in whichever mode cfg asks for."""
    return Simulator(cfg, clients, testset, observer).run()


def replay_aggregation(
    initial: ParamVec,
    batches: Sequence[Sequence[LocalUpdate]],
    cfg: SimConfig,
) -> ParamVec:
    """
    Re-apply recorded batches to the initial model. Reproduces a run's final
    global model because every update is recorded on receipt and each batch is
    exactly the K updates received since the previous aggregation.
    """
    table = StateTable.fresh(cfg.num_clients)
    state = GlobalState(0, np.asarray(initial, dtype=np.float64), cfg.hyper.eta_g)
    aggregation = cfg.strategy.aggregation
    for batch in batches:
        batch = list(batch)
        for u in batch:
            record_update(table, u)
        if cfg.mode == Mode.SYNC:
            state = aggregate_sync(state, batch, aggregation)
            continue
        weights = compute_weights(batch, table, cfg.k_trigger, cfg.num_clients, cfg.hyper)
        if aggregation == Aggregation.SGD:
            state = aggregate_sgd(state, batch, weights)
        else:
            state = aggregate_avg(state, batch, weights)
    return state.params
