"""
Data models and enums for the FedQS simulator.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import (
    DEFAULT_A, DEFAULT_COST_C0, DEFAULT_COST_C1, DEFAULT_ETA0, DEFAULT_ETA_G,
    DEFAULT_ETA_MAX, DEFAULT_ETA_MIN, DEFAULT_G_MAX, DEFAULT_GRAD_CLIP, DEFAULT_HIDDEN_DIM,
    DEFAULT_K, DEFAULT_K_MOMENTUM, DEFAULT_LOCAL_EPOCHS, DEFAULT_M0,
    DEFAULT_NUM_CLIENTS, DEFAULT_ROUNDS, DEFAULT_SPEED_RATIO,
    DEFAULT_SPREAD_THRESHOLD, DEFAULT_THETA_CAP, DEFAULT_WEIGHT_FLOOR,
)
from .errors import ContractViolation

# Flat float64 vector. Layout is fixed by ModelSpec.layout(): weights then
# biases, layer by layer, each block row-major.
ParamVec = np.ndarray


class ModelKind(Enum):
    LOGREG = "logreg"
    MLP = "mlp"


class Aggregation(Enum):
    SGD = "sgd"   # gradient aggregation
    AVG = "avg"   # model aggregation


class Strategy(Enum):
    FEDQS_SGD = "fedqs-sgd"
    FEDQS_AVG = "fedqs-avg"
    FEDSGD = "fedsgd"
    FEDAVG = "fedavg"

    @property
    def is_fedqs(self) -> bool:
        return self in (Strategy.FEDQS_SGD, Strategy.FEDQS_AVG)

    @property
    def aggregation(self) -> Aggregation:
        if self in (Strategy.FEDQS_SGD, Strategy.FEDSGD):
            return Aggregation.SGD
        return Aggregation.AVG


class Mode(Enum):
    SAFL = "safl"
    SYNC = "sync"


class Quadrant(Enum):
    FBC = "fbc"   # fast but biased
    FUC = "fuc"   # fast and unbiased
    SUC = "suc"   # straggling but unbiased
    SBC = "sbc"   # straggling and biased
    UNKNOWN = "unknown"


class SimilarityKind(Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"


class PayloadKind(Enum):
    PSEUDO_GRAD = "pseudo_grad"
    PARAMS = "params"


class EventKind(Enum):
    TRAINING_DONE = "training_done"


@dataclass(frozen=True)
class ModelSpec:
    """Shape of one of the two supported classifiers."""
    kind: ModelKind
    input_dim: int
    num_classes: int
    hidden_dim: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ContractViolation(f"input_dim must be positive, got {self.input_dim}")
        if self.num_classes < 2:
            raise ContractViolation(f"num_classes must be >= 2, got {self.num_classes}")
        if self.kind == ModelKind.MLP and self.hidden_dim < 1:
            raise ContractViolation(f"MLP needs hidden_dim >= 1, got {self.hidden_dim}")

    def layout(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """Named blocks of the parameter vector, in storage order."""
        d, c, h = self.input_dim, self.num_classes, self.hidden_dim
        if self.kind == ModelKind.LOGREG:
            return [("W", (d, c)), ("b", (c,))]
        return [("W1", (d, h)), ("b1", (h,)), ("W2", (h, c)), ("b2", (c,))]

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.layout())


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix plus integer labels in [0, num_classes)."""
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ContractViolation(f"features must be 2-D, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ContractViolation(
                f"label count {labels.shape[0] if labels.ndim == 1 else labels.shape} "
                f"does not match row count {features.shape[0]}"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ContractViolation(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian-blob classification task."""
    num_classes: int = 10
    dim: int = 20
    per_class: int = 200
    class_sep: float = 3.0
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.num_classes < 2 or self.dim < 1 or self.per_class < 1:
            raise ContractViolation("synthetic spec needs num_classes >= 2, dim >= 1, per_class >= 1")
        if self.class_sep <= 0 or self.noise_sd <= 0:
            raise ContractViolation("class_sep and noise_sd must be positive")

    @property
    def total(self) -> int:
        return self.num_classes * self.per_class


@dataclass(frozen=True)
class PartitionPlan:
    """Sample indices owned by each client."""
    assignments: Tuple[Tuple[int, ...], ...]

    @property
    def num_clients(self) -> int:
        return len(self.assignments)

    @property
    def sizes(self) -> List[int]:
        return [len(a) for a in self.assignments]


@dataclass(frozen=True)
class Hyper:
    """Client adaptation and aggregation hyperparameters."""
    eta0: float = DEFAULT_ETA0
    a: float = DEFAULT_A
    m0: float = DEFAULT_M0
    k: float = DEFAULT_K_MOMENTUM
    eta_min: float = DEFAULT_ETA_MIN
    eta_max: float = DEFAULT_ETA_MAX
    theta_cap: float = DEFAULT_THETA_CAP
    grad_clip: float = DEFAULT_GRAD_CLIP
    spread_threshold: float = DEFAULT_SPREAD_THRESHOLD
    sim_kind: SimilarityKind = SimilarityKind.COSINE
    momentum_carryover: bool = False
    use_momentum: bool = True
    use_feedback: bool = True
    g_max: float = DEFAULT_G_MAX
    weight_floor: float = DEFAULT_WEIGHT_FLOOR
    eta_g: float = DEFAULT_ETA_G

    def __post_init__(self):
        if not 0 < self.eta_min <= self.eta_max:
            raise ContractViolation(f"need 0 < eta_min <= eta_max, got [{self.eta_min}, {self.eta_max}]")
        if not 0 <= self.theta_cap < 1:
            raise ContractViolation(f"theta_cap must lie in [0, 1), got {self.theta_cap}")
        if min(self.a, self.m0, self.k) < 0:
            raise ContractViolation("a, m0 and k must be nonnegative")
        if self.grad_clip <= 0 or self.eta0 <= 0:
            raise ContractViolation("grad_clip and eta0 must be positive")

    def clamp_eta(self, eta: float) -> float:
        return min(max(eta, self.eta_min), self.eta_max)

    def clamp_momentum(self, m: float) -> float:
        return min(max(m, 0.0), self.theta_cap)


@dataclass(frozen=True)
class CostModel:
    """Virtual training duration: (c0 + c1 * n_i * E) / speed."""
    c0: float = DEFAULT_COST_C0
    c1: float = DEFAULT_COST_C1

    def duration(self, n_samples: int, epochs: int, speed: float) -> float:
        return (self.c0 + self.c1 * n_samples * epochs) / speed


@dataclass(frozen=True)
class SimConfig:
    """Everything the engine needs for one simulated run."""
    num_clients: int = DEFAULT_NUM_CLIENTS
    k_trigger: int = DEFAULT_K
    rounds: int = DEFAULT_ROUNDS
    local_epochs: int = DEFAULT_LOCAL_EPOCHS
    strategy: Strategy = Strategy.FEDQS_SGD
    mode: Mode = Mode.SAFL
    speed_ratio: float = DEFAULT_SPEED_RATIO
    hyper: Hyper = field(default_factory=Hyper)
    cost: CostModel = field(default_factory=CostModel)
    seed: int = 0
    model_kind: ModelKind = ModelKind.LOGREG
    hidden_dim: int = DEFAULT_HIDDEN_DIM
    activation_count: Optional[int] = None   # sync mode; defaults to k_trigger
    keep_updates: bool = False

    def __post_init__(self):
        if self.num_clients < 1:
            raise ContractViolation(f"num_clients must be >= 1, got {self.num_clients}")
        if not 1 <= self.k_trigger <= self.num_clients:
            raise ContractViolation(f"need 1 <= K <= N, got K={self.k_trigger}, N={self.num_clients}")
        if self.rounds < 1 or self.local_epochs < 1:
            raise ContractViolation("rounds and local_epochs must be >= 1")
        if self.speed_ratio < 1:
            raise ContractViolation(f"speed_ratio must be >= 1, got {self.speed_ratio}")
        if self.activation_count is not None and not 1 <= self.activation_count <= self.num_clients:
            raise ContractViolation(f"activation_count must lie in [1, N], got {self.activation_count}")

    @property
    def activations(self) -> int:
        return self.activation_count if self.activation_count is not None else self.k_trigger


@dataclass
class ClientRuntime:
    """Mutable per-client state, owned by the engine."""
    id: int
    train_set: LabeledDataset
    val_set: LabeledDataset
    eta: float
    momentum: float = 0.0
    global_now: Optional[ParamVec] = None
    global_prev: Optional[ParamVec] = None
    base_round: int = 0
    quadrant: Quadrant = Quadrant.UNKNOWN
    feedback: bool = False
    momentum_enabled: bool = False
    params: Optional[ParamVec] = None
    similarity: float = 1.0
    grad_history: Tuple[ParamVec, ...] = ()

    @property
    def n_samples(self) -> int:
        return len(self.train_set)


@dataclass(frozen=True, eq=False)
class BroadcastInfo:
    """What the server disseminates to one client."""
    round: int
    global_params: ParamVec
    f_bar: float
    s_bar: float
    f_i: float


@dataclass(frozen=True, eq=False)
class LocalUpdate:
    """The message a client pushes after a local training session."""
    client_id: int
    base_round: int
    payload_kind: PayloadKind
    payload: ParamVec
    eta_used: float
    similarity: float
    feedback: bool
    n_i: int

    def same_as(self, other: "LocalUpdate") -> bool:
        return (
            self.client_id == other.client_id
            and self.base_round == other.base_round
            and self.payload_kind == other.payload_kind
            and np.array_equal(self.payload, other.payload)
            and self.eta_used == other.eta_used
            and self.similarity == other.similarity
            and self.feedback == other.feedback
            and self.n_i == other.n_i
        )


@dataclass
class StateTable:
    """Server-side n(i) and s_g(i) per client."""
    counts: np.ndarray
    sims: np.ndarray

    @classmethod
    def fresh(cls, num_clients: int) -> "StateTable":
        return cls(np.zeros(num_clients, dtype=np.int64), np.zeros(num_clients, dtype=np.float64))

    @property
    def num_clients(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class AggBuffer:
    """Pending updates in arrival order; the same client may appear twice."""
    pending: List[LocalUpdate] = field(default_factory=list)

    def push(self, update: LocalUpdate) -> None:
        self.pending.append(update)

    def ready(self, k: int) -> bool:
        return len(self.pending) >= k

    def take(self, k: int) -> List[LocalUpdate]:
        batch, self.pending = self.pending[:k], self.pending[k:]
        return batch


@dataclass(frozen=True, eq=False)
class GlobalState:
    round: int
    params: ParamVec
    eta_g: float = DEFAULT_ETA_G


@dataclass(frozen=True, order=True)
class Event:
    """Heap entry; ordering is (time, client_id)."""
    time: float
    client_id: int
    kind: EventKind = field(default=EventKind.TRAINING_DONE, compare=False)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    vtime: float
    test_acc: float
    test_loss: float
    mean_staleness: float
    num_feedback: int
    f_bar: float
    s_bar: float


@dataclass(frozen=True)
class Summary:
    best_acc: float
    convergence_acc: float
    target_acc: float
    T_f: Optional[int]
    T_s: Optional[int]
    oscillations: int
    final_vtime: float
    final_loss: float
    mean_staleness: float

    @property
    def stability(self) -> Optional[int]:
        if self.T_f is None or self.T_s is None:
            return None
        return self.T_s - self.T_f


@dataclass
class Trace:
    """Per-round measurements of one run, plus what replay needs."""
    records: List[RoundRecord] = field(default_factory=list)
    summary: Optional[Summary] = None
    initial_params: Optional[ParamVec] = None
    final_params: Optional[ParamVec] = None
    batches: List[List[LocalUpdate]] = field(default_factory=list)

    @property
    def accuracies(self) -> List[float]:
        return [r.test_acc for r in self.records]


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the convergence-constant calculator."""
    L: float = 1.0
    delta: float = 1.0
    G_c: float = DEFAULT_GRAD_CLIP
    E: int = DEFAULT_LOCAL_EPOCHS
    theta: float = DEFAULT_THETA_CAP
    K: int = DEFAULT_K
    N: int = DEFAULT_NUM_CLIENTS
    beta: float = 0.1
    p: float = 0.5
    q: float = 0.0
    Q_t: int = 0
    init_gap: float = 1.0

    def __post_init__(self):
        if self.L <= 0 or self.G_c <= 0 or self.beta <= 0:
            raise ContractViolation("L, G_c and beta must be positive")
        if self.delta < 0 or self.init_gap < 0 or self.Q_t < 0:
            raise ContractViolation("delta, init_gap and Q_t must be nonnegative")
        if self.E < 1 or self.K < 1 or self.N < 1:
            raise ContractViolation("E, K and N must be >= 1")
        if not 0 <= self.theta < 1:
            raise ContractViolation(f"theta must lie in [0, 1), got {self.theta}")
        if not 0 <= self.q <= self.p <= 1:
            raise ContractViolation(f"need 0 <= q <= p <= 1, got q={self.q}, p={self.p}")
