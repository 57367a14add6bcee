"""
Synthetic tasks, non-IID partitioners, CSV ingestion and train/validation splits.

Every partitioner returns an exact partition of the source indices: each index
lands in exactly one client list, and no client is left empty.
"""
import csv
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractViolation, DataFormatError
from .models import LabeledDataset, PartitionPlan, SyntheticSpec

logger = logging.getLogger(__name__)

Seed = Union[int, Sequence[int]]


def gen_synthetic(spec: SyntheticSpec, seed: Seed) -> LabeledDataset:
    """
    Gaussian blobs. Class c is centred at class_sep * e_(c mod dim); when classes
    outnumber axes, later cycles flip sign and then grow in magnitude so centres
    stay distinct. Samples are ordered by class.
    """
    rng = np.random.default_rng(seed)
    means = np.zeros((spec.num_classes, spec.dim))
    for c in range(spec.num_classes):
        cycle = c // spec.dim
        sign = 1.0 if cycle % 2 == 0 else -1.0
        means[c, c % spec.dim] = sign * spec.class_sep * (1 + cycle // 2)
    labels = np.repeat(np.arange(spec.num_classes), spec.per_class)
    features = means[labels] + rng.normal(0.0, spec.noise_sd, size=(spec.total, spec.dim))
    return LabeledDataset(features, labels, spec.num_classes)


def largest_remainder(total: int, proportions: np.ndarray) -> np.ndarray:
    """Integer shares of total proportional to proportions, summing to total exactly."""
    props = np.asarray(proportions, dtype=np.float64)
    props = props / props.sum()
    raw = props * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _fill_empty(lists: List[List[int]]) -> None:
    """Every client must train: empty clients take one sample from the largest."""
    for cid, owned in enumerate(lists):
        if owned:
            continue
        donor = max(range(len(lists)), key=lambda j: (len(lists[j]), -j))
        if len(lists[donor]) < 2:
            raise ContractViolation("not enough samples to give every client at least one")
        owned.append(lists[donor].pop())


def _to_plan(lists: List[List[int]]) -> PartitionPlan:
    return PartitionPlan(tuple(tuple(sorted(int(i) for i in owned)) for owned in lists))


def partition_iid(ds: LabeledDataset, num_clients: int, seed: Seed) -> PartitionPlan:
    """Shuffle, then deal near-equal contiguous chunks."""
    if num_clients < 1:
        raise ContractViolation(f"num_clients must be >= 1, got {num_clients}")
    if len(ds) < num_clients:
        raise ContractViolation(f"{len(ds)} samples cannot cover {num_clients} clients")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ds))
    return _to_plan([chunk.tolist() for chunk in np.array_split(perm, num_clients)])


def partition_dirichlet(ds: LabeledDataset, num_clients: int, x: float, seed: Seed) -> PartitionPlan:
    """
    Hetero-Dirichlet split: for each class, draw Dir(x, ..., x) shares over the
    clients and deal that class's shuffled samples by largest remainder.

    Args:
        ds: source dataset, every class present at least once
        num_clients: number of clients
        x: concentration; smaller means more heterogeneous label mixes
        seed: generator seed
    """
    if x <= 0:
        raise ContractViolation(f"Dirichlet concentration must be positive, got {x}")
    if num_clients < 1:
        raise ContractViolation(f"num_clients must be >= 1, got {num_clients}")
    if len(ds) < num_clients:
        raise ContractViolation(f"{len(ds)} samples cannot cover {num_clients} clients")
    present = np.unique(ds.labels)
    if present.size != ds.num_classes:
        missing = sorted(set(range(ds.num_classes)) - set(present.tolist()))
        raise ContractViolation(f"classes without samples: {missing}")

    rng = np.random.default_rng(seed)
    lists: List[List[int]] = [[] for _ in range(num_clients)]
    for c in present:
        idx = rng.permutation(np.flatnonzero(ds.labels == c))
        shares = rng.dirichlet(np.full(num_clients, x))
        counts = largest_remainder(idx.size, shares)
        start = 0
        for cid, cnt in enumerate(counts):
            lists[cid].extend(idx[start:start + cnt].tolist())
            start += cnt
    _fill_empty(lists)
    return _to_plan(lists)


def partition_lognormal(
    ds: LabeledDataset,
    group_of: Sequence[int],
    sigma: float,
    clients_per_group: int,
    seed: Seed,
    num_groups: Optional[int] = None,
) -> PartitionPlan:
    """
    Group-restricted quantity skew. Within each group, client sizes follow
    normalized i.i.d. LogNormal(0, sigma^2) weights; clients of a group only
    receive that group's samples. Clients are numbered group by group.

    Args:
        group_of: group id of every sample, ids in [0, num_groups)
        num_groups: expected group count; defaults to max(group_of) + 1
    """
    if sigma <= 0:
        raise ContractViolation(f"sigma must be positive, got {sigma}")
    if clients_per_group < 1:
        raise ContractViolation(f"clients_per_group must be >= 1, got {clients_per_group}")
    groups = np.asarray(group_of, dtype=np.int64)
    if groups.shape != (len(ds),):
        raise ContractViolation(f"group_of has {groups.shape[0]} entries for {len(ds)} samples")
    if groups.size and groups.min() < 0:
        raise ContractViolation("group ids must be nonnegative")
    if num_groups is None:
        num_groups = int(groups.max()) + 1 if groups.size else 0

    rng = np.random.default_rng(seed)
    lists: List[List[int]] = []
    for g in range(num_groups):
        idx = rng.permutation(np.flatnonzero(groups == g))
        if idx.size == 0:
            raise ContractViolation(f"group {g} has no samples")
        weights = rng.lognormal(0.0, sigma, size=clients_per_group)
        counts = largest_remainder(idx.size, weights)
        group_lists = []
        start = 0
        for cnt in counts:
            group_lists.append(idx[start:start + cnt].tolist())
            start += cnt
        _fill_empty(group_lists)
        lists.extend(group_lists)
    return _to_plan(lists)


def apply_plan(ds: LabeledDataset, plan: PartitionPlan) -> List[LabeledDataset]:
    return [ds.subset(list(owned)) for owned in plan.assignments]


def split_indices(n: int, train_fraction: float, seed: Seed) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle of range(n), then the first round(train_fraction * n) go to train; both sides nonempty."""
    if not 0 < train_fraction < 1:
        raise ContractViolation(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if n < 2:
        raise ContractViolation(f"need at least 2 samples to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = min(max(int(np.floor(train_fraction * n + 0.5)), 1), n - 1)
    return perm[:n_train], perm[n_train:]


def split_train_val(ds: LabeledDataset, train_fraction: float, seed: Seed) -> Tuple[LabeledDataset, LabeledDataset]:
    train_idx, val_idx = split_indices(len(ds), train_fraction, seed)
    return ds.subset(train_idx), ds.subset(val_idx)


def label_distribution(ds: LabeledDataset) -> np.ndarray:
    counts = np.bincount(ds.labels, minlength=ds.num_classes).astype(np.float64)
    return counts / max(len(ds), 1)


def heterogeneity_tv(ds: LabeledDataset, plan: PartitionPlan) -> float:
    """Mean total-variation distance between client label mixes and the global mix."""
    global_mix = label_distribution(ds)
    distances = [
        0.5 * np.abs(label_distribution(part) - global_mix).sum()
        for part in apply_plan(ds, plan) if len(part)
    ]
    return float(np.mean(distances))


# ---- CSV ingestion ----

def _open_rows(path: Union[str, Path]):
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"file not found: {path}")
    handle = open(path, newline="", encoding="utf-8")
    reader = csv.DictReader(handle)
    if reader.fieldnames is None:
        handle.close()
        raise DataFormatError(f"{path} has no header row")
    return handle, reader


def load_csv(
    path: Union[str, Path],
    feature_columns: Sequence[str],
    label_column: str,
    categorical_map: Optional[Mapping[str, Sequence[str]]] = None,
) -> LabeledDataset:
    """
    Read a headed CSV into a dataset.

    Columns listed in categorical_map are one-hot encoded in the listed category
    order; every other feature column is parsed as a number and min-max scaled to
    [0, 1] (constant columns map to 0). Label strings are mapped to contiguous ids
    in sorted order.
    """
    categorical_map = dict(categorical_map or {})
    handle, reader = _open_rows(path)
    with handle:
        for col in list(feature_columns) + [label_column]:
            if col not in reader.fieldnames:
                raise DataFormatError("missing from header", column=col)

        numeric: Dict[str, List[float]] = {c: [] for c in feature_columns if c not in categorical_map}
        categorical: Dict[str, List[int]] = {c: [] for c in feature_columns if c in categorical_map}
        raw_labels: List[str] = []

        for row in reader:
            line = reader.line_num
            for col in numeric:
                text = (row.get(col) or "").strip()
                try:
                    numeric[col].append(float(text))
                except ValueError:
                    raise DataFormatError(f"cannot parse '{text}' as a number", row=line, column=col) from None
            for col in categorical:
                value = (row.get(col) or "").strip()
                options = list(categorical_map[col])
                if value not in options:
                    raise DataFormatError(f"unknown category '{value}'", row=line, column=col)
                categorical[col].append(options.index(value))
            label = (row.get(label_column) or "").strip()
            if not label:
                raise DataFormatError("missing label value", row=line, column=label_column)
            raw_labels.append(label)

    if not raw_labels:
        raise DataFormatError(f"{path} has no data rows")

    blocks = []
    for col in feature_columns:
        if col in numeric:
            values = np.asarray(numeric[col], dtype=np.float64)
            lo, hi = values.min(), values.max()
            scaled = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
            blocks.append(scaled[:, None])
        else:
            width = len(categorical_map[col])
            blocks.append(np.eye(width)[np.asarray(categorical[col], dtype=np.int64)])
    features = np.hstack(blocks) if blocks else np.zeros((len(raw_labels), 0))

    names = sorted(set(raw_labels))
    label_ids = np.asarray([names.index(v) for v in raw_labels], dtype=np.int64)
    logger.debug("loaded %d rows, %d features, labels %s from %s", len(raw_labels), features.shape[1], names, path)
    return LabeledDataset(features, label_ids, len(names))


def load_csv_groups(path: Union[str, Path], group_column: str) -> np.ndarray:
    """Group id per row for partition_lognormal, ids assigned in sorted value order."""
    handle, reader = _open_rows(path)
    with handle:
        if group_column not in reader.fieldnames:
            raise DataFormatError("missing from header", column=group_column)
        values = [(row.get(group_column) or "").strip() for row in reader]
    names = sorted(set(values))
    return np.asarray([names.index(v) for v in values], dtype=np.int64)
