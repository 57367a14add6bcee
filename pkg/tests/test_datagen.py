"""Synthetic data, partitioners, splits and CSV ingestion."""
import numpy as np
import pytest

from core.datagen import (
    apply_plan, gen_synthetic, heterogeneity_tv, label_distribution, largest_remainder,
    load_csv, load_csv_groups, partition_dirichlet, partition_iid, partition_lognormal,
    split_indices, split_train_val,
)
from core.errors import ContractViolation, DataFormatError
from core.models import LabeledDataset, SyntheticSpec


def _pool(per_class=50, classes=5, seed=0):
    return gen_synthetic(SyntheticSpec(num_classes=classes, dim=4, per_class=per_class), seed)


def _assert_exact_partition(plan, n):
    flat = [i for owned in plan.assignments for i in owned]
    assert sorted(flat) == list(range(n))
    assert all(len(owned) > 0 for owned in plan.assignments)


def test_synthetic_shape_and_determinism():
    spec = SyntheticSpec(num_classes=3, dim=2, per_class=10)
    a, b = gen_synthetic(spec, [4, 3]), gen_synthetic(spec, [4, 3])
    assert a.features.shape == (30, 2)
    assert np.bincount(a.labels).tolist() == [10, 10, 10]
    assert np.array_equal(a.features, b.features)


def test_synthetic_centres_distinct_when_classes_outnumber_axes():
    ds = gen_synthetic(SyntheticSpec(num_classes=6, dim=2, per_class=200, noise_sd=0.1), 0)
    centres = np.array([ds.features[ds.labels == c].mean(axis=0) for c in range(6)])
    gaps = [np.linalg.norm(centres[i] - centres[j]) for i in range(6) for j in range(i + 1, 6)]
    assert min(gaps) > 1.0


def test_largest_remainder_sums_exactly():
    counts = largest_remainder(10, np.array([1.0, 1.0, 1.0]))
    assert counts.sum() == 10
    assert sorted(counts.tolist()) == [3, 3, 4]


def test_iid_partition_is_exact():
    ds = _pool()
    plan = partition_iid(ds, 7, 0)
    _assert_exact_partition(plan, len(ds))
    assert max(plan.sizes) - min(plan.sizes) <= 1


@pytest.mark.parametrize("x", [0.05, 0.5, 100.0])
def test_dirichlet_partition_is_exact(x):
    ds = _pool()
    plan = partition_dirichlet(ds, 10, x, [1, 5])
    _assert_exact_partition(plan, len(ds))


def test_dirichlet_concentration_controls_heterogeneity():
    ds = _pool(per_class=100)
    skewed = np.mean([heterogeneity_tv(ds, partition_dirichlet(ds, 10, 0.1, s)) for s in range(5)])
    even = np.mean([heterogeneity_tv(ds, partition_dirichlet(ds, 10, 100.0, s)) for s in range(5)])
    assert skewed > even


def test_dirichlet_is_seeded():
    ds = _pool()
    assert partition_dirichlet(ds, 6, 0.5, 3) == partition_dirichlet(ds, 6, 0.5, 3)


def test_dirichlet_rejects_bad_inputs():
    ds = _pool()
    with pytest.raises(ContractViolation):
        partition_dirichlet(ds, 5, 0.0, 0)
    with pytest.raises(ContractViolation):
        partition_dirichlet(ds, len(ds) + 1, 0.5, 0)
    missing = LabeledDataset(ds.features[:10], ds.labels[:10], ds.num_classes)
    with pytest.raises(ContractViolation):
        partition_dirichlet(missing, 2, 0.5, 0)


def test_lognormal_tiny_sigma_is_even():
    ds = _pool(per_class=20)
    plan = partition_lognormal(ds, np.zeros(len(ds), dtype=int), 1e-9, 4, 0)
    assert plan.sizes == [25, 25, 25, 25]


def test_lognormal_keeps_clients_inside_their_group():
    ds = _pool(per_class=40)
    plan = partition_lognormal(ds, ds.labels, 1.0, 3, 2)
    _assert_exact_partition(plan, len(ds))
    assert plan.num_clients == 15
    for cid, part in enumerate(apply_plan(ds, plan)):
        assert set(part.labels.tolist()) == {cid // 3}


def test_lognormal_sizes_are_skewed():
    ds = _pool(per_class=1000, classes=5)
    group = np.zeros(len(ds), dtype=int)
    cvs = []
    for seed in range(20):
        sizes = np.asarray(partition_lognormal(ds, group, 1.0, 50, seed).sizes, dtype=float)
        cvs.append(sizes.std(ddof=1) / sizes.mean())
    assert 0.7 <= float(np.mean(cvs)) <= 2.5


def test_lognormal_rejects_empty_group():
    ds = _pool()
    with pytest.raises(ContractViolation):
        partition_lognormal(ds, np.zeros(len(ds), dtype=int), 1.0, 2, 0, num_groups=2)


def test_split_keeps_both_sides_nonempty():
    train, val = split_indices(2, 0.8, 0)
    assert len(train) == 1 and len(val) == 1
    train, val = split_indices(10, 0.8, 0)
    assert len(train) == 8 and sorted(np.concatenate([train, val]).tolist()) == list(range(10))


def test_split_train_val_is_seeded():
    ds = _pool()
    a_train, _ = split_train_val(ds, 0.8, [0, 6, 1])
    b_train, _ = split_train_val(ds, 0.8, [0, 6, 1])
    assert np.array_equal(a_train.features, b_train.features)


def test_split_rejects_bad_fraction_and_tiny_sets():
    with pytest.raises(ContractViolation):
        split_indices(10, 1.0, 0)
    with pytest.raises(ContractViolation):
        split_indices(1, 0.5, 0)


def test_label_distribution_sums_to_one():
    assert label_distribution(_pool()).sum() == pytest.approx(1.0)


def _write(tmp_path, text):
    path = tmp_path / "data.csv"
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_scales_and_encodes(tmp_path):
    path = _write(tmp_path, "age,color,label\n10,red,yes\n20,blue,no\n30,red,yes\n")
    ds = load_csv(path, ["age", "color"], "label", {"color": ["red", "blue"]})
    assert ds.features.tolist() == [[0.0, 1.0, 0.0], [0.5, 0.0, 1.0], [1.0, 1.0, 0.0]]
    # ids follow sorted label names: no -> 0, yes -> 1
    assert ds.labels.tolist() == [1, 0, 1]
    assert ds.num_classes == 2


def test_load_csv_constant_column_maps_to_zero(tmp_path):
    path = _write(tmp_path, "x,label\n5,a\n5,b\n")
    assert load_csv(path, ["x"], "label").features.ravel().tolist() == [0.0, 0.0]


def test_load_csv_reports_row_of_missing_label(tmp_path):
    path = _write(tmp_path, "x,label\n1,a\n2,\n")
    with pytest.raises(DataFormatError) as err:
        load_csv(path, ["x"], "label")
    assert err.value.row == 3
    assert err.value.column == "label"


def test_load_csv_rejects_bad_number_and_category(tmp_path):
    path = _write(tmp_path, "x,c,label\n1,u,a\nzz,u,b\n")
    with pytest.raises(DataFormatError) as err:
        load_csv(path, ["x"], "label")
    assert err.value.column == "x"
    with pytest.raises(DataFormatError):
        load_csv(path, ["c"], "label", {"c": ["v"]})


def test_load_csv_missing_column_and_file(tmp_path):
    path = _write(tmp_path, "x,label\n1,a\n")
    with pytest.raises(DataFormatError):
        load_csv(path, ["y"], "label")
    with pytest.raises(DataFormatError):
        load_csv(tmp_path / "absent.csv", ["x"], "label")


def test_load_csv_groups_sorted_ids(tmp_path):
    path = _write(tmp_path, "x,site,label\n1,b,a\n2,a,a\n3,b,b\n")
    assert load_csv_groups(path, "site").tolist() == [1, 0, 1]
