"""State table, averages, feedback weighting and the aggregation rules."""
import math

import numpy as np
import pytest

from core.aggregation import (
    aggregate_avg, aggregate_sgd, aggregate_sync, averages, capped_ratio, compute_weights,
    make_broadcast, raw_feedback_weight, record_update,
)
from core.errors import ContractViolation, PayloadMismatch, StaleUpdateError
from core.models import Aggregation, GlobalState, Hyper, LocalUpdate, PayloadKind, StateTable


def _update(cid, payload=(0.0,), kind=PayloadKind.PSEUDO_GRAD, sim=0.5, feedback=False, n_i=10,
            eta=0.1, base_round=0):
    return LocalUpdate(
        client_id=cid, base_round=base_round, payload_kind=kind,
        payload=np.asarray(payload, dtype=float), eta_used=eta, similarity=sim,
        feedback=feedback, n_i=n_i,
    )


def test_record_update_touches_one_row():
    table = StateTable.fresh(5)
    record_update(table, _update(3, sim=0.4))
    assert table.counts.tolist() == [0, 0, 0, 1, 0]
    assert table.sims.tolist() == [0.0, 0.0, 0.0, 0.4, 0.0]
    record_update(table, _update(3, sim=0.6))
    assert table.counts[3] == 2 and table.sims[3] == 0.6


def test_record_update_rejects_unknown_client():
    with pytest.raises(ContractViolation):
        record_update(StateTable.fresh(2), _update(2))


def test_averages_fresh_and_counted():
    fresh = averages(StateTable.fresh(4))
    assert fresh.f.tolist() == [0.25] * 4
    table = StateTable(np.array([1, 2, 3, 4]), np.full(4, 0.5))
    avg = averages(table)
    assert avg.f == pytest.approx([0.1, 0.2, 0.3, 0.4])
    assert avg.f_bar == 0.25
    assert avg.s_bar == 0.5


def test_capped_ratio():
    assert capped_ratio(0.0, 0.0, 100.0) == 1.0
    assert capped_ratio(0.5, 0.0, 100.0) == 100.0
    assert capped_ratio(-0.5, 0.0, 100.0) == -100.0
    assert capped_ratio(0.5, 1e-9, 100.0) == 100.0
    assert capped_ratio(0.5, 0.25, 100.0) == 2.0


def test_raw_feedback_weight_values():
    assert raw_feedback_weight(0.1, 0.1, 1.0, 10) == pytest.approx(0.4)
    expected = math.exp(-0.9) / 2.0 ** -0.9 * 0.4
    assert raw_feedback_weight(0.1, 1.0, 1.0, 10) == pytest.approx(expected)
    assert raw_feedback_weight(0.1, 1.0, 1.0, 10) == pytest.approx(0.3034655, abs=1e-7)


def test_raw_feedback_weight_monotone():
    Gs = np.linspace(0.0, 5.0, 11)
    Fs = np.linspace(0.1, 5.0, 11)
    by_G = [raw_feedback_weight(0.1, 1.0, G, 10) for G in Gs]
    by_F = [raw_feedback_weight(0.1, F, 1.0, 10) for F in Fs]
    assert all(a < b for a, b in zip(by_G, by_G[1:]))
    assert all(a > b for a, b in zip(by_F, by_F[1:]))


def test_raw_feedback_weight_far_below_phi_is_finite():
    for F in (800.0, 2000.0, 1e6):
        w = raw_feedback_weight(0.1, F, 1.0, 10)
        assert math.isfinite(w) and 0.0 <= w < 1e-100


def test_feedback_weight_is_bounded_by_the_cap():
    table = StateTable.fresh(4)
    batch = [_update(0, feedback=True, sim=1e-6), _update(1), _update(2), _update(3)]
    for u in batch:
        record_update(table, u)
    # s_bar ~ 0.25 against s_u = 1e-6: the uncapped ratio would be about 250000
    table.sims[:] = [1e-6, 0.5, 0.5, 0.0]
    hyper = Hyper(g_max=0.25)
    p = compute_weights(batch, table, 4, 4, hyper)
    # phi = F = 1 and n_i / n = 1 / K, so the ratio is exactly the (1 + G)^2 factor
    assert p[0] / p[1] == pytest.approx((1.0 + hyper.g_max) ** 2)
    assert p[0] < 0.5
    loose = compute_weights(batch, table, 4, 4, Hyper())
    assert loose[0] > 0.99


def test_weights_without_feedback_follow_data_sizes():
    batch = [_update(i) for i in range(10)]
    table = StateTable.fresh(100)
    for u in batch:
        record_update(table, u)
    assert compute_weights(batch, table, 10, 100, Hyper()) == pytest.approx([0.1] * 10)
    batch = [_update(0, n_i=1), _update(1, n_i=3)]
    assert compute_weights(batch, StateTable.fresh(2), 2, 2, Hyper()).tolist() == [0.25, 0.75]


def test_weights_with_feedback_sum_to_one():
    table = StateTable.fresh(4)
    batch = [_update(0, feedback=True, sim=0.1), _update(1, sim=0.9), _update(0, feedback=True, sim=-0.3),
             _update(2, sim=0.0, feedback=True)]
    for u in batch:
        record_update(table, u)
    p = compute_weights(batch, table, 4, 4, Hyper())
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(p > 0)


def test_negative_raw_weight_is_floored():
    table = StateTable.fresh(3)
    # s_bar = -0.5 against s_u = 0.5: G = -1 zeroes the raw feedback weight
    batch = [_update(0, feedback=True, sim=0.5), _update(1, sim=-1.0), _update(2, sim=-1.0)]
    for u in batch:
        record_update(table, u)
    p = compute_weights(batch, table, 3, 3, Hyper())
    assert 0 < p[0] < 1e-4
    assert p.sum() == pytest.approx(1.0)


def test_weights_contract_errors():
    with pytest.raises(ContractViolation):
        compute_weights([_update(0)], StateTable.fresh(2), 2, 2, Hyper())
    with pytest.raises(ContractViolation):
        compute_weights([_update(0, n_i=0)], StateTable.fresh(1), 1, 1, Hyper())


def test_aggregate_sgd_single_step():
    g = GlobalState(0, np.array([1.0]))
    out = aggregate_sgd(g, [_update(0, payload=[2.0])], np.array([1.0]))
    assert out.params == pytest.approx([0.8])
    assert out.round == 1


def test_aggregate_sgd_cancellation_and_zero_step():
    g = GlobalState(2, np.array([1.0, -1.0]))
    out = aggregate_sgd(g, [_update(0, payload=[1.0, 2.0]), _update(1, payload=[-1.0, -2.0])], np.array([0.5, 0.5]))
    assert np.array_equal(out.params, g.params)
    out = aggregate_sgd(g, [_update(0, payload=[0.0, 0.0])], np.array([1.0]))
    assert np.array_equal(out.params, g.params) and out.round == 3


def test_aggregate_avg_rules():
    g = GlobalState(0, np.array([0.0]))
    batch = [_update(0, payload=[1.0], kind=PayloadKind.PARAMS), _update(1, payload=[3.0], kind=PayloadKind.PARAMS)]
    assert aggregate_avg(g, batch, np.array([0.5, 0.5])).params.tolist() == [2.0]
    assert aggregate_avg(g, batch, np.array([1.0, 0.0])).params.tolist() == [1.0]


def test_aggregate_avg_stays_in_convex_hull():
    rng = np.random.default_rng(0)
    payloads = rng.normal(size=(5, 8))
    batch = [_update(i, payload=payloads[i], kind=PayloadKind.PARAMS) for i in range(5)]
    p = rng.dirichlet(np.ones(5))
    out = aggregate_avg(GlobalState(0, np.zeros(8)), batch, p).params
    assert np.all(out >= payloads.min(axis=0) - 1e-12)
    assert np.all(out <= payloads.max(axis=0) + 1e-12)


def test_payload_mismatch():
    g = GlobalState(0, np.array([0.0]))
    with pytest.raises(PayloadMismatch):
        aggregate_sgd(g, [_update(0, kind=PayloadKind.PARAMS)], np.array([1.0]))
    with pytest.raises(PayloadMismatch):
        aggregate_avg(g, [_update(0)], np.array([1.0]))


def test_sync_rules():
    g = GlobalState(0, np.array([1.0]), eta_g=0.0)
    batch = [_update(0, payload=[5.0]), _update(1, payload=[7.0])]
    assert aggregate_sync(g, batch, Aggregation.SGD).params.tolist() == [1.0]
    g = GlobalState(0, np.array([1.0]), eta_g=0.5)
    batch = [_update(0, payload=[1.0], n_i=1), _update(1, payload=[3.0], n_i=3, eta=0.2)]
    # client learning rates do not enter the sync gradient rule
    assert aggregate_sync(g, batch, Aggregation.SGD).params == pytest.approx([1.0 - 0.5 * (0.25 * 1.0 + 0.75 * 3.0)])
    single = [_update(0, payload=[4.0], kind=PayloadKind.PARAMS)]
    assert aggregate_sync(g, single, Aggregation.AVG).params.tolist() == [4.0]


def test_sync_rejects_stale_and_duplicate_updates():
    g = GlobalState(3, np.array([1.0]))
    with pytest.raises(StaleUpdateError):
        aggregate_sync(g, [_update(0, base_round=2)], Aggregation.SGD)
    with pytest.raises(ContractViolation):
        aggregate_sync(g, [_update(0, base_round=3), _update(0, base_round=3)], Aggregation.SGD)


def test_broadcast_snapshot():
    table = StateTable.fresh(4)
    infos = make_broadcast(GlobalState(0, np.zeros(2)), table)
    assert [i.f_i for i in infos] == [0.25] * 4
    record_update(table, _update(1))
    assert infos[1].f_i == 0.25
    assert not infos[0].global_params.flags.writeable
    assert make_broadcast(GlobalState(1, np.zeros(2)), table)[1].f_i == 1.0
