"""Similarity, quadrant classification, adaptation and local training."""
import math

import numpy as np
import pytest

from core.client import (
    adapt, build_update, classify, local_similarity, local_train, momentum_descent,
    momentum_rate, pseudo_global_gradient, similarity, similarity_ratio, validation_spread,
)
from core.errors import ContractViolation
from core.models import (
    Aggregation, BroadcastInfo, ClientRuntime, Hyper, LabeledDataset, ModelKind,
    ModelSpec, PayloadKind, Quadrant, SimilarityKind,
)
from core.numcore import zeros

SPEC = ModelSpec(ModelKind.LOGREG, 2, 2)


def _data():
    features = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]])
    return LabeledDataset(features, np.array([0, 0, 1, 1]), 2)


def _runtime(eta=0.1, momentum=0.0):
    data = _data()
    return ClientRuntime(id=0, train_set=data, val_set=data, eta=eta, momentum=momentum)


def _info(f_i, f_bar=0.25, s_bar=0.5, params=None):
    return BroadcastInfo(round=3, global_params=zeros(SPEC) if params is None else params,
                         f_bar=f_bar, s_bar=s_bar, f_i=f_i)


def test_pseudo_global_gradient():
    assert np.array_equal(pseudo_global_gradient(np.array([3.0, 1.0]), np.array([1.0, 1.0])), [2.0, 0.0])
    assert np.array_equal(pseudo_global_gradient(np.array([3.0, 1.0]), None), [0.0, 0.0])


def test_cosine_similarity_cases():
    assert similarity(np.array([1.0, 0.0]), np.array([2.0, 0.0])) == pytest.approx(1.0)
    assert similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)
    assert similarity(np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == pytest.approx(-1.0)
    assert similarity(np.zeros(2), np.array([1.0, 0.0])) == 1.0


def test_distance_similarities_peak_at_equality():
    u = np.array([1.0, 2.0])
    assert similarity(u, u, SimilarityKind.EUCLIDEAN) == 1.0
    assert similarity(u, u + 1.0, SimilarityKind.MANHATTAN) == pytest.approx(1.0 / 3.0)


def test_similarity_rejects_shape_mismatch():
    with pytest.raises(ContractViolation):
        similarity(np.zeros(2), np.zeros(3))


@pytest.mark.parametrize("f_i,s_i,expected", [
    (0.3, 0.4, Quadrant.FBC),
    (0.3, 0.6, Quadrant.FUC),
    (0.2, 0.6, Quadrant.SUC),
    (0.2, 0.4, Quadrant.SBC),
])
def test_classify_quadrants(f_i, s_i, expected):
    assert classify(f_i, 0.25, s_i, 0.5) == expected


def test_classify_ties():
    # equal speed counts as straggling, equal similarity as unbiased
    assert classify(0.25, 0.25, 0.5, 0.5) == Quadrant.SUC


def test_similarity_ratio_guards():
    assert similarity_ratio(0.0, 0.0) == 1.0
    assert similarity_ratio(0.5, 0.0) == math.inf
    assert similarity_ratio(0.5, 0.25) == 2.0


def test_momentum_rate():
    assert momentum_rate(0.1, 0.2, 1.0) == pytest.approx(0.1)
    assert momentum_rate(0.1, 0.2, 0.5) == pytest.approx(0.3)
    assert momentum_rate(0.1, 0.2, math.inf) == pytest.approx(-0.1)
    assert momentum_rate(0.1, 0.0, 7.0) == 0.1


def test_adapt_fast_unbiased_lowers_eta():
    hyper = Hyper(a=0.002)
    rt = adapt(_runtime(), _info(f_i=0.5), s_i=0.6, hyper=hyper, spec=SPEC)
    assert rt.quadrant == Quadrant.FUC
    assert rt.eta == pytest.approx(0.1 - 0.002 * 0.5)
    assert rt.momentum_enabled and not rt.feedback


def test_adapt_straggler_raises_eta():
    rt = adapt(_runtime(), _info(f_i=0.125), s_i=0.6, hyper=Hyper(a=0.002), spec=SPEC)
    assert rt.quadrant == Quadrant.SUC
    assert rt.eta == pytest.approx(0.1 + 0.002 * 2.0)


def test_adapt_fast_biased_raises_feedback_and_stops_momentum():
    before = _runtime(momentum=0.05)
    rt = adapt(before, _info(f_i=0.5), s_i=0.1, hyper=Hyper(), spec=SPEC)
    assert rt.quadrant == Quadrant.FBC
    assert rt.feedback and not rt.momentum_enabled
    assert rt.momentum == 0.05
    assert rt.eta == 0.1
    assert before.quadrant == Quadrant.UNKNOWN


def test_adapt_clamps_eta_and_momentum():
    hyper = Hyper(a=10.0, m0=0.5, k=5.0, eta_max=0.2, theta_cap=0.9)
    rt = adapt(_runtime(), _info(f_i=0.125, s_bar=0.5), s_i=0.5 + 1e-9, hyper=hyper, spec=SPEC)
    assert rt.eta == 0.2
    assert 0.0 <= rt.momentum <= 0.9
    rt = adapt(_runtime(), _info(f_i=0.5), s_i=0.6, hyper=hyper, spec=SPEC)
    assert rt.eta == hyper.eta_min


def test_adapt_zero_similarity_floors_momentum():
    rt = adapt(_runtime(), _info(f_i=0.5, s_bar=0.5), s_i=0.0, hyper=Hyper(m0=0.1, k=0.2), spec=SPEC)
    # FBC keeps momentum off; the rate was still computed and clamped
    assert rt.quadrant == Quadrant.FBC
    rt = adapt(_runtime(), _info(f_i=0.1, s_bar=-0.5), s_i=0.0, hyper=Hyper(m0=0.1, k=0.2), spec=SPEC)
    assert rt.quadrant == Quadrant.SUC
    assert rt.momentum == 0.0


def test_adapt_sbc_spread_decides_feedback():
    # zero parameters predict class 0 everywhere: recall spread is 1
    low = Hyper(spread_threshold=0.5)
    rt = adapt(_runtime(), _info(f_i=0.1), s_i=0.1, hyper=low, spec=SPEC)
    assert rt.quadrant == Quadrant.SBC and rt.feedback
    high = Hyper(spread_threshold=1.0)
    rt = adapt(_runtime(), _info(f_i=0.1), s_i=0.1, hyper=high, spec=SPEC)
    assert rt.quadrant == Quadrant.SBC and not rt.feedback and rt.momentum_enabled


def test_adapt_respects_disabled_mechanisms():
    hyper = Hyper(use_feedback=False, use_momentum=False)
    rt = adapt(_runtime(), _info(f_i=0.5), s_i=0.1, hyper=hyper, spec=SPEC)
    assert not rt.feedback and not rt.momentum_enabled


def test_adapt_rejects_nonpositive_speed():
    with pytest.raises(ContractViolation):
        adapt(_runtime(), _info(f_i=0.0), s_i=0.5, hyper=Hyper(), spec=SPEC)


def test_validation_spread():
    assert validation_spread(SPEC, zeros(SPEC), _data()) == 1.0


def test_momentum_descent_on_quadratic():
    w, acc, grads = momentum_descent(lambda w: w.copy(), np.array([1.0]), 0.1, 0.5, 2, 20.0, True)
    assert w[0] == pytest.approx(0.76)
    assert acc[0] == pytest.approx(2.4)
    assert [g[0] for g in grads] == pytest.approx([1.0, 0.9])


def test_momentum_descent_end_matches_accumulated_exactly():
    start = np.array([0.3, -1.7, 2.2])
    w, acc, _ = momentum_descent(lambda w: 2.0 * w, start, 0.07, 0.6, 5, 20.0, True)
    assert np.array_equal(w, start - 0.07 * acc)


def test_momentum_descent_without_momentum_is_plain_gd():
    w, acc, _ = momentum_descent(lambda w: w.copy(), np.array([1.0]), 0.1, 0.5, 2, 20.0, False)
    assert acc[0] == pytest.approx(1.9)
    assert w[0] == pytest.approx(0.81)


def test_momentum_descent_clips_each_gradient():
    _, acc, grads = momentum_descent(lambda w: np.array([300.0, 400.0]), np.zeros(2), 0.1, 0.0, 1, 20.0, True)
    assert np.allclose(grads[0], [12.0, 16.0])
    assert np.allclose(acc, [12.0, 16.0])


def test_momentum_descent_uses_history():
    w, acc, _ = momentum_descent(lambda w: np.array([1.0]), np.array([0.0]), 0.1, 0.5, 1, 20.0, True,
                                 history=(np.array([2.0]),))
    assert acc[0] == pytest.approx(2.0)


def test_momentum_descent_contracts():
    with pytest.raises(ContractViolation):
        momentum_descent(lambda w: w, np.zeros(1), 0.1, 0.5, 0, 20.0, True)
    with pytest.raises(ContractViolation):
        momentum_descent(lambda w: w, np.zeros(1), 0.1, 1.0, 1, 20.0, True)


def test_local_train_reduces_loss():
    from core.numcore import forward_eval
    data = _data()
    start = zeros(SPEC)
    end, _ = local_train(SPEC, start, data, 0.5, 0.0, 5, 20.0, False)
    assert forward_eval(SPEC, end, data)[0] < forward_eval(SPEC, start, data)[0]


def test_local_similarity_needs_global():
    with pytest.raises(ContractViolation):
        local_similarity(_runtime(), np.zeros(6))


def test_local_similarity_first_round_is_one():
    rt = _runtime()
    rt.global_now = zeros(SPEC)
    assert local_similarity(rt, np.ones(6)) == 1.0
    rt.global_prev = -np.ones(6)
    assert local_similarity(rt, np.ones(6)) == pytest.approx(1.0)
    assert local_similarity(rt, -np.ones(6)) == pytest.approx(-1.0)


def test_build_update_payload_follows_aggregation():
    rt = _runtime()
    rt.base_round = 4
    params_end, accumulated = np.full(6, 2.0), np.full(6, 3.0)
    sgd = build_update(rt, params_end, accumulated, 0.7, Aggregation.SGD)
    assert sgd.payload_kind == PayloadKind.PSEUDO_GRAD and np.array_equal(sgd.payload, accumulated)
    avg = build_update(rt, params_end, accumulated, 0.7, Aggregation.AVG)
    assert avg.payload_kind == PayloadKind.PARAMS and np.array_equal(avg.payload, params_end)
    assert (avg.base_round, avg.n_i, avg.eta_used, avg.similarity) == (4, 4, 0.1, 0.7)
