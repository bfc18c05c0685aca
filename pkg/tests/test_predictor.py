import math

import numpy as np
import pytest

from shuttlenet import autograd as ag
from shuttlenet.numerics import LOG_2PI, bvn_nll, GaussianParams, make_rng
from shuttlenet.predictor import (HeadParams, area_loss, heads_forward, predict_step, total_loss,
                                  type_loss)


@pytest.fixture
def heads():
    return HeadParams(6, 11, make_rng(0))


def test_step_outputs_valid(heads):
    rng = make_rng(1)
    for _ in range(50):
        pred = predict_step(rng.normal(size=6), rng.normal(size=6), heads)
        assert pred.type_probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert pred.type_probs[0] < 1e-300
        assert pred.gaussian.sigma_x > 0 and pred.gaussian.sigma_y > 0
        assert -1 < pred.gaussian.rho < 1


def test_output_depends_on_player(heads):
    z = np.ones(6) * 0.3
    p1 = predict_step(z, np.zeros(6), heads)
    p2 = predict_step(z, np.linspace(-1, 1, 6), heads)
    assert not np.allclose(p1.type_probs, p2.type_probs)
    assert p1.gaussian != p2.gaussian


def test_shape_mismatch(heads):
    with pytest.raises(ValueError):
        predict_step(np.zeros(6), np.zeros(5), heads)


def test_by_hand_d2():
    h = HeadParams(2, 3, make_rng(0))
    h.W_s.data = np.array([[0.0, 1.0, -1.0], [0.0, 0.5, 2.0]])
    h.W_a.data = np.array([[1.0, 0.0, 0.1, 0.0, 0.2], [0.0, 1.0, 0.0, -0.1, 0.3]])
    z, p = np.array([0.4, -0.2]), np.array([0.1, 0.6])
    # z + p = (0.5, 0.4)
    pred = predict_step(z, p, h)
    l1, l2 = 0.5 * 1.0 + 0.4 * 0.5, 0.5 * -1.0 + 0.4 * 2.0
    e1, e2 = math.exp(l1), math.exp(l2)
    np.testing.assert_allclose(pred.type_probs, [0.0, e1 / (e1 + e2), e2 / (e1 + e2)], atol=1e-15)
    g = pred.gaussian
    assert (g.mu_x, g.mu_y) == pytest.approx((0.5, 0.4), abs=1e-15)
    assert g.sigma_x == pytest.approx(math.exp(0.05), abs=1e-14)
    assert g.sigma_y == pytest.approx(math.exp(-0.04), abs=1e-14)
    assert g.rho == pytest.approx(math.tanh(0.1 + 0.12), abs=1e-14)


def test_ce_perfect_and_uniform():
    big = np.full((1, 2, 11), -1e9)
    big[0, 0, 3] = 0.0
    big[0, 1, 7] = 0.0
    lt = type_loss(ag.Tensor(big), np.array([[3, 7]]), np.ones((1, 2), bool))
    assert lt.data == pytest.approx(0.0, abs=1e-12)
    uni = np.zeros((1, 2, 11))
    uni[..., 0] = -1e9
    lt = type_loss(ag.Tensor(uni), np.array([[3, 7]]), np.ones((1, 2), bool))
    assert lt.data == pytest.approx(math.log(10), abs=1e-12)


def test_area_loss_at_mean():
    mu = ag.Tensor(np.zeros((1, 1, 2)))
    la = area_loss(mu, ag.Tensor(np.zeros((1, 1, 2))), ag.Tensor(np.zeros((1, 1))),
                   np.zeros((1, 1, 2)), np.ones((1, 1), bool))
    assert la.data == pytest.approx(LOG_2PI, abs=1e-12)


def test_area_loss_sigma_sweep_minimum():
    # target one unit away in x; optimum sigma_x is 1
    sig = np.linspace(0.3, 3.0, 28)
    vals = []
    for s in sig:
        la = area_loss(ag.Tensor(np.zeros((1, 1, 2))), ag.Tensor(np.log([[[s, 1.0]]])),
                       ag.Tensor(np.zeros((1, 1))), np.array([[[1.0, 0.0]]]), np.ones((1, 1), bool))
        vals.append(float(la.data))
    best = int(np.argmin(vals))
    assert sig[best] == pytest.approx(1.0, abs=0.06)
    assert np.all(np.diff(vals[:best + 1]) < 0) and np.all(np.diff(vals[best:]) > 0)


def test_losses_match_summation_oracle():
    rng = make_rng(4)
    B, n = 3, 5
    logits = rng.normal(size=(B, n, 11))
    logits[..., 0] = -1e9
    types = rng.integers(1, 11, size=(B, n))
    mu, ls = rng.normal(size=(B, n, 2)), rng.normal(scale=0.3, size=(B, n, 2))
    rho = np.tanh(rng.normal(size=(B, n)))
    xy = rng.normal(size=(B, n, 2))
    mask = rng.random((B, n)) < 0.7
    mask[0, 0] = True
    lt = type_loss(ag.Tensor(logits), types, mask).data
    la = area_loss(ag.Tensor(mu), ag.Tensor(ls), ag.Tensor(rho), xy, mask).data
    ce, nll = [], []
    for b in range(B):
        for i in range(n):
            if not mask[b, i]:
                continue
            row = logits[b, i]
            ce.append(-(row[types[b, i]] - math.log(sum(math.exp(v) for v in row))))
            g = GaussianParams(mu[b, i, 0], mu[b, i, 1], math.exp(ls[b, i, 0]),
                               math.exp(ls[b, i, 1]), rho[b, i])
            nll.append(bvn_nll(xy[b, i, 0], xy[b, i, 1], g))
    assert lt == pytest.approx(np.mean(ce), abs=1e-12)
    assert la == pytest.approx(np.mean(nll), abs=1e-12)
    assert float(total_loss(ag.Tensor(lt), ag.Tensor(la)).data) == pytest.approx(lt + la, abs=1e-15)


def test_masked_targets_get_no_gradient(heads):
    rng = make_rng(5)
    z = ag.Tensor(rng.normal(size=(2, 3, 6)), requires_grad=True)
    out = heads_forward(z, ag.Tensor(rng.normal(size=(2, 3, 6))), heads)
    mask = np.array([[True, True, False], [True, False, False]])
    types = np.array([[2, 4, 0], [5, 0, 0]])
    coords = np.where(mask[..., None], rng.normal(size=(2, 3, 2)), np.nan)
    loss = type_loss(out.logits, types, mask) + area_loss(out.mu, out.log_sigma, out.rho, coords, mask)
    loss.backward()
    assert np.all(np.isfinite(z.grad))
    np.testing.assert_array_equal(z.grad[~mask], 0.0)
    assert np.abs(z.grad[mask]).sum() > 0


def test_empty_mask_rejected():
    with pytest.raises(ValueError):
        type_loss(ag.Tensor(np.zeros((1, 1, 11))), np.array([[1]]), np.zeros((1, 1), bool))
