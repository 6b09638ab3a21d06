import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agegender import tensor as T
from agegender.objectives import ccc, ccc_loss, ce_loss, combined_loss


def _loss(p, t):
    return float(ccc_loss(T.Tensor(p), t).data)


@pytest.mark.parametrize("pred, target, expect", [
    ([0.1, 0.5, 0.9], [0.1, 0.5, 0.9], 0.0),
    ([0.4, 0.4, 0.4], [0.1, 0.5, 0.9], 1.0),
    ([0.0, 1.0], [1.0, 0.0], 2.0),
])
def test_ccc_loss_worked_cases(pred, target, expect):
    assert abs(_loss(pred, target) - expect) <= 1e-12


def test_ccc_loss_zero_variance_both_sides_is_finite():
    assert _loss([0.3, 0.3], [0.3, 0.3]) == 1.0


def test_ccc_loss_length_checks():
    with pytest.raises(ValueError, match="equal lengths"):
        ccc_loss(T.Tensor([0.5]), [0.5])
    with pytest.raises(ValueError, match="equal lengths"):
        ccc_loss(T.Tensor([0.5, 0.1]), [0.5, 0.1, 0.2])


def test_ccc_matches_independent_formula():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p, t = rng.normal(size=9), rng.normal(size=9) + 0.3
        # sample statistics with ddof=0, written out longhand
        n = len(p)
        mp, mt = sum(p) / n, sum(t) / n
        cov = sum((a - mp) * (b - mt) for a, b in zip(p, t)) / n
        vp = sum((a - mp) ** 2 for a in p) / n
        vt = sum((b - mt) ** 2 for b in t) / n
        assert ccc(p, t) == pytest.approx(2 * cov / (vp + vt + (mp - mt) ** 2), abs=1e-12)
        assert _loss(p, t) == pytest.approx(1 - ccc(p, t), abs=1e-12)


def test_ccc_never_exceeds_pearson_in_magnitude():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(3, 20))
        p = rng.normal(size=n) * rng.uniform(0.1, 3) + rng.normal()
        t = 0.5 * p + rng.normal(size=n)
        r = np.corrcoef(p, t)[0, 1]
        assert abs(ccc(p, t)) <= abs(r) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=10), st.floats(-3, 3))
def test_ccc_is_symmetric(values, shift):
    p = np.asarray(values)
    t = np.roll(p, 1) + shift
    assert ccc(p, t) == pytest.approx(ccc(t, p), abs=1e-12)


def test_ccc_loss_gradient_check():
    for trial in range(100):
        rng = np.random.default_rng(trial)
        target = rng.uniform(0, 1, size=5)
        x = T.Tensor(rng.uniform(0, 1, size=5))
        assert T.grad_check(lambda p: ccc_loss(p, target), x) < 1e-5


def test_ce_uniform_logits():
    assert float(ce_loss(T.Tensor([0.0, 0.0, 0.0]), [2]).data) == pytest.approx(math.log(3), abs=1e-12)


def test_ce_saturated_correct():
    assert float(ce_loss(T.Tensor([1000.0, -1000.0, -1000.0]), [0]).data) == pytest.approx(0.0, abs=1e-12)


def test_ce_closed_form():
    assert float(ce_loss(T.Tensor([0.0, math.log(2), 0.0]), [1]).data) == pytest.approx(math.log(2), abs=1e-12)


def test_ce_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(1, 6))
        z = rng.normal(size=(n, 3)) * 3
        labels = rng.integers(0, 3, size=n)
        x = T.Tensor(z, requires_grad=True)
        ce_loss(x, labels).backward()
        e = np.exp(z - z.max(axis=1, keepdims=True))
        expect = (e / e.sum(axis=1, keepdims=True) - np.eye(3)[labels]) / n
        np.testing.assert_allclose(x.grad, expect, atol=1e-10, rtol=0)


def test_ce_gradient_check():
    for trial in range(100):
        rng = np.random.default_rng(trial)
        labels = rng.integers(0, 3, size=4)
        x = T.Tensor(rng.normal(size=(4, 3)))
        assert T.grad_check(lambda z: ce_loss(z, labels), x) < 1e-5


def test_ce_rejects_bad_labels():
    with pytest.raises(ValueError, match="labels must lie"):
        ce_loss(T.Tensor([[0.0, 0.0, 0.0]]), [3])
    with pytest.raises(ValueError, match="expected 2 labels"):
        ce_loss(T.Tensor(np.zeros((2, 3))), [0])


@pytest.mark.parametrize("a, b, expect", [(0.0, math.log(3), math.log(3) / 2), (2.0, 0.0, 1.0), (0.7, 0.7, 0.7)])
def test_combined_loss(a, b, expect):
    assert float(combined_loss(a, b).data) == pytest.approx(expect, abs=1e-15)
