import math

import numpy as np
import pytest

from subanneal.nn.losses import cross_entropy_softmax


def test_uniform_logits_gives_log_k():
    loss, _ = cross_entropy_softmax(np.zeros((4, 10)), np.array([0, 3, 5, 9]))
    assert loss == pytest.approx(math.log(10), abs=1e-12)


def test_saturated_true_logit_gives_near_zero_loss():
    logits = np.zeros((1, 5))
    logits[0, 2] = 50.0
    loss, _ = cross_entropy_softmax(logits, np.array([2]))
    assert loss < 1e-12


def test_scalar_oracle_three_logits():
    # direct log-sum-exp evaluation, independent of the implementation
    logits = np.array([[1.0, 2.0, 3.0]])
    expected = math.log(math.exp(1) + math.exp(2) + math.exp(3)) - 3.0
    loss, _ = cross_entropy_softmax(logits, np.array([2]))
    assert loss == pytest.approx(expected, abs=1e-12)
    assert loss == pytest.approx(0.40760596444438079, abs=1e-12)


def test_grad_rows_sum_to_zero():
    rng = np.random.default_rng(0)
    logits = rng.normal(scale=5.0, size=(64, 10))
    labels = rng.integers(0, 10, size=64)
    _, grad = cross_entropy_softmax(logits, labels)
    assert np.abs(grad.sum(axis=1)).max() < 1e-12


def test_label_out_of_range_raises():
    with pytest.raises(ValueError):
        cross_entropy_softmax(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(ValueError):
        cross_entropy_softmax(np.zeros((2, 3)), np.array([-1, 0]))


def test_loss_nonnegative_and_mean_reduction():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(32, 7))
    labels = rng.integers(0, 7, size=32)
    loss, _ = cross_entropy_softmax(logits, labels)
    assert loss >= 0.0
    per_row = [cross_entropy_softmax(logits[i:i + 1], labels[i:i + 1])[0]
               for i in range(32)]
    assert loss == pytest.approx(np.mean(per_row), rel=1e-12)
