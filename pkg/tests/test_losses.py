import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from reclab.errors import BatchSizeMismatch, InvalidTarget, NonSimplexInput
from reclab.losses import (CROSS_ENTROPY, CombinedParams, FocalParams, combine, combined_loss,
                           combined_loss_from_logits, focal_loss, focal_loss_from_logits)


def simplex(rng, n, k):
    x = rng.random((n, k)) + 1e-3
    return x / x.sum(axis=1, keepdims=True)


def test_reduces_to_cross_entropy(rng):
    p = simplex(rng, 1000, 7)
    t = rng.integers(0, 7, 1000)
    ce = -np.mean(np.log(p[np.arange(1000), t]))
    assert abs(float(focal_loss(p, t, CROSS_ENTROPY)) - ce) < 1e-9


def test_point_value():
    val = float(focal_loss([[0.5, 0.5]], [0], FocalParams(1.0, 3.0)))
    assert abs(val - 0.125 * math.log(2)) < 1e-12
    assert abs(val - 0.086643) < 1e-6


def test_perfect_prediction_zero():
    assert float(focal_loss([[1.0, 0.0]], [0])) == 0.0


def test_errors():
    with pytest.raises(NonSimplexInput):
        focal_loss([[0.6, 0.6]], [0])
    with pytest.raises(InvalidTarget):
        focal_loss([[0.5, 0.5]], [2])
    with pytest.raises(BatchSizeMismatch):
        combined_loss([[1.0, 0.0]], [[1.0, 0.0]] * 2, [0], [0, 0])


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.0, 5.0))
def test_decreasing_in_confidence(p, gamma):
    def f(q):
        return float(focal_loss([[q, 1 - q]], [0], FocalParams(1.0, gamma)))
    h = 1e-6
    fd = (f(p + h) - f(p - h)) / (2 * h)
    exact = -(1 - p) ** gamma / p + gamma * (1 - p) ** (gamma - 1) * math.log(p)
    assert fd < 0
    assert fd == pytest.approx(exact, rel=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.001, 0.999), st.floats(0.0, 4.0), st.floats(0.0, 4.0))
def test_nonincreasing_in_gamma(p, g1, g2):
    lo, hi = sorted((g1, g2))
    assert float(focal_loss([[p, 1 - p]], [0], FocalParams(1, hi))) <= float(focal_loss([[p, 1 - p]], [0], FocalParams(1, lo)))


def test_nonnegative(rng):
    p = simplex(rng, 200, 5)
    assert float(focal_loss(p, rng.integers(0, 5, 200))) >= 0


def test_combination_examples(rng):
    assert combine(0.4, 0.2, 0.5) == pytest.approx(0.3)
    pc, pk = simplex(rng, 10, 6), simplex(rng, 10, 3)
    tc, tk = rng.integers(0, 6, 10), rng.integers(0, 3, 10)
    fc, fk = float(focal_loss(pc, tc)), float(focal_loss(pk, tk))
    assert float(combined_loss(pc, pk, tc, tk, CombinedParams(beta=1.0))) == pytest.approx(fc, abs=1e-15)
    for beta in (0.0, 0.3, 0.5):
        assert float(combined_loss(pc, pk, tc, tk, CombinedParams(beta=beta))) == pytest.approx(
            beta * fc + (1 - beta) * fk, abs=1e-14)
    one = np.eye(6)[tc]
    assert float(combined_loss(one, np.eye(3)[tk], tc, tk)) == 0.0


def test_logits_match_probabilities(rng):
    logits = torch.from_numpy(rng.normal(size=(20, 6)))
    t = torch.from_numpy(rng.integers(0, 6, 20))
    a = focal_loss_from_logits(logits, t)
    b = focal_loss(torch.softmax(logits, 1), t)
    assert float(a) == pytest.approx(float(b), abs=1e-12)
    # -inf columns (reserved ids) are fine as long as the target is elsewhere
    masked = logits.clone()
    masked[:, :2] = float("-inf")
    t2 = t.clamp_min(2)
    assert torch.isfinite(combined_loss_from_logits(masked, None, t2, None))
