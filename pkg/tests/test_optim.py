import math

import pytest
import torch

from reclab.errors import ShapeMismatch
from reclab.optim import RAdam, RAdamState, optimizer_step, rectification


def hand_table(lr=0.1, steps=10, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar trajectory under a constant unit gradient, written out longhand."""
    rho_inf = 2 / (1 - b2) - 1
    x, m, v, out = 1.0, 0.0, 0.0, []
    for t in range(1, steps + 1):
        m = b1 * m + (1 - b1)
        v = b2 * v + (1 - b2)
        m_hat = m / (1 - b1 ** t)
        rho = rho_inf - 2 * t * b2 ** t / (1 - b2 ** t)
        if rho > 5:
            r = math.sqrt((rho - 4) * (rho - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho))
            x -= lr * r * m_hat / (math.sqrt(v / (1 - b2 ** t)) + eps)
        else:
            x -= lr * m_hat
        out.append(x)
    return out


def test_rectification_threshold():
    assert all(rectification(t, 0.999) is None for t in range(1, 6))
    assert rectification(6, 0.999) == pytest.approx(0.02582, abs=1e-5)


def test_scalar_trajectory():
    p = torch.tensor([1.0], dtype=torch.float64)
    state = RAdamState()
    got = []
    for _ in range(10):
        optimizer_step(p, torch.ones(1, dtype=torch.float64), state, lr=0.1, weight_decay=0.0)
        got.append(float(p))
    assert got == pytest.approx(hand_table(), abs=1e-12)


def test_matches_torch_radam():
    torch.manual_seed(0)
    a = torch.randn(5, 3, dtype=torch.float64, requires_grad=True)
    b = a.detach().clone().requires_grad_(True)
    ours = RAdam([a], lr=1e-2, weight_decay=0.01)
    ref = torch.optim.RAdam([b], lr=1e-2, weight_decay=0.01, decoupled_weight_decay=True)
    for i in range(30):
        g = torch.randn(5, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(i))
        a.grad, b.grad = g.clone(), g.clone()
        ours.step()
        ref.step()
    # torch adds eps before the bias correction of the second moment, hence not bit-equal
    torch.testing.assert_close(a, b, atol=1e-8, rtol=0)


def test_zero_gradient_fixed_point():
    p = torch.tensor([0.7, -2.0], dtype=torch.float64)
    state = RAdamState()
    for _ in range(20):
        optimizer_step(p, torch.zeros(2, dtype=torch.float64), state, weight_decay=0.0)
    assert p.tolist() == [0.7, -2.0]


def test_decoupled_decay_closed_form():
    p = torch.tensor([3.0], dtype=torch.float64)
    state = RAdamState()
    lr = 1e-3
    for t in range(1, 16):
        optimizer_step(p, torch.zeros(1, dtype=torch.float64), state, lr=lr, weight_decay=0.01)
        assert float(p) == pytest.approx(3.0 * (1 - lr * 0.01) ** t, rel=1e-14)


def test_shape_guard_and_missing_grad():
    with pytest.raises(ShapeMismatch):
        optimizer_step(torch.zeros(2), torch.zeros(3), RAdamState())
    p = torch.ones(2, requires_grad=True)
    opt = RAdam([p])
    opt.step()  # no gradient yet: skipped
    assert p.tolist() == [1.0, 1.0]
