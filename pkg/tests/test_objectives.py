import math

import numpy as np
import pytest
import torch
from scipy import integrate

from bgc_marl.errors import ContractViolation
from bgc_marl.objectives import distill_loss, kl_diag_gaussian, pairwise_kl, split_loss, td_loss, total_loss

from conftest import grad_rel_error


def t(x):
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def kl_numeric(mu_p, s_p, mu_q, s_q):
    """Quadrature of p ln(p/q) for 1-d Gaussians with standard deviations s_p, s_q."""
    def integrand(x):
        lp = -0.5 * ((x - mu_p) / s_p) ** 2 - math.log(s_p * math.sqrt(2 * math.pi))
        lq = -0.5 * ((x - mu_q) / s_q) ** 2 - math.log(s_q * math.sqrt(2 * math.pi))
        return math.exp(lp) * (lp - lq)
    lo, hi = mu_p - 12 * s_p, mu_p + 12 * s_p
    return integrate.quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)[0]


def kl_scalar(mu_p, lv_p, mu_q, lv_q):
    """Closed form written independently, one coordinate at a time."""
    total = 0.0
    for a, b, c, d in zip(mu_p, lv_p, mu_q, lv_q):
        vp, vq = math.exp(b), math.exp(d)
        total += math.log(math.sqrt(vq) / math.sqrt(vp)) + (vp + (a - c) ** 2) / (2 * vq) - 0.5
    return total


def test_kl_examples():
    assert kl_diag_gaussian(t([0.3]), t([0.1]), t([0.3]), t([0.1])).item() == 0.0
    assert kl_diag_gaussian(t([1.0]), t([0.0]), t([0.0]), t([0.0])).item() == pytest.approx(0.5)
    val = kl_diag_gaussian(t([0.0]), t([math.log(4.0)]), t([0.0]), t([0.0])).item()
    assert val == pytest.approx(math.log(0.5) + 2 - 0.5, abs=1e-12)
    assert val == pytest.approx(0.80685, abs=1e-5)
    assert val == pytest.approx(kl_numeric(0.0, 2.0, 0.0, 1.0), abs=1e-8)


def test_kl_matches_quadrature(rng):
    for _ in range(100):
        mp, mq = rng.normal(size=2)
        lp, lq = rng.uniform(-2, 1.5, size=2)
        closed = kl_diag_gaussian(t([mp]), t([lp]), t([mq]), t([lq])).item()
        assert closed == pytest.approx(kl_numeric(mp, math.exp(lp / 2), mq, math.exp(lq / 2)), abs=1e-4)


def test_kl_nonnegative_and_asymmetric(rng):
    for _ in range(50):
        a, b = rng.normal(size=(2, 2, 6))
        assert kl_diag_gaussian(t(a[0]), t(a[1]), t(b[0]), t(b[1])).item() >= 0
    p, q = (t([0.0]), t([math.log(4.0)])), (t([0.0]), t([0.0]))
    assert kl_diag_gaussian(*p, *q).item() != pytest.approx(kl_diag_gaussian(*q, *p).item())


def test_pairwise_kl_entries(rng):
    mean, lv = t(rng.normal(size=(4, 3))), t(rng.normal(size=(4, 3)))
    M = pairwise_kl(mean, lv)
    for i in range(4):
        for j in range(4):
            assert M[i, j].item() == pytest.approx(kl_scalar(mean[i], lv[i], mean[j], lv[j]), abs=1e-12)


def split_oracle(mean, lv, mask, delta):
    n = len(mean)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j or mask[i][j] or mask[j][i]:
                continue
            total += -min(kl_scalar(mean[i], lv[i], mean[j], lv[j]) - delta, 0.0)
    return total


def test_split_examples():
    mean, lv = t(np.zeros((2, 3))), t(np.zeros((2, 3)))
    assert split_loss(mean, lv, torch.ones(2, 2, dtype=torch.bool)).item() == 0.0
    assert split_loss(mean, lv, torch.eye(2, dtype=torch.bool), 0.005).item() == pytest.approx(0.01)
    far = t([[0.0, 0.0], [5.0, 5.0]])
    assert split_loss(far, t(np.zeros((2, 2))), torch.eye(2, dtype=torch.bool)).item() == 0.0
    with pytest.raises(ContractViolation):
        split_loss(mean, lv, torch.eye(2, dtype=torch.bool), 0.0)


def test_split_matches_bruteforce(rng):
    for _ in range(500):
        scale = rng.choice([0.01, 0.05, 1.0])
        mean = rng.normal(size=(6, 4)) * scale
        lv = rng.normal(size=(6, 4)) * scale
        mask = rng.random((6, 6)) < 0.3
        delta = rng.choice([0.005, 0.05, 0.5])
        got = split_loss(t(mean), t(lv), torch.as_tensor(mask), delta).item()
        want = split_oracle(mean.tolist(), lv.tolist(), mask.tolist(), delta)
        assert got >= 0
        assert abs(got - want) <= 1e-10
        assert (got == 0) == (want == 0)


def test_split_batched(rng):
    mean, lv = rng.normal(size=(3, 5, 6, 2)) * 0.05, rng.normal(size=(3, 5, 6, 2)) * 0.05
    mask = rng.random((3, 5, 6, 6)) < 0.3
    out = split_loss(t(mean), t(lv), torch.as_tensor(mask), 0.05)
    assert out.shape == (3, 5)
    for idx in np.ndindex(3, 5):
        assert out[idx].item() == pytest.approx(split_loss(t(mean[idx]), t(lv[idx]), torch.as_tensor(mask[idx]), 0.05).item())


def test_split_gradcheck(rng):
    for point in range(10):
        mean = t(rng.normal(size=(5, 3)) * 0.05).requires_grad_(True)
        lv = t(rng.normal(size=(5, 3)) * 0.05).requires_grad_(True)
        mask = torch.as_tensor(rng.random((5, 5)) < 0.3)
        assert grad_rel_error(lambda: split_loss(mean, lv, mask, 0.05), [mean, lv]) <= 1e-4


def test_split_gradient_zero_when_inactive():
    mean = t([[0.0, 0.0], [0.01, 0.0], [9.0, 9.0]]).requires_grad_(True)
    lv = t(np.zeros((3, 2))).requires_grad_(True)
    mask = torch.eye(3, dtype=torch.bool)
    mask[0, 1] = True  # 0-1 adjacent; pairs with agent 2 are far apart (hinge inactive)
    split_loss(mean, lv, mask, 0.005).backward()
    assert mean.grad.abs().sum().item() == 0.0 and lv.grad.abs().sum().item() == 0.0


def test_td_examples():
    q = t([[1.0, 2.0]])
    nxt = t([[5.0, 7.0]])
    r = t([[0.5, 1.0]])
    term = torch.tensor([[False, True]])
    filled = torch.tensor([[True, True]])
    # gamma = 0: target is the reward
    assert td_loss(q, nxt, r, term, filled, 0.0).item() == pytest.approx(((1 - 0.5) ** 2 + (2 - 1) ** 2) / 2)
    # terminal step ignores the bootstrap value
    assert td_loss(q, nxt, r, term, filled, 0.9).item() == pytest.approx(((1 - 0.5 - 0.9 * 5) ** 2 + 1.0) / 2)
    # padded steps are excluded
    assert td_loss(q, nxt, r, term, torch.tensor([[True, False]]), 0.0).item() == pytest.approx(0.25)


def test_distill_examples():
    s = t(np.ones((3, 32)))
    assert distill_loss(s, s.clone(), torch.ones(3, dtype=torch.bool)).item() == 0.0
    assert distill_loss(s, t(np.zeros((3, 32))), torch.ones(3, dtype=torch.bool)).item() == 1.0
    student = t(np.ones((2, 4))).requires_grad_(True)
    teacher = t(np.zeros((2, 4))).requires_grad_(True)
    distill_loss(student, teacher, torch.ones(2, dtype=torch.bool)).backward()
    assert teacher.grad is None or teacher.grad.norm().item() == 0.0
    assert student.grad.norm().item() > 0
    # invalid rows do not count
    assert distill_loss(s, t(np.zeros((3, 32))), torch.tensor([True, False, False])).item() == 1.0


def test_total_loss(rng):
    total, bd = total_loss(1.0, 2.0, lambda_split=0.0)
    assert bd.total == 1.0
    total, bd = total_loss(1.0, 2.0, lambda_split=0.1)
    assert bd.total == pytest.approx(1.2)
    for _ in range(20):
        td, sp, di, ls, ld = rng.random(5)
        _, bd = total_loss(td, sp, di, ls, ld)
        assert bd.total == pytest.approx(bd.td + bd.lambda_split * bd.split + bd.lambda_distill * bd.distill)
    with pytest.raises(ContractViolation):
        total_loss(1.0, lambda_split=-1.0)
