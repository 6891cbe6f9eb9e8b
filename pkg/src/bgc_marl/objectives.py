"""Losses: TD error of the mixed Q, the KL split hinge, and student distillation."""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ContractViolation


def kl_diag_gaussian(mean_p, logvar_p, mean_q, logvar_q):
    """KL(N(mean_p, exp(logvar_p)) || N(mean_q, exp(logvar_q))), summed over the last axis."""
    var_p = torch.exp(logvar_p)
    var_q = torch.exp(logvar_q)
    kl = 0.5 * (logvar_q - logvar_p) + (var_p + (mean_p - mean_q) ** 2) / (2.0 * var_q) - 0.5
    return kl.sum(-1)


def pairwise_kl(mean, logvar):
    """(..., n, d) beliefs -> (..., n, n) with entry [i, j] = KL(b_i || b_j)."""
    return kl_diag_gaussian(mean.unsqueeze(-2), logvar.unsqueeze(-2), mean.unsqueeze(-3), logvar.unsqueeze(-3))


def split_loss(mean, logvar, mask, delta: float = 0.005):
    """Sum over ordered non-adjacent pairs i != j of max(delta - KL(b_i || b_j), 0).

    A pair counts as adjacent when the mask is true in either direction.
    Batched over leading axes; returns one value per instance.
    """
    if delta <= 0:
        raise ContractViolation(f"split-loss delta must be > 0, got {delta}")
    mask = torch.as_tensor(mask, dtype=torch.bool, device=mean.device)
    adjacent = mask | mask.transpose(-1, -2)
    n = mean.shape[-2]
    eye = torch.eye(n, dtype=torch.bool, device=mean.device)
    active = ~(adjacent | eye)
    hinge = torch.clamp(delta - pairwise_kl(mean, logvar), min=0.0)
    return (hinge * active).sum((-1, -2))


def td_loss(q_taken_tot, target_next_tot, rewards, terminated, filled, gamma: float):
    """Mean squared TD error over valid steps; targets carry no gradient.

    All inputs are (B, T). ``target_next_tot`` is the target mixer's value of
    the target agents' greedy joint action at t+1.
    """
    filled = filled.to(q_taken_tot.dtype)
    targets = rewards + gamma * (1.0 - terminated.to(q_taken_tot.dtype)) * target_next_tot
    err = (q_taken_tot - targets.detach()) * filled
    return (err ** 2).sum() / filled.sum().clamp(min=1.0)


def distill_loss(student, teacher, valid):
    """MSE between student estimates and (detached) teacher features.

    student, teacher (..., d); valid (...) bool. Squared error is averaged over
    the feature axis and over valid positions.
    """
    if student.shape != teacher.shape:
        raise ContractViolation(f"student {tuple(student.shape)} vs teacher {tuple(teacher.shape)}")
    valid = torch.as_tensor(valid, device=student.device).to(student.dtype)
    per = ((student - teacher.detach()) ** 2).mean(-1)
    return (per * valid).sum() / valid.sum().clamp(min=1.0)


@dataclass
class LossBreakdown:
    td: float
    split: float
    distill: float
    total: float
    lambda_split: float
    lambda_distill: float


def total_loss(td=None, split=None, distill=None, lambda_split: float = 0.1, lambda_distill: float = 1.0):
    """Weighted sum of the available parts. Returns (total tensor, LossBreakdown)."""
    if lambda_split < 0 or lambda_distill < 0:
        raise ContractViolation("loss weights must be >= 0")
    zero = torch.zeros(())
    td_t = zero if td is None else torch.as_tensor(td)
    split_t = zero if split is None else torch.as_tensor(split)
    distill_t = zero if distill is None else torch.as_tensor(distill)
    total = td_t + lambda_split * split_t + lambda_distill * distill_t
    breakdown = LossBreakdown(
        float(td_t.detach()), float(split_t.detach()), float(distill_t.detach()), float(total.detach()),
        float(lambda_split), float(lambda_distill),
    )
    return total, breakdown
