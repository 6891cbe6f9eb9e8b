import numpy as np
import pytest
import torch

torch.set_num_threads(1)


def central_grad(f, tensors, h=1e-5):
    """Central finite differences of scalar f() w.r.t. each tensor, perturbed in place."""
    grads = []
    for t in tensors:
        g = torch.zeros_like(t)
        flat, gflat = t.data.view(-1), g.view(-1)
        for i in range(flat.numel()):
            old = flat[i].item()
            flat[i] = old + h
            fp = float(f())
            flat[i] = old - h
            fm = float(f())
            flat[i] = old
            gflat[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def grad_rel_error(f, tensors, h=1e-5):
    """Relative L2 error between autograd and central differences, over all tensors."""
    for t in tensors:
        t.grad = None
    out = f()
    analytic = torch.autograd.grad(out, tensors, allow_unused=True)
    analytic = [torch.zeros_like(t) if a is None else a for a, t in zip(analytic, tensors)]
    with torch.no_grad():
        numeric = central_grad(f, tensors, h)
    a = torch.cat([x.reshape(-1) for x in analytic])
    n = torch.cat([x.reshape(-1) for x in numeric])
    scale = max(a.norm().item(), n.norm().item(), 1e-12)
    return (a - n).norm().item() / scale


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
