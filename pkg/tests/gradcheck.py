"""Central-difference gradient verification shared by the test modules."""

import numpy as np
import torch

FD_STEP = 1e-4
FD_TOL = 1e-3
# guards the relative error for coordinates whose true gradient is ~0
FD_DENOM_FLOOR = 1e-6


def relative_fd_errors(loss_fn, parameters, n_samples=50, step=FD_STEP, seed=0):
    """Relative error between autograd and central finite differences on
    randomly sampled parameter coordinates.

    ``loss_fn`` must rebuild the scalar loss from the current parameter
    values on every call. Parameters are perturbed in place and restored.
    """
    params = [p for p in parameters if p.requires_grad]
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grads = [
        g if g is not None else torch.zeros_like(p) for g, p in zip(grads, params)
    ]
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_samples, total), replace=False)
    bounds = np.cumsum([0] + sizes)
    errs = []
    with torch.no_grad():
        for flat_idx in picks:
            i = int(np.searchsorted(bounds, flat_idx, side="right") - 1)
            j = int(flat_idx - bounds[i])
            p = params[i]
            orig = p.view(-1)[j].item()
            p.view(-1)[j] = orig + step
            loss_plus = float(loss_fn())
            p.view(-1)[j] = orig - step
            loss_minus = float(loss_fn())
            p.view(-1)[j] = orig
            fd = (loss_plus - loss_minus) / (2.0 * step)
            an = float(grads[i].view(-1)[j])
            denom = max(abs(fd), abs(an), FD_DENOM_FLOOR)
            errs.append(abs(fd - an) / denom)
    return errs
