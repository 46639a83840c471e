import numpy as np
import torch

torch.set_num_threads(1)


def central_fd_grad(loss_fn, param: torch.Tensor, indices, eps: float = 1e-5):
    """Central finite differences of loss_fn() w.r.t. param at flat indices."""
    grads = []
    flat = param.data.view(-1)
    for idx in indices:
        orig = float(flat[idx])
        flat[idx] = orig + eps
        hi = float(loss_fn().detach())
        flat[idx] = orig - eps
        lo = float(loss_fn().detach())
        flat[idx] = orig
        grads.append((hi - lo) / (2 * eps))
    return np.array(grads)


def max_rel_grad_error(loss_fn, params, n_probe: int = 3, seed: int = 0,
                       eps: float = 1e-5) -> float:
    """Compare autograd gradients of loss_fn against central differences.

    Probes n_probe random entries of every tensor in params; returns the
    worst relative error max(|g_a - g_f|) / max(|g_f|, 1e-8).
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    for p in params:
        assert p.grad is not None, "parameter received no gradient"
        n = p.numel()
        idx = rng.choice(n, size=min(n_probe, n), replace=False)
        analytic = p.grad.view(-1)[idx].double().numpy()
        numeric = central_fd_grad(loss_fn, p, idx, eps=eps)
        denom = np.maximum(np.abs(numeric), 1e-8)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst
