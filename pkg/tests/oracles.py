"""Independent reference computations used across the test modules."""

import numpy as np
import torch


def central_difference(f, x: torch.Tensor, h: float = 1e-5) -> torch.Tensor:
    """Numerical gradient of scalar ``f`` at ``x`` by central differences."""
    x = x.detach().clone()
    flat = x.view(-1)
    out = torch.zeros_like(flat)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            fp = float(f(x))
            flat[i] = orig - h
            fm = float(f(x))
            flat[i] = orig
            out[i] = (fp - fm) / (2 * h)
    return out.view_as(x)


def autodiff(f, x: torch.Tensor) -> torch.Tensor:
    x = x.detach().clone().requires_grad_(True)
    (g,) = torch.autograd.grad(f(x), x)
    return g


def rel_err(a, b) -> float:
    a = torch.as_tensor(a, dtype=torch.float64)
    b = torch.as_tensor(b, dtype=torch.float64)
    denom = max(float(a.abs().max()), float(b.abs().max()), 1e-12)
    return float((a - b).abs().max()) / denom


def naive_conv2d(x, w, b, stride, padding):
    """Direct-loop cross-correlation in numpy."""
    x = np.pad(np.asarray(x), ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    w = np.asarray(w)
    B, C, H, W = x.shape
    F_, _, k, _ = w.shape
    Ho, Wo = (H - k) // stride + 1, (W - k) // stride + 1
    out = np.zeros((B, F_, Ho, Wo))
    for bi in range(B):
        for f in range(F_):
            for i in range(Ho):
                for j in range(Wo):
                    patch = x[bi, :, i * stride : i * stride + k, j * stride : j * stride + k]
                    out[bi, f, i, j] = (patch * w[f]).sum() + (b[f] if b is not None else 0.0)
    return out
