"""Central finite-difference gradient checking used across the test suite."""

import numpy as np

from nrcnet import autodiff as ad

FD_STEP = 1e-5


def weighted_sum(tensor: ad.Tensor, weights: np.ndarray) -> ad.Tensor:
    """Reduce a tensor to a scalar with fixed random weights so every output
    element influences the objective."""
    value = np.asarray((tensor.values * weights).sum())
    out = ad.Tensor(value)
    out.requires_grad = tensor.requires_grad
    out._parents = (tensor,)
    out._backward = lambda grad: tensor._accumulate(grad * weights)
    return out


def finite_difference(build, tensor: ad.Tensor, h: float = FD_STEP) -> np.ndarray:
    fd = np.zeros_like(tensor.values)
    flat = tensor.values.reshape(-1)
    out = fd.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = build().values.item()
        flat[i] = orig - h
        lo = build().values.item()
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * h)
    return fd


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(build, tensors, h: float = FD_STEP) -> float:
    """Max relative error between analytic gradients of build() and central
    finite differences, over the given input tensors."""
    loss = build()
    loss.backward()
    grads = [t.grad.copy() for t in tensors]
    for t in tensors:
        t.zero_grad()
    worst = 0.0
    for t, analytic in zip(tensors, grads):
        numeric = finite_difference(build, t, h=h)
        worst = max(worst, max_relative_error(analytic, numeric))
    return worst
