"""Central finite differences, used as the gradient oracle in tests."""

import numpy as np

from hgmda.autodiff import Tape, Tensor


def numeric_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """d f(x) / dx for scalar-valued ``f`` taking a float64 array."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = f(x)
        flat[i] = old - eps
        lo = f(x)
        flat[i] = old
        gflat[i] = (hi - lo) / (2 * eps)
    return g


def tape_grads(build, arrays: list[np.ndarray]) -> list[np.ndarray]:
    """Gradients of ``build(*tensors)`` with respect to each input array."""
    ts = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    with Tape() as tape:
        loss = build(*ts)
    tape.backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(a) for t, a in zip(ts, arrays)]


def check(build, arrays, rtol: float = 1e-4, atol: float = 1e-7) -> float:
    """Compare taped and finite-difference gradients; returns the worst relative error."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    analytic = tape_grads(build, arrays)
    worst = 0.0
    for k, a in enumerate(arrays):
        def f(x, k=k):
            args = [Tensor(x if j == k else arrays[j], dtype=np.float64) for j in range(len(arrays))]
            return build(*args).item()
        num = numeric_grad(f, a)
        err = np.abs(analytic[k] - num) / np.maximum(np.abs(num), np.abs(analytic[k])).clip(min=1.0)
        worst = max(worst, float(err.max()) if err.size else 0.0)
        np.testing.assert_allclose(analytic[k], num, rtol=rtol, atol=atol, err_msg=f"input {k}")
    return worst
