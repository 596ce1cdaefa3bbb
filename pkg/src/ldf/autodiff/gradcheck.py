"""Central finite-difference gradient checking."""

import numpy as np

from .tensor import Tensor, backward


def numerical_grad(fn, arrays, index, h=1e-5):
    """d fn / d arrays[index] by central differences; ``fn`` maps arrays to a float."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = target[i]
        target[i] = orig + h
        fp = fn(*base)
        target[i] = orig - h
        fm = fn(*base)
        target[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(analytic, numeric, floor=1e-6):
    """||a - n|| / max(||a|| + ||n||, floor)."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), floor))


def check_gradients(fn, arrays, h=1e-5, wrt=None):
    """Max relative error between tape gradients and central differences.

    ``fn`` takes Tensors and returns a scalar Tensor; ``wrt`` restricts which
    positional inputs are checked (default: all).
    """
    wrt = range(len(arrays)) if wrt is None else wrt
    wrt = list(wrt)
    tensors = [Tensor(a, requires_grad=i in wrt) for i, a in enumerate(arrays)]
    backward(fn(*tensors))

    def scalar(*xs):
        return float(fn(*[Tensor(x) for x in xs]).data)

    worst = 0.0
    for i in wrt:
        num = numerical_grad(scalar, arrays, i, h)
        worst = max(worst, rel_error(tensors[i].grad, num))
    return worst
