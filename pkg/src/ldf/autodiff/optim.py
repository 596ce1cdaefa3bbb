"""Adam optimizer."""

import numpy as np

from ..errors import ConfigError, ContractError


class Adam:
    """Adam with bias correction (Kingma & Ba defaults for the moment constants).

    :meth:`step` consumes the gradients stored on the parameters and zeroes
    them afterwards.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise ContractError(f"parameter {p.name or p!r} has no gradient buffer")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            g[...] = 0.0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_dict(self):
        return {"step": self.step_count, "lr": self.lr, "beta1": self.beta1,
                "beta2": self.beta2, "eps": self.eps}
