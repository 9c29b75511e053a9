"""Adam with additive L2 weight decay, moments keyed by parameter name."""

from __future__ import annotations

import numpy as np

from ..model.params import ParamStore


class Adam:
    def __init__(
        self,
        lr: float = 2e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def _moment_for(self, table: dict, name: str, shape) -> np.ndarray:
        cur = table.get(name)
        if cur is None:
            cur = table[name] = np.zeros(shape)
        elif cur.shape != shape:
            # Classifier growth appends rows/columns; keep old moments in
            # the leading corner and zero the new slots.
            grown = np.zeros(shape)
            region = tuple(slice(0, min(a, b)) for a, b in zip(cur.shape, shape))
            grown[region] = cur[region]
            cur = table[name] = grown
        return cur

    def step(self, store: ParamStore):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, param in store.items():
            if param.grad is None:
                continue
            g = param.grad + self.weight_decay * param.data
            m = self._moment_for(self.m, name, param.data.shape)
            v = self._moment_for(self.v, name, param.data.shape)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            param.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "step_count": self.step_count,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }

    def load_state_dict(self, state: dict):
        self.lr = state["lr"]
        self.beta1 = state["beta1"]
        self.beta2 = state["beta2"]
        self.eps = state["eps"]
        self.weight_decay = state["weight_decay"]
        self.step_count = state["step_count"]
        self.m = {k: np.asarray(v, dtype=np.float64).copy() for k, v in state["m"].items()}
        self.v = {k: np.asarray(v, dtype=np.float64).copy() for k, v in state["v"].items()}
