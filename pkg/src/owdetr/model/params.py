"""Named parameter registry with deterministic seeded initialization."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor


class ParamStore:
    """Ordered name -> Tensor map; creation order is the tensor directory."""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 0x70617273]))
        self._params: dict[str, Tensor] = {}

    def glorot(self, name: str, shape, fan_in: int, fan_out: int) -> Tensor:
        bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
        return self.create(name, self.rng.uniform(-bound, bound, size=shape))

    def zeros(self, name: str, shape) -> Tensor:
        return self.create(name, np.zeros(shape))

    def ones(self, name: str, shape) -> Tensor:
        return self.create(name, np.ones(shape))

    def create(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def replace(self, name: str, data: np.ndarray) -> Tensor:
        """Swap a parameter's storage, preserving its directory slot."""
        if name not in self._params:
            raise KeyError(name)
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params.keys())

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        if set(state.keys()) != set(self._params.keys()):
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            raise KeyError(f"state mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for k, v in state.items():
            self._params[k] = Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)

    def zero_grads(self):
        for t in self._params.values():
            t.grad = None

    def count(self) -> int:
        return sum(t.data.size for t in self._params.values())
