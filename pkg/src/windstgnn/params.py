"""Named parameter containers and seeded initialisation."""

from __future__ import annotations

import zlib
from typing import Iterator, Mapping

import numpy as np

from .tensor import Tensor, parameter


def rng_for(seed: int, *consumer: str | int) -> np.random.Generator:
    """Independent generator for one consumer of a root seed."""
    keys = [int(seed)] + [c if isinstance(c, int) else zlib.crc32(c.encode()) for c in consumer]
    return np.random.default_rng(np.random.SeedSequence(keys))


def uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ParamStore(Mapping[str, Tensor]):
    """Ordered name -> parameter tensor map."""

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None):
        self._p: dict[str, Tensor] = {}
        for name, arr in (arrays or {}).items():
            self[name] = arr

    def __setitem__(self, name: str, value) -> None:
        self._p[name] = value if isinstance(value, Tensor) else parameter(value)

    def __getitem__(self, name: str) -> Tensor:
        return self._p[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._p)

    def __len__(self) -> int:
        return len(self._p)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._p.items()}

    def copy(self) -> "ParamStore":
        return ParamStore({k: t.data.copy() for k, t in self._p.items()})

    def n_values(self) -> int:
        return sum(t.size for t in self._p.values())

    def zero_grad(self) -> None:
        for t in self._p.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (np.zeros(t.shape) if t.grad is None else t.grad) for k, t in self._p.items()}
