"""Named parameter storage, seeded initialization, checkpoint round-trip.

Checkpoint layout: one UTF-8 JSON manifest line listing {name, shape, offset}
per parameter in lexicographic name order, followed by the raw little-endian
float32 payload, row-major, concatenated in manifest order. Round-trips are
bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .engine import Tensor


class ParameterStore:
    """Map from dotted parameter names to trainable tensors."""

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, shape, init: str = "glorot") -> Tensor:
        """Seeded fan-scaled uniform initialization (zeros for biases).

        Glorot scaling keeps signal magnitudes near unity through the
        attention and projection stacks; tiny fixed-range inits leave the
        cross-module conditioning too weak to break symmetry within the short
        published training schedule.
        """
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        shape = tuple(shape)
        if init == "glorot":
            if len(shape) == 2:
                lim = np.sqrt(6.0 / (shape[0] + shape[1]))
            else:
                lim = np.sqrt(3.0 / shape[0])
            data = self.rng.uniform(-lim, lim, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(data.astype(self.dtype), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def grad(self, name: str) -> np.ndarray:
        """Accumulated gradient; zeros for parameters backward never reached."""
        t = self._params[name]
        if t.grad is None:
            return np.zeros_like(t.data)
        return t.grad

    def zero_grads(self):
        for t in self._params.values():
            t.grad = None

    def n_values(self) -> int:
        return sum(t.data.size for t in self._params.values())

    # -- checkpoint format ---------------------------------------------------

    def save(self, path):
        path = Path(path)
        manifest = []
        offset = 0
        payloads = []
        for name in self.names():
            t = self._params[name]
            raw = np.ascontiguousarray(t.data.astype("<f4")).tobytes()
            manifest.append({"name": name, "shape": list(t.data.shape),
                             "offset": offset})
            payloads.append(raw)
            offset += len(raw)
        header = json.dumps({"params": manifest, "seed": self.seed},
                            ensure_ascii=False)
        with open(path, "wb") as fh:
            fh.write(header.encode("utf-8") + b"\n")
            for raw in payloads:
                fh.write(raw)

    @classmethod
    def load(cls, path) -> "ParameterStore":
        path = Path(path)
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            payload = fh.read()
        store = cls(seed=header.get("seed", 0))
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            start = entry["offset"]
            arr = np.frombuffer(payload, dtype="<f4", count=n,
                                offset=start).reshape(shape)
            t = Tensor(arr.copy(), requires_grad=True)
            store._params[entry["name"]] = t
        return store
