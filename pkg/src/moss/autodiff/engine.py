"""Reverse-mode differentiation on numpy arrays.

Operations execute eagerly and, when a Tape is active, append one node per
primitive to a Wengert list. ``backward`` replays the list in reverse, so
topological order holds by construction. Supported shapes are scalars,
vectors and matrices; there is no general broadcasting.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "GradientError",
    "ShapeError",
    "backward",
    "add",
    "sub",
    "mul",
    "scale",
    "matvec",
    "vecmat",
    "matmul",
    "tanh",
    "sigmoid",
    "concat",
    "stack_rows",
    "tsum",
    "mean",
    "transpose",
    "dropout",
    "embed_row",
]


class GradientError(RuntimeError):
    """Misuse of the tape/backward contract."""


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested primitive."""


class Tensor:
    """A numpy array plus gradient bookkeeping.

    ``requires_grad`` marks leaves (parameters) whose accumulated gradient is
    deposited into ``grad`` by ``backward``. Intermediate tensors never hold
    gradients themselves.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        if type(data) is np.ndarray and data.dtype in (np.float32,
                                                       np.float64):
            arr = data
        else:
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def check_finite(self, what: str = "tensor"):
        if not np.all(np.isfinite(self.data)):
            raise GradientError(f"non-finite values in {what}")
        return self

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


# The active tape, if any. Ops record onto it; without a tape they are pure
# value computations (inference mode).
_ACTIVE: "Tape | None" = None


class Tape:
    """Ordered record of executed primitives for one backward pass."""

    __slots__ = ("nodes", "consumed", "_prev")

    def __init__(self):
        self.nodes = []  # (outputs, inputs, backward_fn)
        self.consumed = False
        self._prev = None

    def __enter__(self):
        global _ACTIVE
        self._prev = _ACTIVE
        _ACTIVE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE
        _ACTIVE = self._prev
        return False

    def __len__(self):
        return len(self.nodes)


def _record(outputs, inputs, bwd):
    if _ACTIVE is not None:
        _ACTIVE.nodes.append((outputs, inputs, bwd))


def backward(tape: Tape, loss: Tensor):
    """Accumulate d(loss)/d(leaf) into ``grad`` of every requires_grad leaf.

    The tape is single-shot: replaying it twice would double-count, so a
    second call raises.
    """
    if loss.data.size != 1:
        raise GradientError(
            f"backward target must be scalar, got shape {loss.data.shape}"
        )
    if tape.consumed:
        raise GradientError("tape already consumed; rebuild the graph before "
                            "calling backward again")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    # Row-sparse gradients for embedding-style lookups: id -> [(row_ids, g)].
    sparse: dict[int, list] = {}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad:
        leaves[id(loss)] = loss

    for outputs, inputs, bwd in reversed(tape.nodes):
        gouts = [grads.get(id(o)) for o in outputs]
        if all(g is None for g in gouts):
            continue
        gouts = [
            g if g is not None else np.zeros_like(o.data)
            for g, o in zip(gouts, outputs)
        ]
        gins = bwd(*gouts)
        for t, g in zip(inputs, gins):
            if g is None:
                continue
            if isinstance(g, tuple):  # ("rows", ids, gmat) sparse marker
                sparse.setdefault(id(t), []).append((g[1], g[2]))
            else:
                cur = grads.get(id(t))
                grads[id(t)] = g if cur is None else cur + g
            if t.requires_grad:
                leaves[id(t)] = t

    for key, leaf in leaves.items():
        g = grads.get(key)
        acc = np.zeros_like(leaf.data) if g is None else g.copy()
        for ids, gmat in sparse.get(key, ()):
            np.add.at(acc, ids, gmat)
        leaf.grad = acc if leaf.grad is None else leaf.grad + acc


# ---------------------------------------------------------------------------
# primitives


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    _record((out,), (a, b), lambda g: (g, g))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    _record((out,), (a, b), lambda g: (g, -g))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data
    _record((out,), (a, b), lambda g: (g * bd, g * ad))
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * np.asarray(c, dtype=a.data.dtype))
    _record((out,), (a,), lambda g: (g * c,))
    return out


def matvec(m: Tensor, v: Tensor) -> Tensor:
    """(p, q) @ (q,) -> (p,)."""
    if m.data.ndim != 2 or v.data.ndim != 1 or m.data.shape[1] != v.data.shape[0]:
        raise ShapeError(f"matvec: {m.data.shape} @ {v.data.shape}")
    out = Tensor(m.data @ v.data)
    md, vd = m.data, v.data
    _record((out,), (m, v), lambda g: (np.outer(g, vd), md.T @ g))
    return out


def vecmat(v: Tensor, m: Tensor) -> Tensor:
    """(n,) @ (n, d) -> (d,)."""
    if v.data.ndim != 1 or m.data.ndim != 2 or v.data.shape[0] != m.data.shape[0]:
        raise ShapeError(f"vecmat: {v.data.shape} @ {m.data.shape}")
    out = Tensor(v.data @ m.data)
    vd, md = v.data, m.data
    _record((out,), (v, m), lambda g: (md @ g, np.outer(vd, g)))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(n, k) @ (k, m) -> (n, m)."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)
    ad, bd = a.data, b.data
    _record((out,), (a, b), lambda g: (g @ bd.T, ad.T @ g))
    return out


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {x.data.shape}")
    out = Tensor(x.data.T.copy())
    _record((out,), (x,), lambda g: (g.T,))
    return out


def tanh(x: Tensor) -> Tensor:
    out = Tensor(np.tanh(x.data))
    od = out.data
    _record((out,), (x,), lambda g: (g * (1.0 - od * od),))
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = Tensor(1.0 / (1.0 + np.exp(-x.data)))
    od = out.data
    _record((out,), (x,), lambda g: (g * od * (1.0 - od),))
    return out


def concat(parts: list[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    out = Tensor(np.concatenate([p.data for p in parts]))
    offsets = [0]
    for p in parts:
        offsets.append(offsets[-1] + p.data.shape[0])

    def bwd(g):
        return tuple(g[offsets[i]:offsets[i + 1]]
                     for i in range(len(offsets) - 1))

    _record((out,), tuple(parts), bwd)
    return out


def stack_rows(rows: list[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into an (n, d) matrix."""
    if not rows:
        raise ShapeError("stack_rows: empty row list")
    out = Tensor(np.stack([r.data for r in rows]))

    def bwd(g):
        return tuple(g[i] for i in range(len(rows)))

    _record((out,), tuple(rows), bwd)
    return out


def tsum(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum(), dtype=x.data.dtype))
    shape = x.data.shape
    _record((out,), (x,), lambda g: (np.full(shape, g, dtype=g.dtype),))
    return out


def mean(parts: list[Tensor]) -> Tensor:
    """Mean of scalar tensors."""
    n = len(parts)
    out = Tensor(np.asarray(sum(p.data for p in parts) / n))
    _record((out,), tuple(parts), lambda g: tuple(g / n for _ in range(n)))
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator,
            training: bool = True) -> Tensor:
    """Inverted dropout; identity when rate is 0 or not training."""
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    mask = keep / np.asarray(1.0 - rate, dtype=x.data.dtype)
    out = Tensor(x.data * mask)
    _record((out,), (x,), lambda g: (g * mask,))
    return out


def embed_row(table: Tensor, idx: int) -> Tensor:
    """Row lookup with row-sparse gradient accumulation."""
    out = Tensor(table.data[idx])
    _record((out,), (table,), lambda g: (("rows", np.asarray([idx]), g[None, :]),))
    return out
