"""Fused neural primitives recorded as single tape nodes.

Each op here would otherwise expand into a dozen elementwise nodes; fusing
them keeps tapes short, which dominates training speed at these sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import ShapeError, Tensor, _record

__all__ = ["GruWeights", "gru_cell", "additive_attention", "affine",
           "softmax_nll", "mixed_softmax_nll"]


@dataclass
class GruWeights:
    """Update/reset-gate GRU cell parameters.

    w_* act on the input x, u_* on the previous hidden state, b_* are biases.
    """

    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor

    def __post_init__(self):
        self._tensors = (self.w_z, self.u_z, self.b_z, self.w_r, self.u_r,
                         self.b_r, self.w_h, self.u_h, self.b_h)

    def tensors(self):
        return self._tensors


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_cell(x: Tensor, h_prev: Tensor, w: GruWeights) -> Tensor:
    """One GRU step.

        z = sigmoid(w_z x + u_z h + b_z)
        r = sigmoid(w_r x + u_r h + b_r)
        c = tanh(w_h x + u_h (r*h) + b_h)
        h' = (1 - z) * c + z * h
    """
    xd, hd = x.data, h_prev.data
    wzd, uzd, wrd, urd, whd, uhd = (w.w_z.data, w.u_z.data, w.w_r.data,
                                    w.u_r.data, w.w_h.data, w.u_h.data)
    if wzd.shape[1] != xd.shape[0] or uzd.shape[1] != hd.shape[0]:
        raise ShapeError(
            f"gru_cell: input {xd.shape} / hidden {hd.shape} do not match "
            f"weights {wzd.shape} / {uzd.shape}"
        )
    z = _sigmoid(wzd @ xd + uzd @ hd + w.b_z.data)
    r = _sigmoid(wrd @ xd + urd @ hd + w.b_r.data)
    rh = r * hd
    c = np.tanh(whd @ xd + uhd @ rh + w.b_h.data)
    out = Tensor((1.0 - z) * c + z * hd)

    def bwd(g):
        gz = g * (hd - c)
        gc = g * (1.0 - z)
        gh = g * z
        gac = gc * (1.0 - c * c)
        grh = uhd.T @ gac
        gr = grh * hd
        gh = gh + grh * r
        gar = gr * r * (1.0 - r)
        gaz = gz * z * (1.0 - z)
        gx = whd.T @ gac + wrd.T @ gar + wzd.T @ gaz
        gh = gh + urd.T @ gar + uzd.T @ gaz
        return (gx, gh,
                np.outer(gaz, xd), np.outer(gaz, hd), gaz,
                np.outer(gar, xd), np.outer(gar, hd), gar,
                np.outer(gac, xd), np.outer(gac, rh), gac)

    _record((out,), (x, h_prev) + w.tensors(), bwd)
    return out


def additive_attention(query: Tensor, memory: Tensor, mem_proj: Tensor,
                       w_query: Tensor, v: Tensor):
    """Additive attention over an (n, d) memory matrix.

        score_i = v . tanh(w_query @ query + mem_proj_i)

    ``mem_proj`` is ``memory @ w_memory.T`` computed once per decode so the
    per-step cost does not grow with the memory projection. Returns
    (context, weights); weights are a probability distribution over rows.

    The memory must be non-empty (inputs always carry sentinel tokens).
    """
    if memory.data.ndim != 2 or memory.data.shape[0] == 0:
        raise ShapeError(f"attention requires non-empty (n, d) memory, got "
                         f"shape {memory.data.shape}")
    qd, md, pd = query.data, memory.data, mem_proj.data
    qp = w_query.data @ qd
    e = np.tanh(pd + qp)
    s = e @ v.data
    s = s - s.max()
    ew = np.exp(s)
    wts = ew / ew.sum()
    ctx = wts @ md
    context = Tensor(ctx)
    weights = Tensor(wts)

    vd, wqd = v.data, w_query.data

    def bwd(gctx, gwts):
        gw = gwts + md @ gctx
        gs = wts * (gw - wts @ gw)
        gv = e.T @ gs
        gu = np.outer(gs, vd) * (1.0 - e * e)
        gu_sum = gu.sum(axis=0)
        gq = wqd.T @ gu_sum
        gwq = np.outer(gu_sum, qd)
        gmem = np.outer(wts, gctx)
        return (gq, gmem, gu, gwq, gv)

    _record((context, weights), (query, memory, mem_proj, w_query, v), bwd)
    return context, weights


def affine(w: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """w @ x + b."""
    if w.data.shape[1] != x.data.shape[0] or w.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"affine: {w.data.shape} @ {x.data.shape} + {b.data.shape}")
    out = Tensor(w.data @ x.data + b.data)
    wd, xd = w.data, x.data
    _record((out,), (w, x, b), lambda g: (np.outer(g, xd), wd.T @ g, g))
    return out


def mixed_softmax_nll(gen_logits: Tensor, copy_scores: Tensor | None,
                      target_group: np.ndarray):
    """Negative log likelihood under a jointly normalized generate/copy mix.

    Generation logits over the vocabulary and copy scores over source
    positions are exponentiated and normalized by a single softmax; the
    target's probability is the summed mass of ``target_group`` (indices into
    the joint vector: vocabulary ids first, then copy positions).

    Returns (loss, probs) where probs is the plain joint distribution
    (a numpy array, not part of the graph).
    """
    if copy_scores is not None:
        z = np.concatenate([gen_logits.data, copy_scores.data])
    else:
        z = gen_logits.data
    group = np.asarray(target_group, dtype=np.intp)
    if group.size == 0 or int(group.max()) >= z.shape[0] or int(group.min()) < 0:
        raise IndexError(
            f"target group {group} out of range for joint size {z.shape[0]}"
        )
    ez = np.exp(z - z.max())
    p = ez / ez.sum()
    gmass = p[group].sum()
    loss = Tensor(np.asarray(-np.log(gmass), dtype=z.dtype))

    n_gen = gen_logits.data.shape[0]

    def bwd(g):
        gz = p.copy()
        gz[group] -= p[group] / gmass
        gz *= g
        if copy_scores is not None:
            return (gz[:n_gen], gz[n_gen:])
        return (gz,)

    inputs = (gen_logits,) if copy_scores is None else (gen_logits, copy_scores)
    _record((loss,), inputs, bwd)
    return loss, p


def softmax_nll(logits: Tensor, target: int):
    """Cross-entropy against one index; max-subtraction for stability."""
    v = logits.data.shape[0]
    if not 0 <= target < v:
        raise IndexError(f"target {target} out of range for {v} logits")
    loss, _ = mixed_softmax_nll(logits, None, np.asarray([target]))
    return loss
