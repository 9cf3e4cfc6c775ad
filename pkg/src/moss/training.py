"""Joint optimization of the present decoders with per-turn loss masking.

The total turn loss is the sum over annotated modules of the mean per-token
negative log likelihood; modules that are absent from the instance or masked
on the dialog contribute nothing, realizing model-level plug-and-play (a raw
dialog trains through the generation loss alone while gradients still reach
the encoder).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import (Adam, Tape, Tensor, add, backward, clip_global_norm,
                       mean, scale)
from .autodiff.optim import TrainingError
from .corpus import Dialog, DialogTurn, Vocab, build_vocab
from .kb import KnowledgeBase
from .network import ContractError, FrameworkConfig, MossModel, TurnOutput

MODULE_ORDER = ("nlu", "dst", "dpl", "nlg")


@dataclass
class TrainConfig:
    lr: float = 0.003
    decay_factor: float = 0.5
    decay_after_epoch: int = 10
    batch_size: int = 32
    dropout: float = 0.5
    max_epochs: int = 11
    seed: int = 0
    clip_norm: float = 5.0
    validation_fraction: float = 0.1
    vocab_limit: int = 800

    def __post_init__(self):
        for name in ("lr", "decay_factor", "batch_size", "max_epochs",
                     "clip_norm"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")

    def lr_at(self, epoch: int) -> float:
        """Schedule: base rate up to ``decay_after_epoch``, then geometric
        decay once per later epoch."""
        steps = max(0, epoch - self.decay_after_epoch)
        return self.lr * self.decay_factor ** steps

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ContractError(f"unknown training keys {sorted(unknown)}")
        return cls(**obj)


@dataclass
class LossBreakdown:
    """Per-module turn losses; None marks absent or masked modules."""

    l_nlu: float | None = None
    l_dst: float | None = None
    l_dpl: float | None = None
    l_nlg: float | None = None
    total: float = 0.0
    node: Tensor | None = None  # graph node behind ``total``

    def component(self, module: str) -> float | None:
        return getattr(self, f"l_{module}")


def turn_loss(outputs: TurnOutput, gold: DialogTurn) -> LossBreakdown:
    """Sum of the annotated modules' mean per-token NLL for one turn."""
    breakdown = LossBreakdown()
    nodes = []
    for module in MODULE_ORDER:
        result = outputs.result(module)
        if result is None or not gold.mask[module]:
            continue
        if gold.annotation(module) is None:
            raise ContractError(f"turn unmasked for {module} but the gold "
                                f"annotation is missing")
        if result.losses is None:
            raise ContractError(f"{module} output was not teacher-forced; "
                                f"cannot score it against gold")
        node = mean(result.losses)
        setattr(breakdown, f"l_{module}", node.item())
        nodes.append(node)
    if nodes:
        total = nodes[0]
        for node in nodes[1:]:
            total = add(total, node)
        breakdown.node = total
        breakdown.total = total.item()
    return breakdown


@dataclass
class TrainResult:
    model: MossModel
    vocab: Vocab
    log: list[dict]
    best_epoch: int
    best_valid: float


def _mean_components(breakdowns: list[LossBreakdown]) -> dict:
    out = {}
    for module in MODULE_ORDER:
        vals = [b.component(module) for b in breakdowns
                if b.component(module) is not None]
        out[f"l_{module}"] = float(np.mean(vals)) if vals else None
    totals = [b.total for b in breakdowns if b.node is not None]
    out["total"] = float(np.mean(totals)) if totals else 0.0
    return out


def evaluate_loss(model: MossModel, kb: KnowledgeBase,
                  dialogs: list[Dialog]) -> dict:
    """Teacher-forced loss without dropout; used for validation."""
    breakdowns = []
    for d in dialogs:
        outs = model.run_dialog(kb, d, source="gold", teacher=True,
                                train=False)
        breakdowns.extend(turn_loss(o, t) for o, t in zip(outs, d.turns))
    return _mean_components(breakdowns)


def train(cfg: TrainConfig, fw: FrameworkConfig, corpus: list[Dialog],
          kb: KnowledgeBase, valid: list[Dialog] | None = None,
          vocab: Vocab | None = None, out_dir=None,
          quiet: bool = True) -> TrainResult:
    """Fit one framework instance on a corpus.

    Dialogs are shuffled per epoch and packed whole into batches of
    ``batch_size`` turns (the final partial batch is kept); the loss is
    averaged over turns within a dialog and over dialogs within a batch.
    Batching by turns rather than dialogs keeps the optimizer step count per
    epoch in the regime the published schedule assumes. When no validation
    corpus is given, a tenth of the training dialogs is held out for
    checkpoint selection.
    """
    if not corpus:
        raise ContractError("training corpus is empty")
    if vocab is None:
        vocab = build_vocab(corpus + (valid or []), limit=cfg.vocab_limit)

    fw = FrameworkConfig.from_json(fw.to_json())  # private copy
    fw.vocab_size = len(vocab)
    fw.dropout = cfg.dropout
    fw.seed = cfg.seed

    train_dialogs = list(corpus)
    if valid is None:
        n_valid = int(round(cfg.validation_fraction * len(train_dialogs)))
        if n_valid > 0:
            order = np.random.default_rng([cfg.seed, 17]).permutation(
                len(train_dialogs))
            valid = [train_dialogs[i] for i in order[:n_valid]]
            train_dialogs = [train_dialogs[i] for i in order[n_valid:]]
        else:
            valid = train_dialogs

    model = MossModel(fw, vocab)
    adam = Adam(lr=cfg.lr)
    shuffle_rng = np.random.default_rng([cfg.seed, 0])
    dropout_rng = np.random.default_rng([cfg.seed, 1])

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        vocab.save(out_dir / "vocab.txt")
        fw.save(out_dir / "config.json")
        (out_dir / "train_config.json").write_text(
            json.dumps(cfg.to_json(), indent=1), encoding="utf-8")

    log: list[dict] = []
    best_valid = float("inf")
    best_epoch = 0
    best_params: dict[str, np.ndarray] = {}

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.time()
        lr = cfg.lr_at(epoch)
        order = shuffle_rng.permutation(len(train_dialogs))
        epoch_breakdowns: list[LossBreakdown] = []
        shuffled = [train_dialogs[i] for i in order]
        for batch_no, batch in enumerate(_batches(shuffled, cfg.batch_size)):
            model.store.zero_grads()
            for dlg in batch:
                with Tape() as tape:
                    outs = model.run_dialog(kb, dlg, source="gold",
                                            teacher=True, train=True,
                                            rng=dropout_rng)
                    breakdowns = [turn_loss(o, t)
                                  for o, t in zip(outs, dlg.turns)]
                    nodes = [b.node for b in breakdowns if b.node is not None]
                    epoch_breakdowns.extend(breakdowns)
                    if not nodes:
                        continue
                    _abort_on_nan(breakdowns, batch_no, dlg.dialog_id)
                    dialog_node = scale(mean(nodes), 1.0 / len(batch))
                backward(tape, dialog_node)
            clip_global_norm(model.store, cfg.clip_norm)
            adam.step(model.store, lr=lr)

        valid_loss = evaluate_loss(model, kb, valid)
        entry = {"epoch": epoch, "lr": lr, "batch_size": cfg.batch_size,
                 "loss": _mean_components(epoch_breakdowns),
                 "valid_loss": valid_loss["total"],
                 "wall_time": round(time.time() - t0, 3)}
        log.append(entry)
        if not quiet:
            print(json.dumps(entry))
        if out_dir is not None:
            with open(out_dir / "train_log.jsonl", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry) + "\n")
        if valid_loss["total"] < best_valid:
            best_valid = valid_loss["total"]
            best_epoch = epoch
            best_params = {name: t.data.copy()
                           for name, t in model.store.items()}

    if best_params:
        for name, data in best_params.items():
            model.store[name].data[:] = data
    if out_dir is not None:
        model.store.save(out_dir / "model.ckpt")

    return TrainResult(model=model, vocab=vocab, log=log,
                       best_epoch=best_epoch, best_valid=best_valid)


def _batches(dialogs: list[Dialog], turn_budget: int):
    """Pack whole dialogs until the batch reaches ``turn_budget`` turns."""
    cur: list[Dialog] = []
    turns = 0
    for d in dialogs:
        if cur and turns + len(d.turns) > turn_budget:
            yield cur
            cur, turns = [], 0
        cur.append(d)
        turns += len(d.turns)
    if cur:
        yield cur


def _abort_on_nan(breakdowns: list[LossBreakdown], batch_no: int,
                  dialog_id: str):
    for b in breakdowns:
        for module in MODULE_ORDER:
            val = b.component(module)
            if val is not None and not np.isfinite(val):
                raise TrainingError(
                    f"non-finite loss in component {module} "
                    f"(batch {batch_no}, dialog {dialog_id})")
        if not np.isfinite(b.total):
            raise TrainingError(f"non-finite total loss (batch {batch_no}, "
                                f"dialog {dialog_id})")
