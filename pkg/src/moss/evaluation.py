"""Corpus metrics under free-running rollout, plus error localization.

Task completion is measured on the dialog state (entity match rate), on
requested-slot coverage (success F1), on solution delivery (success
accuracy), and per-module exact-match accuracies; generation quality uses
corpus BLEU-4. Error records point at the earliest module in pipeline order
whose output went wrong, which is what makes the modular outputs debuggable.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

from .corpus import SEP_INF, Dialog, split_state
from .kb import KnowledgeBase, state_to_query
from .network import DialogPrediction

PIPELINE = ("nlu", "dst", "dpl", "nlg")


class EvaluationError(ValueError):
    pass


@dataclass
class MetricReport:
    mat: float | None
    succ_f1: float | None
    bleu: float | None
    nlu_acc: float | None
    dst_acc: float | None
    dpl_acc: float | None
    succ_acc: float | None
    n_dialogs: int
    n_turns: int

    _FIELDS = ("mat", "succ_f1", "bleu", "nlu_acc", "dst_acc", "dpl_acc",
               "succ_acc")

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in self._FIELDS}
        out["n_dialogs"] = self.n_dialogs
        out["n_turns"] = self.n_turns
        return out

    def to_text(self) -> str:
        width = max(len(k) for k in self._FIELDS)
        lines = [f"{'metric':<{width}}  value", f"{'-' * width}  -----"]
        for k in self._FIELDS:
            v = getattr(self, k)
            lines.append(f"{k:<{width}}  " + ("   n/a" if v is None
                                              else f"{v:.4f}"))
        lines.append(f"{'dialogs':<{width}}  {self.n_dialogs}")
        lines.append(f"{'turns':<{width}}  {self.n_turns}")
        return "\n".join(lines)


@dataclass
class ErrorRecord:
    dialog_id: str
    turn: int
    module: str
    predicted: str
    gold: str
    first_wrong_module: bool

    def to_json(self) -> dict:
        return {"dialog_id": self.dialog_id, "turn": self.turn,
                "module": self.module, "predicted": self.predicted,
                "gold": self.gold,
                "first_wrong_module": self.first_wrong_module}


def _pair(predictions: list[DialogPrediction],
          gold: list[Dialog]) -> list[tuple[DialogPrediction, Dialog]]:
    by_id = {d.dialog_id: d for d in gold}
    if len(by_id) != len(gold):
        raise EvaluationError("gold corpus has duplicate dialog ids")
    pairs = []
    for p in predictions:
        if p.dialog_id not in by_id:
            raise EvaluationError(f"prediction for unknown dialog "
                                  f"{p.dialog_id!r}")
        d = by_id[p.dialog_id]
        if len(p.turns) != len(d.turns):
            raise EvaluationError(f"dialog {p.dialog_id!r}: {len(p.turns)} "
                                  f"predicted turns vs {len(d.turns)} gold")
        pairs.append((p, d))
    return pairs


def _require_predicted(predictions: list[DialogPrediction]):
    bad = [p.dialog_id for p in predictions if p.source != "predicted"]
    if bad:
        raise EvaluationError(
            f"metrics require free-running rollout; dialogs {bad[:3]} were "
            f"produced from gold-fed inputs")


# ---------------------------------------------------------------------------
# task completion


def entity_match_rate(predictions: list[DialogPrediction],
                      gold: list[Dialog], kb: KnowledgeBase) -> float | None:
    """Fraction of dialogs whose final-turn constraint set equals gold.

    States canonicalize through the KB schema (slot -> value map), so token
    order never matters.
    """
    pairs = _pair(predictions, gold)
    matched = total = 0
    for pred, dialog in pairs:
        idx = _last_annotated_state(dialog)
        if idx is None:
            continue
        total += 1
        pred_q = state_to_query(pred.turns[idx].state, kb)
        gold_q = state_to_query(dialog.turns[idx].state, kb)
        if pred_q == gold_q:
            matched += 1
    return matched / total if total else None


def _last_annotated_state(dialog: Dialog) -> int | None:
    for i in range(len(dialog.turns) - 1, -1, -1):
        if dialog.turns[i].state is not None:
            return i
    return None


def success_f1(predictions: list[DialogPrediction],
               gold: list[Dialog], kb: KnowledgeBase) -> float | None:
    """Micro-averaged F1 of answered requestable placeholders vs requested.

    A slot counts as answered when its placeholder token appears in any
    generated response of the dialog. Nothing requested and nothing emitted
    is vacuously perfect.
    """
    pairs = _pair(predictions, gold)
    placeholders = {f"<{slot}>": slot for slot in kb.requestable}
    tp = fp = fn = 0
    any_goal = False
    for pred, dialog in pairs:
        if dialog.goal is None:
            continue
        any_goal = True
        requested = set(dialog.goal.requests)
        answered = set()
        for turn in pred.turns:
            for tok in turn.response:
                if tok in placeholders:
                    answered.add(placeholders[tok])
        tp += len(answered & requested)
        fp += len(answered - requested)
        fn += len(requested - answered)
    if not any_goal:
        return None
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def success_accuracy(predictions: list[DialogPrediction], gold: list[Dialog],
                     response_act_fn=None) -> float | None:
    """Rate of dialogs whose gold solution act was issued at some turn.

    Instances without a policy decoder never emit acts; for them an optional
    ``response_act_fn`` recovers acts from each generated response (the
    synthetic tasks provide an exact template inverter).
    """
    pairs = _pair(predictions, gold)
    hit = total = 0
    for pred, dialog in pairs:
        if dialog.goal is None or dialog.goal.solution is None:
            continue
        emitted: set[str] = set()
        usable = False
        for turn in pred.turns:
            if turn.acts is not None:
                usable = True
                emitted.update(turn.acts)
            elif response_act_fn is not None:
                usable = True
                emitted.update(response_act_fn(turn.response))
        if not usable:
            continue
        total += 1
        if dialog.goal.solution in emitted:
            hit += 1
    return hit / total if total else None


# ---------------------------------------------------------------------------
# generation quality


def corpus_bleu(candidates: list[list[str]],
                references: list[list[str]]) -> float:
    """Corpus-level BLEU-4 with brevity penalty.

    Higher-order precisions are add-one smoothed; the unigram precision is
    floored just above zero so fully disjoint corpora score near but not at
    zero.
    """
    if not candidates or len(candidates) != len(references):
        raise EvaluationError("BLEU needs equally many non-empty candidate "
                              "and reference lists")
    clipped = [0] * 4
    totals = [0] * 4
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, 5):
            cand_ngrams = Counter(tuple(cand[i:i + n])
                                  for i in range(len(cand) - n + 1))
            ref_ngrams = Counter(tuple(ref[i:i + n])
                                 for i in range(len(ref) - n + 1))
            totals[n - 1] += sum(cand_ngrams.values())
            clipped[n - 1] += sum(min(c, ref_ngrams[g])
                                  for g, c in cand_ngrams.items())
    precisions = []
    for n in range(4):
        smooth = 1 if n > 0 else 0
        num, den = clipped[n] + smooth, totals[n] + smooth
        p = num / den if den else 0.0
        precisions.append(max(p, 1e-9))
    log_mean = sum(math.log(p) for p in precisions) / 4.0
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len /
                                                 max(cand_len, 1))
    return bp * math.exp(log_mean)


def _bleu_from_pairs(pairs) -> float | None:
    cands, refs = [], []
    for pred, dialog in pairs:
        for t, turn in enumerate(dialog.turns):
            if turn.response is not None:
                cands.append(pred.turns[t].response)
                refs.append(turn.response)
    if not cands:
        return None
    return corpus_bleu(cands, refs)


# ---------------------------------------------------------------------------
# per-module accuracies and error localization


def split_act_slots(tokens: list[str]) -> tuple[list[str], list[str]]:
    """(act tokens, slot tokens) around the first separator."""
    if SEP_INF in tokens:
        i = tokens.index(SEP_INF)
        return tokens[:i], tokens[i + 1:]
    return list(tokens), []


def _module_correct(module: str, pred: list[str], gold: list[str]) -> bool:
    if module == "nlg":
        return pred == gold
    if module == "dst":
        pc, pr = split_state(pred)
        gc, gr = split_state(gold)
        return Counter(pc) == Counter(gc) and Counter(pr) == Counter(gr)
    pa, ps = split_act_slots(pred)
    ga, gs = split_act_slots(gold)
    return pa == ga and Counter(ps) == Counter(gs)


_PRED_FIELD = {"nlu": "semantics", "dst": "state", "dpl": "acts",
               "nlg": "response"}


def module_accuracy(module: str, predictions: list[DialogPrediction],
                    gold: list[Dialog]) -> float | None:
    """Exact-match turn accuracy: acts compared as sequences, slots as
    multisets. None when the module is absent from the predictions or no
    turn annotates it."""
    pairs = _pair(predictions, gold)
    correct = total = 0
    for pred, dialog in pairs:
        for t, turn in enumerate(dialog.turns):
            gold_tokens = turn.annotation(module)
            if gold_tokens is None or not turn.mask[module]:
                continue
            pred_tokens = getattr(pred.turns[t], _PRED_FIELD[module])
            if pred_tokens is None:
                return None
            total += 1
            if _module_correct(module, pred_tokens, gold_tokens):
                correct += 1
    return correct / total if total else None


def error_report(predictions: list[DialogPrediction],
                 gold: list[Dialog]) -> list[ErrorRecord]:
    """One record per wrong module-turn; flags the earliest module in
    pipeline order that erred on that turn."""
    records: list[ErrorRecord] = []
    for pred, dialog in _pair(predictions, gold):
        for t, turn in enumerate(dialog.turns):
            wrong: list[tuple[str, list[str], list[str]]] = []
            for module in PIPELINE:
                gold_tokens = turn.annotation(module)
                if gold_tokens is None or not turn.mask[module]:
                    continue
                pred_tokens = getattr(pred.turns[t], _PRED_FIELD[module])
                if pred_tokens is None:
                    continue
                if not _module_correct(module, pred_tokens, gold_tokens):
                    wrong.append((module, pred_tokens, gold_tokens))
            for rank, (module, p_toks, g_toks) in enumerate(wrong):
                records.append(ErrorRecord(
                    dialog_id=dialog.dialog_id, turn=t + 1, module=module,
                    predicted=" ".join(p_toks), gold=" ".join(g_toks),
                    first_wrong_module=(rank == 0)))
    return records


def save_error_report(records: list[ErrorRecord], path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# full report


def evaluate(predictions: list[DialogPrediction], gold: list[Dialog],
             kb: KnowledgeBase, response_act_fn=None,
             allow_gold_rollout: bool = False) -> MetricReport:
    """All metrics over one corpus; predictions must come from free-running
    rollout unless explicitly overridden for diagnostics."""
    if not allow_gold_rollout:
        _require_predicted(predictions)
    pairs = _pair(predictions, gold)
    return MetricReport(
        mat=entity_match_rate(predictions, gold, kb),
        succ_f1=success_f1(predictions, gold, kb),
        bleu=_bleu_from_pairs(pairs),
        nlu_acc=module_accuracy("nlu", predictions, gold),
        dst_acc=module_accuracy("dst", predictions, gold),
        dpl_acc=module_accuracy("dpl", predictions, gold),
        succ_acc=success_accuracy(predictions, gold, response_act_fn),
        n_dialogs=len(predictions),
        n_turns=sum(len(p.turns) for p in predictions),
    )
