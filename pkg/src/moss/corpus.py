"""Dialog data model, vocabulary and the line-oriented corpus format.

A corpus file holds one dialog per line as UTF-8 JSON:

    {"dialog_id": str,
     "goal": {"constraints": {slot: value}, "requests": [slot],
              "solution": str|null} | null,
     "turns": [{"user": str, "m": str|null, "s": str|null, "a": str|null,
                "resp": str|null,
                "mask": {"nlu": bool, "dst": bool, "dpl": bool, "nlg": bool}}]}

The m/s/a/resp fields are space-joined token strings. A vocabulary file holds
one token per line; the line number is the id.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

PAD = "<pad>"
UNK = "<unk>"
EOS_M = "<eos_m>"
EOS_S = "<eos_s>"
EOS_A = "<eos_a>"
EOS_R = "<eos_r>"
SEP_INF = "<sep_inf>"
SEP_REQ = "<sep_req>"
GO = "<go>"

RESERVED = [PAD, UNK, EOS_M, EOS_S, EOS_A, EOS_R, SEP_INF, SEP_REQ, GO]

EOS_FOR = {"nlu": EOS_M, "dst": EOS_S, "dpl": EOS_A, "nlg": EOS_R}

MODULES = ("nlu", "dst", "dpl", "nlg")


class CorpusError(ValueError):
    """Malformed corpus content; message carries the offending line."""


class Vocab:
    """Frequency-ranked token table with a fixed reserved prefix."""

    def __init__(self, tokens: list[str]):
        if tokens[: len(RESERVED)] != RESERVED:
            raise CorpusError("vocabulary must start with the reserved tokens")
        self._tokens = list(tokens)
        self._ids = {t: i for i, t in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            raise CorpusError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    @property
    def unk_id(self) -> int:
        return self._ids[UNK]

    def encode(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    def encode_all(self, tokens: list[str]) -> list[int]:
        get = self._ids.get
        unk = self._ids[UNK]
        return [get(t, unk) for t in tokens]

    def decode(self, idx: int) -> str:
        return self._tokens[idx]

    def id_of(self, token: str) -> int | None:
        return self._ids.get(token)

    def save(self, path):
        Path(path).write_text("\n".join(self._tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)


@dataclass
class ModuleMask:
    nlu: bool = True
    dst: bool = True
    dpl: bool = True
    nlg: bool = True

    def __getitem__(self, module: str) -> bool:
        return getattr(self, module)

    def to_json(self):
        return {"nlu": self.nlu, "dst": self.dst, "dpl": self.dpl,
                "nlg": self.nlg}


@dataclass
class Goal:
    constraints: dict[str, str] = field(default_factory=dict)
    requests: list[str] = field(default_factory=list)
    solution: str | None = None

    def to_json(self):
        return {"constraints": dict(self.constraints),
                "requests": list(self.requests), "solution": self.solution}


@dataclass
class DialogTurn:
    """One exchange with per-module annotations and their presence mask."""

    user: list[str]
    semantics: list[str] | None = None   # user intent + slot values ("m")
    state: list[str] | None = None       # constraints <sep_req> requests ("s")
    acts: list[str] | None = None        # system acts + slots ("a")
    response: list[str] | None = None    # delexicalized response ("resp")
    mask: ModuleMask = field(default_factory=ModuleMask)

    _FIELD_FOR = {"nlu": "semantics", "dst": "state", "dpl": "acts",
                  "nlg": "response"}

    def annotation(self, module: str) -> list[str] | None:
        return getattr(self, self._FIELD_FOR[module])


@dataclass
class Dialog:
    dialog_id: str
    turns: list[DialogTurn]
    goal: Goal | None = None


def state_summary(state: list[str] | None, acts: list[str] | None) -> list[str]:
    """Token form of the carried-over turn summary: state, acts, separators.

    The summary for turn 0 is the [GO] sentinel; it is reconstructible from
    the state and act sequences because neither contains its own EOS token.
    """
    out: list[str] = []
    if state is not None:
        out.extend(state)
        out.append(EOS_S)
    if acts is not None:
        out.extend(acts)
        out.append(EOS_A)
    return out if out else [GO]


def split_state(state: list[str]) -> tuple[list[str], list[str]]:
    """(constraint tokens, request tokens) halves of a state sequence."""
    if SEP_REQ in state:
        i = state.index(SEP_REQ)
        return state[:i], state[i + 1:]
    return list(state), []


# ---------------------------------------------------------------------------
# corpus file io


def _parse_tokens(value, line_no: int, name: str) -> list[str] | None:
    if value is None:
        return None
    if not isinstance(value, str):
        raise CorpusError(f"line {line_no}: field {name!r} must be a string")
    return value.split()


def _parse_turn(obj: dict, line_no: int, turn_no: int) -> DialogTurn:
    if "user" not in obj or not isinstance(obj["user"], str):
        raise CorpusError(f"line {line_no}: turn {turn_no} missing 'user'")
    mask_obj = obj.get("mask", {})
    mask = ModuleMask(**{m: bool(mask_obj.get(m, True)) for m in MODULES})
    fields = {}
    for key, name in (("m", "semantics"), ("s", "state"), ("a", "acts"),
                      ("resp", "response")):
        fields[name] = _parse_tokens(obj.get(key), line_no, key)
    turn = DialogTurn(user=obj["user"].split(), mask=mask, **fields)
    for module in MODULES:
        if mask[module] and turn.annotation(module) is None:
            key = {"nlu": "m", "dst": "s", "dpl": "a", "nlg": "resp"}[module]
            raise CorpusError(
                f"line {line_no}: turn {turn_no} has mask.{module}=true but "
                f"field {key!r} is absent"
            )
    if turn.state is not None:
        constraints, _ = split_state(turn.state)
        if len(constraints) != len(set(constraints)):
            raise CorpusError(
                f"line {line_no}: turn {turn_no} state repeats a constraint "
                f"token"
            )
    return turn


def _parse_goal(obj, line_no: int) -> Goal | None:
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise CorpusError(f"line {line_no}: 'goal' must be an object or null")
    return Goal(constraints=dict(obj.get("constraints", {})),
                requests=list(obj.get("requests", [])),
                solution=obj.get("solution"))


def load_corpus(path) -> list[Dialog]:
    dialogs: list[Dialog] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: malformed JSON: {exc}") from exc
            if "dialog_id" not in obj:
                raise CorpusError(f"line {line_no}: missing 'dialog_id'")
            turns_obj = obj.get("turns")
            if not turns_obj:
                raise CorpusError(f"line {line_no}: dialog needs >= 1 turn")
            turns = [_parse_turn(t, line_no, i + 1)
                     for i, t in enumerate(turns_obj)]
            dialogs.append(Dialog(dialog_id=str(obj["dialog_id"]), turns=turns,
                                  goal=_parse_goal(obj.get("goal"), line_no)))
    return dialogs


def _turn_to_json(turn: DialogTurn) -> dict:
    def join(tokens):
        return None if tokens is None else " ".join(tokens)

    return {"user": " ".join(turn.user), "m": join(turn.semantics),
            "s": join(turn.state), "a": join(turn.acts),
            "resp": join(turn.response), "mask": turn.mask.to_json()}


def save_corpus(dialogs: list[Dialog], path):
    with open(path, "w", encoding="utf-8") as fh:
        for d in dialogs:
            obj = {"dialog_id": d.dialog_id,
                   "goal": d.goal.to_json() if d.goal else None,
                   "turns": [_turn_to_json(t) for t in d.turns]}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# vocabulary and model inputs


def build_vocab(dialogs: list[Dialog], limit: int = 800) -> Vocab:
    """Frequency-ranked vocabulary capped at ``limit`` entries.

    Ties break lexicographically; masked annotations still count when the
    field is present.
    """
    if limit < len(RESERVED):
        raise CorpusError(f"vocab limit {limit} below reserved count "
                          f"{len(RESERVED)}")
    counts: Counter[str] = Counter()
    reserved = set(RESERVED)
    for d in dialogs:
        for t in d.turns:
            for tokens in (t.user, t.semantics, t.state, t.acts, t.response):
                if tokens:
                    counts.update(tok for tok in tokens if tok not in reserved)
    ranked = sorted(counts, key=lambda tok: (-counts[tok], tok))
    return Vocab(RESERVED + ranked[: limit - len(RESERVED)])


def make_turn_input(dialog: Dialog, t: int, source: str = "gold",
                    predicted=None) -> tuple[list[str], list[str], list[str]]:
    """Inputs for turn ``t`` (1-based): previous summary, previous response,
    current user utterance.

    With ``source="predicted"``, the previous turn's summary and response come
    from ``predicted`` (a sequence whose element t-2 exposes .state/.acts/
    .response token lists), the live-evaluation condition.
    """
    if not 1 <= t <= len(dialog.turns):
        raise IndexError(f"turn {t} out of range 1..{len(dialog.turns)}")
    user = list(dialog.turns[t - 1].user)
    if t == 1:
        return [GO], [GO], user
    if source == "gold":
        prev = dialog.turns[t - 2]
        summary = state_summary(prev.state, prev.acts)
        resp = list(prev.response) if prev.response else [GO]
    elif source == "predicted":
        if predicted is None:
            raise ValueError("source='predicted' requires predicted turns")
        prev = predicted[t - 2]
        summary = state_summary(prev.state, prev.acts)
        resp = list(prev.response) if prev.response else [GO]
    else:
        raise ValueError(f"unknown source {source!r}")
    return summary, resp, user
