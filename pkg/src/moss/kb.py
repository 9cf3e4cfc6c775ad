"""Entity table, state-driven querying and the match-degree indicator.

The match degree is a one-hot vector over count buckets {0, 1, ..., >=dim-1}
that conditions the policy and generation decoders on how many entities the
current constraints select.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, concat
from .corpus import split_state

DEFAULT_KB_DIM = 6


class KbError(ValueError):
    pass


@dataclass
class KnowledgeBase:
    informable: list[str]
    requestable: list[str]
    entities: list[dict[str, str]]
    _value_slot: dict[str, str] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for i, e in enumerate(self.entities):
            missing = [s for s in self.informable if s not in e]
            if missing:
                raise KbError(f"entity {i} missing informable slots {missing}")
        # values resolve to the first informable slot that carries them
        for slot in self.informable:
            for e in self.entities:
                v = e[slot].lower()
                self._value_slot.setdefault(v, slot)

    def slot_of_value(self, token: str) -> str | None:
        return self._value_slot.get(token.lower())

    def save(self, path):
        obj = {"informable": self.informable, "requestable": self.requestable,
               "entities": self.entities}
        Path(path).write_text(json.dumps(obj, ensure_ascii=False, indent=1),
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "KnowledgeBase":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(informable=list(obj["informable"]),
                   requestable=list(obj["requestable"]),
                   entities=list(obj["entities"]))


@dataclass
class MatchDegree:
    """One-hot bucket over match counts; the last bucket is open-ended."""

    count: int
    dim: int = DEFAULT_KB_DIM

    @property
    def bucket(self) -> int:
        return min(self.count, self.dim - 1)

    @property
    def vector(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.float32)
        v[self.bucket] = 1.0
        return v


def state_to_query(state: list[str], kb: KnowledgeBase) -> dict[str, str]:
    """Constraint tokens of a decoded state mapped onto informable slots.

    Unknown tokens are skipped and only the first value per slot is kept, so
    malformed states degrade to broader queries instead of failing.
    """
    constraints, _ = split_state(state)
    query: dict[str, str] = {}
    for token in constraints:
        slot = kb.slot_of_value(token)
        if slot is not None and slot not in query:
            query[slot] = token.lower()
    return query


def condition_embedding(token_embedding: Tensor, degree: MatchDegree) -> Tensor:
    """Append the match-degree one-hot to a token embedding.

    The indicator is constant for the turn, so no gradient flows into it.
    """
    tail = Tensor(degree.vector.astype(token_embedding.data.dtype))
    return concat([token_embedding, tail])


def query(kb: KnowledgeBase, q: dict[str, str],
          dim: int = DEFAULT_KB_DIM) -> tuple[list[dict], MatchDegree]:
    unknown = [s for s in q if s not in kb.informable]
    if unknown:
        raise KbError(f"query uses unknown slots {unknown}; informable slots "
                      f"are {kb.informable}")
    matches = [e for e in kb.entities
               if all(e[s].lower() == v.lower() for s, v in q.items())]
    return matches, MatchDegree(count=len(matches), dim=dim)
