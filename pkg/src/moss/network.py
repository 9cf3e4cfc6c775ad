"""The dialog network: shared bidirectional GRU encoder, four chained
attention+copy decoders, and the plug-and-play wiring between them.

Instances differ in which decoders exist. Removing a decoder rewires its
downstream neighbours: the next present module initializes from the nearest
upstream hidden state (ultimately the encoder's final state) and drops the
removed module's states from its attention memory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import json
import numpy as np

from .autodiff import (GruWeights, ParameterStore, Tensor, add,
                       additive_attention, affine, concat, dropout, embed_row,
                       gru_cell, matmul, matvec, mixed_softmax_nll,
                       stack_rows, tanh, transpose)
from .corpus import (EOS_FOR, GO, PAD, Dialog, DialogTurn, Vocab,
                     state_summary)
from .kb import KnowledgeBase, MatchDegree, condition_embedding, query, \
    state_to_query

INSTANCE_NAMES = ("all", "wo_nlu", "wo_dpl", "wo_nlu_dpl")

DEFAULT_MAX_LEN = {"m": 40, "s": 40, "a": 40, "r": 60}

_LEN_KEY = {"nlu": "m", "dst": "s", "dpl": "a", "nlg": "r"}


class ContractError(RuntimeError):
    pass


@dataclass
class FrameworkConfig:
    """Which modules exist plus the network dimensions.

    State tracking and generation are always present; understanding and
    policy are removable.
    """

    has_nlu: bool = True
    has_dpl: bool = True
    d_emb: int = 50
    d_hid: int = 50
    vocab_size: int = 800
    kb_dim: int = 6
    dropout: float = 0.5
    max_len: dict = field(default_factory=lambda: dict(DEFAULT_MAX_LEN))
    seed: int = 0
    # Alternative reading of the generation module's policy conditioning:
    # attend over policy decoder hidden states instead of embedded act tokens.
    nlg_attends_act_hidden: bool = False

    def __post_init__(self):
        for name in ("d_emb", "d_hid", "vocab_size", "kb_dim"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")

    @property
    def modules(self) -> list[str]:
        mods = []
        if self.has_nlu:
            mods.append("nlu")
        mods.append("dst")
        if self.has_dpl:
            mods.append("dpl")
        mods.append("nlg")
        return mods

    @classmethod
    def instance(cls, name: str, **kwargs) -> "FrameworkConfig":
        if name not in INSTANCE_NAMES:
            raise ContractError(f"unknown instance {name!r}; expected one of "
                                f"{INSTANCE_NAMES}")
        return cls(has_nlu=name in ("all", "wo_dpl"),
                   has_dpl=name in ("all", "wo_nlu"), **kwargs)

    def to_json(self) -> dict:
        return {"has_nlu": self.has_nlu, "has_dpl": self.has_dpl,
                "d_emb": self.d_emb, "d_hid": self.d_hid,
                "vocab_size": self.vocab_size, "kb_dim": self.kb_dim,
                "dropout": self.dropout, "max_len": dict(self.max_len),
                "seed": self.seed,
                "nlg_attends_act_hidden": self.nlg_attends_act_hidden}

    @classmethod
    def from_json(cls, obj: dict) -> "FrameworkConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ContractError(f"unknown config keys {sorted(unknown)}")
        return cls(**obj)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "FrameworkConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass
class EncoderStates:
    """Per-token encoder outputs for the three input segments."""

    summary: list[Tensor]
    resp: list[Tensor]
    user: list[Tensor]
    final: Tensor


@dataclass
class DecodeResult:
    """One decoder pass: emitted tokens, hidden states, step distributions.

    ``tokens`` includes the closing EOS when one was emitted; ``content``
    strips it. ``step_probs`` are jointly normalized over the vocabulary
    followed by the copy positions (``copy_tokens``).
    """

    module: str
    tokens: list[str]
    hidden: list[Tensor]
    step_probs: list[np.ndarray]
    copy_tokens: list[str]
    h0: Tensor
    losses: list[Tensor] | None = None
    truncated: bool = False

    @property
    def content(self) -> list[str]:
        eos = EOS_FOR[self.module]
        if self.tokens and self.tokens[-1] == eos:
            return self.tokens[:-1]
        return list(self.tokens)

    @property
    def last_hidden(self) -> Tensor:
        return self.hidden[-1] if self.hidden else self.h0


@dataclass
class TurnOutput:
    semantics: DecodeResult | None
    state: DecodeResult
    acts: DecodeResult | None
    response: DecodeResult
    degree: MatchDegree
    wiring: dict
    inputs: tuple = ()  # (summary, resp, user) token lists fed to the encoder

    def result(self, module: str) -> DecodeResult | None:
        return {"nlu": self.semantics, "dst": self.state, "dpl": self.acts,
                "nlg": self.response}[module]


@dataclass
class TurnPrediction:
    """Decoded per-module token lists for one turn (EOS stripped)."""

    semantics: list[str] | None
    state: list[str]
    acts: list[str] | None
    response: list[str]
    degree_bucket: int


@dataclass
class DialogPrediction:
    dialog_id: str
    source: str
    turns: list[TurnPrediction]


def _softmax(z: np.ndarray) -> np.ndarray:
    zs = z - z.max()
    e = np.exp(zs)
    return e / e.sum()


class MossModel:
    """A framework instance bound to a vocabulary and a parameter store."""

    def __init__(self, config: FrameworkConfig, vocab: Vocab,
                 store: ParameterStore | None = None, dtype=np.float32):
        if config.vocab_size != len(vocab):
            raise ContractError(f"config.vocab_size={config.vocab_size} but "
                                f"vocabulary has {len(vocab)} entries")
        self.config = config
        self.vocab = vocab
        self.store = store if store is not None else self._build_store(dtype)
        self.dtype = self.store[self.store.names()[0]].data.dtype
        self._gru_cache: dict[str, GruWeights] = {}
        self._pad_id = vocab.encode(PAD)
        self._go_id = vocab.encode(GO)

    # -- parameters ----------------------------------------------------------

    def _add_gru(self, store, prefix, d_in, d_h):
        for gate in ("z", "r", "h"):
            store.add(f"{prefix}.w_{gate}", (d_h, d_in))
            store.add(f"{prefix}.u_{gate}", (d_h, d_h))
            store.add(f"{prefix}.b_{gate}", (d_h,), init="zeros")

    def _build_store(self, dtype) -> ParameterStore:
        cfg = self.config
        store = ParameterStore(seed=cfg.seed, dtype=dtype)
        store.add("encoder.embedding.table", (cfg.vocab_size, cfg.d_emb))
        self._add_gru(store, "encoder.fwd", cfg.d_emb, cfg.d_hid)
        self._add_gru(store, "encoder.bwd", cfg.d_emb, cfg.d_hid)
        for mod in cfg.modules:
            d_in = cfg.d_emb + (cfg.kb_dim if mod in ("dpl", "nlg") else 0)
            p = f"decoder.{mod}"
            self._add_gru(store, f"{p}.gru", d_in, cfg.d_hid)
            store.add(f"{p}.attn.w_query", (cfg.d_hid, cfg.d_hid))
            store.add(f"{p}.attn.w_memory", (cfg.d_hid, cfg.d_hid))
            store.add(f"{p}.attn.v", (cfg.d_hid,))
            store.add(f"{p}.copy.w", (cfg.d_hid, cfg.d_hid))
            store.add(f"{p}.head.w_comb", (cfg.d_hid, 2 * cfg.d_hid))
            store.add(f"{p}.head.b_comb", (cfg.d_hid,), init="zeros")
            store.add(f"{p}.head.w_out", (cfg.vocab_size, cfg.d_hid))
            store.add(f"{p}.head.b_out", (cfg.vocab_size,), init="zeros")
        if cfg.has_dpl and not cfg.nlg_attends_act_hidden:
            store.add("decoder.nlg.act_memory.w",
                      (cfg.d_hid, cfg.d_emb + cfg.kb_dim))
            store.add("decoder.nlg.act_memory.b", (cfg.d_hid,), init="zeros")
        return store

    def _gru(self, prefix: str) -> GruWeights:
        w = self._gru_cache.get(prefix)
        if w is None:
            s = self.store
            w = GruWeights(*(s[f"{prefix}.{n}_{g}"] for g in ("z", "r", "h")
                             for n in ("w", "u", "b")))
            self._gru_cache[prefix] = w
        return w

    def _zeros(self, n: int) -> Tensor:
        return Tensor(np.zeros(n, dtype=self.dtype))

    # -- encoder ---------------------------------------------------------------

    def encode(self, summary_tokens: list[str], resp_tokens: list[str],
               user_tokens: list[str]) -> EncoderStates:
        """Bidirectional pass over the concatenated inputs; per-token state is
        the sum of the two directions."""
        cfg = self.config
        tokens = summary_tokens + resp_tokens + user_tokens
        if not tokens:
            raise ContractError("encoder inputs are empty")
        ids = self.vocab.encode_all(tokens)
        if max(ids) >= cfg.vocab_size:
            raise ContractError(f"token id {max(ids)} outside vocabulary of "
                                f"size {cfg.vocab_size}")
        table = self.store["encoder.embedding.table"]
        embs = [embed_row(table, i) for i in ids]
        fwd_w = self._gru("encoder.fwd")
        bwd_w = self._gru("encoder.bwd")
        h = self._zeros(cfg.d_hid)
        fwd = []
        for e in embs:
            h = gru_cell(e, h, fwd_w)
            fwd.append(h)
        h = self._zeros(cfg.d_hid)
        bwd = [None] * len(embs)
        for i in range(len(embs) - 1, -1, -1):
            h = gru_cell(embs[i], h, bwd_w)
            bwd[i] = h
        states = [add(f, b) for f, b in zip(fwd, bwd)]
        n_b, n_r = len(summary_tokens), len(resp_tokens)
        return EncoderStates(summary=states[:n_b],
                             resp=states[n_b:n_b + n_r],
                             user=states[n_b + n_r:],
                             final=states[-1])

    # -- decoder ---------------------------------------------------------------

    def decode_module(self, module: str, memory: list[Tensor],
                      mem_tokens: list[str], h0: Tensor,
                      degree: MatchDegree | None = None,
                      teacher: list[str] | None = None,
                      train: bool = False,
                      rng: np.random.Generator | None = None,
                      copy_enabled: bool = True,
                      max_len: int | None = None) -> DecodeResult:
        """Run one module's decoder over its attention memory.

        With ``teacher`` the decoder is forced on the gold sequence and
        records per-step losses; otherwise it free-runs greedily until the
        module's EOS token or the length cap. ``degree`` conditions every
        input embedding on the KB match indicator (policy and generation
        only). Dropout regularizes the pre-projection output; dropping the
        input embeddings as well starves the copy attention at these widths.
        """
        cfg = self.config
        if module not in cfg.modules:
            raise ContractError(f"module {module!r} absent from this instance "
                                f"({cfg.modules})")
        if degree is not None and module not in ("dpl", "nlg"):
            raise ContractError(f"KB conditioning is not defined for {module}")
        if not memory:
            raise ContractError(f"{module} decoder needs non-empty memory")
        if len(memory) != len(mem_tokens):
            raise ContractError("memory states and memory tokens differ in "
                                "length")
        if max_len is None:
            max_len = cfg.max_len[_LEN_KEY[module]]
        rng = rng if rng is not None else np.random.default_rng(0)

        p = f"decoder.{module}"
        s = self.store
        gru_w = self._gru(f"{p}.gru")
        w_query, w_mem, v = s[f"{p}.attn.w_query"], s[f"{p}.attn.w_memory"], \
            s[f"{p}.attn.v"]
        w_comb, b_comb = s[f"{p}.head.w_comb"], s[f"{p}.head.b_comb"]
        w_out, b_out = s[f"{p}.head.w_out"], s[f"{p}.head.b_out"]
        table = s["encoder.embedding.table"]
        vocab = self.vocab
        eos = EOS_FOR[module]
        rate = cfg.dropout

        mem_mat = stack_rows(memory)
        mem_proj = matmul(mem_mat, transpose(w_mem))
        copy_proj = None
        copy_positions: dict[str, list[int]] = {}
        if copy_enabled:
            copy_proj = tanh(matmul(mem_mat, transpose(s[f"{p}.copy.w"])))
            for i, tok in enumerate(mem_tokens):
                copy_positions.setdefault(tok, []).append(i)

        n_vocab = cfg.vocab_size
        targets = None if teacher is None else list(teacher) + [eos]

        tokens: list[str] = []
        hidden: list[Tensor] = []
        probs: list[np.ndarray] = []
        losses: list[Tensor] | None = [] if teacher is not None else None
        truncated = False

        h = h0
        prev_id = self._go_id
        step = 0
        while True:
            x = embed_row(table, prev_id)
            if degree is not None:
                x = condition_embedding(x, degree)
            h = gru_cell(x, h, gru_w)
            ctx, _ = additive_attention(h, mem_mat, mem_proj, w_query, v)
            comb = tanh(affine(w_comb, concat([h, ctx]), b_comb))
            comb = dropout(comb, rate, rng, training=train)

            if targets is not None:
                target = targets[step]
                gen_logits = affine(w_out, comb, b_out)
                copy_sc = matvec(copy_proj, h) if copy_enabled else None
                group = self._target_group(target, copy_positions, n_vocab)
                loss, pvec = mixed_softmax_nll(gen_logits, copy_sc, group)
                losses.append(loss)
                token = target
            else:
                gen = w_out.data @ comb.data + b_out.data
                if copy_enabled:
                    cp = copy_proj.data @ h.data
                    pvec = _softmax(np.concatenate([gen, cp]))
                    token = self._argmax_token(pvec, mem_tokens)
                else:
                    pvec = _softmax(gen)
                    token = self._argmax_token(pvec, [])

            tokens.append(token)
            hidden.append(h)
            probs.append(pvec)
            prev_id = vocab.encode(token)
            step += 1
            if targets is not None:
                if step >= len(targets):
                    break
            elif token == eos:
                break
            elif step >= max_len:
                truncated = True
                break

        return DecodeResult(module=module, tokens=tokens, hidden=hidden,
                            step_probs=probs, copy_tokens=list(mem_tokens)
                            if copy_enabled else [], h0=h0, losses=losses,
                            truncated=truncated)

    def _target_group(self, target: str, copy_positions: dict,
                      n_vocab: int) -> np.ndarray:
        """Joint-softmax indices whose mass counts as emitting ``target``.

        In-vocabulary targets combine their generation id with any matching
        copy positions; out-of-vocabulary targets are pure copy events and
        only degrade to UNK generation when nothing can be copied.
        """
        gen_id = self.vocab.id_of(target)
        pos = copy_positions.get(target, ())
        group = []
        if gen_id is not None and gen_id != self.vocab.unk_id:
            group.append(gen_id)
        group.extend(n_vocab + i for i in pos)
        if not group:
            group.append(self.vocab.unk_id)
        return np.asarray(group, dtype=np.intp)

    def _argmax_token(self, pvec: np.ndarray, mem_tokens: list[str]) -> str:
        """Greedy choice over surface forms, summing generate and copy mass
        for identical tokens."""
        vocab = self.vocab
        scores = pvec[: self.config.vocab_size].copy()
        oov: dict[str, float] = {}
        for i, tok in enumerate(mem_tokens):
            mass = pvec[self.config.vocab_size + i]
            gid = vocab.id_of(tok)
            if gid is None:
                oov[tok] = oov.get(tok, 0.0) + mass
            else:
                scores[gid] += mass
        # sentinels and UNK are never useful surface output
        scores[self._pad_id] = -1.0
        scores[self._go_id] = -1.0
        scores[vocab.unk_id] = -1.0
        best_id = int(scores.argmax())
        best_tok, best_p = vocab.decode(best_id), scores[best_id]
        if oov:
            tok, mass = max(oov.items(), key=lambda kv: kv[1])
            if mass > best_p:
                return tok
        return best_tok

    # -- turn and dialog level ---------------------------------------------------

    def forward_turn(self, summary_tokens: list[str], resp_tokens: list[str],
                     user_tokens: list[str], kb: KnowledgeBase,
                     teacher_turn: DialogTurn | None = None,
                     train: bool = False,
                     rng: np.random.Generator | None = None) -> TurnOutput:
        """One full pass over the module chain.

        ``teacher_turn`` enables teacher forcing for every module whose
        annotation mask is set; masked or unannotated modules free-run, and
        everything downstream consumes whatever hidden states they produced.
        """
        cfg = self.config
        es = self.encode(summary_tokens, resp_tokens, user_tokens)
        base_mem = es.summary + es.resp + es.user
        base_tokens = summary_tokens + resp_tokens + user_tokens
        wiring: dict[str, dict] = {}

        def teach(module):
            if teacher_turn is None or not teacher_turn.mask[module]:
                return None
            return teacher_turn.annotation(module)

        sem = None
        if cfg.has_nlu:
            wiring["nlu"] = {"h0": "encoder.final",
                             "memory": ["summary", "resp", "user"]}
            sem = self.decode_module("nlu", base_mem, base_tokens,
                                     h0=es.final, teacher=teach("nlu"),
                                     train=train, rng=rng)

        if cfg.has_nlu:
            dst_mem = base_mem + sem.hidden
            dst_tokens = base_tokens + sem.tokens
            dst_h0, dst_h0_label = sem.last_hidden, "nlu.last_hidden"
            dst_mem_labels = ["summary", "resp", "user", "nlu.hidden"]
        else:
            dst_mem, dst_tokens = base_mem, base_tokens
            dst_h0, dst_h0_label = es.final, "encoder.final"
            dst_mem_labels = ["summary", "resp", "user"]
        wiring["dst"] = {"h0": dst_h0_label, "memory": dst_mem_labels}
        state = self.decode_module("dst", dst_mem, dst_tokens, h0=dst_h0,
                                   teacher=teach("dst"), train=train, rng=rng)

        _, degree = query(kb, state_to_query(state.content, kb),
                          dim=cfg.kb_dim)

        acts = None
        if cfg.has_dpl:
            dpl_mem = es.resp + es.user + state.hidden
            dpl_tokens = resp_tokens + user_tokens + state.tokens
            wiring["dpl"] = {"h0": "dst.last_hidden",
                             "memory": ["resp", "user", "dst.hidden"]}
            acts = self.decode_module("dpl", dpl_mem, dpl_tokens,
                                      h0=state.last_hidden, degree=degree,
                                      teacher=teach("dpl"), train=train,
                                      rng=rng)

        if cfg.has_dpl:
            if cfg.nlg_attends_act_hidden:
                act_mem = list(acts.hidden)
                act_label = "dpl.hidden"
            else:
                act_mem = [self._embed_act_token(tok, degree)
                           for tok in acts.tokens]
                act_label = "acts.embedded"
            nlg_mem = act_mem + es.resp + es.user
            nlg_tokens = acts.tokens + resp_tokens + user_tokens
            nlg_h0, nlg_h0_label = acts.last_hidden, "dpl.last_hidden"
            nlg_mem_labels = [act_label, "resp", "user"]
        else:
            nlg_mem = es.resp + es.user + state.hidden
            nlg_tokens = resp_tokens + user_tokens + state.tokens
            nlg_h0, nlg_h0_label = state.last_hidden, "dst.last_hidden"
            nlg_mem_labels = ["resp", "user", "dst.hidden"]
        wiring["nlg"] = {"h0": nlg_h0_label, "memory": nlg_mem_labels}
        response = self.decode_module("nlg", nlg_mem, nlg_tokens, h0=nlg_h0,
                                      degree=degree, teacher=teach("nlg"),
                                      train=train, rng=rng)

        return TurnOutput(semantics=sem, state=state, acts=acts,
                          response=response, degree=degree, wiring=wiring,
                          inputs=(list(summary_tokens), list(resp_tokens),
                                  list(user_tokens)))

    def _embed_act_token(self, token: str, degree: MatchDegree) -> Tensor:
        e = embed_row(self.store["encoder.embedding.table"],
                      self.vocab.encode(token))
        e = condition_embedding(e, degree)
        return tanh(affine(self.store["decoder.nlg.act_memory.w"], e,
                           self.store["decoder.nlg.act_memory.b"]))

    def run_dialog(self, kb: KnowledgeBase, dialog: Dialog,
                   source: str = "predicted", teacher: bool = False,
                   train: bool = False,
                   rng: np.random.Generator | None = None) -> list[TurnOutput]:
        """Turn-by-turn pass; the summary carried into turn t+1 comes from
        gold annotations (training) or the model's own outputs (evaluation).

        Gold inputs fall back to predictions for fields the dialog does not
        annotate, so partially annotated dialogs still roll forward.
        """
        if source not in ("gold", "predicted"):
            raise ContractError(f"unknown source {source!r}")
        cfg = self.config
        outputs: list[TurnOutput] = []
        for t, turn in enumerate(dialog.turns, start=1):
            if t == 1:
                summary, resp = [GO], [GO]
            else:
                prev_gold = dialog.turns[t - 2]
                prev_out = outputs[-1]
                state_toks = prev_out.state.content
                if source == "gold" and prev_gold.mask.dst \
                        and prev_gold.state is not None:
                    state_toks = prev_gold.state
                act_toks = None
                if cfg.has_dpl:
                    act_toks = prev_out.acts.content
                    if source == "gold" and prev_gold.mask.dpl \
                            and prev_gold.acts is not None:
                        act_toks = prev_gold.acts
                resp_toks = prev_out.response.content
                if source == "gold" and prev_gold.mask.nlg \
                        and prev_gold.response is not None:
                    resp_toks = prev_gold.response
                summary = state_summary(state_toks, act_toks)
                resp = list(resp_toks) if resp_toks else [GO]
            outputs.append(self.forward_turn(
                summary, resp, list(turn.user), kb,
                teacher_turn=turn if teacher else None, train=train, rng=rng))
        return outputs

    def predict_corpus(self, kb: KnowledgeBase,
                       dialogs: list[Dialog]) -> list[DialogPrediction]:
        """Free-running rollout over a corpus; gold states never feed back."""
        preds = []
        for d in dialogs:
            outs = self.run_dialog(kb, d, source="predicted", teacher=False,
                                   train=False)
            turns = [TurnPrediction(
                semantics=o.semantics.content if o.semantics else None,
                state=o.state.content,
                acts=o.acts.content if o.acts else None,
                response=o.response.content,
                degree_bucket=o.degree.bucket) for o in outs]
            preds.append(DialogPrediction(dialog_id=d.dialog_id,
                                          source="predicted", turns=turns))
        return preds

    # -- persistence -------------------------------------------------------------

    def save(self, ckpt_path, config_path=None):
        self.store.save(ckpt_path)
        if config_path is not None:
            self.config.save(config_path)

    @classmethod
    def load(cls, ckpt_path, config: FrameworkConfig,
             vocab: Vocab) -> "MossModel":
        store = ParameterStore.load(ckpt_path)
        return cls(config, vocab, store=store)
