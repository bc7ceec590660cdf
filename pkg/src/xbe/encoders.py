"""Toy pre-LN transformer encoders for sentences and KG triples."""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import tensor as tn
from .tensor import Tensor

Span = Tuple[int, int]


@dataclass(frozen=True)
class EncoderConfig:
    depth: int = 6
    width: int = 64
    heads: int = 4
    ffn_mult: int = 4
    max_len: int = 64
    vocab_size: int = 0

    def validate(self, kind: str = "text") -> None:
        if self.depth < 1:
            raise ValueError(f"encoders: depth must be >= 1, got {self.depth}")
        if self.width < 1 or self.width % self.heads:
            raise ValueError(f"encoders: width {self.width} not divisible by heads {self.heads}")
        if self.ffn_mult < 1:
            raise ValueError("encoders: ffn_mult must be >= 1")
        if kind == "kg" and self.max_len < 3:
            raise ValueError("encoders: KG encoder needs max_len >= 3")
        if self.vocab_size < 1:
            raise ValueError("encoders: vocab_size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TokenizedSentence:
    ids: np.ndarray
    head: Span
    tail: Span

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        n = len(self.ids)
        for name, (a, b) in (("head", self.head), ("tail", self.tail)):
            if not 0 <= a < b <= n:
                raise ValueError(f"encoders: {name} span [{a},{b}) invalid for length {n}")
        (a1, b1), (a2, b2) = self.head, self.tail
        if a1 < b2 and a2 < b1:
            raise ValueError(f"encoders: head span {self.head} overlaps tail span {self.tail}")


@dataclass(frozen=True)
class KgTriple:
    head: int
    relation: int
    tail: int


def init_encoder_params(prefix: str, cfg: EncoderConfig, n_positions: int,
                        rng: np.random.Generator) -> Dict[str, Tensor]:
    d, f = cfg.width, cfg.width * cfg.ffn_mult
    w_std = 1.0 / np.sqrt(d)

    def p(name, arr):
        return name, Tensor(arr, requires_grad=True, name=f"{prefix}.{name}")

    items = [
        p("tok_emb", rng.normal(0.0, 0.02, (cfg.vocab_size, d))),
        p("pos_emb", rng.normal(0.0, 0.02, (n_positions, d))),
    ]
    for i in range(cfg.depth):
        L = f"layer{i + 1}"
        items += [
            p(f"{L}.ln1.g", np.ones(d)), p(f"{L}.ln1.b", np.zeros(d)),
            p(f"{L}.wq", rng.normal(0.0, w_std, (d, d))), p(f"{L}.bq", np.zeros(d)),
            p(f"{L}.wk", rng.normal(0.0, w_std, (d, d))), p(f"{L}.bk", np.zeros(d)),
            p(f"{L}.wv", rng.normal(0.0, w_std, (d, d))), p(f"{L}.bv", np.zeros(d)),
            p(f"{L}.wo", rng.normal(0.0, w_std / np.sqrt(2 * cfg.depth), (d, d))), p(f"{L}.bo", np.zeros(d)),
            p(f"{L}.ln2.g", np.ones(d)), p(f"{L}.ln2.b", np.zeros(d)),
            p(f"{L}.w1", rng.normal(0.0, w_std, (d, f))), p(f"{L}.b1", np.zeros(f)),
            p(f"{L}.w2", rng.normal(0.0, 1.0 / np.sqrt(f) / np.sqrt(2 * cfg.depth), (f, d))),
            p(f"{L}.b2", np.zeros(d)),
        ]
    items += [p("ln_f.g", np.ones(d)), p("ln_f.b", np.zeros(d))]
    return {f"{prefix}.{k}": v for k, v in items}


class TransformerEncoder:
    """Stack of pre-LN blocks reading parameters from a shared dict.

    The last layer's output passes through a final layer norm, so the last
    hidden state returned by :meth:`layer` is already normalised.
    """

    def __init__(self, cfg: EncoderConfig, params: Dict[str, Tensor], prefix: str):
        self.cfg = cfg
        self.params = params
        self.prefix = prefix
        # set by XbeModel.dropout_active during training
        self.dropout_rate = 0.0
        self.dropout_rng: Optional[np.random.Generator] = None

    def _drop(self, x: Tensor) -> Tensor:
        return tn.dropout(x, self.dropout_rate, self.dropout_rng)

    def _p(self, name: str) -> Tensor:
        return self.params[f"{self.prefix}.{name}"]

    def embed(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.cfg.vocab_size):
            bad = ids[(ids < 0) | (ids >= self.cfg.vocab_size)][0]
            raise IndexError(f"encoders: token id {int(bad)} outside vocabulary of size {self.cfg.vocab_size}")
        n = ids.shape[-1]
        pos = self._p("pos_emb")
        if n > pos.shape[0]:
            raise ValueError(f"encoders: sequence length {n} exceeds max_len {pos.shape[0]}")
        return tn.embedding(self._p("tok_emb"), ids) + tn.getitem(pos, slice(0, n))

    def attention(self, x: Tensor, layer: int, mask: Optional[np.ndarray],
                  record: Optional[list] = None) -> Tensor:
        L = f"layer{layer}"
        B, N, d = x.shape
        h = self.cfg.heads
        dh = d // h

        def heads(t):
            return tn.transpose(tn.reshape(t, (B, N, h, dh)), (0, 2, 1, 3))

        q = heads(x @ self._p(f"{L}.wq") + self._p(f"{L}.bq"))
        k = heads(x @ self._p(f"{L}.wk") + self._p(f"{L}.bk"))
        v = heads(x @ self._p(f"{L}.wv") + self._p(f"{L}.bv"))
        scores = tn.scale(q @ tn.transpose(k), 1.0 / np.sqrt(dh))
        key_mask = None if mask is None else mask[:, None, None, :]
        att = tn.softmax(scores, axis=-1, mask=key_mask)
        if record is not None:
            record.append(att.data)
        ctx = tn.reshape(tn.transpose(att @ v, (0, 2, 1, 3)), (B, N, d))
        return ctx @ self._p(f"{L}.wo") + self._p(f"{L}.bo")

    def layer(self, x: Tensor, i: int, mask: Optional[np.ndarray] = None,
              record: Optional[list] = None) -> Tensor:
        """Apply block ``i`` (1-based)."""
        L = f"layer{i}"
        if i == 1:
            x = self._drop(x)
        a = tn.layer_norm(x, self._p(f"{L}.ln1.g"), self._p(f"{L}.ln1.b"))
        x = x + self._drop(self.attention(a, i, mask, record))
        f = tn.layer_norm(x, self._p(f"{L}.ln2.g"), self._p(f"{L}.ln2.b"))
        f = tn.relu(f @ self._p(f"{L}.w1") + self._p(f"{L}.b1")) @ self._p(f"{L}.w2") + self._p(f"{L}.b2")
        x = x + self._drop(f)
        if i == self.cfg.depth:
            x = tn.layer_norm(x, self._p("ln_f.g"), self._p("ln_f.b"))
        return x

    def run(self, ids: np.ndarray, mask: Optional[np.ndarray] = None,
            record: Optional[list] = None) -> List[Tensor]:
        x = self.embed(ids)
        states = []
        for i in range(1, self.cfg.depth + 1):
            x = self.layer(x, i, mask, record)
            states.append(x)
        return states


def pad_sentences(sents: List[TokenizedSentence], pad_id: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    n = max(len(s.ids) for s in sents)
    ids = np.full((len(sents), n), pad_id, dtype=np.int64)
    mask = np.zeros((len(sents), n), dtype=bool)
    for j, s in enumerate(sents):
        ids[j, : len(s.ids)] = s.ids
        mask[j, : len(s.ids)] = True
    return ids, mask


def encode_text_layers(model, sent: TokenizedSentence) -> List[Tensor]:
    """Per-layer hidden states ``S_i`` (each N x d) of one sentence."""
    if len(sent.ids) > model.config.text.max_len:
        raise ValueError(f"encoders: sentence length {len(sent.ids)} exceeds max_len")
    states = model.text_encoder.run(sent.ids[None, :])
    return [tn.getitem(s, 0) for s in states]


def encode_kg_layers(model, triple: KgTriple) -> List[Tensor]:
    """Per-layer hidden states ``T_i`` (each 3 x d) of one triple."""
    ids = model.check_triple(triple)
    states = model.kg_encoder.run(ids[None, :])
    return [tn.getitem(s, 0) for s in states]


def sentence_summary(s_last: Tensor, head: Span, tail: Span) -> Tensor:
    """``[h_e1; h_e2; h_mean; h_max]`` for a single N x d state.

    Entities are represented by the first token of their span (the start
    marker when markers are in use).
    """
    n = s_last.shape[0]
    for name, (a, b) in (("head", head), ("tail", tail)):
        if not 0 <= a < b <= n:
            raise ValueError(f"encoders: empty or invalid {name} span [{a},{b}) for length {n}")
    return tn.concat([
        tn.getitem(s_last, head[0]),
        tn.getitem(s_last, tail[0]),
        tn.pool(s_last, "mean"),
        tn.pool(s_last, "max"),
    ], axis=-1)


def batch_summary(s_last: Tensor, mask: np.ndarray, heads: np.ndarray, tails: np.ndarray) -> Tensor:
    """Batched :func:`sentence_summary` over padded states ``B x N x d``."""
    rows = np.arange(s_last.shape[0])
    return tn.concat([
        tn.getitem(s_last, (rows, heads)),
        tn.getitem(s_last, (rows, tails)),
        tn.pool(s_last, "mean", mask),
        tn.pool(s_last, "max", mask),
    ], axis=-1)


def kg_mask_logits(model, t_last: Tensor, position: int) -> Tensor:
    """Scores over the KG vocabulary from the state at ``position``.

    The output projection is tied to the KG token embedding table.
    """
    if position not in (0, 1, 2):
        raise ValueError(f"encoders: triple position {position} out of range")
    h = tn.getitem(t_last, (Ellipsis, position, slice(None)))
    emb = model.params["kg.tok_emb"]
    squeeze = h.ndim == 1
    if squeeze:
        h = tn.reshape(h, (1, -1))
    out = h @ tn.transpose(emb) + model.params["kg.out_bias"]
    return tn.reshape(out, (-1,)) if squeeze else out
