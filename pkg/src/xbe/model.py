"""Cross-stitch bi-encoder assembly: forward pass, losses, bag inference, checkpoints."""
from __future__ import annotations

import contextlib
import json
import struct
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as tn
from .data import Bag, KgVocab, Sentence, TextVocab, NA
from .encoders import (EncoderConfig, KgTriple, TokenizedSentence, TransformerEncoder,
                       batch_summary, init_encoder_params, kg_mask_logits, pad_sentences)
from .tensor import Tensor
from .transe import TransETable, rht_feature
from .xstitch import GateTrace, XStitchParams, apply_xstitch, init_xstitch_params

ABLATIONS = ("no_xstitch", "no_kg_encoder", "no_text_encoder", "no_rht", "freeze_kg", "random_init_kg")


@dataclass
class XbeConfig:
    text: EncoderConfig = field(default_factory=EncoderConfig)
    kg: EncoderConfig = field(default_factory=EncoderConfig)
    n_relations: int = 5
    placements: Tuple[int, ...] = (4,)
    lambda_t: float = 1.0
    lambda_s: float = 1e-4
    gate_mode: str = "dynamic"
    gate_value: float = 0.5
    loss_weight: float = 1.0
    rht_dim: int = 32
    ablations: Tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        self.placements = tuple(sorted(int(p) for p in self.placements))
        self.ablations = tuple(sorted(set(self.ablations)))

    def has(self, switch: str) -> bool:
        return switch in self.ablations

    def validate(self) -> None:
        for a in self.ablations:
            if a not in ABLATIONS:
                raise ValueError(f"xbe-model: unknown ablation switch {a!r}")
        if not 0.0 < self.loss_weight <= 1.0:
            raise ValueError(f"xbe-model: loss weight w={self.loss_weight} must lie in (0, 1]")
        if self.has("no_kg_encoder") and self.has("no_text_encoder"):
            raise ValueError("xbe-model: at least one encoder must stay enabled")
        self.text.validate("text")
        self.kg.validate("kg")
        if self.text.width != self.kg.width:
            raise ValueError("xbe-model: text and KG widths must match")
        depth = min(self.text.depth, self.kg.depth)
        for p in self.placements:
            if not 1 <= p < depth:
                raise ValueError(f"xbe-model: placement {p}->{p + 1} outside encoder depth {depth}")
        if self.n_relations < 2:
            raise ValueError("xbe-model: need NA plus at least one relation")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["placements"] = list(self.placements)
        d["ablations"] = list(self.ablations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "XbeConfig":
        d = dict(d)
        d["text"] = EncoderConfig(**d["text"])
        d["kg"] = EncoderConfig(**d["kg"])
        d["placements"] = tuple(d.get("placements", ()))
        d["ablations"] = tuple(d.get("ablations", ()))
        return cls(**d)


class XbeModel:
    def __init__(self, config: XbeConfig, text_vocab: TextVocab, kg_vocab: KgVocab,
                 relations: Sequence[str], transe: Optional[TransETable] = None):
        if len(relations) != config.n_relations or relations[0] != NA:
            raise ValueError("xbe-model: relation inventory must start with NA and match n_relations")
        config.validate()
        if config.text.vocab_size != len(text_vocab) or config.kg.vocab_size != len(kg_vocab):
            raise ValueError("xbe-model: vocabulary sizes disagree with the encoder configs")
        self.config = config
        self.text_vocab = text_vocab
        self.kg_vocab = kg_vocab
        self.relations = list(relations)
        self.rel_index = {r: i for i, r in enumerate(self.relations)}
        self.transe = transe
        rng = np.random.default_rng(config.seed)
        d = config.text.width
        p: Dict[str, Tensor] = {}
        p.update(init_encoder_params("text", config.text, config.text.max_len, rng))
        p.update(init_encoder_params("kg", config.kg, 3, rng))
        p["kg.out_bias"] = Tensor(np.zeros(len(kg_vocab)), requires_grad=True, name="kg.out_bias")
        for i in config.placements:
            p.update(init_xstitch_params(f"xstitch{i}", d, rng))
        n_feat = 4 * d + config.rht_dim + 2 * d
        p["cls.w"] = Tensor(rng.normal(0.0, 1.0 / np.sqrt(n_feat), (n_feat, config.n_relations)),
                            requires_grad=True, name="cls.w")
        p["cls.b"] = Tensor(np.zeros(config.n_relations), requires_grad=True, name="cls.b")
        self.params = p
        self.text_encoder = TransformerEncoder(config.text, p, "text")
        self.kg_encoder = TransformerEncoder(config.kg, p, "kg")

    # ---- parameter groups --------------------------------------------------
    def kg_param_names(self) -> List[str]:
        return [n for n in self.params if n.startswith("kg.")]

    def trainable_names(self) -> List[str]:
        frozen = self.config.has("freeze_kg") or self.config.has("no_kg_encoder")
        skip_text = self.config.has("no_text_encoder")
        names = []
        for n in self.params:
            if frozen and n.startswith("kg."):
                continue
            if skip_text and n.startswith("text."):
                continue
            names.append(n)
        return names

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    @contextlib.contextmanager
    def dropout_active(self, rate: float, rng: np.random.Generator):
        """Enable encoder dropout for graph-recording passes inside the block."""
        encoders = (self.text_encoder, self.kg_encoder)
        for enc in encoders:
            enc.dropout_rate, enc.dropout_rng = rate, rng
        try:
            yield
        finally:
            for enc in encoders:
                enc.dropout_rate, enc.dropout_rng = 0.0, None

    @property
    def xstitch_active(self) -> bool:
        c = self.config
        return not (c.has("no_xstitch") or c.has("no_kg_encoder") or c.has("no_text_encoder"))

    def xstitch_params(self, layer: int) -> XStitchParams:
        c = self.config
        return XStitchParams.from_params(self.params, f"xstitch{layer}", lambda_t=c.lambda_t,
                                         lambda_s=c.lambda_s, gate_mode=c.gate_mode,
                                         gate_value=c.gate_value)

    # ---- input conversion --------------------------------------------------
    def tokenize(self, s: Sentence) -> TokenizedSentence:
        if len(s.tokens) > self.config.text.max_len:
            raise ValueError(f"xbe-model: sentence of {len(s.tokens)} tokens exceeds max_len")
        return TokenizedSentence(self.text_vocab.encode(s.tokens), s.head, s.tail)

    def masked_triple(self, e1: str, e2: str) -> KgTriple:
        try:
            return KgTriple(self.kg_vocab.stoi[e1], self.kg_vocab.mask_id, self.kg_vocab.stoi[e2])
        except KeyError as err:
            raise KeyError(f"xbe-model: entity {err.args[0]!r} not in the KG vocabulary") from None

    def check_triple(self, t: KgTriple) -> np.ndarray:
        v = self.kg_vocab
        if not (v.is_entity(t.head) and v.is_entity(t.tail)):
            raise ValueError(f"xbe-model: triple {t} has a non-entity id in an entity slot")
        if not (v.is_relation(t.relation) or t.relation == v.mask_id):
            raise ValueError(f"xbe-model: triple {t} has an invalid relation slot")
        return np.array([t.head, t.relation, t.tail], dtype=np.int64)

    def rht(self, e1_id: int, e2_id: int) -> np.ndarray:
        if self.config.has("no_rht") or self.transe is None:
            return np.zeros(self.config.rht_dim)
        n_rel = len(self.kg_vocab.relations)
        return rht_feature(self.transe, e1_id - n_rel, e2_id - n_rel)

    # ---- forward -----------------------------------------------------------
    def forward_pairs(self, sents: Sequence[TokenizedSentence], triples: Sequence[KgTriple],
                      trace: Optional[GateTrace] = None, example_ids=None,
                      attention: Optional[dict] = None) -> Tuple[Tensor, Optional[Tensor]]:
        """Relation logits ``[P, R]`` and KG mask logits ``[P, |V|]`` for P pairs."""
        if len(sents) != len(triples) or not sents:
            raise ValueError("xbe-model: need equally many (>0) sentences and triples")
        c = self.config
        use_text = not c.has("no_text_encoder")
        use_kg = not c.has("no_kg_encoder")
        d = c.text.width
        P = len(sents)
        ids, mask = pad_sentences(list(sents), pad_id=self.text_vocab.stoi["[PAD]"])
        if ids.shape[1] > c.text.max_len:
            raise ValueError(f"xbe-model: sentence length {ids.shape[1]} exceeds max_len {c.text.max_len}")
        kg_ids = np.stack([self.check_triple(t) for t in triples])
        text_rec = attention.setdefault("text", []) if attention is not None else None
        kg_rec = attention.setdefault("kg", []) if attention is not None else None

        S = self.text_encoder.embed(ids) if use_text else None
        T = self.kg_encoder.embed(kg_ids) if use_kg else None
        stitch = set(c.placements) if self.xstitch_active else set()
        for i in range(1, max(c.text.depth, c.kg.depth) + 1):
            if use_text and i <= c.text.depth:
                S = self.text_encoder.layer(S, i, mask, text_rec)
            if use_kg and i <= c.kg.depth:
                T = self.kg_encoder.layer(T, i, None, kg_rec)
            if i in stitch:
                S, T = apply_xstitch(S, T, self.xstitch_params(i), mask, trace=trace, layer=i,
                                     example_ids=example_ids)

        if use_text:
            heads = np.array([s.head[0] for s in sents])
            tails = np.array([s.tail[0] for s in sents])
            s_feat = batch_summary(S, mask, heads, tails)
        else:
            s_feat = Tensor(np.zeros((P, 4 * d)))
        rht = Tensor(np.stack([self.rht(t.head, t.tail) for t in triples]))
        if use_kg:
            xe1 = tn.getitem(T, (slice(None), 0))
            xe2 = tn.getitem(T, (slice(None), 2))
        else:
            xe1 = xe2 = Tensor(np.zeros((P, d)))
        feat = tn.concat([s_feat, rht, xe1, xe2], axis=-1)
        logits = feat @ self.params["cls.w"] + self.params["cls.b"]
        kg_logits = kg_mask_logits(self, T, 1) if use_kg else None
        return logits, kg_logits

    def forward_pair(self, sent: TokenizedSentence, masked: KgTriple,
                     trace: Optional[GateTrace] = None):
        """Single pairing; returns ``(relation logits, KG logits, trace)``."""
        trace = trace if trace is not None else GateTrace()
        logits, kg_logits = self.forward_pairs([sent], [masked], trace=trace)
        kg_out = tn.getitem(kg_logits, 0) if kg_logits is not None else Tensor(np.zeros(len(self.kg_vocab)))
        return tn.getitem(logits, 0), kg_out, trace

    def bag_inputs(self, bags: Sequence[Bag]):
        sents, triples, owner = [], [], []
        for j, b in enumerate(bags):
            t = self.masked_triple(b.e1, b.e2)
            for s in b.sentences:
                sents.append(self.tokenize(s))
                triples.append(t)
                owner.append(j)
        return sents, triples, np.array(owner)

    def batch_loss(self, bags: Sequence[Bag], weight: Optional[float] = None) -> Tuple[Tensor, float, float]:
        """Joint loss over a batch of bags; returns ``(L, L_RE, L_KG)``."""
        w = self.config.loss_weight if weight is None else weight
        sents, triples, owner = self.bag_inputs(bags)
        logits, kg_logits = self.forward_pairs(sents, triples)
        targets = np.array([self.rel_index[bags[j].relation] for j in owner])
        l_re = nll(logits, targets)
        total = l_re
        l_kg_val = 0.0
        if kg_logits is not None:
            # one KG term per non-NA bag: average over that bag's pairings
            weights = np.zeros(len(owner))
            kg_targets = np.zeros(len(owner), dtype=np.int64)
            for j, b in enumerate(bags):
                if b.relation == NA:
                    continue
                rows = owner == j
                weights[rows] = 1.0 / rows.sum()
                kg_targets[rows] = self.kg_vocab.stoi[b.relation]
            if weights.any():
                l_kg = nll(kg_logits, kg_targets, weights)
                total = loss_total(l_re, l_kg, w)
                l_kg_val = l_kg.item()
        return total, l_re.item(), l_kg_val


def nll(logits: Tensor, targets: np.ndarray, weights: Optional[np.ndarray] = None) -> Tensor:
    """Summed (optionally weighted) negative log-likelihood of row targets."""
    lp = tn.log_softmax(logits, axis=-1)
    picked = tn.getitem(lp, (np.arange(len(targets)), np.asarray(targets)))
    if weights is not None:
        picked = tn.mul(picked, np.asarray(weights, dtype=float))
    return tn.neg(tn.sum(picked))


def loss_re(logits: Tensor, target: int) -> Tensor:
    """``-sum_i log softmax(logits_i)[target]`` over the sentences of one bag."""
    if logits.ndim == 1:
        logits = tn.reshape(logits, (1, -1))
    if logits.shape[0] == 0:
        raise ValueError("xbe-model: empty bag")
    if not 0 <= target < logits.shape[1]:
        raise IndexError(f"xbe-model: target relation {target} out of range")
    return nll(logits, np.full(logits.shape[0], target))


def loss_kg(kg_logits: Tensor, relation_id: int) -> Tensor:
    """``-log softmax(kg_logits)[r]``; several rows are averaged."""
    if kg_logits.ndim == 1:
        kg_logits = tn.reshape(kg_logits, (1, -1))
    if not 0 <= relation_id < kg_logits.shape[1]:
        raise IndexError(f"xbe-model: relation id {relation_id} outside the KG vocabulary")
    n = kg_logits.shape[0]
    return nll(kg_logits, np.full(n, relation_id), np.full(n, 1.0 / n))


def loss_total(l_re, l_kg, w: float):
    """``L_RE + w * L_KG`` for tensors or plain floats."""
    if not 0.0 < w <= 1.0:
        raise ValueError(f"xbe-model: loss weight w={w} must lie in (0, 1]")
    weighted = tn.scale(l_kg, w) if isinstance(l_kg, Tensor) else w * l_kg
    return l_re + weighted


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _canonical_order(sents: Sequence[TokenizedSentence]) -> List[int]:
    keys = [(tuple(s.ids.tolist()), s.head, s.tail) for s in sents]
    return sorted(range(len(sents)), key=lambda i: keys[i])


def predict_bag(model: XbeModel, sentences: Sequence[Sentence], e1: str, e2: str,
                trace: Optional[GateTrace] = None) -> np.ndarray:
    """Mean of per-sentence relation distributions for one entity pair.

    Sentences are put in a canonical order first, so the result does not
    depend on how the bag was shuffled.
    """
    if not sentences:
        raise ValueError("xbe-model: cannot predict an empty bag")
    toks = [model.tokenize(s) for s in sentences]
    order = _canonical_order(toks)
    toks = [toks[i] for i in order]
    t = model.masked_triple(e1, e2)
    with tn.no_grad():
        logits, _ = model.forward_pairs(toks, [t] * len(toks), trace=trace)
    probs = _softmax_rows(logits.data)
    acc = np.zeros(probs.shape[1])
    for row in probs:
        acc = acc + row
    return acc / len(probs)


def predict_bags(model: XbeModel, bags: Sequence[Bag], batch_pairs: int = 512,
                 trace: Optional[GateTrace] = None) -> np.ndarray:
    """:func:`predict_bag` for many bags, batching sentences across bags."""
    out = np.zeros((len(bags), model.config.n_relations))
    chunk: List[int] = []
    size = 0

    def flush():
        nonlocal chunk, size
        if not chunk:
            return
        toks, trips, owner, ex = [], [], [], []
        for j in chunk:
            b = bags[j]
            tk = [model.tokenize(s) for s in b.sentences]
            order = _canonical_order(tk)
            t = model.masked_triple(b.e1, b.e2)
            for i in order:
                toks.append(tk[i])
                trips.append(t)
                owner.append(j)
                ex.append(j)
        with tn.no_grad():
            logits, _ = model.forward_pairs(toks, trips, trace=trace, example_ids=ex)
        probs = _softmax_rows(logits.data)
        owner_arr = np.array(owner)
        for j in chunk:
            rows = probs[owner_arr == j]
            acc = np.zeros(rows.shape[1])
            for row in rows:
                acc = acc + row
            out[j] = acc / len(rows)
        chunk, size = [], 0

    for j, b in enumerate(bags):
        if not b.sentences:
            raise ValueError(f"xbe-model: bag {b.key} is empty")
        chunk.append(j)
        size += len(b.sentences)
        if size >= batch_pairs:
            flush()
    flush()
    return out


# ---- checkpoints -------------------------------------------------------------
MAGIC = b"XBE1"
VERSION = 1


def save_checkpoint(model: XbeModel, path) -> None:
    """``XBE1`` | version byte | u64 manifest length | JSON manifest | float64 LE payload."""
    arrays = [(name, t.data) for name, t in model.params.items()]
    if model.transe is not None:
        arrays += [("transe.entity", model.transe.entity), ("transe.relation", model.transe.relation)]
    entries, offset = [], 0
    for name, arr in arrays:
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    manifest = {
        "config": model.config.to_dict(),
        "text_vocab": model.text_vocab.itos,
        "kg_relations": model.kg_vocab.relations,
        "kg_entities": model.kg_vocab.entities,
        "relations": model.relations,
        "transe_margin": model.transe.margin if model.transe is not None else None,
        "tensors": entries,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> XbeModel:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"xbe-model: {path} is not an XBE checkpoint")
    if raw[4] != VERSION:
        raise ValueError(f"xbe-model: unsupported checkpoint version {raw[4]}")
    (n,) = struct.unpack("<Q", raw[5:13])
    manifest = json.loads(raw[13:13 + n].decode("utf-8"))
    payload = memoryview(raw)[13 + n:]
    arrays = {}
    for e in manifest["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=e["offset"])
        arrays[e["name"]] = arr.reshape(e["shape"]).astype(np.float64)
    cfg = XbeConfig.from_dict(manifest["config"])
    text_vocab = TextVocab([])
    text_vocab.itos = list(manifest["text_vocab"])
    text_vocab.stoi = {w: i for i, w in enumerate(text_vocab.itos)}
    kg_vocab = KgVocab(manifest["kg_relations"], manifest["kg_entities"])
    transe = None
    if "transe.entity" in arrays:
        transe = TransETable(arrays.pop("transe.entity"), arrays.pop("transe.relation"),
                             margin=manifest["transe_margin"], trained=True)
    model = XbeModel(cfg, text_vocab, kg_vocab, manifest["relations"], transe)
    for name, arr in arrays.items():
        if name not in model.params:
            raise ValueError(f"xbe-model: checkpoint tensor {name!r} unknown to the model")
        model.params[name].data = arr
    return model


def with_ablations(config: XbeConfig, ablations: Sequence[str]) -> XbeConfig:
    return replace(config, ablations=tuple(ablations))
