"""Optimisation: AdamW with linear warmup, KG pre-training and joint fine-tuning."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import tensor as tn
from .data import NA, DsreDataset, KgVocab, TextVocab, batch_bags
from .encoders import KgTriple, kg_mask_logits
from .model import XbeConfig, XbeModel, nll
from .tensor import Tensor
from .transe import transe_train

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 3e-4
    warmup_steps: int = 500
    weight_decay: float = 1e-5
    adam_eps: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 100
    epochs: int = 15
    seed: int = 0
    kg_pretrain_epochs: int = 10
    kg_pretrain_lr: float = 1e-3
    kg_batch_size: int = 64
    transe_epochs: int = 50
    transe_lr: float = 0.01
    transe_margin: float = 1.0
    kg_lr_scale: float = 1.0
    dropout: float = 0.0

    def validate(self) -> None:
        if self.lr <= 0 or self.kg_pretrain_lr <= 0:
            raise ValueError("train-eval: learning rates must be positive")
        if self.warmup_steps < 0:
            raise ValueError("train-eval: warmup_steps must be >= 0")
        if self.epochs < 1:
            raise ValueError("train-eval: epochs must be >= 1")
        if self.batch_size < 1 or self.kg_batch_size < 1:
            raise ValueError("train-eval: batch sizes must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"train-eval: dropout {self.dropout} must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def warmup_lr(lr: float, warmup_steps: int, step: int) -> float:
    """Linear ramp to ``lr`` over ``warmup_steps`` (1-based step), then constant."""
    if warmup_steps <= 0:
        return lr
    return lr * min(1.0, step / warmup_steps)


def adam_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray], state: AdamState,
              config: TrainConfig, step: int, lr: Optional[float] = None) -> None:
    """In-place AdamW update with bias correction and decoupled weight decay."""
    base = config.lr if lr is None else lr
    rate = warmup_lr(base, config.warmup_steps, step)
    b1, b2 = config.beta1, config.beta2
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"train-eval: gradient shape {g.shape} != parameter {name} shape {p.data.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        elif m.shape != p.data.shape:
            raise ValueError(f"train-eval: optimizer state for {name} has shape {m.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - b1 ** step)
        v_hat = v / (1.0 - b2 ** step)
        p.data = p.data - rate * (m_hat / (np.sqrt(v_hat) + config.adam_eps) + config.weight_decay * p.data)
    state.step = step


class Optimizer:
    """Adam over a named subset of model parameters."""

    def __init__(self, model: XbeModel, names: Sequence[str], config: TrainConfig,
                 lr: Optional[float] = None, warmup_steps: Optional[int] = None,
                 scales: Optional[Dict[str, float]] = None):
        self.model = model
        self.names = list(names)
        self.scales = scales or {}
        self.config = config if warmup_steps is None else _with(config, warmup_steps=warmup_steps)
        self.lr = lr
        self.state = AdamState()

    def step(self) -> None:
        step = self.state.step + 1
        base = self.config.lr if self.lr is None else self.lr
        groups: Dict[float, List[str]] = {}
        for n in self.names:
            groups.setdefault(self.scales.get(n, 1.0), []).append(n)
        for scale, names in groups.items():
            params = {n: self.model.params[n] for n in names}
            grads = {n: p.grad for n, p in params.items() if p.grad is not None}
            adam_step(params, grads, self.state, self.config, step, lr=base * scale)


def _with(cfg: TrainConfig, **kw) -> TrainConfig:
    d = cfg.to_dict()
    d.update(kw)
    return TrainConfig(**d)


# ---- model construction -----------------------------------------------------
def build_model(config: XbeConfig, train: DsreDataset, extra: Sequence[DsreDataset] = (),
                transe=None) -> XbeModel:
    """Vocabularies: text from the training corpus; KG symbols from all splits."""
    text_vocab = TextVocab.build([train])
    kg_vocab = KgVocab.build([train, *extra])
    cfg = XbeConfig.from_dict({
        **config.to_dict(),
        "text": {**config.text.to_dict(), "vocab_size": len(text_vocab)},
        "kg": {**config.kg.to_dict(), "vocab_size": len(kg_vocab)},
        "n_relations": len(train.relations),
    })
    return XbeModel(cfg, text_vocab, kg_vocab, train.relations, transe)


def fit_transe(model: XbeModel, kg, config: TrainConfig) -> None:
    v = model.kg_vocab
    rel_ids = {r: i for i, r in enumerate(v.relations)}
    trips = [(v.entity_index(h), rel_ids[r], v.entity_index(t)) for h, r, t in kg if r != NA]
    model.transe = transe_train(trips, len(v.entities), len(v.relations), dim=model.config.rht_dim,
                                epochs=config.transe_epochs, margin=config.transe_margin,
                                lr=config.transe_lr, seed=config.seed)


# ---- KG pre-training ----------------------------------------------------------
def _kg_ids(model: XbeModel, triples) -> np.ndarray:
    return np.stack([model.check_triple(t) for t in triples])


def pretrain_kg_step(model: XbeModel, masked: Sequence[KgTriple], relations: Sequence[int],
                     optimizer: Optimizer) -> float:
    """One update of the KG encoder on masked relation prediction."""
    masked = list(masked) if not isinstance(masked, KgTriple) else [masked]
    relations = np.atleast_1d(np.asarray(relations, dtype=np.int64))
    for t in masked:
        if t.relation != model.kg_vocab.mask_id:
            raise ValueError(f"train-eval: triple {t} is not relation-masked")
    model.zero_grad()
    states = model.kg_encoder.run(_kg_ids(model, masked))
    logits = kg_mask_logits(model, states[-1], 1)
    loss = tn.scale(nll(logits, relations), 1.0 / len(masked))
    loss.backward()
    optimizer.step()
    return loss.item()


def pretrain_kg(model: XbeModel, kg, config: TrainConfig) -> List[float]:
    """Masked relation prediction over KG triples; returns per-epoch mean loss."""
    v = model.kg_vocab
    rows = [(v.stoi[h], v.stoi[r], v.stoi[t]) for h, r, t in kg if r != NA]
    if not rows:
        return []
    opt = Optimizer(model, model.kg_param_names(), config, lr=config.kg_pretrain_lr, warmup_steps=0)
    rng = np.random.default_rng([config.seed, 17])
    history = []
    for _ in range(config.kg_pretrain_epochs):
        order = rng.permutation(len(rows))
        total, n = 0.0, 0
        for s in range(0, len(rows), config.kg_batch_size):
            chunk = [rows[i] for i in order[s:s + config.kg_batch_size]]
            masked = [KgTriple(h, v.mask_id, t) for h, _, t in chunk]
            total += pretrain_kg_step(model, masked, [r for _, r, _ in chunk], opt) * len(chunk)
            n += len(chunk)
        history.append(total / n)
    return history


def kg_relation_accuracy(model: XbeModel, triples) -> float:
    v = model.kg_vocab
    masked = [KgTriple(v.stoi[h], v.mask_id, v.stoi[t]) for h, _, t in triples]
    gold = np.array([v.stoi[r] for _, r, _ in triples])
    with tn.no_grad():
        states = model.kg_encoder.run(_kg_ids(model, masked))
        logits = kg_mask_logits(model, states[-1], 1).data
    # only relation symbols are admissible answers
    pred = logits[:, : len(v.relations)].argmax(axis=1)
    return float((pred == gold).mean())


# ---- joint fine-tuning ----------------------------------------------------------
@dataclass
class TrainLog:
    epoch_loss: List[float] = field(default_factory=list)
    epoch_re: List[float] = field(default_factory=list)
    epoch_kg: List[float] = field(default_factory=list)
    kg_pretrain: List[float] = field(default_factory=list)
    transe: List[float] = field(default_factory=list)
    steps: int = 0


def train(model: XbeModel, dataset: DsreDataset, config: TrainConfig,
          kg: Optional[list] = None,
          on_epoch: Optional[Callable[[int, TrainLog], None]] = None) -> TrainLog:
    """TransE fit, optional KG pre-training, then joint DS-RE fine-tuning."""
    config.validate()
    if len(dataset) == 0:
        raise ValueError("train-eval: training set is empty")
    kg = dataset.kg if kg is None else kg
    c = model.config
    out = TrainLog()
    if model.transe is None and not c.has("no_rht"):
        fit_transe(model, kg, config)
        out.transe = list(model.transe.losses)
    drop_rng = np.random.default_rng([config.seed, 17])
    with model.dropout_active(config.dropout, drop_rng):
        if not (c.has("no_kg_encoder") or c.has("random_init_kg")) and config.kg_pretrain_epochs > 0:
            out.kg_pretrain = pretrain_kg(model, kg, config)
            log.info("kg pre-training loss %s", out.kg_pretrain[-1:] or "n/a")

        scales = {n: config.kg_lr_scale for n in model.kg_param_names()}
        opt = Optimizer(model, model.trainable_names(), config, scales=scales)
        for epoch in range(1, config.epochs + 1):
            tot = re_ = kg_ = 0.0
            for batch in batch_bags(dataset, config.batch_size, seed=config.seed * 1000 + epoch):
                model.zero_grad()
                loss, l_re, l_kg = model.batch_loss(batch)
                loss.backward()
                opt.step()
                tot += loss.item()
                re_ += l_re
                kg_ += l_kg
            n = len(dataset)
            out.epoch_loss.append(tot / n)
            out.epoch_re.append(re_ / n)
            out.epoch_kg.append(kg_ / n)
            log.info("epoch %d loss %.4f", epoch, tot / n)
            if on_epoch is not None:
                on_epoch(epoch, out)
    out.steps = opt.state.step
    return out
