"""TransE embeddings used for the auxiliary entity-pair feature ``r_ht``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np


@dataclass
class TransETable:
    entity: np.ndarray
    relation: np.ndarray
    margin: float = 1.0
    trained: bool = False
    losses: List[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.entity.shape[1]

    def _check(self, heads, rels, tails) -> None:
        ne, nr = len(self.entity), len(self.relation)
        for name, ids, n in (("entity", heads, ne), ("relation", rels, nr), ("entity", tails, ne)):
            ids = np.asarray(ids)
            if ids.size and (ids.min() < 0 or ids.max() >= n):
                raise KeyError(f"transe: unknown {name} id in {ids.tolist()[:5]}...")

    def distance(self, heads, rels, tails) -> np.ndarray:
        """L2 distance ``||h + r - t||`` (lower is more plausible)."""
        self._check(heads, rels, tails)
        diff = self.entity[heads] + self.relation[rels] - self.entity[tails]
        return np.linalg.norm(diff, axis=-1)


def rht_feature(table: TransETable, e1: int, e2: int, disabled: bool = False) -> np.ndarray:
    """Translation ``emb(e2) - emb(e1)``; zeros when the feature is ablated."""
    if not (0 <= e1 < len(table.entity) and 0 <= e2 < len(table.entity)):
        raise KeyError(f"transe: unknown entity id {e1} or {e2}")
    if disabled:
        return np.zeros(table.dim)
    return table.entity[e2] - table.entity[e1]


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1e-12)


def margin_loss(pos_dist: np.ndarray, neg_dist: np.ndarray, margin: float) -> np.ndarray:
    return np.maximum(0.0, margin + pos_dist - neg_dist)


def transe_train(triples: Sequence[Tuple[int, int, int]], n_entities: int, n_relations: int,
                 dim: int = 32, epochs: int = 50, margin: float = 1.0, lr: float = 0.01,
                 batch_size: int = 64, seed: int = 0) -> TransETable:
    """Margin-ranking TransE with uniform head-or-tail corruption and SGD."""
    trip = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(trip) == 0:
        raise ValueError("transe: no triples to train on")
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)
    table = TransETable(
        entity=_normalize_rows(rng.uniform(-bound, bound, (n_entities, dim))),
        relation=_normalize_rows(rng.uniform(-bound, bound, (n_relations, dim))),
        margin=margin,
    )
    table._check(trip[:, 0], trip[:, 1], trip[:, 2])

    for _ in range(epochs):
        order = rng.permutation(len(trip))
        total = 0.0
        for start in range(0, len(trip), batch_size):
            b = trip[order[start:start + batch_size]]
            h, r, t = b[:, 0], b[:, 1], b[:, 2]
            corrupt = rng.integers(0, n_entities, len(b))
            flip = rng.random(len(b)) < 0.5
            h2, t2 = np.where(flip, corrupt, h), np.where(flip, t, corrupt)

            dp = table.entity[h] + table.relation[r] - table.entity[t]
            dn = table.entity[h2] + table.relation[r] - table.entity[t2]
            np_, nn_ = np.linalg.norm(dp, axis=1), np.linalg.norm(dn, axis=1)
            loss = margin_loss(np_, nn_, margin)
            total += float(loss.sum())
            active = (loss > 0)[:, None]
            gp = active * dp / np.maximum(np_, 1e-12)[:, None]
            gn = active * dn / np.maximum(nn_, 1e-12)[:, None]

            ge = np.zeros_like(table.entity)
            gr = np.zeros_like(table.relation)
            np.add.at(ge, h, gp)
            np.add.at(ge, t, -gp)
            np.add.at(ge, h2, -gn)
            np.add.at(ge, t2, gn)
            np.add.at(gr, r, gp - gn)
            table.entity -= lr * ge
            table.relation -= lr * gr
            touched = np.unique(np.concatenate([h, t, h2, t2]))
            table.entity[touched] = _normalize_rows(table.entity[touched])
        table.losses.append(total / len(trip))
    table.trained = True
    return table
