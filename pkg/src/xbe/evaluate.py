"""Held-out evaluation: ranked predictions, PR curve, AUC, P@N and the gate probe."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np

from .data import NA, DsreDataset
from .model import XbeModel, predict_bags
from .xstitch import GateTrace

DEFAULT_NS = (10, 20, 50, 100, 200)


class Prediction(NamedTuple):
    e1: str
    e2: str
    relation: str
    score: float
    correct: bool


@dataclass
class EvalReport:
    ranked: List[Prediction]
    precision: np.ndarray
    recall: np.ndarray
    auc: float
    p_at: Dict[int, float]
    n_gold: int
    counts: Dict[str, int] = field(default_factory=dict)


def rank(preds: Sequence[Prediction]) -> List[Prediction]:
    """Score descending; ties broken by ``(e1, e2, relation)``."""
    return sorted(preds, key=lambda p: (-p.score, p.e1, p.e2, p.relation))


def pr_curve(correct: Sequence[bool], n_gold: int) -> Tuple[np.ndarray, np.ndarray]:
    """Precision and recall after each rank of an ordered list."""
    if n_gold <= 0:
        raise ValueError("train-eval: no gold triples to compute recall against")
    hits = np.cumsum(np.asarray(correct, dtype=float))
    k = np.arange(1, len(hits) + 1)
    return hits / k, hits / n_gold


def pr_auc(precision: np.ndarray, recall: np.ndarray) -> float:
    """Trapezoidal area under the PR points, anchored at (recall 0, precision 1)."""
    r = np.concatenate([[0.0], recall])
    p = np.concatenate([[1.0], precision])
    return float(np.sum((r[1:] - r[:-1]) * (p[1:] + p[:-1]) / 2.0))


def precision_at(correct: Sequence[bool], n: int) -> float:
    top = np.asarray(correct[:n], dtype=float)
    return float(top.mean()) if len(top) else 0.0


def report_from_ranking(ranked: List[Prediction], n_gold: int,
                        ns: Sequence[int] = DEFAULT_NS) -> EvalReport:
    flags = [p.correct for p in ranked]
    prec, rec = pr_curve(flags, n_gold)
    return EvalReport(ranked, prec, rec, pr_auc(prec, rec), {n: precision_at(flags, n) for n in ns}, n_gold)


def evaluate(model: XbeModel, test: DsreDataset, ns: Sequence[int] = DEFAULT_NS) -> EvalReport:
    """Score every (bag, non-NA relation) candidate and rank them."""
    if len(test) == 0:
        raise ValueError("train-eval: empty test set")
    bags = [test.bags[k] for k in sorted(test.bags)]
    probs = predict_bags(model, bags)
    gold = test.gold_triples
    preds = []
    for b, pr in zip(bags, probs):
        for ri, rel in enumerate(model.relations):
            if rel == NA:
                continue
            preds.append(Prediction(b.e1, b.e2, rel, float(pr[ri]), (b.e1, rel, b.e2) in gold))
    rep = report_from_ranking(rank(preds), len(gold), ns)
    rep.counts = {"bags": len(bags), "candidates": len(preds), "gold": len(gold)}
    return rep


def write_eval_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "e1", "e2", "relation", "score", "correct", "precision", "recall"])
        for i, (p, pr, rc) in enumerate(zip(report.ranked, report.precision, report.recall), 1):
            w.writerow([i, p.e1, p.e2, p.relation, repr(p.score), int(p.correct), repr(float(pr)), repr(float(rc))])


def write_pr_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recall", "precision"])
        for pr, rc in zip(report.precision, report.recall):
            w.writerow([repr(float(rc)), repr(float(pr))])


def summary_dict(report: EvalReport) -> dict:
    return {"auc": report.auc, **{f"p@{n}": v for n, v in report.p_at.items()}, **report.counts}


# ---- gate probe ----------------------------------------------------------------
@dataclass
class GateProbe:
    gate_sum: float
    entries: int
    passes: int = 1

    @property
    def gate_mean(self) -> float:
        return self.gate_sum / self.entries if self.entries else 0.0


def gate_probe(model: XbeModel, dataset: DsreDataset, passes: int = 1) -> GateProbe:
    """Sum of every text-side gate entry over forward passes on ``dataset``."""
    if not model.xstitch_active:
        raise ValueError("train-eval: gate probe needs a model with the cross-stitch enabled")
    bags = [dataset.bags[k] for k in sorted(dataset.bags)]
    total, count = 0.0, 0
    for _ in range(passes):
        trace = GateTrace()
        predict_bags(model, bags, trace=trace)
        total += trace.total("t2s")
        count += trace.count("t2s")
    return GateProbe(total, count, passes)


def write_gate_csv(rows: Sequence[Tuple[str, float, float, int]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["noise_ratio", "gate_sum", "gate_mean", "entries"])
        for ratio, s, m, n in rows:
            w.writerow([ratio, repr(float(s)), repr(float(m)), n])
