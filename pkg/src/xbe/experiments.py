"""Experiment runners: ablation suite, layer-placement sweep, gate-vs-noise sweep."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

from .data import DsreDataset, SynthSpec, noise_sweep
from .evaluate import evaluate, gate_probe
from .encoders import EncoderConfig
from .model import XbeConfig
from .train import TrainConfig, build_model, train

VARIANTS: Dict[str, Tuple[str, ...]] = {
    "full": (),
    "no_xstitch": ("no_xstitch",),
    "no_kg_encoder": ("no_kg_encoder",),
    "no_text_encoder": ("no_text_encoder",),
    "random_init_kg": ("random_init_kg",),
    "freeze_kg": ("freeze_kg",),
}


def reference_config(ablations: Sequence[str] = (), seed: int = 0, width: int = 32,
                     depth: int = 3, placements: Sequence[int] = (1,)) -> XbeConfig:
    """Small model used by the CLI defaults and the experiment checks."""
    enc = dict(depth=depth, width=width, heads=4, ffn_mult=4)
    return XbeConfig(text=EncoderConfig(max_len=32, **enc), kg=EncoderConfig(max_len=3, **enc),
                     placements=tuple(placements), ablations=tuple(ablations), seed=seed)


def reference_training(seed: int = 0, epochs: int = 10) -> TrainConfig:
    # the reduced KG rate and dropout keep joint tuning from memorising training pairs
    return TrainConfig(lr=3e-4, warmup_steps=20, batch_size=8, epochs=epochs, seed=seed,
                       kg_pretrain_epochs=10, kg_lr_scale=0.1, dropout=0.1)


def train_and_evaluate(config: XbeConfig, tc: TrainConfig, train_ds: DsreDataset,
                       test_ds: DsreDataset):
    model = build_model(config, train_ds, [test_ds])
    log = train(model, train_ds, tc)
    return model, log, evaluate(model, test_ds)


@dataclass
class AblationRow:
    variant: str
    aucs: List[float]
    p_at: List[Dict[int, float]]

    @property
    def mean(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def std(self) -> float:
        return float(np.std(self.aucs))


def run_ablation_suite(base: XbeConfig, tc: TrainConfig, train_ds: DsreDataset,
                       test_ds: DsreDataset, seeds: Sequence[int],
                       variants: Optional[Sequence[str]] = None) -> List[AblationRow]:
    """Train/evaluate every variant on identical data, once per seed."""
    if not seeds:
        raise ValueError("train-eval: ablation suite needs at least one seed")
    rows = []
    for name in variants or list(VARIANTS):
        aucs, pats = [], []
        for seed in seeds:
            cfg = replace(base, ablations=VARIANTS[name], seed=int(seed))
            _, _, rep = train_and_evaluate(cfg, replace(tc, seed=int(seed)), train_ds, test_ds)
            aucs.append(rep.auc)
            pats.append(dict(rep.p_at))
        rows.append(AblationRow(name, aucs, pats))
    return rows


def write_ablation_csv(rows: Sequence[AblationRow], seeds: Sequence[int], path) -> None:
    ns = sorted(rows[0].p_at[0]) if rows and rows[0].p_at else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant"] + [f"auc_seed{s}" for s in seeds] + ["auc_mean", "auc_std"]
                   + [f"p@{n}_mean" for n in ns])
        for r in rows:
            pmeans = [float(np.mean([p[n] for p in r.p_at])) for n in ns]
            w.writerow([r.variant] + [repr(a) for a in r.aucs] + [repr(r.mean), repr(r.std)]
                       + [repr(v) for v in pmeans])


def parse_placement(text: str, depth: int) -> Tuple[int, ...]:
    """``"4->5"`` or ``"4"`` -> (4,); ``"all"`` -> every adjacent pair."""
    text = text.strip()
    if text == "all":
        return tuple(range(1, depth))
    src = text.split("->")[0]
    try:
        i = int(src)
    except ValueError:
        raise ValueError(f"train-eval: bad placement {text!r}") from None
    if "->" in text and int(text.split("->")[1]) != i + 1:
        raise ValueError(f"train-eval: placement {text!r} must join adjacent layers")
    if not 1 <= i < depth:
        raise ValueError(f"train-eval: placement {text!r} outside encoder depth {depth}")
    return (i,)


def default_placements(depth: int) -> List[str]:
    return [f"{i}->{i + 1}" for i in range(1, depth)] + ["all"]


def layer_sweep(base: XbeConfig, tc: TrainConfig, train_ds: DsreDataset, test_ds: DsreDataset,
                placements: Sequence[str]) -> List[Tuple[str, float]]:
    depth = min(base.text.depth, base.kg.depth)
    parsed = [(p, parse_placement(p, depth)) for p in placements]
    out = []
    for label, pl in parsed:
        _, _, rep = train_and_evaluate(replace(base, placements=pl), tc, train_ds, test_ds)
        out.append((label, rep.auc))
    return out


def write_sweep_csv(rows: Sequence[Tuple[str, float]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["placement", "auc"])
        for label, auc in rows:
            w.writerow([label, repr(auc)])


@dataclass
class NoiseGateRow:
    noise: int
    bag_size: int
    gate_sum: float
    gate_mean: float
    entries: int
    auc: float

    @property
    def label(self) -> str:
        return f"{self.noise}/{self.bag_size}"


def noise_gate_sweep(spec: SynthSpec, ratios: Sequence[int], base: XbeConfig,
                     tc: TrainConfig) -> List[NoiseGateRow]:
    """Train one model per noise level and sum its text-side gates over that set."""
    trains = noise_sweep(spec, ratios, "train")
    tests = noise_sweep(spec, ratios, "test")
    rows = []
    for m, tr, te in zip(ratios, trains, tests):
        model, _, rep = train_and_evaluate(base, tc, tr, te)
        probe = gate_probe(model, tr)
        rows.append(NoiseGateRow(int(m), spec.bag_size, probe.gate_sum, probe.gate_mean,
                                 probe.entries, rep.auc))
    return rows


def gate_noise_correlation(rows: Sequence[NoiseGateRow]) -> float:
    rho = spearmanr([r.noise for r in rows], [r.gate_sum for r in rows]).statistic
    return float(rho)
