"""Finite-difference verification of the model's analytic gradients."""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from . import tensor as tn
from .data import Bag, SynthSpec, synthesize_splits
from .encoders import EncoderConfig
from .model import XbeConfig, XbeModel
from .train import build_model


@dataclass
class ParamCheck:
    name: str
    entries: int
    max_rel_error: float


@dataclass
class GradcheckResult:
    checks: List[ParamCheck] = field(default_factory=list)
    tolerance: float = 1e-3

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and self.max_rel_error <= self.tolerance

    def worst(self) -> ParamCheck:
        return max(self.checks, key=lambda c: c.max_rel_error)


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _loss(model: XbeModel, bags: Sequence[Bag]) -> float:
    with tn.no_grad():
        return model.batch_loss(bags)[0].item()


def _sample_entries(grad: np.ndarray, k: int, rng: np.random.Generator) -> List[tuple]:
    """Half the picks among the largest-magnitude gradients, half uniform."""
    flat = np.abs(grad).ravel()
    top = np.argsort(-flat, kind="stable")[: max(1, k // 2)]
    rest = rng.choice(flat.size, size=min(flat.size, k - len(top)), replace=False)
    picks = sorted(set(top.tolist()) | set(rest.tolist()))
    return [np.unravel_index(i, grad.shape) for i in picks]


def gradcheck(model: XbeModel, bags: Sequence[Bag], eps: float = 1e-5, per_param: int = 6,
              tolerance: float = 1e-3, seed: int = 0,
              names: Optional[Sequence[str]] = None) -> GradcheckResult:
    """Central differences on sampled entries of every named parameter."""
    model.zero_grad()
    loss, _, _ = model.batch_loss(bags)
    loss.backward()
    analytic: Dict[str, np.ndarray] = {
        n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for n, p in model.params.items()
    }
    model.zero_grad()
    rng = np.random.default_rng(seed)
    result = GradcheckResult(tolerance=tolerance)
    for name in names or list(model.params):
        p = model.params[name]
        worst = 0.0
        entries = _sample_entries(analytic[name], per_param, rng)
        for idx in entries:
            keep = p.data[idx]
            p.data[idx] = keep + eps
            up = _loss(model, bags)
            p.data[idx] = keep - eps
            down = _loss(model, bags)
            p.data[idx] = keep
            numeric = (up - down) / (2.0 * eps)
            worst = max(worst, relative_error(float(analytic[name][idx]), numeric))
        result.checks.append(ParamCheck(name, len(entries), worst))
    return result


@contextlib.contextmanager
def corrupted_sigmoid_rule() -> Iterator[None]:
    """Negative control: sigmoid backward forgets its ``(1 - y)`` factor."""
    original = tn.sigmoid

    def broken(a):
        y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
        return tn._make(y, (a,), lambda g: (g * y,), "sigmoid")

    tn.sigmoid = broken
    try:
        yield
    finally:
        tn.sigmoid = original


def tiny_setup(seed: int = 0, width: int = 16, depth: int = 2):
    """A small model and one non-NA bag of two sentences."""
    spec = SynthSpec(bag_size=2, train_bags=12, test_bags=4, entities_per_relation=4,
                     kg_triples_per_entity=2, seed=seed)
    train, test = synthesize_splits(spec)
    enc = dict(depth=depth, width=width, heads=2, ffn_mult=2)
    cfg = XbeConfig(text=EncoderConfig(max_len=32, **enc), kg=EncoderConfig(max_len=3, **enc),
                    placements=(1,), seed=seed)
    model = build_model(cfg, train, [test])
    bag = next(b for _, b in sorted(train.bags.items()) if b.relation != "NA")
    return model, [bag]
