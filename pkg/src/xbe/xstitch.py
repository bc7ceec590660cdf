"""Gated cross-attention cross-stitch between text and triple hidden states.

Both directions score text rows against projected triple rows, giving an
``N x 3`` matrix per direction.  Triple-to-sentence attention is normalised
over the three triple positions (one distribution per text token);
sentence-to-triple attention is normalised over the text positions (one
distribution per triple slot).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import tensor as tn
from .tensor import Tensor

GATE_MODES = ("dynamic", "fixed")


@dataclass
class XStitchParams:
    wp_t2s: Tensor
    wp_s2t: Tensor
    wg1_t2s: Tensor
    wg2_t2s: Tensor
    wg1_s2t: Tensor
    wg2_s2t: Tensor
    lambda_t: float = 1.0
    lambda_s: float = 1e-4
    gate_mode: str = "dynamic"
    gate_value: float = 0.5

    def __post_init__(self):
        if self.lambda_t < 0 or self.lambda_s < 0:
            raise ValueError("xstitch: mixing weights must be non-negative")
        if self.gate_mode not in GATE_MODES:
            raise ValueError(f"xstitch: unknown gate mode {self.gate_mode!r}")
        if not 0.0 <= self.gate_value <= 1.0:
            raise ValueError(f"xstitch: fixed gate {self.gate_value} outside [0, 1]")

    @classmethod
    def from_params(cls, params: Dict[str, Tensor], prefix: str, **kw) -> "XStitchParams":
        names = ("wp_t2s", "wp_s2t", "wg1_t2s", "wg2_t2s", "wg1_s2t", "wg2_s2t")
        return cls(**{n: params[f"{prefix}.{n}"] for n in names}, **kw)


def init_xstitch_params(prefix: str, d: int, rng: np.random.Generator,
                        hidden: Optional[int] = None) -> Dict[str, Tensor]:
    h = hidden or d
    std = 1.0 / np.sqrt(d)
    shapes = {
        "wp_t2s": (d, d), "wp_s2t": (d, d),
        "wg1_t2s": (h, d), "wg2_t2s": (d, h),
        "wg1_s2t": (h, d), "wg2_s2t": (d, h),
    }
    return {
        f"{prefix}.{k}": Tensor(rng.normal(0.0, std, s), requires_grad=True, name=f"{prefix}.{k}")
        for k, s in shapes.items()
    }


def _proj(x: Tensor, w: Tensor) -> Tensor:
    # w is stored as (out, in); rows of x are vectors.
    return x @ tn.transpose(w)


def cross_attention(S: Tensor, T: Tensor, p: XStitchParams,
                    text_mask: Optional[np.ndarray] = None) -> Tuple[Tensor, Tensor]:
    """Return ``(A_t2s, A_s2t)``, both shaped ``[..., N, 3]``."""
    if S.shape[-2] == 0:
        raise ValueError("xstitch: empty sentence")
    if S.shape[-1] != T.shape[-1] or T.shape[-2] != 3:
        raise tn.ShapeError(f"xstitch: incompatible states {S.shape} and {T.shape}")
    scores_t2s = S @ tn.transpose(_proj(T, p.wp_t2s))
    scores_s2t = S @ tn.transpose(_proj(T, p.wp_s2t))
    a_t2s = tn.softmax(scores_t2s, axis=-1)
    col_mask = None if text_mask is None else text_mask[..., :, None]
    a_s2t = tn.softmax(scores_s2t, axis=-2, mask=col_mask)
    return a_t2s, a_s2t


def _gate(x: Tensor, p: XStitchParams) -> Tensor:
    if p.gate_mode == "fixed":
        return Tensor(np.full(x.shape, p.gate_value))
    return tn.sigmoid(x)


def mix_text(S: Tensor, T: Tensor, a_t2s: Tensor, p: XStitchParams) -> Tuple[Tensor, Tensor]:
    """Update the text state; returns ``(S', G_t2s)``."""
    pulled = a_t2s @ T
    t2s = _proj(tn.relu(_proj(pulled, p.wg1_t2s)), p.wg2_t2s)
    gate = _gate(t2s, p)
    return tn.mul(gate, S) + tn.scale(t2s, p.lambda_t), gate


def mix_kg(S: Tensor, T: Tensor, a_s2t: Tensor, p: XStitchParams) -> Tuple[Tensor, Tensor]:
    """Update the triple state; returns ``(T', G_s2t)``."""
    pulled = tn.transpose(a_s2t) @ S
    s2t = _proj(tn.relu(_proj(pulled, p.wg1_s2t)), p.wg2_s2t)
    gate = _gate(s2t, p)
    return tn.mul(gate, T) + tn.scale(s2t, p.lambda_s), gate


@dataclass
class GateRecord:
    example_id: int
    direction: str
    layer: int
    gate_sum: float
    gate_mean: float
    size: int = 0
    values: Optional[np.ndarray] = None


@dataclass
class GateTrace:
    """Gate activations seen during forward passes."""

    keep_values: bool = False
    records: List[GateRecord] = field(default_factory=list)

    def add(self, example_ids, direction: str, layer: int, gate: np.ndarray,
            mask: Optional[np.ndarray] = None) -> None:
        # gate: [B, R, d]; mask: [B, R] marks real rows
        for j, ex in enumerate(example_ids):
            g = gate[j] if mask is None else gate[j][mask[j]]
            self.records.append(GateRecord(
                int(ex), direction, layer, float(g.sum()), float(g.mean()), int(g.size),
                g.copy() if self.keep_values else None,
            ))

    def total(self, direction: str = "t2s") -> float:
        return float(np.sum([r.gate_sum for r in self.records if r.direction == direction]))

    def count(self, direction: str = "t2s") -> int:
        return int(np.sum([r.size for r in self.records if r.direction == direction]))

    def extend(self, other: "GateTrace") -> None:
        self.records.extend(other.records)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["example_id", "direction", "layer", "gate_sum", "gate_mean"])
            for r in self.records:
                w.writerow([r.example_id, r.direction, r.layer, repr(r.gate_sum), repr(r.gate_mean)])


def apply_xstitch(S: Tensor, T: Tensor, p: XStitchParams, text_mask: Optional[np.ndarray] = None,
                  enabled: bool = True, trace: Optional[GateTrace] = None, layer: int = 0,
                  example_ids=None) -> Tuple[Tensor, Tensor]:
    """Full bidirectional mix; a disabled stitch returns its inputs untouched."""
    if not enabled:
        return S, T
    a_t2s, a_s2t = cross_attention(S, T, p, text_mask)
    S_new, g_t2s = mix_text(S, T, a_t2s, p)
    T_new, g_s2t = mix_kg(S, T, a_s2t, p)
    if trace is not None:
        ids = example_ids if example_ids is not None else range(S.shape[0])
        trace.add(ids, "t2s", layer, g_t2s.data, text_mask)
        trace.add(ids, "s2t", layer, g_s2t.data)
    return S_new, T_new
