import numpy as np
import pytest

from xbe.data import SynthSpec, synthesize_splits
from xbe.encoders import EncoderConfig
from xbe.model import XbeConfig
from xbe.train import build_model


def numeric_grad(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        keep = x[idx]
        x[idx] = keep + eps
        up = f()
        x[idx] = keep - eps
        down = f()
        x[idx] = keep
        g[idx] = (up - down) / (2 * eps)
    return g


def assert_grad_close(analytic, numeric, rel=1e-4, abs_=1e-6):
    err = np.abs(analytic - numeric)
    bound = np.maximum(rel * np.maximum(np.abs(analytic), np.abs(numeric)), abs_)
    assert (err <= bound).all(), f"max err {err.max()}"


def small_config(width=16, depth=2, placements=(1,), **kw) -> XbeConfig:
    enc = dict(depth=depth, width=width, heads=2, ffn_mult=2)
    return XbeConfig(text=EncoderConfig(max_len=32, **enc), kg=EncoderConfig(max_len=3, **enc),
                     placements=placements, **kw)


@pytest.fixture(scope="session")
def tiny_data():
    spec = SynthSpec(bag_size=3, train_bags=20, test_bags=8, entities_per_relation=4,
                     kg_triples_per_entity=2, seed=3)
    return synthesize_splits(spec)


@pytest.fixture
def tiny_model(tiny_data):
    train, test = tiny_data
    return build_model(small_config(), train, [test])
