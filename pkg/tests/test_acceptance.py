"""End-to-end acceptance checks; each prints one ``criterion N: PASS|FAIL`` line.

Criteria 3 to 6 train real models and take most of the suite's runtime.
"""
import json
import time

import numpy as np
import pytest

from test_evaluate import brute_force
from xbe.cli import main
from xbe.data import SynthSpec, synthesize_splits
from xbe.evaluate import Prediction, evaluate, report_from_ranking
from xbe.experiments import (gate_noise_correlation, noise_gate_sweep, reference_config,
                             reference_training, run_ablation_suite)
from xbe.gradcheck import gradcheck, tiny_setup
from xbe.model import _softmax_rows, predict_bag
from xbe import tensor as tn
from xbe.tensor import Tensor
from xbe.train import build_model, train
from xbe.xstitch import XStitchParams, cross_attention, mix_kg, mix_text

SEEDS = (0, 1, 2)
NOISY = SynthSpec(bag_size=30, noise=10)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def test_criterion_1_gradient_check(report):
    start = time.perf_counter()
    model, bags = tiny_setup(seed=0, width=16, depth=2)
    result = gradcheck(model, bags)
    elapsed = time.perf_counter() - start
    worst = result.worst()
    checked = {c.name for c in result.checks}
    ok = result.passed and worst.max_rel_error <= 1e-3 and elapsed < 60 and checked == set(model.params)
    assert report(1, ok, f"max rel err {worst.max_rel_error:.2e} ({worst.name}) over "
                         f"{len(checked)} groups in {elapsed:.1f}s")


def _random_params(rng, d):
    def w(shape):
        # half to twice the initialisation scale; gate inputs beyond about 36 round to 1.0 in float64
        return Tensor(rng.normal(0.0, rng.uniform(0.5, 2.0) / np.sqrt(d), shape))
    return XStitchParams(w((d, d)), w((d, d)), w((d, d)), w((d, d)), w((d, d)), w((d, d)),
                         lambda_t=float(rng.uniform(0, 2)), lambda_s=float(rng.uniform(0, 1)))


def test_criterion_2_attention_and_gate_invariants(report):
    rng = np.random.default_rng(7)
    worst_sum = 0.0
    gates_ok = halves_ok = True
    for _ in range(1000):
        d = int(rng.choice([4, 8, 16]))
        n = int(rng.integers(1, 24))
        S = Tensor(rng.normal(0.0, rng.uniform(0.5, 2.0), (n, d)))
        T = Tensor(rng.normal(0.0, rng.uniform(0.5, 2.0), (3, d)))
        p = _random_params(rng, d)
        mask = np.zeros(n, dtype=bool)
        mask[: int(rng.integers(1, n + 1))] = True
        a_t2s, a_s2t = cross_attention(S, T, p, text_mask=mask)
        worst_sum = max(worst_sum, np.abs(a_t2s.data.sum(axis=-1) - 1).max(),
                        np.abs(a_s2t.data.sum(axis=-2) - 1).max())
        _, g_t2s = mix_text(S, T, a_t2s, p)
        _, g_s2t = mix_kg(S, T, a_s2t, p)
        gates_ok &= bool(np.all((g_t2s.data > 0) & (g_t2s.data < 1)))
        gates_ok &= bool(np.all((g_s2t.data > 0) & (g_s2t.data < 1)))
        p.wg2_t2s.data[:] = 0.0
        S_new, _ = mix_text(S, T, a_t2s, p)
        halves_ok &= bool(np.array_equal(S_new.data, 0.5 * S.data))
    ok = worst_sum <= 1e-12 and gates_ok and halves_ok
    assert report(2, ok, f"max |sum-1| {worst_sum:.1e}, gates in (0,1): {gates_ok}, "
                         f"zero-MLP halves S: {halves_ok}")


def test_criterion_3_noiseless_learnability(report):
    start = time.perf_counter()
    train_ds, test_ds = synthesize_splits(SynthSpec(n_relations=4, train_bags=200, bag_size=5,
                                                    noise=0, seed=0))
    model = build_model(reference_config(), train_ds, [test_ds])
    aucs = []
    train(model, train_ds, reference_training(epochs=20),
          on_epoch=lambda ep, log: aucs.append(evaluate(model, test_ds).auc))
    elapsed = time.perf_counter() - start
    reached = next((i + 1 for i, a in enumerate(aucs) if a >= 0.95), None)
    ok = reached is not None and elapsed < 600
    assert report(3, ok, f"AUC >= 0.95 first at epoch {reached}, best {max(aucs):.3f}, "
                         f"{elapsed:.0f}s")


@pytest.fixture(scope="module")
def ablation():
    train_ds, test_ds = synthesize_splits(NOISY)
    rows = run_ablation_suite(reference_config(), reference_training(), train_ds, test_ds, SEEDS)
    return {r.variant: r for r in rows}


def _table(rows):
    return ", ".join(f"{k} {r.mean:.3f}" for k, r in rows.items())


def test_criterion_4_ablation_ordering(report, ablation):
    means = {k: r.mean for k, r in ablation.items()}
    margin = means["full"] - means["no_xstitch"]
    lowest = min(means, key=means.get)
    ok = margin >= 0.02 and lowest == "no_text_encoder"
    assert report(4, ok, f"full - no_xstitch = {margin:+.3f}, minimum row {lowest}; "
                         f"{_table(ablation)}")


def test_criterion_5_pretraining_effect(report, ablation):
    full = ablation["full"].mean
    ok = full > ablation["random_init_kg"].mean and full > ablation["freeze_kg"].mean
    assert report(5, ok, f"full {full:.3f}, random_init_kg {ablation['random_init_kg'].mean:.3f}, "
                         f"freeze_kg {ablation['freeze_kg'].mean:.3f}")


def test_criterion_6_gates_fall_with_noise(report):
    rows = noise_gate_sweep(SynthSpec(bag_size=30), [5, 10, 15, 20, 25, 30], reference_config(),
                            reference_training())
    rho = gate_noise_correlation(rows)
    sums = ", ".join(f"{r.label} {r.gate_sum:.1f}" for r in rows)
    assert report(6, rho <= -0.6, f"spearman {rho:+.3f}; gate sums {sums}")


def test_criterion_7_metric_oracle(report):
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 300))
        flags = (rng.random(n) < rng.random()).tolist()
        n_gold = sum(flags) + int(rng.integers(0, 10)) or 1
        ranked = [Prediction(f"h{i}", f"t{i}", "r", float(n - i), f) for i, f in enumerate(flags)]
        rep = report_from_ranking(ranked, n_gold, (10, 50, 100))
        area, p_at = brute_force(flags, n_gold, (10, 50, 100))
        worst = max(worst, abs(rep.auc - area), *(abs(rep.p_at[k] - p_at[k]) for k in p_at))
    assert report(7, worst <= 1e-12, f"max deviation {worst:.1e} over 50 lists")


def test_criterion_8_bag_inference(report):
    train_ds, test_ds = synthesize_splits(SynthSpec(bag_size=6, train_bags=20, test_bags=6,
                                                    entities_per_relation=4, seed=2))
    model = build_model(reference_config(width=16, depth=2), train_ds, [test_ds])
    rng = np.random.default_rng(0)
    worst, bitwise = 0.0, True
    for bag in test_ds.bags.values():
        got = predict_bag(model, bag.sentences, bag.e1, bag.e2)
        triple = model.masked_triple(bag.e1, bag.e2)
        with tn.no_grad():
            rows = [_softmax_rows(model.forward_pair(model.tokenize(s), triple)[0].data[None, :])[0]
                    for s in bag.sentences]
        worst = max(worst, np.abs(got - np.mean(rows, axis=0)).max())
        shuffled = [bag.sentences[i] for i in rng.permutation(len(bag.sentences))]
        bitwise &= got.tobytes() == predict_bag(model, shuffled, bag.e1, bag.e2).tobytes()
    ok = worst <= 1e-12 and bitwise
    assert report(8, ok, f"max |bag - mean| {worst:.1e}, permutation bitwise equal: {bitwise}")


TINY = {
    "synth": {"train_bags": 16, "test_bags": 6, "entities_per_relation": 4,
              "kg_triples_per_entity": 2, "bag_size": 3},
    "model": {"width": 8, "depth": 2, "heads": 2, "ffn_mult": 2},
    "train": {"epochs": 1, "kg_pretrain_epochs": 1, "transe_epochs": 2, "batch_size": 4},
    "run": {"seeds": [0, 1]},
}


def test_criterion_9_manifest_replay(report, tmp_path):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps(TINY))
    ws, again = tmp_path / "ws", tmp_path / "again"
    steps = [("synth", []), ("pretrain-kg", []), ("train", ["--init", "kg_pretrained.ckpt"]),
             ("eval", []), ("probe-gates", []), ("ablate", []), ("sweep-layers", []),
             ("gradcheck", [])]
    for cmd, extra in steps:
        assert main([cmd, "--workspace", str(ws), "--config", str(cfg), *extra]) == 0
    differing = []
    for cmd, _ in steps:
        manifest_path = ws / "manifests" / f"{cmd.replace('-', '_')}.json"
        manifest = json.loads(manifest_path.read_text())
        # the replay workspace receives the data and checkpoints earlier commands consumed
        for src in [*ws.glob("data/*"), *ws.glob("*.ckpt")]:
            dst = again / src.relative_to(ws)
            if not dst.exists():
                dst.parent.mkdir(parents=True, exist_ok=True)
                dst.write_bytes(src.read_bytes())
        assert main([cmd, "--workspace", str(again), "--from-manifest", str(manifest_path),
                     "--force"]) == 0
        for rel in manifest["outputs"] + [f"manifests/{manifest_path.name}"]:
            if (ws / rel).read_bytes() != (again / rel).read_bytes():
                differing.append(rel)
    assert report(9, not differing, f"{len(steps)} commands replayed; differing files: "
                                    f"{differing or 'none'}")
