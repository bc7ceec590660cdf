import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_config
from xbe import tensor as tn
from xbe.data import NA, Sentence
from xbe.model import (
    XbeConfig,
    load_checkpoint,
    loss_kg,
    loss_re,
    loss_total,
    predict_bag,
    predict_bags,
    save_checkpoint,
    with_ablations,
)
from xbe.tensor import Tensor
from xbe.train import build_model


def _softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def first_bag(ds, relation=None):
    for _, b in sorted(ds.bags.items()):
        if relation is None or b.relation == relation or (relation == "any" and b.relation != NA):
            return b
    raise LookupError


# ---- losses ------------------------------------------------------------------
def test_loss_total_examples():
    assert loss_total(2.0, 3.0, 1.0) == 5.0
    assert loss_total(1.0, 0.5, 0.6) == pytest.approx(1.3, abs=1e-15)
    assert loss_total(1.5, 0.0, 0.3) == 1.5
    with pytest.raises(ValueError):
        loss_total(1.0, 1.0, 0.0)


def test_loss_re_is_summed_negative_log_likelihood():
    z = np.array([[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]])
    want = -np.log(_softmax(z)[:, 1]).sum()
    assert loss_re(Tensor(z), 1).item() == pytest.approx(want, rel=1e-13)
    uniform = loss_re(Tensor(np.zeros((4, 5))), 2).item()
    assert uniform == pytest.approx(4 * np.log(5), rel=1e-13)
    with pytest.raises(IndexError):
        loss_re(Tensor(z), 3)
    with pytest.raises(ValueError):
        loss_re(Tensor(np.zeros((0, 3))), 0)


def test_loss_kg_examples():
    assert loss_kg(Tensor(np.zeros(6)), 2).item() == pytest.approx(np.log(6), rel=1e-14)
    z = np.array([[0.0, 5.0], [0.0, 1.0]])
    want = -np.log(_softmax(z)[:, 1]).mean()
    assert loss_kg(Tensor(z), 1).item() == pytest.approx(want, rel=1e-13)
    with pytest.raises(IndexError):
        loss_kg(Tensor(np.zeros(3)), 5)


def test_batch_loss_combines_terms(tiny_model, tiny_data):
    train, _ = tiny_data
    bags = [first_bag(train, "any"), first_bag(train, NA)]
    total, l_re, l_kg = tiny_model.batch_loss(bags, weight=0.6)
    assert l_kg > 0
    assert total.item() == pytest.approx(l_re + 0.6 * l_kg, rel=1e-12)
    # an NA bag alone has no KG target
    _, _, only_na = tiny_model.batch_loss([first_bag(train, NA)])
    assert only_na == 0.0


# ---- configuration -------------------------------------------------------------
def test_config_validation(tiny_data):
    train, test = tiny_data
    for bad in (dict(loss_weight=0.0), dict(loss_weight=1.5), dict(placements=(2,)),
                dict(ablations=("no_such",)), dict(ablations=("no_kg_encoder", "no_text_encoder"))):
        with pytest.raises(ValueError):
            build_model(small_config(**bad), train, [test])


def test_config_dict_round_trip():
    cfg = small_config(ablations=("freeze_kg",), lambda_s=0.01)
    again = XbeConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert with_ablations(cfg, ["no_xstitch"]).ablations == ("no_xstitch",)


# ---- bag inference ----------------------------------------------------------------
def _explicit_mean(model, bag):
    t = model.masked_triple(bag.e1, bag.e2)
    rows = []
    for s in bag.sentences:
        with tn.no_grad():
            logits, _ = model.forward_pairs([model.tokenize(s)], [t])
        rows.append(_softmax(logits.data[0]))
    return np.mean(rows, axis=0)


def test_predict_bag_is_mean_of_sentence_softmaxes(tiny_model, tiny_data):
    train, _ = tiny_data
    for bag in list(train.bags.values())[:4]:
        got = predict_bag(tiny_model, bag.sentences, bag.e1, bag.e2)
        np.testing.assert_allclose(got, _explicit_mean(tiny_model, bag), rtol=0, atol=1e-12)
        assert got.sum() == pytest.approx(1.0, abs=1e-9) and np.all(got >= 0)


def test_predict_bag_permutation_invariant_bitwise(tiny_model, tiny_data):
    train, _ = tiny_data
    bag = first_bag(train, "any")
    ref = predict_bag(tiny_model, bag.sentences, bag.e1, bag.e2)
    for perm in itertools.permutations(bag.sentences):
        assert predict_bag(tiny_model, list(perm), bag.e1, bag.e2).tobytes() == ref.tobytes()


def test_identical_sentences_equal_single(tiny_model, tiny_data):
    train, _ = tiny_data
    bag = first_bag(train)
    one = predict_bag(tiny_model, bag.sentences[:1], bag.e1, bag.e2)
    many = predict_bag(tiny_model, bag.sentences[:1] * 4, bag.e1, bag.e2)
    np.testing.assert_allclose(many, one, rtol=0, atol=1e-15)


def test_predict_bags_matches_single_bag_calls(tiny_model, tiny_data):
    train, _ = tiny_data
    bags = [train.bags[k] for k in sorted(train.bags)][:6]
    batched = predict_bags(tiny_model, bags, batch_pairs=4)
    for row, b in zip(batched, bags):
        np.testing.assert_allclose(row, predict_bag(tiny_model, b.sentences, b.e1, b.e2), atol=1e-12)


def test_predict_bag_errors(tiny_model, tiny_data):
    train, _ = tiny_data
    bag = first_bag(train)
    with pytest.raises(ValueError):
        predict_bag(tiny_model, [], bag.e1, bag.e2)
    with pytest.raises(KeyError):
        predict_bag(tiny_model, bag.sentences, "nobody", bag.e2)
    long = Sentence(("w",) * 40, (0, 1), (2, 3))
    with pytest.raises(ValueError):
        predict_bag(tiny_model, [long], bag.e1, bag.e2)


# ---- ablations ---------------------------------------------------------------------
def test_no_kg_encoder_zeroes_kg_features(tiny_data):
    train, test = tiny_data
    m = build_model(small_config(ablations=("no_kg_encoder", "no_rht")), train, [test])
    bag = first_bag(train, "any")
    t = m.masked_triple(bag.e1, bag.e2)
    other = m.masked_triple(bag.e2, bag.e1)
    s = [m.tokenize(bag.sentences[0])]
    a, kg_a = m.forward_pairs(s, [t])
    b, _ = m.forward_pairs(s, [other])
    assert kg_a is None
    np.testing.assert_array_equal(a.data, b.data)


def test_no_text_encoder_ignores_sentence(tiny_data):
    train, test = tiny_data
    m = build_model(small_config(ablations=("no_text_encoder",)), train, [test])
    bag = first_bag(train, "any")
    t = m.masked_triple(bag.e1, bag.e2)
    a, _ = m.forward_pairs([m.tokenize(bag.sentences[0])], [t])
    b, _ = m.forward_pairs([m.tokenize(bag.sentences[1])], [t])
    np.testing.assert_array_equal(a.data, b.data)


def test_trainable_groups_follow_ablations(tiny_data):
    train, test = tiny_data
    frozen = build_model(small_config(ablations=("freeze_kg",)), train, [test])
    assert not any(n.startswith("kg.") for n in frozen.trainable_names())
    no_text = build_model(small_config(ablations=("no_text_encoder",)), train, [test])
    assert not any(n.startswith("text.") for n in no_text.trainable_names())
    full = build_model(small_config(), train, [test])
    assert set(full.trainable_names()) == set(full.params)
    assert not build_model(small_config(ablations=("no_xstitch",)), train, [test]).xstitch_active


# ---- checkpoints --------------------------------------------------------------------
def test_checkpoint_round_trip_is_bitwise(tmp_path, tiny_model, tiny_data):
    from xbe.transe import transe_train
    train, _ = tiny_data
    v = tiny_model.kg_vocab
    tiny_model.transe = transe_train([(0, 0, 1), (2, 1, 3)], len(v.entities), len(v.relations),
                                     dim=tiny_model.config.rht_dim, epochs=2)
    for p in tiny_model.params.values():
        p.data = p.data + np.random.default_rng(1).normal(size=p.data.shape) * 1e-3
    a = tmp_path / "a.ckpt"
    save_checkpoint(tiny_model, a)
    loaded = load_checkpoint(a)
    assert list(loaded.params) == list(tiny_model.params)
    for n, p in tiny_model.params.items():
        assert loaded.params[n].data.tobytes() == p.data.tobytes()
    assert loaded.transe.entity.tobytes() == tiny_model.transe.entity.tobytes()
    b = tmp_path / "b.ckpt"
    save_checkpoint(loaded, b)
    assert a.read_bytes() == b.read_bytes()
    bag = first_bag(train)
    assert predict_bag(loaded, bag.sentences, bag.e1, bag.e2).tobytes() == \
        predict_bag(tiny_model, bag.sentences, bag.e1, bag.e2).tobytes()


def test_checkpoint_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError, match="not an XBE checkpoint"):
        load_checkpoint(p)
    p.write_bytes(b"XBE1" + bytes([9]) + bytes(20))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(p)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_bag_probabilities_on_simplex(seed):
    from xbe.data import SynthSpec, synthesize_splits
    train, test = synthesize_splits(SynthSpec(bag_size=2, train_bags=6, test_bags=2,
                                              entities_per_relation=3, kg_triples_per_entity=1,
                                              seed=seed))
    m = build_model(small_config(width=8, seed=seed), train, [test])
    probs = predict_bags(m, list(test.bags.values()))
    assert np.all(probs >= 0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
