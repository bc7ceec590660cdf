import numpy as np
import pytest

from xbe import tensor as tn
from xbe.encoders import (
    EncoderConfig,
    KgTriple,
    TokenizedSentence,
    batch_summary,
    encode_kg_layers,
    encode_text_layers,
    kg_mask_logits,
    pad_sentences,
    sentence_summary,
)
from xbe.tensor import Tensor


def _sentence(model, n=8, head=(0, 1), tail=(3, 4), seed=0):
    v = len(model.text_vocab)
    ids = np.random.default_rng(seed).integers(6, v, size=n)
    return TokenizedSentence(ids, head, tail)


def _triple(model, masked=True):
    v = model.kg_vocab
    e1, e2 = v.entities[0], v.entities[1]
    rel = v.mask_id if masked else v.stoi[v.relations[0]]
    return KgTriple(v.stoi[e1], rel, v.stoi[e2])


def test_config_rejects_bad_shapes():
    with pytest.raises(ValueError):
        EncoderConfig(depth=0, vocab_size=5).validate()
    with pytest.raises(ValueError):
        EncoderConfig(width=10, heads=4, vocab_size=5).validate()
    with pytest.raises(ValueError):
        EncoderConfig(max_len=2, vocab_size=5).validate("kg")


def test_tokenized_sentence_spans_validated():
    with pytest.raises(ValueError, match="overlaps"):
        TokenizedSentence([1, 2, 3], (0, 2), (1, 3))
    with pytest.raises(ValueError):
        TokenizedSentence([1, 2, 3], (0, 1), (2, 4))
    with pytest.raises(ValueError):
        TokenizedSentence([1, 2, 3], (1, 1), (2, 3))


def test_single_token_input_shapes(tiny_model):
    d = tiny_model.config.text.width
    states = tiny_model.text_encoder.run(np.array([[7]]))
    assert len(states) == tiny_model.config.text.depth
    assert all(s.shape == (1, 1, d) for s in states)


def test_text_layers_shape_and_finite(tiny_model):
    sent = _sentence(tiny_model)
    states = encode_text_layers(tiny_model, sent)
    assert len(states) == tiny_model.config.text.depth
    for s in states:
        assert s.shape == (8, tiny_model.config.text.width)
        assert np.isfinite(s.data).all()


def test_position_embeddings_make_order_matter(tiny_model):
    sent = _sentence(tiny_model)
    ids = sent.ids.copy()
    ids[5], ids[6] = ids[6], ids[5]
    assert ids[5] != ids[6]
    a = encode_text_layers(tiny_model, sent)[-1].data
    b = encode_text_layers(tiny_model, TokenizedSentence(ids, sent.head, sent.tail))[-1].data
    assert not np.allclose(a, b)


def test_out_of_vocabulary_token_rejected(tiny_model):
    bad = TokenizedSentence([1, len(tiny_model.text_vocab), 2], (0, 1), (2, 3))
    with pytest.raises(IndexError):
        encode_text_layers(tiny_model, bad)


def test_final_states_are_layer_normalised(tiny_model):
    s = encode_text_layers(tiny_model, _sentence(tiny_model))[-1].data
    g = tiny_model.params["text.ln_f.g"].data
    b = tiny_model.params["text.ln_f.b"].data
    xhat = (s - b) / g
    np.testing.assert_allclose(xhat.var(axis=-1), 1.0, atol=1e-9)


def test_self_attention_rows_sum_to_one(tiny_model):
    rec = []
    ids, mask = pad_sentences([_sentence(tiny_model, 5, seed=1), _sentence(tiny_model, 8, seed=2)])
    tiny_model.text_encoder.run(ids, mask, rec)
    for att in rec:
        assert np.all(np.abs(att.sum(axis=-1) - 1.0) <= 1e-12)
        # padded keys of the short sentence receive no weight
        assert np.all(att[0, :, :, 5:] == 0.0)


def test_kg_layers_shapes(tiny_model):
    states = encode_kg_layers(tiny_model, _triple(tiny_model))
    assert all(s.shape == (3, tiny_model.config.kg.width) for s in states)


def test_masking_changes_relation_position(tiny_model):
    masked = encode_kg_layers(tiny_model, _triple(tiny_model, True))[-1].data
    plain = encode_kg_layers(tiny_model, _triple(tiny_model, False))[-1].data
    assert not np.allclose(masked[1], plain[1])


def test_swapping_entities_changes_output(tiny_model):
    t = _triple(tiny_model)
    a = encode_kg_layers(tiny_model, t)[-1].data
    b = encode_kg_layers(tiny_model, KgTriple(t.tail, t.relation, t.head))[-1].data
    assert not np.allclose(a, b)


def test_invalid_triple_rejected(tiny_model):
    t = _triple(tiny_model)
    with pytest.raises(ValueError):
        encode_kg_layers(tiny_model, KgTriple(0, t.relation, t.tail))  # relation id in entity slot
    with pytest.raises(ValueError):
        encode_kg_layers(tiny_model, KgTriple(t.head, t.head, t.tail))


def test_sentence_summary_length_and_degenerate_case():
    d = 4
    s = Tensor(np.random.default_rng(0).normal(size=(5, d)))
    assert sentence_summary(s, (0, 1), (2, 3)).shape == (4 * d,)
    one = Tensor(np.array([[1.0, -2.0, 3.0, 0.5]]))
    out = sentence_summary(one, (0, 1), (0, 1)).data.reshape(4, d)
    assert all(np.array_equal(out[i], one.data[0]) for i in range(4))


def test_sentence_summary_hand_case():
    s = Tensor([[1.0, 4.0], [3.0, 2.0]])
    out = sentence_summary(s, (0, 1), (1, 2)).data
    assert out.tolist() == [1.0, 4.0, 3.0, 2.0, 2.0, 3.0, 3.0, 4.0]


def test_sentence_summary_rejects_empty_span():
    with pytest.raises(ValueError):
        sentence_summary(Tensor(np.ones((3, 2))), (1, 1), (2, 3))


def test_batch_summary_matches_single_summary():
    rng = np.random.default_rng(4)
    S = rng.normal(size=(2, 5, 3))
    mask = np.array([[True] * 5, [True, True, True, False, False]])
    out = batch_summary(Tensor(S), mask, np.array([0, 2]), np.array([3, 1])).data
    np.testing.assert_array_equal(out[0], sentence_summary(Tensor(S[0]), (0, 1), (3, 4)).data)
    np.testing.assert_array_equal(out[1], sentence_summary(Tensor(S[1, :3]), (2, 3), (1, 2)).data)


def test_kg_mask_logits_length_and_oracle(tiny_model):
    t_last = encode_kg_layers(tiny_model, _triple(tiny_model))[-1]
    logits = kg_mask_logits(tiny_model, t_last, 1).data
    emb = tiny_model.params["kg.tok_emb"].data
    bias = tiny_model.params["kg.out_bias"].data
    assert logits.shape == (len(tiny_model.kg_vocab),)
    np.testing.assert_allclose(logits, emb @ t_last.data[1] + bias, rtol=1e-12)


def test_kg_mask_logits_zero_state_gives_bias(tiny_model):
    tiny_model.params["kg.out_bias"].data = np.linspace(-1, 1, len(tiny_model.kg_vocab))
    out = kg_mask_logits(tiny_model, Tensor(np.zeros((3, tiny_model.config.kg.width))), 1).data
    np.testing.assert_array_equal(out, tiny_model.params["kg.out_bias"].data)
    with pytest.raises(ValueError):
        kg_mask_logits(tiny_model, Tensor(np.zeros((3, 4))), 3)


def test_encoder_is_deterministic(tiny_model):
    sent = _sentence(tiny_model)
    a = encode_text_layers(tiny_model, sent)[-1].data
    b = encode_text_layers(tiny_model, sent)[-1].data
    assert a.tobytes() == b.tobytes()


def test_encoder_gradient_reaches_embeddings(tiny_model):
    sent = _sentence(tiny_model)
    tiny_model.zero_grad()
    last = encode_text_layers(tiny_model, sent)[-1]
    weights = np.random.default_rng(9).normal(size=last.shape)
    tn.sum(tn.mul(last, weights)).backward()
    g = tiny_model.params["text.tok_emb"].grad
    assert np.abs(g[sent.ids]).min() > 1e-8
