import numpy as np
import pytest

from signstream.autodiff import Adam
from signstream.autodiff.gradcheck import check_tensor_gradients
from signstream.autodiff.tensor import Tensor
from signstream.errors import ConfigError
from signstream.models.translator import (
    MlpAdapter,
    Seq2SeqTranslator,
    TranslatorConfig,
    multi_source_beam_decode,
    slt_loss,
    translation_loss,
)
from signstream.vocab import TextVocab


def make_vocab(n_words=5):
    return TextVocab([f"w{i}" for i in range(n_words)])


def make_translator(vocab, seed=0, dtype=np.float64, **overrides):
    params = dict(vocab_size=vocab.size, d_model=16, heads=2, ffn_width=32,
                  enc_layers=1, dec_layers=1, dropout=0.0, max_len=10)
    params.update(overrides)
    cfg = TranslatorConfig(**params)
    return Seq2SeqTranslator(cfg, np.random.default_rng([seed, 7]), dtype=dtype)


def random_memory(rng, T, d_model=16):
    return rng.normal(size=(T, d_model))


# -------------------------------------------------------------------- adapter


def test_adapter_identity_construction():
    rng = np.random.default_rng(0)
    adapter = MlpAdapter(4, 4, 4, rng, np.float64)
    eye = np.eye(4)
    for layer in (adapter.h1, adapter.h2, adapter.out):
        layer.w.data[:] = eye
        layer.b.data[:] = 0.0
    x = Tensor(np.abs(rng.normal(size=(6, 4))))  # positive input passes ReLU
    np.testing.assert_allclose(adapter(x).data, x.data, atol=1e-12)


def test_adapter_preserves_length():
    adapter = MlpAdapter(8, 12, 16, np.random.default_rng(1), np.float64)
    out = adapter(Tensor(np.random.default_rng(2).normal(size=(7, 8))))
    assert out.shape == (7, 16)


def test_adapter_gradient_check():
    rng = np.random.default_rng(3)
    adapter = MlpAdapter(5, 6, 4, rng, np.float64)
    x = Tensor(rng.normal(size=(3, 5)), requires_grad=True, name="x")
    coeff = Tensor(rng.normal(size=(3, 4)))
    tensors = dict(adapter.named_parameters())
    tensors["x"] = x
    errs = check_tensor_gradients(lambda: (adapter(x) * coeff).sum(), tensors)
    assert max(errs.values()) < 1e-4, errs


# ----------------------------------------------------------------------- loss


def test_loss_with_zeroed_projection_is_uniform():
    vocab = make_vocab(5)
    tr = make_translator(vocab)
    tr.proj.w.data[:] = 0.0
    tr.proj.b.data[:] = 0.0
    rng = np.random.default_rng(4)
    target = vocab.encode(["w0", "w3"])
    loss = translation_loss(tr, random_memory(rng, 4), target, vocab)
    positions = len(target) - 1
    assert loss.item() == pytest.approx(positions * np.log(vocab.size), rel=1e-9)


def test_loss_single_word_vocab_constant_probability():
    vocab = make_vocab(1)
    tr = make_translator(vocab)
    tr.proj.w.data[:] = 0.0
    tr.proj.b.data[:] = 0.0
    target = vocab.encode(["w0", "w0", "w0"], add_specials=False)
    target = [vocab.lang_id] + target + [vocab.eos_id]
    loss = translation_loss(tr, random_memory(np.random.default_rng(5), 3), target, vocab)
    # constant probability 1/|vocab| at every one of the W predicted positions
    assert loss.item() == pytest.approx((len(target) - 1) * np.log(vocab.size), rel=1e-9)


def test_loss_near_uniform_at_random_init():
    # fresh models start exactly uniform thanks to the zero projection
    vocab = make_vocab(8)
    tr = make_translator(vocab, seed=11)
    target = vocab.encode(["w1", "w2", "w3"])
    loss = translation_loss(tr, random_memory(np.random.default_rng(6), 5), target, vocab)
    expected = (len(target) - 1) * np.log(vocab.size)
    assert abs(loss.item() - expected) / expected < 0.05


def test_loss_rejects_empty_target():
    vocab = make_vocab(3)
    tr = make_translator(vocab)
    with pytest.raises(ValueError):
        translation_loss(tr, random_memory(np.random.default_rng(7), 3),
                         [vocab.lang_id, vocab.eos_id], vocab)


def test_loss_pad_invariance():
    vocab = make_vocab(4)
    tr = make_translator(vocab, seed=2)
    rng = np.random.default_rng(8)
    mem = random_memory(rng, 4)
    target = vocab.encode(["w0", "w2"])
    base = translation_loss(tr, mem, target, vocab, pad_to=len(target))
    padded = translation_loss(tr, mem, target, vocab, pad_to=len(target) + 3)
    assert padded.item() == pytest.approx(base.item(), abs=1e-10)


def test_overfit_single_pair_monotone():
    vocab = make_vocab(4)
    tr = make_translator(vocab, seed=3)
    rng = np.random.default_rng(9)
    mem = random_memory(rng, 4)
    target = vocab.encode(["w1", "w3", "w0"])
    params = tr.named_parameters()
    opt = Adam([{"params": params, "lr": 3e-4}], weight_decay=0.0)
    losses = []
    for _ in range(50):
        opt.zero_grad()
        loss = translation_loss(tr, mem, target, vocab)
        loss.backward()
        losses.append(loss.item())
        opt.step()
    assert all(b < a + 1e-9 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_gradient_check_through_translator():
    vocab = make_vocab(3)
    tr = make_translator(vocab, seed=5)
    rng = np.random.default_rng(10)
    mem = rng.normal(size=(3, 16))
    target = vocab.encode(["w0", "w1"])
    params = tr.named_parameters()
    picks = {
        k: params[k]
        for k in (
            "tgt_embed.table",
            "enc_layers.0.attn.q.w",
            "dec_layers.0.cross_attn.out.w",
            "dec_layers.0.ffn.inner.b",
            "proj.w",
        )
    }
    errs = check_tensor_gradients(
        lambda: translation_loss(tr, mem, target, vocab), picks
    )
    assert max(errs.values()) < 1e-4, errs


# ------------------------------------------------------------------- slt loss


def test_slt_loss_composition():
    slr = Tensor(np.array(2.5))
    assert slt_loss(slr, []).item() == pytest.approx(2.5)
    parts = [Tensor(np.array(0.5)) for _ in range(3)]
    assert slt_loss(slr, parts).item() == pytest.approx(2.5 + 1.5)


# ------------------------------------------------------------------- decoding


def test_causality_future_tokens_do_not_change_past_steps():
    vocab = make_vocab(6)
    tr = make_translator(vocab, seed=6).eval()
    tr.proj.w.data[:] = np.random.default_rng(99).normal(size=tr.proj.w.shape) * 0.3
    mem = tr.encode(random_memory(np.random.default_rng(11), 4))
    a = [vocab.lang_id, 3, 4, 5]
    b = [vocab.lang_id, 3, 8, 7]
    la = tr.decode_logits(mem, a).data
    lb = tr.decode_logits(mem, b).data
    np.testing.assert_array_equal(la[:2], lb[:2])
    assert not np.allclose(la[2:], lb[2:])


def test_identical_translators_match_single_decode():
    vocab = make_vocab(5)
    translators = [make_translator(vocab, seed=42) for _ in range(3)]
    rng = np.random.default_rng(12)
    mem = random_memory(rng, 4)
    fused = multi_source_beam_decode(translators, [mem, mem, mem], vocab, beam_width=5)
    single = multi_source_beam_decode(translators[:1], [mem], vocab, beam_width=5)
    assert fused == single


def test_beam_one_equals_stepwise_greedy():
    vocab = make_vocab(5)
    tr1 = make_translator(vocab, seed=13)
    tr2 = make_translator(vocab, seed=14)
    rng = np.random.default_rng(15)
    mems = [random_memory(rng, 3), random_memory(rng, 5)]
    got = multi_source_beam_decode([tr1, tr2], mems, vocab, beam_width=1, max_len=8)

    for t in (tr1, tr2):
        t.eval()
    from signstream.autodiff import softmax as sm

    encs = [tr1.encode(mems[0]), tr2.encode(mems[1])]
    tokens = [vocab.lang_id]
    greedy = []
    for _ in range(8):
        rows = [
            sm(t.decode_logits(m, tokens), axis=-1).data[-1]
            for t, m in zip((tr1, tr2), encs)
        ]
        mean = np.mean(rows, axis=0)
        mean[vocab.pad_id] = mean[vocab.lang_id] = 0.0
        tok = int(np.argmax(mean))
        if tok == vocab.eos_id:
            break
        greedy.append(tok)
        tokens.append(tok)
    assert got == greedy


def test_beam_mean_rows_are_distributions():
    vocab = make_vocab(4)
    tr = make_translator(vocab, seed=16).eval()
    mem = tr.encode(random_memory(np.random.default_rng(17), 3))
    from signstream.autodiff import softmax as sm

    row = sm(tr.decode_logits(mem, [vocab.lang_id]), axis=-1).data[-1]
    assert row.sum() == pytest.approx(1.0, abs=1e-9)


def test_decoder_defaults():
    import inspect

    sig = inspect.signature(multi_source_beam_decode)
    assert sig.parameters["beam_width"].default == 5
    assert "length_penalty" not in sig.parameters


def test_translator_config_validation():
    with pytest.raises(ConfigError):
        TranslatorConfig(vocab_size=10, d_model=10, heads=4)
    with pytest.raises(ConfigError):
        TranslatorConfig(vocab_size=2)
