"""Encoder tests: LSTM cell algebra, BiLSTM symmetry, gradient flow."""

import numpy as np
import pytest

from disner import autodiff as ad
from disner.corpus import Token, tokenize
from disner.embeddings import build_char_vocab
from disner.encoder import (
    BiLstmParams,
    LstmParams,
    bilstm,
    bilstm_final,
    char_representation,
    contextual_representation,
    init_bilstm,
    init_lstm,
    lstm_step,
    token_representation,
)
from disner.errors import ShapeError

from disner.corpus import Sentence


def _rng(seed=0):
    return np.random.default_rng(seed)


def _zero_lstm(input_dim, hidden):
    z = lambda *shape: ad.param(np.zeros(shape))
    return LstmParams(hidden,
                      z(hidden, input_dim), z(hidden, hidden), z(hidden),
                      z(hidden, input_dim), z(hidden, hidden), z(hidden),
                      z(hidden, input_dim), z(hidden, hidden), z(hidden),
                      z(hidden, input_dim), z(hidden, hidden), z(hidden))


def _np_lstm_states(p: LstmParams, xs):
    """Straight-line numpy reimplementation of the same recurrence."""
    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    h = np.zeros(p.hidden)
    c = np.zeros(p.hidden)
    out = []
    for x in xs:
        i = sig(p.wi.value @ x + p.ui.value @ h + p.bi.value)
        f = sig(p.wf.value @ x + p.uf.value @ h + p.bf.value)
        o = sig(p.wo.value @ x + p.uo.value @ h + p.bo.value)
        g = np.tanh(p.wg.value @ x + p.ug.value @ h + p.bg.value)
        c = f * c + i * g
        h = o * np.tanh(c)
        out.append(h.copy())
    return out


class TestLstmStep:
    def test_zero_everything_gives_zero_hidden(self):
        p = _zero_lstm(3, 4)
        h, c = lstm_step(p, ad.constant(np.zeros(3)),
                         ad.constant(np.zeros(4)), ad.constant(np.zeros(4)))
        np.testing.assert_array_equal(h.value, np.zeros(4))
        np.testing.assert_array_equal(c.value, np.zeros(4))

    def test_saturated_forget_gate_preserves_cell(self):
        p = _zero_lstm(2, 3)
        p.bf.value[:] = 50.0   # forget ≈ 1
        p.bi.value[:] = -50.0  # input ≈ 0
        c_prev = np.array([0.7, -1.2, 2.5])
        _, c = lstm_step(p, ad.constant(np.ones(2)),
                         ad.constant(np.zeros(3)), ad.constant(c_prev))
        np.testing.assert_allclose(c.value, c_prev, atol=1e-12)

    def test_matches_straight_line_reimplementation(self):
        rng = _rng(3)
        p = init_lstm(4, 5, rng)
        xs = [rng.normal(size=4) for _ in range(6)]
        h = ad.constant(np.zeros(5))
        c = ad.constant(np.zeros(5))
        graph_states = []
        for x in xs:
            h, c = lstm_step(p, ad.constant(x), h, c)
            graph_states.append(h.value)
        for ours, theirs in zip(graph_states, _np_lstm_states(p, xs)):
            np.testing.assert_allclose(ours, theirs, atol=1e-12)


class TestInit:
    def test_glorot_bounds(self):
        p = init_lstm(10, 20, _rng(0))
        bound_w = np.sqrt(6.0 / 30)
        bound_u = np.sqrt(6.0 / 40)
        assert np.all(np.abs(p.wi.value) <= bound_w)
        assert np.all(np.abs(p.ui.value) <= bound_u)

    def test_forget_bias_is_one(self):
        p = init_lstm(3, 4, _rng(0))
        np.testing.assert_array_equal(p.bf.value, np.ones(4))
        np.testing.assert_array_equal(p.bi.value, np.zeros(4))

    def test_deterministic(self):
        a = init_lstm(3, 4, _rng(5))
        b = init_lstm(3, 4, _rng(5))
        np.testing.assert_array_equal(a.wi.value, b.wi.value)

    def test_bilstm_direction_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            BiLstmParams(init_lstm(3, 4, _rng(0)), init_lstm(3, 5, _rng(0)))

    def test_named_parameters_unique(self):
        p = init_bilstm(3, 4, _rng(0))
        names = [n for n, _ in p.named("word")]
        assert len(names) == 24
        assert len(set(names)) == 24


class TestBilstm:
    def test_empty_rejected(self):
        p = init_bilstm(3, 4, _rng(0))
        with pytest.raises(ShapeError, match="empty"):
            bilstm(p, [])
        with pytest.raises(ShapeError, match="empty"):
            bilstm_final(p, [])

    def test_length_one(self):
        p = init_bilstm(3, 4, _rng(1))
        out = bilstm(p, [ad.constant(_rng(2).normal(size=3))])
        assert len(out) == 1
        assert out[0].shape == (8,)

    def test_zero_weights_zero_outputs(self):
        fwd = _zero_lstm(3, 4)
        bwd = _zero_lstm(3, 4)
        out = bilstm(BiLstmParams(fwd, bwd),
                     [ad.constant(_rng(0).normal(size=3)) for _ in range(3)])
        for o in out:
            np.testing.assert_array_equal(o.value, np.zeros(8))

    def test_palindrome_halves_swap(self):
        shared = init_lstm(3, 4, _rng(7))
        p = BiLstmParams(shared, shared)
        rng = _rng(8)
        a, b = rng.normal(size=3), rng.normal(size=3)
        out = bilstm(p, [ad.constant(a), ad.constant(b), ad.constant(a)])
        first, last = out[0].value, out[2].value
        np.testing.assert_allclose(first[:4], last[4:], atol=1e-12)
        np.testing.assert_allclose(first[4:], last[:4], atol=1e-12)

    def test_output_count_matches_input(self):
        p = init_bilstm(2, 3, _rng(0))
        for m in (1, 2, 5, 11):
            xs = [ad.constant(_rng(m).normal(size=2)) for _ in range(m)]
            assert len(bilstm(p, xs)) == m


class TestCharRepresentation:
    def _setup(self):
        sents = [Sentence(tuple(tokenize("AS as Ataxia")), "d", 0)]
        vocab = build_char_vocab(sents)
        rng = _rng(4)
        table = ad.param(rng.normal(size=(vocab.size, 6)))
        params = init_bilstm(6, 5, rng)
        return vocab, table, params

    def test_case_matters(self):
        vocab, table, params = self._setup()
        upper = char_representation("AS", vocab, table, params)
        lower = char_representation("as", vocab, table, params)
        assert not np.allclose(upper.value, lower.value)

    def test_purity(self):
        vocab, table, params = self._setup()
        a = char_representation("Ataxia", vocab, table, params)
        b = char_representation("Ataxia", vocab, table, params)
        np.testing.assert_array_equal(a.value, b.value)

    def test_single_character(self):
        vocab, table, params = self._setup()
        out = char_representation("A", vocab, table, params)
        assert out.shape == (10,)

    def test_unknown_chars_fall_back(self):
        vocab, table, params = self._setup()
        out = char_representation("ΩΩ", vocab, table, params)
        assert out.shape == (10,)


def _tiny_setup(word_hidden=4, char_hidden=3, word_dim=5, char_dim=4, seed=0):
    rng = np.random.default_rng(seed)
    text = "The risk of colorectal cancer was significantly high ."
    sent = Sentence(tuple(tokenize(text)), "d", 0)
    char_vocab = build_char_vocab([sent])
    word_vocab = {"UNK": 0, "NUM": 1, "the": 2, "risk": 3, "of": 4,
                  "colorectal": 5, "cancer": 6, "was": 7}
    word_table = ad.param(rng.normal(size=(len(word_vocab), word_dim)))
    char_table = ad.param(rng.normal(size=(char_vocab.size, char_dim)))
    char_params = init_bilstm(char_dim, char_hidden, rng)
    input_dim = 2 * char_hidden + word_dim + 4
    word_params = init_bilstm(input_dim, word_hidden, rng)
    return sent, word_vocab, char_vocab, word_table, char_table, char_params, word_params


class TestContextualRepresentation:
    def test_nine_tokens_shape(self):
        sent, wv, cv, wt, ct, cp, wp = _tiny_setup()
        bits = np.zeros((9, 4))
        out = contextual_representation(sent.tokens, wv, cv, bits, wt, ct, cp, wp)
        assert len(out) == 9
        assert all(o.shape == (8,) for o in out)

    def test_char_ablation_drops_component(self):
        sent, wv, cv, wt, ct, cp, _ = _tiny_setup()
        rng = np.random.default_rng(1)
        word_params = init_bilstm(5 + 4, 4, rng)  # word_dim + dict bits only
        bits = np.zeros((9, 4))
        out = contextual_representation(sent.tokens, wv, cv, bits, wt, ct,
                                        None, word_params)
        assert len(out) == 9 and out[0].shape == (8,)

    def test_inference_deterministic(self):
        sent, wv, cv, wt, ct, cp, wp = _tiny_setup()
        bits = np.zeros((9, 4))
        a = contextual_representation(sent.tokens, wv, cv, bits, wt, ct, cp, wp)
        b = contextual_representation(sent.tokens, wv, cv, bits, wt, ct, cp, wp)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.value, y.value)

    def test_right_context_flows_left(self):
        sent, wv, cv, wt, ct, cp, wp = _tiny_setup()
        bits = np.zeros((9, 4))
        base = contextual_representation(sent.tokens, wv, cv, bits, wt, ct, cp, wp)
        changed_tokens = list(sent.tokens)
        changed_tokens[8] = Token("cancer", changed_tokens[8].start,
                                  changed_tokens[8].start + 6)
        out = contextual_representation(tuple(changed_tokens), wv, cv, bits,
                                        wt, ct, cp, wp)
        assert not np.allclose(base[0].value, out[0].value)

    def test_dict_bits_length_mismatch(self):
        sent, wv, cv, wt, ct, cp, wp = _tiny_setup()
        with pytest.raises(ShapeError):
            contextual_representation(sent.tokens, wv, cv, np.zeros((3, 4)),
                                      wt, ct, cp, wp)

    def test_dropout_changes_training_output(self):
        sent, wv, cv, wt, ct, cp, wp = _tiny_setup()
        bits = np.zeros((9, 4))
        plain = contextual_representation(sent.tokens, wv, cv, bits, wt, ct, cp, wp)
        dropped = contextual_representation(
            sent.tokens, wv, cv, bits, wt, ct, cp, wp,
            dropout_rate=0.5, rng=np.random.default_rng(0), training=True)
        assert not np.allclose(plain[0].value, dropped[0].value)

    def test_shape_contract_all_lengths(self):
        rng = np.random.default_rng(2)
        char_vocab = build_char_vocab([Sentence(tuple(tokenize("abc")), "d", 0)])
        word_vocab = {"UNK": 0, "NUM": 1}
        wt = ad.param(rng.normal(size=(2, 3)))
        ct = ad.param(rng.normal(size=(char_vocab.size, 2)))
        cp = init_bilstm(2, 2, rng)
        wp = init_bilstm(2 * 2 + 3 + 4, 2, rng)
        for m in range(1, 51):
            tokens = tuple(Token("ab", 3 * i, 3 * i + 2) for i in range(m))
            out = contextual_representation(tokens, word_vocab, char_vocab,
                                            np.zeros((m, 4)), wt, ct, cp, wp)
            assert len(out) == m
            assert all(o.shape == (4,) for o in out)


class TestTokenRepresentation:
    def test_combined_length(self):
        _, wv, cv, wt, ct, cp, _ = _tiny_setup()
        rep = token_representation("cancer", wv["cancer"], np.ones(4), wt, cv, ct, cp)
        assert rep.combined.shape == (2 * 3 + 5 + 4,)
        assert rep.char_rep.shape == (6,)
        np.testing.assert_array_equal(rep.dict_bits.value, np.ones(4))

    def test_without_char(self):
        _, wv, cv, wt, ct, _, _ = _tiny_setup()
        rep = token_representation("cancer", wv["cancer"], np.zeros(4), wt, cv, ct, None)
        assert rep.char_rep is None
        assert rep.combined.shape == (5 + 4,)


def test_end_to_end_gradients_on_three_tokens():
    rng = np.random.default_rng(13)
    tokens = tuple(tokenize("colon cancer ."))
    char_vocab = build_char_vocab([Sentence(tokens, "d", 0)])
    word_vocab = {"UNK": 0, "NUM": 1, "colon": 2, "cancer": 3, ".": 4}
    wt = ad.param(rng.normal(size=(5, 3)), name="word_table")
    ct = ad.param(rng.normal(size=(char_vocab.size, 2)), name="char_table")
    cp = init_bilstm(2, 2, rng)
    wp = init_bilstm(2 * 2 + 3 + 4, 2, rng)
    params = {"word_table": wt, "char_table": ct}
    params.update(cp.named("char"))
    params.update(wp.named("word"))
    bits = np.zeros((3, 4))
    bits[0, 1] = bits[1, 1] = 1.0

    weights = np.random.default_rng(99).normal(size=(3, 4))

    def build():
        outs = contextual_representation(tokens, word_vocab, char_vocab, bits,
                                         wt, ct, cp, wp)
        total = None
        for i, o in enumerate(outs):
            term = ad.reduce_sum(ad.mul(o, ad.constant(weights[i])))
            total = term if total is None else total + term
        return total

    assert ad.gradient_check(build, params, h=1e-5) < 1e-4
