"""Token representations and BiLSTM encoding.

A token's representation is the concatenation of (1) a character-level
BiLSTM's final states over the raw surface, (2) its word-embedding row, and
(3) its 4-bit dictionary vector.  A word-level BiLSTM over these produces the
contextual representation that the CRF scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .embeddings import CharVocab, normalize_token
from .errors import ShapeError


@dataclass
class LstmParams:
    """Gate weights: w* act on the input, u* on the previous hidden state."""

    hidden: int
    wi: Node
    ui: Node
    bi: Node
    wf: Node
    uf: Node
    bf: Node
    wo: Node
    uo: Node
    bo: Node
    wg: Node
    ug: Node
    bg: Node

    def named(self, prefix: str):
        for field in ("wi", "ui", "bi", "wf", "uf", "bf",
                      "wo", "uo", "bo", "wg", "ug", "bg"):
            yield f"{prefix}.{field}", getattr(self, field)


@dataclass
class BiLstmParams:
    forward: LstmParams
    backward: LstmParams

    def __post_init__(self):
        if self.forward.hidden != self.backward.hidden:
            raise ShapeError(
                f"direction hidden sizes differ: {self.forward.hidden} "
                f"vs {self.backward.hidden}")

    @property
    def hidden(self) -> int:
        return self.forward.hidden

    def named(self, prefix: str):
        yield from self.forward.named(f"{prefix}.fwd")
        yield from self.backward.named(f"{prefix}.bwd")


@dataclass
class TokenRep:
    char_rep: Node | None
    word_vec: Node
    dict_bits: Node
    combined: Node


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_lstm(input_dim: int, hidden: int, rng: np.random.Generator) -> LstmParams:
    """Glorot-uniform weights, zero biases except the forget gate's (1.0)."""
    def w():
        return ad.param(glorot(rng, hidden, input_dim))

    def u():
        return ad.param(glorot(rng, hidden, hidden))

    def b(value=0.0):
        return ad.param(np.full(hidden, value))

    return LstmParams(
        hidden=hidden,
        wi=w(), ui=u(), bi=b(),
        wf=w(), uf=u(), bf=b(1.0),
        wo=w(), uo=u(), bo=b(),
        wg=w(), ug=u(), bg=b(),
    )


def init_bilstm(input_dim: int, hidden: int, rng: np.random.Generator) -> BiLstmParams:
    return BiLstmParams(init_lstm(input_dim, hidden, rng),
                        init_lstm(input_dim, hidden, rng))


def lstm_step(params: LstmParams, x_t: Node, h_prev: Node, c_prev: Node) -> tuple[Node, Node]:
    """One LSTM cell update; returns (h_t, c_t)."""
    i = ad.sigmoid(params.wi @ x_t + params.ui @ h_prev + params.bi)
    f = ad.sigmoid(params.wf @ x_t + params.uf @ h_prev + params.bf)
    o = ad.sigmoid(params.wo @ x_t + params.uo @ h_prev + params.bo)
    g = ad.tanh(params.wg @ x_t + params.ug @ h_prev + params.bg)
    c_t = f * c_prev + i * g
    h_t = o * ad.tanh(c_t)
    return h_t, c_t


def _run_direction(params: LstmParams, inputs: list[Node]) -> list[Node]:
    h = ad.constant(np.zeros(params.hidden))
    c = ad.constant(np.zeros(params.hidden))
    states = []
    for x_t in inputs:
        h, c = lstm_step(params, x_t, h, c)
        states.append(h)
    return states


def bilstm(params: BiLstmParams, inputs: list[Node]) -> list[Node]:
    """Per-step concat of forward and backward hidden states."""
    if not inputs:
        raise ShapeError("bilstm over an empty sequence")
    fwd = _run_direction(params.forward, inputs)
    bwd = _run_direction(params.backward, list(reversed(inputs)))
    bwd.reverse()
    return [ad.concat([f, b]) for f, b in zip(fwd, bwd)]


def bilstm_final(params: BiLstmParams, inputs: list[Node]) -> Node:
    """Concat of the two directions' final states (sequence summary)."""
    if not inputs:
        raise ShapeError("bilstm over an empty sequence")
    fwd = _run_direction(params.forward, inputs)
    bwd = _run_direction(params.backward, list(reversed(inputs)))
    return ad.concat([fwd[-1], bwd[-1]])


def char_representation(surface: str, char_vocab: CharVocab, char_table: Node,
                        params: BiLstmParams) -> Node:
    """Character BiLSTM summary of a word's raw surface (case preserved)."""
    indices = [char_vocab.lookup(c) for c in surface]
    rows = ad.lookup(char_table, indices)
    return bilstm_final(params, [rows[t] for t in range(len(indices))])


def token_representation(surface: str, word_row: int, dict_bits: np.ndarray,
                         word_table: Node, char_vocab: CharVocab,
                         char_table: Node, char_params: BiLstmParams | None) -> TokenRep:
    """char ⊕ word ⊕ dict; pass char_params=None to drop the char component."""
    word_vec = word_table[word_row]
    bits = ad.constant(dict_bits)
    if char_params is None:
        return TokenRep(None, word_vec, bits, ad.concat([word_vec, bits]))
    char_rep = char_representation(surface, char_vocab, char_table, char_params)
    return TokenRep(char_rep, word_vec, bits, ad.concat([char_rep, word_vec, bits]))


def contextual_representation(tokens, word_vocab: dict[str, int],
                              char_vocab: CharVocab, dict_bits: np.ndarray,
                              word_table: Node, char_table: Node,
                              char_params: BiLstmParams | None,
                              word_params: BiLstmParams, *,
                              dropout_rate: float = 0.0,
                              rng: np.random.Generator | None = None,
                              training: bool = False) -> list[Node]:
    """Per-token contextual vectors [2·word_hidden] for one sentence.

    ``dict_bits`` is an [m × 4] matrix (all zeros under the dictionary
    ablation).  Dropout hits each combined token representation before the
    word-level BiLSTM.
    """
    if len(tokens) != dict_bits.shape[0]:
        raise ShapeError(
            f"{len(tokens)} tokens but dict bits for {dict_bits.shape[0]}")
    combined = []
    for t, token in enumerate(tokens):
        row = word_vocab.get(normalize_token(token.surface), 0)
        rep = token_representation(token.surface, row, dict_bits[t], word_table,
                                   char_vocab, char_table, char_params)
        vec = rep.combined
        if training and dropout_rate > 0.0:
            vec = ad.dropout(vec, dropout_rate, rng, training=True)
        combined.append(vec)
    return bilstm(word_params, combined)
