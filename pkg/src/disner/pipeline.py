"""Training and prediction pipeline tying the model components together.

The pipeline owns configuration parsing, parameter assembly, the epoch loop
with best-dev checkpoint selection, document-level prediction, and the
binary checkpoint format.  Four independent switches control what the model
uses: dictionary features (``use_dictionary``), pretrained word vectors
(``use_pretrained``), sentence-level decoding with learned transitions
(``use_global_decoding``), and the character-level encoder (``use_char``).
"""

from __future__ import annotations

import hashlib
import pickle
import struct
from dataclasses import dataclass, fields, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Node, backward, clip_global_norm
from .corpus import Document, Mention, Sentence, gold_token_spans, split_sentences
from .crf import (EmissionProjection, ScoreMatrix, TagInventory,
                  TransitionMatrix, init_projection, legal_transition,
                  local_decode, local_loss, nll_loss, project, viterbi_decode,
                  NEG_INF)
from .embeddings import (CharVocab, EmbeddingTable, build_char_vocab,
                         normalize_token, random_table)
from .encoder import BiLstmParams, contextual_representation, init_bilstm
from .errors import (CheckpointError, ConfigError, DisnerError,
                     NonFiniteError, ShapeError)
from .evaluate import EvalReport, score_entities
from .lexicon import Lexicon, feature_matrix
from .tags import Scheme, Span, TagSequence, decode_tags, encode_spans, repair

_CKP_MAGIC = b"DNERCKP1"
_CKP_VERSION = 1


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ModelConfig:
    """All knobs of a training run; the defaults are the full-model settings."""

    epochs: int = 15
    dropout: float = 0.5
    batch_size: int = 20
    optimizer: str = "adam"
    learning_rate: float = 0.001
    learning_decay: float = 0.9
    char_lstm_units: int = 100
    word_lstm_units: int = 300
    char_dim: int = 100
    word_dim: int = 200
    scheme: Scheme = Scheme.IOBES
    use_dictionary: bool = True
    use_pretrained: bool = True
    use_global_decoding: bool = True
    use_char: bool = True
    mask_illegal: bool = False
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "char_lstm_units",
                     "word_lstm_units", "char_dim", "word_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.optimizer != "adam":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.learning_rate <= 0 or self.learning_decay <= 0:
            raise ConfigError("learning rate and decay must be positive")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")

    def flags(self) -> dict[str, bool]:
        """Ablation switchboard in report order."""
        return {"V1": self.use_dictionary, "V2": self.use_pretrained,
                "V3": self.use_global_decoding, "V4": self.use_char}


_BOOL_KEYS = frozenset({"use_dictionary", "use_pretrained",
                        "use_global_decoding", "use_char", "mask_illegal"})
_INT_KEYS = frozenset({"epochs", "batch_size", "char_lstm_units",
                       "word_lstm_units", "char_dim", "word_dim", "seed"})
_FLOAT_KEYS = frozenset({"dropout", "learning_rate", "learning_decay",
                         "clip_norm"})
_ALIASES = {"v1": "use_dictionary", "v2": "use_pretrained",
            "v3": "use_global_decoding", "v4": "use_char"}


def _coerce(key: str, raw: str):
    try:
        if key in _BOOL_KEYS:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key == "scheme":
            return Scheme.parse(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for config key {key!r}") from None


def apply_overrides(base: ModelConfig, overrides: dict[str, str]) -> ModelConfig:
    """Replace config fields from raw string values (CLI flags, file keys)."""
    valid = {f.name for f in fields(ModelConfig)}
    kwargs = {}
    for key, raw in overrides.items():
        name = _ALIASES.get(key.lower(), key)
        if name not in valid:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[name] = _coerce(name, raw)
    return replace(base, **kwargs)


def parse_config(text: str, base: ModelConfig | None = None) -> ModelConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    overrides: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        overrides[key.strip()] = value.strip()
    return apply_overrides(base or ModelConfig(), overrides)


def config_to_text(config: ModelConfig) -> str:
    """Serialize a config as ``key = value`` lines (inverse of parse_config)."""
    lines = []
    for f in fields(ModelConfig):
        value = getattr(config, f.name)
        if isinstance(value, Scheme):
            value = value.value
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def _config_to_dict(config: ModelConfig) -> dict:
    out = {}
    for f in fields(ModelConfig):
        value = getattr(config, f.name)
        out[f.name] = value.value if isinstance(value, Scheme) else value
    return out


def _config_from_dict(data: dict) -> ModelConfig:
    kwargs = dict(data)
    kwargs["scheme"] = Scheme.parse(kwargs["scheme"])
    return ModelConfig(**kwargs)


# ---------------------------------------------------------------------------
# dataset preparation


@dataclass(frozen=True)
class EncodedSentence:
    """A sentence with its gold tags and precomputed dictionary features."""

    sentence: Sentence
    gold: TagSequence
    gold_spans: tuple[Span, ...]
    dict_bits: np.ndarray


def encode_corpus(docs, scheme: Scheme, lexicon: Lexicon | None) -> list[EncodedSentence]:
    """Sentence-split, project gold mentions, and attach dictionary bits."""
    encoded = []
    for doc in docs:
        for sentence in split_sentences(doc):
            spans = gold_token_spans(sentence, doc.mentions)
            gold = encode_spans(len(sentence.tokens), spans, scheme)
            bits = feature_matrix(sentence, lexicon)
            encoded.append(EncodedSentence(sentence, gold, tuple(spans), bits))
    return encoded


def corpus_vocabulary(docs) -> list[str]:
    """Sorted normalized token types over all sentences of the documents."""
    words = {normalize_token(token.surface)
             for doc in docs for sentence in split_sentences(doc)
             for token in sentence.tokens}
    return sorted(words)


def corpus_entity_types(docs) -> tuple[str, ...]:
    types = sorted({m.entity_type for doc in docs for m in doc.mentions})
    return tuple(types) if types else ("Disease",)


# ---------------------------------------------------------------------------
# the model


@dataclass
class Model:
    """Trained parameters plus everything needed to run them on new text."""

    config: ModelConfig
    inventory: TagInventory
    word_vocab: dict[str, int]
    char_vocab: CharVocab
    lexicon: Lexicon | None
    params: dict[str, Node]
    char_params: BiLstmParams | None
    word_params: BiLstmParams
    projection: EmissionProjection
    transitions: Node

    @property
    def word_table(self) -> Node:
        return self.params["word_table"]

    @property
    def char_table(self) -> Node | None:
        return self.params.get("char_table")

    @classmethod
    def initialize(cls, config: ModelConfig, word_table: EmbeddingTable,
                   char_vocab: CharVocab, inventory: TagInventory,
                   lexicon: Lexicon | None) -> "Model":
        if word_table.dim != config.word_dim:
            raise ConfigError(
                f"word vectors have dim {word_table.dim}, config says {config.word_dim}")
        if config.use_dictionary and lexicon is None:
            raise ConfigError("dictionary features enabled but no lexicon given")
        rng = np.random.default_rng([config.seed, 1])
        params: dict[str, Node] = {
            "word_table": ad.param(word_table.vectors.copy(), name="word_table")}
        char_params = None
        if config.use_char:
            scale = np.sqrt(3.0 / config.char_dim)
            params["char_table"] = ad.param(
                rng.uniform(-scale, scale, size=(char_vocab.size, config.char_dim)),
                name="char_table")
            char_params = init_bilstm(config.char_dim, config.char_lstm_units, rng)
            params.update(char_params.named("char"))
        word_input_dim = config.word_dim + 4
        if config.use_char:
            word_input_dim += 2 * config.char_lstm_units
        word_params = init_bilstm(word_input_dim, config.word_lstm_units, rng)
        params.update(word_params.named("word"))
        projection = init_projection(2 * config.word_lstm_units, inventory.size, rng)
        params.update(projection.named("proj"))
        transitions = ad.param(
            np.zeros((inventory.size + 2, inventory.size + 2)), name="transitions")
        params["transitions"] = transitions
        return cls(config, inventory, dict(word_table.vocab), char_vocab,
                   lexicon, params, char_params, word_params, projection,
                   transitions)

    def transition_matrix(self) -> TransitionMatrix:
        """Decode-time transitions; optionally hard-mask scheme violations."""
        block = self.transitions.value.copy()
        if self.config.mask_illegal:
            inv = self.inventory
            labels = list(inv.tags) + [None, None]
            for i, prev in enumerate(labels):
                for j, nxt in enumerate(labels):
                    if i == inv.stop or j == inv.start:
                        continue
                    prev_tag = None if i == inv.start else prev
                    nxt_tag = None if j == inv.stop else nxt
                    if not legal_transition(prev_tag, nxt_tag, inv.scheme):
                        block[i, j] = NEG_INF
        return TransitionMatrix.from_block(block, self.inventory)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: node.value.copy() for name, node in self.params.items()}

    def restore(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.params):
            missing = set(self.params) - set(arrays)
            extra = set(arrays) - set(self.params)
            raise CheckpointError(
                f"parameter names do not match model (missing {sorted(missing)}, "
                f"unexpected {sorted(extra)})")
        for name, value in arrays.items():
            node = self.params[name]
            if node.value.shape != value.shape:
                raise CheckpointError(
                    f"parameter {name!r} has shape {value.shape}, "
                    f"model expects {node.value.shape}")
            node.value = value.copy()


def _sentence_emissions(model: Model, sentence: Sentence, dict_bits: np.ndarray,
                        *, training: bool,
                        rng: np.random.Generator | None = None) -> Node:
    contexts = contextual_representation(
        sentence.tokens, model.word_vocab, model.char_vocab, dict_bits,
        model.word_table, model.char_table, model.char_params,
        model.word_params, dropout_rate=model.config.dropout if training else 0.0,
        rng=rng, training=training)
    return project(contexts, model.projection)


def _sentence_loss(model: Model, enc: EncodedSentence,
                   rng: np.random.Generator) -> Node:
    s = _sentence_emissions(model, enc.sentence, enc.dict_bits,
                            training=True, rng=rng)
    if model.config.use_global_decoding:
        return nll_loss(s, model.transitions, enc.gold, model.inventory)
    return local_loss(s, enc.gold, model.inventory)


def predict_tags(model: Model, sentence: Sentence,
                 dict_bits: np.ndarray | None = None) -> TagSequence:
    """Decode one sentence and repair any scheme violations."""
    if dict_bits is None:
        lex = model.lexicon if model.config.use_dictionary else None
        dict_bits = feature_matrix(sentence, lex)
    s = _sentence_emissions(model, sentence, dict_bits, training=False)
    scores = ScoreMatrix(s.value.copy(), model.inventory)
    if model.config.use_global_decoding:
        decoded = viterbi_decode(scores, model.transition_matrix())
    else:
        decoded = local_decode(scores)
    return repair(decoded.tags, model.inventory.scheme)


def predict_document(model: Model, doc: Document) -> Document:
    """Annotate a document; any mentions already on it are ignored."""
    bare = Document(doc.id, doc.title, doc.abstract)
    mentions = []
    for sentence in split_sentences(bare):
        tags = predict_tags(model, sentence)
        for span in decode_tags(tags):
            start = sentence.tokens[span.start_token].start
            end = sentence.tokens[span.end_token].end
            mentions.append(Mention(start, end, bare.text[start:end],
                                    span.entity_type, ""))
    mentions.sort(key=lambda m: (m.start, m.end))
    return Document(doc.id, doc.title, doc.abstract, tuple(mentions))


def predict_documents(model: Model, docs) -> list[Document]:
    return [predict_document(model, doc) for doc in docs]


def evaluate_documents(gold_docs, pred_docs) -> EvalReport:
    """Entity-level scores between two annotated copies of the same corpus.

    Mentions on both sides are projected onto the gold documents' sentence
    tokenization, then matched strictly on token span and type.
    """
    pred_by_id = {doc.id: doc for doc in pred_docs}
    gold_ids = [doc.id for doc in gold_docs]
    if sorted(gold_ids) != sorted(pred_by_id):
        raise DisnerError("gold and prediction corpora list different document ids")
    gold_spans, pred_spans = [], []
    for gold_doc in gold_docs:
        pred_doc = pred_by_id[gold_doc.id]
        for sentence in split_sentences(gold_doc):
            gold_spans.append(gold_token_spans(sentence, gold_doc.mentions))
            pred_spans.append(gold_token_spans(sentence, pred_doc.mentions))
    return score_entities(gold_spans, pred_spans)


def evaluate_model(model: Model, encoded: list[EncodedSentence]) -> EvalReport:
    """Entity-level scores of the model over pre-encoded sentences."""
    gold = [list(enc.gold_spans) for enc in encoded]
    pred = [decode_tags(predict_tags(model, enc.sentence, enc.dict_bits))
            for enc in encoded]
    return score_entities(gold, pred)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    grad_norm: float
    dev_f1: float


@dataclass
class TrainResult:
    model: Model
    history: tuple[EpochStats, ...]
    best_epoch: int
    best_dev_f1: float


def train(config: ModelConfig, train_docs, dev_docs, *,
          lexicon: Lexicon | None = None,
          pretrained: EmbeddingTable | None = None,
          stop_dev_f1: float | None = None,
          log=None) -> TrainResult:
    """Train a model, keeping the parameters of the best dev-F1 epoch.

    ``pretrained`` supplies word vectors when ``use_pretrained`` is on;
    otherwise vectors are drawn at random from the seed.  With no dev
    sentences, selection falls back to training-set F1.  ``stop_dev_f1``
    ends training early once the selection metric reaches that value.
    """
    say = log or (lambda message: None)
    if config.use_pretrained and pretrained is None:
        raise ConfigError("pretrained vectors enabled but none were given")
    effective_lex = lexicon if config.use_dictionary else None
    train_encoded = encode_corpus(train_docs, config.scheme, effective_lex)
    if not train_encoded:
        raise ConfigError("training corpus has no sentences")
    dev_encoded = encode_corpus(dev_docs, config.scheme, effective_lex)
    selection = dev_encoded or train_encoded

    all_docs = list(train_docs) + list(dev_docs)
    if config.use_pretrained:
        word_table = pretrained
    else:
        word_table = random_table(corpus_vocabulary(all_docs), config.word_dim,
                                  config.seed)
    char_vocab = build_char_vocab([enc.sentence for enc in train_encoded]
                                  + [enc.sentence for enc in dev_encoded])
    inventory = TagInventory.from_scheme(config.scheme,
                                         corpus_entity_types(all_docs))
    model = Model.initialize(config, word_table, char_vocab, inventory,
                             lexicon if config.use_dictionary else None)

    optimizer = Adam(model.params, lr=config.learning_rate,
                     decay=config.learning_decay)
    shuffle_rng = np.random.default_rng([config.seed, 2])
    dropout_rng = np.random.default_rng([config.seed, 3])

    history: list[EpochStats] = []
    best_arrays = model.snapshot()
    best_f1 = -1.0
    best_epoch = 0
    last_norm = 0.0
    for epoch in range(1, config.epochs + 1):
        optimizer.epoch = epoch - 1
        order = shuffle_rng.permutation(len(train_encoded))
        ordered = [train_encoded[i] for i in order]
        ordered.sort(key=lambda enc: len(enc.sentence.tokens))
        batches = [ordered[i:i + config.batch_size]
                   for i in range(0, len(ordered), config.batch_size)]
        batch_order = shuffle_rng.permutation(len(batches))
        losses = []
        norms = []
        for position, index in enumerate(batch_order, 1):
            batch = batches[index]
            optimizer.zero_grad()
            try:
                total = _sentence_loss(model, batch[0], dropout_rng)
                for enc in batch[1:]:
                    total = total + _sentence_loss(model, enc, dropout_rng)
                batch_loss = total * (1.0 / len(batch))
                backward(batch_loss)
            except NonFiniteError as err:
                raise NonFiniteError(
                    f"training aborted at epoch {epoch}, batch {position} of "
                    f"{len(batches)}: {err}; last gradient norm {last_norm:.6g}"
                ) from err
            last_norm = clip_global_norm(model.params.values(), config.clip_norm)
            norms.append(last_norm)
            optimizer.step()
            losses.append(float(batch_loss.value))
        dev_f1 = evaluate_model(model, selection).f1
        stats = EpochStats(epoch, float(np.mean(losses)), float(np.mean(norms)),
                           dev_f1)
        history.append(stats)
        say(f"epoch {epoch}/{config.epochs} loss={stats.mean_loss:.4f} "
            f"grad_norm={stats.grad_norm:.4f} dev_f1={dev_f1:.4f} "
            f"lr={optimizer.effective_lr:.6g}")
        if dev_f1 > best_f1:
            best_f1 = dev_f1
            best_epoch = epoch
            best_arrays = model.snapshot()
        if stop_dev_f1 is not None and dev_f1 >= stop_dev_f1:
            break
    model.restore(best_arrays)
    return TrainResult(model, tuple(history), best_epoch, best_f1)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: Model, path, metadata: dict | None = None) -> None:
    """Write a self-contained binary checkpoint with a trailing checksum."""
    payload = {
        "config": _config_to_dict(model.config),
        "word_vocab": model.word_vocab,
        "char_index": dict(model.char_vocab.index),
        "tags": list(model.inventory.tags),
        "lexicon": model.lexicon,
        "params": model.snapshot(),
        "metadata": metadata or {},
    }
    blob = pickle.dumps(payload, protocol=4)
    body = _CKP_MAGIC + struct.pack("<I", _CKP_VERSION) + struct.pack("<Q", len(blob)) + blob
    with open(path, "wb") as handle:
        handle.write(body + hashlib.sha256(body).digest())


def load_checkpoint(path) -> tuple[Model, dict]:
    """Read a checkpoint back into a runnable model plus its metadata."""
    with open(path, "rb") as handle:
        data = handle.read()
    header = len(_CKP_MAGIC) + 4 + 8
    if len(data) < header + 32:
        raise CheckpointError("checkpoint is truncated")
    if data[:len(_CKP_MAGIC)] != _CKP_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {data[:len(_CKP_MAGIC)]!r}")
    version, payload_len = struct.unpack("<IQ", data[len(_CKP_MAGIC):header])
    if version != _CKP_VERSION:
        raise CheckpointError(
            f"checkpoint version {version} not supported; this build reads "
            f"version {_CKP_VERSION}")
    if len(data) != header + payload_len + 32:
        raise CheckpointError("checkpoint is truncated or has trailing bytes")
    body = data[:header + payload_len]
    if hashlib.sha256(body).digest() != data[-32:]:
        raise CheckpointError("checkpoint checksum mismatch")
    payload = pickle.loads(data[header:header + payload_len])

    config = _config_from_dict(payload["config"])
    inventory = TagInventory(tuple(payload["tags"]), config.scheme)
    char_vocab = CharVocab(dict(payload["char_index"]))
    word_vocab = dict(payload["word_vocab"])
    arrays = payload["params"]
    table = EmbeddingTable(config.word_dim, word_vocab,
                           arrays["word_table"].copy())
    model = Model.initialize(config, table, char_vocab, inventory,
                             payload["lexicon"])
    model.restore(arrays)
    return model, payload["metadata"]
