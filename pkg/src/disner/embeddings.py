"""Token normalization, embedding look-up tables, and character vocabularies.

Word-level lookups use normalized tokens (lowercased, pure numbers collapsed
to ``NUM``); character-level vocabularies keep raw surfaces so capitalization
stays visible to the character model.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, ConfigError, ParseError

UNK_TOKEN = "UNK"
NUM_TOKEN = "NUM"

_CACHE_MAGIC = b"DNERLUT1"
_CACHE_VERSION = 1

_NUMERIC = re.compile(r"[0-9.,%-]+")


def normalize_token(surface: str) -> str:
    """Lowercase; tokens made only of digits (plus ``. , - %``) become ``NUM``.

    ``NUM`` itself is a fixed point, which makes the function idempotent.
    """
    if surface == NUM_TOKEN:
        return NUM_TOKEN
    if surface and _NUMERIC.fullmatch(surface) and any(c.isdigit() for c in surface):
        return NUM_TOKEN
    return surface.lower()


@dataclass(frozen=True)
class EmbeddingTable:
    """Row 0 is always UNK, row 1 always NUM; remaining rows are corpus words."""

    dim: int
    vocab: dict[str, int]
    vectors: np.ndarray

    def __post_init__(self):
        if self.dim <= 0:
            raise ConfigError(f"embedding dim must be positive, got {self.dim}")
        if self.vectors.shape != (len(self.vocab), self.dim):
            raise ConfigError(
                f"vector matrix {self.vectors.shape} inconsistent with "
                f"{len(self.vocab)} words of dim {self.dim}")
        if self.vocab.get(UNK_TOKEN) != 0 or self.vocab.get(NUM_TOKEN) != 1:
            raise ConfigError("UNK and NUM rows must occupy indices 0 and 1")

    @property
    def n_rows(self) -> int:
        return self.vectors.shape[0]

    def lookup(self, normalized: str) -> int:
        """Row index for a normalized token; unknown words fall back to UNK."""
        return self.vocab.get(normalized, 0)

    def row_words(self) -> list[str]:
        words = [""] * self.n_rows
        for word, idx in self.vocab.items():
            words[idx] = word
        return words


def _scale(dim: int) -> float:
    return float(np.sqrt(3.0 / dim))


def _assemble(words: list[str], dim: int, rng: np.random.Generator,
              preset: dict[str, np.ndarray] | None = None) -> EmbeddingTable:
    ordered = [UNK_TOKEN, NUM_TOKEN] + sorted(w for w in set(words) - {UNK_TOKEN, NUM_TOKEN})
    bound = _scale(dim)
    vectors = rng.uniform(-bound, bound, size=(len(ordered), dim))
    if preset:
        for i, word in enumerate(ordered):
            if word in preset:
                vectors[i] = preset[word]
    vocab = {w: i for i, w in enumerate(ordered)}
    return EmbeddingTable(dim, vocab, vectors)


def random_table(words, dim: int, seed: int) -> EmbeddingTable:
    """Uniform ±√(3/dim) table over the given words; deterministic per seed."""
    rng = np.random.default_rng(seed)
    return _assemble(list(words), dim, rng)


def load_word2vec_text(data, restrict_to, seed: int = 0,
                       expected_dim: int | None = None) -> EmbeddingTable:
    """Load a word2vec text file, keeping only words from ``restrict_to``.

    File words are normalized before matching (first occurrence wins).  An
    optional leading ``count dim`` header is honored.  UNK/NUM rows absent
    from the file are drawn from the random-initialization distribution.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else (
        data if isinstance(data, str) else _read_text(data))
    restrict = set(restrict_to)
    preset: dict[str, np.ndarray] = {}
    dim: int | None = None

    lines = text.splitlines()
    start = 0
    if lines:
        head = lines[0].split()
        if len(head) == 2 and all(p.lstrip("-").isdigit() for p in head):
            dim = int(head[1])
            start = 1
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = line.rstrip().split(" ")
        word, values = parts[0], parts[1:]
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise ParseError(
                f"vector for {word!r} has {len(values)} values, expected {dim}", lineno)
        key = normalize_token(word)
        wanted = key in restrict or word in (UNK_TOKEN, NUM_TOKEN)
        if word in (UNK_TOKEN, NUM_TOKEN):
            key = word
        if not wanted or key in preset:
            continue
        try:
            preset[key] = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError:
            raise ParseError(f"non-numeric vector component for {word!r}", lineno) from None

    if dim is None:
        if expected_dim is None:
            raise ParseError("embedding file contains no vectors and no header", 1)
        dim = expected_dim
    if expected_dim is not None and dim != expected_dim:
        raise ConfigError(f"embedding file dim {dim} != configured dim {expected_dim}")

    rng = np.random.default_rng(seed)
    found = [w for w in preset if w not in (UNK_TOKEN, NUM_TOKEN)]
    return _assemble(found, dim, rng, preset)


def _read_text(stream) -> str:
    raw = stream.read()
    return raw.decode("utf-8") if isinstance(raw, bytes) else raw


@dataclass(frozen=True)
class CharVocab:
    """Dense character → index map; index 0 is the unknown/padding character."""

    index: dict[str, int]

    @property
    def size(self) -> int:
        return len(self.index) + 1

    def lookup(self, char: str) -> int:
        return self.index.get(char, 0)


def build_char_vocab(sentences) -> CharVocab:
    """Every distinct character of the raw token surfaces, plus the unknown slot."""
    chars = sorted({c for s in sentences for t in s.tokens for c in t.surface})
    return CharVocab({c: i + 1 for i, c in enumerate(chars)})


def save_embedding_cache(table: EmbeddingTable, path) -> None:
    """Write the table as a versioned binary blob with a trailing checksum."""
    meta = json.dumps({"words": table.row_words()}).encode("utf-8")
    body = (
        _CACHE_MAGIC
        + struct.pack("<III", _CACHE_VERSION, table.dim, table.n_rows)
        + struct.pack("<Q", len(meta))
        + meta
        + np.ascontiguousarray(table.vectors, dtype="<f8").tobytes()
    )
    digest = hashlib.sha256(body).digest()
    with open(path, "wb") as fh:
        fh.write(body + digest)


def load_embedding_cache(path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_CACHE_MAGIC) + 12 + 8 + 32:
        raise CheckpointError("embedding cache truncated")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("embedding cache checksum mismatch")
    if body[:8] != _CACHE_MAGIC:
        raise CheckpointError(f"bad magic {body[:8]!r}")
    version, dim, rows = struct.unpack_from("<III", body, 8)
    if version != _CACHE_VERSION:
        raise CheckpointError(f"unsupported cache version {version}")
    (meta_len,) = struct.unpack_from("<Q", body, 20)
    meta_start = 28
    meta = json.loads(body[meta_start:meta_start + meta_len].decode("utf-8"))
    words = meta["words"]
    if len(words) != rows:
        raise CheckpointError(f"cache lists {len(words)} words but header says {rows}")
    data = np.frombuffer(body, dtype="<f8", offset=meta_start + meta_len,
                         count=rows * dim).reshape(rows, dim).astype(np.float64)
    vocab = {w: i for i, w in enumerate(words)}
    return EmbeddingTable(dim, vocab, data)
