"""MEDIC-style disease vocabulary and per-token binary dictionary features.

Each token of a sentence gets a 4-bit vector describing how it relates to the
vocabulary: as a complete name on its own, as part of a multi-word name, as a
known abbreviation, or as a word occurring inside a synonym.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import Sentence, tokenize
from .embeddings import normalize_token
from .errors import ParseError

log = logging.getLogger(__name__)

MAX_NGRAM = 8

_REQUIRED_COLUMNS = ("DiseaseName", "DiseaseID", "Synonyms")


@dataclass(frozen=True)
class DictFeatureVector:
    solo: int
    multiword_part: int
    abbreviation: int
    synonym: int

    def __post_init__(self):
        for name in ("solo", "multiword_part", "abbreviation", "synonym"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.solo, self.multiword_part, self.abbreviation, self.synonym)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)


@dataclass(frozen=True)
class Lexicon:
    """Immutable after construction; all keys are normalized token strings."""

    entries: frozenset[str]
    synonym_index: dict[str, str]
    abbreviations: frozenset[str]
    multiword_token_index: frozenset[str]
    synonym_tokens: frozenset[str] = field(default_factory=frozenset)
    phrases: frozenset[tuple[str, ...]] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.phrases)


def _phrase(raw: str) -> tuple[str, ...]:
    return tuple(normalize_token(t.surface) for t in tokenize(raw))


def _is_abbreviation(raw: str) -> bool:
    return (
        2 <= len(raw) <= 6
        and " " not in raw
        and raw.isalpha()
        and raw == raw.upper()
    )


def build_lexicon(rows) -> Lexicon:
    """Assemble a lexicon from ``(canonical_name, [synonyms...])`` pairs."""
    entries: set[str] = set()
    synonym_index: dict[str, str] = {}
    abbreviations: set[str] = set()
    phrases: set[tuple[str, ...]] = set()
    synonym_tokens: set[str] = set()

    for name, synonyms in rows:
        name_toks = _phrase(name)
        if not name_toks:
            continue
        canonical = " ".join(name_toks)
        entries.add(canonical)
        phrases.add(name_toks)
        if _is_abbreviation(name):
            abbreviations.add(normalize_token(name))
        for raw_syn in synonyms:
            syn_toks = _phrase(raw_syn)
            if not syn_toks:
                continue
            syn = " ".join(syn_toks)
            synonym_index.setdefault(syn, canonical)
            phrases.add(syn_toks)
            synonym_tokens.update(syn_toks)
            if _is_abbreviation(raw_syn):
                abbreviations.add(normalize_token(raw_syn))

    multiword = {tok for p in phrases if len(p) >= 2 for tok in p}
    return Lexicon(
        entries=frozenset(entries),
        synonym_index=synonym_index,
        abbreviations=frozenset(abbreviations),
        multiword_token_index=frozenset(multiword),
        synonym_tokens=frozenset(synonym_tokens),
        phrases=frozenset(phrases),
    )


def load_medic(data) -> Lexicon:
    """Parse a MEDIC TSV (DiseaseName / DiseaseID / pipe-separated Synonyms).

    ``#`` lines are comments; a commented-out column header is recognized too.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else (
        data if isinstance(data, str) else _read_text(data))
    header: list[str] | None = None
    rows: list[tuple[str, list[str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            candidate = line.lstrip("#").lstrip().split("\t")
            if header is None and all(c in candidate for c in _REQUIRED_COLUMNS):
                header = candidate
            continue
        if header is None:
            header = line.split("\t")
            missing = [c for c in _REQUIRED_COLUMNS if c not in header]
            if missing:
                raise ParseError(f"missing required column(s) {missing}", lineno)
            continue
        fields = line.split("\t")
        fields += [""] * (len(header) - len(fields))
        name = fields[header.index("DiseaseName")]
        raw_syn = fields[header.index("Synonyms")]
        synonyms = [s for s in raw_syn.split("|") if s.strip()] if raw_syn else []
        if name.strip():
            rows.append((name, synonyms))
    return build_lexicon(rows)


def _read_text(stream) -> str:
    raw = stream.read()
    return raw.decode("utf-8") if isinstance(raw, bytes) else raw


def token_features(sentence: Sentence, lex: Lexicon) -> list[DictFeatureVector]:
    """One 4-bit vector per token; see the module docstring for bit meanings."""
    norm = [normalize_token(t.surface) for t in sentence.tokens]
    return features_for_tokens(norm, lex)


def features_for_tokens(norm: list[str], lex: Lexicon) -> list[DictFeatureVector]:
    m = len(norm)
    single = {p[0] for p in lex.phrases if len(p) == 1}
    multi_hit = [False] * m
    for n in range(2, min(MAX_NGRAM, m) + 1):
        for j in range(m - n + 1):
            window = norm[j:j + n]
            if not all(t in lex.multiword_token_index for t in window):
                continue
            if tuple(window) in lex.phrases:
                for k in range(j, j + n):
                    multi_hit[k] = True
    return [
        DictFeatureVector(
            solo=int(norm[i] in single),
            multiword_part=int(multi_hit[i]),
            abbreviation=int(norm[i] in lex.abbreviations),
            synonym=int(norm[i] in lex.synonym_tokens),
        )
        for i in range(m)
    ]


def feature_matrix(sentence: Sentence, lex: Lexicon | None) -> np.ndarray:
    """[m × 4] float matrix; a missing lexicon yields all-zero bits."""
    m = len(sentence.tokens)
    if lex is None:
        return np.zeros((m, 4), dtype=np.float64)
    return np.stack([v.as_array() for v in token_features(sentence, lex)]) if m else \
        np.zeros((0, 4), dtype=np.float64)
