"""PubTator corpus parsing, tokenization, sentence splitting, and mention projection.

A PubTator file is a sequence of blank-line separated blocks:

    PMID|t|Title text
    PMID|a|Abstract text
    PMID<TAB>start<TAB>end<TAB>surface<TAB>type<TAB>concept_id

Annotation offsets index into ``title + " " + abstract``.
"""

from __future__ import annotations

import io
import logging
import string
from dataclasses import dataclass, field

from .errors import ParseError
from .tags import Scheme, Span, TagSequence, encode_spans

log = logging.getLogger(__name__)

_PUNCT = set(string.punctuation)
_INTERNAL_BREAKS = {"-", "/"}
_TERMINALS = {".", "!", "?"}

# Tokens (lowercased, trailing period removed) that suppress a sentence break.
_ABBREVIATIONS = {
    "e.g", "i.e", "etc", "vs", "cf", "al", "fig", "figs", "eq", "ref", "refs",
    "dr", "mr", "mrs", "ms", "prof", "st", "no", "inc", "ltd", "approx", "ca",
}


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int


@dataclass(frozen=True)
class Mention:
    start: int
    end: int
    surface: str
    entity_type: str
    concept_id: str = ""


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    doc_id: str
    index: int

    @property
    def start(self) -> int:
        return self.tokens[0].start

    @property
    def end(self) -> int:
        return self.tokens[-1].end


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    abstract: str
    mentions: tuple[Mention, ...] = ()

    @property
    def text(self) -> str:
        return f"{self.title} {self.abstract}" if self.abstract else self.title


@dataclass(frozen=True)
class CorpusStats:
    n_abstracts: int
    n_sentences: int
    n_mentions: int
    n_unique_mentions: int


def tokenize(text: str, base: int = 0) -> list[Token]:
    """Whitespace tokenization with punctuation peeled off and hyphen/slash splits.

    Offsets are exact: every non-whitespace character lands in exactly one token.
    """
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        _split_chunk(text, i, j, base, tokens)
        i = j
    return tokens


def _split_chunk(text: str, i: int, j: int, base: int, out: list[Token]) -> None:
    while i < j and text[i] in _PUNCT:
        out.append(Token(text[i], base + i, base + i + 1))
        i += 1
    tail: list[Token] = []
    while j > i and text[j - 1] in _PUNCT:
        j -= 1
        tail.append(Token(text[j], base + j, base + j + 1))
    s = i
    for p in range(i, j):
        if text[p] in _INTERNAL_BREAKS:
            if p > s:
                out.append(Token(text[s:p], base + s, base + p))
            out.append(Token(text[p], base + p, base + p + 1))
            s = p + 1
    if j > s:
        out.append(Token(text[s:j], base + s, base + j))
    out.extend(reversed(tail))


def split_sentences(doc: Document) -> list[Sentence]:
    """Rule-based splitting on terminal punctuation; never splits a gold mention.

    The title always forms its own sentence boundary (titles routinely lack
    terminal periods).
    """
    text = doc.text
    tokens = tokenize(text)
    if not tokens:
        return []
    title_end = len(doc.title)

    starts = {0}
    for k, tok in enumerate(tokens[:-1]):
        nxt = tokens[k + 1]
        if tok.end <= title_end < nxt.start:
            starts.add(nxt.start)
            continue
        if tok.surface not in _TERMINALS:
            continue
        gap = text[tok.end:nxt.start]
        if not gap or not gap.isspace():
            continue
        if not (nxt.surface[0].isupper() or nxt.surface[0].isdigit()):
            continue
        if tok.surface == "." and k > 0 and tokens[k - 1].surface.lower() in _ABBREVIATIONS:
            continue
        starts.add(nxt.start)

    # A boundary inside a gold mention is suppressed.
    for m in doc.mentions:
        starts -= {b for b in starts if m.start < b < m.end}

    sentences: list[Sentence] = []
    current: list[Token] = []
    for tok in tokens:
        if tok.start in starts and current:
            sentences.append(Sentence(tuple(current), doc.id, len(sentences)))
            current = []
        current.append(tok)
    sentences.append(Sentence(tuple(current), doc.id, len(sentences)))
    return sentences


def gold_token_spans(sentence: Sentence, mentions) -> list[Span]:
    """Token-level spans for the mentions overlapping this sentence.

    Mention boundaries falling mid-token expand to full tokens; when expanded
    mentions collide, the longest (by characters) wins.  Both cases are logged.
    """
    toks = sentence.tokens
    candidates: list[tuple[int, Mention, int, int]] = []
    for m in mentions:
        if m.end <= sentence.start or m.start >= sentence.end:
            continue
        lo = next((i for i, t in enumerate(toks) if t.end > m.start), None)
        hi = next((i for i in range(len(toks) - 1, -1, -1) if toks[i].start < m.end), None)
        if lo is None or hi is None or lo > hi:
            continue
        if toks[lo].start != m.start or toks[hi].end != m.end:
            log.warning("doc %s: mention %r [%d,%d) expanded to token boundaries [%d,%d)",
                        sentence.doc_id, m.surface, m.start, m.end, toks[lo].start, toks[hi].end)
        candidates.append((m.end - m.start, m, lo, hi))

    candidates.sort(key=lambda c: (-c[0], c[2], c[3]))
    claimed: set[int] = set()
    spans: list[Span] = []
    for _, m, lo, hi in candidates:
        covered = set(range(lo, hi + 1))
        if covered & claimed:
            log.warning("doc %s: dropping mention %r overlapped by a longer one",
                        sentence.doc_id, m.surface)
            continue
        claimed |= covered
        spans.append(Span(lo, hi, m.entity_type))
    spans.sort(key=lambda s: s.start_token)
    return spans


def project_mentions(sentence: Sentence, mentions, scheme: Scheme) -> TagSequence:
    """Tag sequence for the sentence under the given scheme."""
    return encode_spans(len(sentence.tokens), gold_token_spans(sentence, mentions), scheme)


def parse_pubtator(data) -> list[Document]:
    """Parse a PubTator byte/text stream into documents.

    Annotation lines with offsets outside the text are dropped with a warning;
    structurally malformed lines raise :class:`ParseError` with the line number.
    BC5CDR relation lines (``PMID<TAB>CID<TAB>id1<TAB>id2``) are skipped.
    """
    text = _as_text(data)
    docs: list[Document] = []
    block: list[tuple[int, str]] = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if line.strip() == "":
            if block:
                docs.append(_parse_block(block))
                block = []
        else:
            block.append((lineno, line))
    if block:
        docs.append(_parse_block(block))
    return docs


def _as_text(data) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8")
    if isinstance(data, str):
        return data
    raw = data.read()
    return raw.decode("utf-8") if isinstance(raw, bytes) else raw


def _parse_block(block: list[tuple[int, str]]) -> Document:
    doc_id = None
    title = None
    abstract = ""
    raw_mentions: list[tuple[int, str, int, int, str, str, str]] = []
    for lineno, line in block:
        if "\t" not in line and "|t|" in line:
            pmid, _, value = line.partition("|t|")
            if title is not None:
                raise ParseError("duplicate title line", lineno)
            doc_id, title = pmid, value
        elif "\t" not in line and "|a|" in line:
            pmid, _, value = line.partition("|a|")
            if doc_id is not None and pmid != doc_id:
                raise ParseError(f"abstract PMID {pmid!r} != title PMID {doc_id!r}", lineno)
            abstract = value
        else:
            parts = line.rstrip("\n").split("\t")
            if len(parts) == 4 and parts[1] == "CID":
                log.debug("skipping relation line %d", lineno)
                continue
            if len(parts) != 6:
                raise ParseError(f"expected 6 tab-separated fields, got {len(parts)}", lineno)
            pmid, start_s, end_s, surface, etype, concept = parts
            try:
                start, end = int(start_s), int(end_s)
            except ValueError:
                raise ParseError(f"non-numeric offsets {start_s!r}/{end_s!r}", lineno) from None
            if doc_id is not None and pmid != doc_id:
                raise ParseError(f"annotation PMID {pmid!r} != document PMID {doc_id!r}", lineno)
            raw_mentions.append((lineno, pmid, start, end, surface, etype, concept))
    if title is None:
        raise ParseError("block has no title line", block[0][0])

    doc = Document(doc_id, title, abstract)
    text = doc.text
    mentions: list[Mention] = []
    for lineno, _, start, end, surface, etype, concept in raw_mentions:
        if not (0 <= start < end <= len(text)):
            log.warning("doc %s line %d: mention offsets [%d,%d) outside text of length %d; dropped",
                        doc_id, lineno, start, end, len(text))
            continue
        slice_text = text[start:end]
        if slice_text != surface:
            log.warning("doc %s line %d: surface %r != text slice %r; keeping slice",
                        doc_id, lineno, surface, slice_text)
        mentions.append(Mention(start, end, slice_text, etype, concept))
    mentions.sort(key=lambda m: (m.start, m.end))
    return Document(doc_id, title, abstract, tuple(mentions))


def write_pubtator(docs) -> str:
    """Serialize documents back to PubTator text (inverse of parse_pubtator)."""
    out = io.StringIO()
    for doc in docs:
        out.write(f"{doc.id}|t|{doc.title}\n")
        out.write(f"{doc.id}|a|{doc.abstract}\n")
        for m in doc.mentions:
            out.write(f"{doc.id}\t{m.start}\t{m.end}\t{m.surface}\t{m.entity_type}\t{m.concept_id}\n")
        out.write("\n")
    return out.getvalue()


def corpus_stats(docs) -> CorpusStats:
    """Abstract/sentence/mention counts; unique mentions are case-insensitive."""
    n_sentences = sum(len(split_sentences(d)) for d in docs)
    n_mentions = sum(len(d.mentions) for d in docs)
    unique = {m.surface.lower() for d in docs for m in d.mentions}
    return CorpusStats(len(docs), n_sentences, n_mentions, len(unique))
