"""Segment representation schemes: IOB2 and IOBES tag codecs.

Entity spans are encoded as per-token tags and decoded back.  IOB2 marks a
span as B-X followed by I-X; IOBES additionally distinguishes the last token
of a multi-token span (E-X) and single-token spans (S-X).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import DisnerError


class Scheme(enum.Enum):
    IOB2 = "iob2"
    IOBES = "iobes"

    @property
    def prefixes(self) -> tuple[str, ...]:
        if self is Scheme.IOB2:
            return ("B", "I")
        return ("B", "I", "E", "S")

    @classmethod
    def parse(cls, name: str) -> "Scheme":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise DisnerError(f"unknown scheme {name!r} (expected iob2 or iobes)") from None


@dataclass(frozen=True)
class Span:
    """Token-level entity span; end_token is inclusive."""

    start_token: int
    end_token: int
    entity_type: str

    def __post_init__(self):
        if self.start_token > self.end_token:
            raise DisnerError(f"span start {self.start_token} > end {self.end_token}")


@dataclass(frozen=True)
class TagSequence:
    tags: tuple[str, ...]
    scheme: Scheme

    def __len__(self) -> int:
        return len(self.tags)

    def validate(self) -> None:
        """Raise unless every tag is in the scheme inventory and transitions are legal."""
        prev = "O"
        for i, tag in enumerate(self.tags):
            prefix, etype = split_tag(tag)
            if prefix != "O" and prefix not in self.scheme.prefixes:
                raise DisnerError(f"tag {tag!r} not in {self.scheme.value} inventory")
            if prefix in ("I", "E") and not _continues(prev, etype):
                raise DisnerError(f"position {i}: {tag} does not continue an open {etype} span")
            if self.scheme is Scheme.IOBES:
                p_prefix, p_etype = split_tag(prev)
                if p_prefix in ("B", "I") and (prefix not in ("I", "E") or etype != p_etype):
                    raise DisnerError(f"position {i}: unterminated {p_etype} span before {tag}")
            prev = tag
        if self.scheme is Scheme.IOBES and self.tags:
            prefix, etype = split_tag(self.tags[-1])
            if prefix in ("B", "I"):
                raise DisnerError(f"sequence ends with unterminated tag {self.tags[-1]}")

    def is_valid(self) -> bool:
        try:
            self.validate()
        except DisnerError:
            return False
        return True


def split_tag(tag: str) -> tuple[str, str | None]:
    """'B-Disease' -> ('B', 'Disease'); 'O' -> ('O', None)."""
    if tag == "O":
        return "O", None
    prefix, sep, etype = tag.partition("-")
    if not sep or not etype or prefix not in ("B", "I", "E", "S"):
        raise DisnerError(f"unknown tag symbol {tag!r}")
    return prefix, etype


def _continues(prev_tag: str, etype: str | None) -> bool:
    prefix, prev_type = split_tag(prev_tag)
    return prefix in ("B", "I") and prev_type == etype


def encode_spans(n_tokens: int, spans: list[Span], scheme: Scheme) -> TagSequence:
    """Encode non-overlapping spans as a tag sequence of length n_tokens."""
    ordered = sorted(spans, key=lambda s: (s.start_token, s.end_token))
    for a, b in zip(ordered, ordered[1:]):
        if b.start_token <= a.end_token:
            raise DisnerError(f"overlapping spans {a} and {b}")
    if ordered and (ordered[0].start_token < 0 or ordered[-1].end_token >= n_tokens):
        raise DisnerError(f"span outside [0, {n_tokens})")
    tags = ["O"] * n_tokens
    for span in ordered:
        t = span.entity_type
        if span.start_token == span.end_token:
            tags[span.start_token] = f"S-{t}" if scheme is Scheme.IOBES else f"B-{t}"
            continue
        tags[span.start_token] = f"B-{t}"
        for i in range(span.start_token + 1, span.end_token + 1):
            tags[i] = f"I-{t}"
        if scheme is Scheme.IOBES:
            tags[span.end_token] = f"E-{t}"
    return TagSequence(tuple(tags), scheme)


def decode_tags(sequence: TagSequence) -> list[Span]:
    """Extract maximal spans from a (structurally valid) tag sequence."""
    spans: list[Span] = []
    start = None
    open_type = None
    for i, tag in enumerate(sequence.tags):
        prefix, etype = split_tag(tag)
        if prefix in ("B", "S") or (prefix in ("I", "E") and etype != open_type):
            if open_type is not None:
                spans.append(Span(start, i - 1, open_type))
            start, open_type = i, etype
        elif prefix == "O":
            if open_type is not None:
                spans.append(Span(start, i - 1, open_type))
            start, open_type = None, None
        if prefix in ("S", "E") and open_type is not None:
            spans.append(Span(start, i, open_type))
            start, open_type = None, None
    if open_type is not None:
        spans.append(Span(start, len(sequence.tags) - 1, open_type))
    return spans


def convert(sequence: TagSequence, target: Scheme) -> TagSequence:
    """Re-encode under another scheme; the span set is preserved exactly."""
    return encode_spans(len(sequence), decode_tags(sequence), target)


def repair(raw: list[str] | tuple[str, ...], scheme: Scheme) -> TagSequence:
    """Minimally edit a raw tag list into a valid sequence.

    Orphan I-/E- tags (nothing open, or a different type open) become B-.
    Under IOBES, a span left open when the next tag cannot continue it is
    closed in place: a lone B- becomes S-, a trailing I- becomes E-.
    Already-valid input comes back unchanged.
    """
    tags = [str(t) for t in raw]
    for tag in tags:
        prefix, _ = split_tag(tag)  # raises on unknown symbols
        if prefix != "O" and prefix not in scheme.prefixes:
            raise DisnerError(f"tag {tag!r} not in {scheme.value} inventory")

    out: list[str] = []
    open_type: str | None = None  # entity type of the span currently open
    open_start = 0

    def close_open(upto: int) -> None:
        nonlocal open_type
        if open_type is None or scheme is not Scheme.IOBES:
            open_type = None
            return
        if upto == open_start:
            out[upto] = f"S-{open_type}"
        else:
            out[upto] = f"E-{open_type}"
        open_type = None

    for i, tag in enumerate(tags):
        prefix, etype = split_tag(tag)
        if prefix in ("I", "E") and etype != open_type:
            prefix = "B"  # orphan continuation starts a new span
            tag = f"B-{etype}"
        if prefix in ("O", "B", "S") and open_type is not None:
            close_open(i - 1)
        out.append(tag)
        if prefix == "B":
            open_type, open_start = etype, i
        elif prefix in ("E", "S", "O"):
            open_type = None
    if open_type is not None:
        close_open(len(out) - 1)

    result = TagSequence(tuple(out), scheme)
    result.validate()
    return result
