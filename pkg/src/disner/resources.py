"""Accessors for the data files bundled with the package."""

from __future__ import annotations

from importlib import resources


def _read(name: str) -> str:
    return resources.files("disner").joinpath("data").joinpath(name).read_text("utf-8")


def golden_decode_fixture_text() -> str:
    """The golden decode fixture (3 tags × 4 tokens)."""
    return _read("golden_decode.txt")


def toy_corpus_text() -> str:
    """A 3-document, 10-sentence PubTator corpus for overfit/determinism checks."""
    return _read("toy_corpus.txt")


def toy_medic_text() -> str:
    """A 3-row disease vocabulary matching the toy corpus."""
    return _read("toy_medic.tsv")


def toy_vectors_text() -> str:
    """Word vectors (text format, dim 10) covering the toy corpus vocabulary."""
    return _read("toy_vectors.txt")
