"""Linear-chain CRF: scores, partition function, loss, and decoders.

Scores live in two worlds: differentiable :class:`~disner.autodiff.Node`
graphs during training (``project``, ``nll_loss``, ``local_loss``) and plain
numpy matrices for decoding (``viterbi_decode``, ``local_decode``,
``global_score``, ``log_partition``).  Virtual START/STOP states occupy the
last two rows/columns of the transition matrix; transitions into START and
out of STOP are impossible (−∞).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import DisnerError, NonFiniteError, ShapeError
from .tags import Scheme, TagSequence, split_tag

NEG_INF = float("-inf")


@dataclass(frozen=True)
class TagInventory:
    """Ordered output tags; "O" sits at index 0 so all-tie decodes yield O."""

    tags: tuple[str, ...]
    scheme: Scheme

    def __post_init__(self):
        if not self.tags or self.tags[0] != "O":
            raise DisnerError('tag inventory must start with "O"')
        if len(set(self.tags)) != len(self.tags):
            raise DisnerError("duplicate tags in inventory")

    @classmethod
    def from_scheme(cls, scheme: Scheme, entity_types=("Disease",)) -> "TagInventory":
        tags = ["O"]
        for etype in entity_types:
            tags.extend(f"{p}-{etype}" for p in scheme.prefixes)
        return cls(tuple(tags), scheme)

    @property
    def size(self) -> int:
        return len(self.tags)

    @property
    def start(self) -> int:
        return self.size

    @property
    def stop(self) -> int:
        return self.size + 1

    def index(self, tag: str) -> int:
        try:
            return self.tags.index(tag)
        except ValueError:
            raise DisnerError(f"tag {tag!r} not in inventory {self.tags}") from None

    def indices(self, y: TagSequence) -> list[int]:
        return [self.index(t) for t in y.tags]


@dataclass(frozen=True)
class ScoreMatrix:
    """Emission scores, one column per token: scores[i, j] = tag i at position j."""

    scores: np.ndarray
    inventory: TagInventory

    def __post_init__(self):
        s = self.scores
        if s.ndim != 2 or s.shape[0] != self.inventory.size or s.shape[1] < 1:
            raise ShapeError(
                f"score matrix {s.shape} for {self.inventory.size} tags")
        if not np.all(np.isfinite(s)):
            raise NonFiniteError("score matrix has non-finite entries")

    @property
    def length(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class TransitionMatrix:
    """[(T+2) × (T+2)] scores over tags + START + STOP."""

    tr: np.ndarray
    inventory: TagInventory

    def __post_init__(self):
        n = self.inventory.size + 2
        if self.tr.shape != (n, n):
            raise ShapeError(f"transition matrix {self.tr.shape}, expected {(n, n)}")
        if np.any(np.isnan(self.tr)) or np.any(self.tr == np.inf):
            raise NonFiniteError("transition matrix has NaN/+inf entries")
        if not (np.all(self.tr[:, self.inventory.start] == NEG_INF)
                and np.all(self.tr[self.inventory.stop, :] == NEG_INF)):
            raise DisnerError("transitions into START and out of STOP must be -inf")

    @classmethod
    def from_block(cls, block: np.ndarray, inventory: TagInventory) -> "TransitionMatrix":
        """Embed a finite (T+2)² value block, forcing the impossible entries."""
        tr = np.array(block, dtype=np.float64)
        tr[:, inventory.start] = NEG_INF
        tr[inventory.stop, :] = NEG_INF
        return cls(tr, inventory)

    @classmethod
    def zeros(cls, inventory: TagInventory) -> "TransitionMatrix":
        return cls.from_block(np.zeros((inventory.size + 2,) * 2), inventory)


@dataclass
class EmissionProjection:
    """Dense map from contextual vectors to per-tag scores."""

    weight: Node
    bias: Node

    def named(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


def init_projection(context_dim: int, n_tags: int, rng: np.random.Generator) -> EmissionProjection:
    bound = np.sqrt(6.0 / (context_dim + n_tags))
    weight = ad.param(rng.uniform(-bound, bound, size=(n_tags, context_dim)))
    bias = ad.param(np.zeros(n_tags))
    return EmissionProjection(weight, bias)


def project(contexts: list[Node], proj: EmissionProjection) -> Node:
    """[T × m] emission score Node; column j scores token j."""
    if not contexts:
        raise ShapeError("project over an empty sentence")
    n_tags = proj.bias.shape[0]
    cols = [ad.reshape(proj.weight @ h + proj.bias, (n_tags, 1)) for h in contexts]
    return ad.concat(cols, axis=1)


# ---------------------------------------------------------------------------
# numpy decode path


def _lse(arr: np.ndarray, axis: int) -> np.ndarray:
    """logsumexp that tolerates -inf entries (all--inf → -inf, no NaN)."""
    m = np.max(arr, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(invalid="ignore"):
        out = np.squeeze(safe, axis=axis) + np.log(
            np.sum(np.exp(arr - safe), axis=axis))
    return np.where(np.isfinite(np.squeeze(m, axis=axis)), out, NEG_INF)


def global_score(S: ScoreMatrix, Tr: TransitionMatrix, y: TagSequence) -> float:
    """Emissions along the path plus transitions, including START/STOP ends."""
    if len(y) != S.length:
        raise ShapeError(f"path length {len(y)} != sentence length {S.length}")
    inv = S.inventory
    idx = inv.indices(y)
    total = Tr.tr[inv.start, idx[0]]
    for t, i in enumerate(idx):
        total += S.scores[i, t]
    for a, b in zip(idx, idx[1:]):
        total += Tr.tr[a, b]
    total += Tr.tr[idx[-1], inv.stop]
    return float(total)


def log_partition(S: ScoreMatrix, Tr: TransitionMatrix) -> float:
    """Forward algorithm over all tag paths; stable for scores up to ±1e3."""
    inv = S.inventory
    n, m = inv.size, S.length
    block = Tr.tr[:n, :n]
    alpha = Tr.tr[inv.start, :n] + S.scores[:, 0]
    for t in range(1, m):
        alpha = _lse(alpha[:, None] + block, axis=0) + S.scores[:, t]
    return float(_lse(alpha + Tr.tr[:n, inv.stop], axis=0))


def viterbi_decode(S: ScoreMatrix, Tr: TransitionMatrix) -> TagSequence:
    """Maximum-global-score path; ties resolve to the lowest tag index."""
    inv = S.inventory
    n, m = inv.size, S.length
    block = Tr.tr[:n, :n]
    delta = Tr.tr[inv.start, :n] + S.scores[:, 0]
    back = np.zeros((m, n), dtype=np.intp)
    for t in range(1, m):
        cand = delta[:, None] + block
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(n)] + S.scores[:, t]
    final = delta + Tr.tr[:n, inv.stop]
    best = int(np.argmax(final))
    path = [best]
    for t in range(m - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return TagSequence(tuple(inv.tags[i] for i in path), inv.scheme)


def local_decode(S: ScoreMatrix) -> TagSequence:
    """Per-column independent argmax; output may need tag repair."""
    idx = np.argmax(S.scores, axis=0)
    inv = S.inventory
    return TagSequence(tuple(inv.tags[i] for i in idx), inv.scheme)


# ---------------------------------------------------------------------------
# differentiable loss path


def nll_loss(s: Node, tr: Node, gold: TagSequence, inv: TagInventory) -> Node:
    """log Z − Score(gold), differentiable w.r.t. emissions and transitions.

    ``tr`` is the full [(T+2) × (T+2)] parameter; the impossible entries
    (into START, out of STOP) are simply never read, so their gradients
    stay zero and no −∞ enters the graph.
    """
    n = inv.size
    m = len(gold)
    if s.shape != (n, m):
        raise ShapeError(f"emission node {s.shape}, expected {(n, m)}")
    idx = inv.indices(gold)
    block = tr[0:n, 0:n]
    start_row = tr[inv.start, 0:n]
    stop_col = tr[0:n, inv.stop]

    alpha = start_row + s[:, 0]
    for t in range(1, m):
        spread = ad.add(ad.reshape(alpha, (n, 1)), block)
        alpha = ad.logsumexp(spread, axis=0) + s[:, t]
    log_z = ad.logsumexp(alpha + stop_col)

    score = start_row[idx[0]] + stop_col[idx[-1]]
    for t, i in enumerate(idx):
        score = score + s[i, t]
    for a, b in zip(idx, idx[1:]):
        score = score + block[a, b]
    return log_z - score


def local_loss(s: Node, gold: TagSequence, inv: TagInventory) -> Node:
    """Mean per-token softmax cross-entropy over emission columns."""
    m = len(gold)
    if s.shape[1] != m:
        raise ShapeError(f"emission node {s.shape} for {m} tokens")
    idx = inv.indices(gold)
    total = None
    for t, i in enumerate(idx):
        col = s[:, t]
        term = ad.logsumexp(col) - col[i]
        total = term if total is None else total + term
    return total * (1.0 / m)


def legal_transition(prev: str | None, nxt: str | None, scheme: Scheme) -> bool:
    """Scheme legality of prev→next; None stands for START (prev) / STOP (next)."""
    if prev is None and nxt is None:
        return True
    if prev is None:
        return split_tag(nxt)[0] not in ("I", "E")
    if nxt is None:
        return not (scheme is Scheme.IOBES and split_tag(prev)[0] in ("B", "I"))
    p1, t1 = split_tag(prev)
    p2, t2 = split_tag(nxt)
    if p2 in ("I", "E") and not (p1 in ("B", "I") and t1 == t2):
        return False
    if scheme is Scheme.IOBES and p1 in ("B", "I") and not (
            p2 in ("I", "E") and t2 == t1):
        return False
    return True


# ---------------------------------------------------------------------------
# golden decode fixture


@dataclass(frozen=True)
class DecodeFixture:
    emissions: ScoreMatrix
    transitions: TransitionMatrix
    paths: tuple[TagSequence, ...]


def parse_fixture(text: str) -> DecodeFixture:
    """Plain-text fixture: tag list, emission rows, transition rows, paths.

    Layout::

        tags O B-Disease I-Disease
        scheme iob2
        emissions        (T rows × m columns follow)
        transitions      ((T+2) rows follow, order: tags, START, STOP)
        path O B-Disease I-Disease O
    """
    tags: tuple[str, ...] | None = None
    scheme = Scheme.IOB2
    emission_rows: list[list[float]] = []
    transition_rows: list[list[float]] = []
    paths: list[tuple[str, ...]] = []
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        head, *rest = stripped.split()
        if head == "tags":
            tags = tuple(rest)
        elif head == "scheme":
            scheme = Scheme.parse(rest[0])
        elif head == "emissions":
            section = emission_rows
        elif head == "transitions":
            section = transition_rows
        elif head == "path":
            paths.append(tuple(rest))
        elif section is not None:
            try:
                section.append([float(v) for v in stripped.split()])
            except ValueError:
                raise DisnerError(f"line {lineno}: bad number in {stripped!r}") from None
        else:
            raise DisnerError(f"line {lineno}: unexpected {stripped!r}")
    if tags is None or not emission_rows or not transition_rows:
        raise DisnerError("fixture needs tags, emissions, and transitions sections")
    inv = TagInventory(tags, scheme)
    S = ScoreMatrix(np.array(emission_rows, dtype=np.float64), inv)
    Tr = TransitionMatrix(np.array(transition_rows, dtype=np.float64), inv)
    return DecodeFixture(S, Tr, tuple(TagSequence(p, scheme) for p in paths))
