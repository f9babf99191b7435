"""Encoders turning tokens and regional features into d-dim representations.

Sentences (subtitles, the question and each answer choice) are encoded by
projecting every word vector with ``W1`` and mean-pooling. Frames are encoded
by mapping each regional feature into word space with ``W2``, describing it
as a soft mixture of vocabulary word vectors, averaging over regions and
projecting with ``W1``. Only ``W1`` and ``W2`` are learnable.

Frame encoding uses soft attention over the whole vocabulary; a hard top-1
lookup would cut ``W2`` off the gradient path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .numerics import DimensionError, as_array, get_dtype, make_rng, softmax

NUM_CHOICES = 5
QUESTION_TYPES = ("what", "who", "why", "how", "where")


class EncodingError(ValueError):
    pass


class Vocabulary:
    """Fixed word vectors; unknown tokens map to the zero vector."""

    def __init__(self, tokens: Sequence[str], vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise DimensionError(
                f"{len(tokens)} tokens but vector table of shape {vectors.shape}"
            )
        index = {}
        for i, tok in enumerate(tokens):
            if tok in index:
                raise EncodingError(f"duplicate vocabulary token {tok!r}")
            index[tok] = i
        self.tokens = list(tokens)
        self.vectors = vectors
        self._index = index

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.tokens == other.tokens and np.array_equal(self.vectors, other.vectors)

    def vector(self, token: str) -> np.ndarray:
        i = self._index.get(token)
        if i is None:
            return np.zeros(self.dim, dtype=get_dtype())
        return self.vectors[i].astype(get_dtype())

    def matrix(self) -> np.ndarray:
        """Word vectors as an ``(N, d_w)`` array in the working dtype."""
        return self.vectors.astype(get_dtype())

    def save(self, path) -> None:
        lines = []
        for tok, vec in zip(self.tokens, self.vectors):
            lines.append(tok + "\t" + " ".join(repr(float(x)) for x in vec))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens, rows = [], []
        text = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            tok, sep, rest = line.partition("\t")
            if not sep:
                raise EncodingError(f"{path}:{lineno}: missing TAB separator")
            try:
                row = [float(x) for x in rest.split()]
            except ValueError as exc:
                raise EncodingError(f"{path}:{lineno}: {exc}") from None
            if rows and len(row) != len(rows[0]):
                raise EncodingError(
                    f"{path}:{lineno}: expected {len(rows[0])} values, got {len(row)}"
                )
            tokens.append(tok)
            rows.append(row)
        if not rows:
            raise EncodingError(f"{path}: empty vocabulary")
        return cls(tokens, np.array(rows))


@dataclass
class ModelParams:
    W1: np.ndarray  # (d_w, d)
    W2: np.ndarray  # (d_r, d_w)
    lam: float = 0.45
    hops: int = 2
    normalize_coattention: bool = False

    def __post_init__(self):
        self.W1 = as_array(self.W1, 2)
        self.W2 = as_array(self.W2, 2)
        if self.W2.shape[1] != self.W1.shape[0]:
            raise DimensionError(
                f"W2 {self.W2.shape} does not feed W1 {self.W1.shape}"
            )
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.hops < 1:
            raise ValueError("hop count must be at least 1")

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @property
    def d_w(self) -> int:
        return self.W1.shape[0]

    @property
    def d_r(self) -> int:
        return self.W2.shape[0]

    def replace(self, **changes) -> "ModelParams":
        kwargs = dict(
            W1=self.W1,
            W2=self.W2,
            lam=self.lam,
            hops=self.hops,
            normalize_coattention=self.normalize_coattention,
        )
        kwargs.update(changes)
        return ModelParams(**kwargs)

    @classmethod
    def initialize(cls, d: int = 300, d_w: int = 300, d_r: int = 512, seed: int = 0, **kw):
        """Glorot-uniform init of both projections from the ``init`` stream."""
        rng = make_rng(seed, "init")
        a1 = math.sqrt(6.0 / (d_w + d))
        a2 = math.sqrt(6.0 / (d_r + d_w))
        W1 = rng.uniform(-a1, a1, size=(d_w, d))
        W2 = rng.uniform(-a2, a2, size=(d_r, d_w))
        return cls(W1=W1, W2=W2, **kw)


@dataclass
class RawInstance:
    question: list[str]
    answers: list[list[str]]
    subtitles: list[list[str]]
    frames: list[np.ndarray]  # each (regions, d_r)
    gold: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = [np.asarray(f, dtype=np.float64) for f in self.frames]
        if len(self.answers) != NUM_CHOICES:
            raise EncodingError(f"expected {NUM_CHOICES} answer choices, got {len(self.answers)}")
        if not self.subtitles:
            raise EncodingError("instance has no subtitle sentences")
        if not self.frames:
            raise EncodingError("instance has no frames")
        if not 0 <= self.gold < NUM_CHOICES:
            raise EncodingError(f"gold index {self.gold} out of range")
        for i, f in enumerate(self.frames):
            if f.ndim != 2 or f.shape[0] == 0:
                raise EncodingError(f"frame {i}: expected a nonempty (regions, d_r) grid")
            if f.shape[1] != self.frames[0].shape[1]:
                raise EncodingError(f"frame {i}: region width {f.shape[1]} differs from frame 0")

    @property
    def qtype(self) -> str:
        first = self.question[0].lower() if self.question else ""
        return first if first in QUESTION_TYPES else "other"

    def __eq__(self, other):
        if not isinstance(other, RawInstance):
            return NotImplemented
        return (
            self.question == other.question
            and self.answers == other.answers
            and self.subtitles == other.subtitles
            and self.gold == other.gold
            and len(self.frames) == len(other.frames)
            and all(np.array_equal(a, b) for a, b in zip(self.frames, other.frames))
        )


@dataclass
class EncodedInstance:
    S: np.ndarray  # (d, m)
    V: np.ndarray  # (d, n)
    q: np.ndarray  # (d,)
    A: np.ndarray  # (d, 5)
    gold: int = 0

    @property
    def m(self) -> int:
        return self.S.shape[1]

    @property
    def n(self) -> int:
        return self.V.shape[1]


def _mean_word_vector(tokens, vocab: Vocabulary) -> np.ndarray:
    if len(tokens) == 0:
        raise EncodingError("empty token list")
    return np.mean([vocab.vector(t) for t in tokens], axis=0)


def encode_sentence(tokens, vocab: Vocabulary, W1) -> np.ndarray:
    """Mean over tokens of ``W1^T w(token)``."""
    W1 = as_array(W1, 2)
    if W1.shape[0] != vocab.dim:
        raise DimensionError(f"W1 has {W1.shape[0]} rows, word vectors have {vocab.dim}")
    return W1.T @ _mean_word_vector(tokens, vocab)


def _region_word_mixture(regions: np.ndarray, E: np.ndarray, W2: np.ndarray):
    """Soft vocabulary lookup per region. Returns (mixture rows, attention rows)."""
    P = softmax((regions @ W2) @ E.T, axis=1)
    return P @ E, P


def encode_frame(regions, vocab: Vocabulary, W2, W1) -> np.ndarray:
    regions = as_array(regions)
    if regions.ndim != 2 or regions.shape[0] == 0:
        raise EncodingError("frame has no regions")
    if len(vocab) == 0:
        raise EncodingError("empty vocabulary")
    W1, W2 = as_array(W1, 2), as_array(W2, 2)
    if regions.shape[1] != W2.shape[0]:
        raise DimensionError(f"regions of width {regions.shape[1]} but W2 has {W2.shape[0]} rows")
    mix, _ = _region_word_mixture(regions, vocab.matrix(), W2)
    return W1.T @ mix.mean(axis=0)


@dataclass
class PooledInstance:
    """Parameter-independent parts of an instance, computed once per dataset.

    ``XS``, ``XA`` and ``xq`` are mean word vectors (columns for ``XS``/``XA``).
    ``regions`` stacks every region of every frame; ``pool`` is the ``(n, R)``
    averaging matrix mapping region rows to frames.
    """

    XS: np.ndarray
    xq: np.ndarray
    XA: np.ndarray
    regions: np.ndarray
    pool: np.ndarray
    gold: int


def pool_instance(raw: RawInstance, vocab: Vocabulary) -> PooledInstance:
    def sent(tokens, where):
        try:
            return _mean_word_vector(tokens, vocab)
        except EncodingError as exc:
            raise EncodingError(f"{where}: {exc}") from None

    XS = np.stack([sent(s, f"subtitle {i}") for i, s in enumerate(raw.subtitles)], axis=1)
    XA = np.stack([sent(a, f"answer {k}") for k, a in enumerate(raw.answers)], axis=1)
    xq = sent(raw.question, "question")
    counts = [f.shape[0] for f in raw.frames]
    pool = np.zeros((len(counts), sum(counts)), dtype=get_dtype())
    start = 0
    for i, c in enumerate(counts):
        pool[i, start:start + c] = 1.0 / c
        start += c
    regions = np.concatenate(raw.frames, axis=0).astype(get_dtype())
    return PooledInstance(XS=XS, xq=xq, XA=XA, regions=regions, pool=pool, gold=raw.gold)


@dataclass
class EncodingCache:
    region_attention: np.ndarray  # (R, N)
    frame_mix: np.ndarray  # (n, d_w) mean word-space frame vectors


def encode_pooled(pooled: PooledInstance, E: np.ndarray, params: ModelParams, with_cache=False):
    if pooled.regions.shape[1] != params.d_r:
        raise DimensionError(
            f"regional features have width {pooled.regions.shape[1]}, W2 expects {params.d_r}"
        )
    if pooled.XS.shape[0] != params.d_w:
        raise DimensionError(f"word vectors have width {pooled.XS.shape[0]}, W1 expects {params.d_w}")
    W1 = params.W1
    mix, P = _region_word_mixture(pooled.regions, E, params.W2)
    G = pooled.pool @ mix
    enc = EncodedInstance(
        S=W1.T @ pooled.XS,
        V=W1.T @ G.T,
        q=W1.T @ pooled.xq,
        A=W1.T @ pooled.XA,
        gold=pooled.gold,
    )
    if with_cache:
        return enc, EncodingCache(region_attention=P, frame_mix=G)
    return enc


def encode_instance(raw: RawInstance, vocab: Vocabulary, params: ModelParams) -> EncodedInstance:
    if len(vocab) == 0:
        raise EncodingError("empty vocabulary")
    return encode_pooled(pool_instance(raw, vocab), vocab.matrix(), params)
