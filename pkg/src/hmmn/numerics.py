"""Dense arithmetic helpers, stable softmax and seeded random streams.

Every array handled by the package is a plain ``numpy.ndarray``. Matrices
store memory slots as columns, so a context of ``m`` slots of width ``d`` has
shape ``(d, m)``.

Random streams use numpy's PCG64 bit generator seeded through a
``SeedSequence``. Sub-streams are derived with ``spawn_key`` tuples built from
the CRC32 of a stream name, which keeps every named stream independent and
reproducible on a given platform.
"""

from __future__ import annotations

import zlib
from contextlib import contextmanager

import numpy as np

_DTYPE = np.float64


class DimensionError(ValueError):
    """Raised when operand shapes disagree."""


def get_dtype():
    return _DTYPE


def set_dtype(dtype) -> None:
    """Set the global float width (``float32`` or ``float64``)."""
    global _DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported float width: {dtype!r}")
    _DTYPE = dtype


@contextmanager
def float_width(dtype):
    previous = _DTYPE
    set_dtype(dtype)
    try:
        yield
    finally:
        set_dtype(previous)


def as_array(x, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=_DTYPE)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"expected {ndim}-d array, got shape {arr.shape}")
    return arr


def softmax(scores, axis: int = 0) -> np.ndarray:
    """Numerically stable softmax along ``axis``.

    For a vector this normalizes across all of its entries, which is how the
    per-slot attention weights of a memory read are formed.
    """
    s = np.asarray(scores, dtype=_DTYPE)
    if s.size == 0 or s.shape[axis] == 0:
        raise DimensionError("softmax of an empty vector")
    z = s - s.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=_DTYPE)
    if s.size == 0:
        raise DimensionError("log_softmax of an empty vector")
    z = s - s.max()
    return z - np.log(np.exp(z).sum())


def softmax_vjp(probs: np.ndarray, grad_out: np.ndarray, axis: int = 0) -> np.ndarray:
    """Pull ``grad_out`` back through a softmax whose output was ``probs``.

    Applies ``diag(s) - s s^T`` without materializing it.
    """
    inner = (probs * grad_out).sum(axis=axis, keepdims=True)
    return probs * (grad_out - inner)


def weighted_sum(weights, M) -> np.ndarray:
    """Return ``sum_i weights[i] * M[:, i]``."""
    w = as_array(weights, 1)
    M = as_array(M, 2)
    if w.shape[0] != M.shape[1]:
        raise DimensionError(
            f"{w.shape[0]} weights for a matrix with {M.shape[1]} columns"
        )
    return M @ w


def argmax_lowest(values) -> int:
    """Index of the largest entry; ties resolve to the lowest index."""
    return int(np.argmax(np.asarray(values)))


def _stream_key(name: str | int) -> int:
    if isinstance(name, int):
        return name
    return zlib.crc32(name.encode("utf-8"))


def make_rng(seed: int, *stream: str | int) -> np.random.Generator:
    """Deterministic generator for ``seed`` and an optional named sub-stream.

    ``make_rng(7, "init")`` and ``make_rng(7, "shuffle", 3)`` are independent
    of each other and of ``make_rng(7)``.
    """
    key = tuple(_stream_key(s) for s in stream)
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))
