"""Parameter-free attention primitives over column-slot matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionError, as_array, softmax


@dataclass
class ReweightedMemory:
    weights: np.ndarray  # (m,) on the simplex
    memory: np.ndarray  # (d, m), column i scaled by weights[i]


def _check_query(query, M):
    query = as_array(query, 1)
    M = as_array(M, 2)
    if query.shape[0] != M.shape[0]:
        raise DimensionError(f"query of length {query.shape[0]} against slots of height {M.shape[0]}")
    if M.shape[1] == 0:
        raise DimensionError("memory has no slots")
    return query, M


def slot_weights(query, M) -> np.ndarray:
    """Softmax over slots of the inner products ``query . M[:, i]``."""
    query, M = _check_query(query, M)
    return softmax(M.T @ query)


def query_to_context(query, M) -> ReweightedMemory:
    """Rescale each slot of ``M`` by its softmax relevance to ``query``."""
    query, M = _check_query(query, M)
    w = softmax(M.T @ query)
    return ReweightedMemory(weights=w, memory=M * w)


def summarize(query, M) -> np.ndarray:
    """Relevance-weighted sum of the slots of ``M``; a convex combination."""
    query, M = _check_query(query, M)
    return M @ softmax(M.T @ query)


def coattention(X, Y, normalize: bool = False) -> np.ndarray:
    """``(p, r)`` matrix of slot affinities ``X[:, i] . Y[:, j]``.

    Raw inner products by default. ``normalize=True`` applies a softmax across
    each row, which bounds the magnitudes but departs from the plain form.
    """
    X, Y = as_array(X, 2), as_array(Y, 2)
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"feature heights differ: {X.shape[0]} vs {Y.shape[0]}")
    C = X.T @ Y
    if normalize:
        C = softmax(C, axis=1)
    return C


def inter_modal(X, Y, normalize: bool = False) -> np.ndarray:
    """Represent every slot of ``X`` as a coattention-weighted sum of ``Y``'s slots.

    ``out[:, i] = sum_j (X[:, i] . Y[:, j]) Y[:, j]``, i.e. ``Y Y^T X`` when
    unnormalized. Output has the shape of ``X``.
    """
    Y = as_array(Y, 2)
    return Y @ coattention(X, Y, normalize).T


def self_affinity(M) -> np.ndarray:
    M = as_array(M, 2)
    G = M.T @ M
    np.fill_diagonal(G, 0.0)
    return G


def self_attention(M) -> np.ndarray:
    """Each slot rewritten as an affinity-weighted sum of the *other* slots."""
    M = as_array(M, 2)
    if M.shape[1] == 0:
        raise DimensionError("memory has no slots")
    return M @ self_affinity(M)
