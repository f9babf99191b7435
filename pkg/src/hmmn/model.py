"""HMMN cell, hop stacking and answer scoring, plus the single-memory baseline.

For every answer choice ``k`` a hop builds the query
``q* = u_prev + a_k + lam * q``, reweights subtitle slots by their relevance to
``q*``, lets every frame attend to the reweighted subtitles and summarizes the
resulting subtitle-aware frames with respect to ``q*``. After ``T`` hops the
choice is scored by ``(q + u_T^k) . a_k``. The first hop starts from
``u_0^k = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attention
from .encodings import EncodedInstance, ModelParams
from .numerics import DimensionError, argmax_lowest, as_array, softmax

TRACE_SCHEMA = 1


@dataclass
class HopTrace:
    query: np.ndarray  # q*
    delta: np.ndarray  # (m,) subtitle weights
    S_star: np.ndarray  # (d, m)
    epsilon: np.ndarray  # (n, m) frame-to-subtitle coattention
    V_star: np.ndarray  # (d, n)
    zeta: np.ndarray  # (n,) frame weights
    u: np.ndarray  # hop output

    def to_json(self) -> dict:
        return {
            "delta": self.delta.tolist(),
            "zeta": self.zeta.tolist(),
            "epsilon": self.epsilon.tolist(),
        }


@dataclass
class AttentionTrace:
    """Per-answer hop traces for HMMN, or shared per-hop weights for baselines."""

    hops: dict[int, list[HopTrace]] = field(default_factory=dict)
    alpha: list[np.ndarray] = field(default_factory=list)
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    def to_json(self) -> dict:
        out: dict = {}
        if self.hops:
            out["answers"] = {
                str(k): {str(t + 1): h.to_json() for t, h in enumerate(hs)}
                for k, hs in sorted(self.hops.items())
            }
        if self.alpha:
            out["alpha"] = {str(t + 1): a.tolist() for t, a in enumerate(self.alpha)}
        for name, value in sorted(self.extra.items()):
            out[name] = np.asarray(value).tolist()
        return out


@dataclass
class Prediction:
    f: np.ndarray
    p: np.ndarray
    argmax: int
    trace: AttentionTrace | None = None

    @classmethod
    def from_scores(cls, f, trace=None) -> "Prediction":
        f = np.asarray(f)
        return cls(f=f, p=softmax(f), argmax=argmax_lowest(f), trace=trace)

    def to_json(self) -> dict:
        out = {
            "schema": TRACE_SCHEMA,
            "f": self.f.tolist(),
            "p": self.p.tolist(),
            "argmax": self.argmax,
        }
        if self.trace is not None:
            out.update(self.trace.to_json())
        return out


def hmmn_hop(q, a_k, u_prev, S, V, lam: float, answer_attention: bool = True,
             normalize_coattention: bool = False):
    """One reasoning hop for a single answer choice. Returns ``(u_next, HopTrace)``."""
    q, a_k, u_prev = as_array(q, 1), as_array(a_k, 1), as_array(u_prev, 1)
    S, V = as_array(S, 2), as_array(V, 2)
    d = q.shape[0]
    if a_k.shape[0] != d or u_prev.shape[0] != d or S.shape[0] != d or V.shape[0] != d:
        raise DimensionError("hop operands disagree on feature dimension")
    query = u_prev + lam * q
    if answer_attention:
        query = query + a_k
    rw = attention.query_to_context(query, S)
    eps = attention.coattention(V, rw.memory, normalize_coattention)
    V_star = rw.memory @ eps.T
    zeta = softmax(V_star.T @ query)
    u = V_star @ zeta
    return u, HopTrace(query, rw.weights, rw.memory, eps, V_star, zeta, u)


def run_hops(enc: EncodedInstance, params: ModelParams, k: int, answer_attention: bool = True):
    u = np.zeros_like(enc.q)
    hops = []
    for _ in range(params.hops):
        u, h = hmmn_hop(enc.q, enc.A[:, k], u, enc.S, enc.V, params.lam,
                        answer_attention, params.normalize_coattention)
        hops.append(h)
    return u, hops


def hmmn_forward(enc: EncodedInstance, params: ModelParams, answer_attention: bool = True,
                 keep_trace: bool = False) -> Prediction:
    n_choices = enc.A.shape[1]
    f = np.empty(n_choices, dtype=enc.q.dtype)
    trace = AttentionTrace() if keep_trace else None
    shared = None
    for k in range(n_choices):
        if answer_attention or shared is None:
            u, hops = run_hops(enc, params, k, answer_attention)
            if not answer_attention:
                shared = (u, hops)
        else:
            u, hops = shared
        f[k] = (enc.q + u) @ enc.A[:, k]
        if trace is not None:
            trace.hops[k] = hops
    return Prediction.from_scores(f, trace)


def e2emn_forward(q, M, A, hops: int = 1, query_scale: float = 1.0,
                  keep_trace: bool = False) -> Prediction:
    """Single-memory baseline: read ``M`` with ``q``, score ``(q + u)^T A``.

    Later hops query with ``query_scale * q + u``. ``query_scale`` only affects
    retrieval; scoring always uses ``q`` itself.
    """
    q, M, A = as_array(q, 1), as_array(M, 2), as_array(A, 2)
    if hops < 1:
        raise ValueError("hop count must be at least 1")
    if A.shape[0] != q.shape[0]:
        raise DimensionError("answer matrix height differs from query length")
    trace = AttentionTrace() if keep_trace else None
    u = np.zeros_like(q)
    for _ in range(hops):
        alpha = attention.slot_weights(query_scale * q + u, M)
        u = M @ alpha
        if trace is not None:
            trace.alpha.append(alpha)
    return Prediction.from_scores((q + u) @ A, trace)
