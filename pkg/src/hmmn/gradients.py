"""Reverse-mode gradients of the cross-entropy loss with respect to W1 and W2.

The graph is fixed (encoders, attention hops, affinity scores, softmax), so
every primitive gets a hand-written vector-Jacobian product and each model's
backward pass composes them in reverse order. ``finite_diff_grad`` is an
independent central-difference oracle that only ever calls forward passes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import attention
from .ablation import RepresentationSpec, Term, apply_term
from .encodings import (
    EncodedInstance,
    ModelParams,
    PooledInstance,
    RawInstance,
    Vocabulary,
    encode_pooled,
    pool_instance,
)
from .model import Prediction, run_hops
from .numerics import float_width, log_softmax, make_rng, softmax, softmax_vjp
from .variants import Variant, parse_variant, predict


@dataclass
class Gradients:
    dW1: np.ndarray
    dW2: np.ndarray
    loss: float
    # entries actually evaluated; None means all of them
    mask1: np.ndarray | None = None
    mask2: np.ndarray | None = None


def loss(pred: Prediction | np.ndarray, gold: int) -> float:
    """Cross-entropy ``-log p[gold]`` computed from the affinity scores."""
    f = pred.f if isinstance(pred, Prediction) else np.asarray(pred)
    return float(-log_softmax(f)[gold])


# -- primitive VJPs ---------------------------------------------------------


def inter_modal_vjp(X, Y, grad_out, normalize=False):
    """Gradients of ``inter_modal(X, Y)`` w.r.t. ``X`` and ``Y``."""
    C = attention.coattention(X, Y, normalize)
    dY = grad_out @ C
    dC = grad_out.T @ Y
    if normalize:
        dC = softmax_vjp(C, dC, axis=1)
    dX = Y @ dC.T
    dY += X @ dC
    return dX, dY


def reweight_vjp(query, M, weights, grad_out):
    """Gradients of ``M * softmax(M^T query)`` w.r.t. ``query`` and ``M``."""
    dM = grad_out * weights
    dw = (M * grad_out).sum(axis=0)
    db = softmax_vjp(weights, dw)
    dM += np.outer(query, db)
    return M @ db, dM


def summarize_vjp(query, M, weights, grad_u):
    """Gradients of ``M softmax(M^T query)`` w.r.t. ``query`` and ``M``."""
    dM = np.outer(grad_u, weights)
    db = softmax_vjp(weights, M.T @ grad_u)
    dM += np.outer(query, db)
    return M @ db, dM


def self_attention_vjp(M, grad_out):
    G = attention.self_affinity(M)
    dG = M.T @ grad_out
    np.fill_diagonal(dG, 0.0)
    return grad_out @ G + M @ (dG + dG.T)


# -- model backward passes --------------------------------------------------


@dataclass
class _EncGrads:
    dS: np.ndarray
    dV: np.ndarray
    dq: np.ndarray
    dA: np.ndarray

    @classmethod
    def zeros_like(cls, enc: EncodedInstance):
        return cls(np.zeros_like(enc.S), np.zeros_like(enc.V), np.zeros_like(enc.q), np.zeros_like(enc.A))


def _hop_chain_backward(enc, hops, grad_u, params, k, answer_attention, g: _EncGrads):
    for h in reversed(hops):
        dq_star, dV_star = summarize_vjp(h.query, h.V_star, h.zeta, grad_u)
        dV, dS_star = inter_modal_vjp(enc.V, h.S_star, dV_star, params.normalize_coattention)
        g.dV += dV
        dq2, dS = reweight_vjp(h.query, enc.S, h.delta, dS_star)
        g.dS += dS
        dq_star += dq2
        g.dq += params.lam * dq_star
        if answer_attention:
            g.dA[:, k] += dq_star
        grad_u = dq_star


def _hmmn_backward(enc, params, answer_attention):
    n_choices = enc.A.shape[1]
    runs = []
    f = np.empty(n_choices, dtype=enc.q.dtype)
    for k in range(n_choices):
        if answer_attention or not runs:
            runs.append(run_hops(enc, params, k, answer_attention))
        u, _ = runs[-1]
        f[k] = (enc.q + u) @ enc.A[:, k]
    p = softmax(f)
    df = p.copy()
    df[enc.gold] -= 1.0

    g = _EncGrads.zeros_like(enc)
    if answer_attention:
        for k, (u, hops) in enumerate(runs):
            g.dq += df[k] * enc.A[:, k]
            g.dA[:, k] += df[k] * (enc.q + u)
            _hop_chain_backward(enc, hops, df[k] * enc.A[:, k], params, k, True, g)
    else:
        u, hops = runs[0]
        grad_u = enc.A @ df
        g.dq += grad_u
        g.dA += np.outer(enc.q + u, df)
        _hop_chain_backward(enc, hops, grad_u, params, None, False, g)
    return f, g


def _term_backward(term: Term, enc, grad_out, params, g: _EncGrads):
    X, other = (enc.S, enc.V) if term.modality == "S" else (enc.V, enc.S)
    dX = dOther = None
    if term.transform == "id":
        dX = grad_out
    elif term.transform == "prime":
        weights = attention.slot_weights(enc.q, X)
        dquery, dX = reweight_vjp(enc.q, X, weights, grad_out)
        g.dq += dquery
    elif term.transform == "bar":
        dX, dOther = inter_modal_vjp(X, other, grad_out, params.normalize_coattention)
    else:
        dX = self_attention_vjp(X, grad_out)
    if term.modality == "S":
        g.dS += dX
        if dOther is not None:
            g.dV += dOther
    else:
        g.dV += dX
        if dOther is not None:
            g.dS += dOther


def _memory_backward(enc, params, spec: RepresentationSpec):
    norm = params.normalize_coattention
    left = apply_term(spec.left, enc, normalize_coattention=norm)
    if spec.right is None:
        M = left
    else:
        right = apply_term(spec.right, enc, normalize_coattention=norm)
        M = attention.inter_modal(left, right, norm)

    q = enc.q
    u = np.zeros_like(q)
    steps = []
    for _ in range(params.hops):
        query = q + u
        alpha = attention.slot_weights(query, M)
        steps.append((query, alpha))
        u = M @ alpha
    f = (q + u) @ enc.A
    p = softmax(f)
    df = p.copy()
    df[enc.gold] -= 1.0

    g = _EncGrads.zeros_like(enc)
    grad_u = enc.A @ df
    g.dq += grad_u
    g.dA += np.outer(q + u, df)
    dM = np.zeros_like(M)
    for query, alpha in reversed(steps):
        dquery, dM_step = summarize_vjp(query, M, alpha, grad_u)
        dM += dM_step
        g.dq += dquery
        grad_u = dquery

    if spec.right is None:
        _term_backward(spec.left, enc, dM, params, g)
    else:
        dL, dR = inter_modal_vjp(left, right, dM, norm)
        _term_backward(spec.left, enc, dL, params, g)
        _term_backward(spec.right, enc, dR, params, g)
    return f, g


def instance_backward(pooled: PooledInstance, E: np.ndarray, params: ModelParams,
                      variant: Variant | str = "hmmn"):
    """Loss and ``(dW1, dW2)`` for one pre-pooled instance."""
    v = parse_variant(variant)
    enc, cache = encode_pooled(pooled, E, params, with_cache=True)
    if v.kind == "hmmn":
        f, g = _hmmn_backward(enc, params, v.answer_attention)
    else:
        f, g = _memory_backward(enc, params, v.spec)
    value = float(-log_softmax(f)[enc.gold])

    # sentences, question and answers: X = W1^T (pooled word vectors)
    dW1 = pooled.XS @ g.dS.T + np.outer(pooled.xq, g.dq) + pooled.XA @ g.dA.T
    # frames: V = W1^T G^T with G = pool @ softmax(regions W2 E^T) E
    G = cache.frame_mix
    dW1 += G.T @ g.dV.T
    dG = g.dV.T @ params.W1.T
    dmix = pooled.pool.T @ dG
    dlogits = softmax_vjp(cache.region_attention, dmix @ E.T, axis=1)
    dZ = dlogits @ E
    dW2 = pooled.regions.T @ dZ
    return value, dW1, dW2


def _mean(results):
    n = len(results)
    value = sum(r[0] for r in results) / n
    dW1 = results[0][1].copy()
    dW2 = results[0][2].copy()
    for r in results[1:]:
        dW1 += r[1]
        dW2 += r[2]
    return value, dW1 / n, dW2 / n


def pooled_backward(pooled: list[PooledInstance], E, params, variant="hmmn", threads: int = 1):
    """Mean loss and gradients over a batch, reduced in batch order."""
    if not pooled:
        raise ValueError("empty batch")
    v = parse_variant(variant)
    if threads > 1 and len(pooled) > 1:
        # floating-point error handling is thread-local; carry the caller's over
        err = np.geterr()

        def work(p):
            with np.errstate(**err):
                return instance_backward(p, E, params, v)

        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, pooled))
    else:
        results = [instance_backward(p, E, params, v) for p in pooled]
    value, dW1, dW2 = _mean(results)
    return Gradients(dW1=dW1, dW2=dW2, loss=value)


def backward(batch: list[RawInstance], vocab: Vocabulary, params: ModelParams,
             variant="hmmn", threads: int = 1) -> Gradients:
    pooled = [pool_instance(r, vocab) for r in batch]
    return pooled_backward(pooled, vocab.matrix(), params, variant, threads)


def batch_loss(pooled: list[PooledInstance], E, params: ModelParams, variant="hmmn") -> float:
    """Mean cross-entropy using forward passes only."""
    total = 0.0
    for p in pooled:
        pred = predict(encode_pooled(p, E, params), params, variant)
        total += loss(pred, p.gold)
    return total / len(pooled)


def central_difference(fn, theta: np.ndarray, h: float, entries=None) -> np.ndarray:
    """Central differences of scalar ``fn`` at ``theta`` for the given flat entries.

    ``fn`` receives a perturbed copy of ``theta``. Entries not evaluated stay 0.
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros(theta.size)
    flat_entries = range(theta.size) if entries is None else entries
    for i in flat_entries:
        bumped = theta.copy().reshape(-1)
        bumped[i] += h
        f_plus = fn(bumped.reshape(theta.shape))
        bumped[i] -= 2 * h
        f_minus = fn(bumped.reshape(theta.shape))
        grad[i] = (f_plus - f_minus) / (2 * h)
    return grad.reshape(theta.shape)


def _sample_entries(size: int, max_entries: int | None, rng):
    if max_entries is None or size <= max_entries:
        return None
    return np.sort(rng.choice(size, size=max_entries, replace=False))


def finite_diff_grad(batch: list[RawInstance], vocab: Vocabulary, params: ModelParams,
                     h: float = 1e-5, variant="hmmn", max_entries: int | None = 500,
                     seed: int = 0) -> Gradients:
    """Central-difference gradients of the mean batch loss, in 64-bit.

    Matrices with more than ``max_entries`` entries are subsampled; the
    returned masks mark the evaluated entries.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    rng = make_rng(seed, "fd-sample")
    with float_width(np.float64):
        p64 = params.replace(W1=params.W1.astype(np.float64), W2=params.W2.astype(np.float64))
        pooled = [pool_instance(r, vocab) for r in batch]
        E = vocab.matrix()
        base = batch_loss(pooled, E, p64, variant)
        out = []
        for name, theta in (("W1", p64.W1), ("W2", p64.W2)):
            entries = _sample_entries(theta.size, max_entries, rng)

            def fn(t, name=name):
                return batch_loss(pooled, E, p64.replace(**{name: t}), variant)

            grad = central_difference(fn, theta, h, entries)
            mask = np.ones(theta.shape, bool)
            if entries is not None:
                mask = np.zeros(theta.size, bool)
                mask[entries] = True
                mask = mask.reshape(theta.shape)
            out.append((grad, mask))
    return Gradients(dW1=out[0][0], dW2=out[1][0], loss=base, mask1=out[0][1], mask2=out[1][1])


def relative_error(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(floor, np.abs(analytic) + np.abs(numeric))
