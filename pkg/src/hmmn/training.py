"""SGD training with early stopping, evaluation and checkpoint files."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .encodings import QUESTION_TYPES, ModelParams, Vocabulary, encode_pooled, pool_instance
from .gradients import pooled_backward
from .numerics import get_dtype, make_rng
from .variants import parse_variant, predict

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = 1
OPTIMIZERS = ("sgd", "momentum", "adam")


class TrainingDiverged(RuntimeError):
    """Non-finite loss or gradient; carries the best parameters seen so far."""

    def __init__(self, message, params=None, metrics=None):
        super().__init__(message)
        self.params = params
        self.metrics = metrics


@dataclass
class TrainConfig:
    lr: float = 0.005
    batch: int = 8
    epochs: int = 50
    patience: int = 10
    seed: int = 0
    variant: str = "hmmn"
    d: int = 300
    lam: float = 0.45
    hops: int = 2
    normalize_coattention: bool = False
    optimizer: str = "sgd"
    momentum: float = 0.9
    clip: float | None = None
    threads: int = 1

    def validate(self):
        if not self.lr >= 0:
            raise ValueError("learning rate must be nonnegative")
        if self.batch < 1 or self.epochs < 1 or self.patience < 1:
            raise ValueError("batch, epochs and patience must be at least 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.clip is not None and self.clip <= 0:
            raise ValueError("clip norm must be positive")
        parse_variant(self.variant)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Metrics:
    accuracy: float
    correct: int
    total: int
    per_type: dict[str, dict] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None

    def to_json(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        rows = [("overall", self.correct, self.total, self.accuracy)]
        for t, b in self.per_type.items():
            rows.append((t, b["correct"], b["total"], b["accuracy"]))
        lines = [f"{'type':<10}{'correct':>9}{'total':>8}{'accuracy':>10}"]
        lines += [f"{name:<10}{c:>9d}{n:>8d}{acc:>10.4f}" for name, c, n, acc in rows]
        if self.history:
            lines.append("")
            lines.append(f"{'epoch':>5}{'train_loss':>12}{'dev_acc':>9}")
            for h in self.history:
                loss = "-" if h["train_loss"] is None else f"{h['train_loss']:.5f}"
                lines.append(f"{h['epoch']:>5d}{loss:>12}{h['dev_accuracy']:>9.4f}")
        return "\n".join(lines)


def _pool_all(dataset: Dataset, vocab: Vocabulary):
    return [pool_instance(r, vocab) for r in dataset.instances]


def _score(pooled, qtypes, E, params, variant) -> Metrics:
    if not pooled:
        raise ValueError("cannot evaluate an empty dataset")
    buckets = {t: [0, 0] for t in (*QUESTION_TYPES, "other")}
    correct = 0
    for p, t in zip(pooled, qtypes):
        pred = predict(encode_pooled(p, E, params), params, variant)
        hit = int(pred.argmax == p.gold)
        correct += hit
        buckets[t][0] += hit
        buckets[t][1] += 1
    per_type = {t: {"correct": c, "total": n, "accuracy": c / n}
                for t, (c, n) in buckets.items() if n}
    return Metrics(accuracy=correct / len(pooled), correct=correct, total=len(pooled),
                   per_type=per_type)


def evaluate(params: ModelParams, dataset: Dataset, vocab: Vocabulary, variant="hmmn") -> Metrics:
    """Accuracy overall and per question type (first question word)."""
    params = _cast(params)
    return _score(_pool_all(dataset, vocab), dataset.qtypes, vocab.matrix(), params, variant)


def _cast(params: ModelParams) -> ModelParams:
    dt = get_dtype()
    return params.replace(W1=params.W1.astype(dt), W2=params.W2.astype(dt))


class _Optimizer:
    def __init__(self, config: TrainConfig, shapes):
        self.config = config
        self.state = [dict(m=np.zeros(s), v=np.zeros(s)) for s in shapes]
        self.t = 0

    def step(self, weights, grads):
        c = self.config
        self.t += 1
        out = []
        for w, g, st in zip(weights, grads, self.state):
            if c.optimizer == "sgd":
                out.append(w - c.lr * g)
            elif c.optimizer == "momentum":
                st["m"] = c.momentum * st["m"] + g
                out.append(w - c.lr * st["m"])
            else:
                st["m"] = 0.9 * st["m"] + 0.1 * g
                st["v"] = 0.999 * st["v"] + 0.001 * g * g
                m_hat = st["m"] / (1 - 0.9 ** self.t)
                v_hat = st["v"] / (1 - 0.999 ** self.t)
                out.append(w - c.lr * m_hat / (np.sqrt(v_hat) + 1e-8))
        return [o.astype(w.dtype) for o, w in zip(out, weights)]


def init_params(config: TrainConfig, d_w: int, d_r: int) -> ModelParams:
    p = ModelParams.initialize(config.d, d_w, d_r, seed=config.seed, lam=config.lam,
                               hops=config.hops, normalize_coattention=config.normalize_coattention)
    return _cast(p)


def train(config: TrainConfig, train_set: Dataset, dev_set: Dataset, vocab: Vocabulary,
          params: ModelParams | None = None):
    """Plain minibatch SGD; returns the best-dev-accuracy parameters and metrics.

    Epoch 0 is the untrained model. A later epoch replaces the best only on a
    strict dev-accuracy improvement, and training stops after ``patience``
    epochs without one.
    """
    config.validate()
    if len(train_set) == 0 or len(dev_set) == 0:
        raise ValueError("train and dev sets must be nonempty")
    variant = parse_variant(config.variant)
    d_r = train_set.instances[0].frames[0].shape[1]
    params = init_params(config, vocab.dim, d_r) if params is None else _cast(params)
    E = vocab.matrix()
    train_pooled = _pool_all(train_set, vocab)
    dev_pooled = _pool_all(dev_set, vocab)
    dev_types = dev_set.qtypes

    dev = _score(dev_pooled, dev_types, E, params, variant)
    history = [{"epoch": 0, "train_loss": None, "dev_accuracy": dev.accuracy}]
    best, best_acc, best_epoch, stale = params, dev.accuracy, 0, 0
    opt = _Optimizer(config, [params.W1.shape, params.W2.shape])

    for epoch in range(1, config.epochs + 1):
        order = make_rng(config.seed, "shuffle", epoch).permutation(len(train_pooled))
        losses = []
        for start in range(0, len(order), config.batch):
            batch = [train_pooled[i] for i in order[start:start + config.batch]]
            g = pooled_backward(batch, E, params, variant, config.threads)
            if not math.isfinite(g.loss) or not (np.isfinite(g.dW1).all() and np.isfinite(g.dW2).all()):
                partial = _score(dev_pooled, dev_types, E, best, variant)
                partial.history = history
                partial.best_epoch = best_epoch
                raise TrainingDiverged(
                    f"non-finite loss or gradient at epoch {epoch}, batch starting {start}; "
                    "try a smaller learning rate, --clip or --normalize-coattention",
                    params=best, metrics=partial)
            grads = [g.dW1, g.dW2]
            if config.clip is not None:
                norm = math.sqrt(sum(float((x * x).sum()) for x in grads))
                if norm > config.clip:
                    grads = [x * (config.clip / norm) for x in grads]
            W1, W2 = opt.step([params.W1, params.W2], grads)
            params = params.replace(W1=W1, W2=W2)
            losses.append(g.loss * len(batch))
        train_loss = sum(losses) / len(train_pooled)
        dev = _score(dev_pooled, dev_types, E, params, variant)
        history.append({"epoch": epoch, "train_loss": train_loss, "dev_accuracy": dev.accuracy})
        log.info("epoch %d loss %.5f dev %.4f", epoch, train_loss, dev.accuracy)
        if dev.accuracy > best_acc:
            best, best_acc, best_epoch, stale = params, dev.accuracy, epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                log.info("early stop after epoch %d (best %d)", epoch, best_epoch)
                break

    final = _score(dev_pooled, dev_types, E, best, variant)
    final.history = history
    final.best_epoch = best_epoch
    return best, final


def save_checkpoint(path, params: ModelParams, config: TrainConfig, extra: dict | None = None):
    doc = {
        "schema": CHECKPOINT_SCHEMA,
        "variant": config.variant,
        "dims": {"d": params.d, "d_w": params.d_w, "d_r": params.d_r},
        "lam": params.lam,
        "hops": params.hops,
        "normalize_coattention": params.normalize_coattention,
        "config": asdict(config),
        "config_hash": config.digest(),
        "W1": params.W1.astype(np.float64).tolist(),
        "W2": params.W2.astype(np.float64).tolist(),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, separators=(",", ":")), encoding="utf-8")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}:{exc.colno}: malformed checkpoint: {exc.msg}") from None
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"{path}: unsupported checkpoint schema {doc.get('schema')!r}")
    params = ModelParams(W1=np.array(doc["W1"]), W2=np.array(doc["W2"]), lam=doc["lam"],
                         hops=doc["hops"], normalize_coattention=doc["normalize_coattention"])
    dims = doc["dims"]
    if (params.d, params.d_w, params.d_r) != (dims["d"], dims["d_w"], dims["d_r"]):
        raise ValueError(f"{path}: stored dims {dims} disagree with the weight shapes")
    return params, doc
