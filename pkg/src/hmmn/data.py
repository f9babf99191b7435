"""Dataset files, deterministic splits and the planted synthetic task.

Dataset file (UTF-8 JSON)::

    {"schema": 1,
     "meta": {...},
     "vocab_ref": "vocab.tsv",
     "instances": [
        {"q": ["what", ...],
         "answers": [[...], [...], [...], [...], [...]],
         "subtitles": [[...], ...],
         "frames": [[[r_1 ... r_dr], ...], ...],
         "gold": 2,
         "info": {...}},             # optional, generator bookkeeping
        ...]}

``frames`` holds, per frame, a list of regional feature vectors of width
``d_r``. ``vocab_ref`` is resolved relative to the dataset file.

Synthetic task
--------------
Every instance has one evidence sentence holding the gold answer's tokens and
one frame whose regions are rendered from the same tokens through a fixed
random "visual" map. At cue strength ``c < 1`` filler is blended in: extra
filler tokens in the sentence and filler-rendered features mixed into each
region.

``answer-required`` mode: question tokens carry no information about the
instance. Distractor answers are either never mentioned or mentioned in two
separate sentences, each backed by its own frame; every instance contains both
kinds. The gold answer is the only choice with exactly one corroborated
mention, so no answer-independent summary of the context can single it out,
while retrieving context per answer choice can.

``question-sufficient`` mode: the question carries key tokens that also sit in
the evidence sentence, and distractors are never mentioned.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .encodings import NUM_CHOICES, QUESTION_TYPES, RawInstance, Vocabulary
from .numerics import make_rng

SCHEMA_VERSION = 1
MODES = ("answer-required", "question-sufficient")
# metadata carried for real-data imports; not used by the model
SUBTITLE_WINDOW_SECONDS = 300
FRAMES_PER_CLIP = 32


class DatasetError(ValueError):
    pass


class SchemaError(DatasetError):
    pass


class SchemaVersionError(DatasetError):
    pass


class DatasetDimensionError(DatasetError):
    pass


@dataclass
class Dataset:
    instances: list[RawInstance]
    vocab: Vocabulary | None = None
    meta: dict = field(default_factory=dict)
    vocab_ref: str = ""

    def __len__(self):
        return len(self.instances)

    @property
    def qtypes(self) -> list[str]:
        return [r.qtype for r in self.instances]

    def subset(self, indices) -> "Dataset":
        return Dataset([self.instances[i] for i in indices], self.vocab, dict(self.meta), self.vocab_ref)


@dataclass
class SyntheticConfig:
    instances: int = 600
    m: int = 10
    n: int = 8
    regions: int = 4
    vocab_size: int = 40
    sentence_len: int = 4
    answer_len: int = 1
    question_len: int = 3
    d: int = 32
    d_w: int = 32
    d_r: int = 24
    cue: float = 1.0
    mode: str = "answer-required"
    word_scale: float = 3.0
    feature_noise: float = 0.05
    seed: int = 0

    def validate(self):
        counts = ("instances", "m", "n", "regions", "vocab_size", "sentence_len",
                  "answer_len", "question_len", "d", "d_w", "d_r")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0 < self.cue <= 1:
            raise ValueError("cue strength must lie in (0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.feature_noise < 0 or self.word_scale <= 0:
            raise ValueError("noise must be nonnegative and word scale positive")
        # worst case: the evidence plus three distractors mentioned twice
        need = 7 if self.mode == "answer-required" else 1
        if self.m < need or self.n < need:
            raise ValueError(f"{self.mode} mode needs at least {need} sentences and frames")
        pools = _pool_sizes(self)
        key_need = self.question_len - 1 if self.mode == "question-sufficient" else 0
        if pools["content"] < NUM_CHOICES * self.answer_len + key_need:
            raise ValueError("vocabulary too small for the answer pool")
        if pools["filler"] < 1:
            raise ValueError("vocabulary too small for filler words")


_QUESTION_GENERIC = 8


def _pool_sizes(cfg: SyntheticConfig) -> dict:
    rest = cfg.vocab_size - len(QUESTION_TYPES) - _QUESTION_GENERIC
    return {"content": rest // 2, "filler": rest - rest // 2}


def _make_vocab(cfg: SyntheticConfig, rng) -> tuple[Vocabulary, dict]:
    pools = _pool_sizes(cfg)
    words = {
        "qtype": list(QUESTION_TYPES),
        "qgen": [f"q{i}" for i in range(_QUESTION_GENERIC)],
        "content": [f"c{i}" for i in range(pools["content"])],
        "filler": [f"f{i}" for i in range(pools["filler"])],
    }
    tokens = words["qtype"] + words["qgen"] + words["content"] + words["filler"]
    vectors = rng.normal(size=(len(tokens), cfg.d_w))
    vectors *= cfg.word_scale / np.linalg.norm(vectors, axis=1, keepdims=True)
    return Vocabulary(tokens, vectors), words


def _blend_sentence(cue_tokens, cfg, words, rng):
    n_fill = int(round(len(cue_tokens) * (1 - cfg.cue) / cfg.cue))
    toks = list(cue_tokens) + list(rng.choice(words["filler"], size=n_fill))
    rng.shuffle(toks)
    return [str(t) for t in toks]


def _render_frame(cue_tokens, cfg, vocab, visual, words, rng):
    regions = []
    for r in range(cfg.regions):
        vec = visual @ vocab.vector(cue_tokens[r % len(cue_tokens)])
        if cfg.cue < 1:
            filler = visual @ vocab.vector(str(rng.choice(words["filler"])))
            vec = cfg.cue * vec + (1 - cfg.cue) * filler
        regions.append(vec)
    regions = np.array(regions)
    return regions + rng.normal(scale=cfg.feature_noise, size=regions.shape)


def _filler_frame(cfg, vocab, visual, words, rng):
    toks = [str(t) for t in rng.choice(words["filler"], size=cfg.regions)]
    regions = np.array([visual @ vocab.vector(t) for t in toks])
    return regions + rng.normal(scale=cfg.feature_noise, size=regions.shape)


def _make_instance(cfg: SyntheticConfig, vocab, visual, words, rng) -> RawInstance:
    gold = int(rng.integers(NUM_CHOICES))
    content = rng.choice(words["content"], size=NUM_CHOICES * cfg.answer_len + cfg.question_len,
                         replace=False)
    content = [str(t) for t in content]
    answers = [content[k * cfg.answer_len:(k + 1) * cfg.answer_len] for k in range(NUM_CHOICES)]
    qtype = str(rng.choice(QUESTION_TYPES))

    # (choice, cue tokens) for every corroborated mention
    mentions = []
    if cfg.mode == "answer-required":
        question = [qtype] + [str(t) for t in rng.choice(words["qgen"], size=cfg.question_len - 1)]
        mentions.append((gold, answers[gold]))
        distractors = [k for k in range(NUM_CHOICES) if k != gold]
        support = [0, 2] + [2 * int(rng.integers(2)) for _ in range(len(distractors) - 2)]
        rng.shuffle(support)
        for k, count in zip(distractors, support):
            mentions.extend([(k, answers[k])] * count)
    else:
        keys = content[NUM_CHOICES * cfg.answer_len:][:cfg.question_len - 1]
        question = [qtype] + keys
        mentions.append((gold, keys + answers[gold]))

    sent_slots = rng.permutation(cfg.m)[:len(mentions)]
    frame_slots = rng.permutation(cfg.n)[:len(mentions)]
    subtitles: list = [None] * cfg.m
    frames: list = [None] * cfg.n
    for (k, cue_tokens), si, fi in zip(mentions, sent_slots, frame_slots):
        subtitles[si] = _blend_sentence(cue_tokens, cfg, words, rng)
        frames[fi] = _render_frame(answers[k], cfg, vocab, visual, words, rng)
    for i in range(cfg.m):
        if subtitles[i] is None:
            subtitles[i] = [str(t) for t in rng.choice(words["filler"], size=cfg.sentence_len)]
    for i in range(cfg.n):
        if frames[i] is None:
            frames[i] = _filler_frame(cfg, vocab, visual, words, rng)

    info = {
        "evidence_sentence": int(sent_slots[0]),
        "evidence_frame": int(frame_slots[0]),
        "mentions": [sum(1 for k, _ in mentions if k == j) for j in range(NUM_CHOICES)],
    }
    return RawInstance(question=question, answers=answers, subtitles=subtitles,
                       frames=frames, gold=gold, meta=info)


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    config.validate()
    vocab, words = _make_vocab(config, make_rng(config.seed, "vocab"))
    visual = make_rng(config.seed, "visual").normal(
        scale=1 / np.sqrt(config.d_w), size=(config.d_r, config.d_w))
    rng = make_rng(config.seed, "instances")
    instances = [_make_instance(config, vocab, visual, words, rng) for _ in range(config.instances)]
    meta = {"name": f"synthetic-{config.mode}", "seed": config.seed, "generator": asdict(config),
            "d": config.d, "d_w": config.d_w, "d_r": config.d_r}
    return Dataset(instances, vocab, meta)


# -- persistence -------------------------------------------------------------


def _instance_to_json(r: RawInstance) -> dict:
    out = {
        "q": r.question,
        "answers": r.answers,
        "subtitles": r.subtitles,
        "frames": [f.tolist() for f in r.frames],
        "gold": r.gold,
    }
    if r.meta:
        out["info"] = r.meta
    return out


def dumps(dataset: Dataset, vocab_ref: str | None = None) -> str:
    doc = {
        "schema": SCHEMA_VERSION,
        "meta": dataset.meta,
        "vocab_ref": dataset.vocab_ref if vocab_ref is None else vocab_ref,
        "instances": [_instance_to_json(r) for r in dataset.instances],
    }
    return json.dumps(doc, separators=(",", ":"))


def save(dataset: Dataset, path, vocab_path=None) -> None:
    """Write the dataset JSON and, when the dataset carries one, its vocabulary."""
    path = Path(path)
    if dataset.vocab is not None:
        vocab_path = Path(vocab_path) if vocab_path else path.with_suffix(".vocab.tsv")
        dataset.vocab.save(vocab_path)
        try:
            ref = str(vocab_path.resolve().relative_to(path.resolve().parent))
        except ValueError:
            ref = str(vocab_path.resolve())
        dataset.vocab_ref = ref
    path.write_text(dumps(dataset), encoding="utf-8")


def _require(obj, key, where, kind):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaError(f"{where}.{key}: expected {kind.__name__}")
    return value


def _token_lists(value, where):
    if not isinstance(value, list) or not all(isinstance(t, str) for t in value):
        raise SchemaError(f"{where}: expected a list of token strings")
    return value


def _parse_instance(obj, i, d_r):
    where = f"instances[{i}]"
    q = _token_lists(_require(obj, "q", where, list), f"{where}.q")
    answers = _require(obj, "answers", where, list)
    if len(answers) != NUM_CHOICES:
        raise SchemaError(f"{where}.answers: expected {NUM_CHOICES} choices, got {len(answers)}")
    answers = [_token_lists(a, f"{where}.answers[{k}]") for k, a in enumerate(answers)]
    subs = _require(obj, "subtitles", where, list)
    if not subs:
        raise SchemaError(f"{where}.subtitles: at least one sentence required")
    subs = [_token_lists(s, f"{where}.subtitles[{j}]") for j, s in enumerate(subs)]
    frames_raw = _require(obj, "frames", where, list)
    if not frames_raw:
        raise SchemaError(f"{where}.frames: at least one frame required")
    frames = []
    for j, fr in enumerate(frames_raw):
        if not isinstance(fr, list) or not fr:
            raise SchemaError(f"{where}.frames[{j}]: expected a nonempty list of regions")
        for r, region in enumerate(fr):
            if not isinstance(region, list) or not all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) for x in region):
                raise SchemaError(f"{where}.frames[{j}][{r}]: expected a list of numbers")
            if d_r is None:
                d_r = len(region)
            if len(region) != d_r:
                raise DatasetDimensionError(
                    f"{where}.frames[{j}][{r}]: expected {d_r} values, got {len(region)}")
        frames.append(np.array(fr, dtype=np.float64))
    gold = _require(obj, "gold", where, int)
    if isinstance(gold, bool) or not 0 <= gold < NUM_CHOICES:
        raise SchemaError(f"{where}.gold: {gold!r} is not a valid choice index")
    info = obj.get("info", {})
    return RawInstance(q, answers, subs, frames, gold, meta=info if isinstance(info, dict) else {}), d_r


def loads(text: str, source: str = "<string>") -> Dataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{source}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{source}: top level must be an object")
    version = doc.get("schema")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"{source}: schema {version!r}, expected {SCHEMA_VERSION}")
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise SchemaError(f"{source}.meta: expected object")
    vocab_ref = doc.get("vocab_ref", "")
    if not isinstance(vocab_ref, str):
        raise SchemaError(f"{source}.vocab_ref: expected string")
    raw = _require(doc, "instances", source, list)
    d_r = meta.get("d_r") if isinstance(meta.get("d_r"), int) else None
    instances = []
    for i, obj in enumerate(raw):
        inst, d_r = _parse_instance(obj, i, d_r)
        instances.append(inst)
    return Dataset(instances, None, meta, vocab_ref)


def load(path, vocab_path=None) -> Dataset:
    """Load a dataset; the vocabulary comes from ``vocab_path`` or ``vocab_ref``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{path}: not UTF-8 ({exc})") from None
    ds = loads(text, str(path))
    ref = Path(vocab_path) if vocab_path else (path.parent / ds.vocab_ref if ds.vocab_ref else None)
    if ref is not None and ref.exists() and ref.is_file():
        ds.vocab = Vocabulary.load(ref)
        d_w = ds.meta.get("d_w")
        if isinstance(d_w, int) and d_w != ds.vocab.dim:
            raise DatasetDimensionError(f"{ref}: word vectors of width {ds.vocab.dim}, dataset says {d_w}")
    elif vocab_path:
        raise DatasetError(f"vocabulary file {vocab_path} not found")
    return ds


def split(dataset: Dataset, dev_fraction: float = 0.1, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle into disjoint (train, dev) parts covering every instance."""
    if not 0 < dev_fraction < 1:
        raise ValueError("dev fraction must lie strictly between 0 and 1")
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least two instances to split")
    n_dev = min(max(1, int(round(n * dev_fraction))), n - 1)
    order = make_rng(seed, "split").permutation(n)
    return dataset.subset(order[n_dev:]), dataset.subset(order[:n_dev])


def from_preprocessed(records: list[dict], vocab: Vocabulary, name: str = "preprocessed") -> Dataset:
    """Adapter for externally preprocessed QA data.

    Each record needs ``question`` (tokens), ``answers`` (5 token lists),
    ``subtitles`` (token lists for sentences inside the clip window extended
    by 300 s on both sides), ``frames`` (regional feature grids for the 32
    selected frames) and ``correct`` (choice index). Video decoding, subtitle
    parsing and feature extraction happen upstream.
    """
    instances = [
        RawInstance(r["question"], r["answers"], r["subtitles"], r["frames"], int(r["correct"]))
        for r in records
    ]
    meta = {"name": name, "subtitle_window_seconds": SUBTITLE_WINDOW_SECONDS,
            "frames_per_clip": FRAMES_PER_CLIP, "d_w": vocab.dim}
    return Dataset(instances, vocab, meta)


def toy_problem(seed: int, d: int = 8, d_w: int = 6, d_r: int = 5, m: int = 4, n: int = 3,
                vocab_size: int = 10, regions: int = 2):
    """A random unstructured instance with its vocabulary, for gradient checks."""
    rng = make_rng(seed, "toy")
    tokens = [f"w{i}" for i in range(vocab_size)]
    vocab = Vocabulary(tokens, rng.normal(size=(vocab_size, d_w)))

    def pick(k):
        return [str(t) for t in rng.choice(tokens, size=k)]

    raw = RawInstance(
        question=pick(3),
        answers=[pick(2) for _ in range(NUM_CHOICES)],
        subtitles=[pick(3) for _ in range(m)],
        frames=[rng.normal(size=(regions, d_r)) for _ in range(n)],
        gold=int(rng.integers(NUM_CHOICES)),
    )
    return raw, vocab
