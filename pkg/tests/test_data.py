import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmmn.data import (
    Dataset,
    DatasetDimensionError,
    SchemaError,
    SchemaVersionError,
    SyntheticConfig,
    dumps,
    from_preprocessed,
    generate_synthetic,
    load,
    loads,
    save,
    split,
)
from hmmn.encodings import ModelParams, RawInstance, Vocabulary, encode_instance
from hmmn.numerics import make_rng

MINIMAL = """{
  "schema": 1,
  "meta": {"name": "minimal", "d_r": 2},
  "vocab_ref": "",
  "instances": [
    {"q": ["who", "left"],
     "answers": [["anna"], ["ben"], ["cleo"], ["dan"], ["eve"]],
     "subtitles": [["ben", "left", "early"]],
     "frames": [[[0.5, -1.0], [2.0, 0.25]]],
     "gold": 1}
  ]
}
"""


def _small(mode="answer-required", instances=40, seed=0, **kw):
    return generate_synthetic(SyntheticConfig(instances=instances, mode=mode, seed=seed, d=8, d_w=8,
                                              d_r=6, **kw))


def _visual(cfg):
    return make_rng(cfg.seed, "visual").normal(scale=1 / np.sqrt(cfg.d_w), size=(cfg.d_r, cfg.d_w))


def nearest_cue_oracle(raw, vocab, visual):
    """Counts corroborated mentions per choice; picks the choice mentioned exactly once."""
    rendered = vocab.vectors @ visual.T
    frame_words = []
    for fr in raw.frames:
        idx = np.argmin(((fr[:, None, :] - rendered[None]) ** 2).sum(-1), axis=1)
        frame_words.append({vocab.tokens[i] for i in idx})
    counts = []
    for ans in raw.answers:
        in_sentences = sum(set(ans) <= set(s) for s in raw.subtitles)
        in_frames = sum(set(ans) <= w for w in frame_words)
        counts.append(min(in_sentences, in_frames))
    ones = [k for k, c in enumerate(counts) if c == 1]
    return ones[0] if len(ones) == 1 else -1


def question_only_oracle(raw):
    """Retrieves the sentence with most question-token overlap and answers from it."""
    q = set(raw.question)
    best = max(range(len(raw.subtitles)), key=lambda i: (len(q & set(raw.subtitles[i])), -i))
    sentence = set(raw.subtitles[best])
    for k, ans in enumerate(raw.answers):
        if set(ans) <= sentence:
            return k, best
    return 0, best


class TestGenerator:
    def test_cue_one_plants_gold_encoding(self):
        ds = _small(instances=1)
        raw = ds.instances[0]
        params = ModelParams.initialize(8, 8, 6, seed=3)
        enc = encode_instance(raw, ds.vocab, params)
        col = enc.S[:, raw.meta["evidence_sentence"]]
        np.testing.assert_allclose(col, enc.A[:, raw.gold], atol=1e-14)

    def test_same_seed_same_bytes(self):
        assert dumps(_small(seed=4)) == dumps(_small(seed=4))
        assert dumps(_small(seed=4)) != dumps(_small(seed=5))

    def test_same_seed_same_files(self, tmp_path):
        save(_small(seed=2), tmp_path / "a.json")
        save(_small(seed=2), tmp_path / "b.json")
        assert (tmp_path / "a.vocab.tsv").read_bytes() == (tmp_path / "b.vocab.tsv").read_bytes()
        a = json.loads((tmp_path / "a.json").read_text())
        b = json.loads((tmp_path / "b.json").read_text())
        assert a["instances"] == b["instances"]

    def test_nearest_cue_oracle_is_perfect(self):
        cfg = SyntheticConfig(instances=300, seed=11, d=8, d_w=8, d_r=6)
        ds = generate_synthetic(cfg)
        visual = _visual(cfg)
        hits = sum(nearest_cue_oracle(r, ds.vocab, visual) == r.gold for r in ds.instances)
        assert hits == len(ds)

    def test_majority_class_is_chance(self):
        ds = _small(instances=1000, seed=3)
        counts = np.bincount([r.gold for r in ds.instances], minlength=5)
        assert 0.14 <= counts.max() / len(ds) <= 0.26

    def test_answer_required_mention_pattern(self):
        for raw in _small(instances=100).instances:
            mentions = raw.meta["mentions"]
            assert mentions[raw.gold] == 1
            others = [c for k, c in enumerate(mentions) if k != raw.gold]
            assert set(others) <= {0, 2} and 0 in others and 2 in others

    def test_question_is_uninformative_in_answer_required_mode(self):
        ds = _small(instances=1000, seed=8)
        for raw in ds.instances:
            context = {t for s in raw.subtitles for t in s} | {t for a in raw.answers for t in a}
            assert not set(raw.question[1:]) & context
        hits = sum(question_only_oracle(r)[0] == r.gold for r in ds.instances)
        assert hits / len(ds) <= 0.26

    def test_question_retrieves_evidence_in_question_sufficient_mode(self):
        ds = _small(mode="question-sufficient", instances=200, m=5, n=5)
        for raw in ds.instances:
            pick, sentence = question_only_oracle(raw)
            assert sentence == raw.meta["evidence_sentence"]
            assert pick == raw.gold

    def test_weak_cue_adds_filler(self):
        ds = _small(instances=5, cue=0.5)
        for raw in ds.instances:
            assert len(raw.subtitles[raw.meta["evidence_sentence"]]) == 2

    @pytest.mark.parametrize("bad", [dict(m=3), dict(cue=0.0), dict(cue=1.5), dict(mode="easy"),
                                     dict(vocab_size=18), dict(instances=0)])
    def test_invalid_config(self, bad):
        with pytest.raises(ValueError):
            SyntheticConfig(**bad).validate()

    def test_question_types(self):
        assert set(_small(instances=200).qtypes) <= {"what", "who", "why", "how", "where", "other"}


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        ds = _small(instances=6)
        save(ds, tmp_path / "d.json")
        back = load(tmp_path / "d.json")
        assert back.instances == ds.instances
        assert back.vocab == ds.vocab
        assert back.meta == json.loads(json.dumps(ds.meta))
        assert dumps(back) == dumps(ds)

    def test_minimal_fixture(self):
        ds = loads(MINIMAL)
        (raw,) = ds.instances
        assert len(raw.subtitles) == 1 and len(raw.frames) == 1
        assert raw.frames[0].shape == (2, 2) and raw.gold == 1 and raw.qtype == "who"
        assert ds.vocab is None

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "t.json"
        path.write_text(MINIMAL[:120])
        with pytest.raises(SchemaError, match="t.json:"):
            load(path)

    def test_version_mismatch(self):
        with pytest.raises(SchemaVersionError):
            loads(MINIMAL.replace('"schema": 1', '"schema": 2'))

    def test_region_width_mismatch(self):
        with pytest.raises(DatasetDimensionError, match=r"instances\[0\].frames\[0\]\[1\]"):
            loads(MINIMAL.replace("[2.0, 0.25]", "[2.0, 0.25, 1.0]"))

    def test_vocabulary_width_mismatch(self, tmp_path):
        ds = _small(instances=2)
        save(ds, tmp_path / "d.json")
        doc = json.loads((tmp_path / "d.json").read_text())
        doc["meta"]["d_w"] = 3
        (tmp_path / "d.json").write_text(json.dumps(doc))
        with pytest.raises(DatasetDimensionError):
            load(tmp_path / "d.json")

    @pytest.mark.parametrize("old,new,field", [
        ('"gold": 1', '"gold": 7', "gold"),
        ('"gold": 1', '"gold": "1"', "gold"),
        ('["anna"], ["ben"]', '["ben"]', "answers"),
        ('"subtitles": [["ben", "left", "early"]]', '"subtitles": []', "subtitles"),
        ('"q": ["who", "left"]', '"q": ["who", 3]', "q"),
    ])
    def test_field_errors(self, old, new, field):
        with pytest.raises(SchemaError, match=field):
            loads(MINIMAL.replace(old, new))


class TestSplit:
    def _dataset(self, n):
        frame = [np.zeros((1, 2))]
        return Dataset([RawInstance([str(i)], [["a"]] * 5, [["s"]], frame, 0) for i in range(n)])

    def test_sizes(self):
        train, dev = split(self._dataset(10), 0.1, seed=0)
        assert (len(train), len(dev)) == (9, 1)

    def test_deterministic(self):
        a = split(self._dataset(30), 0.2, seed=5)
        b = split(self._dataset(30), 0.2, seed=5)
        assert [r.question for r in a[1].instances] == [r.question for r in b[1].instances]

    @settings(max_examples=50)
    @given(st.integers(2, 200), st.floats(0.01, 0.99), st.integers(0, 1000))
    def test_partition(self, n, fraction, seed):
        train, dev = split(self._dataset(n), fraction, seed)
        a = [r.question[0] for r in train.instances]
        b = [r.question[0] for r in dev.instances]
        assert not set(a) & set(b)
        assert sorted(a + b, key=int) == [str(i) for i in range(n)]
        assert len(b) >= 1 and len(a) >= 1

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1])
    def test_bad_fraction(self, fraction):
        with pytest.raises(ValueError):
            split(self._dataset(10), fraction)


def test_preprocessed_adapter(rng):
    vocab = Vocabulary(["x"], np.ones((1, 3)))
    rec = {"question": ["what"], "answers": [["x"]] * 5, "subtitles": [["x"]],
           "frames": [rng.normal(size=(2, 4))], "correct": 3}
    ds = from_preprocessed([rec], vocab)
    assert ds.instances[0].gold == 3
    assert ds.meta["subtitle_window_seconds"] == 300 and ds.meta["frames_per_clip"] == 32
