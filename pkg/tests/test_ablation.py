import numpy as np
import pytest

import oracles
from conftest import random_encoded
from hmmn.ablation import (
    RepresentationSpec,
    SpecError,
    Term,
    build_representation,
    enumerate_specs,
    parse_spec,
)
from hmmn.encodings import ModelParams
from hmmn.model import e2emn_forward, hmmn_forward
from hmmn.variants import parse_variant, predict


class TestEnumeration:
    def test_count_and_tables(self):
        specs = enumerate_specs()
        assert len(specs) == 40
        assert sum(s.stage == "single" for s in specs) == 8
        assert len({s.name for s in specs}) == 40

    def test_order(self):
        names = [s.name for s in enumerate_specs()]
        assert names[:8] == ["V", "S", "V'", "S'", "Vbar", "Sbar", "Vhat", "Shat"]
        assert names[8:12] == ["V->S", "S->V", "V->S'", "S'->V"]
        assert names[-2:] == ["Vhat->Shat", "Shat->Vhat"]

    def test_contains_pair(self):
        assert parse_spec("V->S'") in enumerate_specs()

    def test_names_roundtrip(self):
        for spec in enumerate_specs():
            assert parse_spec(spec.name) == spec

    def test_pretty(self):
        assert parse_spec("V->S'").pretty == "V→S′"

    @pytest.mark.parametrize("bad", ["", "X", "S''", "V->V'", "S->V->S", "Sfoo"])
    def test_parse_errors(self, bad):
        with pytest.raises(SpecError):
            parse_spec(bad)

    def test_term_errors(self):
        with pytest.raises(SpecError):
            Term("S", "tilde")
        with pytest.raises(SpecError):
            RepresentationSpec(Term("S"), Term("S", "bar"))


class TestBuild:
    @pytest.mark.parametrize("spec", enumerate_specs(), ids=lambda s: s.name)
    def test_shape_follows_left_operand(self, rng, spec):
        enc = random_encoded(rng, d=4, m=3, n=5)
        M = build_representation(spec, enc)
        assert M.shape == (4, 3 if spec.left.modality == "S" else 5)
        assert np.isfinite(M).all()

    def test_identity(self, rng):
        enc = random_encoded(rng)
        assert build_representation("S", enc) is enc.S

    def test_self_attention_on_orthogonal_columns(self, rng):
        enc = random_encoded(rng, d=4, m=3)
        enc.S[:] = np.eye(4)[:, :3] * np.array([2.0, -1.0, 0.5])
        assert np.array_equal(build_representation("Shat", enc), np.zeros((4, 3)))

    def test_pair_against_scalar_loop(self, rng):
        enc = random_encoded(rng, d=3, m=4, n=2)
        _, S_prime = oracles.query_to_context(list(enc.q), oracles.to_cols(enc.S))
        expected = oracles.inter_modal(oracles.to_cols(enc.V), S_prime)
        np.testing.assert_allclose(build_representation("V->S'", enc), np.array(expected).T,
                                   rtol=0, atol=1e-12)

    def test_trace_records_weights(self, rng):
        enc = random_encoded(rng, m=3, n=2)
        trace = {}
        build_representation("V'->Shat", enc, trace=trace)
        assert set(trace) == {"alpha[V']", "gamma[Shat]", "beta[V'->Shat]"}
        assert trace["beta[V'->Shat]"].shape == (2, 3)


class TestEquivalence:
    @pytest.mark.parametrize("lam", [1.0, 0.45, 0.0, 2.0])
    def test_single_hop_no_answer_matches_pair_baseline(self, rng, lam):
        for _ in range(10):
            enc = random_encoded(rng, d=5, m=4, n=3)
            params = ModelParams(np.eye(5), np.eye(5), lam=lam, hops=1)
            hm = hmmn_forward(enc, params, answer_attention=False)
            M = build_representation("V->S'", enc, query_scale=lam)
            base = e2emn_forward(enc.q, M, enc.A, hops=1, query_scale=lam)
            np.testing.assert_allclose(hm.f, base.f, rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(hm.p, base.p, rtol=1e-10, atol=1e-10)

    def test_default_query_differs_away_from_unit_lambda(self, rng):
        enc = random_encoded(rng, d=5, m=4, n=3, scale=1.5)
        params = ModelParams(np.eye(5), np.eye(5), lam=0.45, hops=1)
        hm = hmmn_forward(enc, params, answer_attention=False)
        base = predict(enc, params, "spec:V->S'")
        assert not np.allclose(hm.f, base.f, atol=1e-6)


class TestVariants:
    @pytest.mark.parametrize("name", ["hmmn", "hmmn-no-answer", "e2emn-S", "e2emn-V", "spec:Vbar->S"])
    def test_roundtrip(self, name):
        assert parse_variant(name).name == name

    def test_unknown(self):
        with pytest.raises(ValueError):
            parse_variant("lstm")

    def test_memory_trace(self, rng):
        enc = random_encoded(rng)
        params = ModelParams(np.eye(4), np.eye(4), hops=2)
        doc = predict(enc, params, "spec:V'->S", keep_trace=True).to_json()
        assert len(doc["alpha"]) == 2 and "alpha[V']" in doc
