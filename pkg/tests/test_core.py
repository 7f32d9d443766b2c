from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rite.core import (
    EmbeddingVector,
    GenConfig,
    Qrels,
    Query,
    ReasoningSource,
    ReasoningText,
    ReasoningVariant,
    RetrievalRun,
    ScoredDoc,
    cosine,
    l2_normalize,
)
from rite.errors import (
    DimMismatchError,
    InvalidConfigError,
    NegativeRelevanceError,
    ZeroVectorError,
)


def vec(*values) -> EmbeddingVector:
    return EmbeddingVector.of(np.asarray(values, dtype=np.float32))


finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False, width=32
)
nonzero_vectors = (
    st.lists(finite_floats, min_size=1, max_size=32)
    .filter(lambda vals: any(abs(v) > 1e-3 for v in vals))
)


class TestL2Normalize:
    def test_three_four_five(self):
        out = l2_normalize(vec(3, 4))
        assert out.normalized
        assert np.allclose(out.values, [0.6, 0.8])

    def test_already_unit(self):
        out = l2_normalize(vec(1, 0, 0))
        assert np.allclose(out.values, [1, 0, 0])

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVectorError):
            l2_normalize(vec(0, 0))

    @given(nonzero_vectors)
    @settings(max_examples=200)
    def test_idempotent(self, values):
        once = l2_normalize(EmbeddingVector.of(values))
        twice = l2_normalize(once)
        assert np.max(np.abs(once.values - twice.values)) < 1e-6

    @given(nonzero_vectors)
    def test_unit_norm_and_direction(self, values):
        out = l2_normalize(EmbeddingVector.of(values))
        norm = np.linalg.norm(out.values.astype(np.float64))
        assert abs(norm - 1.0) < 1e-4
        # direction preserved: cosine with the input is 1
        assert cosine(out, EmbeddingVector.of(values)) > 1 - 1e-5


class TestCosine:
    def test_orthogonal(self):
        assert cosine(vec(1, 0), vec(0, 1)) == 0.0

    def test_scale_invariance_exact_case(self):
        assert cosine(vec(2, 0), vec(5, 0)) == 1.0

    def test_hand_derived_45_degrees(self):
        assert cosine(vec(1, 1), vec(1, 0)) == pytest.approx(0.7071, abs=1e-4)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatchError):
            cosine(vec(1, 2), vec(1, 2, 3))

    def test_zero_vector(self):
        with pytest.raises(ZeroVectorError):
            cosine(vec(0, 0), vec(1, 0))

    @given(nonzero_vectors)
    def test_self_similarity(self, values):
        v = EmbeddingVector.of(values)
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-5)

    @given(nonzero_vectors, st.data())
    def test_symmetry_exact(self, values, data):
        other = data.draw(
            st.lists(finite_floats, min_size=len(values), max_size=len(values)).filter(
                lambda vals: any(abs(v) > 1e-3 for v in vals)
            )
        )
        a, b = EmbeddingVector.of(values), EmbeddingVector.of(other)
        assert cosine(a, b) == cosine(b, a)

    @given(nonzero_vectors, st.floats(min_value=1e-3, max_value=1e3))
    def test_positive_scale_invariance(self, values, scale):
        a = EmbeddingVector.of(values)
        scaled = EmbeddingVector.of(np.asarray(values, dtype=np.float32) * np.float32(scale))
        assert cosine(scaled, a) == pytest.approx(cosine(a, a), abs=1e-5)

    @given(nonzero_vectors, st.data())
    def test_range_clamped(self, values, data):
        other = data.draw(
            st.lists(finite_floats, min_size=len(values), max_size=len(values)).filter(
                lambda vals: any(abs(v) > 1e-3 for v in vals)
            )
        )
        score = cosine(EmbeddingVector.of(values), EmbeddingVector.of(other))
        assert -1.0 <= score <= 1.0


class TestTypes:
    def test_embedding_vector_checks_dim(self):
        with pytest.raises(DimMismatchError):
            EmbeddingVector(values=np.zeros(3, dtype=np.float32), dim=4)

    def test_embedding_vector_rejects_nan(self):
        with pytest.raises(InvalidConfigError):
            EmbeddingVector.of([np.nan, 1.0])

    def test_normalized_flag_is_verified(self):
        with pytest.raises(InvalidConfigError):
            EmbeddingVector.of([3.0, 4.0], normalized=True)

    def test_query_requires_text(self):
        with pytest.raises(InvalidConfigError):
            Query(id="q1", text="")

    def test_gen_config_defaults(self):
        cfg = GenConfig()
        assert cfg.temperature == 0.0
        assert cfg.frequency_penalty == 0.3
        assert cfg.n_choices == 1

    def test_gen_config_rejects_zero_tokens(self):
        with pytest.raises(InvalidConfigError):
            GenConfig(max_tokens=0)

    def test_reasoning_source_invariants(self):
        with pytest.raises(InvalidConfigError):
            ReasoningText(text="r", source=ReasoningSource.GENERATED)
        with pytest.raises(InvalidConfigError):
            ReasoningText(
                text="r",
                source=ReasoningSource.PROVIDED,
                prompt_variant=ReasoningVariant.P1,
            )

    def test_retrieval_run_rejects_increasing_scores(self):
        with pytest.raises(InvalidConfigError):
            RetrievalRun({"q": [ScoredDoc("a", 0.1), ScoredDoc("b", 0.5)]})

    def test_retrieval_run_rejects_duplicate_docs(self):
        with pytest.raises(InvalidConfigError):
            RetrievalRun({"q": [ScoredDoc("a", 0.5), ScoredDoc("a", 0.4)]})

    def test_qrels_rejects_negative(self):
        with pytest.raises(NegativeRelevanceError):
            Qrels({"q": {"d": -1}})

    def test_qrels_lookup_defaults_to_zero(self):
        qrels = Qrels({"q": {"d": 2}})
        assert qrels.relevance("q", "d") == 2
        assert qrels.relevance("q", "other") == 0
        assert qrels.relevance("missing", "d") == 0
