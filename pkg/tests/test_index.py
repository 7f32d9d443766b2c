from __future__ import annotations

import struct

import numpy as np
import pytest

from rite.container import MAGIC
from rite.core import EmbeddingVector, l2_normalize
from rite.errors import (
    ChecksumError,
    DimMismatchError,
    DuplicateIdError,
    FormatError,
    ZeroVectorError,
)
from rite.index import VectorIndex, build, load, merge_results, save, search


def vec(*values) -> EmbeddingVector:
    return EmbeddingVector.of(np.asarray(values, dtype=np.float32))


def brute_force(entries, query_vec, k):
    """Independent oracle: normalize, dot per row, full sort."""
    qn = l2_normalize(query_vec).values.astype(np.float64)
    scored = []
    for doc_id, v in entries:
        rn = l2_normalize(v).values.astype(np.float64)
        s = min(1.0, max(-1.0, float(np.dot(rn, qn))))
        scored.append((doc_id, s))
    scored.sort(key=lambda p: (-p[1], p[0]))
    return scored[:k]


def random_entries(rng, count, dim, duplicate_every=0):
    entries = []
    for i in range(count):
        if duplicate_every and i and i % duplicate_every == 0:
            values = entries[i - 1][1].values.copy()
        else:
            values = rng.normal(size=dim).astype(np.float32)
            if not np.any(values):
                values[0] = 1.0
        entries.append((f"doc{i:04d}", EmbeddingVector.of(values)))
    return entries


class TestBuild:
    def test_rows_normalized(self):
        idx = build([("a", vec(2, 0)), ("b", vec(0, 3))])
        assert np.allclose(idx.matrix, [[1, 0], [0, 1]])
        assert idx.ids == ("a", "b")

    def test_duplicate_id(self):
        with pytest.raises(DuplicateIdError):
            build([("a", vec(1, 0)), ("a", vec(0, 1))])

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatchError):
            build([("a", vec(1, 0)), ("b", vec(1, 0, 0))])

    def test_zero_vector(self):
        with pytest.raises(ZeroVectorError):
            build([("a", vec(0, 0))])

    def test_empty_entries(self):
        idx = build([])
        assert len(idx) == 0
        assert search(idx, vec(1, 0), 5) == []


class TestSearch:
    def test_orthonormal_basis(self):
        idx = build([("a", vec(1, 0)), ("b", vec(0, 1))])
        results = search(idx, vec(1, 0), 2)
        assert [(r.doc_id, round(r.score, 6)) for r in results] == [("a", 1.0), ("b", 0.0)]

    def test_tie_broken_by_id_ascending(self):
        idx = build([("b", vec(1, 0)), ("a", vec(1, 0))])
        results = search(idx, vec(1, 0), 2)
        assert [r.doc_id for r in results] == ["a", "b"]

    def test_self_retrieval(self):
        rng = np.random.default_rng(5)
        entries = random_entries(rng, 20, 8)
        idx = build(entries)
        for i in (0, 7, 19):
            top = search(idx, entries[i][1], 1)
            assert top[0].doc_id == entries[i][0]
            assert top[0].score == pytest.approx(1.0, abs=1e-4)

    def test_k_larger_than_count(self):
        idx = build([("a", vec(1, 0))])
        assert len(search(idx, vec(1, 1), 10)) == 1

    def test_dim_mismatch(self):
        idx = build([("a", vec(1, 0))])
        with pytest.raises(DimMismatchError):
            search(idx, vec(1, 0, 0), 1)

    def test_zero_query(self):
        idx = build([("a", vec(1, 0))])
        with pytest.raises(ZeroVectorError):
            search(idx, vec(0, 0), 1)

    def test_scores_non_increasing_and_clamped(self):
        rng = np.random.default_rng(11)
        idx = build(random_entries(rng, 50, 16))
        results = search(idx, EmbeddingVector.of(rng.normal(size=16).astype(np.float32)), 50)
        scores = [r.score for r in results]
        assert all(a >= b for a, b in zip(scores, scores[1:]))
        assert all(-1.0 <= s <= 1.0 for s in scores)

    @pytest.mark.parametrize("count,dim,dup", [(37, 8, 5), (200, 16, 0), (400, 64, 7)])
    def test_matches_brute_force_oracle(self, count, dim, dup):
        rng = np.random.default_rng(count * 31 + dim)
        entries = random_entries(rng, count, dim, duplicate_every=dup)
        idx = build(entries)
        query = EmbeddingVector.of(rng.normal(size=dim).astype(np.float32))
        k = min(count, 25)
        got = search(idx, query, k)
        want = brute_force(entries, query, k)
        assert [r.doc_id for r in got] == [doc_id for doc_id, _ in want]
        for r, (_, s) in zip(got, want):
            assert r.score == pytest.approx(s, abs=1e-6)

    def test_shard_merge_distributivity(self):
        rng = np.random.default_rng(99)
        entries = random_entries(rng, 60, 8)
        whole = build(entries)
        left = build(entries[:25])
        right = build(entries[25:])
        query = EmbeddingVector.of(rng.normal(size=8).astype(np.float32))
        merged = merge_results(
            [search(left, query, 10), search(right, query, 10)], 10
        )
        direct = search(whole, query, 10)
        assert [r.doc_id for r in merged] == [r.doc_id for r in direct]
        for a, b in zip(merged, direct):
            assert a.score == pytest.approx(b.score, abs=1e-9)


class TestPersistence:
    def make_index(self, rng, count=10, dim=8):
        return build(random_entries(rng, count, dim))

    def test_round_trip_bitwise(self, tmp_path):
        idx = self.make_index(np.random.default_rng(1))
        path = tmp_path / "x.ritevec"
        save(idx, path)
        loaded = load(path)
        assert loaded.ids == idx.ids
        assert loaded.matrix.tobytes() == idx.matrix.tobytes()

    def test_save_load_save_identical_bytes(self, tmp_path):
        idx = self.make_index(np.random.default_rng(2))
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save(idx, p1)
        save(load(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_unicode_ids_round_trip(self, tmp_path):
        idx = build([("døc-é", vec(1, 0)), ("中文", vec(0, 1))])
        path = tmp_path / "u.ritevec"
        save(idx, path)
        assert load(path).ids == idx.ids

    def test_truncated_file_is_format_error(self, tmp_path):
        idx = self.make_index(np.random.default_rng(3))
        path = tmp_path / "x.ritevec"
        save(idx, path)
        blob = path.read_bytes()
        for cut in (4, 20, len(blob) // 2, len(blob) - 9):
            path.write_bytes(blob[:cut])
            with pytest.raises(FormatError):
                load(path)

    def test_corrupted_payload_is_checksum_error(self, tmp_path):
        idx = self.make_index(np.random.default_rng(4))
        path = tmp_path / "x.ritevec"
        save(idx, path)
        blob = bytearray(path.read_bytes())
        blob[-20] ^= 0xFF  # flip a bit inside the float payload
        path.write_bytes(bytes(blob))
        with pytest.raises(ChecksumError):
            load(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ritevec"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(FormatError):
            load(path)

    def test_bad_version(self, tmp_path):
        idx = self.make_index(np.random.default_rng(6))
        path = tmp_path / "x.ritevec"
        save(idx, path)
        blob = bytearray(path.read_bytes())
        struct.pack_into("<I", blob, len(MAGIC), 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load(path)

    def test_header_payload_mismatch(self, tmp_path):
        idx = self.make_index(np.random.default_rng(7))
        path = tmp_path / "x.ritevec"
        save(idx, path)
        blob = bytearray(path.read_bytes())
        # declare a different dim; payload length no longer matches
        struct.pack_into("<I", blob, len(MAGIC) + 4, 9)
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load(path)

    def test_weights_role_rejected_as_index(self, tmp_path):
        from rite.toylm import ToyLMConfig, init_from_seed, save_weights

        model = init_from_seed(ToyLMConfig(seed=0, d_model=16, n_heads=2, d_ff=32,
                                           max_context=16))
        path = tmp_path / "w.ritevec"
        save_weights(model, path)
        with pytest.raises(FormatError):
            load(path)

    def test_row_norm_validated_on_load(self, tmp_path):
        from rite import container

        path = tmp_path / "x.ritevec"
        matrix = np.array([[3.0, 4.0]], dtype=np.float32)  # not unit norm
        container.write_matrix(path, ["a"], matrix, container.ROLE_INDEX)
        with pytest.raises(Exception):
            load(path)


def test_vector_index_rejects_duplicate_ids():
    matrix = np.eye(2, dtype=np.float32)
    with pytest.raises(DuplicateIdError):
        VectorIndex(dim=2, ids=("a", "a"), matrix=matrix)
