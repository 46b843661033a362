import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from curator import (
    EmbeddingMatrix,
    FormatError,
    Manifest,
    ValidationError,
    partition_by_label,
    read_embeddings,
    read_manifest,
    write_embeddings,
    write_manifest,
)
from curator.store import HEADER_SIZE, check_pairing, manifest_path_for


def roundtrip(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    sink = io.BytesIO()
    write_embeddings(matrix, sink)
    return read_embeddings(io.BytesIO(sink.getvalue()))


class TestEmbeddingMatrix:
    def test_basic_shape(self):
        m = EmbeddingMatrix(np.ones((3, 4)))
        assert (m.n, m.d) == (3, 4)
        assert m.data.dtype == np.float32
        assert m.labels is None

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            EmbeddingMatrix(np.empty((0, 4)))
        with pytest.raises(ValidationError):
            EmbeddingMatrix(np.empty((4, 0)))

    def test_rejects_nan_with_location(self):
        data = np.ones((2, 3))
        data[1, 2] = np.nan
        with pytest.raises(ValidationError, match=r"non-finite entry at \(1,2\)"):
            EmbeddingMatrix(data)

    def test_rejects_inf(self):
        with pytest.raises(ValidationError, match="non-finite"):
            EmbeddingMatrix(np.array([[np.inf]]))

    def test_label_length_mismatch(self):
        with pytest.raises(ValidationError, match="labels length"):
            EmbeddingMatrix(np.ones((3, 2)), labels=[0, 1])

    def test_negative_labels(self):
        with pytest.raises(ValidationError, match=">= 0"):
            EmbeddingMatrix(np.ones((2, 2)), labels=[0, -1])

    def test_immutable(self):
        m = EmbeddingMatrix(np.ones((2, 2)), labels=[0, 1])
        with pytest.raises(ValueError):
            m.data[0, 0] = 2.0
        with pytest.raises(ValueError):
            m.labels[0] = 2

    def test_does_not_lock_caller_array(self):
        source = np.ones((2, 2))
        EmbeddingMatrix(source)
        source[0, 0] = 5.0  # still writable


class TestEmb1Format:
    def test_roundtrip_no_labels(self):
        m = EmbeddingMatrix(np.arange(12, dtype=np.float32).reshape(3, 4))
        back = roundtrip(m)
        assert np.array_equal(back.data, m.data)
        assert back.labels is None

    def test_roundtrip_with_labels(self):
        rng = np.random.default_rng(7)
        m = EmbeddingMatrix(rng.standard_normal((5, 3)), labels=[4, 0, 4, 1, 2])
        back = roundtrip(m)
        assert back.data.tobytes() == m.data.tobytes()
        assert np.array_equal(back.labels, m.labels)

    def test_header_bytes_exact(self):
        m = EmbeddingMatrix(np.zeros((2, 3), dtype=np.float32), labels=[0, 1])
        sink = io.BytesIO()
        write_embeddings(m, sink)
        header = sink.getvalue()[:HEADER_SIZE]
        expected = (
            bytes([0x45, 0x4D, 0x42, 0x31])  # "EMB1"
            + bytes([0x01, 0x00, 0x00, 0x00])  # version
            + bytes([0x02, 0, 0, 0, 0, 0, 0, 0])  # n = 2 (u64)
            + bytes([0x03, 0, 0, 0])  # d = 3
            + bytes([0x00])  # dtype f32
            + bytes([0x01])  # has_labels
            + bytes([0x00, 0x00])  # reserved
        )
        assert header == expected

    def test_payload_is_little_endian_row_major(self):
        m = EmbeddingMatrix(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
        sink = io.BytesIO()
        write_embeddings(m, sink)
        payload = sink.getvalue()[HEADER_SIZE:]
        assert payload == np.array([1, 2, 3, 4], dtype="<f4").tobytes()

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="bad magic"):
            read_embeddings(io.BytesIO(b"XXXX" + bytes(20)))

    def test_truncated_header(self):
        with pytest.raises(FormatError, match="truncated header"):
            read_embeddings(io.BytesIO(b"EMB1\x01"))

    def test_unsupported_version(self):
        m = EmbeddingMatrix(np.ones((1, 1)))
        sink = io.BytesIO()
        write_embeddings(m, sink)
        raw = bytearray(sink.getvalue())
        raw[4] = 9
        with pytest.raises(FormatError, match="version"):
            read_embeddings(io.BytesIO(bytes(raw)))

    def test_unsupported_dtype(self):
        m = EmbeddingMatrix(np.ones((1, 1)))
        sink = io.BytesIO()
        write_embeddings(m, sink)
        raw = bytearray(sink.getvalue())
        raw[20] = 7
        with pytest.raises(FormatError, match="dtype"):
            read_embeddings(io.BytesIO(bytes(raw)))

    def test_nonzero_reserved(self):
        m = EmbeddingMatrix(np.ones((1, 1)))
        sink = io.BytesIO()
        write_embeddings(m, sink)
        raw = bytearray(sink.getvalue())
        raw[22] = 1
        with pytest.raises(FormatError, match="reserved"):
            read_embeddings(io.BytesIO(bytes(raw)))

    def test_declared_rows_exceed_payload(self):
        # header says n=10 but the payload only holds 9 rows
        m = EmbeddingMatrix(np.ones((9, 2), dtype=np.float32))
        sink = io.BytesIO()
        write_embeddings(m, sink)
        raw = bytearray(sink.getvalue())
        raw[8] = 10
        with pytest.raises(FormatError, match="truncated payload"):
            read_embeddings(io.BytesIO(bytes(raw)))

    def test_trailing_bytes_rejected(self):
        m = EmbeddingMatrix(np.ones((2, 2)))
        sink = io.BytesIO()
        write_embeddings(m, sink)
        with pytest.raises(FormatError, match="trailing"):
            read_embeddings(io.BytesIO(sink.getvalue() + b"\x00"))

    def test_zero_rows_rejected(self):
        header = b"EMB1" + bytes([1, 0, 0, 0]) + bytes(8) + bytes([1, 0, 0, 0]) + bytes(4)
        with pytest.raises(FormatError, match="n=0"):
            read_embeddings(io.BytesIO(header))

    def test_nan_in_payload_rejected(self):
        m = EmbeddingMatrix(np.ones((1, 1)))
        sink = io.BytesIO()
        write_embeddings(m, sink)
        raw = bytearray(sink.getvalue())
        raw[HEADER_SIZE : HEADER_SIZE + 4] = np.array([np.nan], dtype="<f4").tobytes()
        with pytest.raises(ValidationError, match="non-finite"):
            read_embeddings(io.BytesIO(bytes(raw)))

    def test_file_paths(self, tmp_path):
        m = EmbeddingMatrix(np.ones((2, 2)), labels=[1, 0])
        path = tmp_path / "x.emb1"
        write_embeddings(m, path)
        back = read_embeddings(path)
        assert np.array_equal(back.labels, [1, 0])

    @settings(max_examples=40, deadline=None)
    @given(
        data=hnp.arrays(
            np.float32,
            hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6),
            elements=st.floats(-1e6, 1e6, width=32),
        ),
        with_labels=st.booleans(),
        seed=st.integers(0, 2**31 - 1),
    )
    def test_roundtrip_property(self, data, with_labels, seed):
        labels = None
        if with_labels:
            labels = np.random.default_rng(seed).integers(0, 100, size=data.shape[0])
        m = EmbeddingMatrix(data, labels)
        back = roundtrip(m)
        assert back.data.tobytes() == m.data.tobytes()
        if with_labels:
            assert np.array_equal(back.labels, m.labels)
        else:
            assert back.labels is None


class TestPartition:
    def test_two_classes(self):
        m = EmbeddingMatrix(np.arange(6).reshape(3, 2), labels=[0, 1, 0])
        parts = partition_by_label(m)
        assert sorted(parts) == [0, 1]
        assert np.array_equal(parts[0].data, m.data[[0, 2]])
        assert np.array_equal(parts[1].data, m.data[[1]])
        assert np.array_equal(parts[0].labels, [0, 0])

    def test_single_class(self):
        m = EmbeddingMatrix(np.ones((4, 2)), labels=[3, 3, 3, 3])
        parts = partition_by_label(m)
        assert list(parts) == [3]
        assert parts[3].n == 4

    def test_noncontiguous_ids(self):
        m = EmbeddingMatrix(np.ones((3, 2)), labels=[2, 2, 5])
        parts = partition_by_label(m)
        assert {cid: p.n for cid, p in parts.items()} == {2: 2, 5: 1}

    def test_partition_is_permutation(self):
        rng = np.random.default_rng(11)
        m = EmbeddingMatrix(rng.standard_normal((20, 3)), labels=rng.integers(0, 4, 20))
        parts = partition_by_label(m)
        assert sum(p.n for p in parts.values()) == m.n
        stacked = np.concatenate([parts[cid].data for cid in sorted(parts)])
        rebuilt_order = np.concatenate(
            [np.nonzero(m.labels == cid)[0] for cid in sorted(parts)]
        )
        assert np.array_equal(stacked, m.data[rebuilt_order])
        assert sorted(rebuilt_order.tolist()) == list(range(m.n))

    def test_requires_labels(self):
        with pytest.raises(ValidationError, match="labels absent"):
            partition_by_label(EmbeddingMatrix(np.ones((2, 2))))


class TestManifest:
    def test_roundtrip(self, tmp_path):
        manifest = Manifest(("a/b.png", "c.png", "d e.png"))
        path = tmp_path / "x.manifest"
        write_manifest(manifest, path)
        assert path.read_text() == "a/b.png\nc.png\nd e.png\n"
        assert read_manifest(path).entries == manifest.entries

    def test_unique_entries(self):
        with pytest.raises(ValidationError, match="unique"):
            Manifest(("a", "a"))

    def test_no_empty_entries(self):
        with pytest.raises(ValidationError):
            Manifest(("a", ""))

    def test_pairing_check(self):
        m = EmbeddingMatrix(np.ones((2, 2)))
        check_pairing(m, Manifest(("a", "b")))
        with pytest.raises(ValidationError, match="manifest has"):
            check_pairing(m, Manifest(("a", "b", "c")))

    def test_sidecar_path(self):
        assert manifest_path_for("/tmp/feats.emb1").name == "feats.manifest"
