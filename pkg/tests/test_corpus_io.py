import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lead import corpus_io
from lead.corpus_io import (
    EpochSample,
    SplitAssignment,
    read_label_table,
    read_subject_tensor,
    read_tensor_file,
    split_subjects,
    write_label_table,
    write_subject_tensor,
    write_tensor_file,
)
from lead.errors import DataError, DimensionError, FormatError, LengthError, VersionError


def make_samples(n, t=16, c=3, sid=1, seed=0):
    rng = np.random.default_rng(seed)
    return [
        EpochSample(rng.standard_normal((t, c)).astype(np.float32), subject_id=sid, label=1)
        for _ in range(n)
    ]


class TestTensorFile:
    def test_header_dimensions(self, tmp_path):
        path = tmp_path / "feature_1.leadt"
        write_subject_tensor(make_samples(10, t=128, c=19), path)
        raw = path.read_bytes()
        assert raw[:5] == b"LEADT"
        assert len(raw) == 5 + 2 + 12 + 10 * 128 * 19 * 4

    def test_empty_file_roundtrip(self, tmp_path):
        path = tmp_path / "feature_2.leadt"
        write_subject_tensor([], path, dims=(128, 19))
        data = read_tensor_file(path)
        assert data.shape == (0, 128, 19)

    @given(
        n=st.integers(0, 5),
        t=st.integers(1, 32),
        c=st.integers(1, 8),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=40, deadline=None)
    def test_roundtrip_bitwise(self, tmp_path_factory, n, t, c, seed):
        rng = np.random.default_rng(seed)
        data = rng.standard_normal((n, t, c)).astype(np.float32)
        path = tmp_path_factory.mktemp("rt") / "feature_9.leadt"
        write_tensor_file(path, data)
        back = read_tensor_file(path)
        assert back.dtype == np.float32
        assert np.array_equal(back.view(np.uint32), data.view(np.uint32))

    def test_sample_roundtrip(self, tmp_path):
        samples = make_samples(4, sid=7)
        path = tmp_path / "feature_7.leadt"
        write_subject_tensor(samples, path)
        back = read_subject_tensor(path)
        assert len(back) == 4
        assert all(s.subject_id == 7 for s in back)
        for orig, rec in zip(samples, back):
            assert np.array_equal(orig.data, rec.data)

    def test_mixed_dims_rejected(self, tmp_path):
        samples = make_samples(2)
        samples.append(EpochSample(np.zeros((8, 3), dtype=np.float32), 1, 1))
        with pytest.raises(DimensionError):
            write_subject_tensor(samples, tmp_path / "x.leadt")

    def test_nonfinite_rejected(self, tmp_path):
        samples = make_samples(1)
        samples[0].data[0, 0] = np.nan
        with pytest.raises(DataError):
            write_subject_tensor(samples, tmp_path / "x.leadt")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "feature_1.leadt"
        write_subject_tensor(make_samples(1), path)
        raw = bytearray(path.read_bytes())
        raw[0:1] = b"X"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_tensor_file(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "feature_1.leadt"
        write_subject_tensor(make_samples(3), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-4])
        with pytest.raises(LengthError):
            read_tensor_file(path)

    def test_unknown_version(self, tmp_path):
        path = tmp_path / "feature_1.leadt"
        write_subject_tensor(make_samples(1), path)
        raw = bytearray(path.read_bytes())
        raw[5] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionError):
            read_tensor_file(path)


class TestLabelTable:
    def test_roundtrip(self, tmp_path):
        rows = [(1, 1), (0, 2), (1, 3)]
        path = tmp_path / "label.leadl"
        write_label_table(path, rows)
        assert read_label_table(path) == rows

    def test_duplicate_subjects_rejected(self, tmp_path):
        with pytest.raises(DataError):
            write_label_table(tmp_path / "label.leadl", [(0, 1), (1, 1)])

    def test_noncontiguous_rejected(self, tmp_path):
        with pytest.raises(DataError):
            write_label_table(tmp_path / "label.leadl", [(0, 1), (1, 3)])

    def test_torn_row_rejected(self, tmp_path):
        path = tmp_path / "label.leadl"
        write_label_table(path, [(0, 1), (1, 2)])
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(LengthError):
            read_label_table(path)


class TestCorpusRoundtrip:
    def test_write_load(self, tmp_path):
        subjects = {sid: make_samples(3, sid=sid, seed=sid) for sid in (1, 2, 3, 4)}
        labels = {1: 0, 2: 1, 3: 0, 4: 1}
        corpus_io.write_corpus(
            tmp_path, "demo", subjects, labels, class_names={0: "hc", 1: "ad"}
        )
        corpus = corpus_io.load_corpus(tmp_path)
        assert corpus.dataset_id == "demo"
        assert corpus.subject_ids() == [1, 2, 3, 4]
        back = corpus.load_subject(2)
        assert len(back) == 3
        assert back[0].label == 1
        assert np.array_equal(back[1].data, subjects[2][1].data)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FormatError):
            corpus_io.load_corpus(tmp_path)


class TestSplits:
    def labels(self, n_ad, n_hc):
        out = {}
        for i in range(n_ad):
            out[i + 1] = 1
        for i in range(n_hc):
            out[n_ad + i + 1] = 0
        return out

    def test_ten_subject_ratio(self):
        split = split_subjects(self.labels(5, 5), seed=41)
        sizes = {name: len(split.subjects_in(name)) for name in ("train", "val", "test")}
        assert sizes == {"train": 6, "val": 2, "test": 2}
        for name in sizes:
            per_class = [split.assignment[sid] == name for sid in (1, 2, 3, 4, 5)]
            assert sum(per_class) in (sizes[name] // 2, sizes[name] - sizes[name] // 2)

    def test_deterministic(self):
        a = split_subjects(self.labels(5, 5), seed=41)
        b = split_subjects(self.labels(5, 5), seed=41)
        assert a.assignment == b.assignment

    def test_seed_changes_assignment(self):
        labels = self.labels(50, 50)
        a = split_subjects(labels, seed=41)
        b = split_subjects(labels, seed=42)
        assert any(a.assignment[sid] != b.assignment[sid] for sid in labels)

    @given(
        n_ad=st.integers(1, 40),
        n_hc=st.integers(1, 40),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=60, deadline=None)
    def test_exclusive_and_exhaustive(self, n_ad, n_hc, seed):
        labels = self.labels(n_ad, n_hc)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            split = split_subjects(labels, seed=seed)
        seen = [sid for name in ("train", "val", "test") for sid in split.subjects_in(name)]
        assert sorted(seen) == sorted(labels)

    @given(n_per_class=st.integers(3, 50), seed=st.integers(0, 2**31))
    @settings(max_examples=60, deadline=None)
    def test_stratification_within_one(self, n_per_class, seed):
        labels = self.labels(n_per_class, n_per_class)
        split = split_subjects(labels, seed=seed)
        for name, ratio in zip(("train", "val", "test"), (0.6, 0.2, 0.2)):
            for cls in (0, 1):
                count = sum(
                    1 for sid, lab in labels.items() if lab == cls and split.assignment[sid] == name
                )
                assert abs(count - ratio * n_per_class) <= 1

    def test_tiny_class_warns(self):
        labels = {1: 0, 2: 0, 3: 0, 4: 1}
        with pytest.warns(UserWarning):
            split = split_subjects(labels, seed=41)
        assert len(split.assignment) == 4

    def test_split_assignment_api(self):
        split = SplitAssignment({1: "train", 2: "test"}, seed=0)
        assert split.split_of(1) == "train"
        assert split.subjects_in("test") == [2]
