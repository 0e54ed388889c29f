import numpy as np
import pytest

from infip.datasets import (
    DatasetError,
    load_dataset_dir,
    make_synthetic_dataset,
    quantize,
    save_dataset_dir,
)
from infip.pgm import PgmError, read_pgm, write_pgm


class TestPgm:
    def test_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(7, 5), dtype=np.uint8)
        write_pgm(tmp_path / "x.pgm", img)
        got, maxval = read_pgm(tmp_path / "x.pgm")
        assert maxval == 255
        assert np.array_equal(got, img)

    def test_header_comments_and_whitespace(self, tmp_path):
        raw = b"P5 # a comment\n# another\n  2\t3 # dims\n255\n" + bytes(range(6))
        (tmp_path / "c.pgm").write_bytes(raw)
        got, maxval = read_pgm(tmp_path / "c.pgm")
        assert got.shape == (3, 2)
        assert got.ravel().tolist() == list(range(6))

    def test_truncated_raster(self, tmp_path):
        (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n" + bytes(3))
        with pytest.raises(PgmError, match="truncated"):
            read_pgm(tmp_path / "t.pgm")

    def test_wide_maxval_rejected(self, tmp_path):
        (tmp_path / "w.pgm").write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(PgmError, match="maxval"):
            read_pgm(tmp_path / "w.pgm")

    def test_not_pgm(self, tmp_path):
        (tmp_path / "n.pgm").write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
        with pytest.raises(PgmError, match="P5"):
            read_pgm(tmp_path / "n.pgm")

    def test_writer_rejects_non_uint8(self, tmp_path):
        with pytest.raises(PgmError):
            write_pgm(tmp_path / "f.pgm", np.zeros((2, 2)))


class TestSynthetic:
    def test_deterministic(self):
        a = make_synthetic_dataset(50, 9)
        b = make_synthetic_dataset(50, 9)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)

    def test_seed_changes_content(self):
        a = make_synthetic_dataset(50, 9)
        b = make_synthetic_dataset(50, 10)
        assert not np.array_equal(a.images, b.images)

    def test_classes_balanced(self):
        data = make_synthetic_dataset(200, 4)
        counts = np.bincount(data.labels, minlength=10)
        assert counts.tolist() == [20] * 10

    def test_pixels_on_8bit_grid(self):
        data = make_synthetic_dataset(10, 4)
        scaled = data.images * 255.0
        assert np.max(np.abs(scaled - np.rint(scaled))) < 1e-9
        assert data.images.min() >= 0 and data.images.max() <= 1

    def test_rejects_bad_sizes(self):
        with pytest.raises(DatasetError):
            make_synthetic_dataset(0, 1)
        with pytest.raises(DatasetError):
            make_synthetic_dataset(10, 1, num_classes=1)


class TestDatasetDir:
    def test_round_trip(self, tmp_path):
        data = make_synthetic_dataset(30, 5)
        save_dataset_dir(data, tmp_path / "ds")
        loaded = load_dataset_dir(tmp_path / "ds", num_classes=10)
        assert np.array_equal(loaded.images, data.images)
        assert np.array_equal(loaded.labels, data.labels)

    def test_missing_labels_csv(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(DatasetError, match="labels.csv"):
            load_dataset_dir(tmp_path / "empty")

    def test_missing_image_named(self, tmp_path):
        d = tmp_path / "ds"
        d.mkdir()
        (d / "labels.csv").write_text("filename,label\nghost.pgm,0\n")
        with pytest.raises(DatasetError, match="ghost.pgm"):
            load_dataset_dir(d)

    def test_bad_label_row(self, tmp_path):
        d = tmp_path / "ds"
        d.mkdir()
        write_pgm(d / "a.pgm", np.zeros((2, 2), dtype=np.uint8))
        (d / "labels.csv").write_text("filename,label\na.pgm,zebra\n")
        with pytest.raises(DatasetError, match="bad label"):
            load_dataset_dir(d)

    def test_low_maxval_normalized(self, tmp_path):
        d = tmp_path / "ds"
        d.mkdir()
        (d / "img.pgm").write_bytes(b"P5\n2 1\n100\n" + bytes([0, 100]))
        (d / "labels.csv").write_text("img.pgm,0\n")
        loaded = load_dataset_dir(d, num_classes=2)
        assert loaded.images.ravel().tolist() == [0.0, 1.0]

    def test_quantize_snaps_to_grid(self):
        x = np.array([0.0, 0.5, 1.0, 0.123456])
        q = quantize(x)
        assert np.array_equal(q, np.rint(x * 255) / 255)
