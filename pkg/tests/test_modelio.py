import struct

import pytest

from infip.modelio import (
    FORMAT_VERSION,
    ModelCorruptError,
    ModelFormatError,
    ModelVersionError,
    load_model,
    save_model,
)


@pytest.fixture()
def saved(small_model, tmp_path):
    path = tmp_path / "model.infm"
    save_model(small_model, path)
    return path


class TestRoundTrip:
    def test_reload_preserves_hash(self, small_model, saved):
        assert load_model(saved).model_hash == small_model.model_hash

    def test_save_is_byte_deterministic(self, small_model, tmp_path):
        p1, p2 = tmp_path / "a.infm", tmp_path / "b.infm"
        save_model(small_model, p1)
        save_model(small_model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_lineage_survives(self, small_model, tmp_path):
        noted = small_model.with_lineage("prune(p=0.4)").with_lineage("finetune(epochs=2)")
        path = tmp_path / "noted.infm"
        save_model(noted, path)
        assert load_model(path).lineage == ("prune(p=0.4)", "finetune(epochs=2)")

    def test_magic_bytes(self, saved):
        assert saved.read_bytes()[:4] == b"INFM"


class TestErrors:
    def test_truncated_file(self, saved):
        data = saved.read_bytes()
        saved.write_bytes(data[: len(data) // 2])
        with pytest.raises(ModelCorruptError):
            load_model(saved)

    def test_tampered_weight_byte(self, saved):
        data = bytearray(saved.read_bytes())
        data[-40] ^= 0xFF  # inside the weight blob, before the digest
        saved.write_bytes(bytes(data))
        with pytest.raises(ModelCorruptError, match="digest"):
            load_model(saved)

    def test_future_version_names_both_versions(self, saved):
        import hashlib

        data = bytearray(saved.read_bytes()[:-32])
        struct.pack_into("<H", data, 4, 99)
        data += hashlib.sha256(data).digest()
        saved.write_bytes(bytes(data))
        with pytest.raises(ModelVersionError, match=rf"99.*{FORMAT_VERSION}"):
            load_model(saved)

    def test_wrong_magic(self, saved):
        data = bytearray(saved.read_bytes())
        data[:4] = b"NOPE"
        saved.write_bytes(bytes(data))
        with pytest.raises(ModelFormatError, match="magic"):
            load_model(saved)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_model(tmp_path / "absent.infm")
