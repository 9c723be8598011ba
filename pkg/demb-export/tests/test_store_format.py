import numpy as np
import pytest

from demb_export.store_format import (
    StorePayload, StoreWriteError, read_demb, write_demb,
)


def payload(ids, matrix, kind="text", normalized=False):
    return StorePayload(kind=kind, normalized=normalized, ids=list(ids),
                        matrix=np.asarray(matrix, dtype=np.float32))


class TestLayout:
    def test_single_entry_file_size(self, tmp_path):
        path = tmp_path / "s.demb"
        write_demb(payload(["a"], [[1.0, 0.0]]), path)
        # magic + version + kind + count + dim + normalized + (len+"a") + 2 f32
        assert path.stat().st_size == 4 + 1 + 1 + 4 + 4 + 1 + 3 + 8

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(5, 3)).astype(np.float32)
        path = tmp_path / "s.demb"
        write_demb(payload([f"id{i}" for i in range(5)], m, kind="image"), path)
        back = read_demb(path)
        assert back.kind == "image" and not back.normalized
        assert back.ids == [f"id{i}" for i in range(5)]
        assert back.matrix.tobytes() == m.tobytes()

    def test_normalized_flag_checked_on_write(self, tmp_path):
        with pytest.raises(StoreWriteError, match="non-unit"):
            write_demb(payload(["a"], [[2.0, 0.0]], normalized=True),
                       tmp_path / "s.demb")
        write_demb(payload(["a"], [[0.6, 0.8]], normalized=True),
                   tmp_path / "ok.demb")

    def test_kind_byte_values(self, tmp_path):
        for kind, byte in (("text", 0), ("image", 1), ("query", 2)):
            path = tmp_path / f"{kind}.demb"
            write_demb(payload(["a"], [[1.0]], kind=kind), path)
            assert path.read_bytes()[5] == byte


class TestValidation:
    def test_duplicate_ids(self):
        with pytest.raises(StoreWriteError, match="duplicate"):
            payload(["a", "a"], [[1.0], [2.0]])

    def test_count_mismatch(self):
        with pytest.raises(StoreWriteError, match="mismatch"):
            payload(["a"], [[1.0], [2.0]])

    def test_unknown_kind(self):
        with pytest.raises(StoreWriteError, match="kind"):
            payload(["a"], [[1.0]], kind="audio")

    def test_bad_magic_on_read(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(b"XXXX" + b"\x00" * 20)
        with pytest.raises(StoreWriteError, match="magic"):
            read_demb(path)

    def test_truncated_on_read(self, tmp_path):
        path = tmp_path / "s.demb"
        write_demb(payload(["a", "b"], [[1, 2], [3, 4]]), path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(StoreWriteError, match="truncated"):
            read_demb(path)
