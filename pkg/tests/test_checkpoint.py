import struct
from pathlib import Path

import numpy as np
import pytest

from shrinkcast.checkpoint import (
    BadMagicError,
    Checkpoint,
    DuplicateTensorError,
    ModelConfig,
    ShapeMismatchError,
    TruncatedFileError,
    read_checkpoint,
    required_tensor_shapes,
    validate_against_config,
    write_checkpoint,
)
from shrinkcast.model import init_checkpoint

GOLDEN = Path(__file__).parent / "data" / "golden_w2x2.tckp"


def build_golden_bytes():
    """Independent byte-layout construction of the golden fixture."""
    blob = bytearray()
    blob += b"TCKP"
    blob += struct.pack("<B", 1)
    blob += struct.pack("<5I", 1, 1, 2, 2, 2)
    blob += struct.pack("<I", 1)
    blob += struct.pack("<H", 1) + b"w"
    blob += struct.pack("<B", 2)
    blob += struct.pack("<2I", 2, 2)
    blob += struct.pack("<Q", 0)
    blob += struct.pack("<Q", 16)
    blob += struct.pack("<4f", 1.0, 2.0, 3.0, 4.0)
    return bytes(blob)


def golden_checkpoint():
    return Checkpoint(
        config=ModelConfig(1, 1, 2, 2, 2),
        tensors={"w": np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)},
    )


def random_checkpoint(seed):
    rng = np.random.default_rng(seed)
    config = ModelConfig(
        n_layers=int(rng.integers(1, 4)),
        n_heads=int(rng.integers(1, 3)),
        d_model=int(rng.integers(1, 3)) * 4,
        vocab_size=int(rng.integers(3, 20)),
        max_seq_len=int(rng.integers(2, 10)),
    )
    tensors = {
        name: rng.normal(size=shape).astype(np.float32)
        for name, shape in required_tensor_shapes(config).items()
    }
    return Checkpoint(config=config, tensors=tensors)


class TestRoundTrip:
    def test_round_trip_identity(self, tmp_path):
        for seed in range(10):
            ckpt = random_checkpoint(seed)
            path = tmp_path / f"rt_{seed}.tckp"
            write_checkpoint(ckpt, str(path))
            assert read_checkpoint(str(path)) == ckpt

    def test_round_trip_preserves_bits(self, tmp_path):
        ckpt = random_checkpoint(42)
        path = tmp_path / "bits.tckp"
        write_checkpoint(ckpt, str(path))
        loaded = read_checkpoint(str(path))
        for name, arr in ckpt.tensors.items():
            assert loaded.tensors[name].tobytes() == arr.tobytes()

    def test_two_writes_byte_identical(self, tmp_path):
        ckpt = random_checkpoint(7)
        a, b = tmp_path / "a.tckp", tmp_path / "b.tckp"
        write_checkpoint(ckpt, str(a))
        write_checkpoint(ckpt, str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_config_stored_in_container(self, tmp_path):
        ckpt = random_checkpoint(3)
        path = tmp_path / "cfg.tckp"
        write_checkpoint(ckpt, str(path))
        assert read_checkpoint(str(path)).config == ckpt.config


class TestGoldenFixture:
    def test_golden_bytes_committed(self):
        assert GOLDEN.read_bytes() == build_golden_bytes()

    def test_writer_reproduces_golden(self, tmp_path):
        path = tmp_path / "golden.tckp"
        write_checkpoint(golden_checkpoint(), str(path))
        assert path.read_bytes() == GOLDEN.read_bytes()

    def test_reader_parses_golden(self):
        ckpt = read_checkpoint(str(GOLDEN))
        assert ckpt.config == ModelConfig(1, 1, 2, 2, 2)
        np.testing.assert_array_equal(
            ckpt.tensors["w"], np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        )


class TestCorruptFiles:
    def _write(self, tmp_path, blob):
        path = tmp_path / "bad.tckp"
        path.write_bytes(blob)
        return str(path)

    def test_bad_magic(self, tmp_path):
        blob = bytearray(build_golden_bytes())
        blob[:4] = b"NOPE"
        with pytest.raises(BadMagicError):
            read_checkpoint(self._write(tmp_path, bytes(blob)))

    def test_bad_version(self, tmp_path):
        blob = bytearray(build_golden_bytes())
        blob[4] = 9
        with pytest.raises(BadMagicError):
            read_checkpoint(self._write(tmp_path, bytes(blob)))

    def test_truncated_data_section(self, tmp_path):
        blob = build_golden_bytes()[:-8]  # drop half the float payload
        with pytest.raises(TruncatedFileError):
            read_checkpoint(self._write(tmp_path, blob))

    def test_truncated_header(self, tmp_path):
        blob = build_golden_bytes()[:12]
        with pytest.raises(TruncatedFileError):
            read_checkpoint(self._write(tmp_path, blob))

    def test_declared_length_mismatch(self, tmp_path):
        blob = bytearray(build_golden_bytes())
        # the u64 data-section length sits 24 bytes from the end (8 + 16)
        struct.pack_into("<Q", blob, len(blob) - 24, 999)
        with pytest.raises(ShapeMismatchError):
            read_checkpoint(self._write(tmp_path, bytes(blob)))

    def test_duplicate_tensor_name(self, tmp_path):
        blob = bytearray()
        blob += b"TCKP" + struct.pack("<B", 1)
        blob += struct.pack("<5I", 1, 1, 2, 2, 2)
        blob += struct.pack("<I", 2)
        entry = struct.pack("<H", 1) + b"w" + struct.pack("<B", 1) + struct.pack("<I", 2)
        blob += entry + struct.pack("<Q", 0)
        blob += entry + struct.pack("<Q", 8)
        blob += struct.pack("<Q", 16)
        blob += struct.pack("<4f", 1, 2, 3, 4)
        with pytest.raises(DuplicateTensorError):
            read_checkpoint(self._write(tmp_path, bytes(blob)))

    def test_non_contiguous_offsets(self, tmp_path):
        blob = bytearray(build_golden_bytes())
        # the tensor's u64 offset precedes the u64 section length
        struct.pack_into("<Q", blob, len(blob) - 32, 4)
        with pytest.raises(ShapeMismatchError):
            read_checkpoint(self._write(tmp_path, bytes(blob)))


class TestWriteValidation:
    def test_rejects_wrong_dtype(self, tmp_path):
        ckpt = golden_checkpoint()
        ckpt.tensors["w"] = ckpt.tensors["w"].astype(np.float64)
        with pytest.raises(ValueError, match="float32"):
            write_checkpoint(ckpt, str(tmp_path / "x.tckp"))

    def test_rejects_empty_name(self, tmp_path):
        ckpt = golden_checkpoint()
        ckpt.tensors[""] = np.ones((2,), dtype=np.float32)
        with pytest.raises(ValueError, match="non-empty"):
            write_checkpoint(ckpt, str(tmp_path / "x.tckp"))

    def test_rejects_bad_config(self, tmp_path):
        ckpt = golden_checkpoint()
        ckpt.config = ModelConfig(0, 1, 2, 2, 2)
        with pytest.raises(ValueError):
            write_checkpoint(ckpt, str(tmp_path / "x.tckp"))

    def test_unwritable_path(self):
        with pytest.raises(OSError):
            write_checkpoint(golden_checkpoint(), "/nonexistent-dir/x.tckp")


class TestValidateAgainstConfig:
    def test_complete_checkpoint_clean(self):
        ckpt = init_checkpoint(ModelConfig(2, 2, 8, 11, 6), seed=0)
        assert validate_against_config(ckpt) == []

    def test_missing_final_norm(self):
        ckpt = init_checkpoint(ModelConfig(2, 2, 8, 11, 6), seed=0)
        del ckpt.tensors["ln_f.gamma"]
        violations = validate_against_config(ckpt)
        assert violations == ["missing tensor: ln_f.gamma"]

    def test_layer_out_of_range(self):
        ckpt = init_checkpoint(ModelConfig(2, 2, 8, 11, 6), seed=0)
        ckpt.tensors["layers.5.ln1.gamma"] = np.ones((8,), dtype=np.float32)
        violations = validate_against_config(ckpt)
        assert violations == ["unexpected tensor: layers.5.ln1.gamma"]

    def test_wrong_shape_reported(self):
        ckpt = init_checkpoint(ModelConfig(2, 2, 8, 11, 6), seed=0)
        ckpt.tensors["lm_head"] = np.ones((3, 3), dtype=np.float32)
        violations = validate_against_config(ckpt)
        assert len(violations) == 1 and "lm_head" in violations[0]
