"""Unit tests for the tensor dump format."""

from pathlib import Path
import numpy as np
import pytest


class TestDumpTensors:
    """Tests for dump_tensors() and load_tensors()."""

    def test_little_endian_float32(self) -> None:
        """1.0 should be stored as the four little-endian IEEE bytes."""
        from fglab.checkpoint import dump_tensors

        blob, entries = dump_tensors({"one": np.array([1.0])})
        assert blob == b"\x00\x00\x80\x3f"
        assert entries[0].dtype == "<f4"

    def test_offsets_follow_mapping_order(self) -> None:
        """Entries should be packed back to back in insertion order."""
        from fglab.checkpoint import dump_tensors

        blob, entries = dump_tensors({"b": np.zeros((2, 3)), "a": np.zeros(5), "s": np.zeros(())})
        assert [(e.name, e.offset, e.shape) for e in entries] == [
            ("b", 0, [2, 3]),
            ("a", 24, [5]),
            ("s", 44, []),
        ]
        assert len(blob) == 48

    def test_round_trip_bit_identical(self, rng: np.random.Generator) -> None:
        """Float32 arrays should come back bit for bit."""
        from fglab.checkpoint import dump_tensors
        from fglab.checkpoint import load_tensors

        arrays = {
            "w": rng.standard_normal((3, 4)).astype(np.float32),
            "b": np.array([np.inf, -0.0, 1e-40], dtype=np.float32),
        }
        blob, entries = dump_tensors(arrays)
        loaded = load_tensors(blob, entries)
        for name, array in arrays.items():
            assert loaded[name].tobytes() == array.tobytes()
            assert loaded[name].flags.writeable

    def test_truncated_blob(self) -> None:
        """A short blob should name the tensor that overruns it."""
        from fglab.checkpoint import dump_tensors
        from fglab.checkpoint import load_tensors
        from fglab.errors import CheckpointError

        blob, entries = dump_tensors({"w": np.ones(4)})
        with pytest.raises(CheckpointError, match="'w'"):
            load_tensors(blob[:-1], entries)

    def test_trailing_bytes(self) -> None:
        """Extra bytes after the last tensor should be rejected."""
        from fglab.checkpoint import dump_tensors
        from fglab.checkpoint import load_tensors
        from fglab.errors import CheckpointError

        blob, entries = dump_tensors({"w": np.ones(4)})
        with pytest.raises(CheckpointError, match="trailing"):
            load_tensors(blob + b"\x00" * 4, entries)


class TestBlobFiles:
    """Tests for write_blob() and read_blob()."""

    def test_write_then_read(self, tmp_path: Path) -> None:
        """A written blob should read back with its entry table."""
        from fglab.checkpoint import read_blob
        from fglab.checkpoint import write_blob

        path = tmp_path / "agent_0.bin"
        entries = write_blob(path, {"x": np.arange(6).reshape(2, 3)})
        loaded = read_blob(path, entries)
        np.testing.assert_array_equal(loaded["x"], np.arange(6).reshape(2, 3))
        assert path.stat().st_size == 24

    def test_missing_file(self, tmp_path: Path) -> None:
        """A missing file should raise CheckpointError with exit code 3."""
        from fglab.checkpoint import read_blob
        from fglab.errors import CheckpointError

        with pytest.raises(CheckpointError, match="missing tensor file") as excinfo:
            read_blob(tmp_path / "agent_9.bin", [])
        assert excinfo.value.exit_code == 3
