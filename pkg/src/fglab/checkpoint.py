"""Tensor dump format.

A dump is a single binary blob of little-endian float32 values, one tensor after the
other in row-major order, plus a table of entries giving each tensor's name, shape,
dtype and byte offset. The table lives in the JSON manifest that accompanies the blob.

Example:
    >>> blob, entries = dump_tensors({"w": np.ones((2, 3))})
    >>> len(blob), entries[0].offset
    (24, 0)
"""

from collections.abc import Mapping
from collections.abc import Sequence
from fglab.errors import CheckpointError
from fglab.manifest import atomic_write_bytes
import math
import numpy as np
from pathlib import Path
from pydantic import BaseModel
from pydantic import Field
from typing import Literal


DTYPE = "<f4"
ITEMSIZE = 4


class TensorEntry(BaseModel):
    """Location of one tensor inside a blob."""

    name: str
    shape: list[int]
    dtype: Literal["<f4"] = DTYPE
    offset: int = Field(ge=0)

    @property
    def nbytes(self) -> int:
        """Byte length of the tensor."""
        return math.prod(self.shape) * ITEMSIZE


def dump_tensors(tensors: Mapping[str, np.ndarray]) -> tuple[bytes, list[TensorEntry]]:
    """Serialize arrays in mapping order.

    Args:
        tensors: Arrays by name.

    Returns:
        The blob and its entry table.
    """
    chunks: list[bytes] = []
    entries: list[TensorEntry] = []
    offset = 0
    for name, array in tensors.items():
        data = np.ascontiguousarray(array, dtype=DTYPE).tobytes()
        entries.append(TensorEntry(name=name, shape=list(np.shape(array)), offset=offset))
        chunks.append(data)
        offset += len(data)
    return b"".join(chunks), entries


def load_tensors(
    blob: bytes, entries: Sequence[TensorEntry], source: str = "blob"
) -> dict[str, np.ndarray]:
    """Deserialize arrays listed in ``entries``.

    Args:
        blob: Raw bytes.
        entries: Entry table.
        source: Name used in error messages.

    Returns:
        Arrays by name (float32, writable copies).

    Raises:
        CheckpointError: If an entry reaches past the end of the blob or the blob has
            trailing bytes.
    """
    out: dict[str, np.ndarray] = {}
    end = 0
    for entry in entries:
        stop = entry.offset + entry.nbytes
        if stop > len(blob):
            raise CheckpointError(
                f"{source}: tensor {entry.name!r} needs bytes {entry.offset}..{stop}, "
                f"blob has {len(blob)}"
            )
        count = math.prod(entry.shape)
        array = np.frombuffer(blob, dtype=DTYPE, count=count, offset=entry.offset)
        out[entry.name] = array.reshape(entry.shape).astype(np.float32)
        end = max(end, stop)
    if end != len(blob):
        raise CheckpointError(f"{source}: {len(blob) - end} unexpected trailing bytes")
    return out


def write_blob(path: Path, tensors: Mapping[str, np.ndarray]) -> list[TensorEntry]:
    """Write a dump atomically.

    Args:
        path: Destination ``.bin`` file.
        tensors: Arrays by name.

    Returns:
        The entry table to store in the manifest.
    """
    blob, entries = dump_tensors(tensors)
    atomic_write_bytes(path, blob)
    return entries


def read_blob(path: Path, entries: Sequence[TensorEntry]) -> dict[str, np.ndarray]:
    """Read a dump written by :func:`write_blob`.

    Args:
        path: The ``.bin`` file.
        entries: Entry table from the manifest.

    Returns:
        Arrays by name.

    Raises:
        CheckpointError: If the file is missing or does not match the table.
    """
    if not path.is_file():
        raise CheckpointError(f"missing tensor file: {path}")
    return load_tensors(path.read_bytes(), entries, source=str(path))
