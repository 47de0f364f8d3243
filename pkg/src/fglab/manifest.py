"""Run manifests and atomic file writes.

Every artifact a subcommand writes is listed in the ``run_manifest.json`` of its output
directory, together with the experiment name, config hash, seeds and a content hash of
the installed ``fglab`` sources.
"""

from datetime import datetime
from datetime import UTC
import fglab
import hashlib
import logging
import os
from pathlib import Path
from pydantic import BaseModel
from pydantic import Field
import tempfile


logger = logging.getLogger(__name__)

RUN_MANIFEST = "run_manifest.json"


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write bytes to ``path`` through a temporary file in the same directory.

    Args:
        path: Destination file.
        data: File content.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    """Write UTF-8 text to ``path`` atomically.

    Args:
        path: Destination file.
        text: File content.
    """
    atomic_write_bytes(path, text.encode("utf-8"))


def code_hash() -> str:
    """SHA-256 over the package's Python sources, in sorted path order.

    Returns:
        Hex digest identifying the code version.
    """
    root = Path(fglab.__file__).parent
    digest = hashlib.sha256()
    for source in sorted(root.rglob("*.py")):
        digest.update(source.relative_to(root).as_posix().encode("utf-8"))
        digest.update(source.read_bytes())
    return digest.hexdigest()


class RunManifest(BaseModel):
    """Provenance of one output directory.

    Attributes:
        command: Subcommand that produced the directory.
        experiment: Experiment name.
        config_hash: Hash of the experiment config.
        seeds: Seeds used by the command.
        code_hash: Content hash of the fglab sources.
        created_at: First write.
        updated_at: Latest write.
        outputs: Artifact paths relative to the directory.
    """

    command: str
    experiment: str
    config_hash: str
    seeds: list[int] = Field(default_factory=list)
    code_hash: str = Field(default_factory=code_hash)
    created_at: datetime = Field(default_factory=lambda: datetime.now(UTC))
    updated_at: datetime = Field(default_factory=lambda: datetime.now(UTC))
    outputs: list[str] = Field(default_factory=list)


def record_run(
    directory: Path,
    command: str,
    experiment: str,
    config_hash: str,
    seeds: list[int],
    outputs: list[Path],
) -> RunManifest:
    """Create or update the run manifest of an output directory.

    An existing manifest for the same command keeps its creation time and gains the
    new outputs.

    Args:
        directory: Output directory.
        command: Subcommand name.
        experiment: Experiment name.
        config_hash: Config hash of the experiment.
        seeds: Seeds used.
        outputs: Files written by the command.

    Returns:
        The manifest as written.
    """
    path = directory / RUN_MANIFEST
    rel = [(p.relative_to(directory) if p.is_absolute() else p).as_posix() for p in outputs]
    manifest = RunManifest(
        command=command, experiment=experiment, config_hash=config_hash, seeds=seeds, outputs=rel
    )
    if path.exists():
        previous = RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
        if previous.command == command and previous.config_hash == config_hash:
            merged = list(dict.fromkeys([*previous.outputs, *rel]))
            manifest = manifest.model_copy(
                update={"created_at": previous.created_at, "outputs": merged}
            )
    atomic_write_text(path, manifest.model_dump_json(indent=2))
    logger.debug("Run manifest updated: %s", path)
    return manifest
