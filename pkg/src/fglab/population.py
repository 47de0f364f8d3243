"""Population training loop, pairing sampler and snapshots.

A run directory looks like::

    out/
      config.fg
      training_log.csv
      run_manifest.json
      snapshots/
        step_000000004096/
          manifest.json
          agent_0.bin
          agent_1.bin

Each ``agent_<k>.bin`` holds the agent's parameters followed by its Adam first and
second moments (``adam.m.<name>``, ``adam.v.<name>``) in the tensor dump format.
"""

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from fglab.agent import AgentParams
from fglab.agent import init_agent
from fglab.agent import load_state
from fglab.autodiff import AdamState
from fglab.checkpoint import TensorEntry
from fglab.checkpoint import read_blob
from fglab.checkpoint import write_blob
from fglab.errors import CheckpointError
from fglab.errors import ConfigError
from fglab.errors import FGLabError
from fglab.generator import ConfigGenerator
from fglab.manifest import atomic_write_text
from fglab.manifest import record_run
from fglab.models.config import ExperimentConfig
from fglab.models.population import PopulationConfig
from fglab.parser import parse
from fglab.ppo import SEED_BOUND
from fglab.ppo import EnvSlot
from fglab.ppo import TrainStats
from fglab.ppo import collect_rollout
from fglab.ppo import lr_schedule
from fglab.ppo import ppo_update
import logging
import numpy as np
import os
import pandas as pd
from pathlib import Path
from pydantic import BaseModel
from pydantic import Field
from typing import Any


logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
RUN_CONFIG = "config.fg"
SNAPSHOTS = "snapshots"
TRAINING_LOG = "training_log.csv"
LOG_COLUMNS = [
    "step",
    "agent_id",
    "mean_return",
    "action_entropy",
    "message_entropy",
    "value_loss",
    "lr",
]
THREADS_ENV = "FGLAB_THREADS"


def sample_pairing(population: PopulationConfig, rng: np.random.Generator) -> tuple[int, int]:
    """Draw an ordered (body 0, body 1) pair uniformly from the allowed set.

    Args:
        population: Size, topology and regime.
        rng: Random generator.

    Returns:
        The agents driving body 0 and body 1.
    """
    pairs = population.allowed_pairs()
    return pairs[int(rng.integers(len(pairs)))]


def default_threads() -> int:
    """Worker count for per-agent updates from ``FGLAB_THREADS`` (default 1).

    Raises:
        ConfigError: If the variable is not a positive integer.
    """
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be at least 1, got {threads}")
    return threads


class AgentEntry(BaseModel):
    """One agent's tensor file inside a snapshot."""

    agent_id: int = Field(ge=0)
    file: str
    tensors: list[TensorEntry]
    adam_step: int = Field(default=0, ge=0)


class CheckpointManifest(BaseModel):
    """Contents of a snapshot's ``manifest.json``.

    Attributes:
        format_version: Layout version.
        experiment: Experiment name.
        config_text: Full config file the run was started with.
        config_hash: Hash of the learning-relevant config sections.
        step: Environment steps done.
        iteration: Rollout/update iterations done.
        rng_state: Master generator state.
        agents: Per-agent tensor tables.
    """

    format_version: int = FORMAT_VERSION
    experiment: str
    config_text: str
    config_hash: str
    step: int = Field(ge=0)
    iteration: int = Field(ge=0)
    rng_state: dict[str, Any]
    agents: list[AgentEntry]


@dataclass
class Population:
    """Every agent of a run with its optimizer state and the master generator.

    Attributes:
        config: Experiment configuration.
        agents: Parameters per agent.
        optimizers: Adam state per agent.
        rng: Master generator (pairings, slot seeds, update seeds).
        step: Environment steps done.
        iteration: Iterations done.
        pair_counts: Realized pairings since this object was created.
    """

    config: ExperimentConfig
    agents: list[AgentParams]
    optimizers: list[AdamState]
    rng: np.random.Generator
    step: int = 0
    iteration: int = 0
    pair_counts: Counter[tuple[int, int]] = field(default_factory=Counter)

    @classmethod
    def create(cls, config: ExperimentConfig) -> "Population":
        """Initialize a population from ``config.run.seed``.

        Args:
            config: Experiment configuration.

        Returns:
            Fresh agents with zeroed optimizer state.
        """
        rng = np.random.default_rng(config.run.seed)
        seeds = rng.integers(SEED_BOUND, size=config.population.n_pop)
        agents = [init_agent(int(seed), config.env, config.agent) for seed in seeds]
        return cls(
            config=config,
            agents=agents,
            optimizers=[AdamState.zeros(params) for params in agents],
            rng=rng,
        )

    def new_slots(self) -> list[EnvSlot]:
        """Create ``n_envs`` environment slots seeded from the master generator."""
        return [
            EnvSlot.create(
                self.config.env,
                sample_pairing(self.config.population, self.rng),
                self.config.agent.lstm_hidden,
                self.rng,
            )
            for _ in range(self.config.ppo.n_envs)
        ]

    def assign_pairings(self, slots: list[EnvSlot]) -> None:
        """Re-sample every slot's pairing; a slot whose pairing changes restarts.

        Args:
            slots: Slots to update in place.
        """
        for slot in slots:
            pairing = sample_pairing(self.config.population, self.rng)
            self.pair_counts[pairing] += 1
            if pairing != slot.pairing:
                slot.pairing = pairing
                slot.restart()

    def save(self, directory: Path) -> Path:
        """Write a snapshot.

        Args:
            directory: Snapshot directory (created if needed).

        Returns:
            Path of the written manifest.
        """
        entries: list[AgentEntry] = []
        for k, (params, opt) in enumerate(zip(self.agents, self.optimizers, strict=True)):
            tensors: dict[str, np.ndarray] = {name: p.data for name, p in params.items()}
            tensors.update({f"adam.m.{name}": m for name, m in opt.m.items()})
            tensors.update({f"adam.v.{name}": v for name, v in opt.v.items()})
            file = f"agent_{k}.bin"
            table = write_blob(directory / file, tensors)
            entries.append(AgentEntry(agent_id=k, file=file, tensors=table, adam_step=opt.step))
        manifest = CheckpointManifest(
            experiment=str(self.config.name),
            config_text=ConfigGenerator(self.config).generate(),
            config_hash=self.config.config_hash(),
            step=self.step,
            iteration=self.iteration,
            rng_state=self.rng.bit_generator.state,
            agents=entries,
        )
        path = directory / MANIFEST
        atomic_write_text(path, manifest.model_dump_json(indent=2))
        logger.info("Snapshot written: %s (step %d)", directory, self.step)
        return path

    @classmethod
    def load(cls, path: Path, expected: ExperimentConfig | None = None) -> "Population":
        """Load a snapshot.

        Args:
            path: Snapshot directory, or a run directory (its latest snapshot is used).
            expected: Config the caller intends to continue with; its hash must match.

        Returns:
            The restored population.

        Raises:
            CheckpointError: If the manifest is missing or corrupt, a tensor file is
                missing, or the config hash differs from ``expected``.
        """
        directory = resolve_snapshot(path)
        manifest_path = directory / MANIFEST
        try:
            manifest = CheckpointManifest.model_validate_json(
                manifest_path.read_text(encoding="utf-8")
            )
            config = parse(manifest.config_text)
        except FGLabError as exc:
            raise CheckpointError(f"{manifest_path}: stored config is invalid: {exc}") from exc
        except ValueError as exc:
            raise CheckpointError(f"{manifest_path}: corrupt manifest: {exc}") from exc

        if config.config_hash() != manifest.config_hash:
            raise CheckpointError(f"{manifest_path}: config hash does not match stored config")
        if expected is not None and expected.config_hash() != manifest.config_hash:
            raise CheckpointError(
                f"config hash mismatch: snapshot {manifest.config_hash[:12]} was trained with "
                f"a different configuration than {expected.config_hash()[:12]}"
            )

        by_id = {entry.agent_id: entry for entry in manifest.agents}
        agents: list[AgentParams] = []
        optimizers: list[AdamState] = []
        for k in range(config.population.n_pop):
            entry = by_id.get(k)
            if entry is None:
                raise CheckpointError(f"{manifest_path}: missing agent {k}")
            blob_path = directory / entry.file
            if not blob_path.is_file():
                raise CheckpointError(f"{directory}: missing tensor file for agent {k}")
            arrays = read_blob(blob_path, entry.tensors)
            try:
                params = load_state(config.env, config.agent, arrays)
                opt = AdamState(
                    m={name: arrays[f"adam.m.{name}"] for name in params},
                    v={name: arrays[f"adam.v.{name}"] for name in params},
                    step=entry.adam_step,
                )
            except (KeyError, ValueError) as exc:
                raise CheckpointError(f"{blob_path}: {exc}") from exc
            agents.append(params)
            optimizers.append(opt)

        rng = np.random.default_rng()
        rng.bit_generator.state = manifest.rng_state
        logger.info("Loaded %s from %s (step %d)", manifest.experiment, directory, manifest.step)
        return cls(
            config=config,
            agents=agents,
            optimizers=optimizers,
            rng=rng,
            step=manifest.step,
            iteration=manifest.iteration,
        )


def snapshot_dir(out_dir: Path, step: int) -> Path:
    """Directory of the snapshot taken at ``step``."""
    return out_dir / SNAPSHOTS / f"step_{step:012d}"


def resolve_snapshot(path: Path) -> Path:
    """Return ``path`` if it is a snapshot, else the latest snapshot of a run directory.

    Raises:
        CheckpointError: If no snapshot is found.
    """
    if (path / MANIFEST).is_file():
        return path
    candidates = sorted(p for p in (path / SNAPSHOTS).glob("step_*") if (p / MANIFEST).is_file())
    if not candidates:
        raise CheckpointError(f"no snapshot found in {path}")
    return candidates[-1]


def load_population(path: Path, expected: ExperimentConfig | None = None) -> Population:
    """Load a population from a snapshot or run directory (see :meth:`Population.load`)."""
    return Population.load(path, expected)


def save_population(population: Population, directory: Path) -> Path:
    """Write ``population`` to ``directory`` (see :meth:`Population.save`)."""
    return population.save(directory)


def _log_rows(step: int, stats: list[TrainStats]) -> list[dict[str, Any]]:
    return [
        {
            "step": step,
            "agent_id": k,
            "mean_return": s.mean_return,
            "action_entropy": s.action_entropy,
            "message_entropy": s.message_entropy,
            "value_loss": s.value_loss,
            "lr": s.lr,
        }
        for k, s in enumerate(stats)
    ]


def _write_log(path: Path, rows: list[dict[str, Any]]) -> None:
    frame = pd.DataFrame(rows, columns=LOG_COLUMNS)
    atomic_write_text(path, frame.to_csv(index=False))


def _read_log(path: Path, up_to_step: int) -> list[dict[str, Any]]:
    if not path.is_file():
        return []
    frame = pd.read_csv(path)
    kept = frame[frame["step"] <= up_to_step]
    dropped = len(frame) - len(kept)
    if dropped:
        logger.info("Dropped %d training-log rows written after step %d", dropped, up_to_step)
    return [
        {column: row[column] for column in LOG_COLUMNS}
        for row in kept.to_dict(orient="records")
    ]


def train(
    config: ExperimentConfig,
    out_dir: Path,
    resume: bool = False,
    threads: int | None = None,
    max_iterations: int | None = None,
) -> Path:
    """Train a population.

    Every iteration re-samples each slot's pairing, collects one rollout over all
    slots, then updates every agent on its own sequences (in parallel when
    ``threads > 1``). Snapshots are taken every ``run.snapshot_every`` iterations and at
    the end; slots are re-created after every snapshot so a resumed run continues
    exactly like an uninterrupted one. The effective config is written to
    ``out_dir/config.fg`` only once the resume checks have passed.

    Args:
        config: Experiment configuration.
        out_dir: Run directory.
        resume: Continue from the latest snapshot in ``out_dir``.
        threads: Update workers (default from ``FGLAB_THREADS``).
        max_iterations: Stop after this many iterations in this call.

    Returns:
        The run directory.

    Raises:
        CheckpointError: On resume without a snapshot or with a different config.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / TRAINING_LOG
    if resume:
        population = Population.load(out_dir, expected=config)
        population = Population(
            config=config,
            agents=population.agents,
            optimizers=population.optimizers,
            rng=population.rng,
            step=population.step,
            iteration=population.iteration,
        )
        rows = _read_log(log_path, population.step)
    else:
        population = Population.create(config)
        rows = []
    ConfigGenerator(config).write_to_file(out_dir / RUN_CONFIG, comment="training config")

    workers = threads if threads is not None else default_threads()
    ppo = config.ppo
    n_iterations = ppo.n_iterations
    allowed = set(config.population.allowed_pairs())
    slots = population.new_slots()
    logger.info(
        "Training %s: %d agents, %d iterations of %d steps, %d worker(s)",
        config.name,
        config.population.n_pop,
        n_iterations,
        ppo.batch_size,
        workers,
    )

    done = 0
    outputs: list[Path] = [out_dir / RUN_CONFIG, log_path]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while population.iteration < n_iterations:
            if max_iterations is not None and done >= max_iterations:
                break
            population.assign_pairings(slots)
            if not {slot.pairing for slot in slots} <= allowed:
                raise ConfigError("sampled a pairing outside the allowed set")

            buffers = collect_rollout(population.agents, slots, ppo.rollout_len)
            lr = (
                lr_schedule(population.step, ppo.total_steps, ppo.learning_rate)
                if ppo.anneal_lr
                else ppo.learning_rate
            )
            seeds = population.rng.integers(SEED_BOUND, size=len(population.agents))
            futures = [
                pool.submit(
                    ppo_update,
                    population.agents[k],
                    population.optimizers[k],
                    buffers[k],
                    ppo,
                    lr,
                    np.random.default_rng(int(seeds[k])),
                )
                for k in range(len(population.agents))
            ]
            stats = [future.result() for future in futures]

            population.step += ppo.batch_size
            population.iteration += 1
            done += 1
            rows.extend(_log_rows(population.step, stats))
            _write_log(log_path, rows)
            logger.info(
                "iteration %d/%d step %d lr %.3g mean return %s",
                population.iteration,
                n_iterations,
                population.step,
                lr,
                " ".join(f"{s.mean_return:.3f}" for s in stats),
            )

            if (
                population.iteration % config.run.snapshot_every == 0
                or population.iteration == n_iterations
            ):
                target = snapshot_dir(out_dir, population.step)
                outputs.append(population.save(target))
                outputs.extend(target / f"agent_{k}.bin" for k in range(len(population.agents)))
                slots = population.new_slots()

    logger.debug("Pairing counts: %s", dict(sorted(population.pair_counts.items())))
    record_run(
        out_dir,
        "train",
        str(config.name),
        config.config_hash(),
        [config.run.seed],
        outputs,
    )
    return out_dir
