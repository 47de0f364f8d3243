"""Ablation studies over trained populations.

* ``vocab``: populations trained with different vocabulary sizes, evaluated as-is.
* ``gridsize``: one 5x5-trained population evaluated on larger grids, no retraining.
* ``obstacles``: one population evaluated with obstacles in the central region.
* ``implicit``: three ScoreG variants that differ in partner visibility and message
  delivery, evaluated on episodes where both items carry high scores.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from fglab.agent import DecodeMode
from fglab.errors import ConfigError
from fglab.evaluation import METRIC_SEEDS
from fglab.evaluation import MetricsReport
from fglab.evaluation import PairingMode
from fglab.evaluation import Stat
from fglab.evaluation import evaluate
from fglab.generator import ConfigGenerator
from fglab.manifest import atomic_write_text
from fglab.models.config import ExperimentConfig
from fglab.models.env import EnvConfig
from fglab.models.env import Game
from fglab.models.env import ScoreSplit
from fglab.population import Population
import logging
import pandas as pd
from pathlib import Path
from pydantic import ValidationError
from typing import Any


logger = logging.getLogger(__name__)

VOCAB_SIZES = (4, 8, 16, 32)
GRID_SIZES = {Game.SCOREG: range(5, 10), Game.TEMPORALG: range(5, 8)}
OBSTACLE_COUNTS = {Game.SCOREG: range(0, 5), Game.TEMPORALG: range(0, 3)}
IMPLICIT_BASE = "ScoreG-P3-FC-XP"


class AblationKind(StrEnum):
    """Ablation study."""

    VOCAB = "vocab"
    GRIDSIZE = "gridsize"
    OBSTACLES = "obstacles"
    IMPLICIT = "implicit"


@dataclass(frozen=True)
class ImplicitVariant:
    """Partner visibility and message delivery of one implicit-communication variant."""

    name: str
    partner_visible: bool
    communication_enabled: bool


IMPLICIT_VARIANTS = (
    ImplicitVariant("Inv-Com", partner_visible=False, communication_enabled=True),
    ImplicitVariant("Inv-NoCom", partner_visible=False, communication_enabled=False),
    ImplicitVariant("Vis-NoCom", partner_visible=True, communication_enabled=False),
)


def with_env(env: EnvConfig, **changes: Any) -> EnvConfig:
    """Copy of ``env`` with ``changes`` applied and validated.

    Raises:
        ConfigError: If the changed world is invalid.
    """
    try:
        return EnvConfig.model_validate({**env.model_dump(), **changes})
    except ValidationError as exc:
        details = "; ".join(
            f"env.{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()
        )
        raise ConfigError(f"invalid ablation setting {changes}: {details}") from exc


def _stat_columns(prefix: str, stat: Stat) -> dict[str, float | None]:
    return {f"{prefix}_mean": stat.mean, f"{prefix}_std": stat.std}


def _row(setting: str, value: Any, report: MetricsReport) -> dict[str, Any]:
    return {
        "setting": setting,
        "value": value,
        **_stat_columns("cross_sr", report.cross_sr),
        **_stat_columns("self_sr", report.self_sr),
        **_stat_columns("ic", report.ic),
        **_stat_columns("ls", report.ls),
        **_stat_columns("topsim", report.topsim),
        **_stat_columns("success_length", report.mean_success_length),
    }


def _evaluate(
    population: Population,
    env: EnvConfig,
    episodes: int,
    metric_seeds: Sequence[int],
    metrics: Sequence[str],
    pairing: PairingMode = PairingMode.ALL,
) -> MetricsReport:
    config = population.config
    return evaluate(
        population.agents,
        env,
        str(config.name),
        config.config_hash(),
        episodes=episodes,
        metric_seeds=metric_seeds,
        pairing=pairing,
        metrics=metrics,
        decode=DecodeMode.GREEDY,
    ).report


def ablate_vocab(
    populations: Sequence[Population],
    episodes: int = 1000,
    metric_seeds: Sequence[int] = METRIC_SEEDS,
    metrics: Sequence[str] = ("sr", "ic", "ls", "topsim"),
) -> list[dict[str, Any]]:
    """Evaluate populations trained with different vocabulary sizes.

    Raises:
        ConfigError: If a population's vocabulary size is not one of 4, 8, 16, 32.
    """
    rows: list[dict[str, Any]] = []
    for population in sorted(populations, key=lambda p: p.config.env.vocab_size):
        env = population.config.env
        if env.vocab_size not in VOCAB_SIZES:
            raise ConfigError(f"vocab_size {env.vocab_size} is not one of {VOCAB_SIZES}")
        env = with_env(env, score_split=ScoreSplit.TEST) if env.game == Game.SCOREG else env
        report = _evaluate(population, env, episodes, metric_seeds, metrics)
        rows.append(_row("vocab", env.vocab_size, report))
        logger.info("vocab %d evaluated", env.vocab_size)
    return rows


def ablate_gridsize(
    population: Population,
    sizes: Sequence[int] | None = None,
    episodes: int = 1000,
    metric_seeds: Sequence[int] = METRIC_SEEDS,
    metrics: Sequence[str] = ("sr",),
) -> list[dict[str, Any]]:
    """Evaluate one population on square grids of several sizes.

    Raises:
        ConfigError: If a size is outside the studied range for the game.
    """
    base = population.config.env
    allowed = GRID_SIZES[base.game]
    chosen = list(allowed) if sizes is None else list(sizes)
    for size in chosen:
        if size not in allowed:
            raise ConfigError(
                f"grid size {size} outside {allowed.start}..{allowed.stop - 1} for {base.game}"
            )
    rows: list[dict[str, Any]] = []
    for size in chosen:
        changes: dict[str, Any] = {"grid_h": size, "grid_w": size}
        if base.game == Game.SCOREG:
            changes["score_split"] = ScoreSplit.TEST
        env = with_env(base, **changes)
        report = _evaluate(population, env, episodes, metric_seeds, metrics)
        rows.append(_row("gridsize", f"{size}x{size}", report))
        logger.info("grid %dx%d evaluated", size, size)
    return rows


def ablate_obstacles(
    population: Population,
    counts: Sequence[int] | None = None,
    episodes: int = 1000,
    metric_seeds: Sequence[int] = METRIC_SEEDS,
    metrics: Sequence[str] = ("sr",),
) -> list[dict[str, Any]]:
    """Evaluate one population with obstacles in the central region.

    Raises:
        ConfigError: If a count is outside the studied range for the game.
    """
    base = population.config.env
    allowed = OBSTACLE_COUNTS[base.game]
    chosen = list(allowed) if counts is None else list(counts)
    for count in chosen:
        if count not in allowed:
            raise ConfigError(
                f"obstacle count {count} outside {allowed.start}..{allowed.stop - 1} "
                f"for {base.game}"
            )
    rows: list[dict[str, Any]] = []
    for count in chosen:
        changes: dict[str, Any] = {"n_obstacles": count}
        if base.game == Game.SCOREG:
            changes["score_split"] = ScoreSplit.TEST
        report = _evaluate(population, with_env(base, **changes), episodes, metric_seeds, metrics)
        rows.append(_row("obstacles", count, report))
        logger.info("%d obstacle(s) evaluated", count)
    return rows


def variant_config(variant: ImplicitVariant, seed: int = 0) -> ExperimentConfig:
    """Training config of one implicit-communication variant."""
    base = ExperimentConfig.from_name(IMPLICIT_BASE)
    env = with_env(
        base.env,
        partner_visible=variant.partner_visible,
        communication_enabled=variant.communication_enabled,
    )
    return base.model_copy(update={"env": env, "run": base.run.model_copy(update={"seed": seed})})


def write_variant_configs(out_dir: Path, seed: int = 0) -> list[Path]:
    """Write one training config per implicit-communication variant.

    Returns:
        Paths of the written files, ``<variant>.fg``.
    """
    paths: list[Path] = []
    for variant in IMPLICIT_VARIANTS:
        path = out_dir / f"{variant.name}.fg"
        ConfigGenerator(variant_config(variant, seed)).write_to_file(
            path, comment=f"implicit-communication variant {variant.name}"
        )
        paths.append(path)
    return paths


def identify_variant(env: EnvConfig) -> ImplicitVariant:
    """Variant matching a world's visibility and delivery flags.

    Raises:
        ConfigError: If the flags match no variant.
    """
    for variant in IMPLICIT_VARIANTS:
        if (variant.partner_visible, variant.communication_enabled) == (
            env.partner_visible,
            env.communication_enabled,
        ):
            return variant
    raise ConfigError(
        "checkpoint is not an implicit-communication variant "
        f"(partner_visible={env.partner_visible}, communication={env.communication_enabled})"
    )


def ablate_implicit(
    populations: Sequence[Population],
    episodes: int = 1000,
    metric_seeds: Sequence[int] = METRIC_SEEDS,
) -> list[dict[str, Any]]:
    """Evaluate the implicit-communication variants on high-score episodes.

    Raises:
        ConfigError: If a population is not a ScoreG variant.
    """
    rows: list[dict[str, Any]] = []
    for population in populations:
        env = population.config.env
        if env.game != Game.SCOREG:
            raise ConfigError("implicit-communication ablation is defined for ScoreG only")
        variant = identify_variant(env)
        report = _evaluate(
            population,
            with_env(env, score_split=ScoreSplit.HIGH),
            episodes,
            metric_seeds,
            ("sr",),
            pairing=PairingMode.CROSS,
        )
        rows.append(_row("implicit", variant.name, report))
        logger.info("%s evaluated", variant.name)
    return rows


def write_table(rows: list[dict[str, Any]], path: Path) -> Path:
    """Write ablation rows as CSV."""
    atomic_write_text(path, pd.DataFrame(rows).to_csv(index=False))
    return path
