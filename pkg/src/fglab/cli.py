"""Command-line interface for the Foraging Games lab.

This module provides a Rich CLI for writing experiment configs, training populations
and analysing their emergent languages.

Example:
    $ fglab init-config ScoreG-P2-FC-XP -o scoreg.fg
    $ fglab train scoreg.fg --steps-override 5e6 --out runs/scoreg
    $ fglab eval --ckpt runs/scoreg --episodes 1000
    $ fglab probe --ckpt runs/scoreg --target score --features embedding
    $ fglab ablate --kind gridsize --ckpt runs/scoreg
"""

from collections.abc import Callable
from fglab import __version__
from fglab.ablation import IMPLICIT_VARIANTS
from fglab.ablation import AblationKind
from fglab.ablation import ablate_gridsize
from fglab.ablation import ablate_implicit
from fglab.ablation import ablate_obstacles
from fglab.ablation import ablate_vocab
from fglab.ablation import with_env
from fglab.ablation import write_table
from fglab.ablation import write_variant_configs
from fglab.agent import DecodeMode
from fglab.errors import ConfigError
from fglab.errors import FGLabError
from fglab.evaluation import METRICS
from fglab.evaluation import LSProtocol
from fglab.evaluation import PairingMode
from fglab.evaluation import evaluate
from fglab.evaluation import write_evaluation
from fglab.generator import ConfigGenerator
from fglab.manifest import record_run
from fglab.models.agent import ArchConfig
from fglab.models.base import ConfigSection
from fglab.models.base import format_value
from fglab.models.config import ExperimentConfig
from fglab.models.env import EnvConfig
from fglab.models.env import Game
from fglab.models.env import ScoreSplit
from fglab.models.population import PopulationConfig
from fglab.models.population import RunConfig
from fglab.models.ppo import PPOConfig
from fglab.parser import parse
from fglab.population import Population
from fglab.population import load_population
from fglab.population import train as train_population
from fglab.probe import GAME_TARGETS
from fglab.probe import FeatureMode
from fglab.probe import Target
from fglab.probe import run_probe
from fglab.probe import write_probe
import click
import functools
import logging
from pathlib import Path
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.syntax import Syntax
from rich.table import Table
import sys
from typing import Any


console = Console()
logger = logging.getLogger("fglab")


def print_header() -> None:
    """Print the CLI header with version info."""
    console.print(
        Panel.fit(
            f"[bold blue]Foraging Games Lab[/bold blue] [dim]{__version__}[/dim]",
            border_style="blue",
        )
    )


def print_config_preview(config_text: str, title: str = "Experiment config") -> None:
    """Print a syntax-highlighted preview of a config.

    Args:
        config_text: The config content to display.
        title: Panel title.
    """
    syntax = Syntax(config_text, "ini", theme="monokai", line_numbers=True)
    console.print(Panel(syntax, title=title, border_style="green"))


def print_success(message: str) -> None:
    """Print a success message.

    Args:
        message: The success message to display.
    """
    console.print(f"[bold green]✓[/bold green] {escape(message)}")


def print_error(message: str) -> None:
    """Print an error message.

    Args:
        message: The error message to display.
    """
    console.print(f"[bold red]✗[/bold red] {escape(message)}")


def print_section(title: str) -> None:
    """Print a section header.

    Args:
        title: The section title.
    """
    console.print(f"\n[bold cyan]━━━ {title} ━━━[/bold cyan]\n")


def setup_logging(verbose: bool, quiet: bool) -> None:
    """Route ``fglab`` log records through a single RichHandler.

    Args:
        verbose: Log at DEBUG.
        quiet: Log at WARNING (ignored when ``verbose`` is set).
    """
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)
    handler = RichHandler(console=Console(stderr=True), show_path=False, markup=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False


def handle_errors(func: Callable[..., None]) -> Callable[..., None]:
    """Turn an escaping FGLabError into an error line and its exit code."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            func(*args, **kwargs)
        except FGLabError as exc:
            print_error(str(exc))
            sys.exit(exc.exit_code)

    return wrapper


def read_config(path: Path) -> ExperimentConfig:
    """Parse an experiment config file (ConfigError lists every bad key)."""
    return parse(path.read_text(encoding="utf-8"))


def parse_steps(value: str) -> int:
    """Parse a step count such as ``5e6`` or ``5000000``.

    Raises:
        ConfigError: If the value is not a positive number.
    """
    try:
        steps = int(float(value))
    except ValueError:
        raise ConfigError(f"invalid step count {value!r}") from None
    if steps < 1:
        raise ConfigError(f"step count must be positive, got {value!r}")
    return steps


def summary_table(title: str, rows: list[tuple[str, str]]) -> Table:
    """Two-column table of metric names and values."""
    table = Table(title=title, show_header=True, header_style="bold")
    table.add_column("Metric", style="cyan")
    table.add_column("Value")
    for name, value in rows:
        table.add_row(name, value)
    return table


def fmt(mean: float | None, std: float | None) -> str:
    """Render ``mean ± std`` or ``n/a``."""
    if mean is None:
        return "n/a"
    return f"{mean:.3f} ± {std or 0.0:.3f}"


@click.group()
@click.version_option(version=__version__, prog_name="fglab")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.option("--quiet", "-q", is_flag=True, help="Only warnings and errors")
def main(verbose: bool, quiet: bool) -> None:
    """Foraging Games Lab - train agent populations and analyse their emergent languages."""
    setup_logging(verbose, quiet)


@main.command("init-config")
@click.argument("name")
@click.option(
    "--output",
    "-o",
    type=click.Path(dir_okay=False, writable=True),
    help="Output file (default: <NAME>.fg)",
)
@click.option("--seed", type=int, default=0, help="Master seed written to [run]")
@click.option("--comment", "-c", help="Comment to add to the config file")
@handle_errors
def init_config(name: str, output: str | None, seed: int, comment: str | None) -> None:
    """Write the default config for an experiment name.

    Examples:
        fglab init-config ScoreG-P2-FC-XP
        fglab init-config TemporalG-P15-Ring-XP+SP -o temporal.fg
    """
    print_header()
    try:
        config = ExperimentConfig.from_name(name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    config = config.model_copy(update={"run": RunConfig(seed=seed)})
    generator = ConfigGenerator(config)
    text = generator.generate(comment=comment)
    console.print()
    print_config_preview(text)
    path = Path(output or f"{name}.fg")
    generator.write_to_file(path, comment=comment)
    print_success(f"Configuration saved to: {path}")


@main.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
def validate(config_file: str) -> None:
    """Validate an experiment config file.

    Args:
        config_file: Path to the config file to validate.
    """
    print_header()
    console.print(f"\n[bold]Validating:[/bold] {config_file}\n")
    content = Path(config_file).read_text(encoding="utf-8")
    try:
        config = parse(content)
    except ConfigError as exc:
        console.print("[bold red]Errors found:[/bold red]")
        for error in str(exc).split("; "):
            console.print(f"  [red]• {escape(error)}[/red]")
        code = exc.exit_code
    else:
        print_success(f"No errors found ({config.name}, hash {config.config_hash()[:12]})")
        code = 0

    console.print()
    syntax = Syntax(content, "ini", theme="monokai", line_numbers=True)
    console.print(Panel(syntax, title=config_file, border_style="blue"))
    if code:
        sys.exit(code)


SECTION_MODELS: tuple[type[ConfigSection], ...] = (
    EnvConfig,
    ArchConfig,
    PPOConfig,
    PopulationConfig,
    RunConfig,
)


@main.command()
def docs() -> None:
    """Show documentation about experiment config parameters."""
    print_header()
    for model in SECTION_MODELS:
        heading = escape(f"[{model.SECTION}] Parameters")
        console.print(f"\n[bold cyan]━━━ {heading} ━━━[/bold cyan]")
        table = Table(show_header=True, header_style="bold")
        table.add_column("Parameter", style="cyan")
        table.add_column("Default")
        table.add_column("Description")
        defaults = model()
        for field_name, info in model.model_fields.items():
            value = getattr(defaults, field_name)
            table.add_row(field_name, format_value(value), info.description or "")
        console.print(table)
    console.print(
        "\n[dim]Experiment names: <ScoreG|TemporalG>-P<n>-<FC|Ring>-<XP|XP+SP>. "
        "Full documentation: docs/[/dim]"
    )


@main.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, help="Override the master seed")
@click.option("--out", type=click.Path(file_okay=False), help="Run directory")
@click.option("--steps-override", help="Override total_steps (e.g. 5e6)")
@click.option("--resume", is_flag=True, help="Continue from the latest snapshot in --out")
@click.option(
    "--threads", type=click.IntRange(min=1), help="Update workers (default: $FGLAB_THREADS or 1)"
)
@click.option("--max-iterations", type=click.IntRange(min=1), hidden=True)
@handle_errors
def train(
    config_file: str,
    seed: int | None,
    out: str | None,
    steps_override: str | None,
    resume: bool,
    threads: int | None,
    max_iterations: int | None,
) -> None:
    """Train a population.

    Examples:
        fglab train scoreg.fg --steps-override 2e7 --out runs/scoreg
        fglab train scoreg.fg --out runs/scoreg --resume
    """
    print_header()
    config = read_config(Path(config_file))
    if seed is not None:
        config = config.model_copy(update={"run": config.run.model_copy(update={"seed": seed})})
    if steps_override is not None:
        ppo = PPOConfig.model_validate(
            {**config.ppo.model_dump(), "total_steps": parse_steps(steps_override)}
        )
        config = config.model_copy(update={"ppo": ppo})
    out_dir = Path(out or f"runs/{config.name}-s{config.run.seed}")

    print_section("Training")
    console.print(f"  Experiment: [cyan]{config.name}[/cyan]")
    console.print(f"  Seed:       [cyan]{config.run.seed}[/cyan]")
    console.print(f"  Steps:      [cyan]{config.ppo.total_steps:,}[/cyan]")
    console.print(f"  Iterations: [cyan]{config.ppo.n_iterations:,}[/cyan]")
    console.print(f"  Output:     [cyan]{out_dir}[/cyan]")

    train_population(
        config, out_dir, resume=resume, threads=threads, max_iterations=max_iterations
    )
    console.print()
    print_success(f"Training finished: {out_dir}")


def _load(ckpt: str) -> Population:
    return load_population(Path(ckpt))


def _eval_env(population: Population, split: ScoreSplit) -> EnvConfig:
    env = population.config.env
    return with_env(env, score_split=split) if env.game == Game.SCOREG else env


@main.command("eval")
@click.option("--ckpt", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--episodes", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option(
    "--metrics",
    default=",".join(METRICS),
    show_default=True,
    help="Comma-separated subset of ls,ic,topsim,sr",
)
@click.option(
    "--pairing",
    type=click.Choice([m.value for m in PairingMode]),
    default=PairingMode.ALL.value,
    show_default=True,
)
@click.option(
    "--split",
    type=click.Choice([s.value for s in ScoreSplit]),
    default=ScoreSplit.TEST.value,
    show_default=True,
    help="ScoreG score set for evaluation episodes",
)
@click.option("--sample", is_flag=True, help="Sample actions and tokens instead of argmax")
@click.option(
    "--ls-protocol",
    type=click.Choice([p.value for p in LSProtocol]),
    default=LSProtocol.REPLAY.value,
    show_default=True,
)
@click.option("--seeds", default="0,1,2", show_default=True, help="Metric seeds")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory")
@handle_errors
def eval_command(
    ckpt: str,
    episodes: int,
    metrics: str,
    pairing: str,
    split: str,
    sample: bool,
    ls_protocol: str,
    seeds: str,
    out: str | None,
) -> None:
    """Evaluate a trained population (SR matrix, IC, LS, topsim).

    Examples:
        fglab eval --ckpt runs/scoreg
        fglab eval --ckpt runs/scoreg --pairing self --metrics sr
    """
    print_header()
    population = _load(ckpt)
    metric_seeds = _int_list(seeds)
    evaluation = evaluate(
        population.agents,
        _eval_env(population, ScoreSplit(split)),
        str(population.config.name),
        population.config.config_hash(),
        episodes=episodes,
        metric_seeds=metric_seeds,
        pairing=PairingMode(pairing),
        metrics=[m.strip() for m in metrics.split(",") if m.strip()],
        decode=DecodeMode.SAMPLE if sample else DecodeMode.GREEDY,
        ls_protocol=LSProtocol(ls_protocol),
    )
    out_dir = Path(out) if out else Path(ckpt) / "eval"
    paths = write_evaluation(evaluation, out_dir)
    record_run(
        out_dir,
        "eval",
        str(population.config.name),
        population.config.config_hash(),
        metric_seeds,
        paths,
    )

    report = evaluation.report
    print_section("Results")
    console.print(
        summary_table(
            str(population.config.name),
            [
                ("Cross-SR", fmt(report.cross_sr.mean, report.cross_sr.std)),
                ("Self-SR", fmt(report.self_sr.mean, report.self_sr.std)),
                ("IC", fmt(report.ic.mean, report.ic.std)),
                ("LS", fmt(report.ls.mean, report.ls.std)),
                ("topsim", fmt(report.topsim.mean, report.topsim.std)),
                (
                    "Successful length",
                    fmt(report.mean_success_length.mean, report.mean_success_length.std),
                ),
            ],
        )
    )
    if report.sr_ring:
        ring = Table(title="By circular distance", show_header=True, header_style="bold")
        ring.add_column("Distance", style="cyan")
        ring.add_column("SR")
        ring.add_column("LS")
        ls_by_distance = {p.distance: p for p in report.ls_ring}
        for point in report.sr_ring:
            ls_point = ls_by_distance.get(point.distance)
            ring.add_row(
                str(point.distance),
                fmt(point.mean, point.std),
                fmt(ls_point.mean, ls_point.std) if ls_point else "n/a",
            )
        console.print(ring)
    print_success(f"Report saved to: {out_dir}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--game", type=click.Choice([g.value for g in Game]), help="Expected game")
@click.option(
    "--target",
    "targets",
    multiple=True,
    type=click.Choice([t.value for t in Target]),
    help="Attribute to decode (repeatable; default: every target of the game)",
)
@click.option(
    "--features",
    type=click.Choice([m.value for m in FeatureMode]),
    default=FeatureMode.INTEGER.value,
    show_default=True,
)
@click.option("--chains", type=click.IntRange(min=10), default=5000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), help="Output directory")
@handle_errors
def probe(
    ckpt: str,
    game: str | None,
    targets: tuple[str, ...],
    features: str,
    chains: int,
    seed: int,
    out: str | None,
) -> None:
    """Decode item attributes from message chains with linear probes.

    Examples:
        fglab probe --ckpt runs/scoreg --target score
        fglab probe --ckpt runs/temporal --features embedding
    """
    print_header()
    population = _load(ckpt)
    env = _eval_env(population, ScoreSplit.TEST)
    if game is not None and Game(game) != env.game:
        raise ConfigError(f"checkpoint game is {env.game.value}, not {game}")
    chosen = [Target(t) for t in targets] or list(GAME_TARGETS[env.game])
    report = run_probe(
        population.agents,
        env,
        str(population.config.name),
        chosen,
        mode=FeatureMode(features),
        n_chains=chains,
        seed=seed,
    )
    out_dir = Path(out) if out else Path(ckpt) / "probe"
    paths = write_probe(report, out_dir)
    record_run(
        out_dir,
        "probe",
        str(population.config.name),
        population.config.config_hash(),
        [seed],
        paths,
    )

    print_section("Probe accuracy")
    table = Table(show_header=True, header_style="bold")
    table.add_column("Target", style="cyan")
    table.add_column("Accuracy")
    table.add_column("Chance")
    table.add_column("Features")
    for row in report.summary:
        table.add_row(
            row.target.value,
            fmt(row.mean, row.std),
            f"{row.chance:.3f}",
            f"{features} ({row.feature_width})",
        )
    console.print(table)
    print_success(f"Probe results saved to: {out_dir}")


@main.command()
@click.option(
    "--kind", required=True, type=click.Choice([k.value for k in AblationKind]), help="Study"
)
@click.option(
    "--ckpt",
    "ckpts",
    multiple=True,
    type=click.Path(exists=True, file_okay=False),
    help="Checkpoint(s); vocab and implicit take one per setting",
)
@click.option("--values", help="Comma-separated grid sizes or obstacle counts")
@click.option("--episodes", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--seeds", default="0,1,2", show_default=True, help="Metric seeds")
@click.option(
    "--write-configs",
    type=click.Path(file_okay=False),
    help="implicit: write the variant training configs here and exit",
)
@click.option("--out", type=click.Path(file_okay=False), default="ablation", show_default=True)
@handle_errors
def ablate(
    kind: str,
    ckpts: tuple[str, ...],
    values: str | None,
    episodes: int,
    seeds: str,
    write_configs: str | None,
    out: str,
) -> None:
    """Run an ablation study over trained checkpoints.

    Examples:
        fglab ablate --kind gridsize --ckpt runs/scoreg
        fglab ablate --kind obstacles --ckpt runs/scoreg --values 0,2,4
        fglab ablate --kind implicit --write-configs configs/
    """
    print_header()
    study = AblationKind(kind)
    if write_configs is not None:
        if study != AblationKind.IMPLICIT:
            raise ConfigError("--write-configs is only available for --kind implicit")
        for path in write_variant_configs(Path(write_configs)):
            print_success(f"Variant config saved to: {path}")
        return
    if not ckpts:
        raise ConfigError("at least one --ckpt is required")

    metric_seeds = _int_list(seeds)
    populations = [_load(ckpt) for ckpt in ckpts]
    chosen = _int_list(values) if values else None
    if study == AblationKind.VOCAB:
        rows = ablate_vocab(populations, episodes, metric_seeds)
    elif study == AblationKind.IMPLICIT:
        if len(populations) != len(IMPLICIT_VARIANTS):
            logger.warning(
                "implicit ablation usually compares %d variants", len(IMPLICIT_VARIANTS)
            )
        rows = ablate_implicit(populations, episodes, metric_seeds)
    else:
        if len(populations) != 1:
            raise ConfigError(f"--kind {kind} takes exactly one --ckpt")
        runner = ablate_gridsize if study == AblationKind.GRIDSIZE else ablate_obstacles
        rows = runner(populations[0], chosen, episodes, metric_seeds)

    out_dir = Path(out)
    path = write_table(rows, out_dir / f"ablation_{kind}.csv")
    record_run(
        out_dir,
        f"ablate-{kind}",
        ",".join(str(p.config.name) for p in populations),
        ",".join(p.config.config_hash()[:12] for p in populations),
        metric_seeds,
        [path],
    )

    print_section(f"Ablation: {kind}")
    table = Table(show_header=True, header_style="bold")
    table.add_column("Setting", style="cyan")
    table.add_column("Cross-SR")
    table.add_column("Self-SR")
    table.add_column("Successful length")
    for row in rows:
        table.add_row(
            str(row["value"]),
            fmt(row["cross_sr_mean"], row["cross_sr_std"]),
            fmt(row["self_sr_mean"], row["self_sr_std"]),
            fmt(row["success_length_mean"], row["success_length_std"]),
        )
    console.print(table)
    print_success(f"Table saved to: {path}")


if __name__ == "__main__":
    main()
