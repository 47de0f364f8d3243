"""Evaluation episodes, success-rate matrices and language-similarity replay.

Every ordered pair of agents (self pairs included) plays the same seeded episodes.
Episodes are stored as :class:`EpisodeRecord` objects so every metric can be recomputed
from disk.

Language similarity defaults to a replay protocol: for a pair (i, j), agent i plays
body 0 with j as partner; agent j is then driven, greedily, through the exact
input stream i received, and j's chain is compared with i's. The ``live`` protocol
compares the two bodies' chains of the same episode instead.
"""

from collections.abc import Iterable
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from fglab.agent import AgentParams
from fglab.agent import DecodeMode
from fglab.agent import ObsBatch
from fglab.agent import PolicyState
from fglab.agent import policy_forward
from fglab.agent import sample_rows
from fglab.agent import select
from fglab.env import Outcome
from fglab.env import new_episode
from fglab.env import route_messages
from fglab.env import step
from fglab.errors import ConfigError
from fglab.errors import UndefinedMetricError
from fglab.manifest import atomic_write_text
from fglab.metrics import interchangeability
from fglab.metrics import language_similarity
from fglab.metrics import population_ls
from fglab.metrics import ring_buckets
from fglab.metrics import score_bin
from fglab.metrics import topsim
from fglab.models.env import EnvConfig
from fglab.models.env import Game
from fglab.ppo import SEED_BOUND
import logging
import math
import numpy as np
import pandas as pd
from pathlib import Path
from pydantic import BaseModel


logger = logging.getLogger(__name__)

METRIC_SEEDS = (0, 1, 2)
METRICS = ("ls", "ic", "topsim", "sr")
TOPSIM_RECORDS = 1000
REPORT_JSON = "metrics.json"
PAIRS_CSV = "metrics_pairs.csv"
SUMMARY_CSV = "metrics_summary.csv"
RING_CSV = "metrics_ring.csv"
RECORDS_JSONL = "episodes.jsonl"


class PairingMode(StrEnum):
    """Which ordered pairs are evaluated."""

    ALL = "all"
    SELF = "self"
    CROSS = "cross"


class LSProtocol(StrEnum):
    """How matched chains are produced for language similarity."""

    REPLAY = "replay"
    LIVE = "live"


class EpisodeRecord(BaseModel):
    """Ground truth and message streams of one evaluation episode.

    Attributes:
        seed: Episode seed.
        pairing: Agents driving body 0 and body 1.
        game: ScoreG or TemporalG.
        scores: Item scores (ScoreG).
        spawn_times: Item spawn steps (TemporalG).
        item_positions: (row, col) per item.
        tokens: Every token each body emitted, one per step.
        success: Whether the episode succeeded.
        length: Steps played.
        first_adjacent_step: Step at which the bodies first became 4-adjacent.
    """

    seed: int
    pairing: tuple[int, int]
    game: Game
    scores: list[int]
    spawn_times: list[int]
    item_positions: list[tuple[int, int]]
    tokens: tuple[list[int], list[int]]
    success: bool
    length: int
    first_adjacent_step: int | None = None

    @property
    def chain_start(self) -> int:
        """First step whose token belongs to the message chain.

        ScoreG chains cover the whole episode; TemporalG chains begin at first
        adjacency (empty if the bodies never met).
        """
        if self.game == Game.SCOREG:
            return 0
        return self.length if self.first_adjacent_step is None else self.first_adjacent_step

    def chain(self, body: int) -> list[int]:
        """Message chain of one body."""
        return self.tokens[body][self.chain_start :]

    def meaning(self) -> list[int]:
        """Discrete attribute vector of the episode used by topsim.

        ScoreG: (score bin, column) of each item. TemporalG: (spawn time, row, column)
        of each item.
        """
        if self.game == Game.SCOREG:
            return [
                value
                for score, (_, col) in zip(self.scores, self.item_positions, strict=True)
                for value in (score_bin(score), col)
            ]
        return [
            value
            for spawn, (row, col) in zip(self.spawn_times, self.item_positions, strict=True)
            for value in (spawn, row, col)
        ]


@dataclass
class EpisodeInputs:
    """Everything body 0 received during one episode, step by step."""

    grid: np.ndarray
    pos: np.ndarray
    msg: np.ndarray


def episode_seeds(metric_seed: int, episodes: int) -> list[int]:
    """Common episode seeds for one metric seed."""
    rng = np.random.default_rng(metric_seed)
    return [int(s) for s in rng.integers(SEED_BOUND, size=episodes)]


def run_episodes(
    body0: AgentParams,
    body1: AgentParams,
    pairing: tuple[int, int],
    env: EnvConfig,
    seeds: Sequence[int],
    mode: DecodeMode = DecodeMode.GREEDY,
    keep_inputs: bool = False,
) -> tuple[list[EpisodeRecord], list[EpisodeInputs] | None]:
    """Play one episode per seed with the given agents, batched across episodes.

    Args:
        body0: Agent driving body 0.
        body1: Agent driving body 1 (may be the same parameters).
        pairing: Agent ids stored in the records.
        env: World configuration.
        seeds: Episode seeds.
        mode: Greedy or sampled decoding.
        keep_inputs: Also return body 0's input stream per episode.

    Returns:
        Records in seed order, and body 0's inputs when requested.
    """
    n = len(seeds)
    episodes = [new_episode(env, seed) for seed in seeds]
    worlds = [world for world, _ in episodes]
    obs = [pair for _, pair in episodes]
    hidden = body0["lstm.weight_hh"].shape[1]
    h = np.zeros((2, n, hidden), dtype=np.float32)
    c = np.zeros((2, n, hidden), dtype=np.float32)
    tokens: list[tuple[list[int], list[int]]] = [([], []) for _ in range(n)]
    grids: list[list[np.ndarray]] = [[] for _ in range(n)]
    positions: list[list[np.ndarray]] = [[] for _ in range(n)]
    received: list[list[int]] = [[] for _ in range(n)]
    rngs = [(np.random.default_rng((seed, 0)), np.random.default_rng((seed, 1))) for seed in seeds]

    active = list(range(n))
    while active:
        actions = np.zeros((2, len(active)), dtype=np.int64)
        sent = np.zeros((2, len(active)), dtype=np.int64)
        for b, params in enumerate((body0, body1)):
            batch = ObsBatch.stack([obs[e][b] for e in active])
            out = policy_forward(params, PolicyState.from_arrays(h[b, active], c[b, active]), batch)
            if mode == DecodeMode.GREEDY:
                sel = select(out, DecodeMode.GREEDY)
            else:
                sel = sample_rows(out, [rngs[e][b] for e in active])
            h[b, active] = out.next_state.h.data
            c[b, active] = out.next_state.c.data
            actions[b], sent[b] = sel.action, sel.token
            if keep_inputs and b == 0:
                for r, e in enumerate(active):
                    grids[e].append(batch.grid[r])
                    positions[e].append(batch.pos[r])
                    received[e].append(int(batch.msg[r]))
        for r, e in enumerate(active):
            tokens[e][0].append(int(sent[0, r]))
            tokens[e][1].append(int(sent[1, r]))
            route_messages(worlds[e], (int(sent[0, r]), int(sent[1, r])))
            obs[e] = step(worlds[e], (int(actions[0, r]), int(actions[1, r]))).obs
        active = [e for e in active if not worlds[e].done]

    records = [
        EpisodeRecord(
            seed=seed,
            pairing=pairing,
            game=env.game,
            scores=[item.score for item in world.items],
            spawn_times=[item.spawn_time for item in world.items],
            item_positions=[item.pos for item in world.items],
            tokens=tokens[e],
            success=world.outcome == Outcome.SUCCESS,
            length=world.t,
            first_adjacent_step=world.first_adjacent_step,
        )
        for e, (seed, world) in enumerate(zip(seeds, worlds, strict=True))
    ]
    if not keep_inputs:
        return records, None
    inputs = [
        EpisodeInputs(
            grid=np.stack(grids[e]), pos=np.stack(positions[e]), msg=np.array(received[e])
        )
        for e in range(n)
    ]
    return records, inputs


def replay_tokens(params: AgentParams, inputs: Sequence[EpisodeInputs]) -> list[list[int]]:
    """Drive an agent through recorded input streams with greedy decoding.

    Args:
        params: The agent to replay.
        inputs: Recorded input streams.

    Returns:
        The agent's greedy token at every step of every stream.
    """
    if not inputs:
        return []
    lengths = [len(i.msg) for i in inputs]
    horizon = max(lengths)
    n = len(inputs)
    features = inputs[0].grid.shape[1]
    grid = np.zeros((n, horizon, features), dtype=np.float32)
    pos = np.zeros((n, horizon, 2), dtype=np.float32)
    msg = np.zeros((n, horizon), dtype=np.int64)
    for e, stream in enumerate(inputs):
        grid[e, : lengths[e]] = stream.grid
        pos[e, : lengths[e]] = stream.pos
        msg[e, : lengths[e]] = stream.msg

    state = PolicyState.zeros(params["lstm.weight_hh"].shape[1], batch=n)
    out_tokens = np.zeros((n, horizon), dtype=np.int64)
    for t in range(horizon):
        out = policy_forward(params, state, ObsBatch(grid=grid[:, t], pos=pos[:, t], msg=msg[:, t]))
        out_tokens[:, t] = select(out, DecodeMode.GREEDY).token
        state = PolicyState.from_arrays(out.next_state.h.data, out.next_state.c.data)
    return [out_tokens[e, : lengths[e]].tolist() for e in range(n)]


def evaluated_pairs(n_pop: int, mode: PairingMode) -> list[tuple[int, int]]:
    """Ordered pairs evaluated under a pairing mode."""
    pairs = [(i, j) for i in range(n_pop) for j in range(n_pop)]
    if mode == PairingMode.SELF:
        return [(i, j) for i, j in pairs if i == j]
    if mode == PairingMode.CROSS:
        return [(i, j) for i, j in pairs if i != j]
    return pairs


def success_matrix(records: Iterable[EpisodeRecord], n_pop: int) -> np.ndarray:
    """SR(i, j) per ordered pair; NaN where no episode was played."""
    wins = np.zeros((n_pop, n_pop))
    counts = np.zeros((n_pop, n_pop))
    for record in records:
        i, j = record.pairing
        wins[i, j] += record.success
        counts[i, j] += 1
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, wins / np.maximum(counts, 1), np.nan)


def mean_success_length(records: Iterable[EpisodeRecord]) -> float:
    """Mean length of successful episodes (NaN without successes)."""
    lengths = [r.length for r in records if r.success]
    return float(np.mean(lengths)) if lengths else math.nan


def agent_topsim(
    records: Sequence[EpisodeRecord], agent: int, limit: int = TOPSIM_RECORDS
) -> float:
    """Topsim of one agent's chains over the episodes it played (at most ``limit``).

    Raises:
        UndefinedMetricError: If fewer than two records or a degenerate space.
    """
    chains: list[list[int]] = []
    meanings: list[list[int]] = []
    for record in records:
        for body in (0, 1):
            if record.pairing[body] == agent and len(chains) < limit:
                chains.append(record.chain(body))
                meanings.append(record.meaning())
    return topsim(chains, meanings)


class Stat(BaseModel):
    """Mean and standard deviation over metric seeds (``None`` when undefined)."""

    mean: float | None
    std: float | None


class RingPoint(BaseModel):
    """A pairwise metric averaged over pairs at one circular distance."""

    distance: int
    mean: float
    std: float
    n_pairs: int


class MetricsReport(BaseModel):
    """Evaluation report written as ``metrics.json``."""

    experiment: str
    config_hash: str
    episodes: int
    metric_seeds: list[int]
    pairing: PairingMode
    decode: DecodeMode
    ls_protocol: LSProtocol
    score_split: str
    sr_matrix: list[list[float | None]]
    sr_matrix_std: list[list[float | None]]
    ls_matrix: list[list[float | None]]
    ls_asymmetry: float | None
    cross_sr: Stat
    self_sr: Stat
    ic: Stat
    ls: Stat
    topsim: Stat
    mean_success_length: Stat
    sr_ring: list[RingPoint]
    ls_ring: list[RingPoint]


def _stat(values: Sequence[float]) -> Stat:
    finite = [v for v in values if not math.isnan(v)]
    if not finite:
        return Stat(mean=None, std=None)
    return Stat(mean=float(np.mean(finite)), std=float(np.std(finite)))


def _nanmean_stack(matrices: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    stack = np.stack(matrices)
    valid = ~np.isnan(stack)
    count = valid.sum(axis=0)
    total = np.where(valid, stack, 0.0).sum(axis=0)
    mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    sq = np.where(valid, (stack - mean) ** 2, 0.0).sum(axis=0)
    std = np.where(count > 0, np.sqrt(sq / np.maximum(count, 1)), np.nan)
    return mean, std


def _nested(matrix: np.ndarray) -> list[list[float | None]]:
    return [[None if math.isnan(v) else float(v) for v in row] for row in matrix]


def _ring(matrix: np.ndarray) -> list[RingPoint]:
    if matrix.shape[0] < 3 or np.isnan(matrix[~np.eye(matrix.shape[0], dtype=bool)]).any():
        return []
    return [
        RingPoint(distance=b.distance, mean=b.mean, std=b.std, n_pairs=b.n_pairs)
        for b in ring_buckets(matrix)
    ]


@dataclass
class Evaluation:
    """Report plus the raw material it was computed from."""

    report: MetricsReport
    records: list[EpisodeRecord]
    pair_rows: list[dict[str, float | int]]


def evaluate(
    agents: Sequence[AgentParams],
    env: EnvConfig,
    experiment: str,
    config_hash: str,
    episodes: int = 1000,
    metric_seeds: Sequence[int] = METRIC_SEEDS,
    pairing: PairingMode = PairingMode.ALL,
    metrics: Iterable[str] = METRICS,
    decode: DecodeMode = DecodeMode.GREEDY,
    ls_protocol: LSProtocol = LSProtocol.REPLAY,
) -> Evaluation:
    """Evaluate a population.

    Args:
        agents: Parameters of every agent.
        env: Evaluation world (score split, grid size, obstacles...).
        experiment: Experiment name for the report.
        config_hash: Config hash for the report.
        episodes: Episodes per ordered pair and metric seed.
        metric_seeds: Seeds of the common episode sets.
        pairing: Which ordered pairs to play.
        metrics: Subset of ``ls``, ``ic``, ``topsim``, ``sr``.
        decode: Greedy (default) or sampled decoding.
        ls_protocol: Replay (default) or live chains for LS.

    Returns:
        The report, every episode record and per-pair rows.

    Raises:
        ConfigError: If an unknown metric is requested.
    """
    wanted = set(metrics)
    unknown = wanted - set(METRICS)
    if unknown:
        raise ConfigError(f"unknown metric(s): {', '.join(sorted(unknown))}")
    n_pop = len(agents)
    pairs = evaluated_pairs(n_pop, pairing)
    replay = "ls" in wanted and ls_protocol == LSProtocol.REPLAY

    all_records: list[EpisodeRecord] = []
    pair_rows: list[dict[str, float | int]] = []
    sr_mats: list[np.ndarray] = []
    ls_mats: list[np.ndarray] = []
    scalars: dict[str, list[float]] = {
        k: [] for k in ("cross_sr", "self_sr", "ic", "ls", "topsim", "length")
    }

    for metric_seed in metric_seeds:
        seeds = episode_seeds(metric_seed, episodes)
        records: list[EpisodeRecord] = []
        ls = np.full((n_pop, n_pop), np.nan)
        for i, j in pairs:
            keep = replay and i != j
            pair_records, inputs = run_episodes(
                agents[i], agents[j], (i, j), env, seeds, decode, keep_inputs=keep
            )
            records.extend(pair_records)
            if "ls" in wanted and i != j:
                reference = [r.chain(0) for r in pair_records]
                if inputs is not None:
                    replayed = replay_tokens(agents[j], inputs)
                    other = [
                        t[r.chain_start :]
                        for t, r in zip(replayed, pair_records, strict=True)
                    ]
                else:
                    other = [r.chain(1) for r in pair_records]
                ls[i, j] = language_similarity(reference, other)
            logger.debug("metric seed %d pair (%d, %d) done", metric_seed, i, j)

        sr = success_matrix(records, n_pop)
        off = ~np.eye(n_pop, dtype=bool)
        sr_mats.append(sr)
        ls_mats.append(ls)
        diag, cross = np.diag(sr), sr[off]
        scalars["self_sr"].append(float(diag.mean()) if not np.isnan(diag).all() else math.nan)
        scalars["cross_sr"].append(
            float(np.nanmean(cross)) if not np.isnan(cross).all() else math.nan
        )
        ic = math.nan
        if "ic" in wanted and not np.isnan(sr).any():
            try:
                ic = interchangeability(sr)
            except UndefinedMetricError as exc:
                logger.warning("metric seed %d: %s", metric_seed, exc)
        scalars["ic"].append(ic)
        scalars["ls"].append(
            population_ls(ls) if "ls" in wanted and not np.isnan(ls[off]).any() else math.nan
        )
        scalars["topsim"].append(
            _population_topsim(records, n_pop) if "topsim" in wanted else math.nan
        )
        scalars["length"].append(mean_success_length(records))
        for i, j in pairs:
            pair_rows.append(
                {"metric_seed": metric_seed, "i": i, "j": j, "sr": sr[i, j], "ls": ls[i, j]}
            )
        all_records.extend(records)
        logger.info(
            "metric seed %d: cross SR %.3f self SR %.3f",
            metric_seed,
            scalars["cross_sr"][-1],
            scalars["self_sr"][-1],
        )

    sr_mean, sr_std = _nanmean_stack(sr_mats)
    ls_mean, _ = _nanmean_stack(ls_mats)
    off = ~np.eye(n_pop, dtype=bool)
    asymmetry = None
    if not np.isnan(ls_mean[off]).any():
        asymmetry = float(np.abs(ls_mean - ls_mean.T)[off].max())

    report = MetricsReport(
        experiment=experiment,
        config_hash=config_hash,
        episodes=episodes,
        metric_seeds=list(metric_seeds),
        pairing=pairing,
        decode=decode,
        ls_protocol=ls_protocol,
        score_split=env.score_split.value,
        sr_matrix=_nested(sr_mean),
        sr_matrix_std=_nested(sr_std),
        ls_matrix=_nested(ls_mean),
        ls_asymmetry=asymmetry,
        cross_sr=_stat(scalars["cross_sr"]),
        self_sr=_stat(scalars["self_sr"]),
        ic=_stat(scalars["ic"]),
        ls=_stat(scalars["ls"]),
        topsim=_stat(scalars["topsim"]),
        mean_success_length=_stat(scalars["length"]),
        sr_ring=_ring(sr_mean),
        ls_ring=_ring(ls_mean),
    )
    return Evaluation(report=report, records=all_records, pair_rows=pair_rows)


def _population_topsim(records: Sequence[EpisodeRecord], n_pop: int) -> float:
    values: list[float] = []
    for agent in range(n_pop):
        try:
            values.append(agent_topsim(records, agent))
        except UndefinedMetricError as exc:
            logger.warning("topsim of agent %d skipped: %s", agent, exc)
    return float(np.mean(values)) if values else math.nan


def write_evaluation(evaluation: Evaluation, out_dir: Path) -> list[Path]:
    """Write the report, CSV tables and episode records.

    Args:
        evaluation: Result of :func:`evaluate`.
        out_dir: Destination directory.

    Returns:
        Paths written.
    """
    report = evaluation.report
    paths = [out_dir / name for name in (REPORT_JSON, PAIRS_CSV, SUMMARY_CSV, RING_CSV)]
    atomic_write_text(paths[0], report.model_dump_json(indent=2))
    atomic_write_text(paths[1], pd.DataFrame(evaluation.pair_rows).to_csv(index=False))
    summary = [
        {"metric": name, "mean": stat.mean, "std": stat.std}
        for name, stat in (
            ("cross_sr", report.cross_sr),
            ("self_sr", report.self_sr),
            ("ic", report.ic),
            ("ls", report.ls),
            ("topsim", report.topsim),
            ("mean_success_length", report.mean_success_length),
        )
    ]
    atomic_write_text(paths[2], pd.DataFrame(summary).to_csv(index=False))
    ring = [
        {"metric": metric, **point.model_dump()}
        for metric, points in (("sr", report.sr_ring), ("ls", report.ls_ring))
        for point in points
    ]
    frame = pd.DataFrame(ring, columns=["metric", "distance", "mean", "std", "n_pairs"])
    atomic_write_text(paths[3], frame.to_csv(index=False))
    records_path = out_dir / RECORDS_JSONL
    atomic_write_text(
        records_path, "".join(f"{r.model_dump_json()}\n" for r in evaluation.records)
    )
    return [*paths, records_path]


def load_records(path: Path) -> list[EpisodeRecord]:
    """Read episode records written by :func:`write_evaluation`."""
    return [
        EpisodeRecord.model_validate_json(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
