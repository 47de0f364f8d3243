"""Linear probes decoding item attributes from message chains.

Chains are collected from episodes in which the probed agent plays each of its cross
partners in turn, alternating between body 0 and body 1. Labels describe the assigned
item of the body the probed agent drove. Each chain is turned into a fixed-width vector
(one-hot tokens or the agent's own message embeddings) and a one-vs-rest logistic
regression is cross-validated on them.

Example:
    >>> featurize([1, 0], FeatureMode.INTEGER, vocab=4, t_max=3).tolist()
    [0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
"""

from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from fglab.agent import AgentParams
from fglab.errors import ProbeError
from fglab.errors import TokenError
from fglab.evaluation import EpisodeRecord
from fglab.evaluation import run_episodes
from fglab.manifest import atomic_write_text
from fglab.metrics import N_SCORE_BINS
from fglab.metrics import score_bin
from fglab.models.env import EnvConfig
from fglab.models.env import Game
from fglab.ppo import SEED_BOUND
import logging
import numpy as np
import pandas as pd
from pathlib import Path
from pydantic import BaseModel
from scipy.special import expit
from sklearn.model_selection import StratifiedShuffleSplit


logger = logging.getLogger(__name__)

PROBE_CHAINS = 5000
PROBE_SEEDS = (0, 1, 2)
FOLDS = 3
TEST_SIZE = 0.3
TOLERANCE = 1e-5
MAX_ITERATIONS = 5000
PROBE_CSV = "probe.csv"
PROBE_JSON = "probe_summary.json"


class Target(StrEnum):
    """Item attribute to decode."""

    SCORE = "score"
    VPOS = "vpos"
    HPOS = "hpos"
    TIME = "time"


class FeatureMode(StrEnum):
    """How a chain becomes a feature vector."""

    INTEGER = "integer"
    EMBEDDING = "embedding"


GAME_TARGETS = {
    Game.SCOREG: (Target.SCORE, Target.VPOS, Target.HPOS),
    Game.TEMPORALG: (Target.TIME, Target.VPOS, Target.HPOS),
}


def check_target(game: Game, target: Target) -> None:
    """Raise ProbeError when ``target`` is not defined for ``game``."""
    if target not in GAME_TARGETS[game]:
        allowed = ", ".join(t.value for t in GAME_TARGETS[game])
        raise ProbeError(f"target {target.value!r} is not defined for {game.value} ({allowed})")


def n_classes(env: EnvConfig, target: Target) -> int:
    """Number of classes of a target in a given world."""
    check_target(env.game, target)
    if target == Target.SCORE:
        return N_SCORE_BINS
    if target == Target.TIME:
        return 6
    if target == Target.HPOS:
        return env.grid_w
    return 2 if env.game == Game.SCOREG else env.grid_h - 1


def label(record: EpisodeRecord, env: EnvConfig, target: Target, body: int = 0) -> int:
    """Class of one body's assigned item.

    Args:
        record: Episode record.
        env: World the episode was played in.
        target: Attribute to label.
        body: Body whose item is labelled.

    Returns:
        Class index in ``range(n_classes(env, target))``.
    """
    check_target(env.game, target)
    row, col = record.item_positions[body]
    if target == Target.SCORE:
        return score_bin(record.scores[body])
    if target == Target.TIME:
        return record.spawn_times[body] - 1
    if target == Target.HPOS:
        return col
    if env.game == Game.SCOREG:
        return 0 if row == 0 else 1
    rows = [r for r in range(env.grid_h) if r != env.grid_h // 2]
    return rows.index(row)


def featurize(
    chain: Sequence[int],
    mode: FeatureMode,
    vocab: int,
    t_max: int,
    table: np.ndarray | None = None,
) -> np.ndarray:
    """Fixed-width feature vector of a chain.

    Args:
        chain: Token sequence, at most ``t_max`` long.
        mode: One-hot tokens or embedding rows.
        vocab: Vocabulary size.
        t_max: Positions in the padded vector.
        table: The agent's (vocab, dim) message table, for embedding features.

    Returns:
        ``t_max * vocab`` (integer) or ``t_max * dim`` (embedding) values; unused
        positions are zero.

    Raises:
        TokenError: If a token is outside the vocabulary.
        ProbeError: If the chain is longer than ``t_max`` or no table is given.
    """
    if len(chain) > t_max:
        raise ProbeError(f"chain of length {len(chain)} exceeds t_max={t_max}")
    tokens = np.asarray(chain, dtype=np.int64)
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab):
        raise TokenError(f"token outside [0, {vocab}) in chain {list(chain)}")
    if mode == FeatureMode.INTEGER:
        out = np.zeros((t_max, vocab))
        out[np.arange(tokens.size), tokens] = 1.0
        return out.reshape(-1)
    if table is None:
        raise ProbeError("embedding features need the agent's message table")
    out = np.zeros((t_max, table.shape[1]))
    out[: tokens.size] = table[tokens]
    return out.reshape(-1)


@dataclass
class OvRModel:
    """One logistic regression per class.

    Attributes:
        classes: Class labels, in column order.
        weights: (features, classes).
        bias: (classes,).
        iterations: Gradient steps taken per class.
    """

    classes: np.ndarray
    weights: np.ndarray
    bias: np.ndarray
    iterations: np.ndarray

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Per-class probabilities, (samples, classes)."""
        return expit(x @ self.weights + self.bias)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Class with the highest predicted probability."""
        return self.classes[np.argmax(x @ self.weights + self.bias, axis=1)]


def fit_ovr_logreg(
    x: np.ndarray,
    y: np.ndarray,
    tol: float = TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
) -> OvRModel:
    """Fit one-vs-rest L2-regularized logistic regression by full-batch gradient descent.

    Each binary problem minimizes the mean log-loss plus ``||w||^2 / (2n)`` (bias not
    penalized) with step ``1/L``; a class stops once its gradient norm is below ``tol``.

    Args:
        x: (samples, features).
        y: Class labels.
        tol: Gradient-norm tolerance.
        max_iter: Iteration cap.

    Returns:
        The fitted model.

    Raises:
        ProbeError: If fewer than two classes are present.
    """
    classes = np.unique(y)
    if classes.size < 2:
        raise ProbeError(f"logistic regression needs at least two classes, got {classes.tolist()}")
    n, d = x.shape
    xb = np.hstack([x, np.ones((n, 1))])
    targets = (y[:, None] == classes[None, :]).astype(np.float64)
    lipschitz = np.linalg.norm(xb, 2) ** 2 / (4 * n) + 1.0 / n
    lr = 1.0 / lipschitz
    penalty = np.ones((d + 1, 1)) / n
    penalty[-1] = 0.0

    w = np.zeros((d + 1, classes.size))
    iterations = np.zeros(classes.size, dtype=np.int64)
    active = np.ones(classes.size, dtype=bool)
    for _ in range(max_iter):
        cols = np.flatnonzero(active)
        grad = xb.T @ (expit(xb @ w[:, cols]) - targets[:, cols]) / n + penalty * w[:, cols]
        norms = np.linalg.norm(grad, axis=0)
        converged = norms < tol
        step_cols = cols[~converged]
        w[:, step_cols] -= lr * grad[:, ~converged]
        iterations[step_cols] += 1
        active[cols[converged]] = False
        if not active.any():
            break
    if active.any():
        logger.debug(
            "logistic regression hit %d iterations for %d class(es)", max_iter, active.sum()
        )
    return OvRModel(classes=classes, weights=w[:-1], bias=w[-1], iterations=iterations)


class FoldResult(BaseModel):
    """Accuracy of one split."""

    seed: int
    fold: int
    accuracy: float


def cross_validate(
    x: np.ndarray,
    y: np.ndarray,
    folds: int = FOLDS,
    seeds: Sequence[int] = PROBE_SEEDS,
    test_size: float = TEST_SIZE,
) -> list[FoldResult]:
    """Stratified shuffle-split accuracy, ``folds`` splits for each seed.

    Args:
        x: Features.
        y: Labels.
        folds: Splits per seed.
        seeds: Split seeds.
        test_size: Held-out fraction.

    Returns:
        One result per (seed, fold).

    Raises:
        ProbeError: If a class has fewer than two samples or only one class exists.
    """
    values, counts = np.unique(y, return_counts=True)
    if values.size < 2:
        raise ProbeError(f"probe data has a single class: {values.tolist()}")
    scarce = values[counts < 2]
    if scarce.size:
        raise ProbeError(f"classes {scarce.tolist()} have fewer than 2 samples; cannot split")
    results: list[FoldResult] = []
    for seed in seeds:
        splitter = StratifiedShuffleSplit(n_splits=folds, test_size=test_size, random_state=seed)
        for fold, (train, test) in enumerate(splitter.split(x, y)):
            model = fit_ovr_logreg(x[train], y[train])
            accuracy = float(np.mean(model.predict(x[test]) == y[test]))
            results.append(FoldResult(seed=seed, fold=fold, accuracy=accuracy))
    return results


@dataclass(frozen=True)
class ProbeChain:
    """One episode seen from the body the probed agent drove."""

    record: EpisodeRecord
    body: int

    @property
    def chain(self) -> list[int]:
        """The probed body's message chain."""
        return self.record.chain(self.body)


def collect_chains(
    agents: Sequence[AgentParams],
    agent: int,
    env: EnvConfig,
    n_chains: int = PROBE_CHAINS,
    seed: int = 0,
) -> list[ProbeChain]:
    """Play ``n_chains`` greedy episodes with ``agent`` against its cross partners.

    Chain ``n`` is played with partner ``n mod P`` (P partners), with ``agent`` on body 0
    for even ``n // P`` and on body 1 otherwise.

    Raises:
        ProbeError: If the population has no partner for ``agent``.
    """
    partners = [j for j in range(len(agents)) if j != agent]
    if not partners:
        raise ProbeError("probing needs at least one cross partner")
    rng = np.random.default_rng((seed, agent))
    seeds = [int(s) for s in rng.integers(SEED_BOUND, size=n_chains)]
    groups: dict[tuple[int, int], list[int]] = {}
    for n, episode_seed in enumerate(seeds):
        key = (partners[n % len(partners)], (n // len(partners)) % 2)
        groups.setdefault(key, []).append(episode_seed)

    chains: list[ProbeChain] = []
    for (partner, body), share in groups.items():
        pairing = (agent, partner) if body == 0 else (partner, agent)
        played, _ = run_episodes(agents[pairing[0]], agents[pairing[1]], pairing, env, share)
        chains.extend(ProbeChain(record, body) for record in played)
    return chains


class TargetSummary(BaseModel):
    """Accuracy over agents and splits for one target."""

    target: Target
    n_classes: int
    chance: float
    mean: float
    std: float
    feature_width: int


class ProbeReport(BaseModel):
    """Probe results written as CSV rows plus a JSON summary."""

    experiment: str
    game: Game
    feature_mode: FeatureMode
    n_chains: int
    rows: list[dict[str, str | int | float]]
    summary: list[TargetSummary]


def run_probe(
    agents: Sequence[AgentParams],
    env: EnvConfig,
    experiment: str,
    targets: Sequence[Target],
    mode: FeatureMode = FeatureMode.INTEGER,
    n_chains: int = PROBE_CHAINS,
    seed: int = 0,
) -> ProbeReport:
    """Probe every agent of a population for every target.

    Args:
        agents: Population parameters.
        env: Evaluation world.
        experiment: Experiment name.
        targets: Attributes to decode.
        mode: Feature construction.
        n_chains: Chains per agent.
        seed: Episode seed root.

    Returns:
        Per-split rows and per-target summaries.

    Raises:
        ProbeError: If a target does not belong to the game.
    """
    for target in targets:
        check_target(env.game, target)
    rows: list[dict[str, str | int | float]] = []
    accuracies: dict[Target, list[float]] = {t: [] for t in targets}
    widths: dict[Target, int] = {}
    for k, params in enumerate(agents):
        chains = collect_chains(agents, k, env, n_chains, seed)
        table = params["msg.table"].data
        x = np.stack(
            [featurize(c.chain, mode, env.vocab_size, env.t_max, table) for c in chains]
        )
        for target in targets:
            y = np.array([label(c.record, env, target, c.body) for c in chains])
            widths[target] = x.shape[1]
            for result in cross_validate(x, y):
                accuracies[target].append(result.accuracy)
                rows.append(
                    {
                        "game": env.game.value,
                        "agent": k,
                        "target": target.value,
                        "feature_mode": mode.value,
                        "fold": result.fold,
                        "seed": result.seed,
                        "accuracy": result.accuracy,
                    }
                )
            recent = accuracies[target][-len(PROBE_SEEDS) * FOLDS :]
            logger.info("agent %d %s: accuracy %.3f", k, target.value, np.mean(recent))
    summary = [
        TargetSummary(
            target=target,
            n_classes=n_classes(env, target),
            chance=1.0 / n_classes(env, target),
            mean=float(np.mean(accuracies[target])),
            std=float(np.std(accuracies[target])),
            feature_width=widths[target],
        )
        for target in targets
    ]
    return ProbeReport(
        experiment=experiment,
        game=env.game,
        feature_mode=mode,
        n_chains=n_chains,
        rows=rows,
        summary=summary,
    )


def write_probe(report: ProbeReport, out_dir: Path) -> list[Path]:
    """Write ``probe.csv`` and ``probe_summary.json``."""
    csv_path, json_path = out_dir / PROBE_CSV, out_dir / PROBE_JSON
    frame = pd.DataFrame(
        report.rows,
        columns=["game", "agent", "target", "feature_mode", "fold", "seed", "accuracy"],
    )
    atomic_write_text(csv_path, frame.to_csv(index=False))
    atomic_write_text(json_path, report.model_dump_json(indent=2, exclude={"rows"}))
    return [csv_path, json_path]
