"""Language metrics over message chains and success-rate matrices.

All functions are pure: they take chains, meaning vectors or matrices and return
numbers, so a report recomputed from stored episode records is identical.

Example:
    >>> normalized_edit_distance([0, 1, 2, 3], [0, 1, 2, 0])
    0.25
    >>> round(interchangeability(np.array([[0.065, 0.987], [0.987, 0.065]])), 4)
    0.0659
"""

from collections.abc import Sequence
from dataclasses import dataclass
from fglab.errors import ShapeError
from fglab.errors import UndefinedMetricError
from itertools import combinations
import Levenshtein
import numpy as np
from scipy.stats import rankdata


N_SCORE_BINS = 10
SCORE_BIN_WIDTH = 25

Chain = Sequence[int]


def normalized_edit_distance(a: Chain, b: Chain) -> float:
    """Levenshtein distance divided by the longer length (0 for two empty chains).

    Args:
        a: First token sequence.
        b: Second token sequence.

    Returns:
        A value in [0, 1].
    """
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return Levenshtein.distance(list(a), list(b)) / longest


def language_similarity(chains_i: Sequence[Chain], chains_j: Sequence[Chain]) -> float:
    """Mean of ``1 - normalized_edit_distance`` over matched chains.

    Args:
        chains_i: Agent i's chains, one per situation.
        chains_j: Agent j's chains in the same situations.

    Returns:
        LS(i, j).

    Raises:
        UndefinedMetricError: If there are no chains.
        ShapeError: If the two lists differ in length.
    """
    if len(chains_i) != len(chains_j):
        raise ShapeError("language_similarity", (len(chains_i),), (len(chains_j),))
    if not chains_i:
        raise UndefinedMetricError("language similarity of an empty evaluation set")
    return float(
        np.mean([1.0 - normalized_edit_distance(a, b) for a, b in zip(chains_i, chains_j)])
    )


def population_ls(matrix: np.ndarray) -> float:
    """Mean LS over ordered pairs i != j."""
    n = matrix.shape[0]
    off = ~np.eye(n, dtype=bool)
    return float(matrix[off].mean())


def interchangeability(sr: np.ndarray) -> float:
    """``(n - 1) * sum_i SR(i, i) / sum_{i != j} SR(i, j)``.

    Args:
        sr: n x n success-rate matrix.

    Returns:
        IC; 1 when self and cross play succeed equally often.

    Raises:
        UndefinedMetricError: If every cross entry is zero.
    """
    n = sr.shape[0]
    cross = float(sr[~np.eye(n, dtype=bool)].sum())
    if cross == 0.0:
        raise UndefinedMetricError("interchangeability is undefined: all cross-play SR are 0")
    return (n - 1) * float(np.trace(sr)) / cross


def spearman(xs: Sequence[float] | np.ndarray, ys: Sequence[float] | np.ndarray) -> float:
    """Spearman rank correlation with average ranks for ties.

    Args:
        xs: First sample.
        ys: Second sample, same length.

    Returns:
        Pearson correlation of the ranks.

    Raises:
        ShapeError: If the lengths differ.
        UndefinedMetricError: If fewer than two values or either sample is constant.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError("spearman", x.shape, y.shape)
    if x.size < 2:
        raise UndefinedMetricError("spearman needs at least two values")
    rx = rankdata(x) - (x.size + 1) / 2
    ry = rankdata(y) - (y.size + 1) / 2
    denom = float(np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))
    if denom == 0.0:
        raise UndefinedMetricError("spearman is undefined for a constant sample")
    return float(np.dot(rx, ry) / denom)


def hamming(u: Sequence[int], v: Sequence[int]) -> int:
    """Number of positions where two equal-length vectors differ."""
    if len(u) != len(v):
        raise ShapeError("hamming", (len(u),), (len(v),))
    return sum(a != b for a, b in zip(u, v))


def topsim(chains: Sequence[Chain], meanings: Sequence[Sequence[int]]) -> float:
    """Topographic similarity: Spearman between message and meaning distances.

    Every unordered pair of records contributes one (edit distance, Hamming distance)
    point.

    Args:
        chains: Message chains.
        meanings: Discrete meaning vector per chain.

    Returns:
        The rank correlation.

    Raises:
        UndefinedMetricError: With fewer than two records or a degenerate space.
    """
    if len(chains) != len(meanings):
        raise ShapeError("topsim", (len(chains),), (len(meanings),))
    if len(chains) < 2:
        raise UndefinedMetricError("topsim needs at least two records")
    pairs = list(combinations(range(len(chains)), 2))
    msg_dist = [normalized_edit_distance(chains[a], chains[b]) for a, b in pairs]
    meaning_dist = [hamming(meanings[a], meanings[b]) for a, b in pairs]
    return spearman(msg_dist, meaning_dist)


def score_bin(score: int) -> int:
    """One of 10 equal-width bins over [0, 250]."""
    return min(int(score) // SCORE_BIN_WIDTH, N_SCORE_BINS - 1)


def circular_distance(i: int, j: int, n: int) -> int:
    """Distance between positions i and j on a ring of n agents."""
    d = abs(i - j) % n
    return min(d, n - d)


@dataclass(frozen=True)
class RingBucket:
    """Aggregate of a pairwise metric at one circular distance."""

    distance: int
    mean: float
    std: float
    n_pairs: int


def ring_buckets(matrix: np.ndarray) -> list[RingBucket]:
    """Aggregate a pairwise matrix by circular distance.

    Each unordered pair i < j contributes the mean of ``M[i, j]`` and ``M[j, i]``.

    Args:
        matrix: n x n pairwise metric.

    Returns:
        One bucket per distance 1..n//2.
    """
    n = matrix.shape[0]
    values: dict[int, list[float]] = {d: [] for d in range(1, n // 2 + 1)}
    for i, j in combinations(range(n), 2):
        values[circular_distance(i, j, n)].append(0.5 * float(matrix[i, j] + matrix[j, i]))
    return [
        RingBucket(distance=d, mean=float(np.mean(v)), std=float(np.std(v)), n_pairs=len(v))
        for d, v in values.items()
    ]
