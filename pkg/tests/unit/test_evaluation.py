"""Unit tests for evaluation episodes and reports."""

from fglab.models.agent import ArchConfig
from fglab.models.env import EnvConfig
from fglab.models.env import Game
from pathlib import Path
import numpy as np
import pytest


def make_record(pairing, success, length=5, game=Game.SCOREG, **fields):
    from fglab.evaluation import EpisodeRecord

    values = {
        "seed": 0,
        "pairing": pairing,
        "game": game,
        "scores": [30, 200],
        "spawn_times": [0, 0],
        "item_positions": [(1, 2), (3, 4)],
        "tokens": ([0] * length, [1] * length),
        "success": success,
        "length": length,
    }
    values.update(fields)
    return EpisodeRecord(**values)


@pytest.fixture
def agents(tiny_arch: ArchConfig):
    """Three untrained agents."""
    from fglab.agent import init_agent

    return [init_agent(k, EnvConfig(), tiny_arch) for k in range(3)]


class TestEpisodeRecord:
    """Tests for chains and meanings."""

    def test_scoreg_chain_is_whole_episode(self) -> None:
        """ScoreG chains should start at step zero."""
        record = make_record((0, 1), True, tokens=([3, 2, 1], [0, 0, 1]), length=3)
        assert record.chain_start == 0
        assert record.chain(0) == [3, 2, 1]

    def test_temporalg_chain_starts_at_adjacency(self) -> None:
        """TemporalG chains should start at first adjacency, empty if never adjacent."""
        met = make_record(
            (0, 1),
            True,
            game=Game.TEMPORALG,
            tokens=([0, 0, 2, 3], [0, 1, 1, 1]),
            length=4,
            first_adjacent_step=2,
        )
        assert met.chain(0) == [2, 3]
        assert met.chain(1) == [1, 1]
        apart = make_record((0, 1), False, game=Game.TEMPORALG, length=4)
        assert apart.chain(0) == []

    def test_meanings(self) -> None:
        """Meanings should bin ScoreG scores and list TemporalG spawn times and cells."""
        assert make_record((0, 1), True).meaning() == [1, 2, 8, 4]
        temporal = make_record((0, 1), True, game=Game.TEMPORALG, spawn_times=[2, 5])
        assert temporal.meaning() == [2, 1, 2, 5, 3, 4]


class TestPairsAndMatrices:
    """Tests for evaluated_pairs(), success_matrix() and mean_success_length()."""

    def test_pairing_modes(self) -> None:
        """Modes should select all, self or cross pairs."""
        from fglab.evaluation import PairingMode
        from fglab.evaluation import evaluated_pairs

        assert len(evaluated_pairs(3, PairingMode.ALL)) == 9
        assert evaluated_pairs(3, PairingMode.SELF) == [(0, 0), (1, 1), (2, 2)]
        assert (1, 1) not in evaluated_pairs(3, PairingMode.CROSS)

    def test_success_matrix(self) -> None:
        """SR should be the success fraction per ordered pair, NaN where unplayed."""
        from fglab.evaluation import success_matrix

        records = [
            make_record((0, 1), True),
            make_record((0, 1), False),
            make_record((1, 0), True),
            make_record((0, 0), False),
        ]
        sr = success_matrix(records, 2)
        assert sr[0, 1] == 0.5
        assert sr[1, 0] == 1.0
        assert sr[0, 0] == 0.0
        assert np.isnan(sr[1, 1])

    def test_mean_success_length(self) -> None:
        """Only successful episodes should count."""
        from fglab.evaluation import mean_success_length

        records = [make_record((0, 1), True, 4), make_record((0, 1), True, 6)]
        assert mean_success_length([*records, make_record((0, 1), False, 10)]) == 5.0
        assert np.isnan(mean_success_length([make_record((0, 1), False)]))

    def test_episode_seeds(self) -> None:
        """Episode seeds should be reproducible and differ between metric seeds."""
        from fglab.evaluation import episode_seeds

        assert episode_seeds(0, 5) == episode_seeds(0, 5)
        assert episode_seeds(0, 5) != episode_seeds(1, 5)
        assert episode_seeds(0, 3) == episode_seeds(0, 5)[:3]


class TestRunEpisodes:
    """Tests for run_episodes() and replay_tokens()."""

    def test_records(self, agents) -> None:
        """Each seed should give one finished record with one token per step per body."""
        from fglab.evaluation import run_episodes

        env = EnvConfig()
        records, inputs = run_episodes(agents[0], agents[1], (0, 1), env, [1, 2, 3])
        assert inputs is None
        assert [r.seed for r in records] == [1, 2, 3]
        for record in records:
            assert 1 <= record.length <= env.t_max
            assert len(record.tokens[0]) == len(record.tokens[1]) == record.length
            assert all(0 <= t < env.vocab_size for t in record.tokens[0])
            assert record.pairing == (0, 1)

    def test_greedy_deterministic(self, agents) -> None:
        """Greedy episodes should repeat exactly."""
        from fglab.evaluation import run_episodes

        first, _ = run_episodes(agents[0], agents[1], (0, 1), EnvConfig(), [4, 5])
        second, _ = run_episodes(agents[0], agents[1], (0, 1), EnvConfig(), [4, 5])
        assert first == second

    def test_sampled_reproducible_per_seed(self, agents) -> None:
        """Sampled episodes should depend only on their own seed."""
        from fglab.agent import DecodeMode
        from fglab.evaluation import run_episodes

        both, _ = run_episodes(agents[0], agents[1], (0, 1), EnvConfig(), [4, 5], DecodeMode.SAMPLE)
        alone, _ = run_episodes(agents[0], agents[1], (0, 1), EnvConfig(), [5], DecodeMode.SAMPLE)
        assert both[1].tokens == alone[0].tokens

    def test_inputs_kept(self, tiny_arch: ArchConfig) -> None:
        """Body 0's inputs should be kept one row per step."""
        from fglab.agent import init_agent
        from fglab.evaluation import run_episodes

        env = EnvConfig(game=Game.TEMPORALG)
        a, b = (init_agent(k, env, tiny_arch) for k in range(2))
        records, inputs = run_episodes(a, b, (0, 1), env, [7, 8], keep_inputs=True)
        for record, stream in zip(records, inputs, strict=True):
            assert stream.grid.shape == (record.length, env.grid_features)
            assert stream.msg.shape == (record.length,)
            assert stream.msg[0] == 0

    def test_replay_reproduces_own_tokens(self, agents) -> None:
        """An agent replayed through its own inputs should re-emit its own tokens."""
        from fglab.evaluation import replay_tokens
        from fglab.evaluation import run_episodes

        records, inputs = run_episodes(
            agents[0], agents[1], (0, 1), EnvConfig(), list(range(20)), keep_inputs=True
        )
        replayed = replay_tokens(agents[0], inputs)
        matches = sum(
            a == b
            for record, tokens in zip(records, replayed, strict=True)
            for a, b in zip(record.tokens[0], tokens, strict=True)
        )
        total = sum(r.length for r in records)
        assert matches / total >= 0.95

    def test_replay_nothing(self, agents) -> None:
        """Replaying no streams should return no chains."""
        from fglab.evaluation import replay_tokens

        assert replay_tokens(agents[0], []) == []


class TestEvaluate:
    """Tests for evaluate() and write_evaluation()."""

    def test_report(self, agents) -> None:
        """The report should cover every pair and seed."""
        from fglab.evaluation import evaluate

        evaluation = evaluate(agents, EnvConfig(), "ScoreG-P3-FC-XP", "abc", 4, (0, 1))
        report = evaluation.report
        assert len(report.sr_matrix) == 3
        assert all(len(row) == 3 for row in report.sr_matrix)
        assert len(evaluation.records) == 2 * 9 * 4
        assert len(evaluation.pair_rows) == 2 * 9
        assert report.ls.mean is not None
        assert 0.0 <= report.ls.mean <= 1.0
        assert report.ls_matrix[0][0] is None
        assert report.ls_asymmetry is not None
        assert report.sr_ring
        assert report.score_split == "train"

    def test_self_only(self, agents) -> None:
        """Self pairs only should leave cross metrics undefined."""
        from fglab.evaluation import PairingMode
        from fglab.evaluation import evaluate

        evaluation = evaluate(
            agents, EnvConfig(), "x", "h", 3, (0,), pairing=PairingMode.SELF, metrics=("sr",)
        )
        assert evaluation.report.cross_sr.mean is None
        assert evaluation.report.self_sr.mean is not None
        assert evaluation.report.ls.mean is None
        assert evaluation.report.sr_matrix[0][1] is None

    def test_live_protocol(self, agents) -> None:
        """The live protocol should compare both bodies of the same episode."""
        from fglab.evaluation import LSProtocol
        from fglab.evaluation import evaluate
        from fglab.metrics import language_similarity

        evaluation = evaluate(
            agents[:2], EnvConfig(), "x", "h", 3, (0,), metrics=("ls",), ls_protocol="live"
        )
        assert evaluation.report.ls_protocol == LSProtocol.LIVE
        played = [r for r in evaluation.records if r.pairing == (0, 1)]
        expected = language_similarity([r.chain(0) for r in played], [r.chain(1) for r in played])
        assert evaluation.report.ls_matrix[0][1] == pytest.approx(expected)

    def test_unknown_metric(self, agents) -> None:
        """Unknown metric names should be a config error."""
        from fglab.errors import ConfigError
        from fglab.evaluation import evaluate

        with pytest.raises(ConfigError, match="unknown metric"):
            evaluate(agents, EnvConfig(), "x", "h", 1, (0,), metrics=("ls", "bleu"))

    def test_written_files_recompute(self, agents, tmp_path: Path) -> None:
        """Stored records should reproduce the success matrix."""
        from fglab.evaluation import evaluate
        from fglab.evaluation import load_records
        from fglab.evaluation import success_matrix
        from fglab.evaluation import write_evaluation
        import pandas as pd

        evaluation = evaluate(agents[:2], EnvConfig(), "x", "h", 3, (0,))
        paths = write_evaluation(evaluation, tmp_path)
        assert sorted(p.name for p in paths) == [
            "episodes.jsonl",
            "metrics.json",
            "metrics_pairs.csv",
            "metrics_ring.csv",
            "metrics_summary.csv",
        ]
        records = load_records(tmp_path / "episodes.jsonl")
        assert records == evaluation.records
        np.testing.assert_allclose(
            success_matrix(records, 2), np.array(evaluation.report.sr_matrix, dtype=float)
        )
        summary = pd.read_csv(tmp_path / "metrics_summary.csv")
        assert "ic" in summary["metric"].tolist()
