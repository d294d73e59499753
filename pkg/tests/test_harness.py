import pytest

from molbandit.config import RunConfig
from molbandit.fingerprint import Fingerprint
from molbandit.harness import (
    Runner,
    aggregate_curves,
    mean_reward_novelty,
    normalized_cum_reward,
    novelty,
    run_experiment,
    strategy_code,
)

TINY = dict(
    cycles=3,
    k=5,
    n_active=4,
    n_inactive=20,
    batch_size=24,
    min_iterations=3,
    patience=3,
    population_size=24,
    max_candidates_per_cycle=80,
    max_gen_iterations=20,
    min_score=0.0,
    max_epochs=120,
    seeds=[1],
)


def tiny_cfg(**over):
    args = dict(TINY)
    args.update(over)
    return RunConfig(**args)


def fp(d):
    return Fingerprint(dict(d))


class TestMetrics:
    def test_novelty_undefined_cases(self):
        assert novelty([], [fp({1: 1})]) is None
        assert novelty([fp({1: 1})], []) is None

    def test_novelty_extremes(self):
        a, b = fp({1: 1}), fp({2: 1})
        assert novelty([a], [b]) == 1.0
        assert novelty([a, a], [a]) == 0.0

    def test_novelty_hand_average(self):
        past = [fp({0: 2, 1: 3})]                 # totals 5
        cur1 = fp({0: 2, 1: 1})                   # min 3, max 5 -> 0.4
        cur2 = fp({0: 1})                         # min 1, max 5 -> 0.8
        assert novelty([cur1, cur2], past) == pytest.approx(0.6)

    def test_normalized_cum_reward(self):
        assert normalized_cum_reward([5, 5, 5], 5) == 1.0
        assert normalized_cum_reward([0, 0], 5) == 0.0
        assert normalized_cum_reward([2, 0, 1], 2) == 0.5
        with pytest.raises(ValueError):
            normalized_cum_reward([], 5)

    def test_mean_reward_novelty(self):
        assert mean_reward_novelty(1.0, 1.0) == 1.0
        assert mean_reward_novelty(0.5, 0.3) == pytest.approx(0.4)
        assert mean_reward_novelty(0.5, None) is None


class TestRunner:
    @pytest.mark.parametrize("name", ["greedy", "random", "eps-greedy",
                                      "zooming-weighted", "zooming-unweighted"])
    def test_every_strategy_runs(self, name, tmp_path):
        cfg = tiny_cfg(strategies=[name])
        res = Runner(cfg, name, 1, out_dir=tmp_path / name).run()
        assert len(res.records) == cfg.cycles
        for rec in res.records:
            assert len(rec.selected) == cfg.k
            assert len(rec.rewards) == cfg.k
            assert 0.0 <= rec.norm_cum_reward <= 1.0
        assert (tmp_path / name / "cycles.csv").exists()
        assert (tmp_path / name / "manifest.json").exists()
        assert (tmp_path / name / "model.npz").exists()

    def test_never_reselects(self):
        cfg = tiny_cfg(cycles=4, strategies=["random"])
        res = Runner(cfg, "random", 3).run()
        seen = set()
        for rec in res.records:
            ids = set(rec.selected)
            assert len(ids) == cfg.k
            assert not ids & seen
            seen |= ids

    def test_cum_reward_counts_ones(self):
        res = Runner(tiny_cfg(strategies=["greedy"]), "greedy", 2).run()
        total = sum(sum(r.rewards) for r in res.records)
        assert res.records[-1].cum_reward == total == res.summary["cum_reward"]

    def test_replay_bit_identical(self, tmp_path):
        cfg = tiny_cfg(strategies=["zooming-weighted"])
        Runner(cfg, "zooming-weighted", 1, out_dir=tmp_path / "a").run()
        Runner(cfg, "zooming-weighted", 1, out_dir=tmp_path / "b").run()
        a = (tmp_path / "a" / "cycles.csv").read_bytes()
        b = (tmp_path / "b" / "cycles.csv").read_bytes()
        assert a == b

    def test_distinct_seeds_differ(self):
        cfg = tiny_cfg(strategies=["random"])
        r1 = Runner(cfg, "random", 1).run()
        r2 = Runner(cfg, "random", 2).run()
        assert r1.records[0].selected != r2.records[0].selected

    def test_novelty_null_then_defined(self):
        res = Runner(tiny_cfg(strategies=["random"], cycles=2), "random", 1).run()
        assert res.records[0].novelty is None  # no past actives at t=1

    def test_strategy_code_stable(self):
        assert strategy_code("greedy") == strategy_code("greedy")
        assert strategy_code("greedy") != strategy_code("random")

    def test_training_set_grows_by_k_per_cycle(self):
        cfg = tiny_cfg(strategies=["greedy"])
        runner = Runner(cfg, "greedy", 1)
        runner.bootstrap()
        base = len(runner.train)
        assert base == cfg.n_active + cfg.n_inactive
        for t in range(1, cfg.cycles + 1):
            runner.run_cycle(t)
            assert len(runner.train) == base + cfg.k * t

    def test_reproducible_from_manifest_alone(self, tmp_path):
        import json

        cfg = tiny_cfg(strategies=["random"])
        Runner(cfg, "random", 1, out_dir=tmp_path / "orig").run()
        manifest = json.loads((tmp_path / "orig" / "manifest.json").read_text())
        rebuilt = RunConfig(**manifest["config"])
        Runner(rebuilt, manifest["strategy"], manifest["seed"],
               out_dir=tmp_path / "redo").run()
        assert (tmp_path / "orig" / "cycles.csv").read_bytes() == (
            tmp_path / "redo" / "cycles.csv").read_bytes()


class TestRunExperiment:
    def test_product_of_runs(self, tmp_path):
        cfg = tiny_cfg(strategies=["greedy", "random"], seeds=[1, 2])
        result = run_experiment(cfg, out_dir=tmp_path)
        assert len(result.runs) == 4
        assert result.failures == []
        assert (tmp_path / "summary.csv").exists()
        assert (tmp_path / "manifest.json").exists()
        assert (tmp_path / "runs" / "greedy" / "seed0001" / "cycles.csv").exists()

    def test_failure_isolation(self, tmp_path, monkeypatch):
        cfg = tiny_cfg(strategies=["greedy", "random"], seeds=[1])
        original = Runner.run

        def flaky(self):
            if self.strategy_name == "greedy":
                raise RuntimeError("boom")
            return original(self)

        monkeypatch.setattr(Runner, "run", flaky)
        result = run_experiment(cfg, out_dir=tmp_path)
        assert len(result.runs) == 1
        assert len(result.failures) == 1
        assert result.failures[0][0] == "greedy"

    def test_aggregate_curves_shape(self):
        cfg = tiny_cfg(strategies=["random"], seeds=[1, 2])
        result = run_experiment(cfg)
        curves = aggregate_curves(result.runs)
        rows = curves["random"]
        assert len(rows) == cfg.cycles
        assert rows[0]["n_runs"] == 2
        lo, hi = rows[0]["norm_ci"]
        assert lo <= rows[0]["norm_mean"] <= hi
