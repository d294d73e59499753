import json
import xml.etree.ElementTree as ET

import pytest

from molbandit import cli
from molbandit.config import ParseError, RunConfig, ValidationError, parse_config
from molbandit.plots import emit_plots

TINY_FILE = """
# tiny config for tests
cycles = 2
k = 4
n_active = 3
n_inactive = 15
batch_size = 16
min_iterations = 2
patience = 2
population_size = 16
max_candidates_per_cycle = 60
max_gen_iterations = 12
min_score = 0.0
max_epochs = 80
seeds = 1
strategies = random
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_FILE)
    return path


class TestParseConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("")
        cfg = parse_config(path)
        assert cfg == RunConfig()

    def test_no_file_gives_defaults(self):
        assert parse_config(None) == RunConfig()

    def test_flag_overrides_file(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("k = 100\ncycles = 50\n")
        cfg = parse_config(path, {"k": 20})
        assert cfg.k == 20
        assert cfg.cycles == 50

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("kk = 3\n")
        with pytest.raises(ParseError, match="kk"):
            parse_config(path)
        with pytest.raises(ParseError, match="zz"):
            parse_config(None, {"zz": 1})

    def test_bad_value(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("k = banana\n")
        with pytest.raises(ParseError, match="k"):
            parse_config(path)

    def test_duplicate_key(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("k = 2\nk = 3\n")
        with pytest.raises(ParseError, match="duplicate"):
            parse_config(path)

    def test_validation_collects_all(self):
        with pytest.raises(ValidationError) as info:
            parse_config(None, {"cycles": 0, "k": 0, "flip_prob": 2.0})
        assert len(info.value.problems) >= 3

    def test_unknown_strategy_rejected(self):
        with pytest.raises(ValidationError, match="unknown strategy"):
            parse_config(None, {"strategies": "thompson"})

    def test_paper_scale_preset(self):
        cfg = parse_config(None, {"paper_scale": True})
        assert cfg.cycles == 200
        assert cfg.k == 100
        assert cfg.seeds == list(range(1, 11))

    def test_explicit_overrides_beat_paper_scale(self):
        cfg = parse_config(None, {"paper_scale": True, "k": 30})
        assert cfg.k == 30
        assert cfg.cycles == 200

    def test_k_must_be_below_candidate_cap(self):
        with pytest.raises(ValidationError, match="max_candidates_per_cycle"):
            parse_config(None, {"k": 1000, "max_candidates_per_cycle": 1000})


class TestCliCommands:
    def test_validate_config_ok(self, tiny_config, capsys):
        code = cli.main(["validate-config", "--config", str(tiny_config)])
        assert code == 0
        echoed = json.loads(capsys.readouterr().out)
        assert echoed["k"] == 4

    def test_validate_config_error_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nonsense_key = 1\n")
        assert cli.main(["validate-config", "--config", str(bad)]) == 2

    def test_missing_config_file_exit_2(self):
        assert cli.main(["validate-config", "--config", "/does/not/exist.cfg"]) == 2

    def test_run_and_plot_end_to_end(self, tiny_config, tmp_path):
        out = tmp_path / "exp"
        code = cli.main(["run", "--config", str(tiny_config), "--out", str(out),
                         "--emit-plots"])
        assert code == 0
        assert (out / "runs" / "random" / "seed0001" / "cycles.csv").exists()
        assert (out / "summary.csv").exists()
        svgs = sorted(p.name for p in (out / "plots").glob("*.svg"))
        assert svgs == ["mean_reward_novelty.svg",
                        "normalized_cumulative_reward.svg",
                        "novelty_selected_actives.svg"]
        # standalone plot subcommand reproduces the same bytes
        code = cli.main(["plot", "--runs", str(out), "--out", str(tmp_path / "p2")])
        assert code == 0
        for name in svgs:
            assert (tmp_path / "p2" / name).read_bytes() == (out / "plots" / name).read_bytes()

    def test_plot_without_runs_exit_2(self, tmp_path):
        assert cli.main(["plot", "--runs", str(tmp_path)]) == 2

    def test_bench_runs(self, capsys):
        assert cli.main(["bench", "--n", "120"]) == 0
        out = capsys.readouterr().out
        assert "jaccard_distance" in out


class TestFrozenFormats:
    def test_cycles_csv_header_golden(self, tiny_config, tmp_path):
        out = tmp_path / "exp"
        assert cli.main(["run", "--config", str(tiny_config), "--out", str(out)]) == 0
        header = (out / "runs" / "random" / "seed0001" / "cycles.csv").read_text().splitlines()[0]
        assert header == (
            "t,strategy,horizon,epsilon,n_balls,n_candidates,gen_iterations,"
            "gen_rejects,gen_buckets,min_score_relaxed,round_reward,cum_reward,"
            "norm_cum_reward,novelty,mean_reward_novelty,selected,rewards"
        )

    def test_summary_csv_header_golden(self, tiny_config, tmp_path):
        out = tmp_path / "exp"
        assert cli.main(["run", "--config", str(tiny_config), "--out", str(out)]) == 0
        header = (out / "summary.csv").read_text().splitlines()[0]
        assert header == (
            "strategy,t,n_runs,norm_mean,norm_ci_lo,norm_ci_hi,"
            "nov_n,nov_mean,nov_ci_lo,nov_ci_hi,combined_mean"
        )

    def test_ball_dump(self, tmp_path):
        from molbandit.config import RunConfig
        from molbandit.harness import Runner

        cfg = RunConfig(cycles=2, k=4, n_active=3, n_inactive=15, batch_size=16,
                        min_iterations=2, patience=2, population_size=16,
                        max_candidates_per_cycle=60, max_gen_iterations=12,
                        min_score=0.0, max_epochs=80, seeds=[1],
                        strategies=["zooming-weighted"], dump_balls=True)
        Runner(cfg, "zooming-weighted", 1, out_dir=tmp_path).run()
        lines = (tmp_path / "balls.csv").read_text().splitlines()
        assert lines[0] == "t,ball,radius,n,rew,preindex,center_digest"
        assert len(lines) > 2  # root ball row per round at minimum


class TestPlots:
    def _runs(self, seeds):
        from molbandit.harness import run_experiment
        from molbandit.config import RunConfig

        cfg = RunConfig(cycles=2, k=4, n_active=3, n_inactive=15, batch_size=16,
                        min_iterations=2, patience=2, population_size=16,
                        max_candidates_per_cycle=60, max_gen_iterations=12,
                        min_score=0.0, max_epochs=80, seeds=seeds,
                        strategies=["random"])
        return run_experiment(cfg).runs

    def test_three_valid_svgs(self, tmp_path):
        runs = self._runs([1])
        paths = emit_plots(runs, tmp_path)
        assert len(paths) == 3
        for p in paths:
            root = ET.parse(p).getroot()
            assert root.tag.endswith("svg")

    def test_byte_identical_on_repeat(self, tmp_path):
        runs = self._runs([1, 2])
        emit_plots(runs, tmp_path / "a")
        emit_plots(runs, tmp_path / "b")
        for name in ("normalized_cumulative_reward.svg",
                     "novelty_selected_actives.svg",
                     "mean_reward_novelty.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_single_seed_zero_width_band(self, tmp_path):
        # with one run the 95% interval collapses onto the mean curve
        runs = self._runs([1])
        from molbandit.harness import aggregate_curves

        rows = aggregate_curves(runs)["random"]
        for row in rows:
            lo, hi = row["norm_ci"]
            assert lo == hi == row["norm_mean"]
        emit_plots(runs, tmp_path)  # renders without error
