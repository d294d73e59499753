"""Closed-loop orchestration: runs the design-make-test-analyze cycle for T
rounds per (strategy, seed) pair, computes the per-cycle metrics, and writes
reproducible run artifacts.

Every random draw comes from a stream derived from (seed, strategy, purpose,
round), so two invocations with the same configuration produce byte-identical
cycles.csv files. Wall-clock timings go to a separate sidecar for exactly
that reason.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import bandit, generator, scoring, twin
from .bandit import EpsilonConfig, ZoomingStrategy
from .fingerprint import fingerprint_digest, jaccard_distance, morgan_fingerprint_batch
from .generator import GenerationStarved, GeneratorConfig
from .molgraph import count_atoms, mix64
from .twin import GroundTruthConfig

ARTIFACT_VERSION = "0.1.0"

STRATEGY_NAMES = (
    "zooming-weighted",
    "zooming-unweighted",
    "greedy",
    "eps-greedy",
    "random",
)

# purpose tags for derived rng streams
_P_BOOTSTRAP = 1
_P_GENERATE = 2
_P_FALLBACK = 3
_P_SELECT = 4
_P_NOISE = 5

CYCLES_COLUMNS = (
    "t",
    "strategy",
    "horizon",
    "epsilon",
    "n_balls",
    "n_candidates",
    "gen_iterations",
    "gen_rejects",
    "gen_buckets",
    "min_score_relaxed",
    "round_reward",
    "cum_reward",
    "norm_cum_reward",
    "novelty",
    "mean_reward_novelty",
    "selected",
    "rewards",
)


def strategy_code(name: str) -> int:
    """Stable 64-bit digest of a strategy name (rng stream separation)."""
    h = 0x57A7E6F1C0DE5EED
    for byte in name.encode("utf-8"):
        h = mix64(h, byte)
    return h


def derived_rng(seed: int, strat_code: int, purpose: int, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, strat_code, purpose, t]))


def make_strategy(name: str, run_cfg, audit: bool = False):
    if name == "zooming-weighted":
        return ZoomingStrategy(True, run_cfg.backfill_mode, audit=audit)
    if name == "zooming-unweighted":
        return ZoomingStrategy(False, run_cfg.backfill_mode, audit=audit)
    if name == "greedy":
        return bandit.GreedyStrategy()
    if name == "eps-greedy":
        return bandit.EpsilonGreedyStrategy(
            EpsilonConfig(
                eps_min=run_cfg.eps_min,
                eps_max=run_cfg.eps_max,
                c_d=run_cfg.c_d,
                literal_form=run_cfg.literal_epsilon_form,
            )
        )
    if name == "random":
        return bandit.RandomStrategy()
    raise ValueError(f"unknown strategy {name!r}")


def novelty(current_active_fps, past_active_fps, distance=jaccard_distance):
    """Mean over past actives of the mean dissimilarity to this round's
    actives; None when either side is empty (such cycles are excluded from
    aggregate averages)."""
    if not current_active_fps or not past_active_fps:
        return None
    total = 0.0
    for fp_past in past_active_fps:
        inner = sum(distance(fp_past, fp_cur) for fp_cur in current_active_fps)
        total += inner / len(current_active_fps)
    return total / len(past_active_fps)


def normalized_cum_reward(round_rewards, k: int) -> float:
    """Fraction of the maximum achievable reward so far: sum / (K * t)."""
    t = len(round_rewards)
    if t < 1:
        raise ValueError("need at least one completed round")
    return float(sum(round_rewards)) / (k * t)


def mean_reward_novelty(norm_cum: float, nov):
    return None if nov is None else 0.5 * (norm_cum + nov)


@dataclass
class CycleRecord:
    t: int
    strategy: str
    horizon: int | None
    epsilon: float | None
    n_balls: int | None
    n_candidates: int
    gen_iterations: int
    gen_rejects: int
    gen_buckets: int
    min_score_relaxed: bool
    round_reward: int
    cum_reward: int
    norm_cum_reward: float
    novelty: float | None
    mean_reward_novelty: float | None
    selected: list[int]
    rewards: list[int]
    wall_ms: float


@dataclass
class RunResult:
    strategy: str
    seed: int
    records: list[CycleRecord]
    summary: dict
    config: dict
    diagnostics: dict | None = None


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def record_row(rec: CycleRecord) -> str:
    cells = [
        _fmt(rec.t),
        rec.strategy,
        _fmt(rec.horizon),
        _fmt(rec.epsilon),
        _fmt(rec.n_balls),
        _fmt(rec.n_candidates),
        _fmt(rec.gen_iterations),
        _fmt(rec.gen_rejects),
        _fmt(rec.gen_buckets),
        _fmt(rec.min_score_relaxed),
        _fmt(rec.round_reward),
        _fmt(rec.cum_reward),
        _fmt(rec.norm_cum_reward),
        _fmt(rec.novelty),
        _fmt(rec.mean_reward_novelty),
        ";".join(f"{h:016x}" for h in rec.selected),
        ";".join(str(r) for r in rec.rewards),
    ]
    return ",".join(cells)


class Runner:
    """One (strategy, seed) run of the simulated DMTA loop."""

    def __init__(self, cfg, strategy_name: str, seed: int,
                 out_dir=None, audit: bool = False, collect_diagnostics: bool = False):
        self.cfg = cfg
        self.strategy_name = strategy_name
        self.seed = seed
        self.out_dir = out_dir
        self.audit = audit
        self.collect_diagnostics = collect_diagnostics

        self.gt_cfg = GroundTruthConfig(
            co_lo=cfg.co_lo, co_hi=cfg.co_hi, cn_lo=cfg.cn_lo, cn_hi=cfg.cn_hi,
            on_lo=cfg.on_lo, on_hi=cfg.on_hi, flip_prob=cfg.flip_prob,
        )
        self.gen_cfg = GeneratorConfig(
            batch_size=cfg.batch_size,
            min_iterations=cfg.min_iterations,
            patience=cfg.patience,
            bucket_size=cfg.bucket_size,
            min_score=cfg.min_score,
            min_similarity=cfg.min_similarity,
            population_size=cfg.population_size,
            max_candidates_per_cycle=cfg.max_candidates_per_cycle,
            max_iterations=cfg.max_gen_iterations,
        )
        self.hyper = scoring.ScoringHyper(
            l2=cfg.l2, max_epochs=cfg.max_epochs, tol=cfg.tol, balanced=cfg.balanced_classes,
        )
        self.strat_code = strategy_code(strategy_name)
        self.strategy = make_strategy(strategy_name, cfg, audit=audit)

        self.train = scoring.TrainingSet()
        self.model = None
        self.bootstrap_model = None
        self.blacklist: set[int] = set()
        self.make_ledger = twin.MakeLedger()
        self.population_seeds = []
        self.past_active_fps = []
        self.round_rewards: list[int] = []
        self.records: list[CycleRecord] = []
        self._holdout: dict[int, tuple] = {}  # id -> (fp, true label)
        self._holdout_counts = {0: 0, 1: 0}
        self._cycles_fh = None
        self._timings_fh = None
        self._balls_fh = None

    def _rng(self, purpose: int, t: int) -> np.random.Generator:
        return derived_rng(self.seed, self.strat_code, purpose, t)

    def bootstrap(self):
        """Collect the initial labeled set, fit the first model, and seed the
        bandit's history with the bootstrap plays."""
        rng = self._rng(_P_BOOTSTRAP, 0)
        records = twin.bootstrap_initial(
            generator.random_molecule, self.gt_cfg, rng,
            n_active=self.cfg.n_active, n_inactive=self.cfg.n_inactive,
        )
        fps = morgan_fingerprint_batch([r.molecule for r in records])
        for rec, fp in zip(records, fps):
            label = rec.true_label if self.cfg.train_on_true_labels else rec.observed_label
            self.train.add(fp, label)
            self.blacklist.add(rec.mol_id)
        self.model = scoring.fit(self.train, self.hyper)
        self.bootstrap_model = self.model
        if isinstance(self.strategy, ZoomingStrategy):
            self.strategy.init_history(
                [(fp, rec.observed_label) for rec, fp in zip(records, fps)]
            )
        self.population_seeds = [r.molecule for r in records]
        self.bootstrap_records = records

    def _generate(self, t: int):
        score_fn = lambda fps: scoring.predict_proba(self.model, fps)
        try:
            cand = generator.generate_candidates(
                score_fn, self.population_seeds, self.blacklist,
                self.gen_cfg, self._rng(_P_GENERATE, t), min_required=self.cfg.k + 1,
            )
            relaxed = False
        except GenerationStarved:
            cand = generator.generate_candidates(
                score_fn, self.population_seeds, self.blacklist,
                generator.relaxed(self.gen_cfg), self._rng(_P_FALLBACK, t),
                min_required=self.cfg.k + 1,
            )
            relaxed = True
        return cand, relaxed

    def run_cycle(self, t: int) -> CycleRecord:
        start = time.perf_counter()
        cand, relaxed = self._generate(t)

        sel_rng = self._rng(_P_SELECT, t)
        selected = self.strategy.select(cand.fingerprints, cand.scores, t, self.cfg.k, sel_rng)

        noise_rng = self._rng(_P_NOISE, t)
        rewards = []
        true_labels = []
        sel_fps = []
        sel_ids = []
        for m in selected.tolist():
            mol = cand.molecules[m]
            self.make_ledger.make(mol)
            label = twin.true_activity(count_atoms(mol), self.gt_cfg)
            obs = twin.noisy_test(label, noise_rng, self.gt_cfg)
            true_labels.append(label)
            rewards.append(obs)
            sel_fps.append(cand.fingerprints[m])
            sel_ids.append(cand.mol_ids[m])

        if self.collect_diagnostics:
            sel_set = set(selected.tolist())
            for m in range(len(cand)):
                mid = cand.mol_ids[m]
                if m in sel_set or mid in self._holdout:
                    continue
                label = twin.true_activity(count_atoms(cand.molecules[m]), self.gt_cfg)
                # 4x headroom over the pool quotas; later-selected ids drop out
                if self._holdout_counts[label] >= (800 if label else 1800):
                    continue
                self._holdout_counts[label] += 1
                self._holdout[mid] = (cand.fingerprints[m], label)

        # analyze: strategy update first, then model refit
        self.strategy.update(t, selected.tolist(), rewards, cand.fingerprints)
        for fp, label, obs in zip(sel_fps, true_labels, rewards):
            self.train.add(fp, label if self.cfg.train_on_true_labels else obs)
        self.model = scoring.fit(self.train, self.hyper)

        self.blacklist.update(sel_ids)
        by_score = sorted(range(len(cand)), key=lambda i: (-cand.scores[i], i))
        self.population_seeds = [
            cand.molecules[i] for i in by_score[: self.gen_cfg.population_size]
        ]

        cur_active_fps = [fp for fp, y in zip(sel_fps, true_labels) if y == 1]
        nov = novelty(cur_active_fps, self.past_active_fps)
        self.past_active_fps.extend(cur_active_fps)

        self.round_rewards.append(sum(rewards))
        norm = normalized_cum_reward(self.round_rewards, self.cfg.k)
        info = self.strategy.round_info()
        rec = CycleRecord(
            t=t,
            strategy=self.strategy_name,
            horizon=info["horizon"],
            epsilon=info["epsilon"],
            n_balls=info["n_balls"],
            n_candidates=len(cand),
            gen_iterations=cand.stats["iterations"],
            gen_rejects=cand.stats["rejected"],
            gen_buckets=cand.stats["buckets"],
            min_score_relaxed=relaxed,
            round_reward=sum(rewards),
            cum_reward=sum(self.round_rewards),
            norm_cum_reward=norm,
            novelty=nov,
            mean_reward_novelty=mean_reward_novelty(norm, nov),
            selected=sel_ids,
            rewards=rewards,
            wall_ms=(time.perf_counter() - start) * 1e3,
        )
        self.records.append(rec)
        self._write_cycle(rec)
        return rec

    def holdout_pool(self, total: int = 500, target_active: int = 50):
        """Held-out twin-labeled pool from the arriving candidate streams:
        never-selected candidates (so never trained on), first-come.

        Aims for target_active actives; when the run produced fewer
        never-selected actives the mix flexes toward inactives (and vice
        versa) so the pool still reaches `total` with both classes present
        whenever supply allows. Only collected when diagnostics are enabled."""
        actives = []
        inactives = []
        for mid, (fp, label) in self._holdout.items():
            if mid in self.blacklist:
                continue
            (actives if label else inactives).append(fp)
        n_act = min(target_active, len(actives))
        n_inact = min(total - n_act, len(inactives))
        n_act = min(total - n_inact, len(actives))
        fps = actives[:n_act] + inactives[:n_inact]
        labels = [1] * n_act + [0] * n_inact
        return fps, labels

    def _open_outputs(self):
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "artifact_version": ARTIFACT_VERSION,
            "strategy": self.strategy_name,
            "seed": self.seed,
            "config": self.cfg.as_dict(),
        }
        (self.out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
        self._cycles_fh = open(self.out_dir / "cycles.csv", "w", newline="\n")
        self._cycles_fh.write(",".join(CYCLES_COLUMNS) + "\n")
        self._timings_fh = open(self.out_dir / "timings.csv", "w", newline="\n")
        self._timings_fh.write("t,wall_ms\n")
        if self.cfg.dump_balls and isinstance(self.strategy, ZoomingStrategy):
            self._balls_fh = open(self.out_dir / "balls.csv", "w", newline="\n")
            self._balls_fh.write("t,ball,radius,n,rew,preindex,center_digest\n")

    def _write_cycle(self, rec: CycleRecord):
        if self._cycles_fh is None:
            return
        self._cycles_fh.write(record_row(rec) + "\n")
        self._cycles_fh.flush()
        self._timings_fh.write(f"{rec.t},{rec.wall_ms:.3f}\n")
        self._timings_fh.flush()
        if self._balls_fh is not None:
            for i, radius, n, rew, pre in self.strategy.ball_table():
                digest = fingerprint_digest(self.strategy.active[i].center)
                self._balls_fh.write(
                    f"{rec.t},{i},{repr(radius)},{n},{rew},{repr(pre)},{digest:016x}\n"
                )
            self._balls_fh.flush()
        if self.out_dir is not None:
            scoring.save_model(self.model, self.out_dir / "model.npz")

    def _close_outputs(self):
        for fh in (self._cycles_fh, self._timings_fh, self._balls_fh):
            if fh is not None:
                fh.close()

    def run(self) -> RunResult:
        self._open_outputs()
        try:
            self.bootstrap()
            for t in range(1, self.cfg.cycles + 1):
                self.run_cycle(t)
        finally:
            self._close_outputs()

        defined = [r.novelty for r in self.records if r.novelty is not None]
        summary = {
            "cum_reward": sum(self.round_rewards),
            "norm_cum_reward": normalized_cum_reward(self.round_rewards, self.cfg.k),
            "mean_novelty": (sum(defined) / len(defined)) if defined else None,
            "makes": self.make_ledger.count,
            "n_train": len(self.train),
        }
        diagnostics = None
        if self.collect_diagnostics:
            diagnostics = {
                "strategy_obj": self.strategy,
                "bootstrap": self.bootstrap_records,
                "model": self.model,
                "bootstrap_model": self.bootstrap_model,
                "holdout_pool": self.holdout_pool(),
            }
        return RunResult(
            strategy=self.strategy_name,
            seed=self.seed,
            records=self.records,
            summary=summary,
            config=self.cfg.as_dict(),
            diagnostics=diagnostics,
        )


def aggregate_curves(runs: list[RunResult]):
    """Per-strategy per-cycle means with normal-approximation 95% intervals
    across seeds. Cycles with undefined novelty are excluded run-wise from
    the novelty (and combined-metric) averages."""
    by_strategy: dict[str, list[RunResult]] = {}
    for run in runs:
        by_strategy.setdefault(run.strategy, []).append(run)
    curves = {}
    for name, group in sorted(by_strategy.items()):
        t_max = max(len(r.records) for r in group)
        rows = []
        for ti in range(t_max):
            norms = [r.records[ti].norm_cum_reward for r in group if ti < len(r.records)]
            novs = [
                r.records[ti].novelty
                for r in group
                if ti < len(r.records) and r.records[ti].novelty is not None
            ]
            means = [
                r.records[ti].mean_reward_novelty
                for r in group
                if ti < len(r.records) and r.records[ti].mean_reward_novelty is not None
            ]
            rows.append(
                {
                    "t": ti + 1,
                    "n_runs": len(norms),
                    "norm_mean": _mean(norms),
                    "norm_ci": _ci95(norms),
                    "nov_n": len(novs),
                    "nov_mean": _mean(novs) if novs else None,
                    "nov_ci": _ci95(novs) if novs else (None, None),
                    "combined_mean": _mean(means) if means else None,
                }
            )
        curves[name] = rows
    return curves


def _mean(xs):
    return sum(xs) / len(xs)


def _ci95(xs):
    n = len(xs)
    mu = _mean(xs)
    if n < 2:
        return (mu, mu)
    var = sum((x - mu) ** 2 for x in xs) / (n - 1)
    half = 1.96 * (var**0.5) / (n**0.5)
    return (mu - half, mu + half)


def write_summary_csv(runs: list[RunResult], path):
    curves = aggregate_curves(runs)
    with open(path, "w", newline="\n") as fh:
        fh.write(
            "strategy,t,n_runs,norm_mean,norm_ci_lo,norm_ci_hi,"
            "nov_n,nov_mean,nov_ci_lo,nov_ci_hi,combined_mean\n"
        )
        for name in sorted(curves):
            for row in curves[name]:
                cells = [
                    name,
                    str(row["t"]),
                    str(row["n_runs"]),
                    _fmt(row["norm_mean"]),
                    _fmt(row["norm_ci"][0]),
                    _fmt(row["norm_ci"][1]),
                    str(row["nov_n"]),
                    _fmt(row["nov_mean"]),
                    _fmt(row["nov_ci"][0]),
                    _fmt(row["nov_ci"][1]),
                    _fmt(row["combined_mean"]),
                ]
                fh.write(",".join(cells) + "\n")


@dataclass
class ExperimentResult:
    runs: list[RunResult]
    failures: list[tuple[str, int, str]] = field(default_factory=list)


def run_experiment(cfg, out_dir=None, audit: bool = False,
                   collect_diagnostics: bool = False, log_fn=None) -> ExperimentResult:
    """Run every (strategy, seed) pair sequentially. Runs are independent
    (own rng streams derived from the master seed), so a failure in one is
    recorded and the rest proceed."""
    result = ExperimentResult(runs=[])
    for name in cfg.strategies:
        for seed in cfg.seeds:
            run_dir = None
            if out_dir is not None:
                run_dir = out_dir / "runs" / name / f"seed{seed:04d}"
            if log_fn:
                log_fn(f"run strategy={name} seed={seed}")
            try:
                runner = Runner(
                    cfg, name, seed, out_dir=run_dir,
                    audit=audit, collect_diagnostics=collect_diagnostics,
                )
                result.runs.append(runner.run())
            except Exception as exc:  # per-run isolation
                result.failures.append((name, seed, f"{type(exc).__name__}: {exc}"))
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "artifact_version": ARTIFACT_VERSION,
            "config": cfg.as_dict(),
            "failures": result.failures,
        }
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
        if result.runs:
            write_summary_csv(result.runs, out_dir / "summary.csv")
    return result
