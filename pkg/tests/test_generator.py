import numpy as np
import pytest

from molbandit.generator import (
    GenerationStarved,
    GeneratorConfig,
    evaluate_batch,
    generate_candidates,
    random_molecule,
    relaxed,
)
from molbandit.fingerprint import morgan_fingerprint_batch
from molbandit.molgraph import canonical_hash_batch, is_valid

TINY = GeneratorConfig(
    batch_size=24,
    min_iterations=3,
    patience=3,
    bucket_size=100,
    min_score=0.0,
    population_size=24,
    max_candidates_per_cycle=80,
    max_iterations=30,
)


def uniform_scorer(fps):
    return np.full(len(fps), 0.5)


def seeds(rng, n=10):
    return [random_molecule(rng) for _ in range(n)]


class TestRandomMolecule:
    def test_valid(self, rng):
        for _ in range(300):
            assert is_valid(random_molecule(rng))

    def test_deterministic(self):
        a = random_molecule(np.random.default_rng(11))
        b = random_molecule(np.random.default_rng(11))
        assert a == b


class TestEvaluateBatch:
    def test_matches_single_ops(self, rng):
        mols = [random_molecule(rng) for _ in range(30)]
        ids, fps = evaluate_batch(mols)
        fresh = [m.__class__(m.atoms, m.bonds) for m in mols]
        assert (canonical_hash_batch(fresh) == ids).all()
        assert morgan_fingerprint_batch(fresh) == fps

    def test_empty(self):
        ids, fps = evaluate_batch([])
        assert len(ids) == 0 and fps == []


class TestGenerateCandidates:
    def test_stopping_rule_uniform_scores(self, rng):
        cfg = GeneratorConfig(batch_size=8, min_iterations=1, patience=1,
                              min_score=0.0, population_size=8,
                              max_candidates_per_cycle=50, max_iterations=99)
        cand = generate_candidates(uniform_scorer, seeds(rng), set(), cfg,
                                   np.random.default_rng(0), min_required=2)
        assert cand.stats["iterations"] == 2  # no improvement possible after round 1

    def test_size_bounds(self, rng):
        cand = generate_candidates(uniform_scorer, seeds(rng), set(), TINY,
                                   np.random.default_rng(1), min_required=6)
        assert 6 <= len(cand) <= TINY.max_candidates_per_cycle
        assert len(cand.molecules) == len(cand.fingerprints) == len(cand.scores)

    def test_distinct_and_valid(self, rng):
        cand = generate_candidates(uniform_scorer, seeds(rng), set(), TINY,
                                   np.random.default_rng(2), min_required=6)
        assert len(set(cand.mol_ids)) == len(cand)
        assert all(is_valid(m) for m in cand.molecules)

    def test_min_score_respected(self, rng):
        cfg = GeneratorConfig(batch_size=24, min_iterations=3, patience=3,
                              min_score=0.4, population_size=24,
                              max_candidates_per_cycle=80, max_iterations=30)
        shaped = lambda fps: np.linspace(0.0, 1.0, len(fps))
        cand = generate_candidates(shaped, seeds(rng), set(), cfg,
                                   np.random.default_rng(3), min_required=2)
        assert all(s >= 0.4 for s in cand.scores)

    def test_blacklist_never_emitted(self, rng):
        sd = seeds(rng)
        first = generate_candidates(uniform_scorer, sd, set(), TINY,
                                    np.random.default_rng(4), min_required=6)
        banned = set(first.mol_ids[:20])
        second = generate_candidates(uniform_scorer, sd, banned, TINY,
                                     np.random.default_rng(4), min_required=6)
        assert not banned.intersection(second.mol_ids)

    def test_deterministic(self, rng):
        sd = seeds(rng)
        a = generate_candidates(uniform_scorer, sd, set(), TINY,
                                np.random.default_rng(5), min_required=6)
        b = generate_candidates(uniform_scorer, sd, set(), TINY,
                                np.random.default_rng(5), min_required=6)
        assert a.mol_ids == b.mol_ids
        assert a.scores == b.scores

    def test_starved_raises(self, rng):
        with pytest.raises(GenerationStarved):
            generate_candidates(uniform_scorer, seeds(rng), set(), TINY,
                                np.random.default_rng(6), min_required=10**6)

    def test_starved_on_score_floor(self, rng):
        cfg = GeneratorConfig(batch_size=8, min_iterations=2, patience=2,
                              min_score=0.9, population_size=8,
                              max_candidates_per_cycle=50, max_iterations=10)
        low = lambda fps: np.full(len(fps), 0.1)
        with pytest.raises(GenerationStarved):
            generate_candidates(low, seeds(rng), set(), cfg,
                                np.random.default_rng(7), min_required=2)
        ok = generate_candidates(low, seeds(rng), set(), relaxed(cfg),
                                 np.random.default_rng(7), min_required=2)
        assert len(ok) >= 2

    def test_bucket_cap_suppresses_duplicates(self, rng):
        # one seed molecule, bucket_size 1: the seed's own bucket fills on its
        # first acceptance; near-identical regenerations get captured/rejected
        cfg = GeneratorConfig(batch_size=16, min_iterations=4, patience=4,
                              bucket_size=1, min_score=0.0, min_similarity=0.6,
                              population_size=8, max_candidates_per_cycle=200,
                              max_iterations=12)
        cand = generate_candidates(uniform_scorer, seeds(rng, 4), set(), cfg,
                                   np.random.default_rng(8), min_required=2)
        assert cand.stats["rejected"] > 0

    def test_stats_keys(self, rng):
        cand = generate_candidates(uniform_scorer, seeds(rng), set(), TINY,
                                   np.random.default_rng(9), min_required=6)
        assert {"iterations", "rejected", "buckets", "accepted_total"} <= set(cand.stats)
