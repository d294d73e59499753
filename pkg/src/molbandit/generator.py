"""Design-step candidate generation: a score-guided evolutionary sampler over
molecular graphs with a diversity filter.

Each iteration mutates members of a score-selected population into a batch,
scores the batch with the current activity model, and routes survivors
through the diversity filter. Buckets are keyed by canonical hash and count
every generated instance above the score floor; once a bucket is full, new
distinct molecules falling within the similarity capture radius of its
representative are suppressed. Generation stops once the running best batch
mean score has not improved for `patience` straight iterations (but never
before `min_iterations`). Molecules selected in any earlier round are never
re-emitted, which keeps the arriving arm sets volatile.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fingerprint import (
    FP_DIM,
    FP_RADIUS,
    Fingerprint,
    _fingerprints_from_packed,
    jaccard_distance,
    morgan_fingerprint_batch,
)
from .molgraph import (
    CANONICAL_ITERATIONS,
    ELEMENTS,
    VALENCE,
    Molecule,
    MutationExhausted,
    PackedGraphs,
    molecule,
    mutate,
)


def evaluate_batch(mols: list[Molecule]):
    """Canonical ids and fingerprints in one packed pass; both kernels share
    the Morgan refinement, so the fingerprint rounds are reused for hashing.
    Results are bit-identical to the single-molecule operations."""
    if not mols:
        return np.zeros(0, dtype=np.uint64), []
    cached = all(m._id is not None for m in mols)
    packed = PackedGraphs(mols)
    fps, codes = _fingerprints_from_packed(packed, FP_RADIUS, FP_DIM)
    if cached:
        ids = np.array([m._id for m in mols], dtype=np.uint64)
        return ids, fps
    for _ in range(CANONICAL_ITERATIONS - FP_RADIUS):
        codes = packed.refine(codes)
    ids = packed.molecule_hashes(codes)
    for m, h in zip(mols, ids.tolist()):
        if m._id is None:
            object.__setattr__(m, "_id", h)
    return ids, fps


class GenerationStarved(Exception):
    """Too few candidates survived generation and filtering."""


@dataclass(frozen=True)
class GeneratorConfig:
    batch_size: int = 128
    min_iterations: int = 50  # desk-scale stand-in for a much longer schedule
    patience: int = 50
    bucket_size: int = 100
    min_score: float = 0.2
    min_similarity: float = 0.6
    population_size: int = 256
    max_candidates_per_cycle: int = 1000
    max_iterations: int = 200  # hard safety cap on the stopping rule


@dataclass
class CandidateSet:
    molecules: list[Molecule]
    fingerprints: list[Fingerprint]
    scores: list[float]
    mol_ids: list[int]
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.molecules)


@dataclass
class _Bucket:
    rep_fp: Fingerprint
    count: int = 0


def _maybe_captured(fp: Fingerprint, buckets, full_buckets, capture: float):
    """First full bucket whose representative is within the capture distance.

    Cheap prefilter: d(a, b) >= |total_a - total_b| / max(totals), so reps
    whose total counts differ too much cannot be within `capture`."""
    ta = fp.total
    for fb in full_buckets:
        rep = buckets[fb].rep_fp
        tb = rep.total
        hi = ta if ta > tb else tb
        if (ta - tb if ta > tb else tb - ta) >= capture * hi:
            continue
        if jaccard_distance(fp, rep) < capture:
            return fb
    return None


_VALENCE_OF = [VALENCE[el] for el in ELEMENTS]


def random_molecule(rng: np.random.Generator) -> Molecule:
    """Unguided sampler used to bootstrap training data and to seed empty
    generator populations.

    Composition first: a random subset of the element alphabet with Dirichlet
    mixture weights and a size drawn small-heavy, then a random connected
    graph over that composition (spanning tree plus a few ring closures and
    bond-order upgrades). Infeasible compositions are redrawn.
    """
    for _ in range(64):
        present = rng.random(len(ELEMENTS)) < 0.4
        if not present.any():
            present[0] = True
        idx = np.flatnonzero(present)
        weights = np.zeros(len(ELEMENTS))
        weights[idx] = rng.dirichlet([0.8] * len(idx))
        if rng.random() < 0.7:
            size = int(rng.integers(4, 21))
        else:
            size = int(rng.integers(21, 51))
        counts = rng.multinomial(size, weights)

        # high-valence atoms first so the spanning tree always finds a host
        atoms = []
        for e in np.argsort(-np.array(_VALENCE_OF), kind="stable"):
            atoms.extend([ELEMENTS[int(e)]] * int(counts[int(e)]))
        free = [VALENCE[el] for el in atoms]
        bonds = []
        feasible = True
        for k in range(1, size):
            hosts = [a for a in range(k) if free[a] >= 1]
            if not hosts:
                feasible = False
                break
            host = hosts[int(rng.integers(len(hosts)))]
            bonds.append((host, k, 1))
            free[host] -= 1
            free[k] -= 1
        if not feasible:
            continue

        adjacent = {(i, j) for i, j, _ in bonds}
        for _ in range(int(rng.integers(0, 3))):  # ring closures
            open_atoms = [a for a in range(size) if free[a] >= 1]
            if len(open_atoms) < 2:
                break
            i = open_atoms[int(rng.integers(len(open_atoms)))]
            j = open_atoms[int(rng.integers(len(open_atoms)))]
            pair = (min(i, j), max(i, j))
            if i == j or pair in adjacent:
                continue
            bonds.append((pair[0], pair[1], 1))
            adjacent.add(pair)
            free[i] -= 1
            free[j] -= 1
        for _ in range(int(rng.integers(0, 4))):  # bond-order upgrades
            if not bonds:
                break
            k = int(rng.integers(len(bonds)))
            i, j, order = bonds[k]
            if order < 3 and free[i] >= 1 and free[j] >= 1:
                bonds[k] = (i, j, order + 1)
                free[i] -= 1
                free[j] -= 1
        return molecule(atoms, bonds)
    raise MutationExhausted("no feasible random composition in 64 draws")


def generate_candidates(
    score_fn,
    seeds: list[Molecule],
    blacklist: set[int],
    cfg: GeneratorConfig,
    rng: np.random.Generator,
    min_required: int,
) -> CandidateSet:
    """Produce the round's candidate set.

    score_fn maps a list of fingerprints to scores in [0, 1]. seeds prime
    the mutation population (bootstrap molecules on the first cycle, the
    previous cycle's top candidates afterwards). blacklist holds canonical
    hashes of every molecule selected in any earlier round; none of them is
    emitted again. Raises GenerationStarved when fewer than min_required
    candidates survive.
    """
    population: list[tuple[Molecule, float]] = []
    if seeds:
        fps = morgan_fingerprint_batch(seeds)
        for mol, s in zip(seeds, score_fn(fps)):
            population.append((mol, float(s)))
    else:
        mols = [random_molecule(rng) for _ in range(min(cfg.batch_size, cfg.population_size))]
        fps = morgan_fingerprint_batch(mols)
        for mol, s in zip(mols, score_fn(fps)):
            population.append((mol, float(s)))

    accepted: dict[int, tuple[Molecule, Fingerprint, float]] = {}
    accepted_order: list[int] = []
    buckets: list[_Bucket] = []
    bucket_of: dict[int, int] = {}
    full_buckets: list[int] = []

    best_mean = -np.inf
    streak = 0
    iterations = 0
    rejected = 0

    while True:
        iterations += 1
        batch: list[Molecule] = []
        for _ in range(cfg.batch_size):
            parent = population[int(rng.integers(len(population)))][0]
            try:
                batch.append(mutate(parent, rng))
            except MutationExhausted:
                batch.append(parent)
        ids_arr, fps = evaluate_batch(batch)
        ids = ids_arr.tolist()
        scores = np.asarray(score_fn(fps), dtype=np.float64)

        for mol, fp, s, mid in zip(batch, fps, scores.tolist(), ids):
            if s < cfg.min_score:
                rejected += 1
                continue
            bi = bucket_of.get(mid)
            if bi is None:
                # similarity capture applies to full buckets only
                bi = _maybe_captured(fp, buckets, full_buckets, 1.0 - cfg.min_similarity)
                if bi is None:
                    bi = len(buckets)
                    buckets.append(_Bucket(rep_fp=fp))
                bucket_of[mid] = bi
            bucket = buckets[bi]
            was_full = bucket.count >= cfg.bucket_size
            bucket.count += 1
            if not was_full and bucket.count >= cfg.bucket_size:
                full_buckets.append(bi)
            if was_full:
                rejected += 1
                continue
            if mid in blacklist or mid in accepted:
                continue
            accepted[mid] = (mol, fp, s)
            accepted_order.append(mid)

        # next population: top half by score plus an evenly spaced sample of
        # the rest, so selection pressure never collapses the gene pool
        merged = population + list(zip(batch, scores.tolist()))
        merged.sort(key=lambda p: -p[1])
        if len(merged) <= cfg.population_size:
            population = merged
        else:
            half = cfg.population_size // 2
            population = merged[:half]
            tail = merged[half:]
            rest = cfg.population_size - half
            stride = len(tail) / rest
            population.extend(tail[int(i * stride)] for i in range(rest))

        mean = float(scores.mean())
        if mean > best_mean + 1e-9:  # float-noise gains do not reset patience
            best_mean = mean
            streak = 0
        else:
            streak += 1
        if iterations >= cfg.min_iterations and streak >= cfg.patience:
            break
        if iterations >= cfg.max_iterations:
            break

    if len(accepted) < min_required:
        raise GenerationStarved(
            f"{len(accepted)} candidates after {iterations} iterations, need {min_required}"
        )

    # cap by a recency-dense subsample of the acceptance order (quadratic
    # spacing): the arriving set mostly reflects the converged end of the
    # generation trajectory, with a thin slice of the early exploration
    if len(accepted_order) > cfg.max_candidates_per_cycle:
        cap = cfg.max_candidates_per_cycle
        n_acc = len(accepted_order)
        keep = []
        prev = -1
        for i in range(cap):
            idx = int(((i + 1) / cap) ** 2 * (n_acc - 1))
            if idx <= prev:
                idx = prev + 1
            keep.append(accepted_order[idx])
            prev = idx
    else:
        keep = accepted_order

    mols = [accepted[m][0] for m in keep]
    fps = [accepted[m][1] for m in keep]
    scs = [accepted[m][2] for m in keep]
    return CandidateSet(
        molecules=mols,
        fingerprints=fps,
        scores=scs,
        mol_ids=list(keep),
        stats={
            "iterations": iterations,
            "rejected": rejected,
            "buckets": len(buckets),
            "accepted_total": len(accepted),
        },
    )


def relaxed(cfg: GeneratorConfig) -> GeneratorConfig:
    """Starvation fallback: drop the score floor for one cycle."""
    return replace(cfg, min_score=0.0)
