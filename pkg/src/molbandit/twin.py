"""Test-side digital twin: ground-truth activity oracle, assay noise, the
trivial make step, and the initial labeled-set bootstrap.

Activity is decided by element-count ratios. A molecule is active iff at
least two of (carbon, nitrogen, oxygen) counts are nonzero and every ratio
condition among the nonzero pairs holds. Ratio bounds are compared in exact
rational arithmetic so boundary counts land on the active side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .molgraph import AtomCounts, Molecule, canonical_hash_batch, count_atoms, is_valid


class BootstrapExhausted(Exception):
    """Sampling budget ran out before the label quotas were filled."""


def _as_fraction(x) -> Fraction:
    # str() of a float is its shortest decimal repr, so 5.67 -> 567/100 exactly
    return Fraction(str(x))


@dataclass(frozen=True)
class GroundTruthConfig:
    co_lo: float = 5.5
    co_hi: float = 5.67
    cn_lo: float = 7.0
    cn_hi: float = 7.39
    on_lo: float = 1.18
    on_hi: float = 1.34
    flip_prob: float = 0.01
    _bounds: tuple = field(init=False, compare=False, repr=False, default=None)

    def __post_init__(self):
        pairs = ((self.co_lo, self.co_hi), (self.cn_lo, self.cn_hi), (self.on_lo, self.on_hi))
        for lo, hi in pairs:
            if lo > hi:
                raise ValueError(f"ratio bound lo {lo} > hi {hi}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob {self.flip_prob} outside [0, 1]")
        object.__setattr__(
            self,
            "_bounds",
            tuple((_as_fraction(lo), _as_fraction(hi)) for lo, hi in pairs),
        )


def true_activity(counts: AtomCounts, cfg: GroundTruthConfig = GroundTruthConfig()) -> int:
    """1 iff >= 2 of (C, N, O) counts are nonzero and every ratio bound among
    the nonzero pairs holds (bounds inclusive)."""
    c, n, o = int(counts.n_c), int(counts.n_n), int(counts.n_o)
    if (c > 0) + (n > 0) + (o > 0) < 2:
        return 0
    (co_lo, co_hi), (cn_lo, cn_hi), (on_lo, on_hi) = cfg._bounds
    checks = ((c, o, co_lo, co_hi), (c, n, cn_lo, cn_hi), (o, n, on_lo, on_hi))
    for num, den, lo, hi in checks:
        if num > 0 and den > 0:
            ratio = Fraction(num, den)
            if not lo <= ratio <= hi:
                return 0
    return 1


def noisy_test(label: int, rng: np.random.Generator, cfg: GroundTruthConfig) -> int:
    """Flip the label with probability cfg.flip_prob; consumes one rng draw."""
    return (1 - label) if rng.random() < cfg.flip_prob else label


def expected_reward(true_label: int, cfg: GroundTruthConfig) -> float:
    """Flip-adjusted mean reward of an arm with the given true label."""
    p = cfg.flip_prob
    return true_label * (1.0 - 2.0 * p) + p


class MakeLedger:
    """Synthesis always succeeds at unit cost; only the count is kept."""

    def __init__(self):
        self.count = 0

    def make(self, mol: Molecule) -> bool:
        self.count += 1
        return True


@dataclass(frozen=True)
class BootstrapRecord:
    molecule: Molecule
    mol_id: int
    true_label: int
    observed_label: int


_BOOTSTRAP_CHUNK = 64


def bootstrap_initial(
    sample_fn,
    cfg: GroundTruthConfig,
    rng: np.random.Generator,
    n_active: int = 20,
    n_inactive: int = 100,
    max_attempts: int = 10**6,
) -> list[BootstrapRecord]:
    """Sample molecules (uniform scores, no model guidance) until exactly
    n_active true-actives and n_inactive true-inactives are collected.

    Duplicates by canonical hash are discarded. True labels decide quota
    membership; the stored observed label is the noisy test outcome.
    """
    got_active = 0
    got_inactive = 0
    seen: set[int] = set()
    out: list[BootstrapRecord] = []
    attempts = 0
    while got_active < n_active or got_inactive < n_inactive:
        chunk = min(_BOOTSTRAP_CHUNK, max_attempts - attempts)
        if chunk <= 0:
            raise BootstrapExhausted(
                f"{max_attempts} attempts; have {got_active}/{n_active} active, "
                f"{got_inactive}/{n_inactive} inactive"
            )
        mols = [sample_fn(rng) for _ in range(chunk)]
        attempts += chunk
        ids = canonical_hash_batch(mols)
        for mol, mid in zip(mols, ids.tolist()):
            if mid in seen or not is_valid(mol):
                continue
            label = true_activity(count_atoms(mol), cfg)
            if label == 1:
                if got_active >= n_active:
                    continue
                got_active += 1
            else:
                if got_inactive >= n_inactive:
                    continue
                got_inactive += 1
            seen.add(mid)
            out.append(BootstrapRecord(mol, mid, label, noisy_test(label, rng, cfg)))
            if got_active >= n_active and got_inactive >= n_inactive:
                break
    return out
