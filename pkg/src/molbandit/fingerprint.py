"""Morgan-style count fingerprints and the Jaccard dissimilarity space.

Each atom emits one hashed environment per neighborhood radius 0..R, folded
modulo the fingerprint width; counts accumulate per folded dimension. An
environment at radius r >= 1 is only emitted while the atom's r-hop
neighborhood is still growing, so an isolated atom contributes exactly its
radius-0 environment. The generalized Jaccard distance over count vectors,
1 - sum(min) / sum(max), is a metric with diameter <= 1.
"""

from __future__ import annotations

import numpy as np

from .molgraph import Molecule, PackedGraphs

FP_RADIUS = 2
FP_DIM = 2048


class Fingerprint:
    """Sparse non-negative count vector (dimension index -> count >= 1)."""

    __slots__ = ("counts", "total", "_row")

    def __init__(self, counts: dict[int, int]):
        self.counts = counts
        self.total = sum(counts.values())
        self._row = None  # cached (indices, data) arrays for matrix builds

    def row(self):
        if self._row is None:
            items = sorted(self.counts.items())
            self._row = (
                np.array([d for d, _ in items], dtype=np.int64),
                np.array([c for _, c in items], dtype=np.float64),
            )
        return self._row

    def __eq__(self, other):
        return isinstance(other, Fingerprint) and self.counts == other.counts

    def __len__(self):
        return len(self.counts)

    def __repr__(self):
        return f"Fingerprint({self.counts!r})"


def _fingerprints_from_packed(packed: PackedGraphs, radius: int, dim: int):
    """Fingerprints from a packed batch; returns (fingerprints, codes after
    `radius` refinement rounds) so callers can keep refining for hashing."""
    n_total = packed.n_total
    codes = packed.initial_codes()
    emitted = [codes[:n_total] % np.uint64(dim)]
    masks = [np.ones(n_total, dtype=bool)]

    # r-hop reachability as per-atom bitmasks (local index bits; MAX_ATOMS <= 64)
    local = np.arange(n_total, dtype=np.uint64)
    local -= np.repeat(packed.offsets[:-1], packed.sizes).astype(np.uint64)
    reach = np.zeros(n_total + 1, dtype=np.uint64)
    reach[:n_total] = np.uint64(1) << local

    for _ in range(radius):
        nbr_reach = reach[packed.nbr_idx]  # sentinel slot contributes 0 bits
        new_reach = reach.copy()
        new_reach[:n_total] = reach[:n_total] | np.bitwise_or.reduce(nbr_reach, axis=1)
        grew = new_reach[:n_total] != reach[:n_total]
        codes = packed.refine(codes)
        emitted.append(codes[:n_total] % np.uint64(dim))
        masks.append(grew)
        reach = new_reach

    dims = np.stack(emitted, axis=1).astype(np.int64)  # (n_total, radius+1)
    keep = np.stack(masks, axis=1)

    # aggregate (molecule, dim) -> count in one pass over all emissions
    mol_of_atom = np.repeat(np.arange(len(packed.mols), dtype=np.int64), packed.sizes)
    mol_ids = np.repeat(mol_of_atom, radius + 1).reshape(-1, radius + 1)[keep]
    flat_dims = dims[keep]
    combo, counts = np.unique(mol_ids * dim + flat_dims, return_counts=True)
    owner = combo // dim
    dim_idx = combo % dim
    bounds = np.searchsorted(owner, np.arange(len(packed.mols) + 1))

    out = []
    for k in range(len(packed.mols)):
        lo, hi = int(bounds[k]), int(bounds[k + 1])
        out.append(
            Fingerprint(dict(zip(dim_idx[lo:hi].tolist(), counts[lo:hi].tolist())))
        )
    return out, codes


def morgan_fingerprint_batch(mols, radius: int = FP_RADIUS, dim: int = FP_DIM):
    """Fingerprints for a list of molecules in one vectorized pass."""
    mols = list(mols)
    if not mols:
        return []
    fps, _ = _fingerprints_from_packed(PackedGraphs(mols), radius, dim)
    return fps


def morgan_fingerprint(mol: Molecule, radius: int = FP_RADIUS, dim: int = FP_DIM) -> Fingerprint:
    return morgan_fingerprint_batch([mol], radius=radius, dim=dim)[0]


def jaccard_distance(a: Fingerprint, b: Fingerprint) -> float:
    """Generalized Jaccard distance on counts; d(empty, empty) is 0."""
    if a.total == 0 and b.total == 0:
        return 0.0
    small, big = (a.counts, b.counts) if len(a.counts) <= len(b.counts) else (b.counts, a.counts)
    s_min = 0
    for k, v in small.items():
        w = big.get(k)
        if w is not None:
            s_min += v if v < w else w
    return 1.0 - s_min / (a.total + b.total - s_min)


def to_text(fp: Fingerprint) -> str:
    """'dim:count' pairs, comma-separated, sorted by dimension."""
    return ",".join(f"{d}:{c}" for d, c in sorted(fp.counts.items()))


def from_text(text: str) -> Fingerprint:
    counts: dict[int, int] = {}
    text = text.strip()
    if text:
        for item in text.split(","):
            d, c = item.split(":")
            counts[int(d)] = int(c)
    return Fingerprint(counts)


def fingerprint_digest(fp: Fingerprint) -> int:
    """Order-independent 64-bit digest of a fingerprint (for ball dumps)."""
    from .molgraph import mix64, splitmix64

    acc = 0
    for d, c in fp.counts.items():
        acc = (acc + splitmix64(mix64(d, c))) & ((1 << 64) - 1)
    return mix64(0x5A1CF1D0DE57A917, acc)
