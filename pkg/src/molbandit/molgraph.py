"""Small molecular graphs: validity checking, atom counts, canonical hashing,
and single-edit mutations.

Molecules are hydrogen-implicit graphs over a fixed element set with integer
bond orders. The canonical id is a 64-bit hash of an 8-round Morgan-style
neighborhood refinement; it is invariant under atom relabeling and is used
for deduplication only (collisions are tolerated, not corrected).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

VALENCE = {"C": 4, "N": 3, "O": 2, "S": 2, "F": 1, "Cl": 1}
ELEMENTS = tuple(sorted(VALENCE))
MAX_ATOMS = 60
MAX_DEGREE = 4  # capped by the largest valence

_ELEM_CODE = {el: i + 1 for i, el in enumerate(ELEMENTS)}

_MASK64 = (1 << 64) - 1
_SM_GAMMA = 0x9E3779B97F4A7C15
_SM_MUL1 = 0xBF58476D1CE4E5B9
_SM_MUL2 = 0x94D049BB133111EB

# domain-separation salts for the hash streams
_ATOM_SALT = 0x61F4C2B19E3D5A07
_PAIR_SALT = 0x3C6EF372FE94F82A
_EDGE_SALT = 0xD1B54A32D192ED03
_MOL_SALT = 0x8CB92BA72F3D8DD7


class MutationExhausted(Exception):
    """No valid single edit was found within the attempt budget."""


def splitmix64(x: int) -> int:
    """One splitmix64 step on a 64-bit integer (scalar reference)."""
    z = (x + _SM_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _SM_MUL1) & _MASK64
    z = ((z ^ (z >> 27)) * _SM_MUL2) & _MASK64
    return z ^ (z >> 31)


def mix64(h: int, v: int) -> int:
    """Fold value v into running hash h."""
    return splitmix64(h ^ (v & _MASK64))


def _vsplitmix64(x: np.ndarray) -> np.ndarray:
    # vectorized splitmix64; relies on uint64 wraparound
    z = x + np.uint64(_SM_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_SM_MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_SM_MUL2)
    return z ^ (z >> np.uint64(31))


def _vmix(h, v) -> np.ndarray:
    return _vsplitmix64(np.bitwise_xor(h, v))


@dataclass(frozen=True)
class Molecule:
    """Immutable molecular graph.

    atoms: element symbols, index order defines atom ids.
    bonds: (i, j, order) triples with i < j, sorted; order in {1, 2, 3}.
    """

    atoms: tuple[str, ...]
    bonds: tuple[tuple[int, int, int], ...]
    _id: int | None = field(default=None, init=False, compare=False, repr=False)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class AtomCounts:
    n_c: int
    n_n: int
    n_o: int


def molecule(atoms, bonds=()) -> Molecule:
    """Build a Molecule, normalizing bond endpoint order and sort order."""
    norm = tuple(sorted((min(i, j), max(i, j), order) for i, j, order in bonds))
    return Molecule(tuple(atoms), norm)


def _adjacency(mol: Molecule):
    adj = [[] for _ in mol.atoms]
    for i, j, order in mol.bonds:
        adj[i].append((j, order))
        adj[j].append((i, order))
    return adj


def count_atoms(mol: Molecule) -> AtomCounts:
    """Exact carbon / nitrogen / oxygen counts."""
    c = Counter(mol.atoms)
    return AtomCounts(c["C"], c["N"], c["O"])


def validate(mol: Molecule) -> list[str]:
    """Return all invariant violations (empty list means the molecule is ok)."""
    problems = []
    n = mol.n_atoms
    if n < 1:
        return ["empty: molecule has no atoms"]
    if n > MAX_ATOMS:
        problems.append(f"size: {n} atoms exceeds cap {MAX_ATOMS}")
    for a, el in enumerate(mol.atoms):
        if el not in VALENCE:
            problems.append(f"element: unknown element {el!r} at atom {a}")
    seen_pairs = set()
    order_sum = [0] * n
    bond_ok = True
    for i, j, order in mol.bonds:
        if not (0 <= i < n and 0 <= j < n):
            problems.append(f"bond: index out of range in ({i}, {j}, {order})")
            bond_ok = False
            continue
        if i == j:
            problems.append(f"bond: self-loop at atom {i}")
            bond_ok = False
            continue
        if order not in (1, 2, 3):
            problems.append(f"bond: order {order} not in 1..3 on ({i}, {j})")
            bond_ok = False
        pair = (min(i, j), max(i, j))
        if pair in seen_pairs:
            problems.append(f"bond: duplicate bond between atoms {pair[0]} and {pair[1]}")
            bond_ok = False
        seen_pairs.add(pair)
        order_sum[i] += order
        order_sum[j] += order
    for a, el in enumerate(mol.atoms):
        cap = VALENCE.get(el)
        if cap is not None and order_sum[a] > cap:
            problems.append(f"valence: atom {a} ({el}) order sum {order_sum[a]} > cap {cap}")
    if bond_ok and n > 1:
        # BFS connectivity
        adj = _adjacency(mol)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        if len(seen) != n:
            problems.append(f"connectivity: only {len(seen)} of {n} atoms reachable")
    return problems


def is_valid(mol: Molecule) -> bool:
    return not validate(mol)


class PackedGraphs:
    """Batch of molecules flattened into numpy arrays for the hash kernels.

    Atom slot layout: one extra sentinel slot at index n_total holds code 0;
    padded neighbor entries point at it and are masked out of sums.
    """

    def __init__(self, mols):
        self.mols = list(mols)
        sizes = np.array([m.n_atoms for m in self.mols], dtype=np.int64)
        self.sizes = sizes
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        n_total = int(self.offsets[-1])
        self.n_total = n_total

        codes = _ELEM_CODE
        elem_list = []
        for mol in self.mols:
            elem_list.extend(codes[el] for el in mol.atoms)
        self.elem = np.array(elem_list, dtype=np.uint64)

        bond_counts = np.array([len(m.bonds) for m in self.mols], dtype=np.int64)
        self.bond_offsets = np.concatenate([[0], np.cumsum(bond_counts)])
        triples = []
        for k, mol in enumerate(self.mols):
            base = int(self.offsets[k])
            triples.extend((base + i, base + j, o) for i, j, o in mol.bonds)
        if triples:
            tarr = np.array(triples, dtype=np.int64)
            self.bond_i = tarr[:, 0]
            self.bond_j = tarr[:, 1]
            self.bond_ord = tarr[:, 2].astype(np.uint64)
        else:
            self.bond_i = np.zeros(0, dtype=np.int64)
            self.bond_j = np.zeros(0, dtype=np.int64)
            self.bond_ord = np.zeros(0, dtype=np.uint64)

        # directed edge lists -> padded per-atom neighbor slots, vectorized
        src = np.concatenate([self.bond_i, self.bond_j])
        dst = np.concatenate([self.bond_j, self.bond_i])
        dorder = np.concatenate([self.bond_ord, self.bond_ord])
        degree = np.bincount(src, minlength=n_total).astype(np.int64)
        order_sum = np.bincount(src, weights=dorder.astype(np.float64), minlength=n_total)

        nbr_idx = np.full((n_total, MAX_DEGREE), n_total, dtype=np.int64)
        nbr_ord = np.zeros((n_total, MAX_DEGREE), dtype=np.uint64)
        nbr_mask = np.zeros((n_total, MAX_DEGREE), dtype=np.uint64)
        if len(src):
            by_src = np.argsort(src, kind="stable")
            s_sorted = src[by_src]
            starts = np.searchsorted(s_sorted, np.arange(n_total))
            slot = np.arange(len(src)) - np.repeat(starts, degree)
            rows = s_sorted
            nbr_idx[rows, slot] = dst[by_src]
            nbr_ord[rows, slot] = dorder[by_src]
            nbr_mask[rows, slot] = 1

        self.nbr_idx = nbr_idx
        self.nbr_ord = nbr_ord
        self.nbr_mask = nbr_mask
        self.degree = degree.astype(np.uint64)
        self.order_sum = order_sum.astype(np.uint64)

    def initial_codes(self) -> np.ndarray:
        """Atom invariant: (element, degree, bond-order sum), hashed."""
        h = _vmix(np.uint64(_ATOM_SALT), self.elem)
        h = _vmix(h, self.degree)
        h = _vmix(h, self.order_sum)
        out = np.zeros(self.n_total + 1, dtype=np.uint64)  # sentinel slot stays 0
        out[: self.n_total] = h
        return out

    def refine(self, codes: np.ndarray) -> np.ndarray:
        """One Morgan round: fold the wraparound sum of hashed (order, neighbor
        code) pairs into each atom's code. Summation makes the round
        permutation-invariant without sorting."""
        nc = codes[self.nbr_idx]
        pair = _vmix(np.uint64(_PAIR_SALT), self.nbr_ord)
        pair = _vmix(pair, nc)
        pair *= self.nbr_mask
        s = pair.sum(axis=1, dtype=np.uint64)
        out = codes.copy()
        out[: self.n_total] = _vmix(codes[: self.n_total], s)
        return out

    def _segment_sum(self, values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        # wraparound-safe segmented sum (cumsum difference is exact mod 2^64)
        cs = np.zeros(len(values) + 1, dtype=np.uint64)
        np.cumsum(values, out=cs[1:])
        return cs[offsets[1:]] - cs[offsets[:-1]]

    def molecule_hashes(self, codes: np.ndarray) -> np.ndarray:
        """Combine refined atom codes and bond records into one 64-bit id per
        molecule (commutative sums, so any atom ordering hashes identically)."""
        atom_tok = _vsplitmix64(codes[: self.n_total])
        atom_sum = self._segment_sum(atom_tok, self.offsets)
        if len(self.bond_i):
            ci = codes[self.bond_i]
            cj = codes[self.bond_j]
            lo = np.minimum(ci, cj)
            hi = np.maximum(ci, cj)
            etok = _vmix(_vmix(_vmix(np.uint64(_EDGE_SALT), lo), hi), self.bond_ord)
            edge_sum = self._segment_sum(etok, self.bond_offsets)
        else:
            edge_sum = np.zeros(len(self.mols), dtype=np.uint64)
        h = _vmix(np.uint64(_MOL_SALT), self.sizes.astype(np.uint64))
        h = _vmix(h, (self.bond_offsets[1:] - self.bond_offsets[:-1]).astype(np.uint64))
        h = _vmix(h, atom_sum)
        h = _vmix(h, edge_sum)
        return h

    def refined_codes(self, iterations: int) -> np.ndarray:
        codes = self.initial_codes()
        for _ in range(iterations):
            codes = self.refine(codes)
        return codes


CANONICAL_ITERATIONS = 8


def canonical_hash_batch(mols) -> np.ndarray:
    """Canonical 64-bit ids for a batch of molecules (cached per instance)."""
    mols = list(mols)
    out = np.zeros(len(mols), dtype=np.uint64)
    missing = [k for k, m in enumerate(mols) if m._id is None]
    for k, m in enumerate(mols):
        if m._id is not None:
            out[k] = m._id
    if missing:
        packed = PackedGraphs([mols[k] for k in missing])
        hashes = packed.molecule_hashes(packed.refined_codes(CANONICAL_ITERATIONS))
        for pos, k in enumerate(missing):
            object.__setattr__(mols[k], "_id", int(hashes[pos]))
            out[k] = hashes[pos]
    return out


def canonical_hash(mol: Molecule) -> int:
    """Relabeling-invariant 64-bit id of the molecule."""
    if mol._id is None:
        canonical_hash_batch([mol])
    return mol._id


def _free_valence(mol: Molecule):
    free = [VALENCE[el] for el in mol.atoms]
    for i, j, order in mol.bonds:
        free[i] -= order
        free[j] -= order
    return free


def _bonds_without(bonds, index):
    return bonds[:index] + bonds[index + 1 :]


def _connected_without_bond(mol: Molecule, skip: int) -> bool:
    adj = [[] for _ in mol.atoms]
    for k, (i, j, _) in enumerate(mol.bonds):
        if k == skip:
            continue
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == mol.n_atoms


_EDIT_CLASSES = 6
MUTATE_MAX_ATTEMPTS = 100


def mutate(mol: Molecule, rng: np.random.Generator) -> Molecule:
    """Return a valid molecule one edit away from mol.

    Edit classes: add atom+bond, delete leaf atom, change element, change
    bond order, add ring-closing bond, remove ring bond. Each attempt draws
    a class and parameters from rng; every emitted edit is valid by
    construction (valence headroom and connectivity are checked before the
    edit is applied). Single-atom molecules only grow. Attempts whose class
    has no legal move are retried up to MUTATE_MAX_ATTEMPTS times before
    MutationExhausted is raised.
    """
    n = mol.n_atoms
    free = _free_valence(mol)
    adjacent = {(i, j) for i, j, _ in mol.bonds}
    degree = [0] * n
    for i, j, _ in mol.bonds:
        degree[i] += 1
        degree[j] += 1

    for _ in range(MUTATE_MAX_ATTEMPTS):
        edit = int(rng.integers(_EDIT_CLASSES))
        if n == 1 and edit != 0:
            continue

        if edit == 0 and n < MAX_ATOMS:  # add atom + single bond
            hosts = [a for a in range(n) if free[a] >= 1]
            if not hosts:
                continue
            host = hosts[int(rng.integers(len(hosts)))]
            el = ELEMENTS[int(rng.integers(len(ELEMENTS)))]
            return molecule(mol.atoms + (el,), mol.bonds + ((host, n, 1),))

        if edit == 1 and n > 1:  # delete a leaf atom (cannot disconnect)
            leaves = [a for a in range(n) if degree[a] == 1]
            if not leaves:
                continue
            gone = leaves[int(rng.integers(len(leaves)))]
            atoms = mol.atoms[:gone] + mol.atoms[gone + 1 :]
            bonds = tuple(
                (i - (i > gone), j - (j > gone), o)
                for i, j, o in mol.bonds
                if gone not in (i, j)
            )
            return molecule(atoms, bonds)

        if edit == 2:  # change one atom's element
            a = int(rng.integers(n))
            used = VALENCE[mol.atoms[a]] - free[a]
            options = [el for el in ELEMENTS if el != mol.atoms[a] and VALENCE[el] >= used]
            if not options:
                continue
            el = options[int(rng.integers(len(options)))]
            return molecule(mol.atoms[:a] + (el,) + mol.atoms[a + 1 :], mol.bonds)

        if edit == 3 and mol.bonds:  # change a bond order
            k = int(rng.integers(len(mol.bonds)))
            i, j, order = mol.bonds[k]
            headroom = min(free[i], free[j])
            options = [o for o in (1, 2, 3) if o != order and o - order <= headroom]
            if not options:
                continue
            o = options[int(rng.integers(len(options)))]
            return molecule(mol.atoms, _bonds_without(mol.bonds, k) + ((i, j, o),))

        if edit == 4 and n > 2:  # close a ring between two sampled open atoms
            hosts = [a for a in range(n) if free[a] >= 1]
            if len(hosts) < 2:
                continue
            i = hosts[int(rng.integers(len(hosts)))]
            j = hosts[int(rng.integers(len(hosts)))]
            if i == j:
                continue
            pair = (min(i, j), max(i, j))
            if pair in adjacent:
                continue
            return molecule(mol.atoms, mol.bonds + ((pair[0], pair[1], 1),))

        if edit == 5 and mol.bonds:  # remove a sampled bond if it sits on a cycle
            k = int(rng.integers(len(mol.bonds)))
            if not _connected_without_bond(mol, k):
                continue
            return molecule(mol.atoms, _bonds_without(mol.bonds, k))

    raise MutationExhausted(
        f"no valid edit found in {MUTATE_MAX_ATTEMPTS} attempts for {mol!r}"
    )


def to_text(mol: Molecule) -> str:
    """Line format: 'atoms <el> <el> ...' then one 'bond i j order' per bond."""
    lines = ["atoms " + " ".join(mol.atoms)]
    lines.extend(f"bond {i} {j} {o}" for i, j, o in mol.bonds)
    return "\n".join(lines)


def from_text(text: str) -> Molecule:
    atoms: list[str] = []
    bonds = []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "atoms":
            atoms = parts[1:]
        elif parts[0] == "bond":
            if len(parts) != 4:
                raise ValueError(f"line {ln}: expected 'bond i j order'")
            bonds.append((int(parts[1]), int(parts[2]), int(parts[3])))
        else:
            raise ValueError(f"line {ln}: unknown record {parts[0]!r}")
    if not atoms:
        raise ValueError("no atoms record")
    return molecule(atoms, bonds)
