import numpy as np
import pytest

from molbandit.molgraph import Molecule, molecule


def relabel(mol: Molecule, rng: np.random.Generator) -> Molecule:
    """Random permutation of atom indices (same graph, new labels)."""
    n = mol.n_atoms
    perm = rng.permutation(n)
    atoms = [None] * n
    for old, el in enumerate(mol.atoms):
        atoms[perm[old]] = el
    bonds = [(int(perm[i]), int(perm[j]), o) for i, j, o in mol.bonds]
    return molecule(atoms, bonds)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def chain_c3():
    return molecule(["C", "C", "C"], [(0, 1, 1), (1, 2, 1)])
