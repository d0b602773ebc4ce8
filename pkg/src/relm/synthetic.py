"""Deterministic toy reaction generator.

Reactions are built backwards: a random product molecule is generated
first, then one of its cuttable bonds is removed and the two fragments
become the reactants (a synthesis reaction), or a ring bond is removed
for a single-reactant rearrangement.  Atom multisets are therefore
conserved, which gives retrieval a real signal to learn.  Everything is
driven by one stdlib random.Random seed.
"""

from __future__ import annotations

import random
from typing import Sequence

from .corpus import ReactionRecord
from .molgraph import Atom, Bond, BondOrder, MolecularGraph, serialize

_ELEMENTS = ["C", "C", "C", "C", "C", "C", "N", "N", "O", "O", "S", "F", "Cl", "Br"]
_CHAIN_BONDS = [
    BondOrder.SINGLE,
    BondOrder.SINGLE,
    BondOrder.SINGLE,
    BondOrder.SINGLE,
    BondOrder.DOUBLE,
]
_CONDITIONS = [
    "heated to reflux in THF",
    "stirred at room temperature",
    "Pd catalyst, 80 C",
    "aqueous NaOH, 0 C",
    "UV light, neat",
    None,
]
_REACTION_TYPES = [
    "coupling",
    "condensation",
    "substitution",
    "addition",
    "rearrangement",
    None,
]


def random_molecule(
    rng: random.Random, min_atoms: int = 2, max_atoms: int = 8
) -> MolecularGraph:
    """Random connected molecule: a bonded tree, sometimes with a ring."""
    if rng.random() < 0.25 and max_atoms >= 6:
        return _aromatic_ring_molecule(rng, max_atoms)
    n = rng.randint(min_atoms, max_atoms)
    atoms = tuple(Atom(element=rng.choice(_ELEMENTS)) for _ in range(n))
    bonds = []
    pairs = set()
    for i in range(1, n):
        j = rng.randrange(i)
        bonds.append(Bond(j, i, rng.choice(_CHAIN_BONDS)))
        pairs.add(frozenset((i, j)))
    if n >= 4 and rng.random() < 0.3:
        for _ in range(4):
            a, b = rng.randrange(n), rng.randrange(n)
            if a != b and frozenset((a, b)) not in pairs:
                bonds.append(Bond(a, b, BondOrder.SINGLE))
                break
    return MolecularGraph(atoms=atoms, bonds=tuple(bonds))


def _aromatic_ring_molecule(rng: random.Random, max_atoms: int) -> MolecularGraph:
    ring_size = rng.choice([5, 6])
    atoms = [
        Atom(element=rng.choice(["C", "C", "C", "C", "N"]), aromatic=True)
        for _ in range(ring_size)
    ]
    bonds = [
        Bond(i, (i + 1) % ring_size, BondOrder.AROMATIC) for i in range(ring_size)
    ]
    extra = rng.randint(0, max(0, max_atoms - ring_size))
    for _ in range(extra):
        anchor = rng.randrange(len(atoms))
        atoms.append(Atom(element=rng.choice(["C", "N", "O", "F", "Cl"])))
        bonds.append(Bond(anchor, len(atoms) - 1, BondOrder.SINGLE))
    return MolecularGraph(atoms=tuple(atoms), bonds=tuple(bonds))


def _components(n: int, bonds: Sequence[Bond]) -> list[list[int]]:
    adjacency: dict[int, list[int]] = {i: [] for i in range(n)}
    for bond in bonds:
        adjacency[bond.a].append(bond.b)
        adjacency[bond.b].append(bond.a)
    seen: set[int] = set()
    components = []
    for start in range(n):
        if start in seen:
            continue
        stack = [start]
        group = []
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            group.append(node)
            stack.extend(adjacency[node])
        components.append(sorted(group))
    return components


def _fragment(graph: MolecularGraph, drop: Bond) -> list[MolecularGraph]:
    """Split ``graph`` by removing one bond; one graph per component."""
    remaining = tuple(b for b in graph.bonds if b is not drop)
    out = []
    for component in _components(graph.num_atoms, remaining):
        index = {old: new for new, old in enumerate(component)}
        atoms = tuple(graph.atoms[i] for i in component)
        bonds = tuple(
            Bond(index[b.a], index[b.b], b.order)
            for b in remaining
            if b.a in index and b.b in index
        )
        out.append(MolecularGraph(atoms=atoms, bonds=bonds))
    return out


def synthetic_reactions(
    count: int, seed: int = 0, min_atoms: int = 5, max_atoms: int = 10
) -> list[ReactionRecord]:
    """Generate ``count`` toy reactions, deterministically from ``seed``."""
    rng = random.Random(seed)
    records = []
    for index in range(count):
        product = random_molecule(rng, min_atoms=min_atoms, max_atoms=max_atoms)
        cut = rng.choice(product.bonds)
        fragments = _fragment(product, cut)
        reactants = [serialize(g) for g in fragments]
        if rng.random() < 0.2:
            reactants.append(rng.choice(["O", "[Na+]", "ClCl", "O=C=O"]))
        records.append(
            ReactionRecord(
                id=f"rxn-{index:04d}",
                reactants=tuple(reactants),
                products=(serialize(product),),
                condition=rng.choice(_CONDITIONS),
                reaction_type=rng.choice(_REACTION_TYPES),
            )
        )
    return records
