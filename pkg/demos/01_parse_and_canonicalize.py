"""
Parsing SMILES into molecular graphs
====================================

"""

from relm.molgraph import canonical_key, parse_smiles, serialize

# A SMILES string is a linear spelling of a molecular graph.  Parsing
# "CCO" (ethanol) gives one graph with three heavy atoms.
(ethanol,) = parse_smiles("CCO")
print("ethanol:", ethanol.num_atoms, "atoms,", ethanol.num_bonds, "bonds")
for bond in ethanol.bonds:
    print("  bond", bond.a, "-", bond.b, bond.order.name.lower())

# Dots separate disconnected components: one string, two molecules.
salt = parse_smiles("[Na+].[O-]C(=O)C")
print("salt components:", [g.num_atoms for g in salt])

# The same molecule can be spelled from either end, or with a ring
# traversal started anywhere.  The canonical key is a structure hash
# that ignores atom order and spelling, so all spellings collide.
(toluene_a,) = parse_smiles("Cc1ccccc1")
(toluene_b,) = parse_smiles("c1ccccc1C")
print("toluene key A:", canonical_key(toluene_a)[:32], "...")
print("toluene key B:", canonical_key(toluene_b)[:32], "...")
print("same molecule:", canonical_key(toluene_a) == canonical_key(toluene_b))

# A genuinely different molecule gets a different key.  Note that the
# aromatic flag is part of the structure: lowercase benzene and its
# alternating-double-bond spelling are distinct graphs here.
(benzene,) = parse_smiles("c1ccccc1")
(pyridine,) = parse_smiles("c1ccncc1")
(kekule,) = parse_smiles("C1=CC=CC=C1")
print("pyridine differs:", canonical_key(pyridine) != canonical_key(benzene))
print("kekule form is its own graph:", canonical_key(kekule) != canonical_key(benzene))

# Graphs can be written back out; the round trip preserves structure,
# not the original spelling.
print("ethanol rewritten:", serialize(ethanol))
(again,) = parse_smiles(serialize(ethanol))
print("round trip stable:", canonical_key(again) == canonical_key(ethanol))
