"""
Embedding molecules with the graph encoder
==========================================

A small message-passing network turns each molecular graph into a
fixed-size vector.  Molecule sets embed as the sum of their members,
so a whole reactant side is one vector too.
"""

import numpy as np

from relm.encoder import EncoderConfig, embed_molecule, embed_set, random_init
from relm.molgraph import FeatureConfig, parse_smiles

feature_cfg = FeatureConfig()
print("per-atom feature width:", feature_cfg.feature_dim)

# Untrained random weights already give a usable structural signature.
config = EncoderConfig(feature_dim=feature_cfg.feature_dim, embed_dim=8)
weights = random_init(config, seed=0)

(ethanol,) = parse_smiles("CCO")
(acetic,) = parse_smiles("CC(=O)O")
e1 = embed_molecule(ethanol, weights, feature_cfg)
e2 = embed_molecule(acetic, weights, feature_cfg)
print("ethanol embedding:", np.round(e1.values, 3))
print("acetic  embedding:", np.round(e2.values, 3))

# Atom numbering is an artifact of the input string; shuffling it does
# not move the embedding.
(backwards,) = parse_smiles("OCC")
drift = np.abs(embed_molecule(backwards, weights, feature_cfg).values - e1.values)
print("max drift under re-spelling:", float(drift.max()))

# A set of molecules embeds additively, member by member.
both = embed_set([ethanol, acetic], weights, feature_cfg)
print("set == sum of members:", np.array_equal(both.values, e1.values + e2.values))

# Similar structures land near each other even before any training;
# compare chain alcohols against an unrelated aromatic ring.
(propanol,) = parse_smiles("CCCO")
(benzene,) = parse_smiles("c1ccccc1")


def dist(a, b):
    return float(np.linalg.norm(a.values - b.values))


p = embed_molecule(propanol, weights, feature_cfg)
b = embed_molecule(benzene, weights, feature_cfg)
print("ethanol -> propanol:", round(dist(e1, p), 3))
print("ethanol -> benzene :", round(dist(e1, b), 3))
