"""
Building a product corpus and retrieving candidates
===================================================

Prediction here is ranking: every known product set is embedded once
into a corpus, and a query's reactants pull out the K nearest entries.
The fraction of queries whose truth survives that cut (hit@K) is the
hard ceiling on anything a re-ranker can score later.
"""

from relm.corpus import corpus_from_records, top_k_candidates
from relm.encoder import EncoderConfig, random_init
from relm.evaluation import hit_at_k
from relm.molgraph import FeatureConfig
from relm.synthetic import synthetic_reactions

feature_cfg = FeatureConfig()
weights = random_init(
    EncoderConfig(feature_dim=feature_cfg.feature_dim, embed_dim=16), seed=0
)

# A reproducible toy world: reactions whose products are fragments or
# rearrangements of their reactants.
records = synthetic_reactions(60, seed=7)
print("reactions:", len(records))
print("sample:", records[0].reactants, "->", records[0].products)

# Product sets with identical structure collapse into one corpus entry
# that remembers every contributing reaction id.
corpus = corpus_from_records(records, weights, feature_cfg)
print("corpus entries:", len(corpus.entries))
print("fingerprint:", corpus.fingerprint[:16], "(ties the index to the weights)")

# Retrieve candidates for one query.  Entries come back sorted by
# distance; ties break on entry id so results never depend on scan order.
query = records[5]
candidates = top_k_candidates(query.reactant_graphs(), corpus, 4, weights, feature_cfg)
print("\nquery:", query.reactants)
for position, candidate in enumerate(candidates.entries):
    marker = "<- truth" if candidate.keys == query.product_key() else ""
    print(f"  {position + 1}. d={candidate.distance:7.3f} {candidate.products} {marker}")

# The ceiling curve: growing K can only help, and K = all entries is
# always a hit when every truth is somewhere in the corpus.
print("\nceiling curve (untrained weights):")
for k in (1, 2, 4, 8, 16, len(corpus.entries)):
    print(f"  hit@{k:<3d} = {hit_at_k(records, corpus, weights, feature_cfg, k):.3f}")
