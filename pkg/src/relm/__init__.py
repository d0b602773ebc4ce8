"""Retrieve-and-rerank reaction product prediction.

A molecular-graph encoder embeds reactant sets and ranks candidate
products out of a fixed corpus by Euclidean distance; a language model
then re-ranks the top candidates through structured multiple-choice
prompts with confidence scoring.  Submodules:

* molgraph    - SMILES subset reader/writer, structural keys, features
* encoder     - graph neural network, weight files, contrastive training
* corpus      - product index, retrieval, in-context example assembly
* prompt      - prompt strategies and template rendering
* lmclient    - language model backends, answer parsing, the predict loop
* evaluation  - metrics, rank-correlation and confidence reports
* cli         - command-line entry points
* synthetic   - deterministic toy reaction generator
"""

__version__ = "0.1.0"
