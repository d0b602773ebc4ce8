"""
Evaluating strategies end to end
================================

"""

from relm.corpus import CssConfig, corpus_from_records
from relm.encoder import EncoderConfig, TrainingHyper, train_contrastive
from relm.evaluation import (
    build_report,
    compare_strategies,
    confidence_split,
    hit_at_k,
    rank_correlation_report,
)
from relm.lmclient import BackendConfig, BackendKind, Pipeline, run_dataset
from relm.molgraph import FeatureConfig
from relm.prompt import PromptConfig, Strategy, StrategyKind
from relm.synthetic import synthetic_reactions

feature_cfg = FeatureConfig()
records = synthetic_reactions(50, seed=0)

# Train the encoder briefly so retrieval is meaningfully better than
# chance; 60 epochs is enough to see the ceiling rise.
result = train_contrastive(
    [(r.reactants, r.products) for r in records],
    EncoderConfig(feature_dim=feature_cfg.feature_dim, embed_dim=16),
    feature_cfg,
    TrainingHyper(margin=1.0, learning_rate=0.05, epochs=60, seed=0),
)
weights = result.weights
print(f"loss {result.loss_trace[0]:.3f} -> {result.loss_trace[-1]:.3f}")

corpus = corpus_from_records(records, weights, feature_cfg)
print("hit@1:", hit_at_k(records, corpus, weights, feature_cfg, 1))
print("hit@4:", hit_at_k(records, corpus, weights, feature_cfg, 4))

# The oracle backend reads the answer key: it bounds what any real
# model could score with this retrieval stage (exactly hit@K).
prompt_cfg = PromptConfig(
    strategy=Strategy(StrategyKind.FINE_GRAINED_CSS), k=4, n=3, css=CssConfig()
)
backend = BackendConfig(kind=BackendKind.ORACLE)
pipeline = Pipeline(corpus, records, weights, feature_cfg, prompt_cfg, backend, seed=0)
results = run_dataset(pipeline, records, max_concurrency=4)
report = build_report(results, records, corpus, weights, feature_cfg, k=4)
print("\noracle accuracy:", report.accuracy, "(equals hit@4 by construction)")
print("mean prompt tokens:", round(report.mean_tokens, 1))

# Fine-grained runs score every candidate, so each sample carries a
# whole vector and rank agreement with retrieval is measurable.
correlation = rank_correlation_report(report.outcomes)
print("rank agreement:", round(correlation.rho, 3), "on", correlation.n, "samples")

split = confidence_split(report.outcomes)
if split.high:
    print("high-confidence accuracy:", round(split.high.accuracy, 3))

# Strategy comparison over identical queries and seeds.  A 5-run vote
# over a deterministic backend cannot change any answer, only the bill.
rows = compare_strategies(
    records[:25],
    records,
    corpus,
    weights,
    feature_cfg,
    prompt_cfg,
    backend,
    [Strategy(StrategyKind.PLAIN), Strategy(StrategyKind.CSS), Strategy.mes(runs=5)],
)
print()
print(f"{'strategy':>12}  {'acc':>6}  {'tokens':>8}")
for row in rows:
    print(f"{row.strategy:>12}  {row.accuracy:6.3f}  {row.mean_tokens:8.1f}")
