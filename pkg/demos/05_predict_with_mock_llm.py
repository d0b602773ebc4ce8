"""
Running the full pipeline against scripted model output
=======================================================

No network, no key: a mock backend replays canned responses, which is
how every behavior in this package stays testable offline.  The same
pipeline takes an HTTP backend config for a real chat-completions
endpoint.
"""

from relm.corpus import CssConfig, corpus_from_records
from relm.encoder import EncoderConfig, random_init
from relm.lmclient import (
    BackendConfig,
    BackendKind,
    MockRule,
    Pipeline,
    RateLimitedExhausted,
    complete,
)
from relm.molgraph import FeatureConfig
from relm.prompt import PromptConfig, Strategy, StrategyKind
from relm.synthetic import synthetic_reactions

feature_cfg = FeatureConfig()
weights = random_init(
    EncoderConfig(feature_dim=feature_cfg.feature_dim, embed_dim=8), seed=1
)
train = synthetic_reactions(20, seed=40)
corpus = corpus_from_records(train, weights, feature_cfg)
prompt_cfg = PromptConfig(
    strategy=Strategy(StrategyKind.CSS), k=4, n=2, css=CssConfig()
)

# Script: always answer B with a middling confidence.
backend = BackendConfig(
    kind=BackendKind.MOCK,
    backoff_base_s=0.0,
    mock_script=(MockRule(match="*", response="Answer: B\nConfidence: 6"),),
)
pipeline = Pipeline(corpus, train, weights, feature_cfg, prompt_cfg, backend, seed=0)

query = train[4]
result = pipeline.predict(query)
print("query:", query.reactants)
print("chosen entry:", result.final_choice_id, result.final_products)
print("parse status:", result.parsed.parse_status.value)
print("confidence  :", result.parsed.confidence)
print("truth was at retrieval rank:", result.gnn_rank_of_truth)

# Messy output still parses when a letter can be recovered; pure noise
# falls back to the retrieval top-1 instead of crashing.
noisy = BackendConfig(
    kind=BackendKind.MOCK,
    backoff_base_s=0.0,
    mock_script=(MockRule(match="*", response="hmm, probably (C) I think"),),
)
result = Pipeline(
    corpus, train, weights, feature_cfg, prompt_cfg, noisy, seed=0
).predict(query)
print("\nnoisy reply parse:", result.parsed.parse_status.value, "-> rank", result.final_rank)

silent = BackendConfig(
    kind=BackendKind.MOCK,
    backoff_base_s=0.0,
    mock_script=(MockRule(match="*", response="no idea, sorry"),),
)
result = Pipeline(
    corpus, train, weights, feature_cfg, prompt_cfg, silent, seed=0
).predict(query)
print("unparseable reply fell back:", result.fell_back, "-> rank", result.final_rank)

# Transient failures are retried with exponential backoff; the script
# below fails twice before succeeding, so the call takes three attempts.
flaky = BackendConfig(
    kind=BackendKind.MOCK,
    backoff_base_s=0.0,
    mock_script=(MockRule(match="*", response="Answer: A", fail_times=2),),
)
prompt = pipeline.render_prompt(query)
print("\nflaky backend attempts:", complete(prompt, flaky).attempt_count)

# Exhausting the retry allowance raises an error carrying the full
# attempt transcript.
doomed = BackendConfig(
    kind=BackendKind.MOCK,
    max_retries=1,
    backoff_base_s=0.0,
    mock_script=(MockRule(match="*", response="Answer: A", fail_times=99),),
)
try:
    complete(prompt, doomed)
except RateLimitedExhausted as exc:
    print("gave up after attempts:", len(exc.attempts))
