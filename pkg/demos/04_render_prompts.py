"""
Rendering multiple-choice prompts
=================================

"""

from relm.corpus import CssConfig, corpus_from_records
from relm.encoder import EncoderConfig, random_init
from relm.lmclient import BackendConfig, BackendKind, Pipeline, estimate_tokens
from relm.molgraph import FeatureConfig
from relm.prompt import PromptConfig, Strategy, StrategyKind
from relm.synthetic import synthetic_reactions

feature_cfg = FeatureConfig()
weights = random_init(
    EncoderConfig(feature_dim=feature_cfg.feature_dim, embed_dim=8), seed=1
)
train = synthetic_reactions(20, seed=40)
corpus = corpus_from_records(train, weights, feature_cfg)
backend = BackendConfig(kind=BackendKind.ORACLE)  # never called while rendering


def pipeline_for(strategy, n=2):
    cfg = PromptConfig(strategy=strategy, k=4, n=n, css=CssConfig())
    return Pipeline(corpus, train, weights, feature_cfg, cfg, backend, seed=0)


query = train[3]

# The plain strategy: a few solved examples, then the query with its
# retrieved candidates as lettered options.
prompt = pipeline_for(Strategy(StrategyKind.PLAIN)).render_prompt(query)
print(prompt.text)
print("~" * 60)
print("answer schema:", prompt.answer_schema.value)
print("letters:", prompt.letters)
print("token estimate:", estimate_tokens(prompt))

# The confidence strategy decorates each example with a 1-9 score and
# deliberately distorts one of them: its shown answer is wrong and its
# score is drawn from the low set.  The model learns to report its own
# confidence the same way.
css_prompt = pipeline_for(Strategy(StrategyKind.CSS), n=3).render_prompt(query)
confidences = [
    int(line.split()[-1])
    for line in css_prompt.text.splitlines()
    if line.startswith("Confidence:") and line.split()[-1].isdigit()
]
print("\nexample confidences (one deliberately low):", confidences)

# Rendering is pure: same query, same bytes, every time.
again = pipeline_for(Strategy(StrategyKind.CSS), n=3).render_prompt(query)
print("byte stable:", again.text == css_prompt.text)

# Strategies parse from compact labels; an ensemble wrapper multiplies
# a base strategy by a run count.
for label in ("plain", "zero_shot", "css", "mes:css:5"):
    strategy = Strategy.parse(label)
    print(f"{label:>10} -> kind={strategy.kind.value} runs={strategy.runs}")
