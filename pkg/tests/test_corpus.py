"""Dataset IO, the product index, and nearest-neighbor retrieval."""

import json

import numpy as np
import pytest

from relm.corpus import (
    Candidate,
    CandidateList,
    CorpusEntry,
    DatasetError,
    DimMismatch,
    EmptyCorpus,
    FingerprintMismatch,
    ProductCorpus,
    ReactionRecord,
    ZeroNormEmbedding,
    build_index,
    check_fingerprint,
    corpus_from_records,
    cosine,
    distance,
    load_dataset,
    load_index,
    save_dataset,
    save_index,
    top_k_by_embedding,
    top_k_candidates,
)
from relm.encoder import Embedding, EncoderConfig, GnnWeights, embed_set, random_init
from relm.molgraph import FeatureConfig
from relm.synthetic import synthetic_reactions

from helpers import reference_distance

FEATURE_CFG = FeatureConfig()


def make_weights(embed_dim=8, seed=0):
    cfg = EncoderConfig(feature_dim=FEATURE_CFG.feature_dim, embed_dim=embed_dim)
    return random_init(cfg, seed=seed)


def zero_weights(embed_dim=4):
    cfg = EncoderConfig(feature_dim=FEATURE_CFG.feature_dim, embed_dim=embed_dim)
    template = random_init(cfg, seed=0)
    return GnnWeights(
        config=cfg,
        layers=[[np.zeros_like(w) for w in hops] for hops in template.layers],
    )


# ---- metrics ----


def test_distance_matches_sequential_reference():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = Embedding(rng.normal(size=6))
        b = Embedding(rng.normal(size=6))
        assert distance(a, b) == pytest.approx(
            reference_distance(a.values, b.values), rel=1e-12
        )
        assert distance(a, b) == distance(b, a)
    assert distance(Embedding(np.zeros(3)), Embedding(np.zeros(3))) == 0.0


def test_distance_and_cosine_reject_dim_mismatch():
    a, b = Embedding(np.ones(3)), Embedding(np.ones(4))
    with pytest.raises(DimMismatch):
        distance(a, b)
    with pytest.raises(DimMismatch):
        cosine(a, b)


def test_cosine_basics():
    a = Embedding(np.array([1.0, 0.0]))
    b = Embedding(np.array([0.0, 2.0]))
    assert cosine(a, a) == pytest.approx(1.0)
    assert cosine(a, b) == pytest.approx(0.0)
    assert cosine(a, Embedding(np.array([-3.0, 0.0]))) == pytest.approx(-1.0)
    with pytest.raises(ZeroNormEmbedding):
        cosine(a, Embedding(np.zeros(2)))


# ---- records and datasets ----


def test_record_validation():
    with pytest.raises(DatasetError):
        ReactionRecord(id="", reactants=("C",), products=("C",))
    with pytest.raises(DatasetError):
        ReactionRecord(id="r", reactants=(), products=("C",))


def test_product_key_ignores_spelling_and_order():
    r1 = ReactionRecord(id="a", reactants=("C",), products=("CCO", "O"))
    r2 = ReactionRecord(id="b", reactants=("C",), products=("O", "OCC"))
    assert r1.product_key() == r2.product_key()


def test_dataset_round_trip(tmp_path):
    records = [
        ReactionRecord(
            id="r1",
            reactants=("CCO", "O=C=O"),
            products=("CC(=O)O",),
            condition="heat",
            reaction_type="oxidation",
            iupac={"CCO": "ethanol"},
        ),
        ReactionRecord(id="r2", reactants=("C.C",), products=("CC",)),
    ]
    path = tmp_path / "data.jsonl"
    save_dataset(records, path)
    loaded = load_dataset(path)
    assert loaded == records
    # optional fields absent from the serialized form when unset
    lines = path.read_text().splitlines()
    assert "condition" not in lines[1]


@pytest.mark.parametrize(
    "line,fragment",
    [
        ("not json", "not valid JSON"),
        ("[1, 2]", "JSON object"),
        ('{"id": "r", "products": ["C"], "reactants": ["C"], "extra": 1}', "unknown keys"),
        ('{"reactants": ["C"], "products": ["C"]}', "missing key 'id'"),
        ('{"id": 3, "reactants": ["C"], "products": ["C"]}', "id must be a string"),
        ('{"id": "r", "reactants": "C", "products": ["C"]}', "list of strings"),
        ('{"id": "r", "reactants": [1], "products": ["C"]}', "list of strings"),
        ('{"id": "r", "reactants": ["C"]}', "has no products"),
        ('{"id": "r", "reactants": ["C"], "products": []}', "has no products"),
        ('{"id": "r", "reactants": ["C("], "products": ["C"]}', "unparseable"),
        ('{"id": "r", "reactants": ["C"], "products": ["C"], "condition": 5}', "condition"),
        ('{"id": "r", "reactants": ["C"], "products": ["C"], "iupac": ["x"]}', "iupac"),
    ],
)
def test_dataset_rejects_bad_records(tmp_path, line, fragment):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "ok", "reactants": ["C"], "products": ["C"]}\n' + line + "\n")
    with pytest.raises(DatasetError) as excinfo:
        load_dataset(path)
    message = str(excinfo.value)
    assert fragment in message
    assert ":2" in message  # the offending line number


def test_dataset_rejects_duplicates_and_empty(tmp_path):
    path = tmp_path / "dup.jsonl"
    row = '{"id": "same", "reactants": ["C"], "products": ["C"]}\n'
    path.write_text(row + row)
    with pytest.raises(DatasetError, match="duplicate"):
        load_dataset(path)
    path.write_text("\n\n")
    with pytest.raises(DatasetError, match="empty"):
        load_dataset(path)


# ---- index construction ----


def test_build_index_deduplicates_by_structure():
    weights = make_weights()
    corpus = build_index(
        [
            ("a", ["CCO"]),
            ("b", ["OCC"]),  # same molecule, different spelling
            ("c", ["CCN"]),
            ("d", ["O", "CCO"]),
            ("e", ["CCO", "O"]),  # same multiset, different order
        ],
        weights,
        FEATURE_CFG,
    )
    assert [e.entry_id for e in corpus.entries] == ["a", "c", "d"]
    assert corpus.entries[0].all_ids == ("a", "b")
    assert corpus.entries[1].all_ids == ("c",)
    assert corpus.entries[2].all_ids == ("d", "e")
    assert corpus.fingerprint == weights.fingerprint()


def test_build_index_rejects_bad_input():
    weights = make_weights()
    with pytest.raises(EmptyCorpus):
        build_index([], weights, FEATURE_CFG)
    with pytest.raises(DatasetError, match="duplicate"):
        build_index([("a", ["C"]), ("a", ["N"])], weights, FEATURE_CFG)
    with pytest.raises(DatasetError, match="empty"):
        build_index([("a", [])], weights, FEATURE_CFG)
    with pytest.raises(DatasetError, match="unparseable"):
        build_index([("a", ["C(("])], weights, FEATURE_CFG)


def test_corpus_entries_must_share_dims():
    entry = lambda i, dim: CorpusEntry(  # noqa: E731
        entry_id=f"e{i}",
        products=("C",),
        embedding=Embedding(np.zeros(dim)),
        keys=(f"k{i}",),
    )
    with pytest.raises(DimMismatch):
        ProductCorpus(entries=(entry(0, 3), entry(1, 4)), fingerprint="f")
    with pytest.raises(EmptyCorpus):
        ProductCorpus(entries=(), fingerprint="f")


def test_candidate_list_invariants():
    cand = Candidate(entry_id="x", distance=0.0, products=("C",), keys=("k",))
    lst = CandidateList(entries=(cand,), k=3)
    assert lst.short
    assert lst.position_of_key(("k",)) == 0
    assert lst.position_of_key(("other",)) is None
    with pytest.raises(ValueError):
        CandidateList(entries=(cand,), k=0)
    with pytest.raises(ValueError):
        CandidateList(entries=(cand, cand), k=1)


# ---- retrieval ----


def test_top_k_matches_brute_force_oracle():
    weights = make_weights(embed_dim=8, seed=1)
    train = synthetic_reactions(40, seed=10)
    queries = synthetic_reactions(15, seed=20)
    corpus = corpus_from_records(train, weights, FEATURE_CFG)
    for record in queries:
        query = embed_set(record.reactant_graphs(), weights, FEATURE_CFG)
        scored = sorted(
            (reference_distance(query.values, e.embedding.values), e.entry_id)
            for e in corpus.entries
        )
        for k in (1, 3, 6):
            got = top_k_by_embedding(query, corpus, k)
            assert [c.entry_id for c in got.entries] == [
                entry_id for _, entry_id in scored[:k]
            ]
            for candidate, (dist, _) in zip(got.entries, scored):
                assert candidate.distance == pytest.approx(dist, rel=1e-12)


def test_top_k_breaks_ties_by_entry_id():
    # zero weights embed everything identically, so order must fall back
    # to the lexicographic entry id
    weights = zero_weights()
    corpus = build_index(
        [("zeta", ["CCO"]), ("alpha", ["CCN"]), ("mid", ["CCC"])],
        weights,
        FEATURE_CFG,
    )
    got = top_k_by_embedding(Embedding(np.zeros(4)), corpus, 3)
    assert [c.entry_id for c in got.entries] == ["alpha", "mid", "zeta"]


def test_top_k_short_corpus_and_validation():
    weights = make_weights()
    corpus = build_index([("a", ["C"]), ("b", ["N"])], weights, FEATURE_CFG)
    query = Embedding(np.zeros(corpus.dim))
    got = top_k_by_embedding(query, corpus, 5)
    assert len(got.entries) == 2 and got.short
    with pytest.raises(ValueError):
        top_k_by_embedding(query, corpus, 0)
    with pytest.raises(DimMismatch):
        top_k_by_embedding(Embedding(np.zeros(corpus.dim + 1)), corpus, 1)


def test_top_k_candidates_embeds_the_reactants():
    weights = make_weights(seed=2)
    records = synthetic_reactions(10, seed=30)
    corpus = corpus_from_records(records, weights, FEATURE_CFG)
    record = records[0]
    via_graphs = top_k_candidates(
        record.reactant_graphs(), corpus, 3, weights, FEATURE_CFG
    )
    query = embed_set(record.reactant_graphs(), weights, FEATURE_CFG)
    via_embedding = top_k_by_embedding(query, corpus, 3)
    assert via_graphs == via_embedding


def test_check_fingerprint():
    weights = make_weights(seed=3)
    corpus = build_index([("a", ["CCO"])], weights, FEATURE_CFG)
    check_fingerprint(corpus, weights)
    with pytest.raises(FingerprintMismatch):
        check_fingerprint(corpus, make_weights(seed=4))


# ---- index persistence ----


def test_index_round_trip(tmp_path):
    weights = make_weights(seed=5)
    records = synthetic_reactions(12, seed=6)
    corpus = corpus_from_records(records, weights, FEATURE_CFG)
    path = tmp_path / "index.json"
    save_index(corpus, path)
    loaded = load_index(path)
    assert loaded.fingerprint == corpus.fingerprint
    assert len(loaded.entries) == len(corpus.entries)
    for got, want in zip(loaded.entries, corpus.entries):
        assert got.entry_id == want.entry_id
        assert got.products == want.products
        assert got.keys == want.keys  # recomputed from products at load
        assert np.array_equal(got.embedding.values, want.embedding.values)
    check_fingerprint(loaded, weights)


def test_load_index_rejects_malformed_files(tmp_path):
    path = tmp_path / "index.json"
    weights = make_weights()
    save_index(build_index([("a", ["CCO"])], weights, FEATURE_CFG), path)
    payload = json.loads(path.read_text())

    def expect_error(mutated, exc=DatasetError):
        path.write_text(json.dumps(mutated))
        with pytest.raises(exc):
            load_index(path)

    path.write_text("{ nope")
    with pytest.raises(DatasetError):
        load_index(path)

    expect_error({"entries": payload["entries"]})
    expect_error({**payload, "extra": 1})
    expect_error({**payload, "fingerprint": 7})
    expect_error({**payload, "entries": []}, exc=EmptyCorpus)

    entry = payload["entries"][0]
    expect_error({**payload, "entries": [{k: v for k, v in entry.items() if k != "id"}]})
    expect_error({**payload, "entries": [{**entry, "comment": "x"}]})
    expect_error({**payload, "entries": [{**entry, "products": []}]})
    expect_error({**payload, "entries": [{**entry, "products": ["C(("]}]})
    expect_error({**payload, "entries": [{**entry, "embedding": "zero"}]})
