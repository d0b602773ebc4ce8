"""Reaction datasets, the product corpus, retrieval and context assembly.

The corpus holds every known product set with a precomputed embedding.
Retrieval is an exhaustive nearest-neighbor scan by Euclidean distance
(ties broken by id), which at the intended corpus scale doubles as its
own reference answer.  In-context examples pair a training reaction with
its own candidate list; the confidence perturbation rewrites exactly
``num_perturbed`` of them to show a wrong answer with low confidence
while the rest keep the true answer with high confidence.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .encoder import Embedding, GnnWeights, embed_set
from .molgraph import FeatureConfig, MolecularGraph, SmilesError, parse_smiles
from .molgraph.canonical import canonical_key

logger = logging.getLogger(__name__)


class DimMismatch(ValueError):
    """Raised when embeddings of different dimension are combined."""


class EmptyCorpus(ValueError):
    """Raised when an index would contain no entries."""


class ZeroNormEmbedding(ValueError):
    """Raised when cosine similarity meets a zero-length vector."""


class GroundTruthNotInTopK(RuntimeError):
    """Raised when no usable in-context example candidates remain."""


class NotEnoughCandidates(ValueError):
    """Raised when a perturbed example has no wrong candidate to show."""


class FingerprintMismatch(RuntimeError):
    """Raised when an index was built by different weights."""


class DatasetError(ValueError):
    """Raised for malformed dataset or index files."""


# ---- reaction records ----


@dataclass(frozen=True)
class ReactionRecord:
    """One reaction: reactant SMILES, product SMILES and optional metadata."""

    id: str
    reactants: tuple[str, ...]
    products: tuple[str, ...]
    condition: str | None = None
    reaction_type: str | None = None
    iupac: dict[str, str] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise DatasetError("record id must be non-empty")
        if not self.reactants:
            raise DatasetError(f"record {self.id!r} has no reactants")

    def reactant_graphs(self) -> list[MolecularGraph]:
        return parse_side(self.reactants)

    def product_graphs(self) -> list[MolecularGraph]:
        return parse_side(self.products)

    def product_key(self) -> tuple[str, ...]:
        return molecules_key(self.product_graphs())


def parse_side(smiles_list: Sequence[str]) -> list[MolecularGraph]:
    """Parse one reaction side, flattening dot-separated fragments."""
    graphs: list[MolecularGraph] = []
    for smiles in smiles_list:
        graphs.extend(parse_smiles(smiles))
    return graphs


def molecules_key(graphs: Sequence[MolecularGraph]) -> tuple[str, ...]:
    """Sorted multiset of structural keys identifying a molecule set."""
    return tuple(sorted(canonical_key(g) for g in graphs))


_RECORD_FIELDS = {"id", "reactants", "products", "condition", "reaction_type", "iupac"}


def _record_from_dict(
    data: dict, where: str, require_products: bool = True
) -> ReactionRecord:
    if not isinstance(data, dict):
        raise DatasetError(f"{where}: record must be a JSON object")
    unknown = set(data) - _RECORD_FIELDS
    if unknown:
        raise DatasetError(f"{where}: unknown keys {sorted(unknown)}")
    for key in ("id",):
        if key not in data:
            raise DatasetError(f"{where}: missing key {key!r}")
    if not isinstance(data["id"], str):
        raise DatasetError(f"{where}: id must be a string")
    for side in ("reactants", "products"):
        value = data.get(side, [])
        if not isinstance(value, list) or not all(isinstance(s, str) for s in value):
            raise DatasetError(f"{where}: {side} must be a list of strings")
    for key in ("condition", "reaction_type"):
        if data.get(key) is not None and not isinstance(data[key], str):
            raise DatasetError(f"{where}: {key} must be a string or null")
    iupac = data.get("iupac")
    if iupac is not None and (
        not isinstance(iupac, dict)
        or not all(isinstance(k, str) and isinstance(v, str) for k, v in iupac.items())
    ):
        raise DatasetError(f"{where}: iupac must map SMILES strings to names")
    record = ReactionRecord(
        id=data["id"],
        reactants=tuple(data.get("reactants", [])),
        products=tuple(data.get("products", [])),
        condition=data.get("condition"),
        reaction_type=data.get("reaction_type"),
        iupac=dict(iupac) if iupac else None,
    )
    if require_products and not record.products:
        raise DatasetError(f"{where}: record {record.id!r} has no products")
    try:
        record.reactant_graphs()
        record.product_graphs()
    except SmilesError as exc:
        raise DatasetError(
            f"{where}: record {record.id!r} has unparseable SMILES: {exc}"
        ) from exc
    return record


def load_record(path: str | Path, require_products: bool = False) -> ReactionRecord:
    """Read a single reaction from a JSON object file.

    Products are optional here: a pure prediction query has none yet.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: not valid JSON: {exc}") from exc
    return _record_from_dict(data, str(path), require_products=require_products)


def load_dataset(path: str | Path) -> list[ReactionRecord]:
    """Read a JSONL reaction dataset, validating every record."""
    records: list[ReactionRecord] = []
    seen_ids: set[str] = set()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{where}: not valid JSON: {exc}") from exc
        record = _record_from_dict(data, where)
        if record.id in seen_ids:
            raise DatasetError(f"{where}: duplicate record id {record.id!r}")
        seen_ids.add(record.id)
        records.append(record)
    if not records:
        raise DatasetError(f"{path}: dataset is empty")
    return records


def save_dataset(records: Sequence[ReactionRecord], path: str | Path) -> None:
    lines = []
    for r in records:
        data: dict = {"id": r.id, "reactants": list(r.reactants), "products": list(r.products)}
        if r.condition is not None:
            data["condition"] = r.condition
        if r.reaction_type is not None:
            data["reaction_type"] = r.reaction_type
        if r.iupac:
            data["iupac"] = dict(sorted(r.iupac.items()))
        lines.append(json.dumps(data, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---- embeddings and the corpus ----


def distance(a: Embedding, b: Embedding) -> float:
    """Euclidean distance between two embeddings."""
    if a.dim != b.dim:
        raise DimMismatch(f"embedding dims differ: {a.dim} vs {b.dim}")
    diff = a.values - b.values
    return float(np.sqrt(np.dot(diff, diff)))


def cosine(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise DimMismatch(f"embedding dims differ: {a.dim} vs {b.dim}")
    norm_a = float(np.sqrt(np.dot(a.values, a.values)))
    norm_b = float(np.sqrt(np.dot(b.values, b.values)))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroNormEmbedding("cosine similarity undefined for a zero vector")
    return float(np.dot(a.values, b.values) / (norm_a * norm_b))


@dataclass(frozen=True)
class CorpusEntry:
    entry_id: str
    products: tuple[str, ...]
    embedding: Embedding
    keys: tuple[str, ...]
    all_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.all_ids:
            object.__setattr__(self, "all_ids", (self.entry_id,))


@dataclass
class ProductCorpus:
    entries: tuple[CorpusEntry, ...]
    fingerprint: str
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.entries:
            raise EmptyCorpus("a product corpus needs at least one entry")
        dims = {e.embedding.dim for e in self.entries}
        if len(dims) != 1:
            raise DimMismatch(f"corpus entries mix embedding dims {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.entries[0].embedding.dim

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.stack([e.embedding.values for e in self.entries])
        return self._matrix

    def key_set(self) -> set[tuple[str, ...]]:
        return {e.keys for e in self.entries}


@dataclass(frozen=True)
class Candidate:
    entry_id: str
    distance: float
    products: tuple[str, ...]
    keys: tuple[str, ...]


@dataclass(frozen=True)
class CandidateList:
    entries: tuple[Candidate, ...]
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if len(self.entries) > self.k:
            raise ValueError("more candidates than requested")

    @property
    def short(self) -> bool:
        """True when the corpus had fewer than k entries."""
        return len(self.entries) < self.k

    def position_of_key(self, key: tuple[str, ...]) -> int | None:
        for idx, candidate in enumerate(self.entries):
            if candidate.keys == key:
                return idx
        return None


def build_index(
    product_sets: Sequence[tuple[str, Sequence[str]]],
    weights: GnnWeights,
    feature_cfg: FeatureConfig,
) -> ProductCorpus:
    """Embed and deduplicate product sets into a corpus.

    Product sets with identical structural key multisets collapse into a
    single entry that remembers every contributing id.
    """
    if not product_sets:
        raise EmptyCorpus("no product sets given")
    by_key: dict[tuple[str, ...], dict] = {}
    order: list[tuple[str, ...]] = []
    seen_ids: set[str] = set()
    for set_id, smiles_list in product_sets:
        if set_id in seen_ids:
            raise DatasetError(f"duplicate product set id {set_id!r}")
        seen_ids.add(set_id)
        if not smiles_list:
            raise DatasetError(f"product set {set_id!r} is empty")
        try:
            graphs = parse_side(smiles_list)
        except SmilesError as exc:
            raise DatasetError(
                f"product set {set_id!r} has unparseable SMILES: {exc}"
            ) from exc
        key = molecules_key(graphs)
        if key in by_key:
            by_key[key]["ids"].append(set_id)
            continue
        by_key[key] = {
            "ids": [set_id],
            "products": tuple(smiles_list),
            "embedding": embed_set(graphs, weights, feature_cfg),
        }
        order.append(key)
    entries = tuple(
        CorpusEntry(
            entry_id=by_key[key]["ids"][0],
            products=by_key[key]["products"],
            embedding=by_key[key]["embedding"],
            keys=key,
            all_ids=tuple(by_key[key]["ids"]),
        )
        for key in order
    )
    return ProductCorpus(entries=entries, fingerprint=weights.fingerprint())


def corpus_from_records(
    records: Sequence[ReactionRecord],
    weights: GnnWeights,
    feature_cfg: FeatureConfig,
) -> ProductCorpus:
    return build_index(
        [(r.id, r.products) for r in records], weights, feature_cfg
    )


def check_fingerprint(corpus: ProductCorpus, weights: GnnWeights) -> None:
    if corpus.fingerprint != weights.fingerprint():
        raise FingerprintMismatch(
            "the index was built with different weights; rebuild it"
        )


def top_k_by_embedding(query: Embedding, corpus: ProductCorpus, k: int) -> CandidateList:
    """Exhaustive scan: the k nearest entries, ties broken by entry id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if query.dim != corpus.dim:
        raise DimMismatch(
            f"query dim {query.dim} does not match corpus dim {corpus.dim}"
        )
    diffs = corpus.matrix() - query.values
    dists = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
    order = sorted(
        range(len(corpus.entries)),
        key=lambda i: (dists[i], corpus.entries[i].entry_id),
    )
    if len(order) < k:
        logger.info(
            "requested k=%d but the corpus has only %d entries", k, len(order)
        )
    chosen = order[:k]
    return CandidateList(
        entries=tuple(
            Candidate(
                entry_id=corpus.entries[i].entry_id,
                distance=float(dists[i]),
                products=corpus.entries[i].products,
                keys=corpus.entries[i].keys,
            )
            for i in chosen
        ),
        k=k,
    )


def top_k_candidates(
    reactants: Sequence[MolecularGraph],
    corpus: ProductCorpus,
    k: int,
    weights: GnnWeights,
    feature_cfg: FeatureConfig,
) -> CandidateList:
    query = embed_set(list(reactants), weights, feature_cfg)
    return top_k_by_embedding(query, corpus, k)


# ---- index persistence ----


def save_index(corpus: ProductCorpus, path: str | Path) -> None:
    payload = {
        "fingerprint": corpus.fingerprint,
        "entries": [
            {
                "id": e.entry_id,
                "products": list(e.products),
                "embedding": [float(v) for v in e.embedding.values],
            }
            for e in corpus.entries
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_index(path: str | Path) -> ProductCorpus:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: index is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or set(payload) != {"fingerprint", "entries"}:
        raise DatasetError(f"{path}: index must have 'fingerprint' and 'entries'")
    if not isinstance(payload["fingerprint"], str):
        raise DatasetError(f"{path}: fingerprint must be a string")
    entries = []
    for idx, raw in enumerate(payload["entries"]):
        where = f"{path}: entry {idx}"
        if not isinstance(raw, dict) or set(raw) != {"id", "products", "embedding"}:
            raise DatasetError(f"{where}: needs exactly id, products, embedding")
        if not isinstance(raw["products"], list) or not raw["products"]:
            raise DatasetError(f"{where}: products must be a non-empty list")
        try:
            graphs = parse_side(raw["products"])
        except SmilesError as exc:
            raise DatasetError(f"{where}: unparseable product SMILES: {exc}") from exc
        if not isinstance(raw["embedding"], list):
            raise DatasetError(f"{where}: embedding must be a list of numbers")
        entries.append(
            CorpusEntry(
                entry_id=raw["id"],
                products=tuple(raw["products"]),
                embedding=Embedding(np.array(raw["embedding"], dtype=np.float64)),
                keys=molecules_key(graphs),
            )
        )
    if not entries:
        raise EmptyCorpus(f"{path}: index has no entries")
    return ProductCorpus(entries=tuple(entries), fingerprint=payload["fingerprint"])


# ---- in-context examples ----


@dataclass(frozen=True)
class InContextExample:
    """A solved reaction shown to the model, with its own candidates."""

    record: ReactionRecord
    candidates: CandidateList
    shown_answer: int
    confidence: int | None = None
    perturbed: bool = False

    def __post_init__(self) -> None:
        if not (0 <= self.shown_answer < len(self.candidates.entries)):
            raise ValueError("shown_answer is out of range")
        if self.confidence is not None and not (1 <= self.confidence <= 9):
            raise ValueError("confidence must be in 1..9")
        truth = self.record.product_key()
        shown = self.candidates.entries[self.shown_answer].keys
        if self.perturbed and shown == truth:
            raise ValueError("a perturbed example must show a wrong answer")
        if not self.perturbed and shown != truth:
            raise ValueError("an unperturbed example must show the true answer")


@dataclass(frozen=True)
class CssConfig:
    """Confidence perturbation settings.

    Exactly num_perturbed examples get a wrong answer with a confidence
    drawn from low_set; all others keep the truth with a draw from
    high_set.
    """

    high_set: tuple[int, ...] = (8, 9)
    low_set: tuple[int, ...] = (1, 2)
    num_perturbed: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "high_set", tuple(sorted(self.high_set)))
        object.__setattr__(self, "low_set", tuple(sorted(self.low_set)))
        for name, values in (("high_set", self.high_set), ("low_set", self.low_set)):
            if not values:
                raise ValueError(f"{name} must be non-empty")
            if not all(isinstance(v, int) and 1 <= v <= 9 for v in values):
                raise ValueError(f"{name} must contain integers in 1..9")
        if set(self.high_set) & set(self.low_set):
            raise ValueError("high_set and low_set must be disjoint")
        if self.num_perturbed < 0:
            raise ValueError("num_perturbed must be >= 0")


def select_examples(
    query: ReactionRecord,
    train: Sequence[ReactionRecord],
    n: int,
    weights: GnnWeights,
    feature_cfg: FeatureConfig,
    train_embeddings: Sequence[Embedding] | None = None,
) -> list[int]:
    """Indices of the n training reactions most cosine-similar to the query.

    The query itself (matched by record id) is excluded, so evaluating on
    the training set is leave-one-out by construction.  Ties break by
    record id.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if train_embeddings is None:
        train_embeddings = [
            embed_set(r.reactant_graphs(), weights, feature_cfg) for r in train
        ]
    if len(train_embeddings) != len(train):
        raise ValueError("one embedding per training record is required")
    query_embedding = embed_set(query.reactant_graphs(), weights, feature_cfg)
    scored = []
    for idx, record in enumerate(train):
        if record.id == query.id:
            continue
        similarity = cosine(query_embedding, train_embeddings[idx])
        scored.append((-similarity, record.id, idx))
    scored.sort()
    return [idx for _, _, idx in scored[:n]]


def build_context(
    selected: Sequence[int],
    train: Sequence[ReactionRecord],
    corpus: ProductCorpus,
    k: int,
    weights: GnnWeights,
    feature_cfg: FeatureConfig,
    fallback: Sequence[int] = (),
    candidate_cache: dict[int, CandidateList] | None = None,
) -> list[InContextExample]:
    """Assemble in-context examples whose truth survives their own top-k.

    A selected reaction whose true product misses its candidate list is
    replaced by the next index from ``fallback`` (the continuation of the
    similarity ranking); each substitution is logged.  Exhausting the
    fallback raises GroundTruthNotInTopK.
    """

    def candidates_for(idx: int) -> CandidateList:
        if candidate_cache is not None and idx in candidate_cache:
            return candidate_cache[idx]
        lst = top_k_candidates(
            train[idx].reactant_graphs(), corpus, k, weights, feature_cfg
        )
        if candidate_cache is not None:
            candidate_cache[idx] = lst
        return lst

    examples: list[InContextExample] = []
    used: set[int] = set()
    replacements = iter([i for i in fallback if i not in selected])
    skipped: list[str] = []
    for idx in selected:
        current = idx
        while True:
            if current in used:
                current = None
            else:
                used.add(current)
                candidates = candidates_for(current)
                position = candidates.position_of_key(train[current].product_key())
                if position is not None:
                    examples.append(
                        InContextExample(
                            record=train[current],
                            candidates=candidates,
                            shown_answer=position,
                        )
                    )
                    break
                skipped.append(train[current].id)
                logger.info(
                    "record %s dropped from context: truth not in its top-%d",
                    train[current].id,
                    k,
                )
            current = next(replacements, None)
            if current is None:
                raise GroundTruthNotInTopK(
                    "could not build the requested context; records without "
                    f"their truth in top-{k}: {skipped}"
                )
    return examples


def perturb_context(
    examples: Sequence[InContextExample], css: CssConfig
) -> list[InContextExample]:
    """Apply the confidence perturbation; a new list, inputs untouched."""
    if len(examples) < 2:
        raise ValueError("perturbation needs at least two examples")
    if css.num_perturbed > len(examples):
        raise ValueError("cannot perturb more examples than exist")
    for example in examples:
        if len(example.candidates.entries) < 2:
            raise NotEnoughCandidates(
                f"example {example.record.id!r} has fewer than two candidates"
            )
    rng = random.Random(css.seed)
    perturbed_positions = set(rng.sample(range(len(examples)), css.num_perturbed))
    out: list[InContextExample] = []
    for position, example in enumerate(examples):
        truth = example.record.product_key()
        if position in perturbed_positions:
            wrong = [
                idx
                for idx, candidate in enumerate(example.candidates.entries)
                if candidate.keys != truth
            ]
            if not wrong:
                raise NotEnoughCandidates(
                    f"example {example.record.id!r} has no wrong candidate"
                )
            out.append(
                replace(
                    example,
                    shown_answer=rng.choice(wrong),
                    confidence=rng.choice(css.low_set),
                    perturbed=True,
                )
            )
        else:
            out.append(replace(example, confidence=rng.choice(css.high_set)))
    return out
