"""Command-line surface: index building, prediction, evaluation,
strategy comparison, toy training and prompt inspection.

One JSON config file carries every setting; command-line flags override
single keys (flags win).  All randomness flows from the one seed in the
config, fanned out by labeled sub-streams, so toggling one feature does
not shift another's draws.  Exit codes: 0 success, 2 user or input
error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .corpus import (
    CssConfig,
    DatasetError,
    EmptyCorpus,
    FingerprintMismatch,
    corpus_from_records,
    load_dataset,
    load_index,
    load_record,
    save_index,
)
from .encoder import (
    EncoderConfig,
    NonFiniteLoss,
    TrainingHyper,
    load_weights,
    save_weights,
    train_contrastive,
)
from .evaluation import (
    MissingGroundTruth,
    build_report,
    compare_strategies,
    hit_at_k,
    write_outcomes_csv,
    write_report_json,
    write_strategy_csv,
)
from .lmclient import (
    AuthFailure,
    BackendConfig,
    BackendKind,
    LmClientError,
    Pipeline,
    derive_seed,
    estimate_tokens,
    load_mock_script,
    run_dataset,
)
from .molgraph import FeatureConfig, SmilesError
from .prompt import MoleculeRendering, PromptConfig, Strategy, TemplateSet


class ConfigError(ValueError):
    """A problem in the run configuration file or its overrides."""


_TOP_KEYS = {
    "weights",
    "index",
    "dataset",
    "templates",
    "iupac",
    "k",
    "n",
    "strategy",
    "include_condition",
    "include_reaction_type",
    "molecule_rendering",
    "shuffle_candidates",
    "css",
    "backend",
    "seed",
    "max_concurrency",
}

_CSS_KEYS = {"high_set", "low_set", "num_perturbed"}

_BACKEND_KEYS = {
    "kind",
    "endpoint",
    "model",
    "temperature",
    "timeout_ms",
    "max_retries",
    "api_key_env",
    "mock_script",
    "backoff_base_s",
}


@dataclass
class RunConfig:
    weights: Path | None = None
    index: Path | None = None
    dataset: Path | None = None
    templates: Path | None = None
    iupac: Path | None = None
    k: int = 4
    n: int = 3
    strategy: Strategy = Strategy.parse("plain")
    include_condition: bool = False
    include_reaction_type: bool = False
    molecule_rendering: MoleculeRendering = MoleculeRendering.SMILES_ONLY
    shuffle_candidates: bool = False
    css: CssConfig = CssConfig()
    backend: BackendConfig = BackendConfig(kind=BackendKind.ORACLE)
    seed: int = 0
    max_concurrency: int = 4

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")

    def prompt_config(self) -> PromptConfig:
        shuffle_seed = (
            derive_seed(self.seed, "shuffle") if self.shuffle_candidates else None
        )
        return PromptConfig(
            strategy=self.strategy,
            k=self.k,
            n=self.n,
            include_condition=self.include_condition,
            include_reaction_type=self.include_reaction_type,
            molecule_rendering=self.molecule_rendering,
            css=self.css,
            shuffle_candidates_seed=shuffle_seed,
        )


def _check_exists(label: str, path: Path | None) -> None:
    if path is not None and not path.exists():
        raise ConfigError(f"{label} file does not exist: {path}")


def load_run_config(
    path: str | Path | None,
    overrides: dict,
    skip_exists: tuple[str, ...] = (),
) -> RunConfig:
    """Read the JSON config, apply non-None overrides, validate files.

    Input paths must exist; keys in skip_exists are a command's outputs
    and are exempt (build-index writes the index it names).
    """
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file does not exist: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: config is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")

    for key, value in overrides.items():
        if value is not None:
            data[key] = value

    css_raw = data.get("css", {})
    if not isinstance(css_raw, dict):
        raise ConfigError("css must be a JSON object")
    unknown = set(css_raw) - _CSS_KEYS
    if unknown:
        raise ConfigError(f"unknown css keys {sorted(unknown)}")
    try:
        css = CssConfig(
            high_set=tuple(css_raw.get("high_set", (8, 9))),
            low_set=tuple(css_raw.get("low_set", (1, 2))),
            num_perturbed=css_raw.get("num_perturbed", 1),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"css settings: {exc}")

    backend_raw = data.get("backend", {})
    if not isinstance(backend_raw, dict):
        raise ConfigError("backend must be a JSON object")
    unknown = set(backend_raw) - _BACKEND_KEYS
    if unknown:
        raise ConfigError(f"unknown backend keys {sorted(unknown)}")
    script_path = backend_raw.get("mock_script")
    mock_script = ()
    if script_path is not None:
        _check_exists("mock script", Path(script_path))
        mock_script = load_mock_script(script_path)
    try:
        kind = BackendKind(backend_raw.get("kind", "oracle"))
    except ValueError:
        raise ConfigError(
            f"unknown backend kind {backend_raw.get('kind')!r}; "
            f"valid: {sorted(k.value for k in BackendKind)}"
        )
    try:
        backend = BackendConfig(
            kind=kind,
            endpoint=backend_raw.get("endpoint", ""),
            model=backend_raw.get("model", ""),
            temperature=backend_raw.get("temperature", 0.0),
            timeout_ms=backend_raw.get("timeout_ms", 30000),
            max_retries=backend_raw.get("max_retries", 3),
            api_key_env=backend_raw.get("api_key_env", "RELM_API_KEY"),
            mock_script=mock_script,
            backoff_base_s=backend_raw.get("backoff_base_s", 1.0),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"backend settings: {exc}")

    try:
        strategy = Strategy.parse(data.get("strategy", "plain"))
    except ValueError as exc:
        raise ConfigError(str(exc))
    try:
        rendering = MoleculeRendering(data.get("molecule_rendering", "smiles_only"))
    except ValueError:
        raise ConfigError(
            f"unknown molecule_rendering {data.get('molecule_rendering')!r}; "
            f"valid: {sorted(m.value for m in MoleculeRendering)}"
        )

    def _path(key: str) -> Path | None:
        value = data.get(key)
        return Path(value) if value is not None else None

    cfg = RunConfig(
        weights=_path("weights"),
        index=_path("index"),
        dataset=_path("dataset"),
        templates=_path("templates"),
        iupac=_path("iupac"),
        k=data.get("k", 4),
        n=data.get("n", 3),
        strategy=strategy,
        include_condition=bool(data.get("include_condition", False)),
        include_reaction_type=bool(data.get("include_reaction_type", False)),
        molecule_rendering=rendering,
        shuffle_candidates=bool(data.get("shuffle_candidates", False)),
        css=css,
        backend=backend,
        seed=data.get("seed", 0),
        max_concurrency=data.get("max_concurrency", 4),
    )
    for label in ("weights", "index", "dataset", "templates", "iupac"):
        if label not in skip_exists:
            _check_exists(label, getattr(cfg, label))
    return cfg


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(
            f"this command needs config paths: {', '.join(missing)}"
        )


def _load_templates(cfg: RunConfig) -> TemplateSet | None:
    return TemplateSet.load(cfg.templates) if cfg.templates is not None else None


def _load_iupac(cfg: RunConfig) -> dict[str, str] | None:
    if cfg.iupac is None:
        return None
    try:
        table = json.loads(cfg.iupac.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{cfg.iupac}: iupac table is not valid JSON: {exc}")
    if not isinstance(table, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in table.items()
    ):
        raise ConfigError(f"{cfg.iupac}: iupac table must map SMILES to names")
    return table


def _build_pipeline(cfg: RunConfig) -> tuple[Pipeline, list, object, object]:
    _require(cfg, "weights", "index", "dataset")
    weights = load_weights(cfg.weights)
    corpus = load_index(cfg.index)
    train = load_dataset(cfg.dataset)
    feature_cfg = FeatureConfig()
    pipeline = Pipeline(
        corpus,
        train,
        weights,
        feature_cfg,
        cfg.prompt_config(),
        cfg.backend,
        iupac_table=_load_iupac(cfg),
        templates=_load_templates(cfg),
        seed=cfg.seed,
    )
    return pipeline, train, corpus, weights


# ---- commands ----


def cmd_build_index(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, _overrides(args), skip_exists=("index",))
    _require(cfg, "weights", "dataset")
    weights = load_weights(cfg.weights)
    records = load_dataset(cfg.dataset)
    corpus = corpus_from_records(records, weights, FeatureConfig())
    save_index(corpus, args.out)
    print(
        f"wrote {args.out}: {len(corpus.entries)} entries "
        f"({len(records)} product sets), fingerprint {corpus.fingerprint[:16]}"
    )
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, _overrides(args))
    pipeline, _, _, _ = _build_pipeline(cfg)
    record = load_record(args.reaction)
    if args.dry_run:
        prompt = pipeline.render_prompt(record)
        print(prompt.text)
        return 0
    result = pipeline.predict(record)
    payload = {
        "choice_id": result.final_choice_id,
        "products": list(result.final_products),
        "candidates": [
            {
                "id": c.entry_id,
                "products": list(c.products),
                "distance": c.distance,
            }
            for c in result.candidates.entries
        ],
        "confidence": result.parsed.confidence,
        "parse_status": result.parsed.parse_status.value,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _parse_k_spec(spec: str) -> list[int]:
    spec = spec.strip()
    if ".." in spec:
        lo_text, hi_text = spec.split("..", 1)
        lo, hi = int(lo_text), int(hi_text)
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad K range {spec!r}")
        return list(range(lo, hi + 1))
    value = int(spec)
    if value < 1:
        raise ConfigError("K must be >= 1")
    return [value]


def cmd_evaluate(args: argparse.Namespace) -> int:
    # --k may be a sweep spec like "2..7"; it never overrides config k
    cfg = load_run_config(args.config, {**_overrides(args), "k": None})
    _require(cfg, "weights", "index", "dataset")
    weights = load_weights(cfg.weights)
    corpus = load_index(cfg.index)
    train = load_dataset(cfg.dataset)
    eval_path = args.eval_dataset if args.eval_dataset else cfg.dataset
    records = load_dataset(eval_path)

    keys = corpus.key_set()
    missing = [r.id for r in records if r.product_key() not in keys]
    if missing:
        raise MissingGroundTruth(
            f"ground truth absent from the corpus for: {missing}", missing
        )

    try:
        ks = _parse_k_spec(args.k) if args.k else [cfg.k]
    except ValueError as exc:
        raise ConfigError(f"bad --k value: {exc}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    feature_cfg = FeatureConfig()
    for k in ks:
        run_cfg = replace(cfg, k=k)
        pipeline = Pipeline(
            corpus,
            train,
            weights,
            feature_cfg,
            run_cfg.prompt_config(),
            cfg.backend,
            iupac_table=_load_iupac(cfg),
            templates=_load_templates(cfg),
            seed=cfg.seed,
        )
        results = run_dataset(pipeline, records, cfg.max_concurrency)
        report = build_report(
            results,
            records,
            corpus,
            weights,
            feature_cfg,
            k,
            config={
                "strategy": cfg.strategy.label,
                "k": k,
                "n": cfg.n,
                "seed": cfg.seed,
                "backend": cfg.backend.kind.value,
            },
        )
        write_report_json(report, out_dir / f"report_k{k}.json")
        write_outcomes_csv(report.outcomes, out_dir / f"samples_k{k}.csv")
        print(
            f"K={k} accuracy={report.accuracy:.4f} "
            f"hit@{k}={report.hit_at_k:.4f} "
            f"parse_failure_rate={report.parse_failure_rate:.4f}"
        )
    return 0


def cmd_compare_strategies(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, _overrides(args))
    _require(cfg, "weights", "index", "dataset")
    weights = load_weights(cfg.weights)
    corpus = load_index(cfg.index)
    train = load_dataset(cfg.dataset)
    eval_path = args.eval_dataset if args.eval_dataset else cfg.dataset
    records = load_dataset(eval_path)
    strategies = [Strategy.parse(s) for s in args.strategies.split(",") if s.strip()]
    if not strategies:
        raise ConfigError("no strategies given")
    rows = compare_strategies(
        records,
        train,
        corpus,
        weights,
        FeatureConfig(),
        cfg.prompt_config(),
        cfg.backend,
        strategies,
        seed=cfg.seed,
        max_concurrency=cfg.max_concurrency,
    )
    write_strategy_csv(rows, args.out)
    for row in rows:
        print(
            f"{row.strategy}: acc={row.accuracy:.4f} "
            f"tokens={row.mean_tokens:.1f} time_s={row.mean_time_s:.3f}"
        )
    return 0


def cmd_train_toy(args: argparse.Namespace) -> int:
    # reads only the dataset; weights/index in the config are other
    # commands' artifacts and may not exist yet
    cfg = load_run_config(
        args.config, _overrides(args), skip_exists=("weights", "index")
    )
    _require(cfg, "dataset")
    records = load_dataset(cfg.dataset)
    feature_cfg = FeatureConfig()
    encoder_cfg = EncoderConfig(
        feature_dim=feature_cfg.feature_dim, embed_dim=args.embed_dim
    )
    hyper = TrainingHyper(
        margin=args.margin,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        seed=cfg.seed,
    )
    pairs = [(r.reactants, r.products) for r in records]
    try:
        result = train_contrastive(pairs, encoder_cfg, feature_cfg, hyper)
    except NonFiniteLoss as exc:
        finite = f"{exc.trace[-1]:.6f} at epoch {len(exc.trace) - 1}" if exc.trace else "none"
        print(
            f"error: training diverged at epoch {exc.epoch}; "
            f"last finite loss: {finite}",
            file=sys.stderr,
        )
        return 1
    save_weights(result.weights, args.out_weights)
    with open(args.out_trace, "w", encoding="utf-8", newline="") as handle:
        handle.write("epoch,loss\n")
        for epoch, loss in enumerate(result.loss_trace):
            handle.write(f"{epoch},{loss!r}\n")
    corpus = corpus_from_records(records, result.weights, feature_cfg)
    score = hit_at_k(records, corpus, result.weights, feature_cfg, 1)
    print(f"wrote {args.out_weights} and {args.out_trace}")
    print(f"final hit@1: {score:.4f}")
    return 0


def cmd_inspect_prompt(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, _overrides(args))
    pipeline, _, _, _ = _build_pipeline(cfg)
    record = load_record(args.reaction)
    prompt = pipeline.render_prompt(record)
    print(prompt.text)
    print(
        f"--- schema={prompt.answer_schema.value} "
        f"letters={','.join(prompt.letters)} "
        f"tokens~{estimate_tokens(prompt)}",
        file=sys.stderr,
    )
    return 0


# ---- argument plumbing ----


def _overrides(args: argparse.Namespace) -> dict:
    keys = (
        "weights",
        "index",
        "dataset",
        "templates",
        "iupac",
        "k",
        "n",
        "strategy",
        "seed",
        "max_concurrency",
    )
    return {key: getattr(args, key, None) for key in keys}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration file")
    parser.add_argument("--weights", help="encoder weights file (overrides config)")
    parser.add_argument("--index", help="product index file (overrides config)")
    parser.add_argument("--dataset", help="training dataset JSONL (overrides config)")
    parser.add_argument("--templates", help="template directory (overrides config)")
    parser.add_argument("--iupac", help="SMILES-to-name table (overrides config)")
    parser.add_argument("--strategy", help="prompting strategy (overrides config)")
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--max-concurrency", dest="max_concurrency", type=int)
    parser.add_argument("--n", type=int, help="in-context example count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relm",
        description="Retrieve-and-rerank reaction product prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="embed a dataset's product sets")
    _add_common(p)
    p.add_argument("--out", required=True, help="index file to write")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("predict", help="predict products for one reaction")
    _add_common(p)
    p.add_argument("--k", type=int, help="candidate count (overrides config)")
    p.add_argument("--reaction", required=True, help="single reaction JSON file")
    p.add_argument(
        "--dry-run",
        action="store_true",
        help="print the rendered prompt and exit without backend calls",
    )
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="run the evaluation harness")
    _add_common(p)
    p.add_argument("--k", help="candidate count or sweep range like 2..7")
    p.add_argument("--eval-dataset", dest="eval_dataset", help="queries JSONL")
    p.add_argument("--out-dir", dest="out_dir", default=".", help="report directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare-strategies", help="one evaluation row per strategy")
    _add_common(p)
    p.add_argument("--k", type=int, help="candidate count (overrides config)")
    p.add_argument("--eval-dataset", dest="eval_dataset", help="queries JSONL")
    p.add_argument("--strategies", required=True, help="comma-separated names")
    p.add_argument("--out", required=True, help="CSV table to write")
    p.set_defaults(func=cmd_compare_strategies)

    p = sub.add_parser("train-toy", help="contrastive-train encoder weights")
    _add_common(p)
    p.add_argument("--embed-dim", dest="embed_dim", type=int, default=16)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=0.05)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--out-weights", dest="out_weights", required=True)
    p.add_argument("--out-trace", dest="out_trace", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("inspect-prompt", help="render a prompt without a backend")
    _add_common(p)
    p.add_argument("--k", type=int, help="candidate count (overrides config)")
    p.add_argument("--reaction", required=True, help="single reaction JSON file")
    p.set_defaults(func=cmd_inspect_prompt)

    return parser


_USER_ERRORS = (
    ConfigError,
    DatasetError,
    SmilesError,
    EmptyCorpus,
    MissingGroundTruth,
    AuthFailure,
    FingerprintMismatch,
    FileNotFoundError,
    ValueError,
)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LmClientError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
