"""Command-line interface: round trips, exit codes, file formats."""

import dataclasses
import json

import pytest

from relm.cli import main
from relm.corpus import corpus_from_records, save_dataset, save_index
from relm.encoder import EncoderConfig, random_init, save_weights
from relm.molgraph import FeatureConfig
from relm.synthetic import synthetic_reactions

FEATURE_CFG = FeatureConfig()


def record_to_dict(record):
    data = {
        "id": record.id,
        "reactants": list(record.reactants),
        "products": list(record.products),
    }
    if record.condition is not None:
        data["condition"] = record.condition
    if record.reaction_type is not None:
        data["reaction_type"] = record.reaction_type
    return data


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    ws = tmp_path_factory.mktemp("cli")
    train = synthetic_reactions(16, seed=40)
    weights = random_init(
        EncoderConfig(feature_dim=FEATURE_CFG.feature_dim, embed_dim=8), seed=1
    )
    corpus = corpus_from_records(train, weights, FEATURE_CFG)
    save_dataset(train, ws / "train.jsonl")
    save_weights(weights, ws / "weights.npz")
    save_index(corpus, ws / "index.json")
    query = dataclasses.replace(train[0], id="query-0")
    (ws / "query.json").write_text(json.dumps(record_to_dict(query)))
    base = {
        "weights": str(ws / "weights.npz"),
        "index": str(ws / "index.json"),
        "dataset": str(ws / "train.jsonl"),
        "backend": {"kind": "oracle"},
        "strategy": "css",
        "k": 4,
        "n": 3,
        "seed": 0,
    }
    (ws / "config.json").write_text(json.dumps(base))
    return ws, base, train


def write_config(path, base, **edits):
    merged = {**base, **edits}
    path.write_text(json.dumps(merged))
    return str(path)


def test_full_round_trip(workspace, tmp_path, capsys):
    ws, base, train = workspace
    cfg_path = write_config(
        tmp_path / "cfg.json",
        base,
        weights=str(tmp_path / "w.npz"),
        index=str(tmp_path / "idx.json"),
    )

    code = main(
        [
            "train-toy",
            "--config",
            cfg_path,
            "--embed-dim",
            "8",
            "--epochs",
            "3",
            "--out-weights",
            str(tmp_path / "w.npz"),
            "--out-trace",
            str(tmp_path / "trace.csv"),
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "final hit@1:" in out
    trace_lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert trace_lines[0] == "epoch,loss"
    assert len(trace_lines) == 4  # header + one row per epoch

    code = main(
        ["build-index", "--config", cfg_path, "--out", str(tmp_path / "idx.json")]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert out.startswith(f"wrote {tmp_path / 'idx.json'}: 16 entries")
    assert "fingerprint" in out

    code = main(
        ["predict", "--config", cfg_path, "--reaction", str(ws / "query.json")]
    )
    out = capsys.readouterr().out
    assert code == 0
    payload = json.loads(out)
    assert sorted(payload) == [
        "candidates",
        "choice_id",
        "confidence",
        "parse_status",
        "products",
    ]
    assert len(payload["candidates"]) == 4
    assert payload["parse_status"] in {"clean", "recovered"}

    code = main(
        [
            "evaluate",
            "--config",
            cfg_path,
            "--out-dir",
            str(tmp_path / "reports"),
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert out.startswith("K=4 accuracy=")
    assert "hit@4=" in out and "parse_failure_rate=0.0000" in out
    assert (tmp_path / "reports" / "report_k4.json").exists()
    assert (tmp_path / "reports" / "samples_k4.csv").exists()


def test_predict_dry_run_needs_no_api_key(workspace, tmp_path, capsys, monkeypatch):
    ws, base, _ = workspace
    monkeypatch.delenv("RELM_API_KEY", raising=False)
    cfg_path = write_config(
        tmp_path / "cfg.json",
        base,
        backend={"kind": "http", "endpoint": "http://example.invalid/v1"},
    )
    code = main(
        [
            "predict",
            "--config",
            cfg_path,
            "--reaction",
            str(ws / "query.json"),
            "--dry-run",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "Question:" in out
    assert "A. " in out


def test_predict_flag_overrides_config_k(workspace, capsys):
    ws, base, _ = workspace
    code = main(
        [
            "predict",
            "--config",
            str(ws / "config.json"),
            "--reaction",
            str(ws / "query.json"),
            "--k",
            "2",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert len(json.loads(out)["candidates"]) == 2


def test_inspect_prompt_renders_without_backend(workspace, capsys):
    ws, base, _ = workspace
    code = main(
        [
            "inspect-prompt",
            "--config",
            str(ws / "config.json"),
            "--reaction",
            str(ws / "query.json"),
        ]
    )
    captured = capsys.readouterr()
    assert code == 0
    assert "Question:" in captured.out
    assert "--- schema=letter_plus_confidence" in captured.err
    assert "letters=A,B,C,D" in captured.err


# ---- exit codes ----


def test_missing_config_file_exits_2(workspace, tmp_path, capsys):
    ws, _, _ = workspace
    code = main(
        [
            "predict",
            "--config",
            str(tmp_path / "nope.json"),
            "--reaction",
            str(ws / "query.json"),
        ]
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


@pytest.mark.parametrize(
    "edits,fragment",
    [
        ({"bogus_key": 1}, "bogus_key"),
        ({"css": {"high_set": [9], "nope": 1}}, "nope"),
        ({"backend": {"kind": "oracle", "shade": 1}}, "shade"),
        ({"strategy": "bogus"}, "bogus"),
        ({"backend": {"kind": "nosuch"}}, "nosuch"),
    ],
)
def test_bad_config_exits_2(workspace, tmp_path, capsys, edits, fragment):
    ws, base, _ = workspace
    cfg_path = write_config(tmp_path / "cfg.json", base, **edits)
    code = main(
        ["predict", "--config", cfg_path, "--reaction", str(ws / "query.json")]
    )
    assert code == 2
    assert fragment in capsys.readouterr().err


def test_missing_referenced_file_exits_2(workspace, tmp_path, capsys):
    ws, base, _ = workspace
    cfg_path = write_config(
        tmp_path / "cfg.json", base, dataset=str(tmp_path / "absent.jsonl")
    )
    code = main(
        ["predict", "--config", cfg_path, "--reaction", str(ws / "query.json")]
    )
    assert code == 2
    assert "does not exist" in capsys.readouterr().err


def test_http_without_key_exits_2_naming_variable(
    workspace, tmp_path, capsys, monkeypatch
):
    ws, base, _ = workspace
    monkeypatch.delenv("RELM_API_KEY", raising=False)
    cfg_path = write_config(
        tmp_path / "cfg.json",
        base,
        backend={"kind": "http", "endpoint": "http://example.invalid/v1"},
    )
    code = main(
        ["predict", "--config", cfg_path, "--reaction", str(ws / "query.json")]
    )
    assert code == 2
    assert "RELM_API_KEY" in capsys.readouterr().err


def test_backend_failure_exits_1(workspace, tmp_path, capsys):
    ws, base, _ = workspace
    script = tmp_path / "script.json"
    script.write_text(json.dumps([{"match": "zz-never", "response": "x"}]))
    cfg_path = write_config(
        tmp_path / "cfg.json",
        base,
        backend={"kind": "mock", "mock_script": str(script)},
    )
    code = main(
        ["predict", "--config", cfg_path, "--reaction", str(ws / "query.json")]
    )
    assert code == 1
    assert "backend failure" in capsys.readouterr().err


def test_evaluate_missing_truth_fails_before_backend(workspace, tmp_path, capsys):
    ws, base, _ = workspace
    alien = {
        "id": "alien",
        "reactants": ["CCO"],
        "products": ["[Au+]"],  # not in the index
    }
    eval_path = tmp_path / "eval.jsonl"
    eval_path.write_text(json.dumps(alien) + "\n")
    script = tmp_path / "script.json"
    script.write_text(json.dumps([{"match": "zz-never", "response": "x"}]))
    cfg_path = write_config(
        tmp_path / "cfg.json",
        base,
        backend={"kind": "mock", "mock_script": str(script)},
    )
    code = main(
        [
            "evaluate",
            "--config",
            cfg_path,
            "--eval-dataset",
            str(eval_path),
            "--out-dir",
            str(tmp_path / "reports"),
        ]
    )
    err = capsys.readouterr().err
    # a backend error would exit 1; truth validation must win
    assert code == 2
    assert "alien" in err


def test_bad_k_sweep_exits_2(workspace, tmp_path, capsys):
    ws, base, _ = workspace
    code = main(
        [
            "evaluate",
            "--config",
            str(ws / "config.json"),
            "--k",
            "7..2",
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 2
    assert "7..2" in capsys.readouterr().err


def test_unknown_subcommand_raises_system_exit(workspace):
    with pytest.raises(SystemExit) as err:
        main(["no-such-command"])
    assert err.value.code == 2


# ---- evaluate details ----


def test_evaluate_sweep_writes_per_k_reports(workspace, tmp_path, capsys):
    ws, _, _ = workspace
    out_dir = tmp_path / "sweep"
    code = main(
        [
            "evaluate",
            "--config",
            str(ws / "config.json"),
            "--k",
            "2..4",
            "--out-dir",
            str(out_dir),
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    for k in (2, 3, 4):
        assert (out_dir / f"report_k{k}.json").exists()
        assert (out_dir / f"samples_k{k}.csv").exists()
        assert f"K={k} accuracy=" in out
    # the oracle re-ranker sits exactly on the retrieval ceiling
    for line in out.splitlines():
        k = int(line.split()[0].removeprefix("K="))
        acc = float(line.split("accuracy=")[1].split()[0])
        hit = float(line.split(f"hit@{k}=")[1].split()[0])
        assert acc == hit


def test_evaluate_output_is_byte_deterministic(workspace, tmp_path):
    ws, _, _ = workspace
    dirs = (tmp_path / "a", tmp_path / "b")
    for out_dir in dirs:
        assert (
            main(
                [
                    "evaluate",
                    "--config",
                    str(ws / "config.json"),
                    "--out-dir",
                    str(out_dir),
                ]
            )
            == 0
        )
    a, b = dirs
    assert (a / "samples_k4.csv").read_bytes() == (b / "samples_k4.csv").read_bytes()
    assert (a / "report_k4.json").read_bytes() == (b / "report_k4.json").read_bytes()


def test_compare_strategies_cli(workspace, tmp_path, capsys):
    ws, _, _ = workspace
    out = tmp_path / "rows.csv"
    code = main(
        [
            "compare-strategies",
            "--config",
            str(ws / "config.json"),
            "--strategies",
            "plain,mes:plain:3",
            "--out",
            str(out),
        ]
    )
    stdout = capsys.readouterr().out
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "strategy,acc,tokens,time_s"
    plain = lines[1].split(",")
    mes = lines[2].split(",")
    assert plain[0] == "plain" and mes[0] == "mes:plain:3"
    assert float(mes[2]) == 3 * float(plain[2])
    assert "plain: acc=" in stdout


def test_train_toy_zero_epochs(workspace, tmp_path, capsys):
    ws, base, _ = workspace
    cfg_path = write_config(
        tmp_path / "cfg.json",
        base,
        weights=str(tmp_path / "w.npz"),
        index=str(tmp_path / "idx.json"),
    )
    code = main(
        [
            "train-toy",
            "--config",
            cfg_path,
            "--embed-dim",
            "8",
            "--epochs",
            "0",
            "--out-weights",
            str(tmp_path / "w.npz"),
            "--out-trace",
            str(tmp_path / "trace.csv"),
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert (tmp_path / "trace.csv").read_text() == "epoch,loss\n"
    assert "final hit@1:" in out


def test_train_toy_divergence_exits_1(workspace, tmp_path, capsys):
    ws, base, _ = workspace
    cfg_path = write_config(
        tmp_path / "cfg.json",
        base,
        weights=str(tmp_path / "w.npz"),
        index=str(tmp_path / "idx.json"),
    )
    code = main(
        [
            "train-toy",
            "--config",
            cfg_path,
            "--embed-dim",
            "8",
            "--epochs",
            "200",
            "--learning-rate",
            "1e12",
            "--out-weights",
            str(tmp_path / "w.npz"),
            "--out-trace",
            str(tmp_path / "trace.csv"),
        ]
    )
    err = capsys.readouterr().err
    assert code == 1
    assert "training diverged at epoch" in err
    assert not (tmp_path / "w.npz").exists()


def test_fingerprint_mismatch_exits_2(workspace, tmp_path, capsys):
    ws, base, train = workspace
    other = random_init(
        EncoderConfig(feature_dim=FEATURE_CFG.feature_dim, embed_dim=8), seed=9
    )
    save_weights(other, tmp_path / "other.npz")
    cfg_path = write_config(
        tmp_path / "cfg.json", base, weights=str(tmp_path / "other.npz")
    )
    code = main(
        [
            "evaluate",
            "--config",
            cfg_path,
            "--out-dir",
            str(tmp_path / "reports"),
        ]
    )
    err = capsys.readouterr().err
    assert code == 2
    assert "built with different weights" in err
