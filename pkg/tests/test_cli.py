"""Command-line pipeline: config layering, artifacts, and error surfaces."""

import json

import numpy as np
import pytest

from tgnsvdd import cli, evaluation
from tgnsvdd.cli import RunConfig, build_parser, effective_config, load_config, main
from tgnsvdd.ctdg import NORMAL, EventStream
from tgnsvdd.dataio import load_temporal_csv


def write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# configuration layering
# ---------------------------------------------------------------------------


def test_config_defaults():
    rc = RunConfig()
    assert (rc.d_m, rc.d_t, rc.p, rc.heads) == (32, 32, 32, 2)
    assert (rc.epochs, rc.batch_size, rc.n_neighbors) == (25, 200, 10)
    assert (rc.quantile, rc.weight_decay, rc.lr) == (0.99, 1e-4, 1e-4)
    assert rc.scenario == "with-features" and rc.seed == 0


def test_flags_override_config_file(tmp_path):
    cfg = write_json(tmp_path / "cfg.json", {"epochs": 3, "lr": 0.01, "seed": 5})
    parser = build_parser()
    args = parser.parse_args(
        ["train", "--train", "x.csv", "--model", "m.json",
         "--config", str(cfg), "--epochs", "7", "--d-m", "16"]
    )
    rc = effective_config(args)
    assert rc.epochs == 7        # flag beats file
    assert rc.lr == 0.01         # file beats default
    assert rc.seed == 5
    assert rc.d_m == 16          # flag beats default
    assert rc.batch_size == 200  # untouched default


def test_load_config_rejects_unknown_key_by_name(tmp_path):
    cfg = write_json(tmp_path / "cfg.json", {"epcohs": 3})
    with pytest.raises(ValueError, match=r"unknown config key 'epcohs'"):
        load_config(cfg)
    not_object = write_json(tmp_path / "arr.json", [1, 2])
    with pytest.raises(ValueError, match="JSON object"):
        load_config(not_object)


def test_run_config_guards():
    with pytest.raises(ValueError, match="scenario"):
        RunConfig(scenario="ablation")
    with pytest.raises(ValueError, match="quantile"):
        RunConfig(quantile=1.5)
    with pytest.raises(ValueError, match="positive"):
        RunConfig(epochs=0)
    with pytest.raises(ValueError, match="nonnegative"):
        RunConfig(n_train=-1)


def test_bad_config_file_fails_command_with_message(tmp_path, capsys):
    cfg = write_json(tmp_path / "cfg.json", {"learning_rate": 0.1})
    code = main(["train", "--train", "x.csv", "--model", "m.json", "--config", str(cfg)])
    assert code == 1
    err = capsys.readouterr().err
    assert "error:" in err and "unknown config key 'learning_rate'" in err


def test_argparse_errors_exit_two(capsys):
    assert main(["no-such-command"]) == 2
    assert main(["synth"]) == 2  # missing required --out/--meta
    capsys.readouterr()


# ---------------------------------------------------------------------------
# synth determinism
# ---------------------------------------------------------------------------

SYNTH_FLAGS = ["--n-nodes", "20", "--n-benign", "300", "--n-attack", "40", "--seed", "3"]


def test_synth_reruns_are_byte_identical(tmp_path, capsys):
    for tag in ("a", "b"):
        code = main(["synth", "--out", str(tmp_path / f"{tag}.csv"),
                     "--meta", str(tmp_path / f"{tag}.json")] + SYNTH_FLAGS)
        assert code == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    meta = json.loads((tmp_path / "a.json").read_text())
    assert meta["command"] == "synth"
    assert len(meta["attacker_ids"]) == 2
    assert meta["config"]["seed"] == 3
    capsys.readouterr()


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------

TRAIN_FLAGS = ["--d-m", "8", "--d-t", "8", "--p", "8", "--heads", "2",
               "--epochs", "2", "--batch-size", "64", "--n-neighbors", "5"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One shared synth -> prepare -> train -> calibrate -> predict run."""
    root = tmp_path_factory.mktemp("pipeline")
    raw, meta = root / "raw.csv", root / "meta.json"
    data = root / "data"
    model = root / "model.json"
    scores = root / "scores.csv"

    assert main(["synth", "--out", str(raw), "--meta", str(meta)] + SYNTH_FLAGS) == 0
    assert main(["prepare", "--in", str(raw), "--out-dir", str(data)]) == 0
    assert main(["train", "--train", str(data / "train.csv"),
                 "--model", str(model)] + TRAIN_FLAGS) == 0
    assert main(["calibrate", "--model", str(model),
                 "--train", str(data / "train.csv")] + TRAIN_FLAGS) == 0
    assert main(["predict", "--model", str(model), "--test", str(data / "test.csv"),
                 "--warmup", str(data / "train.csv"), str(data / "val.csv"),
                 "--scores", str(scores)] + TRAIN_FLAGS) == 0
    return root


def test_prepare_outputs(pipeline):
    data = pipeline / "data"
    doc = json.loads((data / "prepare.json").read_text())
    train, _, _ = load_temporal_csv(data / "train.csv")
    val, _, _ = load_temporal_csv(data / "val.csv")
    test, _, _ = load_temporal_csv(data / "test.csv")
    assert doc["split"] == {"n_train": len(train), "n_val": len(val), "n_test": len(test)}
    assert len(doc["feature_min"]) == 8
    # train/val are all-Normal; the first test event is the first attack
    assert all(lab == NORMAL for lab in train.labels + val.labels)
    assert test.labels[0] != NORMAL
    # features were min-max scaled on the train prefix
    assert train.features.min() >= 0.0 and train.features.max() <= 1.0
    assert float(train.features.max()) == 1.0


def test_trained_model_artifact(pipeline):
    from tgnsvdd.svdd import load_model
    model = load_model(pipeline / "model.json")
    assert model.config.epochs == 2 and model.config.dims.d_m == 8
    assert model.tau is not None and model.tau > 0
    assert len(model.history["epoch_mean_score"]) == 2


def test_predict_scores_csv_and_sidecar(pipeline):
    data = pipeline / "data"
    cols = evaluation.read_scores_csv(pipeline / "scores.csv")
    train, _, _ = load_temporal_csv(data / "train.csv")
    val, _, _ = load_temporal_csv(data / "val.csv")
    test, _, _ = load_temporal_csv(data / "test.csv")
    assert cols["event_index"][0] == len(train) + len(val)
    assert len(cols["score"]) == len(test)
    np.testing.assert_array_equal(cols["threshold"], cols["threshold"][0])
    sidecar = json.loads((pipeline / "scores.csv.meta.json").read_text())
    assert sidecar["command"] == "predict"
    assert sidecar["config"]["epochs"] == 2
    assert str(pipeline / "model.json") in sidecar["inputs"]


def test_baseline_command_single_model(pipeline, capsys):
    data = pipeline / "data"
    out = pipeline / "bl"
    code = main(["baseline", "--train", str(data / "train.csv"),
                 "--test", str(data / "test.csv"), "--out-dir", str(out),
                 "--which", "iforest"] + TRAIN_FLAGS)
    assert code == 0
    capsys.readouterr()
    manifest = json.loads((out / "baseline.json").read_text())
    assert set(manifest["outputs"]) == {"iforest"}
    assert 0.0 < manifest["contamination"] <= 0.5
    cols = evaluation.read_scores_csv(out / "iforest.csv")
    test, _, _ = load_temporal_csv(data / "test.csv")
    assert len(cols["score"]) == len(test)
    assert not (out / "lof_novelty.csv").exists()


def test_baseline_lof_uses_k_flag(pipeline, capsys):
    data = pipeline / "data"
    out = pipeline / "bl_lof"
    code = main(["baseline", "--train", str(data / "train.csv"),
                 "--test", str(data / "test.csv"), "--out-dir", str(out),
                 "--which", "lof-novelty", "--k", "5"] + TRAIN_FLAGS)
    assert code == 0
    capsys.readouterr()
    assert (out / "lof_novelty.csv").exists()


def test_report_command(pipeline, tmp_path, capsys):
    out = pipeline / "bl" / "iforest.csv"
    report_path = tmp_path / "report.json"
    code = main(["report", "--out", str(report_path),
                 "--add", f"tgn_svdd={pipeline / 'scores.csv'}", f"iforest={out}"])
    assert code == 0
    capsys.readouterr()
    doc = json.loads(report_path.read_text())
    assert doc["scenario"] == "with-features"
    assert set(doc["models"]) == {"tgn_svdd", "iforest"}
    for block in doc["models"].values():
        assert {"precision", "recall", "f1", "roc_auc", "threshold",
                "confusion", "n_events"} <= set(block)
    assert doc["config"]["epochs"] == 25  # report ran with defaults


def test_report_rejects_malformed_add(tmp_path, capsys):
    code = main(["report", "--out", str(tmp_path / "r.json"), "--add", "justaname"])
    assert code == 1
    assert "name=path" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# scenario switch and error paths
# ---------------------------------------------------------------------------


def test_prepare_without_features_zeroes_columns(tmp_path, capsys):
    raw, meta = tmp_path / "raw.csv", tmp_path / "meta.json"
    assert main(["synth", "--out", str(raw), "--meta", str(meta)] + SYNTH_FLAGS) == 0
    out = tmp_path / "data"
    assert main(["prepare", "--in", str(raw), "--out-dir", str(out),
                 "--scenario", "without-features"]) == 0
    capsys.readouterr()
    for part in ("train", "val", "test"):
        stream, _, _ = load_temporal_csv(out / f"{part}.csv")
        assert not stream.features.any()
    doc = json.loads((out / "prepare.json").read_text())
    assert doc["config"]["scenario"] == "without-features"


def test_prepare_requires_an_input(tmp_path, capsys):
    code = main(["prepare", "--out-dir", str(tmp_path / "d")])
    assert code == 1
    assert "prepare needs --in" in capsys.readouterr().err


def test_inject_experiment_requires_hard_mode_meta(tmp_path, capsys):
    raw, meta = tmp_path / "raw.csv", tmp_path / "meta.json"
    assert main(["synth", "--out", str(raw), "--meta", str(meta)] + SYNTH_FLAGS) == 0
    out = tmp_path / "data"
    assert main(["prepare", "--in", str(raw), "--out-dir", str(out)]) == 0
    capsys.readouterr()
    code = main(["inject-experiment", "--train", str(out / "train.csv"),
                 "--val", str(out / "val.csv"), "--test", str(out / "test.csv"),
                 "--meta", str(meta), "--out-dir", str(tmp_path / "inj")] + TRAIN_FLAGS)
    assert code == 1
    assert "no suspect node" in capsys.readouterr().err


def test_inject_experiment_end_to_end(tmp_path, capsys):
    raw, meta = tmp_path / "raw.csv", tmp_path / "meta.json"
    assert main(["synth", "--out", str(raw), "--meta", str(meta),
                 "--hard-mode"] + SYNTH_FLAGS) == 0
    data = tmp_path / "data"
    assert main(["prepare", "--in", str(raw), "--out-dir", str(data)]) == 0
    inj = tmp_path / "inj"
    code = main(["inject-experiment", "--train", str(data / "train.csv"),
                 "--val", str(data / "val.csv"), "--test", str(data / "test.csv"),
                 "--meta", str(meta), "--n-inject", "5",
                 "--out-dir", str(inj)] + TRAIN_FLAGS)
    assert code == 0
    capsys.readouterr()
    doc = json.loads((inj / "inject_experiment.json").read_text())
    suspect = json.loads(meta.read_text())["suspect"]
    assert doc["suspect"] == suspect
    assert doc["n_injected"] == 5
    assert doc["suspect_normal_events"] > 0
    assert 0.0 <= doc["suspect_normal_below_threshold"] <= 1.0
    assert 0.0 <= doc["roc_auc"] <= 1.0
    assert (inj / "injected_model.json").exists()
    assert (inj / "injected_scores.csv").exists()
    # the injected copies never leak the suspect into the score CSV's train part
    cols = evaluation.read_scores_csv(inj / "injected_scores.csv")
    test, _, _ = load_temporal_csv(data / "test.csv")
    assert len(cols["score"]) == len(test)


def test_missing_input_file_is_reported(tmp_path, capsys):
    code = main(["train", "--train", str(tmp_path / "nope.csv"),
                 "--model", str(tmp_path / "m.json")])
    assert code == 1
    assert "error:" in capsys.readouterr().err
