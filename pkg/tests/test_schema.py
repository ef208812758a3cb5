"""The metrics report documents validate against docs/metrics_schema.json."""

import json
from dataclasses import asdict
from pathlib import Path

import pytest

jsonschema = pytest.importorskip("jsonschema")

from tgnsvdd.cli import RunConfig
from tgnsvdd.evaluation import build_report, model_block, write_report

SCHEMA = json.loads(
    (Path(__file__).resolve().parent.parent / "docs" / "metrics_schema.json").read_text()
)
VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def sample_report():
    truth = ["Normal", "Flood", "Normal", "Scan", "Normal", None]
    scores = [0.2, 4.1, 0.4, 3.0, 2.9, 0.1]
    models = {
        "tgn_svdd": model_block(truth, scores, tau=1.5),
        "iforest": model_block(truth, [0.3, 0.8, 0.4, 0.7, 0.5, 0.2], tau=0.6),
    }
    return build_report("with-features", asdict(RunConfig()), models)


def test_schema_is_itself_valid():
    jsonschema.Draft202012Validator.check_schema(SCHEMA)


def test_report_validates():
    VALIDATOR.validate(sample_report())


def test_written_report_validates(tmp_path):
    path = tmp_path / "report.json"
    write_report(path, sample_report())
    VALIDATOR.validate(json.loads(path.read_text()))


def test_schema_rejects_missing_metric():
    doc = sample_report()
    del doc["models"]["tgn_svdd"]["roc_auc"]
    with pytest.raises(jsonschema.ValidationError, match="roc_auc"):
        VALIDATOR.validate(doc)


def test_schema_rejects_unknown_scenario():
    doc = sample_report()
    doc["scenario"] = "bogus"
    with pytest.raises(jsonschema.ValidationError):
        VALIDATOR.validate(doc)


def test_schema_rejects_extra_config_key():
    doc = sample_report()
    doc["config"]["learning_rate"] = 0.1
    with pytest.raises(jsonschema.ValidationError):
        VALIDATOR.validate(doc)


def test_schema_rejects_empty_models():
    doc = sample_report()
    doc["models"] = {}
    with pytest.raises(jsonschema.ValidationError):
        VALIDATOR.validate(doc)
