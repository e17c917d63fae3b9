# tests/test_schema.py
import json
from pathlib import Path

from core.models import ExperimentConfig, FixtureSpec

SCHEMA = Path(__file__).resolve().parent.parent / "schema" / "experiment_config.schema.json"


def _schema() -> dict:
    return json.loads(SCHEMA.read_text())


def test_schema_lists_every_experiment_field():
    assert set(_schema()["properties"]) == set(ExperimentConfig.model_fields)


def test_schema_defaults_match_model():
    props = _schema()["properties"]
    config = ExperimentConfig(fixture="two_state")
    for name in ("n_max", "seed", "threads", "sample_count", "c", "t_grid", "suites"):
        assert props[name]["default"] == getattr(config, name), name


def test_fixture_object_form_matches_spec_fields():
    fixture = _schema()["properties"]["fixture"]["oneOf"][1]
    assert set(fixture["properties"]) == set(FixtureSpec.model_fields)
    assert fixture["properties"]["kind"]["enum"] == ["two_state", "circle", "custom"]


def test_schema_is_closed():
    assert _schema()["additionalProperties"] is False
