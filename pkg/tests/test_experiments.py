import json
from importlib import resources

import pytest

from scatterkit.experiments import EXPERIMENTS, RunReport, run_experiment


def test_registry_matches_schema_enum():
    schema = json.loads(
        resources.files("scatterkit").joinpath("schema.json").read_text()
    )
    assert set(schema["properties"]["experiment"]["enum"]) == set(EXPERIMENTS)
    assert len(EXPERIMENTS) == 12


def test_descriptions_are_single_line():
    for name, (_, desc) in EXPERIMENTS.items():
        assert desc.strip()
        assert "\n" not in desc


def test_unknown_experiment_raises():
    with pytest.raises(ValueError, match="unknown experiment"):
        run_experiment("no-such-thing")


def test_seed_argument_overrides_config(tmp_path):
    rep = run_experiment(
        "born-series", {"seed": 5, "figures": False}, str(tmp_path), seed=7
    )
    assert rep.seed == 7


# the other ten runners execute inside the acceptance and CLI suites
@pytest.mark.parametrize("name", ["wave-operator", "mikhlin-constants"])
def test_runner_end_to_end(name, tmp_path):
    rep = run_experiment(name, {"figures": False}, str(tmp_path), seed=0)
    assert isinstance(rep, RunReport)
    assert rep.passed, rep.summary()
    assert rep.csv_paths
    assert not rep.figure_paths
    assert rep.timings["total"] > 0
