import math

import pytest

from fedsim.aggregation.simagg import AggregationConfig
from fedsim.data_processing.create_synthetic_task import TaskConfig
from fedsim.errors import ConfigParseError, InvalidConfig
from fedsim.privacy.dp_mechanisms import Mechanism, PrivacyConfig
from fedsim.training.federation_config import (
    Aggregator,
    ExperimentSpec,
    FederationConfig,
    config_label,
    experiment_from_dict,
    federation_from_dict,
    federation_to_dict,
    load_experiment_spec,
    read_toml,
    write_toml,
)


def test_default_federation_samples_seven_of_thirty_three():
    cfg = FederationConfig()
    assert cfg.cohort_size == 7
    assert cfg.max_unique_cohorts == math.comb(33, 7)


@pytest.mark.parametrize("n, fraction, expected", [(10, 0.3, 3), (10, 0.25, 3), (5, 1.0, 5), (40, 0.01, 1)])
def test_cohort_size_rounds_up(n, fraction, expected):
    assert FederationConfig(n_collaborators=n, cohort_fraction=fraction).cohort_size == expected


@pytest.mark.parametrize("kwargs", [{"n_collaborators": 0}, {"cohort_fraction": 0.0}, {"cohort_fraction": 1.5},
                                    {"n_rounds": 0}, {"sampling_seed": -1}, {"aggregator": "dp_simagg"}])
def test_invalid_federation(kwargs):
    with pytest.raises((InvalidConfig, ValueError)):
        FederationConfig(**kwargs)


def test_too_many_rounds_is_not_rejected_at_construction():
    cfg = FederationConfig(n_collaborators=3, cohort_fraction=0.34, n_rounds=10)
    assert cfg.max_unique_cohorts == 3


def test_resolved_config_survives_toml(tmp_path):
    cfg = FederationConfig(n_collaborators=12, cohort_fraction=0.25, n_rounds=4, aggregator="dp_simagg",
                           privacy=PrivacyConfig(0.1, 1e-5, Mechanism.DISTRIBUTED_LAPLACE, seed=7),
                           aggregation=AggregationConfig(literal_eq6=True), sampling_seed=7)
    task = TaskConfig(dim=3, heterogeneity=0.25, adversarial=(2,))
    path = write_toml(federation_to_dict(cfg, task, label="x", seed=7), tmp_path / "config.toml")
    doc = read_toml(path)
    assert doc["run"] == {"label": "x", "seed": 7}
    again, task_again = federation_from_dict(doc)
    assert again == cfg
    assert task_again == task


def test_unknown_keys_are_parse_errors():
    with pytest.raises(ConfigParseError):
        federation_from_dict({"federation": {"n_rounds": 2, "n_round": 3}})


def test_bad_values_are_invalid_config():
    with pytest.raises(InvalidConfig):
        federation_from_dict({"federation": {"n_rounds": "many"}})
    with pytest.raises(InvalidConfig):
        federation_from_dict({"federation": {"aggregator": "krum"}})


def test_unreadable_toml(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[federation\nn_rounds = 2", encoding="utf-8")
    with pytest.raises(ConfigParseError):
        read_toml(bad)
    with pytest.raises(ConfigParseError):
        read_toml(tmp_path / "missing.toml")


def test_packaged_spec_gives_four_configurations():
    spec = load_experiment_spec()
    runs = list(spec.sub_runs())
    assert [r.label for r in runs] == ["DP-SimAgg (ε=0.1)", "DP-SimAgg (ε=1)", "DP-SimAgg (ε=10)", "SimAgg"]
    assert [r.dirname for r in runs] == ["dp_simagg_eps0.1/seed_0", "dp_simagg_eps1/seed_0",
                                         "dp_simagg_eps10/seed_0", "simagg/seed_0"]
    assert runs[0].federation.privacy.epsilon == 0.1
    assert runs[-1].federation.privacy is None
    assert spec.federation.cohort_size == 7
    assert spec.task.heterogeneity == 0.5


def test_sub_runs_share_seed_across_configurations():
    spec = ExperimentSpec(federation=FederationConfig(n_collaborators=6, n_rounds=2),
                          aggregators=("dp_simagg", "simagg", "fedavg"), epsilons=(1.0,), seeds=(3, 4))
    runs = list(spec.sub_runs())
    assert len(runs) == 6
    for run in runs:
        assert run.federation.sampling_seed == run.seed
        if run.federation.privacy is not None:
            assert run.federation.privacy.seed == run.seed
    assert runs[2].label == "FedAvg"
    assert runs[2].dirname == "fedavg/seed_3"


def test_experiment_from_dict_rejects_per_run_keys():
    with pytest.raises(ConfigParseError):
        experiment_from_dict({"federation": {"aggregator": "simagg"}})
    with pytest.raises(ConfigParseError):
        experiment_from_dict({"privacy": {"epsilon": 1.0}})
    with pytest.raises(ConfigParseError):
        experiment_from_dict({"plots": {}})


def test_experiment_from_dict_reads_every_section():
    spec = experiment_from_dict({
        "experiment": {"aggregators": ["simagg", "fedavg"], "seeds": [1, 2], "out_dir": "elsewhere"},
        "federation": {"n_collaborators": 10, "cohort_fraction": 0.3, "n_rounds": 3},
        "aggregation": {"unweighted_master": True},
        "privacy": {"epsilons": [5.0], "delta": 1e-6},
        "task": {"dim": 2},
    })
    assert spec.aggregators == (Aggregator.SIMAGG, Aggregator.FEDAVG)
    assert spec.seeds == (1, 2)
    assert spec.out_dir == "elsewhere"
    assert spec.federation.aggregation.unweighted_master
    assert spec.delta == 1e-6
    assert spec.task.dim == 2


@pytest.mark.parametrize("kwargs", [{"aggregators": ()}, {"epsilons": ()}, {"epsilons": (0.0,)},
                                    {"delta": 1.0}, {"seeds": ()}, {"seeds": (1, 1)}])
def test_invalid_experiment(kwargs):
    with pytest.raises(InvalidConfig):
        ExperimentSpec(**kwargs)


def test_config_labels():
    assert config_label("dp_simagg", 0.1) == "DP-SimAgg (ε=0.1)"
    assert config_label(Aggregator.SIMAGG) == "SimAgg"
    assert config_label("fedavg") == "FedAvg"
