from pathlib import Path

import pytest
from pydantic import ValidationError

from rpvf.config import ExperimentConfig, ExperimentId, LearnerConfig
from rpvf.spectral import ValueScale


def test_defaults():
    config = ExperimentConfig()
    assert config.alpha == 0.9
    assert config.k == 4
    assert config.sigma == 0.1
    assert config.wall_penalty == -200.0
    assert config.kernel_scale is ValueScale.SUM
    assert config.symmetrized_diffusion
    assert config.sampling_budget() == (500, 50)
    assert config.sampling_budget(large=True) == (5000, 100)
    assert config.output_dir == Path("results") / "goalgrid-compare"


@pytest.mark.parametrize(
    ("experiment", "beta"),
    [
        (ExperimentId.KERNEL_EIG, 0.1),
        (ExperimentId.THREEROOM_BASIS, 0.1),
        (ExperimentId.GOALGRID_COMPARE, 1.0),
        (ExperimentId.MINEGRID_BENCH, 0.1),
    ],
)
def test_beta_defaults_per_experiment(experiment, beta):
    assert ExperimentConfig(experiment=experiment).resolved_beta == beta
    assert ExperimentConfig(experiment=experiment, beta=0.0).resolved_beta == 0.0


def test_environment_overrides_defaults(monkeypatch):
    monkeypatch.setenv("RPVF_ALPHA", "0.8")
    monkeypatch.setenv("RPVF_INSTANCES", "3")
    config = ExperimentConfig()
    assert config.alpha == 0.8
    assert config.instances == 3


def test_config_file_values(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("alpha=0.7\nbeta=0.25\nsymmetrized_diffusion=false\nkernel_scale=max\n")
    config = ExperimentConfig.load(path)
    assert config.alpha == 0.7
    assert config.beta == 0.25
    assert not config.symmetrized_diffusion
    assert config.kernel_scale is ValueScale.MAX


def test_precedence_is_flags_then_environment_then_file(tmp_path, monkeypatch):
    path = tmp_path / "run.conf"
    path.write_text("alpha=0.7\nk=6\nseed=5\n")
    monkeypatch.setenv("RPVF_K", "8")

    config = ExperimentConfig.load(path, alpha=0.95, seed=None)
    assert config.alpha == 0.95
    assert config.k == 8
    assert config.seed == 5


def test_missing_config_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        ExperimentConfig.load(tmp_path / "absent.conf")


@pytest.mark.parametrize(
    "overrides",
    [
        {"alpha": 1.0},
        {"alpha": 0.0},
        {"sigma": 0.0},
        {"beta": -0.1},
        {"wall_penalty": 5.0},
        {"k": 0},
        {"workers": 0},
        {"kernel_scale": "median"},
    ],
)
def test_invalid_values_are_rejected(overrides):
    with pytest.raises(ValidationError):
        ExperimentConfig(**overrides)


def test_learner_config_follows_experiment():
    config = ExperimentConfig(alpha=0.8, k=3, iterations=7, seed=2)
    learner = config.learner_config()
    assert learner == LearnerConfig(alpha=0.8, k=3, t=7, seed=2)
    assert config.learner_config(seed=11).seed == 11


def test_learner_config_is_frozen():
    learner = LearnerConfig()
    with pytest.raises(ValidationError):
        learner.alpha = 0.5


def test_learner_needs_at_least_one_iteration():
    with pytest.raises(ValidationError):
        LearnerConfig(t=0)
