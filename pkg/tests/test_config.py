import json

import pytest

from subanneal.config import ConfigError, ExperimentConfig


def _minimal(**extra):
    raw = {"task": "prune-tune"}
    raw.update(extra)
    return raw


def test_roundtrip_is_identity():
    cfg = ExperimentConfig.from_dict(_minimal(
        dataset="synthetic-blobs", method=["oneshot", "temperature-anneal"],
        rho=[0.5, 0.9], phi=3, tau0=0.5, epochs=4, seed=7, repeats=2))
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert again.config_hash() == cfg.config_hash()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict(_minimal(learning_rate=0.1))
    with pytest.raises(ConfigError, match="unknown lr keys"):
        ExperimentConfig.from_dict(_minimal(lr={"kind": "constant",
                                                "vallue": 0.1}))
    with pytest.raises(ConfigError, match="unknown optimizer keys"):
        ExperimentConfig.from_dict(_minimal(optimizer={"kind": "sgd",
                                                       "mu": 0.9}))
    with pytest.raises(ConfigError, match="unknown ensemble keys"):
        ExperimentConfig.from_dict(_minimal(ensemble={"members": 4}))
    with pytest.raises(ConfigError, match="unknown blobs keys"):
        ExperimentConfig.from_dict(_minimal(blobs={"count": 10}))


def test_enums_validated():
    for bad in (dict(task="explode"), dict(dataset="imagenet"),
                dict(model="resnet"), dict(method="grasp"),
                dict(selector="fisher"), dict(eval_mask="bernoulli")):
        raw = {"task": "prune-tune"}
        raw.update(bad)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)


def test_ranges_validated():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_minimal(rho=1.0))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_minimal(tau0=1.5))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_minimal(batch_size=0))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_minimal(lr={"kind": "constant",
                                                "value": -0.1}))


def test_scalars_promote_to_lists():
    cfg = ExperimentConfig.from_dict(_minimal(method="oneshot", rho=0.9,
                                              phi=5, tau0=0.4))
    assert cfg.method == ["oneshot"]
    assert cfg.rho == [0.9]
    assert cfg.phi == [5]
    assert cfg.tau0 == [0.4]


def test_run_seeds_explicit_list_beats_repeats():
    cfg = ExperimentConfig.from_dict(_minimal(seeds=[1, 2, 3], repeats=7))
    assert cfg.run_seeds() == [1, 2, 3]
    cfg2 = ExperimentConfig.from_dict(_minimal(seed=10, repeats=3))
    assert cfg2.run_seeds() == [10, 11, 12]


def test_decay_defaults_follow_method():
    cfg = ExperimentConfig.from_dict(_minimal())
    assert cfg.decay_for("temperature-anneal") == "cosine"
    assert cfg.decay_for("random-anneal") == "linear"
    forced = ExperimentConfig.from_dict(_minimal(anneal_decay="linear"))
    assert forced.decay_for("temperature-anneal") == "linear"


def test_cifar_defaults_to_desk_scale_subset():
    cfg = ExperimentConfig.from_dict(_minimal(dataset="cifar10-subset"))
    assert cfg.train_subset == 10000
    full = ExperimentConfig.from_dict(_minimal(dataset="cifar10-subset",
                                               train_subset=0))
    assert full.train_subset == 0


def test_eval_task_requires_weights():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"task": "eval"})
    ok = ExperimentConfig.from_dict({"task": "eval", "weights": "w.ssam"})
    assert ok.weights == "w.ssam"


def test_file_roundtrip(tmp_path):
    cfg = ExperimentConfig.from_dict(_minimal(seed=3))
    path = tmp_path / "config.json"
    cfg.save(path)
    again = ExperimentConfig.from_file(path)
    assert again.to_dict() == cfg.to_dict()


def test_invalid_json_is_a_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        ExperimentConfig.from_file(path)


def test_config_hash_stable_and_sensitive():
    a = ExperimentConfig.from_dict(_minimal(seed=1))
    b = ExperimentConfig.from_dict(_minimal(seed=1))
    c = ExperimentConfig.from_dict(_minimal(seed=2))
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
