"""Strict JSON config layer: unknown keys rejected with dotted paths, typed
defaults, cross-field validation, and the config -> runtime-object builders.
"""

import json

import numpy as np
import pytest

from diffusion_classifier import (AnalyticDenoiser, ConfigurationError,
                                  EvenlySpaced, ExplicitList, FixedSingle,
                                  MlpDenoiser, RunConfig, UniformRandom,
                                  Window, build_dataset, build_denoiser,
                                  build_options, build_schedule,
                                  parse_config, save_checkpoint)
from diffusion_classifier.classify import LossKind, Objective
from diffusion_classifier.config import (StrategyConfig, build_dataset_params,
                                         dataset_model)
from diffusion_classifier.harness import GMMParams, TemplateParams
from diffusion_classifier.strategy import StagePlan


def test_empty_config_is_fully_defaulted():
    cfg = RunConfig.from_dict({})
    assert cfg.schedule.kind == "linear"
    assert cfg.schedule.timesteps == 1000
    assert cfg.dataset.kind == "gmm"
    assert cfg.dataset.n_per_class == 25
    assert cfg.denoiser.kind == "analytic"
    assert cfg.classify.mode == "naive"
    assert cfg.classify.n_trials == 64
    assert cfg.classify.loss == "squared-l2"
    assert cfg.classify.objective == "uniform-l2"
    assert isinstance(cfg.strategy.build(), UniformRandom)
    assert not cfg.guidance.enabled
    assert not cfg.prune.enabled
    assert cfg.seed == 0
    assert cfg.output_dir == "out"


@pytest.mark.parametrize("raw,needle", [
    ({"bogus": 1}, "bogus"),
    ({"schedule": {"beta_max": 0.1}}, "schedule.beta_max"),
    ({"classify": {"plan": {"bogus": 1}}}, "classify.plan.bogus"),
    ({"dataset": {"sigma": 0.1}}, "dataset.sigma"),
    ({"scaling": {"strategies": [{"name": "a", "knd": "window"}]}},
     "scaling.strategies[0].knd"),
])
def test_unknown_keys_report_dotted_path(raw, needle):
    with pytest.raises(ConfigurationError, match="unknown config key") as e:
        RunConfig.from_dict(raw)
    assert needle in str(e.value)


@pytest.mark.parametrize("raw,needle", [
    ({"schedule": {"timesteps": "many"}}, "schedule.timesteps"),
    ({"seed": "zero"}, "seed"),
    ({"denoiser": {"hidden": 64}}, "denoiser.hidden"),
    ({"classify": {"crop": 1.5}}, "classify.crop"),
    ({"schedule": 5}, "schedule"),
])
def test_type_errors_name_the_key(raw, needle):
    with pytest.raises(ConfigurationError) as e:
        RunConfig.from_dict(raw)
    assert needle in str(e.value)


def test_enum_values_are_checked():
    with pytest.raises(ConfigurationError, match="classify.loss"):
        RunConfig.from_dict({"classify": {"loss": "l3"}})
    with pytest.raises(ConfigurationError, match="classify.objective"):
        RunConfig.from_dict({"classify": {"objective": "elbo"}})
    with pytest.raises(ConfigurationError, match="dataset.kind"):
        RunConfig.from_dict({"dataset": {"kind": "cifar"}})
    with pytest.raises(ConfigurationError, match="denoiser.kind"):
        RunConfig.from_dict({"denoiser": {"kind": "unet"}})
    with pytest.raises(ConfigurationError, match="classify.mode"):
        RunConfig.from_dict({"classify": {"mode": "greedy"}})


def test_cross_field_validation():
    with pytest.raises(ConfigurationError, match="classify.objective"):
        RunConfig.from_dict({"classify": {"objective": "vlb"},
                             "denoiser": {"kind": "mlp"}})
    # an mlp with a variance head may use vlb
    RunConfig.from_dict({"classify": {"objective": "vlb"},
                         "denoiser": {"kind": "mlp", "variance_head": True}})
    with pytest.raises(ConfigurationError, match="classify.crop"):
        RunConfig.from_dict({"classify": {"crop": 1}})
    RunConfig.from_dict({"classify": {"crop": 1},
                         "dataset": {"kind": "template-images"}})
    with pytest.raises(ConfigurationError, match="classify.plan"):
        RunConfig.from_dict({"classify": {"mode": "adaptive"}})
    with pytest.raises(ConfigurationError, match="prune.k"):
        RunConfig.from_dict({"prune": {"enabled": True, "k": 0}})
    with pytest.raises(ConfigurationError, match="dataset.variances"):
        RunConfig.from_dict({"dataset": {"means": [[0.0], [1.0]],
                                         "variances": [1.0]}})
    with pytest.raises(ConfigurationError, match="dataset.prior"):
        RunConfig.from_dict({"dataset": {"means": [[0.0], [1.0]],
                                         "prior": [1.0]}})


def test_plan_parses_to_stage_plan():
    cfg = RunConfig.from_dict({"classify": {
        "mode": "adaptive", "plan": {"keep": [5, 1], "trials": [25, 250]}}})
    plan = cfg.classify.plan
    assert isinstance(plan, StagePlan)
    assert plan.keep == (5, 1)
    assert plan.trials == (25, 250)
    assert RunConfig.from_dict({}).classify.plan is None


def test_strategy_build_dispatch():
    cases = {
        "uniform-random": UniformRandom(),
        "evenly-spaced": EvenlySpaced(6),
        "fixed-single": FixedSingle(120),
        "window": Window(300, 40),
        "explicit-list": ExplicitList((1, 9, 17)),
    }
    raw = {"kind": "evenly-spaced", "n_distinct": 6}
    assert StrategyConfig.from_dict(raw).build() == cases["evenly-spaced"]
    assert StrategyConfig.from_dict({"kind": "fixed-single", "t": 120}) \
        .build() == cases["fixed-single"]
    assert StrategyConfig.from_dict(
        {"kind": "window", "center": 300, "halfwidth": 40}).build() \
        == cases["window"]
    assert StrategyConfig.from_dict(
        {"kind": "explicit-list", "timesteps": [1, 9, 17]}).build() \
        == cases["explicit-list"]
    assert StrategyConfig.from_dict({}).build() == cases["uniform-random"]
    with pytest.raises(ConfigurationError, match="strategy kind"):
        StrategyConfig.from_dict({"kind": "sobol"}).build()


def test_config_hash_is_stable_and_sensitive():
    a = RunConfig.from_dict({"seed": 3})
    b = RunConfig.from_dict({"seed": 3})
    assert a.hash() == b.hash()
    assert len(a.hash()) == 16
    assert int(a.hash(), 16) >= 0
    assert a.hash() != RunConfig.from_dict({"seed": 4}).hash()
    assert a.hash() != RunConfig.from_dict(
        {"seed": 3, "classify": {"n_trials": 65}}).hash()


def test_parse_config_file_handling(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 9, "classify": {"n_trials": 7}}))
    cfg = parse_config(path)
    assert cfg.seed == 9
    assert cfg.classify.n_trials == 7
    with pytest.raises(ConfigurationError, match="not found"):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    with pytest.raises(ConfigurationError, match="not valid JSON"):
        parse_config(bad)


def test_build_schedule_and_default_dataset():
    cfg = RunConfig.from_dict({})
    schedule = build_schedule(cfg)
    assert schedule.T == 1000
    assert schedule.beta(1) == pytest.approx(1e-4)
    ds = build_dataset(cfg)
    assert ds.xs.shape == (50, 8)
    assert ds.n_classes == 2
    params = build_dataset_params(cfg)
    assert isinstance(params, GMMParams)
    assert params.model.classes[0].means[0][0] == 3.0
    assert params.model.classes[1].means[0][0] == -3.0
    again = build_dataset(cfg)
    assert np.array_equal(ds.xs, again.xs)
    assert not np.array_equal(ds.xs,
                              build_dataset(RunConfig.from_dict({"seed": 1})).xs)


def test_build_template_dataset():
    cfg = RunConfig.from_dict({"dataset": {
        "kind": "template-images", "n_classes": 3, "height": 6, "width": 5,
        "n_per_class": 2, "noise_sigma": 0.2, "clip": [0.0, 1.0]}})
    ds = build_dataset(cfg)
    assert isinstance(ds.params, TemplateParams)
    assert ds.xs.shape == (6, 6, 5)
    assert ds.xs.min() >= 0.0 and ds.xs.max() <= 1.0
    model = dataset_model(ds)
    assert model.n_classes == 3
    assert model.d == 30


def test_build_denoiser_analytic_and_mlp(tmp_path):
    cfg = RunConfig.from_dict({"dataset": {"means": [[2.0, 0.0], [-2.0, 0.0]],
                                           "prior": [0.75, 0.25]}})
    schedule = build_schedule(cfg)
    ds = build_dataset(cfg)
    den = build_denoiser(cfg, ds, schedule)
    assert isinstance(den, AnalyticDenoiser)
    assert np.array_equal(den.prior, [0.75, 0.25])

    mlp_cfg = RunConfig.from_dict({
        "dataset": {"means": [[2.0, 0.0], [-2.0, 0.0]]},
        "denoiser": {"kind": "mlp", "hidden": [6], "embed_dim": 4}})
    with pytest.raises(ConfigurationError, match="checkpoint"):
        build_denoiser(mlp_cfg, ds, schedule)
    fresh = build_denoiser(mlp_cfg, ds, schedule, for_training=True)
    assert isinstance(fresh, MlpDenoiser)
    assert fresh.d == 2
    assert fresh.n_classes == 2
    # the same seed re-creates identical init weights
    twin = build_denoiser(mlp_cfg, ds, schedule, for_training=True)
    assert all(np.array_equal(fresh.state()[k], twin.state()[k])
               for k in fresh.state())

    ckpt = tmp_path / "m.dck"
    save_checkpoint(fresh, mlp_cfg.to_dict(), ckpt)
    loaded_cfg = RunConfig.from_dict({
        "dataset": {"means": [[2.0, 0.0], [-2.0, 0.0]]},
        "denoiser": {"kind": "mlp", "checkpoint": str(ckpt)}})
    loaded = build_denoiser(loaded_cfg, ds, schedule)
    assert np.array_equal(loaded.state()["W1"], fresh.state()["W1"])


def test_build_options_wires_pruning_and_noise():
    cfg = RunConfig.from_dict({"prune": {"enabled": True, "k": 2,
                                         "flip_prob": 0.0},
                               "noise": {"kind": "zero"}})
    ds = build_dataset(cfg)
    options = build_options(cfg, ds)
    assert options.prune_k == 2
    assert callable(options.pruner)
    scores = options.pruner(ds.xs[0], np.random.default_rng(0))
    assert scores.shape == (2,)
    assert int(np.argmax(scores)) == int(ds.labels[0])
    assert options.noise_variant.kind == "zero"
    plain = build_options(RunConfig.from_dict({}), ds)
    assert plain.prune_k is None and plain.pruner is None
    assert plain.loss == LossKind.SQUARED_L2
    assert plain.objective == Objective.UNIFORM_L2


def test_truncated_noise_passes_bounds_through():
    cfg = RunConfig.from_dict({"noise": {"kind": "truncated-normal",
                                         "low": -0.5, "high": 2.0}})
    variant = cfg.noise.build()
    assert variant.kind == "truncated-normal"
    assert (variant.low, variant.high) == (-0.5, 2.0)
