"""Run configuration: one JSON file drives every CLI subcommand.

Parsing is strict: unknown keys are rejected with their dotted path, wrong
types and cross-field contradictions raise ConfigurationError naming the
offending field.  Every section has defaults, so the minimal config is an
empty object.

Seed discipline: the single top-level seed is split into fixed,
documented sub-streams (dataset generation, network init, training,
classification, variance study, fixture generation), so regenerating one
part never perturbs another.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .classify import GuidanceConfig, LossKind, Objective
from .denoisers.gaussian import (AnalyticDenoiser, GaussianClass,
                                 GaussianClassModel)
from .denoisers.mlp import MlpDenoiser
from .errors import ConfigurationError
from .harness import (ClassifyOptions, GMMParams, SyntheticDataset,
                      TemplateParams, gen_dataset, make_templates,
                      noisy_oracle_scorer, template_model)
from .noise import NoiseVariant, STANDARD
from .rng import derive_seed
from .schedule import NoiseSchedule, make_schedule
from .strategy import (EvenlySpaced, ExplicitList, FixedSingle, StagePlan,
                       UniformRandom, Window)

# sub-stream indices of the master seed
SEED_DATASET = 1
SEED_NET_INIT = 2
SEED_TRAIN = 3
SEED_CLASSIFY = 4
SEED_VARIANCE = 5
SEED_FIXTURE = 6


def _strict(d: dict, allowed, path: str):
    if not isinstance(d, dict):
        raise ConfigurationError(f"config section {path or '<root>'} must be "
                                 f"an object, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigurationError(f"unknown config key {where!r}")


def _get(d: dict, key: str, default, path: str, types):
    val = d.get(key, default)
    if val is None:
        return None
    if not isinstance(val, types):
        tn = types.__name__ if isinstance(types, type) \
            else "/".join(t.__name__ for t in types)
        raise ConfigurationError(
            f"config key {path}.{key} must be {tn}, got {type(val).__name__}")
    return val


_NUM = (int, float)


@dataclass(frozen=True)
class ScheduleConfig:
    kind: str = "linear"
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    cosine_s: float = 0.008

    @staticmethod
    def from_dict(d: dict, path="schedule") -> "ScheduleConfig":
        _strict(d, ("kind", "timesteps", "beta_start", "beta_end", "cosine_s"),
                path)
        return ScheduleConfig(
            kind=_get(d, "kind", "linear", path, str),
            timesteps=_get(d, "timesteps", 1000, path, int),
            beta_start=float(_get(d, "beta_start", 1e-4, path, _NUM)),
            beta_end=float(_get(d, "beta_end", 0.02, path, _NUM)),
            cosine_s=float(_get(d, "cosine_s", 0.008, path, _NUM)))


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "gmm"
    n_per_class: int = 25
    # gmm
    means: object = None          # list of per-class mean vectors
    variances: object = None      # per-class scalar or vector
    prior: object = None
    # template-images
    n_classes: int = 4
    height: int = 8
    width: int = 8
    pattern_seed: int = 7
    noise_sigma: float = 0.25
    clip: object = None

    @staticmethod
    def from_dict(d: dict, path="dataset") -> "DatasetConfig":
        _strict(d, ("kind", "n_per_class", "means", "variances", "prior",
                    "n_classes", "height", "width", "pattern_seed",
                    "noise_sigma", "clip"), path)
        kind = _get(d, "kind", "gmm", path, str)
        if kind not in ("gmm", "template-images"):
            raise ConfigurationError(
                f"config key {path}.kind must be 'gmm' or 'template-images', "
                f"got {kind!r}")
        return DatasetConfig(
            kind=kind,
            n_per_class=_get(d, "n_per_class", 25, path, int),
            means=_get(d, "means", None, path, list),
            variances=_get(d, "variances", None, path, list),
            prior=_get(d, "prior", None, path, list),
            n_classes=_get(d, "n_classes", 4, path, int),
            height=_get(d, "height", 8, path, int),
            width=_get(d, "width", 8, path, int),
            pattern_seed=_get(d, "pattern_seed", 7, path, int),
            noise_sigma=float(_get(d, "noise_sigma", 0.25, path, _NUM)),
            clip=_get(d, "clip", None, path, list))


@dataclass(frozen=True)
class DenoiserConfig:
    kind: str = "analytic"
    hidden: tuple = (64, 64)
    embed_dim: int = 16
    activation: str = "tanh"
    variance_head: bool = False
    p_uncond: float = 0.1
    checkpoint: object = None

    @staticmethod
    def from_dict(d: dict, path="denoiser") -> "DenoiserConfig":
        _strict(d, ("kind", "hidden", "embed_dim", "activation",
                    "variance_head", "p_uncond", "checkpoint"), path)
        kind = _get(d, "kind", "analytic", path, str)
        if kind not in ("analytic", "mlp"):
            raise ConfigurationError(
                f"config key {path}.kind must be 'analytic' or 'mlp', "
                f"got {kind!r}")
        return DenoiserConfig(
            kind=kind,
            hidden=tuple(_get(d, "hidden", [64, 64], path, list)),
            embed_dim=_get(d, "embed_dim", 16, path, int),
            activation=_get(d, "activation", "tanh", path, str),
            variance_head=_get(d, "variance_head", False, path, bool),
            p_uncond=float(_get(d, "p_uncond", 0.1, path, _NUM)),
            checkpoint=_get(d, "checkpoint", None, path, str))


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "uniform-random"
    n_distinct: int = 8
    t: int = 500
    center: int = 500
    halfwidth: int = 25
    timesteps: tuple = ()

    @staticmethod
    def from_dict(d: dict, path="strategy") -> "StrategyConfig":
        _strict(d, ("kind", "n_distinct", "t", "center", "halfwidth",
                    "timesteps"), path)
        return StrategyConfig(
            kind=_get(d, "kind", "uniform-random", path, str),
            n_distinct=_get(d, "n_distinct", 8, path, int),
            t=_get(d, "t", 500, path, int),
            center=_get(d, "center", 500, path, int),
            halfwidth=_get(d, "halfwidth", 25, path, int),
            timesteps=tuple(_get(d, "timesteps", [], path, list)))

    def build(self):
        if self.kind == "uniform-random":
            return UniformRandom()
        if self.kind == "evenly-spaced":
            return EvenlySpaced(self.n_distinct)
        if self.kind == "fixed-single":
            return FixedSingle(self.t)
        if self.kind == "window":
            return Window(self.center, self.halfwidth)
        if self.kind == "explicit-list":
            return ExplicitList(tuple(self.timesteps))
        raise ConfigurationError(f"unknown strategy kind {self.kind!r}")


@dataclass(frozen=True)
class ClassifyConfig:
    mode: str = "naive"
    n_trials: int = 64
    loss: str = "squared-l2"
    objective: str = "uniform-l2"
    crop: int = 0
    plan_keep: object = None
    plan_trials: object = None

    @staticmethod
    def from_dict(d: dict, path="classify") -> "ClassifyConfig":
        _strict(d, ("mode", "n_trials", "loss", "objective", "crop", "plan"),
                path)
        plan = d.get("plan")
        keep = trials = None
        if plan is not None:
            _strict(plan, ("keep", "trials"), f"{path}.plan")
            keep = tuple(_get(plan, "keep", [], f"{path}.plan", list))
            trials = tuple(_get(plan, "trials", [], f"{path}.plan", list))
        cfg = ClassifyConfig(
            mode=_get(d, "mode", "naive", path, str),
            n_trials=_get(d, "n_trials", 64, path, int),
            loss=_get(d, "loss", "squared-l2", path, str),
            objective=_get(d, "objective", "uniform-l2", path, str),
            crop=_get(d, "crop", 0, path, int),
            plan_keep=keep, plan_trials=trials)
        try:
            LossKind(cfg.loss)
        except ValueError:
            raise ConfigurationError(
                f"config key {path}.loss has unknown value {cfg.loss!r}") from None
        try:
            Objective(cfg.objective)
        except ValueError:
            raise ConfigurationError(
                f"config key {path}.objective has unknown value "
                f"{cfg.objective!r}") from None
        if cfg.mode not in ("naive", "adaptive"):
            raise ConfigurationError(
                f"config key {path}.mode must be 'naive' or 'adaptive', "
                f"got {cfg.mode!r}")
        return cfg

    @property
    def plan(self):
        if self.plan_keep is None:
            return None
        return StagePlan(keep=self.plan_keep, trials=self.plan_trials)


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "standard-normal"
    low: float = -1.0
    high: float = 1.0

    @staticmethod
    def from_dict(d: dict, path="noise") -> "NoiseConfig":
        _strict(d, ("kind", "low", "high"), path)
        return NoiseConfig(
            kind=_get(d, "kind", "standard-normal", path, str),
            low=float(_get(d, "low", -1.0, path, _NUM)),
            high=float(_get(d, "high", 1.0, path, _NUM)))

    def build(self) -> NoiseVariant:
        if self.kind == "truncated-normal":
            return NoiseVariant(self.kind, low=self.low, high=self.high)
        return NoiseVariant(self.kind)


@dataclass(frozen=True)
class GuidanceSection:
    enabled: bool = False
    w: float = 0.0

    @staticmethod
    def from_dict(d: dict, path="guidance") -> "GuidanceSection":
        _strict(d, ("enabled", "w"), path)
        return GuidanceSection(enabled=_get(d, "enabled", False, path, bool),
                               w=float(_get(d, "w", 0.0, path, _NUM)))

    def build(self) -> GuidanceConfig:
        return GuidanceConfig(enabled=self.enabled, w=self.w)


@dataclass(frozen=True)
class PruneConfig:
    enabled: bool = False
    k: int = 5
    flip_prob: float = 0.2

    @staticmethod
    def from_dict(d: dict, path="prune") -> "PruneConfig":
        _strict(d, ("enabled", "k", "flip_prob"), path)
        return PruneConfig(enabled=_get(d, "enabled", False, path, bool),
                           k=_get(d, "k", 5, path, int),
                           flip_prob=float(_get(d, "flip_prob", 0.2, path, _NUM)))


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 400
    batch_size: int = 64
    lr: float = 1e-3
    log_every: int = 50

    @staticmethod
    def from_dict(d: dict, path="train") -> "TrainConfig":
        _strict(d, ("steps", "batch_size", "lr", "log_every"), path)
        return TrainConfig(steps=_get(d, "steps", 400, path, int),
                           batch_size=_get(d, "batch_size", 64, path, int),
                           lr=float(_get(d, "lr", 1e-3, path, _NUM)),
                           log_every=_get(d, "log_every", 50, path, int))


@dataclass(frozen=True)
class VarianceConfig:
    n_sets: int = 32
    set_size: int = 16
    input_index: int = 0
    class_a: int = 0
    class_b: int = 1

    @staticmethod
    def from_dict(d: dict, path="variance") -> "VarianceConfig":
        _strict(d, ("n_sets", "set_size", "input_index", "class_a", "class_b"),
                path)
        return VarianceConfig(
            n_sets=_get(d, "n_sets", 32, path, int),
            set_size=_get(d, "set_size", 16, path, int),
            input_index=_get(d, "input_index", 0, path, int),
            class_a=_get(d, "class_a", 0, path, int),
            class_b=_get(d, "class_b", 1, path, int))


@dataclass(frozen=True)
class ScalingConfig:
    budgets: tuple = (4, 16, 64)
    strategies: tuple = field(default_factory=tuple)

    @staticmethod
    def from_dict(d: dict, path="scaling") -> "ScalingConfig":
        _strict(d, ("budgets", "strategies"), path)
        raw = _get(d, "strategies", [], path, list)
        strategies = []
        for i, s in enumerate(raw):
            spath = f"{path}.strategies[{i}]"
            if not isinstance(s, dict) or "name" not in s:
                raise ConfigurationError(
                    f"{spath} must be an object with a 'name' key")
            rest = {k: v for k, v in s.items() if k != "name"}
            strategies.append((s["name"], StrategyConfig.from_dict(rest, spath)))
        return ScalingConfig(
            budgets=tuple(_get(d, "budgets", [4, 16, 64], path, list)),
            strategies=tuple(strategies))


@dataclass(frozen=True)
class SweepConfig:
    timesteps: object = None
    n_points: int = 10
    n_trials: int = 16

    @staticmethod
    def from_dict(d: dict, path="sweep") -> "SweepConfig":
        _strict(d, ("timesteps", "n_points", "n_trials"), path)
        ts = _get(d, "timesteps", None, path, list)
        return SweepConfig(timesteps=tuple(ts) if ts is not None else None,
                           n_points=_get(d, "n_points", 10, path, int),
                           n_trials=_get(d, "n_trials", 16, path, int))


@dataclass(frozen=True)
class WinogroundConfig:
    n_examples: int = 20
    set_size: int = 64
    noise_sigma: float = 0.3
    height: int = 8
    width: int = 8

    @staticmethod
    def from_dict(d: dict, path="winoground") -> "WinogroundConfig":
        _strict(d, ("n_examples", "set_size", "noise_sigma", "height", "width"),
                path)
        return WinogroundConfig(
            n_examples=_get(d, "n_examples", 20, path, int),
            set_size=_get(d, "set_size", 64, path, int),
            noise_sigma=float(_get(d, "noise_sigma", 0.3, path, _NUM)),
            height=_get(d, "height", 8, path, int),
            width=_get(d, "width", 8, path, int))


@dataclass(frozen=True)
class GradcheckConfig:
    hidden: tuple = (5,)
    embed_dim: int = 4
    batch_size: int = 3
    tolerance: float = 1e-3
    variance_head: bool = False

    @staticmethod
    def from_dict(d: dict, path="gradcheck") -> "GradcheckConfig":
        _strict(d, ("hidden", "embed_dim", "batch_size", "tolerance",
                    "variance_head"), path)
        return GradcheckConfig(
            hidden=tuple(_get(d, "hidden", [5], path, list)),
            embed_dim=_get(d, "embed_dim", 4, path, int),
            batch_size=_get(d, "batch_size", 3, path, int),
            tolerance=float(_get(d, "tolerance", 1e-3, path, _NUM)),
            variance_head=_get(d, "variance_head", False, path, bool))


@dataclass(frozen=True)
class RunConfig:
    schedule: ScheduleConfig = ScheduleConfig()
    dataset: DatasetConfig = DatasetConfig()
    denoiser: DenoiserConfig = DenoiserConfig()
    classify: ClassifyConfig = ClassifyConfig()
    strategy: StrategyConfig = StrategyConfig()
    guidance: GuidanceSection = GuidanceSection()
    noise: NoiseConfig = NoiseConfig()
    prune: PruneConfig = PruneConfig()
    train: TrainConfig = TrainConfig()
    variance: VarianceConfig = VarianceConfig()
    scaling: ScalingConfig = ScalingConfig()
    sweep: SweepConfig = SweepConfig()
    winoground: WinogroundConfig = WinogroundConfig()
    gradcheck: GradcheckConfig = GradcheckConfig()
    seed: int = 0
    output_dir: str = "out"

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        _strict(d, ("schedule", "dataset", "denoiser", "classify", "strategy",
                    "guidance", "noise", "prune", "train", "variance",
                    "scaling", "sweep", "winoground", "gradcheck", "seed",
                    "output_dir"), "")
        cfg = RunConfig(
            schedule=ScheduleConfig.from_dict(d.get("schedule", {})),
            dataset=DatasetConfig.from_dict(d.get("dataset", {})),
            denoiser=DenoiserConfig.from_dict(d.get("denoiser", {})),
            classify=ClassifyConfig.from_dict(d.get("classify", {})),
            strategy=StrategyConfig.from_dict(d.get("strategy", {})),
            guidance=GuidanceSection.from_dict(d.get("guidance", {})),
            noise=NoiseConfig.from_dict(d.get("noise", {})),
            prune=PruneConfig.from_dict(d.get("prune", {})),
            train=TrainConfig.from_dict(d.get("train", {})),
            variance=VarianceConfig.from_dict(d.get("variance", {})),
            scaling=ScalingConfig.from_dict(d.get("scaling", {})),
            sweep=SweepConfig.from_dict(d.get("sweep", {})),
            winoground=WinogroundConfig.from_dict(d.get("winoground", {})),
            gradcheck=GradcheckConfig.from_dict(d.get("gradcheck", {})),
            seed=_get(d, "seed", 0, "", int),
            output_dir=_get(d, "output_dir", "out", "", str))
        validate_config(cfg)
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def validate_config(cfg: RunConfig):
    """Cross-field constraints; raises naming the offending field."""
    if cfg.classify.objective in ("vlb", "sum"):
        if cfg.denoiser.kind == "mlp" and not cfg.denoiser.variance_head:
            raise ConfigurationError(
                "classify.objective: variational objectives need "
                "denoiser.variance_head = true for an mlp denoiser")
    if cfg.classify.crop > 0 and cfg.dataset.kind != "template-images":
        raise ConfigurationError(
            "classify.crop: cropping needs spatial data "
            "(dataset.kind = 'template-images')")
    if cfg.classify.mode == "adaptive" and cfg.classify.plan is None:
        raise ConfigurationError(
            "classify.plan: adaptive mode requires a stage plan")
    if cfg.prune.enabled and cfg.prune.k < 1:
        raise ConfigurationError("prune.k must be >= 1")
    if cfg.dataset.kind == "gmm" and cfg.dataset.means is not None:
        n = len(cfg.dataset.means)
        if cfg.dataset.variances is not None and len(cfg.dataset.variances) != n:
            raise ConfigurationError(
                "dataset.variances must match dataset.means in length")
        if cfg.dataset.prior is not None and len(cfg.dataset.prior) != n:
            raise ConfigurationError(
                "dataset.prior must match dataset.means in length")


def parse_config(path) -> RunConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: "
                                 f"{exc}") from None
    return RunConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# builders: config -> runtime objects

_DEFAULT_GMM_MEANS = [[3.0, 0, 0, 0, 0, 0, 0, 0],
                      [-3.0, 0, 0, 0, 0, 0, 0, 0]]


def build_schedule(cfg: RunConfig) -> NoiseSchedule:
    if cfg.schedule.kind == "linear":
        return make_schedule("linear", cfg.schedule.timesteps,
                             beta_start=cfg.schedule.beta_start,
                             beta_end=cfg.schedule.beta_end)
    if cfg.schedule.kind == "cosine":
        return make_schedule("cosine", cfg.schedule.timesteps,
                             s=cfg.schedule.cosine_s)
    raise ConfigurationError(
        f"schedule.kind has unknown value {cfg.schedule.kind!r}")


def build_dataset_params(cfg: RunConfig):
    ds = cfg.dataset
    if ds.kind == "gmm":
        means = ds.means if ds.means is not None else _DEFAULT_GMM_MEANS
        variances = ds.variances if ds.variances is not None \
            else [1.0] * len(means)
        classes = tuple(GaussianClass.single(np.asarray(m, dtype=np.float64), v)
                        for m, v in zip(means, variances))
        prior = tuple(ds.prior) if ds.prior is not None else None
        return GMMParams(model=GaussianClassModel(classes), prior=prior)
    templates = make_templates(ds.n_classes, ds.height, ds.width,
                               seed=ds.pattern_seed)
    clip = tuple(ds.clip) if ds.clip is not None else None
    return TemplateParams(templates=templates, noise_sigma=ds.noise_sigma,
                          clip=clip)


def build_dataset(cfg: RunConfig) -> SyntheticDataset:
    params = build_dataset_params(cfg)
    return gen_dataset(params, cfg.dataset.n_per_class,
                       derive_seed(cfg.seed, SEED_DATASET))


def dataset_model(dataset: SyntheticDataset) -> GaussianClassModel:
    """The Gaussian model describing the dataset's generator (exact for gmm,
    clip-ignoring for template images)."""
    if isinstance(dataset.params, GMMParams):
        return dataset.params.model
    return template_model(dataset.params)


def build_denoiser(cfg: RunConfig, dataset: SyntheticDataset,
                   schedule: NoiseSchedule, for_training: bool = False):
    dn = cfg.denoiser
    if dn.kind == "analytic":
        prior = dataset.params.prior if isinstance(dataset.params, GMMParams) \
            else None
        return AnalyticDenoiser(dataset_model(dataset), schedule, prior=prior)
    if not for_training:
        if dn.checkpoint is None:
            raise ConfigurationError(
                "denoiser.checkpoint: an mlp denoiser needs a trained "
                "checkpoint (run the train subcommand first)")
        from .checkpoint import load_checkpoint
        net, _ = load_checkpoint(dn.checkpoint)
        return net
    return MlpDenoiser(data_shape=dataset.shape,
                       n_classes=dataset.n_classes,
                       hidden=dn.hidden, embed_dim=dn.embed_dim,
                       activation=dn.activation,
                       variance_head=dn.variance_head,
                       seed=derive_seed(cfg.seed, SEED_NET_INIT))


def build_options(cfg: RunConfig, dataset: SyntheticDataset) -> ClassifyOptions:
    prune_k = pruner = None
    if cfg.prune.enabled:
        prune_k = cfg.prune.k
        prior = dataset.params.prior if isinstance(dataset.params, GMMParams) \
            else None
        pruner = noisy_oracle_scorer(dataset_model(dataset), prior=prior,
                                     flip_prob=cfg.prune.flip_prob)
    return ClassifyOptions(
        mode=cfg.classify.mode,
        strategy=cfg.strategy.build(),
        n_trials=cfg.classify.n_trials,
        plan=cfg.classify.plan,
        loss=LossKind(cfg.classify.loss),
        objective=Objective(cfg.classify.objective),
        guidance=cfg.guidance.build(),
        crop=cfg.classify.crop,
        noise_variant=cfg.noise.build(),
        prune_k=prune_k, pruner=pruner)
