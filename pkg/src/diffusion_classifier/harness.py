"""Synthetic datasets and experiment drivers.

Two dataset families cover the desk-scale studies: Gaussian-mixture vectors
(where the exact Bayes oracle is available) and template images (a small
set of patterns plus pixel noise, giving spatial data for crop and
image-style experiments).  Generation is balanced, class-major, and
deterministic given the seed.

Every driver derives one seed per input from the master seed, so results
are independent of evaluation order and of the parallelism degree.  Written
artifacts (CSV / JSON) are byte-reproducible: rows are emitted in a fixed
order, floats are serialized with repr, and volatile quantities such as
wall-clock time are reported on stderr, never written into artifacts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classify import (LossKind, NO_GUIDANCE, Objective, TraceRecorder,
                       classify_adaptive, classify_naive)
from .denoisers.gaussian import GaussianClassModel, normalize_prior
from .errors import ConfigurationError
from .noise import STANDARD
from .oracle import bayes_posterior_gmm
from .rng import derive_seed, generator
from .strategy import StagePlan, UniformRandom, prune_candidates


# ---------------------------------------------------------------------------
# datasets

@dataclass(frozen=True)
class GMMParams:
    """Vector data drawn from the model's class conditionals."""

    model: GaussianClassModel
    prior: object = None


@dataclass(frozen=True)
class TemplateParams:
    """Image data: per-class template plus isotropic pixel noise, optionally
    clipped to a value range."""

    templates: np.ndarray  # (C, H, W)
    noise_sigma: float
    clip: object = None    # (lo, hi) or None

    def __post_init__(self):
        t = np.asarray(self.templates, dtype=np.float64)
        if t.ndim != 3:
            raise ConfigurationError(
                f"templates must be (C, H, W), got shape {t.shape}")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "templates", t)


@dataclass(frozen=True)
class SyntheticDataset:
    xs: np.ndarray       # (n, *shape)
    labels: np.ndarray   # (n,)
    params: object
    seed: int

    @property
    def n_classes(self) -> int:
        if isinstance(self.params, GMMParams):
            return self.params.model.n_classes
        return self.params.templates.shape[0]

    @property
    def shape(self) -> tuple:
        return self.xs.shape[1:]


def make_templates(n_classes: int, height: int, width: int,
                   seed: int = 0) -> np.ndarray:
    """Smooth per-class patterns in [0, 1]: random low-frequency cosine
    mixtures, distinct per class."""
    rng = generator(seed)
    yy, xx = np.meshgrid(np.linspace(0, 1, height), np.linspace(0, 1, width),
                         indexing="ij")
    out = np.empty((n_classes, height, width))
    for k in range(n_classes):
        img = np.zeros((height, width))
        for _ in range(3):
            fy, fx = rng.integers(1, 4, size=2)
            phase = rng.uniform(0, 2 * np.pi, size=2)
            img += rng.uniform(0.5, 1.0) * np.cos(2 * np.pi * fy * yy + phase[0]) \
                * np.cos(2 * np.pi * fx * xx + phase[1])
        lo, hi = img.min(), img.max()
        out[k] = (img - lo) / (hi - lo) if hi > lo else 0.5
    return out


def gen_dataset(params, n_per_class: int, seed: int) -> SyntheticDataset:
    """Balanced labeled dataset: n_per_class samples per class, class-major
    order, deterministic given seed."""
    if n_per_class < 1:
        raise ConfigurationError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = generator(seed)
    if isinstance(params, GMMParams):
        model = params.model
        xs = np.concatenate([cls.sample(rng, n_per_class)
                             for cls in model.classes])
        labels = np.repeat(np.arange(model.n_classes), n_per_class)
    elif isinstance(params, TemplateParams):
        tpl = params.templates
        n_cls = tpl.shape[0]
        xs = np.concatenate([
            tpl[k][None] + params.noise_sigma
            * rng.standard_normal((n_per_class, *tpl.shape[1:]))
            for k in range(n_cls)])
        if params.clip is not None:
            lo, hi = params.clip
            xs = np.clip(xs, lo, hi)
        labels = np.repeat(np.arange(n_cls), n_per_class)
    else:
        raise ConfigurationError(f"unknown dataset params {type(params).__name__}")
    labels = labels.astype(np.int64)
    xs.setflags(write=False)
    labels.setflags(write=False)
    return SyntheticDataset(xs=xs, labels=labels, params=params, seed=seed)


def template_model(params: TemplateParams) -> GaussianClassModel:
    """The Gaussian model matching a template dataset (mean = template,
    isotropic pixel variance); clipping is ignored, so this is the exact
    generator only when clip is None."""
    from .denoisers.gaussian import GaussianClass
    var = max(params.noise_sigma ** 2, 1e-12)
    classes = [GaussianClass.single(t.reshape(-1), var)
               for t in params.templates]
    return GaussianClassModel(tuple(classes))


# ---------------------------------------------------------------------------
# classification options and the benchmark driver

@dataclass(frozen=True)
class ClassifyOptions:
    """Everything about how one input is scored, minus the denoiser."""

    mode: str = "naive"                  # "naive" | "adaptive"
    strategy: object = UniformRandom()
    n_trials: int = 64
    plan: object = None                  # StagePlan for adaptive mode
    loss: LossKind = LossKind.SQUARED_L2
    objective: Objective = Objective.UNIFORM_L2
    guidance: object = NO_GUIDANCE
    crop: int = 0
    noise_variant: object = STANDARD
    prune_k: object = None               # int to score only top-k candidates
    pruner: object = None                # callable (x, rng) -> scores (C,)

    def __post_init__(self):
        if self.mode not in ("naive", "adaptive"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.mode == "adaptive" and not isinstance(self.plan, StagePlan):
            raise ConfigurationError("adaptive mode requires a stage plan")
        if (self.prune_k is None) != (self.pruner is None):
            raise ConfigurationError("prune_k and pruner must be set together")


def noisy_oracle_scorer(model: GaussianClassModel, prior=None,
                        flip_prob: float = 0.2):
    """A deliberately imperfect candidate scorer: the Bayes posterior,
    except that with probability flip_prob one random wrong class is
    boosted above the winner.  Top-1 degrades, the true class stays inside
    any top-k for k >= 2."""
    prior = normalize_prior(prior, model.n_classes)

    def score(x, rng):
        scores = bayes_posterior_gmm(x, model, prior)
        if model.n_classes > 1 and rng.random() < flip_prob:
            top = int(np.argmax(scores))
            others = [k for k in range(model.n_classes) if k != top]
            boosted = others[int(rng.integers(len(others)))]
            scores = scores.copy()
            scores[boosted] = scores[top] + 1.0
        return scores

    return score


def classify_one(x, classes, denoiser, schedule, options: ClassifyOptions,
                 seed: int, trace: TraceRecorder = None, input_id=0):
    """Dispatch one input through the configured classification mode."""
    common = dict(loss=options.loss, objective=options.objective,
                  guidance=options.guidance, crop=options.crop,
                  noise_variant=options.noise_variant, seed=seed,
                  trace=trace, input_id=input_id)
    if options.mode == "adaptive":
        return classify_adaptive(x, classes, denoiser, schedule,
                                 options.plan, **common)
    return classify_naive(x, classes, denoiser, schedule,
                          options.strategy, options.n_trials, **common)


@dataclass(frozen=True)
class BenchmarkRow:
    input_index: int
    label: int
    predicted: int
    correct: bool
    n_evaluations: int


@dataclass
class ExperimentReport:
    rows: list
    accuracy: float
    mean_per_class_accuracy: float
    total_evaluations: int
    config_hash: str
    seed: int
    wall_time: float = field(compare=False, default=0.0)

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["input", "label", "predicted", "correct",
                        "n_evaluations"])
            for r in self.rows:
                w.writerow([r.input_index, r.label, r.predicted,
                            int(r.correct), r.n_evaluations])

    def write_summary(self, path):
        # wall_time deliberately omitted: artifacts are byte-reproducible
        payload = {"accuracy": self.accuracy,
                   "mean_per_class_accuracy": self.mean_per_class_accuracy,
                   "total_evaluations": self.total_evaluations,
                   "n_inputs": len(self.rows),
                   "config_hash": self.config_hash,
                   "seed": self.seed}
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")


def options_hash(options: ClassifyOptions, seed: int) -> str:
    """Stable hash of the scoring configuration (callable pruners hash by
    name only)."""
    payload = repr((options.mode, options.strategy, options.n_trials,
                    options.plan, options.loss.value, options.objective.value,
                    options.guidance, options.crop, options.noise_variant,
                    options.prune_k,
                    getattr(options.pruner, "__name__", repr(None)), seed))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def run_benchmark(dataset: SyntheticDataset, denoiser, schedule,
                  options: ClassifyOptions, master_seed: int = 0,
                  jobs: int = 1, trace: TraceRecorder = None) -> ExperimentReport:
    """Classify every dataset sample; per-input seeds derive from
    master_seed, so results do not depend on execution order or jobs."""
    classes = list(range(dataset.n_classes))
    n = len(dataset.xs)

    def work(i):
        x = dataset.xs[i]
        seed_i = derive_seed(master_seed, i)
        local_trace = TraceRecorder() if trace is not None else None
        cand = classes
        if options.prune_k is not None:
            scores = options.pruner(x, generator(derive_seed(master_seed, i, 1)))
            kept = prune_candidates(scores, options.prune_k)
            # candidate order canonicalized so tie-breaking depends on class
            # ids, not on scorer order
            cand = sorted(int(k) for k in kept)
        res = classify_one(x, cand, denoiser, schedule, options, seed_i,
                           trace=local_trace, input_id=i)
        return res, local_trace

    start = time.perf_counter()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, range(n)))
    else:
        results = [work(i) for i in range(n)]
    wall = time.perf_counter() - start

    rows = []
    per_class_ok = {}
    per_class_n = {}
    total_evals = 0
    for i, (res, local_trace) in enumerate(results):
        label = int(dataset.labels[i])
        ok = res.predicted == label
        evals = int(res.trial_counts.sum())
        total_evals += evals
        rows.append(BenchmarkRow(i, label, int(res.predicted), bool(ok), evals))
        per_class_ok[label] = per_class_ok.get(label, 0) + int(ok)
        per_class_n[label] = per_class_n.get(label, 0) + 1
        if trace is not None:
            trace.rows.extend(local_trace.rows)
    accuracy = sum(r.correct for r in rows) / n
    per_class = [per_class_ok[k] / per_class_n[k] for k in sorted(per_class_n)]
    return ExperimentReport(rows=rows, accuracy=accuracy,
                            mean_per_class_accuracy=float(np.mean(per_class)),
                            total_evaluations=total_evals,
                            config_hash=options_hash(options, master_seed),
                            seed=master_seed, wall_time=wall)


# ---------------------------------------------------------------------------
# curves: budget scaling and per-timestep accuracy

@dataclass(frozen=True)
class ScalingRow:
    strategy: str
    n_trials: int
    accuracy: float


@dataclass
class ScalingReport:
    rows: list

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["strategy", "trials", "accuracy"])
            for r in self.rows:
                w.writerow([r.strategy, r.n_trials, repr(r.accuracy)])

    def accuracies(self, strategy: str) -> list:
        return [r.accuracy for r in self.rows if r.strategy == strategy]


def scaling_curve(dataset: SyntheticDataset, denoiser, schedule,
                  strategies: dict, budgets, base_options: ClassifyOptions,
                  master_seed: int = 0, jobs: int = 1) -> ScalingReport:
    """Accuracy as a function of the trial budget for each named strategy.

    The same master seed is reused across budgets, and uniform-random
    sample streams extend prefix-style, so accuracy curves use common
    random numbers across budget levels.
    """
    from dataclasses import replace
    rows = []
    for name in strategies:
        for b in budgets:
            options = replace(base_options, mode="naive",
                              strategy=strategies[name], n_trials=int(b),
                              plan=None)
            rep = run_benchmark(dataset, denoiser, schedule, options,
                                master_seed=master_seed, jobs=jobs)
            rows.append(ScalingRow(name, int(b), rep.accuracy))
    return ScalingReport(rows=rows)


@dataclass
class TimestepCurve:
    ts: list
    accuracies: list

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "accuracy"])
            for t, a in zip(self.ts, self.accuracies):
                w.writerow([t, repr(a)])


def timestep_accuracy_curve(dataset: SyntheticDataset, denoiser, schedule,
                            ts, n_trials: int,
                            base_options: ClassifyOptions = None,
                            master_seed: int = 0, jobs: int = 1) -> TimestepCurve:
    """Benchmark accuracy with all trials pinned to one timestep, per t."""
    from dataclasses import replace
    from .strategy import FixedSingle
    base_options = base_options or ClassifyOptions()
    accs = []
    ts = [int(t) for t in ts]
    for t in ts:
        options = replace(base_options, mode="naive",
                          strategy=FixedSingle(t), n_trials=n_trials, plan=None)
        rep = run_benchmark(dataset, denoiser, schedule, options,
                            master_seed=master_seed, jobs=jobs)
        accs.append(rep.accuracy)
    return TimestepCurve(ts=ts, accuracies=accs)


# ---------------------------------------------------------------------------
# paired-vs-unpaired variance study

@dataclass(frozen=True)
class VarianceReport:
    paired_diffs: np.ndarray
    unpaired_diffs: np.ndarray

    @property
    def paired_variance(self) -> float:
        return float(np.var(self.paired_diffs, ddof=1))

    @property
    def unpaired_variance(self) -> float:
        return float(np.var(self.unpaired_diffs, ddof=1))

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["set", "paired_diff", "unpaired_diff"])
            for k in range(len(self.paired_diffs)):
                w.writerow([k, repr(float(self.paired_diffs[k])),
                            repr(float(self.unpaired_diffs[k]))])


def variance_report(x, class_pair, denoiser, schedule, n_sets: int = 32,
                    set_size: int = 16, master_seed: int = 0,
                    loss: LossKind = LossKind.SQUARED_L2,
                    objective: Objective = Objective.UNIFORM_L2) -> VarianceReport:
    """Error-difference variance with and without sample-set sharing.

    For each repetition k, the paired difference evaluates both classes on
    one shared sample set; the unpaired difference draws an independent set
    per class.  Same budget per class either way.
    """
    from .classify import estimate_errors
    from .strategy import make_sample_set
    x = np.asarray(x, dtype=np.float64)
    ci, cj = class_pair
    paired = np.empty(n_sets)
    unpaired = np.empty(n_sets)
    for k in range(n_sets):
        shared = make_sample_set(UniformRandom(), set_size, schedule.T,
                                 derive_seed(master_seed, k), x.shape)
        errs = estimate_errors(x, [ci, cj], denoiser, schedule, shared,
                               loss=loss, objective=objective)
        paired[k] = errs[0] - errs[1]
        set_i = make_sample_set(UniformRandom(), set_size, schedule.T,
                                derive_seed(master_seed, k, 1), x.shape)
        set_j = make_sample_set(UniformRandom(), set_size, schedule.T,
                                derive_seed(master_seed, k, 2), x.shape)
        ei = estimate_errors(x, [ci], denoiser, schedule, set_i,
                             loss=loss, objective=objective)[0]
        ej = estimate_errors(x, [cj], denoiser, schedule, set_j,
                             loss=loss, objective=objective)[0]
        unpaired[k] = ei - ej
    return VarianceReport(paired_diffs=paired, unpaired_diffs=unpaired)


# ---------------------------------------------------------------------------
# compositional (Winoground-style) text scoring

def winoground_text_score(matrices) -> float:
    """Fraction of examples whose score matrix puts each caption strictly
    above the swapped caption on its own image:
    s[0,0] > s[1,0] and s[1,1] > s[0,1].  Ties fail."""
    if len(matrices) == 0:
        raise ConfigurationError("no score matrices given")
    wins = 0
    for k, m in enumerate(matrices):
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (2, 2):
            raise ConfigurationError(
                f"score matrix {k} has shape {m.shape}, expected (2, 2)")
        if not np.all(np.isfinite(m)):
            raise ConfigurationError(f"score matrix {k} has non-finite entries")
        if m[0, 0] > m[1, 0] and m[1, 1] > m[0, 1]:
            wins += 1
    return wins / len(matrices)


def score_matrix_from_denoiser(images, denoiser, schedule, set_size: int = 64,
                               seed: int = 0,
                               loss: LossKind = LossKind.SQUARED_L2) -> np.ndarray:
    """s[i, j] = -(mean denoising error of image j under caption class i),
    with one sample set shared per image (column), so caption comparisons
    within a column are paired."""
    from .classify import estimate_errors
    from .strategy import make_sample_set
    s = np.empty((2, 2))
    for j, img in enumerate(images):
        img = np.asarray(img, dtype=np.float64)
        shared = make_sample_set(UniformRandom(), set_size, schedule.T,
                                 derive_seed(seed, j), img.shape)
        errs = estimate_errors(img, [0, 1], denoiser, schedule, shared,
                               loss=loss)
        s[:, j] = -errs
    return s


def make_winoground_fixture(n_examples: int, seed: int, height: int = 8,
                            width: int = 8, noise_sigma: float = 0.3,
                            set_size: int = 64):
    """Synthetic caption/image pairs: two part patterns placed at two
    locations, with the two 'captions' being the two arrangements.  Images
    are noised templates; scores come from the exact template denoiser.
    Returns the list of 2x2 score matrices."""
    from .denoisers.gaussian import AnalyticDenoiser, GaussianClass
    from .schedule import linear_schedule
    matrices = []
    sched = linear_schedule(100)
    for e in range(n_examples):
        rng = generator(derive_seed(seed, e))
        part_a = rng.uniform(0.0, 1.0, size=(height // 2, width // 2))
        part_b = rng.uniform(0.0, 1.0, size=(height // 2, width // 2))
        tpl0 = np.zeros((height, width))
        tpl0[:height // 2, :width // 2] = part_a
        tpl0[height // 2:, width // 2:] = part_b
        tpl1 = np.zeros((height, width))
        tpl1[:height // 2, :width // 2] = part_b
        tpl1[height // 2:, width // 2:] = part_a
        model = GaussianClassModel((
            GaussianClass.single(tpl0.reshape(-1), noise_sigma ** 2),
            GaussianClass.single(tpl1.reshape(-1), noise_sigma ** 2)))
        den = AnalyticDenoiser(model, sched)
        img0 = tpl0 + noise_sigma * rng.standard_normal(tpl0.shape)
        img1 = tpl1 + noise_sigma * rng.standard_normal(tpl1.shape)
        matrices.append(score_matrix_from_denoiser(
            [img0, img1], den, sched, set_size=set_size,
            seed=derive_seed(seed, e, 1)))
    return matrices


def write_score_matrices(path, matrices):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["example", "i", "j", "score"])
        for e, m in enumerate(matrices):
            m = np.asarray(m)
            for i in range(2):
                for j in range(2):
                    w.writerow([e, i, j, repr(float(m[i, j]))])


def read_score_matrices(path):
    """Read 2x2 score matrices from CSV columns (example, i, j, score);
    examples keep first-appearance order and must have all four cells."""
    cells = {}
    order = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        required = {"example", "i", "j", "score"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ConfigurationError(
                f"score CSV needs columns {sorted(required)}")
        for row in reader:
            ex = row["example"]
            if ex not in cells:
                cells[ex] = {}
                order.append(ex)
            cells[ex][(int(row["i"]), int(row["j"]))] = float(row["score"])
    matrices = []
    for ex in order:
        got = cells[ex]
        if set(got) != {(0, 0), (0, 1), (1, 0), (1, 1)}:
            raise ConfigurationError(
                f"example {ex!r} is missing score cells")
        m = np.array([[got[(0, 0)], got[(0, 1)]],
                      [got[(1, 0)], got[(1, 1)]]])
        matrices.append(m)
    return matrices
