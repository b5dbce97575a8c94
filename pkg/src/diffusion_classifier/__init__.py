"""Classification with conditional denoising diffusion models.

A conditional noise predictor eps_hat(x_t, t, c) is turned into a
classifier by comparing Monte Carlo estimates of the per-class denoising
error over a shared set of (t, eps) draws; the class with the lowest mean
error wins.  The package provides the scoring machinery (naive and
adaptive), an exact Gaussian-mixture reference backend, a small trainable
network backend, and the experiment harness around them.
"""

from ._kernels import backend_name
from .checkpoint import load_checkpoint, save_checkpoint
from .classify import (ClassificationResult, GuidanceConfig, LossKind,
                       NO_GUIDANCE, Objective, TraceRecorder, apply_guidance,
                       class_point_errors, classify_adaptive, classify_naive,
                       eps_error, estimate_errors, posterior_from_errors,
                       vlb_weight)
from .config import (RunConfig, build_dataset, build_denoiser,
                     build_options, build_schedule, parse_config)
from .denoisers import (AnalyticDenoiser, Denoiser, GaussianClass,
                        GaussianClassModel, MlpDenoiser, TrainTrace,
                        finite_diff_gradcheck, gmm_predict_eps, train_denoiser)
from .errors import CheckpointError, ConfigurationError, NumericError
from .harness import (ClassifyOptions, ExperimentReport, GMMParams,
                      SyntheticDataset, TemplateParams, gen_dataset,
                      make_templates, make_winoground_fixture,
                      noisy_oracle_scorer, run_benchmark, scaling_curve,
                      template_model, timestep_accuracy_curve,
                      variance_report, winoground_text_score)
from .noise import (NoiseVariant, STANDARD, draw_noise, expected_chi_norm,
                    forward_noise)
from .oracle import (ElboCurve, analytic_expected_error, bayes_accuracy,
                     bayes_posterior_gmm, bayes_predict_batch,
                     brute_force_elbo)
from .rng import derive_seed, generator
from .schedule import NoiseSchedule, cosine_schedule, linear_schedule, make_schedule
from .strategy import (EvenlySpaced, ExplicitList, FixedSingle, PlanDiagnostics,
                       SampleSet, StagePlan, UniformRandom, Window,
                       evenly_spaced_ts, make_sample_set, prune_candidates,
                       validate_plan)

__version__ = "0.1.0"
