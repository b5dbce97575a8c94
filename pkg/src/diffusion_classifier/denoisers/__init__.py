from .base import Denoiser
from .gaussian import (AnalyticDenoiser, GaussianClass, GaussianClassModel,
                       gmm_predict_eps, normalize_prior)
from .mlp import (GradcheckReport, MlpDenoiser, TrainTrace,
                  finite_diff_gradcheck, random_batch, time_embedding,
                  train_denoiser)

__all__ = [
    "Denoiser", "AnalyticDenoiser", "GaussianClass", "GaussianClassModel",
    "gmm_predict_eps", "normalize_prior", "MlpDenoiser", "TrainTrace",
    "train_denoiser", "GradcheckReport", "finite_diff_gradcheck",
    "random_batch", "time_embedding",
]
