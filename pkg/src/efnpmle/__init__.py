"""Compressed nonparametric maximum likelihood for exponential-family mixtures."""

from ._accel import backend_name
from .compression import (
    DiscreteMeasure,
    QuadratureRule,
    compress,
    counting_compress,
    empirical_measure,
    gauss_quadrature,
    tchakaloff_compress,
)
from .estimators import (
    hellinger_sq,
    likelihood_gap,
    log_likelihood,
    mixture_density,
    posterior_mean,
    sse_posterior_mean,
)
from .hetero import HeteroObservation, fit_hetero, hetero_density, hetero_posterior_mean
from .models import ExpFamilyModel, PointMass, UniformPrior, make_model, sample_mixture
from .solver import FitReport, MixingDistribution, build_grid, fit_compressed, fit_npmle

__version__ = "0.1.0"
