"""Nonparametric prior estimation from population measurements.

Given a known forward model, a known additive-noise density, and one noisy
measurement per individual, the package estimates the population's mixing
distribution (the prior) on a fixed atom set, computes per-individual
posteriors, and propagates them to predictions.  It also ships a
maximum-entropy reference-prior mode, posterior-merge atom generation by
MCMC, a measured spring population as a worked example, and an iterative
image deconvolution built on the same multiplicative update.
"""

from .core import (
    AtomSet,
    ForwardModel,
    GaussianNoise,
    LikelihoodMatrix,
    MeasurementSet,
    NoiseModel,
    WeightVector,
    likelihood_matrix,
    log_likelihood_dd,
    log_marginal_likelihood,
    marginal_likelihood,
    measurement_grid,
    posterior_weights,
    pushforward_l1,
    read_measurements_csv,
    read_weighted_atoms_csv,
    sample_mixture,
    write_measurements_csv,
    write_weighted_atoms_csv,
)
from .errors import MixpriorError, NumericalError, ValidationError

__version__ = "0.1.0"
