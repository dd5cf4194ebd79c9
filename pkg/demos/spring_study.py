"""The spring study end to end: population, measurement, priors, prediction.

150 + 150 springs from two stiffness boxes are measured once each; three
informative priors (weight iteration, data/model smoothing, entropy
penalty) are fitted on a 200-atom stiffness grid and compared with the
uniform baseline by the deviation of predicted per-spring treatment
success rates from the realized outcomes.  Iteration counts are kept
small here; the acceptance suite runs the full-length version.
"""

import numpy as np

from mixprior.core import AtomSet, GaussianNoise, WeightVector, likelihood_matrix
from mixprior.estimators import (
    DsmleConfig,
    MpleConfig,
    dsmle_prepare,
    mple_run,
    npmle_run,
)
from mixprior.rng import derive_seed
from mixprior.toymodel import (
    DEFAULT_MEASUREMENT_STD,
    PRESET_ENTROPY_WEIGHT,
    STIFFNESS_GRID_SIZE,
    STIFFNESS_HIGH,
    STIFFNESS_LOW,
    TreatmentSpec,
    generate_population,
    measure_population,
    one_time_model,
    predicted_success_rates,
    success_rate_std,
    treatment_hits,
    true_success,
)

seed = 0
population = generate_population(seed=seed)
model = one_time_model()
data = measure_population(model, population, DEFAULT_MEASUREMENT_STD, seed=seed)
print(f"population of {len(population.ids)} springs, one measurement each")

atoms = AtomSet.grid_1d(STIFFNESS_LOW, STIFFNESS_HIGH, STIFFNESS_GRID_SIZE)
noise = GaussianNoise(DEFAULT_MEASUREMENT_STD)
matrix = likelihood_matrix(model, noise, atoms, data)
uniform = WeightVector.uniform(atoms.count)

priors = {"pi0": uniform}
priors["npmle"] = npmle_run(matrix, uniform, max_iter=150).final

smooth_cfg = DsmleConfig(
    bandwidth=DEFAULT_MEASUREMENT_STD,
    seed=derive_seed(seed, "dsmle-smoothing"),
)
augmented, smoothed_noise = dsmle_prepare(data, noise, smooth_cfg)
smoothed = likelihood_matrix(model, smoothed_noise, atoms, augmented)
priors["dsmle"] = npmle_run(smoothed, uniform, max_iter=150).final

mple_cfg = MpleConfig(gamma=PRESET_ENTROPY_WEIGHT, max_iter=60)
priors["mple"] = mple_run(
    matrix, atoms, model, noise, uniform, mple_cfg,
    seed=derive_seed(seed, "mple"),
).final

treatment = TreatmentSpec.default()
hits = treatment_hits(atoms.points[:, 0], treatment)
outcomes = true_success(population, treatment)
print(f"treatment: {len(treatment.pulses)} pulses, "
      f"true success fraction {outcomes.mean():.3f}")

print(f"{'method':8s}  sigma_R")
for name, prior in priors.items():
    rates = predicted_success_rates(matrix, prior, hits)
    sigma = success_rate_std(rates, outcomes)
    print(f"{name:8s}  {sigma:.4f}")
