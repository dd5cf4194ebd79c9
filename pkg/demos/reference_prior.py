"""Maximum-entropy reference weights for the two-time spring model.

With measurements at two times the response map folds the stiffness axis,
so spreading mass evenly over stiffness does NOT spread it evenly over
measurements.  Entropy-only ascent exposes this: the weights that
maximize the measurement entropy concentrate on a sparse subset of atoms.
"""

import numpy as np

from mixprior.core import (
    AtomSet,
    GaussianNoise,
    MeasurementSet,
    WeightVector,
    likelihood_matrix,
    measurement_grid,
)
from mixprior.estimators import MpleConfig, reference_prior_run, z_entropy_quadrature
from mixprior.toymodel import DEFAULT_MEASUREMENT_STD, two_time_model

atoms = AtomSet.grid_1d(1.0, 50.0, 200)
model = two_time_model()
noise = GaussianNoise(DEFAULT_MEASUREMENT_STD, dim=2)
uniform = WeightVector.uniform(atoms.count)

cfg = MpleConfig(gamma=49.0, max_iter=120)
trace = reference_prior_run(atoms, model, noise, uniform, cfg, seed=0)
final = trace.final

nodes, volume = measurement_grid([-0.13, -0.13], [0.13, 0.13], [260, 260])
grid = likelihood_matrix(
    model, noise, atoms, MeasurementSet.from_points(nodes, id_prefix="q")
)
h_uniform = z_entropy_quadrature(grid, uniform, volume)
h_final = z_entropy_quadrature(grid, final, volume)

print(f"measurement entropy: uniform {h_uniform:.4f}, reference {h_final:.4f}")
print(f"max weight {final.w.max():.4f} vs uniform {1 / atoms.count:.4f} "
      f"({final.w.max() * atoms.count:.1f}x)")

order = np.argsort(final.w)[::-1][:8]
print("heaviest atoms:")
for k in order:
    print(f"  K = {atoms.points[k, 0]:6.2f} N/m   w = {final.w[k]:.4f}")
