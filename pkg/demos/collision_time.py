"""Mean collision time of two unregularized particles in the unit disk.

With 8 pi nu = 1/2 and uniform initial data the expected collision time is
bounded by pi. At nu = 0 the pair collapses deterministically at
tau = (pi / 2) |X1 - X2|^2, which the first block checks replica by replica.
"""

import math

from kschaos.experiments import StudyConfig, collision_study
from kschaos.experiments.collision import collision_times
from kschaos.geometry import Disk

disk = Disk([0.0, 0.0], 1.0)

# deterministic case: tau = 2 pi |X1 - mean|^2
tau, _, msd = collision_times(2, 0.0, 1e-4, 7.0, 5, 0, disk, 1e-9)
for t, m in zip(tau, msd):
    print(f"nu=0   tau={t:.4f}   (pi/2)|Z0|^2={2 * math.pi * m:.4f}")

cfg = StudyConfig("collision", N_list=(2,), eps_rule=0.0, nu=1 / (16 * math.pi), dt=1e-3,
                  replicas=100, seed=0, params={"nu_grid": [0.0, 0.01, 1 / (16 * math.pi)]})
rep = collision_study(cfg)
main = rep.points[0]
print(f"\nnu=1/(16 pi): mean tau {main['mean_tau']:.3f} +/- {main['se_tau']:.3f}, "
      f"bound {main['bound_exact']:.4f}")
print(rep.summary())
