"""Solve the regularized aggregation-diffusion PDE and write density snapshots.

Writes CSV and binary density files to ./demo-pde and prints mass and peak
over time. The binary layout is described in docs/formats.md.
"""

from pathlib import Path

import numpy as np

from kschaos import io
from kschaos.experiments.lemmas import bump_density
from kschaos.kernel import RegularizedKernel
from kschaos.meanfield import PDEConfig, solve_pde, velocity_bound

out = Path("demo-pde")
out.mkdir(exist_ok=True)

rho0 = bump_density(3.0, 64)
umax = velocity_bound(rho0.domain, 4 * rho0.linf())
dt = PDEConfig.stable_dt(0.05, rho0.domain, (64, 64), 0.01, umax)
cfg = PDEConfig(nu=0.05, eps=0.05, dt=dt, T=0.5, grid=(64, 64),
                snapshot_every=int(round(0.05 / dt)))
traj = solve_pde(rho0, cfg, RegularizedKernel(0.05, 2))

for g in traj.frames:
    print(f"t={g.time:5.3f}  mass={g.mass():.15f}  max={g.linf():7.4f}")
(out / "density.csv").write_text(io.density_csv(traj.frames))
io.write_density(out / "final.ksd", traj.frames[-1])
back = io.read_density(out / "final.ksd")
assert np.array_equal(back.cells, traj.frames[-1].cells)
print(f"wrote {len(traj.frames)} frames to {out}/")
