"""Two iterations on a small box with light quadrature, then the MHD lift.

    python demos/short_run.py [output_dir]
"""

import sys

import numpy as np

from wildcurrents.io import RunConfig, emit_outputs
from wildcurrents.scheme import lift_to_mhd, run

cfg = RunConfig(
    omega_shape="box", k_max=2, r_max=0.3, grid_energy=4096, grid_ball_probes=12,
    grid_global_probes=500, grid_mollify_outer=64, grid_mollify_inner=1024, grid_weak=2048,
    weak_trials=2, grid_snapshot=96, output_slices=(0.0, 0.3),
    output_dir=sys.argv[1] if len(sys.argv) > 1 else "demo_out",
)
report = run(cfg.settings(), progress=lambda r: print(
    f"k={r['k']}  deficit={r['deficit']:.4f}  balls={r['balls']}  N_max={r['N_max']:.0f}"))
files = emit_outputs(report, report.subsolution, cfg)
print("wrote", ", ".join(sorted(p.name for p in files)), "to", cfg.output_dir)

mhd = lift_to_mhd(report.subsolution)
p = np.random.default_rng(1).uniform(-0.9, 0.9, size=(2000, 4))
print("max |div B|:", np.abs(mhd.div_B(p)).max())
print("max |(curl B) x B + grad |B|^2/2|:", np.abs(mhd.lorentz_force(p) + mhd.magnetic_pressure_gradient(p)).max())
