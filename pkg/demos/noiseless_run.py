"""
Recovering a near-antipodal attitude error without noise
========================================================

The estimator starts 0.99 pi radians away from the true attitude, almost
the worst case on the unit-quaternion sphere, and watches a single body
direction plus gyro readings. This script runs that scenario through the
library API and plots how the error and the internal optimality residual
evolve.
"""

import pathlib

import numpy as np

from mef import build_run_config, merge_with_defaults, run

HERE = pathlib.Path(__file__).resolve().parent

# The run is assembled from string overrides on the built-in defaults,
# exactly as `mef simulate --set key=value` would do it.
raw = merge_with_defaults({
    "observer.initial_error_rad": repr(0.99 * np.pi),
    "observer.initial_error_axis": "1,0,0",
    "scenario.duration": "100.0",
})
config = build_run_config(raw)

records, summary = run(config)
print(f"epochs:            {len(records)}")
print(f"final error        {summary['final_error_rad']:.3e} rad")
print(f"max opt residual   {summary['max_opt_residual']:.3e}")
print(f"total substeps     {summary['total_substeps']}")

# The error collapses by orders of magnitude once the estimate leaves the
# repulsive antipode; the residual stays at solver precision throughout,
# which is the filter's internal certificate that each correction step
# solved its critical-point equation.
t = np.array([r.t for r in records])
err = np.array([r.error_angle for r in records])
res = np.array([np.linalg.norm(r.opt_residual) for r in records])

for mark in (0.0, 1.0, 5.0, 20.0, 100.0):
    k = np.searchsorted(t, mark)
    k = min(k, len(t) - 1)
    print(f"t={t[k]:6.1f} s   error {err[k]:.3e} rad")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not installed, skipping the plot")
else:
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.semilogy(t, np.maximum(err, 1e-16))
    ax1.set_ylabel("attitude error [rad]")
    ax1.grid(True, which="both", alpha=0.3)
    ax2.semilogy(t, np.maximum(res, 1e-18))
    ax2.set_ylabel("optimality residual")
    ax2.set_xlabel("t [s]")
    ax2.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    out = HERE / "noiseless_run.png"
    fig.savefig(out, dpi=120)
    print(f"plot saved to {out}")
