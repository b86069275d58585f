"""
Small-perturbation limit laws
=============================

With delta_n = eta n^-gamma the rescaled error of the l2 estimator is
centred at a bias term when gamma < 1/2 and at zero when gamma > 1/2. The
bias can be computed by Monte Carlo and compared with the simulated mean.
"""

import numpy as np

from advprec.asymptotics import AsymptoticsConfig, bias_matrix, rescaled_errors_at
from advprec.synth import GroundTruth

truth = GroundTruth(np.eye(3), np.eye(3), frozenset())
b = bias_matrix(np.eye(3), 2, 1.0, mc_samples=100_000)
print("bias diagonal        ", np.round(np.diag(b.mean), 3))

for gamma, n in ((0.25, 5000), (0.5, 5000), (1.0, 5000)):
    cfg = AsymptoticsConfig(gamma, 1.0, (n,), 200, seed=1)
    s = rescaled_errors_at(truth, cfg, n)
    print(f"gamma={gamma:4.2f} rate={s.rate:.2f}  mean diagonal {np.round(np.diag(s.mean), 3)}"
          f"  +- {np.round(np.diag(s.stderr), 3)}  var {np.round(np.diag(s.variance), 2)}")
