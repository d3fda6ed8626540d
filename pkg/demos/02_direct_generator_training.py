"""
Training a generator directly on C(G)
=====================================

The generator is a 1-100-100-1 ReLU network.  Its samples are smoothed by a
Gaussian KDE on the grid, C(G) is evaluated against p = N(0, 0.4^2), and the
gradient flows back through the sample positions.

Pass a step count on the command line for a quicker look (default 1000).
"""
import sys

from ganssl_lab.config import ExperimentConfig
from ganssl_lab.training import train_generator_direct

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
cfg = ExperimentConfig(seed=0)
cfg.case1d.steps = steps
cfg.case1d.eval_samples = 50_000

for eps in cfg.eps:
    rep = train_generator_direct(cfg, eps)
    print(
        f"eps={eps:.1f}  final TV={rep.final['tv']:.4f}  "
        f"last C={rep.objective[-1]:+.4f}  steps with support violations={rep.final['violation_steps']}"
    )

# The same runs, with artifacts, are one command away:
#   ganssl-lab case1d --out runs/case1d
