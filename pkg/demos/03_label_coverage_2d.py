"""
Label coverage on three discs
=============================

Class 1 lives on two discs (11 and 12), class 2 on one disc (21).  With a
few labels in every disc the minimax game learns the right boundary.  When
disc 12 gets no labels the outcome on it depends on the seed.

Pass a round count for a quicker look (default 3000).
"""
import sys

from ganssl_lab.config import ExperimentConfig
from ganssl_lab.training import train_gan_ssl_minimax
from ganssl_lab.verification import check_assumption_coverage

rounds = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
cfg = ExperimentConfig(study="case2d")
cfg.case2d.rounds = rounds

for scenario in ("satisfied", "violated"):
    for seed in range(3):
        rep = train_gan_ssl_minimax(cfg, scenario, seed)
        acc = rep.final["accuracy"]
        print(f"{scenario:9s} seed {seed}: " + "  ".join(f"{k}={v:.2f}" for k, v in acc.items()))

# coverage is a property of the labeled set alone
from ganssl_lab.distributions import LabeledDataset

xl, yl = rep.final["labeled"]
print(check_assumption_coverage(LabeledDataset.build(xl, yl), rep.final["manifold"]))
