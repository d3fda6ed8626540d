"""
Objective identities on a grid
==============================

Every density below lives on a midpoint grid over [-2, 2].  We check three
facts about the K+1-class discriminator numerically:

* the optimal fake-class probability is p_G / (p + p_G),
* rescaling the logits towards that optimum never lowers the unsupervised
  objective and leaves the class decision untouched,
* the generator objective splits into a perturbed KL term and a JS term.
"""
import numpy as np

from ganssl_lab.core import class_probs, conditional_class_probs, generator_objective_divergence, lemma1_lift, unsupervised_on_grid
from ganssl_lab.distributions import gaussian_grid
from ganssl_lab.verification import golden_section_max, random_logits, verify_prop2_decomposition

p = gaussian_grid(0.0, 0.4)
# narrower than p, so p - eps * p_G stays positive for the eps values below
p_gen = gaussian_grid(0.05, 0.35)

# per-cell maximizer of p log(1 - t) + p_G log t, by brute force
t = golden_section_max(p.array, p_gen.array)
closed = p_gen.array / (p.array + p_gen.array)
print("max |golden - closed form| :", np.abs(t - closed).max())

# start from arbitrary logits for K = 3 classes and lift them
rng = np.random.default_rng(0)
logits = random_logits(rng, p.cells[0], 3)
lifted = lemma1_lift(logits, p, p_gen)
print("U before lift               :", unsupervised_on_grid(logits, p, p_gen))
print("U after lift                :", unsupervised_on_grid(lifted, p, p_gen))
print("conditional probs unchanged :", np.allclose(conditional_class_probs(logits), conditional_class_probs(lifted)))
print("fake prob matches optimum   :", np.allclose(class_probs(lifted)[:, -1], closed))

# the generator objective through two independent routes
for eps in (0.0, 0.1, 0.2):
    r = verify_prop2_decomposition(p, p_gen, eps)
    print(f"eps={eps:.1f}  C(G)={generator_objective_divergence(p, p_gen, eps):+.6f}  residual={r.max_residual:.1e} ({r.status})")

# at p_G = p the value is log(1 - eps) - 2 log 2
for eps in (0.0, 0.1):
    print(f"C(p, p, {eps}) = {generator_objective_divergence(p, p, eps):.6f}")
