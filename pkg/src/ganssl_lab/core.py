"""The K+1-class discriminator and the semi-supervised GAN objectives.

The discriminator produces K logits; the logit of the "generated" class K+1
is pinned to zero and never stored.  Writing ``S = logsumexp(logits)``:

    log P(K+1 | x)   = -softplus(S)
    log P(y <= K | x) = -softplus(-S)
    log P(y | x, y <= K) = logit_y - S
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import MlpParams, Tensor, forward_mlp, init_mlp, parameter
from .distributions import DENSITY_FLOOR, UNLABELED, GridDensity, check_same_grid
from .divergence import LOG2, js, perturbed_kl
from .errors import ContractError, DomainError, NumericError, ShapeError


@dataclass
class DiscriminatorHead:
    """Class weight vectors omega_1..omega_K as a ``(K, d)`` matrix."""

    omega: Tensor

    def __post_init__(self):
        if not isinstance(self.omega, Tensor):
            self.omega = parameter(self.omega)
        if self.omega.ndim != 2:
            raise ShapeError("omega must be a (K, d) matrix")

    @property
    def n_classes(self) -> int:
        return self.omega.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.omega.shape[1]


@dataclass
class Discriminator:
    """``D = (omega, f)``: feature network followed by the class head."""

    features: MlpParams
    head: DiscriminatorHead

    def __post_init__(self):
        if self.features.layer_dims[-1] != self.head.feature_dim:
            raise ShapeError(
                f"feature dim {self.features.layer_dims[-1]} does not match head dim {self.head.feature_dim}"
            )

    @property
    def n_classes(self) -> int:
        return self.head.n_classes

    def feature_map(self, x):
        return forward_mlp(self.features, x)

    def logits(self, x):
        return self.feature_map(x) @ self.head.omega.T

    def parameters(self):
        return self.features.parameters() + [self.head.omega]

    def copy(self):
        return Discriminator(self.features.copy(), DiscriminatorHead(parameter(self.head.omega.data)))


def init_discriminator(feature_dims, n_classes, rng) -> Discriminator:
    features = init_mlp(feature_dims, rng)
    d = feature_dims[-1]
    bound = math.sqrt(6.0 / (d + n_classes))
    return Discriminator(features, DiscriminatorHead(rng.uniform(-bound, bound, size=(n_classes, d))))


def _check_finite(logits):
    if not np.all(np.isfinite(ad.value_of(logits))):
        raise NumericError("logits must be finite")


# -- probabilities -------------------------------------------------------------------

def class_probs(logits) -> np.ndarray:
    """Softmax over ``[l_1, ..., l_K, 0]``; last axis has K+1 entries."""
    logits = np.asarray(logits, dtype=np.float64)
    _check_finite(logits)
    full = np.concatenate([logits, np.zeros(logits.shape[:-1] + (1,))], axis=-1)
    full = full - full.max(axis=-1, keepdims=True)
    e = np.exp(full)
    return e / e.sum(axis=-1, keepdims=True)


def conditional_class_probs(logits) -> np.ndarray:
    """Softmax over the K real-class logits only."""
    logits = np.asarray(logits, dtype=np.float64)
    _check_finite(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_fake_prob(logits):
    """log P(K+1 | x) for a ``(n, K)`` logit array or Tensor."""
    s = ad.as_tensor(logits).logsumexp(axis=-1)
    return -s.softplus()


def log_real_prob(logits):
    """log P(y <= K | x)."""
    s = ad.as_tensor(logits).logsumexp(axis=-1)
    return -(-s).softplus()


def log_conditional_probs(logits):
    logits = ad.as_tensor(logits)
    return logits - logits.logsumexp(axis=-1, keepdims=True)


def predict(logits) -> np.ndarray:
    """Class decision argmax_k P(k | x, k <= K), classes numbered from 1; ties go to the lowest index."""
    return np.argmax(np.asarray(ad.value_of(logits)), axis=-1) + 1


# -- objectives ---------------------------------------------------------------------------

def supervised_from_logits(logits, labels):
    """Mean log P(y | x, y <= K); ``labels`` are 1..K."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ContractError("supervised objective needs a non-empty labeled batch")
    if np.any(labels == UNLABELED) or np.any(labels < 1):
        raise ContractError("supervised batch contains an unlabeled point")
    logits = ad.as_tensor(logits)
    if np.any(labels > logits.shape[-1]):
        raise ContractError("label exceeds the number of classes")
    _check_finite(logits)
    logp = log_conditional_probs(logits)
    return logp[np.arange(len(labels)), labels - 1].mean()


def unsupervised_from_logits(real_logits, fake_logits, non_saturating: bool = False):
    """Mean log P(y<=K | real) + mean log P(K+1 | generated)."""
    real = log_real_prob(real_logits).mean()
    if non_saturating:
        return real - log_real_prob(fake_logits).mean()
    return real + log_fake_prob(fake_logits).mean()


def supervised_objective(D: Discriminator, points, labels):
    """L_D on a labeled batch."""
    if len(labels) == 0:
        raise ContractError("supervised objective needs a non-empty labeled batch")
    return supervised_from_logits(D.logits(points), labels)


def unsupervised_objective(D: Discriminator, real_points, generated_points):
    """U_GD on a real batch and a generated batch (either may be a Tensor)."""
    if len(real_points) == 0 or len(generated_points) == 0:
        raise ContractError("unsupervised objective needs non-empty real and generated batches")
    return unsupervised_from_logits(D.logits(real_points), D.logits(generated_points))


def unsupervised_on_grid(logits, p: GridDensity, p_gen: GridDensity) -> float:
    """Quadrature of p log P(y<=K|x) + p_G log P(K+1|x) with per-cell logits ``(n_cells, K)``."""
    check_same_grid(p, p_gen)
    logits = np.asarray(logits, dtype=np.float64).reshape(-1, np.shape(logits)[-1])
    pv, qv = p.array.reshape(-1), p_gen.array.reshape(-1)
    real = log_real_prob(logits).data
    fake = log_fake_prob(logits).data
    return float(np.sum(pv * real + qv * fake) * p.cell_measure)


# -- closed forms -------------------------------------------------------------------------

def optimal_true_prob(p: GridDensity, p_gen: GridDensity) -> np.ndarray:
    """Per-cell p / (p + p_G); cells where both vanish get 1/2."""
    check_same_grid(p, p_gen)
    pv, qv = p.array, p_gen.array
    s = pv + qv
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(s > 0, pv / np.where(s > 0, s, 1.0), 0.5)
    return t


def lemma1_lift(logits, p: GridDensity, p_gen: GridDensity) -> np.ndarray:
    """Rescale per-cell logits so the fake-class probability becomes p_G / (p + p_G).

    ``l*_k = l_k - logsumexp(l) + log(p / p_G)``; conditional class
    probabilities are unchanged.
    """
    check_same_grid(p, p_gen)
    logits = np.asarray(logits, dtype=np.float64)
    k = logits.shape[-1]
    flat = logits.reshape(-1, k)
    if flat.shape[0] != p.array.size:
        raise ShapeError(f"{flat.shape[0]} logit rows for {p.array.size} grid cells")
    _check_finite(flat)
    qv = p_gen.array.reshape(-1)
    if np.any(qv < DENSITY_FLOOR):
        cell = int(np.argmax(qv < DENSITY_FLOOR))
        raise DomainError(f"p_G is below the density floor at cell {cell}; the lift is undefined there")
    pv = np.maximum(p.array.reshape(-1), DENSITY_FLOOR)
    m = flat.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(flat - m).sum(axis=1, keepdims=True))
    lifted = flat - lse + np.log(pv / qv)[:, None]
    return lifted.reshape(logits.shape)


def generator_objective_divergence(p: GridDensity, p_gen: GridDensity, eps: float, clamp: bool = False):
    """C(G) = -KL(p || p - eps p_G) + 2 JS(p || p_G) - 2 log 2."""
    return -perturbed_kl(p, p_gen, eps, clamp=clamp) + js(p, p_gen) * 2.0 - 2.0 * LOG2


def generator_objective_integral(p: GridDensity, p_gen: GridDensity, eps: float) -> tuple[float, float]:
    """(L_DG, U_G) evaluated through the optimal discriminator's probabilities.

    The true-class logit is set to exp(l_y) = p/p_G - eps with the logits
    summing (in exp) to p/p_G, so P(y | x, y<=K) = (p/p_G - eps) p_G / p and
    P(K+1 | x) = 1 / (1 + p/p_G).
    """
    check_same_grid(p, p_gen)
    if not 0.0 <= eps < 1.0:
        raise DomainError(f"eps must lie in [0, 1), got {eps}")
    pv = p.array.reshape(-1)
    qv = np.maximum(p_gen.array.reshape(-1), DENSITY_FLOOR)
    active = pv > DENSITY_FLOOR
    ratio = pv[active] / qv[active]
    true_logit_exp = ratio - eps
    if np.any(true_logit_exp * qv[active] < DENSITY_FLOOR):
        raise DomainError("p/p_G - eps must stay positive wherever p has mass")
    cond = true_logit_exp / ratio
    l_dg = float(np.sum(pv[active] * np.log(cond)) * p.cell_measure)

    # P(K+1|x) = 1/(1 + sum_k exp(l_k)) with sum_k exp(l_k) = p/p_G
    pvc = np.maximum(pv, DENSITY_FLOOR)
    fake = 1.0 / (1.0 + pvc / qv)
    real = 1.0 - fake
    raw_q = p_gen.array.reshape(-1)
    u_g = float(
        (np.sum(pv * np.log(np.maximum(real, DENSITY_FLOOR))) + np.sum(raw_q * np.log(np.maximum(fake, DENSITY_FLOOR))))
        * p.cell_measure
    )
    return l_dg, u_g
