"""Optimizers and the two training regimes.

``train_generator_direct`` minimizes the generator objective C(G) on a grid,
differentiating through a kernel density estimate of the generator samples.
``train_gan_ssl_minimax`` alternates discriminator ascent on L_D + U_GD with
generator descent on the generated-sample part of U_GD.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import MlpParams, forward_mlp, init_mlp
from .config import ExperimentConfig
from .core import (
    Discriminator,
    init_discriminator,
    log_fake_prob,
    log_real_prob,
    predict,
    supervised_from_logits,
    unsupervised_from_logits,
)
from .distributions import GridDensity, gaussian_grid, kde_on_grid, sample_labeled
from .divergence import support_violations, total_variation
from .core import generator_objective_divergence
from .errors import ContractError, DomainError, NumericError, ShapeError, TrainingFailure

log = logging.getLogger(__name__)


class SGD:
    kind = "sgd"

    def __init__(self, params, lr=1e-3):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.params = list(params)
        self.lr = lr

    def _grads(self, grads):
        out = []
        for j, p in enumerate(self.params):
            g = grads.get(p) if grads is not None else p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.shape:
                raise ShapeError(f"gradient {j} has shape {g.shape}, parameter has {p.shape}")
            if not np.all(np.isfinite(g)):
                bad = np.unravel_index(int(np.argmax(~np.isfinite(g))), g.shape)
                raise NumericError(f"non-finite gradient in parameter {j} at index {tuple(int(i) for i in bad)}")
            out.append(g)
        return out

    def step(self, grads=None):
        for p, g in zip(self.params, self._grads(grads)):
            p.data = p.data - self.lr * g


class Adam(SGD):
    kind = "adam"

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        super().__init__(params, lr)
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads=None):
        gs = self._grads(grads)
        self.t += 1
        b1, b2 = self.betas
        for i, (p, g) in enumerate(zip(self.params, gs)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * (g * g)
            m_hat = self.m[i] / (1 - b1**self.t)
            v_hat = self.v[i] / (1 - b2**self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind, params, lr):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return SGD(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")


@dataclass
class TrainReport:
    seed: int
    objective: np.ndarray
    metric_name: str
    metric: np.ndarray
    violations: np.ndarray
    params: dict
    final: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def steps(self) -> np.ndarray:
        return np.arange(1, len(self.objective) + 1)

    def __post_init__(self):
        n = len(self.objective)
        if len(self.metric) != n or len(self.violations) != n:
            raise ShapeError("report series must have one entry per step")


def _streams(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


# -- direct generator training (1-D) ------------------------------------------------------

def data_density(config: ExperimentConfig) -> GridDensity:
    g = config.grid
    return gaussian_grid(config.case1d.data_mean, config.case1d.data_std, g.lower, g.upper, g.cells)


def generator_density(G: MlpParams, config: ExperimentConfig, n: int, rng) -> GridDensity:
    c = config.case1d
    z = rng.standard_normal((n, c.latent_dim))
    x = forward_mlp(G, z).data.reshape(-1)
    return kde_on_grid(x, c.bandwidth, config.grid.lower, config.grid.upper, config.grid.cells)


def identity_generator(config: ExperimentConfig) -> MlpParams:
    """A ReLU network computing G(z) = mean + std * z_0 exactly.

    Uses x = relu(z) - relu(-z) carried through the hidden layers on two units.
    """
    c = config.case1d
    dims = [c.latent_dim, *c.hidden, 1]
    if min(c.hidden) < 2:
        raise ContractError("identity construction needs at least two hidden units per layer")
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        w = np.zeros((fan_in, fan_out))
        if i == 0:
            w[0, 0], w[0, 1] = 1.0, -1.0
        elif i == len(dims) - 2:
            w[0, 0], w[1, 0] = c.data_std, -c.data_std
        else:
            w[0, 0], w[1, 1] = 1.0, 1.0
        weights.append(w)
        b = np.zeros(fan_out)
        if i == len(dims) - 2:
            b[0] = c.data_mean
        biases.append(b)
    return MlpParams(tuple(dims), weights, biases)


def train_generator_direct(config: ExperimentConfig, eps: float | None = None, generator: MlpParams | None = None) -> TrainReport:
    """Minimize C(G) for one eps by backpropagating through the sample KDE."""
    c, g = config.case1d, config.grid
    eps = config.eps[0] if eps is None else float(eps)
    if not 0.0 <= eps < 1.0:
        raise ContractError(f"eps must lie in [0,1), got {eps}")
    rng_init, rng_train, rng_eval = _streams(config.seed, 3)
    p = data_density(config)
    G = generator if generator is not None else init_mlp([c.latent_dim, *c.hidden, 1], rng_init)
    opt = make_optimizer(c.optimizer, G.parameters(), c.lr)

    objective = np.empty(c.steps)
    tv = np.empty(c.steps)
    violations = np.zeros(c.steps, dtype=np.int64)
    t0 = time.perf_counter()
    for step in range(c.steps):
        z = rng_train.standard_normal((c.batch, c.latent_dim))
        x = forward_mlp(G, z).reshape(-1)
        if not np.all(np.isfinite(x.data)):
            raise NumericError(f"generator produced non-finite samples at step {step}")
        try:
            q = kde_on_grid(x, c.bandwidth, g.lower, g.upper, g.cells)
        except DomainError as exc:
            raise NumericError(f"training diverged at step {step}: {exc}") from exc
        if eps > 0:
            violations[step] = support_violations(p, q.detach(), eps).size
        obj = generator_objective_divergence(p, q, eps, clamp=True)
        value = obj.item()
        if not np.isfinite(value):
            raise NumericError(f"objective is not finite at step {step}")
        objective[step] = value
        tv[step] = float(total_variation(p, q.detach()))
        opt.step(ad.backward(obj))
        if (step + 1) % max(1, c.steps // 10) == 0:
            log.info("eps=%.3f step %d C=%.6f tv=%.4f", eps, step + 1, value, tv[step])

    frac = float(np.mean(violations > 0))
    if frac > c.max_violation_fraction:
        raise TrainingFailure(
            f"support violations in {frac:.0%} of steps (limit {c.max_violation_fraction:.0%}) at eps={eps}"
        )
    final_density = generator_density(G, config, c.eval_samples, rng_eval)
    final_tv = float(total_variation(p, final_density))
    return TrainReport(
        seed=config.seed,
        objective=objective,
        metric_name="tv",
        metric=tv,
        violations=violations,
        params={"generator": G},
        final={
            "eps": eps,
            "tv": final_tv,
            "objective": float(objective[-1]),
            "violation_steps": int(np.sum(violations > 0)),
            "density": final_density,
            "data_density": p,
        },
        wall_clock=time.perf_counter() - t0,
    )


# -- alternating minimax training (2-D) ---------------------------------------------------

def covered_subdomains(config: ExperimentConfig, scenario: str | None = None):
    scenario = scenario or config.case2d.scenario
    names = [d.name for d in config.manifold.build().discs]
    if scenario == "satisfied":
        return names
    return [n for n in names if n not in config.case2d.uncovered]


def build_datasets(config: ExperimentConfig, scenario: str | None, rng):
    c = config.case2d
    manifold = config.manifold.build()
    covered = covered_subdomains(config, scenario)
    xl, yl = sample_labeled(rng, manifold, c.labeled_per_subdomain, covered)
    xu = manifold.sample_uniform(rng, c.unlabeled) if c.unlabeled > 0 else np.empty((0, 2))
    return manifold, xl, yl, xu


def discriminator_objective(D: Discriminator, xl, yl, real, fake):
    """J_D = L_D + U_GD; either part is dropped when its batches are empty."""
    terms = []
    if len(yl):
        terms.append(supervised_from_logits(D.logits(xl), yl))
    if len(real) and len(fake):
        terms.append(unsupervised_from_logits(D.logits(real), D.logits(fake)))
    if not terms:
        raise ContractError("nothing to train: no labeled data and no real/generated batches")
    return terms[0] if len(terms) == 1 else terms[0] + terms[1]


def generator_loss(D: Discriminator, fake, non_saturating=False):
    """Generator's part of U_GD, E log P(K+1 | G(z)); the non-saturating variant is off by default."""
    logits = D.logits(fake)
    if non_saturating:
        return -log_real_prob(logits).mean()
    return log_fake_prob(logits).mean()


def train_gan_ssl_minimax(config: ExperimentConfig, scenario: str | None = None, seed: int | None = None) -> TrainReport:
    from .verification import evaluate_decision

    c = config.case2d
    seed = config.seed if seed is None else seed
    rng_data, rng_init, rng_train, rng_snap = _streams(seed, 4)
    manifold, xl, yl, xu = build_datasets(config, scenario, rng_data)
    K = manifold.n_classes
    D = init_discriminator(c.feature_dims, K, rng_init)
    G = init_mlp([c.latent_dim, *c.generator_hidden, 2], rng_init)
    opt_d = make_optimizer(c.optimizer, D.parameters(), c.lr)
    opt_g = make_optimizer(c.optimizer, G.parameters(), c.lr)
    use_gan = c.unlabeled > 0 and c.batch > 0
    snap_z = rng_snap.standard_normal((c.snapshot_size, c.latent_dim))
    yu = manifold.true_labels(xu) if len(xu) else None
    eval_x, eval_y = (xu, yu) if len(xu) else (xl, yl)

    objective = np.empty(c.rounds)
    gen_obj = np.full(c.rounds, np.nan)
    acc = np.empty(c.rounds)
    snapshots = {}
    t0 = time.perf_counter()
    for r in range(c.rounds):
        for _ in range(c.n_d):
            if use_gan:
                real = xu[rng_train.integers(0, len(xu), c.batch)]
                fake = forward_mlp(G, rng_train.standard_normal((c.batch, c.latent_dim))).data
            else:
                real = fake = np.empty((0, 2))
            j = discriminator_objective(D, xl, yl, real, fake)
            value = j.item()
            if not np.isfinite(value):
                raise NumericError(f"discriminator objective is not finite at round {r}")
            objective[r] = value
            opt_d.step(ad.backward(-j))
        if c.n_d == 0:
            objective[r] = np.nan
        if use_gan:
            for _ in range(c.n_g):
                fake = forward_mlp(G, rng_train.standard_normal((c.batch, c.latent_dim)))
                loss = generator_loss(D, fake, c.non_saturating)
                if not np.isfinite(loss.item()):
                    raise NumericError(f"generator objective is not finite at round {r}")
                gen_obj[r] = loss.item()
                opt_g.step(ad.backward(loss))
        acc[r] = float(np.mean(predict(D.logits(eval_x).data) == eval_y)) if len(eval_y) else np.nan
        if use_gan and c.snapshot_size > 0 and ((r + 1) % c.checkpoint_every == 0 or r + 1 == c.rounds):
            snapshots[r + 1] = forward_mlp(G, snap_z).data.copy()

    accuracy = evaluate_decision(D, manifold, c.test_resolution)
    return TrainReport(
        seed=seed,
        objective=objective,
        metric_name="accuracy",
        metric=acc,
        violations=np.zeros(c.rounds, dtype=np.int64),
        params={"discriminator": D, "generator": G},
        final={
            "accuracy": accuracy,
            "generator_objective": gen_obj,
            "labeled": (xl, yl),
            "unlabeled": xu,
            "manifold": manifold,
            "scenario": scenario or c.scenario,
        },
        snapshots=snapshots,
        wall_clock=time.perf_counter() - t0,
    )
