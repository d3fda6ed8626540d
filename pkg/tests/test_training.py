import math

import numpy as np
import pytest

from ganssl_lab import autodiff as ad
from ganssl_lab.autodiff import forward_mlp, parameter
from ganssl_lab.config import ExperimentConfig
from ganssl_lab.core import generator_objective_divergence
from ganssl_lab.distributions import kde_on_grid
from ganssl_lab.errors import ContractError, NumericError, ShapeError, TrainingFailure
from ganssl_lab.training import (
    SGD,
    Adam,
    TrainReport,
    build_datasets,
    data_density,
    discriminator_objective,
    identity_generator,
    train_gan_ssl_minimax,
    train_generator_direct,
)

LOG4 = 2 * math.log(2)


def test_sgd_step():
    w = parameter(np.array([1.0]))
    SGD([w], lr=0.1).step({w: np.array([0.5])})
    assert w.data[0] == pytest.approx(0.95, abs=1e-15)


@pytest.mark.parametrize("cls", [SGD, Adam])
def test_zero_gradient_keeps_params(cls):
    w = parameter(np.array([1.0, -2.0]))
    cls([w], lr=0.1).step({w: np.zeros(2)})
    np.testing.assert_array_equal(w.data, [1.0, -2.0])


@pytest.mark.parametrize("scale", [1.0, 1e-3, 1e3])
def test_adam_first_step_is_lr(scale):
    w = parameter(np.zeros(5))
    Adam([w], lr=0.01).step({w: np.full(5, scale)})
    # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    np.testing.assert_allclose(w.data, -0.01 * scale / (scale + 1e-8), rtol=1e-12)


def test_optimizer_rejects_bad_gradients():
    w = parameter(np.zeros(3))
    with pytest.raises(NumericError, match=r"\(1,\)"):
        SGD([w], 0.1).step({w: np.array([0.0, np.nan, 0.0])})
    with pytest.raises(ShapeError):
        Adam([w], 0.1).step({w: np.zeros(4)})


def test_report_length_contract():
    with pytest.raises(ShapeError):
        TrainReport(0, np.zeros(3), "tv", np.zeros(2), np.zeros(3, dtype=int), {})


def _small_1d(steps=60, **kw):
    cfg = ExperimentConfig(seed=0)
    cfg.case1d.steps = steps
    cfg.case1d.hidden = [16, 16]
    cfg.case1d.batch = 128
    cfg.case1d.eval_samples = 4000
    for k, v in kw.items():
        setattr(cfg.case1d, k, v)
    return cfg


def test_identity_generator_starts_near_optimum():
    cfg = ExperimentConfig()
    G = identity_generator(cfg)
    z = np.random.default_rng(0).standard_normal((4000, 1))
    np.testing.assert_allclose(forward_mlp(G, z).data.reshape(-1), 0.4 * z.reshape(-1), atol=1e-12)
    q = kde_on_grid(forward_mlp(G, z).data.reshape(-1), 0.05, -2.0, 2.0, 400)
    start = float(generator_objective_divergence(data_density(cfg), q, 0.0))
    assert abs(start + LOG4) <= 0.05

    rep = train_generator_direct(_small_1d(steps=5, hidden=[100, 100]), 0.0, generator=identity_generator(cfg))
    assert abs(rep.objective[0] + LOG4) <= 0.05


def test_direct_training_respects_js_lower_bound_and_improves():
    rep = train_generator_direct(_small_1d(steps=300), 0.0)
    assert np.all(rep.objective >= -LOG4 - 1e-6)
    smooth = np.convolve(rep.objective, np.ones(100) / 100, mode="valid")
    assert smooth[-1] < smooth[0]
    assert rep.final["tv"] < rep.metric[0]


def test_direct_training_is_bitwise_reproducible():
    a = train_generator_direct(_small_1d(steps=20), 0.1)
    b = train_generator_direct(_small_1d(steps=20), 0.1)
    for name in ("objective", "metric", "violations"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    assert a.final["density"].array.tobytes() == b.final["density"].array.tobytes()


def test_persistent_violations_raise_when_limit_set():
    # a generator twice as wide as the data puts eps*q above p in both tails at every step
    wide = ExperimentConfig()
    wide.case1d.data_std = 0.8
    cfg = _small_1d(steps=20, hidden=[100, 100], lr=1e-12, max_violation_fraction=0.5)
    with pytest.raises(TrainingFailure, match="support violations"):
        train_generator_direct(cfg, 0.2, generator=identity_generator(wide))
    cfg.case1d.max_violation_fraction = 1.0
    rep = train_generator_direct(cfg, 0.2, generator=identity_generator(wide))
    assert rep.final["violation_steps"] == 20


def test_direct_training_rejects_bad_eps():
    with pytest.raises(ContractError):
        train_generator_direct(_small_1d(steps=2), 1.0)


def _small_2d(**kw):
    cfg = ExperimentConfig(study="case2d", seed=0)
    c = cfg.case2d
    c.rounds, c.batch, c.feature_dims, c.generator_hidden = 150, 64, [2, 16, 16], [16]
    c.checkpoint_every, c.snapshot_size, c.test_resolution = 50, 64, 15
    for k, v in kw.items():
        setattr(c, k, v)
    return cfg


def test_degenerate_2d_run_is_supervised():
    cfg = _small_2d(unlabeled=0, rounds=400)
    rep = train_gan_ssl_minimax(cfg, "satisfied")
    assert rep.metric[-1] == 1.0
    assert not rep.snapshots
    assert np.all(np.isnan(rep.final["generator_objective"]))


def test_minimax_run_reproducible_with_snapshots():
    a = train_gan_ssl_minimax(_small_2d(), "violated")
    b = train_gan_ssl_minimax(_small_2d(), "violated")
    assert a.objective.tobytes() == b.objective.tobytes()
    assert sorted(a.snapshots) == [50, 100, 150]
    assert a.snapshots[150].tobytes() == b.snapshots[150].tobytes()


def test_discriminator_ascent_with_frozen_generator():
    """With G fixed, J_D on a fixed batch rises in most ascent steps."""
    cfg = _small_2d()
    rng = np.random.default_rng(0)
    manifold, xl, yl, xu = build_datasets(cfg, "satisfied", rng)
    from ganssl_lab.autodiff import init_mlp
    from ganssl_lab.core import init_discriminator
    from ganssl_lab.training import make_optimizer

    D = init_discriminator([2, 16, 16], 2, rng)
    G = init_mlp([2, 16, 2], rng)
    fake = forward_mlp(G, rng.standard_normal((200, 2))).data
    opt = make_optimizer("adam", D.parameters(), 1e-3)
    values = []
    for _ in range(200):
        j = discriminator_objective(D, xl, yl, xu[:200], fake)
        values.append(j.item())
        opt.step(ad.backward(-j))
    rises = np.diff(values) >= 0
    assert rises.mean() >= 0.9


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_objective_raises_numeric_error():
    cfg = _small_1d(steps=3, lr=1e300)
    with pytest.raises(NumericError):
        train_generator_direct(cfg, 0.0)
