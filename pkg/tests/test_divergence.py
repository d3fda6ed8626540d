import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ganssl_lab.autodiff import grad_check, parameter
from ganssl_lab.distributions import GridDensity, discretize, gaussian_grid, kde_on_grid
from ganssl_lab.divergence import (
    LOG2,
    gan_value,
    gaussian_kl,
    js,
    kl,
    perturbed_kl,
    support_violations,
    total_variation,
)
from ganssl_lab.errors import DomainError, ShapeError, SupportViolation
from ganssl_lab.verification import random_density, random_density_pair


def disjoint_pair():
    grid = dict(lower=0.0, upper=3.0, cells=300)
    a = discretize(lambda x: (x < 1.0).astype(float), **grid)
    b = discretize(lambda x: (x >= 2.0).astype(float), **grid)
    return a, b


def test_gaussian_kl_oracle():
    # log(s2/s1) + s1^2/(2 s2^2) - 1/2
    assert gaussian_kl(0, 0.4, 0, 0.8) == pytest.approx(math.log(2) + 0.125 - 0.5, abs=1e-15)
    assert gaussian_kl(0, 0.4, 0, 0.8) == pytest.approx(0.318147, abs=1e-6)


def test_discretized_kl_matches_closed_form():
    p = gaussian_grid(0, 0.4, -4, 4, 1600)
    q = gaussian_grid(0, 0.8, -4, 4, 1600)
    assert abs(float(kl(p, q)) - 0.318147) <= 1e-3
    assert float(kl(p, p)) == 0.0


def test_kl_is_asymmetric():
    p = gaussian_grid(0, 0.4, -4, 4, 1600)
    q = gaussian_grid(0, 0.8, -4, 4, 1600)
    reverse = float(kl(q, p))
    assert reverse != pytest.approx(float(kl(p, q)), abs=0.1)
    # closed form with the arguments swapped: log(1/2) + 0.64/0.32 - 1/2
    assert abs(reverse - gaussian_kl(0, 0.8, 0, 0.4)) <= 1e-2
    assert gaussian_kl(0, 0.8, 0, 0.4) == pytest.approx(0.806853, abs=1e-6)


def test_js_bounds_and_symmetry():
    a, b = disjoint_pair()
    assert abs(float(js(a, b)) - LOG2) <= 1e-9
    assert float(js(a, a)) == 0.0
    p, q = random_density_pair(np.random.default_rng(0))
    assert float(js(p, q)) == float(js(q, p))


def test_total_variation():
    a, b = disjoint_pair()
    assert abs(float(total_variation(a, b)) - 1.0) <= 1e-9
    assert float(total_variation(a, a)) == 0.0
    p, q = random_density_pair(np.random.default_rng(1))
    assert float(total_variation(p, q)) == float(total_variation(q, p))


def test_grid_mismatch_is_shape_error():
    p = gaussian_grid(0, 0.4, -2, 2, 100)
    q = gaussian_grid(0, 0.4, -2, 2, 101)
    for fn in (kl, js, total_variation):
        with pytest.raises(ShapeError):
            fn(p, q)
    with pytest.raises(ShapeError):
        perturbed_kl(p, q, 0.1)


@pytest.mark.parametrize("eps", [0.1, 0.2])
def test_perturbed_kl_identity(eps):
    p = gaussian_grid(0, 0.4)
    assert abs(float(perturbed_kl(p, p, eps)) + math.log(1 - eps)) <= 1e-9


def test_perturbed_kl_example_and_monotone():
    p = gaussian_grid(0, 0.4)
    assert float(perturbed_kl(p, p, 0.1)) == pytest.approx(0.105361, abs=1e-6)
    assert float(perturbed_kl(p, p, 0.2)) > float(perturbed_kl(p, p, 0.1))
    q = gaussian_grid(0.3, 0.5)
    assert float(perturbed_kl(p, q, 0.0)) == 0.0


def test_perturbed_kl_support_violation_names_cell():
    p = gaussian_grid(0, 0.4)
    q = gaussian_grid(1.5, 0.2)
    assert support_violations(p, q, 0.5).size > 0
    with pytest.raises(SupportViolation) as info:
        perturbed_kl(p, q, 0.5)
    assert "cell" in str(info.value)
    assert np.isfinite(float(perturbed_kl(p, q, 0.5, clamp=True)))
    with pytest.raises(DomainError):
        perturbed_kl(p, q, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_divergences_nonnegative(seed):
    p, q = random_density_pair(np.random.default_rng(seed), cells=200)
    for fn in (kl, js, total_variation):
        assert float(fn(p, q)) >= -1e-9
    assert float(js(p, q)) <= LOG2 + 1e-9
    assert float(perturbed_kl(p, q, 0.1)) >= -1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gan_identity(seed):
    p, q = random_density_pair(np.random.default_rng(seed), cells=200)
    assert abs(float(gan_value(p, q)) - (2 * float(js(p, q)) - 2 * LOG2)) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.1), st.floats(0.11, 0.2))
def test_perturbed_kl_increasing_in_eps(seed, e1, e2):
    p, q = random_density_pair(np.random.default_rng(seed), cells=200)
    assert float(perturbed_kl(p, q, e2)) > float(perturbed_kl(p, q, e1))


def test_divergences_differentiable_through_kde():
    rng = np.random.default_rng(2)
    p = gaussian_grid(0, 0.4, cells=80)
    x = parameter(rng.normal(scale=0.4, size=20))

    for fn in (kl, js, lambda a, b: perturbed_kl(a, b, 0.1)):
        def objective(_):
            return fn(p, kde_on_grid(x, 0.15, -2.0, 2.0, 80))

        assert grad_check(objective, [x], 1e-5) <= 1e-4


def test_js_of_random_pairs_within_bounds():
    rng = np.random.default_rng(3)
    for _ in range(200):
        p, q = random_density_pair(rng, cells=100)
        v = float(js(p, q))
        assert -1e-9 <= v <= LOG2 + 1e-9


def test_tensor_and_array_agree():
    p = gaussian_grid(0, 0.4, cells=50)
    q = random_density(np.random.default_rng(4), cells=50)
    qt = GridDensity(q.lower, q.upper, q.cells, parameter(q.array))
    assert float(kl(p, qt).data) == pytest.approx(float(kl(p, q)), rel=1e-14)
