"""Divergences between grid densities by midpoint quadrature.

All functions accept densities whose values are ndarrays or Tensors; in the
latter case the result is a scalar Tensor.  Densities are clamped at
``DENSITY_FLOOR`` before entering a logarithm, and ``0 * log 0`` is 0.
"""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .distributions import DENSITY_FLOOR, GridDensity, check_same_grid
from .errors import DomainError, SupportViolation

LOG2 = math.log(2.0)


def _safe_log(values):
    return ad.log(ad.clamp_min(values, DENSITY_FLOOR))


def _integrate(p: GridDensity, integrand):
    return ad.total(integrand) * p.cell_measure


def kl(p: GridDensity, q: GridDensity):
    """KL(p || q)."""
    check_same_grid(p, q)
    pv = p.values
    return _integrate(p, pv * (_safe_log(pv) - _safe_log(q.values)))


def js(p: GridDensity, q: GridDensity):
    """Jensen-Shannon divergence, natural log; lies in [0, log 2]."""
    check_same_grid(p, q)
    m = p.with_values((p.values + q.values) * 0.5)
    return kl(p, m) * 0.5 + kl(q, m) * 0.5


def total_variation(p: GridDensity, q: GridDensity):
    check_same_grid(p, q)
    return _integrate(p, ad.absolute(p.values - q.values)) * 0.5


def _check_eps(eps):
    if not 0.0 <= eps < 1.0:
        raise DomainError(f"eps must lie in [0, 1), got {eps}")


def support_violations(p: GridDensity, q: GridDensity, eps: float) -> np.ndarray:
    """Flat indices of cells where p has mass but ``p - eps*q`` is below the floor."""
    check_same_grid(p, q)
    pv, qv = p.array, q.array
    bad = (pv > DENSITY_FLOOR) & (pv - eps * qv < DENSITY_FLOOR)
    return np.flatnonzero(bad)


def perturbed_kl(p: GridDensity, q: GridDensity, eps: float, clamp: bool = False):
    """KL(p || p - eps*q).

    With ``clamp=False`` a support violation raises :class:`SupportViolation`;
    with ``clamp=True`` the perturbed density is clamped at the floor instead
    (training mode; callers count violations with :func:`support_violations`).
    """
    check_same_grid(p, q)
    _check_eps(eps)
    if not clamp:
        bad = support_violations(p, q, eps)
        if bad.size:
            idx = np.unravel_index(bad[0], p.cells)
            where = p.midpoints()[bad[0]]
            raise SupportViolation(
                f"p - eps*q is not positive at cell {tuple(int(i) for i in idx)} "
                f"(midpoint {np.round(where, 6).tolist()}, eps={eps}); {bad.size} cells violate",
                cells=bad,
            )
    pv = p.values
    return _integrate(p, pv * (_safe_log(pv) - _safe_log(pv - q.values * eps)))


def gan_value(p: GridDensity, q: GridDensity):
    """Sum of p log(p/(p+q)) + q log(q/(p+q)), i.e. ``2 js - 2 log 2`` on normalized inputs."""
    check_same_grid(p, q)
    pv, qv = p.values, q.values
    s = _safe_log(pv + qv)
    return _integrate(p, pv * (_safe_log(pv) - s) + qv * (_safe_log(qv) - s))


def gaussian_kl(mu1, sigma1, mu2, sigma2) -> float:
    """Closed-form KL(N(mu1, sigma1^2) || N(mu2, sigma2^2))."""
    return math.log(sigma2 / sigma1) + (sigma1**2 + (mu1 - mu2) ** 2) / (2.0 * sigma2**2) - 0.5
