"""Shared helpers for the test suite."""

import math

import numpy as np
import pytest

from gbsim import ComplexUnitary, apply_interferometer, squeezed_state
from gbsim.gaussian import random_state


def tmsv(r):
    """Two-mode squeezed vacuum via a 50:50 mix of (r, -r) squeezers."""
    U = ComplexUnitary(np.array([[1, 1], [1, -1]]) / math.sqrt(2))
    return apply_interferometer(squeezed_state([r, -r]), U)


def gauss_legendre_2d(fn, lo, hi, points=160):
    """Quadrature of fn over the square [lo, hi]^2; fn maps (n, 2) -> (n,)."""
    x, w = np.polynomial.legendre.leggauss(points)
    x = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * w
    xx, yy = np.meshgrid(x, x, indexing="ij")
    grid = np.column_stack([xx.ravel(), yy.ravel()])
    vals = fn(grid).reshape(points, points)
    return float(w @ vals @ w)


def integrate_density(density, half_sigmas=12.0, points=160):
    """Total mass of an OutcomeDensity, with per-coordinate sigma scaling."""
    scale_x = math.sqrt(density.covs[:, 0, 0].max())
    scale_p = math.sqrt(density.covs[:, 1, 1].max())
    span_x = np.abs(density.means[:, 0]).max() + half_sigmas * scale_x
    span_p = np.abs(density.means[:, 1]).max() + half_sigmas * scale_p

    def scaled(pts):
        return density.pdf(pts * np.array([span_x, span_p])) * span_x * span_p

    return gauss_legendre_2d(scaled, -1.0, 1.0, points)


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)


@pytest.fixture
def random_states(rng):
    def make(modes, count=1, **kw):
        return [random_state(modes, rng, **kw) for _ in range(count)]

    return make
