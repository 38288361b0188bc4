import itertools

import numpy as np
import pytest

from covpart import from_rows


def random_ball_points(rng, n, m, radius=1.0):
    x = rng.standard_normal((n, m))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * radius * rng.random((n, 1)) ** (1.0 / m)


def random_dist(rng, n, m, weighted=True):
    pts = random_ball_points(rng, n, m)
    w = rng.random(n) + 0.01 if weighted else None
    return from_rows(pts, w)


def boolean_cube(m):
    """Uniform distribution on all of {+-1}^m / sqrt(m)."""
    pts = np.array(list(itertools.product([1.0, -1.0], repeat=m))) / np.sqrt(m)
    return from_rows(pts)


def correlated_boolean(rng, n, m, strength=0.8, groups=2):
    """Boolean rows driven by a few latent signs; each coordinate copies its group's sign w.p. strength."""
    latent = rng.choice([-1.0, 1.0], size=(n, groups))
    group = np.arange(m) % groups
    flip = rng.random((n, m)) > strength
    noise = rng.choice([-1.0, 1.0], size=(n, m))
    x = np.where(flip, noise, latent[:, group])
    return x / np.sqrt(m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
