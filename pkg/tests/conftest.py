"""Shared oracles and helpers for the test suite."""

import numpy as np
import pytest


def central_difference(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Independent gradient oracle: central finite differences of a scalar
    function f() with respect to every element of x (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def assert_grad_close(analytic: np.ndarray, numeric: np.ndarray,
                      rtol: float = 1e-5, tiny: float = 1e-8) -> None:
    """Relative comparison, with an absolute fallback for near-zero entries."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    small = np.abs(analytic) < tiny
    if np.any(small):
        np.testing.assert_allclose(analytic[small], numeric[small], atol=tiny, rtol=0)
    if np.any(~small):
        denom = np.maximum(np.abs(analytic[~small]), np.abs(numeric[~small]))
        rel = np.abs(analytic[~small] - numeric[~small]) / denom
        assert rel.max() < rtol, f"max relative gradient error {rel.max():.3e} >= {rtol}"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
