"""Shared test utilities: finite-difference oracle and error metrics."""

import numpy as np

from llpkit.network import ClassifierParams


def finite_difference_gradient(loss_fn, theta, step=1e-4):
    """Central-difference gradient of a scalar function of the flat
    parameter vector."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        up[i] += step
        down = theta.copy()
        down[i] -= step
        grad[i] = (loss_fn(up) - loss_fn(down)) / (2.0 * step)
    return grad


def max_relative_error(a, b):
    """Largest component difference relative to the overall scale."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-12)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def check_loss_gradient(loss_fn, params: ClassifierParams, tol=1e-5, step=1e-4):
    """Assert the analytic parameter gradient of (loss, output-grad) pair
    matches central finite differences.

    ``loss_fn(params)`` must return (loss_value, flat_parameter_gradient).
    """
    _, analytic = loss_fn(params)

    def value_only(theta):
        value, _ = loss_fn(params.with_theta(theta))
        return value

    numeric = finite_difference_gradient(value_only, params.theta, step=step)
    err = max_relative_error(analytic, numeric)
    assert err <= tol, f"gradient mismatch: relative error {err:.3e} > {tol}"
    return err


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))
