"""
Taylor polynomial helpers
=========================

Evaluation of operator-valued polynomials ``sum_i alpha**i * coeffs[i]``
and of their alpha-derivatives. Coefficients are stacked along axis 0.
"""

import numpy as np


def taylor_sum(coeffs: np.ndarray, alpha: float) -> np.ndarray:
    """
    Evaluate ``sum_i alpha**i * coeffs[i]`` with Horner's scheme.

    Args:
        coeffs: Array of shape (order + 1, ...)
        alpha: Parameter value

    Returns:
        Array of shape ``coeffs.shape[1:]``
    """
    result = np.array(coeffs[-1], dtype=float, copy=True)
    for coefficient in coeffs[-2::-1]:
        result = result * alpha + coefficient
    return result


def taylor_derivative(coeffs: np.ndarray, alpha: float) -> np.ndarray:
    """
    Evaluate ``sum_{i>=1} i * alpha**(i-1) * coeffs[i]``.

    Returns zeros of the coefficient shape for a constant polynomial.
    """
    if len(coeffs) < 2:
        return np.zeros(coeffs.shape[1:])
    orders = np.arange(1, len(coeffs)).reshape((-1,) + (1,) * (coeffs.ndim - 1))
    return taylor_sum(coeffs[1:] * orders, alpha)


def taylor_sum_batch(coeffs: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """
    Evaluate the polynomial at several parameter values at once.

    Args:
        coeffs: Array of shape (order + 1, ...)
        alphas: Parameter values, shape (m,)

    Returns:
        Array of shape ``(m,) + coeffs.shape[1:]``
    """
    alphas = np.asarray(alphas, dtype=float)
    powers = np.vander(alphas, len(coeffs), increasing=True)
    return (powers @ coeffs.reshape(len(coeffs), -1)).reshape(alphas.shape + coeffs.shape[1:])


def taylor_derivative_batch(coeffs: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Batched ``taylor_derivative``, shape ``(m,) + coeffs.shape[1:]``."""
    alphas = np.asarray(alphas, dtype=float)
    if len(coeffs) < 2:
        return np.zeros(alphas.shape + coeffs.shape[1:])
    orders = np.arange(1, len(coeffs)).reshape((-1,) + (1,) * (coeffs.ndim - 1))
    return taylor_sum_batch(coeffs[1:] * orders, alphas)


def transmission_coefficients(depth: np.ndarray, order: int) -> np.ndarray:
    """
    Taylor coefficients in alpha of the transmitted fraction ``exp(-(1 + alpha) * depth)``.

    The i-th coefficient is ``exp(-s) * (-s)**i / i!`` with ``s`` the nominal
    cumulative optical depth.

    Args:
        depth: Cumulative optical depth per point (dimensionless, >= 0)
        order: Highest Taylor order

    Returns:
        Array of shape (order + 1, len(depth))
    """
    if order < 0:
        raise ValueError(f"Taylor order must be non-negative, got {order}")
    depth = np.asarray(depth, dtype=float)
    coefficients = np.empty((order + 1,) + depth.shape)
    term = np.exp(-depth)
    for i in range(order + 1):
        coefficients[i] = term
        term = term * (-depth) / (i + 1)
    return coefficients


def transmission(depth: np.ndarray, alpha: float) -> np.ndarray:
    """Directly evaluate ``exp(-(1 + alpha) * depth)``."""
    return np.exp(-(1.0 + alpha) * np.asarray(depth, dtype=float))


def absorbed_fraction_coefficients(top: np.ndarray, bottom: np.ndarray, order: int) -> np.ndarray:
    """
    Taylor coefficients of the light fraction absorbed between two optical depths.

    Lambert-Beer absorption between depths ``top <= bottom`` removes
    ``exp(-(1 + alpha) * top) - exp(-(1 + alpha) * bottom)`` of the incident
    power. Equal depths (transparent slabs) give exact zeros.
    """
    return transmission_coefficients(top, order) - transmission_coefficients(bottom, order)


def absorbed_fraction(top: np.ndarray, bottom: np.ndarray, alpha: float) -> np.ndarray:
    """Directly evaluated absorbed fraction between two optical depths."""
    return transmission(top, alpha) - transmission(bottom, alpha)
