"""Riccati-Hankel functions of the first kind for integer partial waves.

h_l(z) = i^(l+1) (pi z / 2)^(1/2) H^(1)_(l+1/2)(z) is elementary for integer l and
is built here by upward recurrence from h_(-1) = h_0 = exp(iz).
"""
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from loguru import logger

from utils.exceptions import DomainError, SingularityError

MAX_PARTIAL_WAVE = 20
MAX_DOUBLE_FACTORIAL_ARGUMENT = 33

ComplexLike = Union[complex, float, np.ndarray]


@dataclass(frozen=True)
class RiccatiValue:
    """Value of h_l and its derivative with respect to the argument"""

    value: ComplexLike
    derivative: ComplexLike


def double_factorial(n: int) -> int:
    """
    n!! for odd n, as used in the regular-solution normalization r^(nu+1)/(2nu+1)!!.

    Raises:
        DomainError: If n is even, negative or above the machine-integer guard
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        logger.error(f"double_factorial needs an integer, got {n!r}")
        raise DomainError(f"double_factorial needs an integer, got {n!r}")
    n = int(n)
    if n < 0 or n % 2 == 0 or n > MAX_DOUBLE_FACTORIAL_ARGUMENT:
        logger.error(f"double_factorial undefined for n={n}")
        raise DomainError(
            f"double_factorial needs an odd integer 1 <= n <= {MAX_DOUBLE_FACTORIAL_ARGUMENT}, got {n}"
        )
    return math.prod(range(n, 0, -2))


def _check_partial_wave(l: int) -> int:
    if isinstance(l, bool) or not isinstance(l, (int, np.integer)) or not 0 <= l <= MAX_PARTIAL_WAVE:
        logger.error(f"Partial wave out of range: {l!r}")
        raise DomainError(f"Partial wave must be an integer in [0, {MAX_PARTIAL_WAVE}], got {l!r}")
    return int(l)


def riccati_hankel(l: int, z: ComplexLike) -> RiccatiValue:
    """
    Evaluate h_l(z) and h_l'(z).

    Works on scalars and on numpy arrays of arguments. The recurrence is
    h_(l+1) = i(2l+1)/z h_l + h_(l-1) and the derivative follows from
    h_l' = i h_(l-1) - (l/z) h_l.

    Args:
        l: Partial wave, 0 <= l <= 20
        z: Nonzero complex argument

    Returns:
        RiccatiValue with value and derivative of the same shape as z

    Raises:
        SingularityError: If any argument is zero
        DomainError: If l is out of range
    """
    l = _check_partial_wave(l)
    scalar = np.ndim(z) == 0
    z_arr = np.asarray(z, dtype=complex)
    if np.any(z_arr == 0):
        logger.error("Riccati-Hankel function evaluated at z = 0")
        raise SingularityError("h_l(z) is singular at z = 0")

    previous = np.exp(1j * z_arr)
    current = previous.copy()
    for n in range(l):
        previous, current = current, 1j * (2 * n + 1) / z_arr * current + previous

    derivative = 1j * previous - (l / z_arr) * current
    if scalar:
        return RiccatiValue(complex(current), complex(derivative))
    return RiccatiValue(current, derivative)


def free_jost_matrix(spec, k: complex, r: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Free Jost solution diag(h_l1(kr), h_l2(kr)) and its r-derivative.

    Args:
        spec: ChannelSpec providing the asymptotic partial waves
        k: Nonzero wave number, real or complex
        r: Positive radius

    Returns:
        Tuple (value, derivative) of 2x2 complex matrices
    """
    k = complex(k)
    if k == 0:
        logger.error("free_jost_matrix called with k = 0")
        raise SingularityError("Free Jost solution needs k != 0")
    if r <= 0:
        logger.error(f"free_jost_matrix called with r = {r}")
        raise DomainError(f"Radius must be positive, got {r}")

    first = riccati_hankel(spec.l1, k * r)
    second = riccati_hankel(spec.l2, k * r)
    value = np.diag([first.value, second.value])
    derivative = k * np.diag([first.derivative, second.derivative])
    return value, derivative
