"""Channel bookkeeping and the common potential interface."""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from loguru import logger

from special_functions.riccati_hankel import double_factorial, free_jost_matrix
from utils.exceptions import DomainError


def rotation_matrix(angle: float) -> np.ndarray:
    """R(angle) = [[cos, -sin], [sin, cos]]"""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class ChannelSpec:
    """
    Partial waves l and singularity indices nu of a two-channel problem.

    core_angle rotates the r^-2 core away from the channel basis; it is zero
    for every potential whose core is diagonal. check_physical enforces
    nu >= l, which transformed potentials are not required to satisfy.
    """

    l1: int
    l2: int
    nu1: int
    nu2: int
    core_angle: float = 0.0
    check_physical: bool = field(default=True, compare=False)

    def __post_init__(self):
        for name in ("l1", "l2", "nu1", "nu2"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
                logger.error(f"ChannelSpec.{name} must be a nonnegative integer, got {value!r}")
                raise DomainError(f"ChannelSpec.{name} must be a nonnegative integer, got {value!r}")
        if (self.l2 - self.l1) % 2 != 0:
            logger.error(f"Partial waves of different parity: l=({self.l1}, {self.l2})")
            raise DomainError(f"l2 - l1 must be even, got l=({self.l1}, {self.l2})")
        if self.check_physical and self.core_angle == 0.0 and not self.is_physical:
            logger.error(f"Unphysical channel spec: nu=({self.nu1}, {self.nu2}) < l=({self.l1}, {self.l2})")
            raise DomainError(
                f"Physical potentials need nu >= l, got nu=({self.nu1}, {self.nu2}), l=({self.l1}, {self.l2})"
            )

    @property
    def l(self) -> Tuple[int, int]:
        return self.l1, self.l2

    @property
    def nu(self) -> Tuple[int, int]:
        return self.nu1, self.nu2

    @property
    def m(self) -> int:
        return (self.l2 - self.l1) // 2

    @property
    def is_physical(self) -> bool:
        return self.nu1 >= self.l1 and self.nu2 >= self.l2

    @property
    def centrifugal(self) -> np.ndarray:
        """diag(l(l+1))"""
        return np.diag([self.l1 * (self.l1 + 1.0), self.l2 * (self.l2 + 1.0)])

    @property
    def core(self) -> np.ndarray:
        """R diag(nu(nu+1)) R^T, the limit of r^2 V at the origin"""
        rotation = rotation_matrix(self.core_angle)
        return rotation @ np.diag([self.nu1 * (self.nu1 + 1.0), self.nu2 * (self.nu2 + 1.0)]) @ rotation.T

    def swapped(self, nu_bar: Tuple[int, int], core_angle: float = 0.0) -> "ChannelSpec":
        """Spec of a transformed potential: partial waves exchanged, new singularity indices"""
        return ChannelSpec(self.l2, self.l1, int(nu_bar[0]), int(nu_bar[1]),
                           core_angle=core_angle, check_physical=False)

    def describe(self) -> str:
        text = f"l=({self.l1},{self.l2}) nu=({self.nu1},{self.nu2})"
        if self.core_angle:
            text += f" core_angle={self.core_angle:.12g}"
        return text


class Potential(ABC):
    """
    Real symmetric 2x2 potential V(r) = V_int(r) + centrifugal part, in units hbar^2/2mu = 1.

    Subclasses implement _evaluate on arrays of radii. Instances are immutable
    and safe to evaluate from several threads.
    """

    def __init__(self, spec: ChannelSpec, provenance: str, tail_decay: str = "exponential"):
        self.spec = spec
        self.provenance = provenance
        self.tail_decay = tail_decay

    @abstractmethod
    def _evaluate(self, r: np.ndarray) -> np.ndarray:
        """Return an array of shape (n, 2, 2) for radii of shape (n,)"""

    def evaluate(self, r):
        """V(r) as a (2, 2) matrix for scalar r or an (n, 2, 2) array for array r"""
        scalar = np.ndim(r) == 0
        values = self._evaluate(np.atleast_1d(np.asarray(r, dtype=float)))
        return values[0] if scalar else values

    __call__ = evaluate

    def jost_boundary(self, k: complex, r: float) -> Tuple[np.ndarray, np.ndarray]:
        """Jost solution and derivative at the outer radius r"""
        return free_jost_matrix(self.spec, k, r)

    def regular_boundary(self, k: complex, r: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Regular solution and derivative at the inner radius r.

        Leading power r^(nu+1)/(2nu+1)!! per core channel, carried to the
        next order in the energy: (1 - k^2 r^2 / (4 nu + 6)). The correction
        is even in k, so phi(k) = phi(-k) is kept.
        """
        energy = complex(k) ** 2
        values, derivatives = [], []
        for nu in self.spec.nu:
            norm = double_factorial(2 * nu + 1)
            a = -energy / (4 * nu + 6)
            values.append(r ** (nu + 1) * (1.0 + a * r * r) / norm)
            derivatives.append(((nu + 1) * r ** nu + a * (nu + 3) * r ** (nu + 2)) / norm)
        rotation = rotation_matrix(self.spec.core_angle)
        return rotation @ np.diag(values), rotation @ np.diag(derivatives)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.spec.describe()}, {self.provenance})"
