"""Bounded solutions at complex wave number and the factorization solution u.

u = (2k1/i) phi(k1) F^-1(k1) [[1, 0], [-+i, 0]] + f(k1) [[0, +-i], [0, 1]],  k1 = chi (1 + i).
"""
from dataclasses import dataclass
from typing import Sequence, Tuple

import allure
import numpy as np
from loguru import logger

from potentials.base_potential import Potential, rotation_matrix
from solvers.radial_grid import RadialGrid
from solvers.radial_solver import (JostMatrix, MatrixSolution, check_growth, jost_matrix_from_solutions,
                                   jost_solution, regular_solution, wronskian)
from utils.exceptions import DegeneracyError, DomainError

DEGENERACY_TOLERANCE = 1e-8
ORIGIN_WINDOW = (2.0, 20.0)


def conjugate_wronskian(u: np.ndarray, u_prime: np.ndarray) -> np.ndarray:
    """
    W[u, u*] = u^T u*' - u'^T u* written out entry by entry.

    The explicit sums make W_ji = -conj(W_ij) hold exactly in floating point.
    """
    out = np.empty(u.shape, dtype=complex)
    for i in range(2):
        for j in range(2):
            out[..., i, j] = sum(u[..., a, i] * np.conj(u_prime[..., a, j])
                                 - u_prime[..., a, i] * np.conj(u[..., a, j]) for a in range(2))
    return out


def check_sign(sign: int) -> int:
    if sign not in (1, -1):
        logger.error(f"Transformation sign must be +1 or -1, got {sign!r}")
        raise DomainError(f"sign must be +1 or -1, got {sign!r}")
    return int(sign)


@dataclass(frozen=True, eq=False)
class VectorSolution:
    """Column solution sampled on the grid: values and derivatives of shape (n, 2)"""

    k: complex
    r: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    kind: str


def _u_type(regular: MatrixSolution, jost: JostMatrix, coeffs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    factor = 2.0 * complex(regular.k) / 1j
    direction = np.linalg.solve(jost.F, coeffs)
    return factor * regular.values @ direction, factor * regular.derivatives @ direction


def bounded_solution(potential: Potential, k: complex, coeffs: Sequence[complex], kind: str,
                     grid: RadialGrid) -> VectorSolution:
    """
    Vector solutions bounded at one end for Im k > 0.

    kind 'v': f(k, r) d, decaying like e^(ikr) d at large r.
    kind 'u': (2k/i) phi(k, r) F^-1(k) c, vanishing like r^(nu+1) at the origin
    and growing like e^(-ikr) c at large r.

    Raises:
        DomainError: If Im k <= 0 or kind is unknown
        HypothesisViolation: If F(k) is singular
    """
    k = complex(k)
    if k.imag <= 0:
        logger.error(f"bounded_solution needs Im k > 0, got k={k}")
        raise DomainError(f"bounded_solution needs Im k > 0, got k={k}")
    if kind not in ("u", "v"):
        logger.error(f"Unknown bounded solution kind {kind!r}")
        raise DomainError(f"kind must be 'u' or 'v', got {kind!r}")
    coeffs = np.asarray(coeffs, dtype=complex)

    jost = jost_solution(potential, k, grid)
    if kind == "v":
        return VectorSolution(k, grid.points, jost.values @ coeffs, jost.derivatives @ coeffs, kind="v")

    regular = regular_solution(potential, k, grid)
    matrix = jost_matrix_from_solutions(jost, regular, grid)
    values, derivatives = _u_type(regular, matrix, coeffs)
    return VectorSolution(k, grid.points, values, derivatives, kind="u")


@dataclass(frozen=True)
class OriginConstants:
    """u(r -> 0) ~ [[a1 r^(nu1+1), b1 r^-nu1], [a2 r^(nu2+1), b2 r^-nu2]] in the core basis"""

    a1: complex
    a2: complex
    b1: complex
    b2: complex
    slopes: Tuple[Tuple[float, float], Tuple[float, float]]
    leading_determinant: complex


def fit_origin_constants(u: np.ndarray, r: np.ndarray, nu: Tuple[int, int], core_angle: float = 0.0) -> OriginConstants:
    """
    Measure a_j, b_j on r in [2 r_min, 20 r_min] and check the leading coefficient of det u.

    Raises:
        DegeneracyError: If the leading coefficient of det u vanishes (a1 b2 = a2 b1 for nu1 = nu2)
    """
    window = (r >= ORIGIN_WINDOW[0] * r[0]) & (r <= ORIGIN_WINDOW[1] * r[0])
    if np.count_nonzero(window) < 2:
        logger.warning("Fewer than two grid points in the near-origin window; fitting the first three nodes")
        window = np.zeros(r.size, dtype=bool)
        window[:3] = True
    radii = r[window]
    local = rotation_matrix(core_angle).T @ u[window]

    regular_power = np.array([radii ** (n + 1) for n in nu]).T
    irregular_power = np.array([radii ** (-float(n)) for n in nu]).T
    a = np.mean(local[:, :, 0] / regular_power, axis=0)
    b = np.mean(local[:, :, 1] / irregular_power, axis=0)

    log_r = np.log(radii)
    tiny = np.finfo(float).tiny
    slopes = tuple(
        tuple(float(np.polyfit(log_r, np.log(np.abs(local[:, j, c]) + tiny), 1)[0]) for c in range(2))
        for j in range(2)
    )

    nu1, nu2 = nu
    if nu1 == nu2:
        leading = a[0] * b[1] - a[1] * b[0]
        reference = abs(a[0] * b[1]) + abs(a[1] * b[0])
    elif nu1 < nu2:
        leading = a[0] * b[1]
        reference = np.max(np.abs(a)) * np.max(np.abs(b))
    else:
        leading = -a[1] * b[0]
        reference = np.max(np.abs(a)) * np.max(np.abs(b))
    logger.debug(f"Near-origin constants a={a}, b={b}, slopes={slopes}, leading det coefficient {leading:.3e}")

    if not reference or abs(leading) <= DEGENERACY_TOLERANCE * reference:
        logger.error(f"Degenerate near-origin constants: leading det coefficient {leading:.3e}")
        raise DegeneracyError(
            "Leading coefficient of det u vanishes at the origin (a1 b2 = a2 b1); higher-order expansion needed"
        )
    return OriginConstants(complex(a[0]), complex(a[1]), complex(b[0]), complex(b[1]), slopes, complex(leading))


@dataclass(frozen=True, eq=False)
class FactorizationSolution:
    """Matrix factorization solution u at E1 = 2i chi^2 and its Wronskian W[u, u*]"""

    chi: float
    sign: int
    r: np.ndarray
    u: np.ndarray
    u_prime: np.ndarray
    origin_constants: OriginConstants
    jost_matrix: JostMatrix
    wronskian: np.ndarray

    @property
    def k1(self) -> complex:
        return self.chi * (1 + 1j)

    @property
    def k2(self) -> complex:
        return self.chi * (1j - 1)

    @property
    def E1(self) -> complex:
        return 2j * self.chi ** 2

    @property
    def E2(self) -> complex:
        return -2j * self.chi ** 2

    @property
    def coupling(self) -> complex:
        """E1 - E2 = 4i chi^2"""
        return 4j * self.chi ** 2

    def as_solution(self, conjugate: bool = False) -> MatrixSolution:
        """u (at k1) or u* (at k2) as a matrix solution of the parent equation"""
        if conjugate:
            return MatrixSolution(self.k2, self.r, np.conj(self.u), np.conj(self.u_prime), kind="factorization")
        return MatrixSolution(self.k1, self.r, self.u, self.u_prime, kind="factorization")

    def self_wronskian(self) -> np.ndarray:
        return wronskian(self.u, self.u_prime, self.u, self.u_prime)

    def self_wronskian_residual(self) -> float:
        """max over r and entries of |W[u,u]_ij| / (|u_i||u_j'| + |u_i'||u_j|)"""
        columns = np.linalg.norm(self.u, axis=1)
        derivative_columns = np.linalg.norm(self.u_prime, axis=1)
        scale = (columns[:, :, None] * derivative_columns[:, None, :]
                 + derivative_columns[:, :, None] * columns[:, None, :])
        return float(np.max(np.abs(self.self_wronskian()) / scale))

    def wronskian_derivative(self) -> np.ndarray:
        """W[u,u*]' = 4i chi^2 u^T u*"""
        return self.coupling * np.swapaxes(self.u, 1, 2) @ np.conj(self.u)

    def column_scale(self) -> np.ndarray:
        """4 chi^2 |u_i| |u_j|, the natural size of entry (i, j) of W[u,u*]'"""
        columns = np.linalg.norm(self.u, axis=1)
        return 4.0 * self.chi ** 2 * columns[:, :, None] * columns[:, None, :]

    def asymptotic_residual(self, potential: Potential) -> float:
        """Relative mismatch of column 1 with f(-k1, r_max) (1, -+i)^T at the last node"""
        f_negative, _ = potential.jost_boundary(-self.k1, self.r[-1])
        expected = f_negative @ np.array([1.0, -1j * self.sign])
        return float(np.linalg.norm(self.u[-1, :, 0] - expected) / np.linalg.norm(expected))


@allure.step("Build factorization solution chi={chi} sign={sign}")
def factorization_solution(potential: Potential, chi: float, sign: int, grid: RadialGrid) -> FactorizationSolution:
    """
    Assemble u at k1 = chi (1 + i) from the regular and Jost solutions of the potential.

    Raises:
        ConfigError: If 2 chi r_max exceeds the overflow guard
        HypothesisViolation: If F(k1) is singular
        DegeneracyError: If the near-origin constants are degenerate
    """
    sign = check_sign(sign)
    if chi <= 0:
        logger.error(f"chi must be positive, got {chi}")
        raise DomainError(f"chi must be positive, got {chi}")
    k1 = chi * (1 + 1j)
    check_growth(k1, grid.r_max)
    logger.info(f"Factorization solution for {potential} at k1={k1:.6g}, sign={sign:+d}")

    jost = jost_solution(potential, k1, grid)
    regular = regular_solution(potential, k1, grid)
    matrix = jost_matrix_from_solutions(jost, regular, grid)

    first_values, first_derivatives = _u_type(regular, matrix, np.array([1.0, -1j * sign]))
    second = np.array([1j * sign, 1.0])
    u = np.stack([first_values, jost.values @ second], axis=2)
    u_prime = np.stack([first_derivatives, jost.derivatives @ second], axis=2)

    constants = fit_origin_constants(u, grid.points, potential.spec.nu, potential.spec.core_angle)
    solution = FactorizationSolution(
        chi=float(chi), sign=sign, r=grid.points, u=u, u_prime=u_prime,
        origin_constants=constants, jost_matrix=matrix,
        wronskian=conjugate_wronskian(u, u_prime),
    )
    logger.success(f"Factorization solution ready: self-Wronskian residual {solution.self_wronskian_residual():.2e}")
    return solution
