"""Integration of psi'' = (V(r) - k^2) psi for 2x2 matrix solutions.

Jost solutions are integrated inward from r_max, regular solutions outward
from r_min, both with DOP853 on the first-order system (psi, psi').
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.integrate import solve_ivp

from potentials.base_potential import Potential
from solvers.radial_grid import RadialGrid
from utils.exceptions import ConfigError, HypothesisViolation, NumericalError, PoleError

RTOL = 1e-10
ATOL = 1e-12
GROWTH_LIMIT = 600.0
CONSTANCY_TOLERANCE = 1e-6
CONDITION_LIMIT = 1e12


def wronskian(u: np.ndarray, u_prime: np.ndarray, v: np.ndarray, v_prime: np.ndarray) -> np.ndarray:
    """W[u, v] = u^T v' - u'^T v for stacks of 2x2 matrices"""
    return np.swapaxes(u, -1, -2) @ v_prime - np.swapaxes(u_prime, -1, -2) @ v


@dataclass(frozen=True, eq=False)
class MatrixSolution:
    """2x2 matrix solution sampled on radial grid points"""

    k: complex
    r: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    kind: str

    @property
    def energy(self) -> complex:
        return complex(self.k) ** 2

    def at(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        return self.values[index], self.derivatives[index]


@dataclass(frozen=True, eq=False)
class JostMatrix:
    """F(k) = W[f(k), phi(k)], constant in r; F_neg = F(-k) = W[f(-k), phi(k)] for real k"""

    k: complex
    F: np.ndarray
    F_neg: Optional[np.ndarray]
    constancy: float

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.F))


class _RadialSystem:
    """First-order form of psi'' = (V(r) - E) psi with state (psi, psi') flattened"""

    def __init__(self, potential: Potential, k: complex):
        self.potential = potential
        self.energy = complex(k) ** 2
        self.identity = np.eye(2)

    def __call__(self, r: float, y: np.ndarray) -> np.ndarray:
        psi = y[:4].reshape(2, 2)
        coupling = self.potential.evaluate(r) - self.energy * self.identity
        return np.concatenate((y[4:], (coupling @ psi).ravel()))


def check_growth(k: complex, r_max: float) -> None:
    """Reject wave numbers whose exponential growth over [0, r_max] overflows doubles"""
    growth = 2.0 * abs(complex(k).imag) * r_max
    if growth > GROWTH_LIMIT:
        logger.error(f"Overflow guard: 2|Im k| r_max = {growth:.1f} > {GROWTH_LIMIT}")
        raise ConfigError(
            f"2|Im k|*r_max = {growth:.1f} exceeds {GROWTH_LIMIT}; reduce r_max or chi"
        )


def _integrate(potential: Potential, k: complex, seed: np.ndarray, seed_prime: np.ndarray,
               r_start: float, r_stop: float, t_eval: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    # Columns are scaled to unit size at the start so ATOL stays meaningful
    norms = np.linalg.norm(np.vstack([seed, seed_prime]), axis=0)
    scale = 1.0 / np.where(norms > 0, norms, 1.0)
    y0 = np.concatenate(((seed * scale).ravel(), (seed_prime * scale).ravel())).astype(complex)

    result = solve_ivp(_RadialSystem(potential, k), (r_start, r_stop), y0, method="DOP853",
                       t_eval=np.asarray(t_eval, dtype=float), rtol=RTOL, atol=ATOL)
    if not result.success:
        logger.error(f"Integration failed at k={k} on [{r_start}, {r_stop}]: {result.message}")
        raise NumericalError(
            f"Integrator failed for k={k} between r={r_start} and r={r_stop}: {result.message} "
            f"(nfev={result.nfev})"
        )
    logger.debug(f"Integrated k={k:.6g} from r={r_start:.3e} to r={r_stop:.3e} with {result.nfev} evaluations")

    states = result.y.T
    values = states[:, :4].reshape(-1, 2, 2) / scale
    derivatives = states[:, 4:].reshape(-1, 2, 2) / scale
    return values, derivatives


def jost_solution(potential: Potential, k: complex, grid: RadialGrid) -> MatrixSolution:
    """
    Jost solution f(k, r) on the whole grid, integrated inward from r_max.

    Raises:
        ConfigError: If 2|Im k| r_max exceeds the overflow guard
        NumericalError: If the integrator fails
    """
    k = complex(k)
    check_growth(k, grid.r_max)
    seed, seed_prime = potential.jost_boundary(k, grid.r_max)
    values, derivatives = _integrate(potential, k, seed, seed_prime, grid.r_max, grid.r_min, grid.points[::-1])
    return MatrixSolution(k, grid.points, values[::-1], derivatives[::-1], kind="jost")


def regular_solution(potential: Potential, k: complex, grid: RadialGrid) -> MatrixSolution:
    """
    Regular solution phi(k, r) ~ r^(nu+1)/(2nu+1)!!, integrated outward from r_min.

    Raises:
        ConfigError: If 2|Im k| r_max exceeds the overflow guard
        NumericalError: If the integrator fails
    """
    k = complex(k)
    check_growth(k, grid.r_max)
    seed, seed_prime = potential.regular_boundary(k, grid.r_min)
    values, derivatives = _integrate(potential, k, seed, seed_prime, grid.r_min, grid.r_max, grid.points)
    return MatrixSolution(k, grid.points, values, derivatives, kind="regular")


def _checked_jost(k: complex, first: np.ndarray, second: np.ndarray, radii: Tuple[float, float],
                  negative: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> JostMatrix:
    constancy = _constancy(first, second)
    if negative is not None:
        constancy = max(constancy, _constancy(*negative))
    logger.debug(f"Jost matrix at k={k:.6g}: constancy {constancy:.2e} between r={radii[0]:.3g} and r={radii[1]:.3g}")
    if constancy > CONSTANCY_TOLERANCE:
        logger.error(f"Wronskian not constant at k={k}: relative change {constancy:.2e}")
        raise NumericalError(
            f"Jost matrix changes by {constancy:.2e} between r={radii[0]:.4g} and r={radii[1]:.4g} "
            f"at k={k}; refine the radial grid"
        )

    condition = np.linalg.cond(second)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        if k.imag == 0:
            logger.error(f"Singular Jost matrix at real k={k}: cond={condition:.2e}")
            raise PoleError(f"Jost matrix is singular at real k={k.real} (cond={condition:.2e})")
        logger.error(f"det F(k)=0 in the upper half plane at k={k}: cond={condition:.2e}")
        raise HypothesisViolation(f"Jost matrix is singular at k={k} (cond={condition:.2e})")

    return JostMatrix(k, second, None if negative is None else negative[1], constancy)


def _constancy(first: np.ndarray, second: np.ndarray) -> float:
    return float(np.linalg.norm(first - second) / np.linalg.norm(second))


def jost_matrix_from_solutions(jost: MatrixSolution, regular: MatrixSolution, grid: RadialGrid,
                               jost_negative: Optional[MatrixSolution] = None) -> JostMatrix:
    """
    F from already integrated solutions, evaluated at r_max/2 and r_max.

    F(-k) = W[f(-k), phi(k)] is filled in only when the Jost solution at -k is given.
    """
    half = grid.index_near(grid.r_max / 2.0)
    first = wronskian(*jost.at(half), *regular.at(half))
    second = wronskian(*jost.at(-1), *regular.at(-1))
    negative = None
    if jost_negative is not None:
        negative = (wronskian(*jost_negative.at(half), *regular.at(half)),
                    wronskian(*jost_negative.at(-1), *regular.at(-1)))
    return _checked_jost(complex(jost.k), first, second, (grid.points[half], grid.r_max), negative)


def _jost_pair(potential: Potential, k: complex, r_max: float, r_half: float) -> Tuple[np.ndarray, np.ndarray]:
    seed, seed_prime = potential.jost_boundary(k, r_max)
    return _integrate(potential, k, seed, seed_prime, r_max, r_half, [r_max, r_half])


def jost_matrix(potential: Potential, k: complex, grid: RadialGrid) -> JostMatrix:
    """
    Jost matrix F(k) = W[f(k), phi(k)] and, for real k, F(-k) = W[f(-k), phi(k)].

    The Jost solutions are only integrated over [r_max/2, r_max]; the regular
    solution over the whole grid. phi is even in k, so F(-k) needs no second
    regular solution. Regular seeds of transformed potentials are complex,
    hence F(-k) is not conj F(k) in general and f(-k) is integrated.

    Raises:
        NumericalError: If F changes by more than 1e-6 between r_max/2 and r_max
        PoleError: If F is singular at real k
        HypothesisViolation: If F is singular at complex k
    """
    k = complex(k)
    check_growth(k, grid.r_max)
    r_half = float(grid.points[grid.index_near(grid.r_max / 2.0)])

    f_values, f_derivatives = _jost_pair(potential, k, grid.r_max, r_half)
    seed, seed_prime = potential.regular_boundary(k, grid.r_min)
    p_values, p_derivatives = _integrate(potential, k, seed, seed_prime, grid.r_min, grid.r_max, [r_half, grid.r_max])

    first = wronskian(f_values[1], f_derivatives[1], p_values[0], p_derivatives[0])
    second = wronskian(f_values[0], f_derivatives[0], p_values[1], p_derivatives[1])
    negative = None
    if k.imag == 0:
        g_values, g_derivatives = _jost_pair(potential, -k, grid.r_max, r_half)
        negative = (wronskian(g_values[1], g_derivatives[1], p_values[0], p_derivatives[0]),
                    wronskian(g_values[0], g_derivatives[0], p_values[1], p_derivatives[1]))
    return _checked_jost(k, first, second, (r_half, grid.r_max), negative)


def schrodinger_residual(solution: MatrixSolution, potential: Potential, indices: Sequence[int]) -> float:
    """
    Largest per-column relative residual |psi'' - (V - k^2) psi| at the given indices.

    psi'' comes from a five-point central difference of the sampled psi' and
    needs uniformly spaced neighbours, so indices must lie in the uniform part.
    """
    indices = np.asarray(indices, dtype=int)
    r = solution.r
    d = solution.derivatives
    h = r[indices + 1] - r[indices]
    second = (-d[indices + 2] + 8.0 * d[indices + 1] - 8.0 * d[indices - 1] + d[indices - 2])
    second = second / (12.0 * h[:, None, None])

    psi = solution.values[indices]
    v_psi = potential.evaluate(r[indices]) @ psi
    k_psi = solution.energy * psi
    residual = np.linalg.norm(second - (v_psi - k_psi), axis=1)
    scale = np.linalg.norm(v_psi, axis=1) + np.linalg.norm(k_psi, axis=1)
    worst = float(np.max(residual / scale))
    logger.debug(f"Schrodinger residual over {indices.size} points: {worst:.2e}")
    return worst
