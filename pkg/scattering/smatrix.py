"""S-matrix construction and its eigenphase / mixing-angle decomposition.

S = e^(il pi/2) F(-k) F(k)^-1 e^(il pi/2) and R(eps)^T S R(eps) = diag(e^(2i delta1), e^(2i delta2))
with R(eps) = [[cos eps, -sin eps], [sin eps, cos eps]].
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import allure
import numpy as np
import pandas as pd
from loguru import logger

from potentials.base_potential import ChannelSpec, Potential, rotation_matrix
from solvers.radial_grid import RadialGrid
from solvers.radial_solver import CONDITION_LIMIT, JostMatrix, jost_matrix
from utils.exceptions import DomainError, GridRefinementError, PoleError

DEGENERACY_TOLERANCE = 1e-10
QUARTER_PI = np.pi / 4.0
# Steps are folded into (-pi/2, pi/2] by the branch choice, so a step this close to pi/2 is ambiguous
DELTA_STEP_LIMIT = 3.0 * np.pi / 8.0


def phase_factors(l: Sequence[int]) -> np.ndarray:
    """diag(e^(i l pi/2))"""
    return np.diag([1j ** int(value) for value in l])


@dataclass(frozen=True, eq=False)
class SMatrixPoint:
    """S-matrix at one real wave number"""

    k: float
    S: np.ndarray

    @property
    def unitarity_residual(self) -> float:
        return float(np.linalg.norm(self.S @ self.S.conj().T - np.eye(2)))

    @property
    def symmetry_residual(self) -> float:
        return float(np.linalg.norm(self.S - self.S.T))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.S)


class Eigenphases(NamedTuple):
    """delta1, delta2 and epsilon in radians with the branch bookkeeping flags"""

    delta1: float
    delta2: float
    epsilon: float
    degenerate: bool = False
    exchanged: bool = False

    def reconstruct(self) -> np.ndarray:
        rotation = rotation_matrix(self.epsilon)
        return rotation @ np.diag(np.exp(2j * np.array([self.delta1, self.delta2]))) @ rotation.T


def s_matrix(jost: JostMatrix, spec: ChannelSpec) -> SMatrixPoint:
    """
    S = e^(il pi/2) F(-k) F^-1(k) e^(il pi/2) using the channel asymptotic partial waves.

    Raises:
        DomainError: If k is not real and positive or F(-k) is missing
        PoleError: If F(k) is singular
    """
    k = complex(jost.k)
    if k.imag != 0 or k.real <= 0 or jost.F_neg is None:
        logger.error(f"S-matrix needs real k > 0 with F(-k), got k={k}")
        raise DomainError(f"S-matrix needs a real positive k and F(-k), got k={k}")
    condition = np.linalg.cond(jost.F)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        logger.error(f"Pole at k={k.real}: cond F = {condition:.2e}")
        raise PoleError(f"Jost matrix singular at k={k.real} (cond={condition:.2e})")

    phases = phase_factors(spec.l)
    # F(-k) F(k)^-1 = (F(k)^-T F(-k)^T)^T
    ratio = np.linalg.solve(jost.F.T, jost.F_neg.T).T
    return SMatrixPoint(k.real, phases @ ratio @ phases)


def _wrap(angle: float, period: float) -> float:
    """angle shifted by a multiple of period into (-period/2, period/2]"""
    shifted = angle - period * np.round(angle / period)
    return period / 2.0 if np.isclose(shifted, -period / 2.0, rtol=0, atol=1e-15) else float(shifted)


def _canonical(S: np.ndarray) -> Eigenphases:
    # (S11 - S22, 2 S12) = (lambda1 - lambda2) (cos 2eps, sin 2eps)
    v = np.array([S[0, 0] - S[1, 1], 2.0 * S[0, 1]])
    if np.max(np.abs(v)) < DEGENERACY_TOLERANCE:
        return Eigenphases(0.5 * float(np.angle(S[0, 0])), 0.5 * float(np.angle(S[1, 1])), 0.0, degenerate=True)

    largest = v[np.argmax(np.abs(v))]
    aligned = (v * np.exp(-1j * np.angle(largest))).real
    epsilon = 0.5 * float(np.arctan2(aligned[1], aligned[0]))
    if epsilon > QUARTER_PI:
        epsilon -= np.pi / 2.0
    elif epsilon <= -QUARTER_PI:
        epsilon += np.pi / 2.0

    rotation = rotation_matrix(epsilon)
    diagonal = np.diag(rotation.T @ S @ rotation)
    return Eigenphases(0.5 * float(np.angle(diagonal[0])), 0.5 * float(np.angle(diagonal[1])), epsilon)


def _continue_from(raw: Eigenphases, prev: Eigenphases) -> Eigenphases:
    """Equivalent representation of raw closest to prev"""
    if raw.degenerate:
        epsilon = prev.epsilon
        first = prev.delta1 + _wrap(raw.delta1 - prev.delta1, np.pi)
        second = prev.delta2 + _wrap(raw.delta2 - prev.delta2, np.pi)
        return Eigenphases(first, second, epsilon, degenerate=True, exchanged=prev.exchanged)

    best, best_cost = None, np.inf
    for n in range(-2, 3):
        swap = n % 2 != 0
        d1, d2 = (raw.delta2, raw.delta1) if swap else (raw.delta1, raw.delta2)
        epsilon = raw.epsilon + n * np.pi / 2.0
        d1 = prev.delta1 + _wrap(d1 - prev.delta1, np.pi)
        d2 = prev.delta2 + _wrap(d2 - prev.delta2, np.pi)
        cost = abs(epsilon - prev.epsilon) + abs(d1 - prev.delta1) + abs(d2 - prev.delta2)
        if cost < best_cost:
            best, best_cost = Eigenphases(d1, d2, epsilon, exchanged=swap), cost
    return best


def eigenphases(point: SMatrixPoint, prev: Optional[Eigenphases] = None) -> Eigenphases:
    """
    Decompose S into (delta1, delta2, epsilon).

    Without prev: delta in (-pi/2, pi/2], epsilon in (-pi/4, pi/4], channel
    order given by the dominant diagonal of R. With prev: the equivalent
    representation (epsilon + n pi/2 with exchanged phases for odd n, deltas
    shifted by multiples of pi) nearest to prev. A degenerate S gets
    epsilon = 0 (or prev's epsilon) and the degenerate flag.
    """
    raw = _canonical(point.S)
    if raw.degenerate:
        logger.debug(f"Degenerate S-matrix at k={point.k:.6g}; epsilon fixed by convention")
    if prev is None:
        return raw
    chosen = _continue_from(raw, prev)
    if chosen.exchanged and not prev.exchanged:
        logger.warning(f"Eigenphase exchange applied at k={point.k:.6g}: epsilon continued to {chosen.epsilon:.6f}")
    return chosen


@dataclass(frozen=True, eq=False)
class PhaseData:
    """Continuous eigenphase and mixing-angle curves over a k grid"""

    k_grid: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    epsilon: np.ndarray
    channel_order: List[str]
    degenerate: np.ndarray
    points: List[SMatrixPoint] = field(default_factory=list)

    def decomposition(self, index: int) -> Eigenphases:
        return Eigenphases(float(self.delta1[index]), float(self.delta2[index]), float(self.epsilon[index]),
                           bool(self.degenerate[index]), self.channel_order[index] == "exchanged")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"k": self.k_grid, "delta1": self.delta1,
                             "delta2": self.delta2, "epsilon": self.epsilon})


def unwrap_phases(points: Sequence[SMatrixPoint]) -> PhaseData:
    """
    Sequential continuity pass seeded with the canonical decomposition at the smallest k.

    Raises:
        GridRefinementError: If an eigenphase moves by 3pi/8 or more (epsilon by
            pi/4 or more) between neighbouring k points
    """
    if not points:
        raise DomainError("No S-matrix points to decompose")
    decompositions = [eigenphases(points[0])]
    for previous, point in zip(points, points[1:]):
        current = eigenphases(point, decompositions[-1])
        last = decompositions[-1]
        step = max(abs(current.delta1 - last.delta1), abs(current.delta2 - last.delta2))
        if step >= DELTA_STEP_LIMIT or abs(current.epsilon - last.epsilon) >= QUARTER_PI:
            logger.error(f"Phase continuity violated between k={previous.k:.6g} and k={point.k:.6g}: "
                         f"delta step {step:.3f}, epsilon step {abs(current.epsilon - last.epsilon):.3f}")
            raise GridRefinementError(
                f"Phases jump between k={previous.k:.6g} and k={point.k:.6g}; refine the k grid in this interval"
            )
        decompositions.append(current)

    return PhaseData(
        k_grid=np.array([point.k for point in points]),
        delta1=np.array([d.delta1 for d in decompositions]),
        delta2=np.array([d.delta2 for d in decompositions]),
        epsilon=np.array([d.epsilon for d in decompositions]),
        channel_order=["exchanged" if d.exchanged else "canonical" for d in decompositions],
        degenerate=np.array([d.degenerate for d in decompositions]),
        points=list(points),
    )


def scattering_points(potential: Potential, k_grid: Sequence[float], grid: RadialGrid,
                      threads: int = 1) -> List[SMatrixPoint]:
    """S-matrices on a k grid; the per-k solves run on a bounded thread pool"""
    k_values = [float(k) for k in k_grid]

    def _solve(k: float) -> SMatrixPoint:
        return s_matrix(jost_matrix(potential, k, grid), potential.spec)

    if threads <= 1:
        return [_solve(k) for k in k_values]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_solve, k_values))


@allure.step("Compute phase curves of {potential}")
def phase_curves(potential: Potential, k_grid: Sequence[float], grid: RadialGrid, threads: int = 1) -> PhaseData:
    """Eigenphases and mixing angle of a potential over an increasing k grid"""
    k_grid = np.asarray(k_grid, dtype=float)
    if k_grid.size == 0 or np.any(k_grid <= 0) or np.any(np.diff(k_grid) <= 0):
        logger.error("k grid must be positive and strictly increasing")
        raise DomainError("k grid must be positive and strictly increasing")
    logger.info(f"Computing phase curves of {potential} on {k_grid.size} k points")
    data = unwrap_phases(scattering_points(potential, k_grid, grid, threads))
    exchanged = sum(order == "exchanged" for order in data.channel_order)
    logger.success(f"Phase curves done ({exchanged} points on the exchanged branch)")
    return data
