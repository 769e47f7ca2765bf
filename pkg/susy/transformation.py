"""Eigenphase-preserving two-fold transformation V0 -> V2 = V0 - 2 W2'.

W2 = 4i chi^2 u* W[u,u*]^-1 u^T, and solutions map as
L psi = (E1 - k^2) psi - 4i chi^2 u* W[u,u*]^-1 W[u, psi].
"""
from dataclasses import dataclass, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import allure
import numpy as np
from loguru import logger

from potentials.base_potential import ChannelSpec, Potential
from potentials.tabulated_potential import TabulatedPotential
from scattering.smatrix import SMatrixPoint, phase_factors
from solvers.radial_grid import RadialGrid
from solvers.radial_solver import MatrixSolution, wronskian
from susy.factorization import FactorizationSolution, check_sign, conjugate_wronskian, factorization_solution
from utils.exceptions import DomainError, RegularityViolation, ScatteringError, UnphysicalCaseError

ORTHOGONALITY_TOLERANCE = 1e-12
BOUNDARY_CONDITION_LIMIT = 1e8
CONFLUENT_STEP = 1e-3
CORE_TOLERANCE = 0.05


def u_infinity(k: complex, chi: float, sign: int) -> np.ndarray:
    """U_inf(k) = [[-k^2, -+2chi^2], [+-2chi^2, -k^2]]; real for real k, det = k^4 + 4 chi^4"""
    sign = check_sign(sign)
    energy = k * k
    coupling = 2.0 * chi * chi
    return np.array([[-energy, -sign * coupling], [sign * coupling, -energy]])


def orthogonal_factor(k: float, spec: ChannelSpec, chi: float, sign: int) -> np.ndarray:
    """
    O(k) = e^(i lbar pi/2) U_inf(k) e^(-i l pi/2) / sqrt(k^4 + 4 chi^4) with lbar = (l2, l1).

    Raises:
        DomainError: If l and lbar mix parities, which would make O complex
    """
    l, l_bar = spec.l, (spec.l2, spec.l1)
    if any((a - b) % 2 for a in l for b in l_bar):
        logger.error(f"Partial waves {l} of mixed parity")
        raise DomainError(f"All partial waves must share one parity, got l={l}")
    norm = np.sqrt(k ** 4 + 4.0 * chi ** 4)
    factor = phase_factors(l_bar) @ (u_infinity(k, chi, sign) / norm) @ np.conj(phase_factors(l))
    if np.max(np.abs(factor.imag)) > ORTHOGONALITY_TOLERANCE:
        raise DomainError(f"O(k) is not real for l={l}")
    factor = factor.real
    deviation = np.linalg.norm(factor @ factor.T - np.eye(2))
    if deviation > ORTHOGONALITY_TOLERANCE:
        logger.error(f"O(k) not orthogonal: |O O^T - 1| = {deviation:.2e}")
        raise DomainError(f"O(k) is not orthogonal at k={k} (deviation {deviation:.2e})")
    return factor


def predicted_s2(S0: SMatrixPoint, spec: ChannelSpec, chi: float, sign: int) -> SMatrixPoint:
    """S2 = O S0 O^T at the wave number of S0"""
    factor = orthogonal_factor(S0.k, spec, chi, sign)
    return SMatrixPoint(S0.k, factor @ S0.S @ factor.T)


def _parity(m: int) -> int:
    return 1 if m % 2 == 0 else -1


def predicted_mixing(eps0: float, k: float, chi: float, sign: int, m: int) -> float:
    """eps2 = eps0 + sign (-1)^m arctan(k^2 / 2chi^2)"""
    return float(eps0 + check_sign(sign) * _parity(m) * np.arctan(k * k / (2.0 * chi * chi)))


def predicted_chain_mixing(eps0: float, k: float, chis: Sequence[float], sign: int, m: int) -> float:
    """Mixing after a chain: the arctan shifts of all steps add up"""
    shift = sum(np.arctan(k * k / (2.0 * chi * chi)) for chi in chis)
    return float(eps0 + check_sign(sign) * _parity(m) * shift)


def singularity_rules(nu: Tuple[int, int]) -> Tuple[int, int]:
    """
    Singularity indices of the transformed potential.

    |nu2 - nu1| <= 1 is kept, a gap above 2 closes by 2 from both sides, and
    the trace nu1 + nu2 is preserved.

    Raises:
        UnphysicalCaseError: For |nu2 - nu1| = 2 (non-diagonal singularity at the origin)
        DomainError: For negative or non-integer indices
    """
    nu1, nu2 = nu
    for value in (nu1, nu2):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
            raise DomainError(f"Singularity indices must be nonnegative integers, got {nu}")
    gap = abs(nu2 - nu1)
    if gap <= 1:
        return int(nu1), int(nu2)
    if gap == 2:
        logger.error(f"Singularity indices {nu} give a non-diagonal singularity at the origin")
        raise UnphysicalCaseError(
            f"nu={tuple(nu)} has |nu2 - nu1| = 2: the transformed potential has a non-diagonal "
            "singularity at the origin (set transform.allow_unphysical to proceed)"
        )
    if nu1 < nu2:
        return int(nu1 + 2), int(nu2 - 2)
    return int(nu1 - 2), int(nu2 + 2)


class MeasuredCore(NamedTuple):
    """r^2 V at the first grid node, diagonalized: R(angle) diag(nu(nu+1)) R(angle)^T"""

    nu: Tuple[int, int]
    angle: float
    eigenvalues: Tuple[float, float]
    integral: bool


def measure_core(values: np.ndarray, r: np.ndarray) -> MeasuredCore:
    """Read the singularity indices and core rotation off r^2 V at the first node"""
    g = r[0] * r[0] * 0.5 * (values[0] + values[0].T)
    eigenvalues, vectors = np.linalg.eigh(g)
    nu, integral = [], True
    for e in eigenvalues:
        n = int(round((-1.0 + np.sqrt(max(1.0 + 4.0 * e, 0.0))) / 2.0))
        nu.append(n)
        integral &= abs(n * (n + 1) - e) <= CORE_TOLERANCE * max(1.0, abs(e))
    if abs(vectors[0, 0]) < abs(vectors[0, 1]):
        vectors = vectors[:, ::-1]
        nu = nu[::-1]
        eigenvalues = eigenvalues[::-1]
    if vectors[0, 0] < 0:
        vectors[:, 0] *= -1
    if vectors[1, 1] < 0:
        vectors[:, 1] *= -1
    angle = float(np.arctan2(vectors[1, 0], vectors[0, 0])) if nu[0] != nu[1] else 0.0
    return MeasuredCore((nu[0], nu[1]), angle, (float(eigenvalues[0]), float(eigenvalues[1])), bool(integral))


@dataclass(frozen=True, eq=False)
class TransformationKernel:
    """
    u, u' and M = W[u,u*]^-1, M' = -M W' M on the grid (or at one node).

    The two-fold operator L and the superpotential W2 are both assembled from these.
    """

    chi: float
    u: np.ndarray
    u_prime: np.ndarray
    inverse_wronskian: np.ndarray
    inverse_wronskian_prime: np.ndarray

    @classmethod
    def from_factorization(cls, f: FactorizationSolution) -> "TransformationKernel":
        """
        Raises:
            RegularityViolation: If det W[u,u*] <= 0 at any grid point
        """
        W = f.wronskian
        det = W[:, 0, 0] * W[:, 1, 1] - W[:, 0, 1] * W[:, 1, 0]
        bad = ~(det.real > 0)
        if np.any(bad):
            first = int(np.argmax(bad))
            logger.error(f"det W[u,u*] <= 0 at {np.count_nonzero(bad)} grid points, first at r={f.r[first]:.6g}")
            raise RegularityViolation(
                f"det W[u,u*] is not positive at {np.count_nonzero(bad)} grid points "
                f"(first at r={f.r[first]:.6g}, det={det[first]:.3e})"
            )
        adjugate = np.empty_like(W)
        adjugate[:, 0, 0] = W[:, 1, 1]
        adjugate[:, 1, 1] = W[:, 0, 0]
        adjugate[:, 0, 1] = -W[:, 0, 1]
        adjugate[:, 1, 0] = -W[:, 1, 0]
        inverse = adjugate / det[:, None, None]
        inverse_prime = -inverse @ f.wronskian_derivative() @ inverse
        return cls(f.chi, f.u, f.u_prime, inverse, inverse_prime)

    @property
    def coupling(self) -> complex:
        return 4j * self.chi ** 2

    @property
    def energy(self) -> complex:
        return 2j * self.chi ** 2

    def at(self, index: int) -> "TransformationKernel":
        return TransformationKernel(self.chi, self.u[index], self.u_prime[index],
                                    self.inverse_wronskian[index], self.inverse_wronskian_prime[index])

    def apply(self, psi: np.ndarray, psi_prime: np.ndarray, energy: complex) -> Tuple[np.ndarray, np.ndarray]:
        """(L psi, (L psi)') for psi solving the parent equation at the given energy"""
        gap = self.energy - energy
        u_star, u_star_prime = np.conj(self.u), np.conj(self.u_prime)
        M, M_prime = self.inverse_wronskian, self.inverse_wronskian_prime
        w = wronskian(self.u, self.u_prime, psi, psi_prime)
        # W[u, psi]' = (E1 - E) u^T psi
        w_prime = gap * np.swapaxes(self.u, -1, -2) @ psi
        value = gap * psi - self.coupling * (u_star @ M @ w)
        derivative = gap * psi_prime - self.coupling * (
            u_star_prime @ M @ w + u_star @ M_prime @ w + u_star @ M @ w_prime
        )
        return value, derivative

    def superpotential(self) -> Tuple[np.ndarray, np.ndarray]:
        """Complex W2 and W2' by the product rule; both are real up to rounding"""
        u_t, u_t_prime = np.swapaxes(self.u, -1, -2), np.swapaxes(self.u_prime, -1, -2)
        u_star, u_star_prime = np.conj(self.u), np.conj(self.u_prime)
        M, M_prime = self.inverse_wronskian, self.inverse_wronskian_prime
        W2 = self.coupling * (u_star @ M @ u_t)
        W2_prime = self.coupling * (u_star_prime @ M @ u_t + u_star @ M_prime @ u_t + u_star @ M @ u_t_prime)
        return W2, W2_prime


def _reality_residual(W2: np.ndarray) -> float:
    return float(np.max(np.abs(W2.imag)) / np.max(np.linalg.norm(W2, axis=(1, 2))))


def two_fold_superpotential(f: FactorizationSolution) -> Tuple[np.ndarray, np.ndarray]:
    """
    Real W2 and W2' on the grid of f.

    Raises:
        RegularityViolation: If det W[u,u*] <= 0 somewhere
    """
    W2, W2_prime = TransformationKernel.from_factorization(f).superpotential()
    logger.debug(f"W2 imaginary part relative to its size: {_reality_residual(W2):.2e}")
    return W2.real, W2_prime.real


def superpotential_symmetry(f: FactorizationSolution, floor: float = 1e-8) -> float:
    """
    Largest |w - w^T| / |w| of the one-fold superpotential w = u' u^-1.

    Nodes where |det u| < floor |u|^2 are skipped since w is singular there.
    """
    det = np.linalg.det(f.u)
    usable = np.abs(det) >= floor * np.linalg.norm(f.u, axis=(1, 2)) ** 2
    if not np.any(usable):
        return 0.0
    w = f.u_prime[usable] @ np.linalg.inv(f.u[usable])
    return float(np.max(np.linalg.norm(w - np.swapaxes(w, 1, 2), axis=(1, 2)) / np.linalg.norm(w, axis=(1, 2))))


def gauge_residual(f: FactorizationSolution, C: np.ndarray) -> float:
    """Relative change of W2 when u is replaced by u C for a constant invertible C"""
    u, u_prime = f.u @ C, f.u_prime @ C
    gauged = replace(f, u=u, u_prime=u_prime, wronskian=conjugate_wronskian(u, u_prime))
    reference, _ = TransformationKernel.from_factorization(f).superpotential()
    changed, _ = TransformationKernel.from_factorization(gauged).superpotential()
    return float(np.max(np.abs(changed - reference)) / np.max(np.abs(reference)))


class TransformedPotential(TabulatedPotential):
    """
    V2 tabulated on the transform grid, keeping the parent and the kernel at both grid ends.

    At the last node the Jost solution is the exact transformed one,
    L f0 U_inf^-1, which carries the algebraic tail of V2. At the first node
    the regular solution is L phi0, regular whatever the shape of the core.
    Both normalizations are even in k, so the S-matrix is unaffected.

    At a zero of det U_inf (k^2 = E1 or E2 of this kernel, which a chain with a
    repeated chi asks for) the Jost seed is the limit over k(1 +- CONFLUENT_STEP)
    and the regular seed falls back to the leading powers of the core.
    """

    def __init__(self, spec: ChannelSpec, r: np.ndarray, values: np.ndarray, parent: Potential,
                 kernel: TransformationKernel, chi: float, sign: int):
        super().__init__(spec, r, values, provenance=f"two-fold chi={chi} sign={sign:+d} of {parent.provenance}",
                         tail_decay="algebraic")
        self.parent = parent
        self.chi = float(chi)
        self.sign = int(sign)
        self._first = kernel.at(0)
        self._last = kernel.at(-1)

    def is_confluent(self, k: complex) -> bool:
        """k^2 sits on a factorization energy +-2i chi^2 of this kernel"""
        return np.linalg.cond(u_infinity(complex(k), self.chi, self.sign)) > BOUNDARY_CONDITION_LIMIT

    def _exact_jost(self, k: complex, r: float) -> Tuple[np.ndarray, np.ndarray]:
        f0, f0_prime = self.parent.jost_boundary(k, r)
        value, derivative = self._last.apply(f0, f0_prime, k * k)
        inverse = np.linalg.inv(u_infinity(k, self.chi, self.sign))
        return value @ inverse, derivative @ inverse

    def _symmetric_mean(self, k: complex, r: float, step: float) -> Tuple[np.ndarray, np.ndarray]:
        # f e^(-ikr) and f' e^(-ikr) are smooth in k, the plane wave is put back at k itself
        values, derivatives = [], []
        for shifted in (k * (1.0 + step), k * (1.0 - step)):
            value, derivative = self._exact_jost(shifted, r)
            phase = np.exp(1j * (k - shifted) * r)
            values.append(value * phase)
            derivatives.append(derivative * phase)
        return 0.5 * (values[0] + values[1]), 0.5 * (derivatives[0] + derivatives[1])

    def confluent_jost(self, k: complex, r: float) -> Tuple[np.ndarray, np.ndarray]:
        """Richardson limit of the exact seed at a zero of det U_inf"""
        coarse_value, coarse_derivative = self._symmetric_mean(k, r, 2.0 * CONFLUENT_STEP)
        fine_value, fine_derivative = self._symmetric_mean(k, r, CONFLUENT_STEP)
        return (4.0 * fine_value - coarse_value) / 3.0, (4.0 * fine_derivative - coarse_derivative) / 3.0

    def jost_boundary(self, k: complex, r: float) -> Tuple[np.ndarray, np.ndarray]:
        if not np.isclose(r, self._r_last, rtol=1e-12, atol=0.0):
            logger.warning(f"Jost boundary requested at r={r} off the transform grid; using the free seed")
            return super().jost_boundary(k, r)
        k = complex(k)
        if self.is_confluent(k):
            logger.warning(f"U_inf({k}) is singular for chi={self.chi}; Jost seed taken as the limit in k")
            return self.confluent_jost(k, r)
        return self._exact_jost(k, r)

    def regular_boundary(self, k: complex, r: float) -> Tuple[np.ndarray, np.ndarray]:
        if not np.isclose(r, self._r_first, rtol=1e-12, atol=0.0):
            return super().regular_boundary(k, r)
        if self.is_confluent(k):
            logger.warning(f"k^2={complex(k) ** 2} is a factorization energy of chi={self.chi}; "
                           f"regular seed from the core powers of {self.spec.describe()}")
            return super().regular_boundary(k, r)
        phi0, phi0_prime = self.parent.regular_boundary(k, r)
        return self._first.apply(phi0, phi0_prime, complex(k) ** 2)


@dataclass(frozen=True, eq=False)
class TransformOutput:
    """Everything one transformation produces; immutable"""

    chi: float
    sign: int
    parent: Potential
    factorization: FactorizationSolution
    kernel: TransformationKernel
    W2: np.ndarray
    W2_prime: np.ndarray
    V2: TransformedPotential
    reality_residual: float
    symmetry_residual: float
    measured_core: MeasuredCore
    nu_source: str

    @property
    def r(self) -> np.ndarray:
        return self.factorization.r

    @property
    def wronskian(self) -> np.ndarray:
        return self.factorization.wronskian

    @property
    def spec(self) -> ChannelSpec:
        return self.V2.spec

    def mixing_shift(self, k: float) -> float:
        """eps2 - eps0 at k"""
        return predicted_mixing(0.0, k, self.chi, self.sign, self.parent.spec.m)

    def metadata(self) -> Dict[str, object]:
        return {
            "chi": self.chi,
            "sign": self.sign,
            "parent": self.parent.provenance,
            "parent_spec": self.parent.spec.describe(),
            "spec": self.spec.describe(),
            "m": self.parent.spec.m,
            "mixing_formula": f"eps2 = eps0 {'+' if self.sign * _parity(self.parent.spec.m) > 0 else '-'} "
                              f"arctan(k^2 / {2 * self.chi ** 2:.12g})",
            "nu_source": self.nu_source,
            "reality_residual": self.reality_residual,
            "symmetry_residual": self.symmetry_residual,
        }


@allure.step("Transform {potential} with chi={chi} sign={sign}")
def transform_potential(potential: Potential, chi: float, sign: int, grid: RadialGrid,
                        allow_unphysical: bool = False) -> TransformOutput:
    """
    Build V2 = V0 - 2 W2' on the grid.

    Args:
        potential: Parent potential V0
        chi: Factorization parameter, E1,2 = +-2i chi^2
        sign: +1 or -1, the sign pattern of u
        grid: Radial grid shared by u, W2 and the tabulated V2
        allow_unphysical: Proceed when singularity_rules rejects the parent's nu;
            nu and the core rotation of V2 are then measured from r^2 V2 at the first node

    Raises:
        UnphysicalCaseError: Rejected nu pattern without allow_unphysical
        RegularityViolation: det W[u,u*] <= 0 somewhere
    """
    sign = check_sign(sign)
    logger.info(f"Two-fold transformation of {potential} with chi={chi}, sign={sign:+d}")
    try:
        nu_bar: Optional[Tuple[int, int]] = singularity_rules(potential.spec.nu)
    except UnphysicalCaseError:
        if not allow_unphysical:
            raise
        logger.warning(f"Proceeding with rejected nu={potential.spec.nu}; the core of V2 will be measured")
        nu_bar = None

    f = factorization_solution(potential, chi, sign, grid)
    kernel = TransformationKernel.from_factorization(f)
    W2, W2_prime = kernel.superpotential()
    reality = _reality_residual(W2)

    V2 = potential.evaluate(grid.points) - 2.0 * W2_prime.real
    symmetry = float(np.max(np.linalg.norm(V2 - np.swapaxes(V2, 1, 2), axis=(1, 2)))
                     / np.max(np.linalg.norm(V2, axis=(1, 2))))
    core = measure_core(V2, grid.points)
    logger.debug(f"Measured core of V2: eigenvalues {core.eigenvalues}, nu={core.nu}, angle={core.angle:.6g}")

    if nu_bar is None:
        if not core.integral:
            logger.warning(f"Core eigenvalues {core.eigenvalues} of V2 are not nu(nu+1); header uses nu={core.nu}")
        spec = potential.spec.swapped(core.nu, core_angle=core.angle)
        source = "measured"
    else:
        if sorted(core.nu) != sorted(nu_bar):
            logger.warning(f"Measured core nu={core.nu} differs from the rule value {nu_bar}")
        spec = potential.spec.swapped(nu_bar)
        source = "rules"

    transformed = TransformedPotential(spec, grid.points, V2, potential, kernel, chi, sign)
    output = TransformOutput(
        chi=float(chi), sign=sign, parent=potential, factorization=f, kernel=kernel,
        W2=W2.real, W2_prime=W2_prime.real, V2=transformed,
        reality_residual=reality, symmetry_residual=symmetry, measured_core=core, nu_source=source,
    )
    logger.success(f"Transformed to {spec.describe()} (reality {reality:.2e}, symmetry {symmetry:.2e})")
    return output


def transform_solution(f: FactorizationSolution, psi: MatrixSolution) -> MatrixSolution:
    """
    psi2 = (E1 - k^2) psi - 4i chi^2 u* W[u,u*]^-1 W[u, psi] on the grid of f.

    Raises:
        DomainError: If psi is sampled on a different grid
        RegularityViolation: If det W[u,u*] <= 0 somewhere
    """
    if psi.r.shape != f.r.shape or not np.allclose(psi.r, f.r, rtol=1e-14, atol=0.0):
        logger.error("transform_solution needs psi on the grid of the factorization solution")
        raise DomainError("psi must be sampled on the grid of the factorization solution")
    kernel = TransformationKernel.from_factorization(f)
    values, derivatives = kernel.apply(psi.values, psi.derivatives, psi.energy)
    return MatrixSolution(psi.k, psi.r, values, derivatives, kind=f"transformed {psi.kind}")


def transformed_jost_solution(f: FactorizationSolution, jost: MatrixSolution) -> MatrixSolution:
    """f2 = L f0 U_inf^-1(k), the Jost solution of V2"""
    transformed = transform_solution(f, jost)
    inverse = np.linalg.inv(u_infinity(complex(jost.k), f.chi, f.sign))
    return MatrixSolution(jost.k, jost.r, transformed.values @ inverse, transformed.derivatives @ inverse,
                          kind="transformed jost")


def kernel_residual(f: FactorizationSolution, conjugate: bool = False,
                    indices: Optional[Sequence[int]] = None) -> float:
    """Largest per-column |L u| / (4 chi^2 |u|) for u (or u*) on the selected nodes"""
    solution = f.as_solution(conjugate)
    image = transform_solution(f, solution)
    selected = slice(None) if indices is None else np.asarray(indices, dtype=int)
    residual = np.linalg.norm(image.values[selected], axis=1)
    scale = 4.0 * f.chi ** 2 * np.linalg.norm(solution.values[selected], axis=1)
    return float(np.max(residual / scale))


@allure.step("Chain of transformations chis={chis} sign={sign}")
def chain(potential: Potential, chis: Sequence[float], sign: int, grid: RadialGrid,
          allow_unphysical: bool = False) -> List[TransformOutput]:
    """
    Iterate the transformation, each step acting on the previous V2.

    Raises:
        DomainError: If chis is empty
        ScatteringError: The failing step's error, re-raised with its index
    """
    if not chis:
        logger.error("chain needs at least one chi")
        raise DomainError("chain needs at least one chi")
    outputs: List[TransformOutput] = []
    current = potential
    for step, chi in enumerate(chis, start=1):
        try:
            output = transform_potential(current, chi, sign, grid, allow_unphysical)
        except ScatteringError as error:
            logger.error(f"Chain step {step} (chi={chi}) failed: {error}")
            raise type(error)(f"chain step {step} (chi={chi}): {error}") from error
        outputs.append(output)
        current = output.V2
    logger.success(f"Chain of {len(outputs)} transformations done: {current.spec.describe()}")
    return outputs
