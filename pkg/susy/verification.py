"""Numerical verification of a transformation: one named residual per property, each with a tolerance."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import allure
import numpy as np
from loguru import logger

from potentials.base_potential import Potential
from scattering.smatrix import Eigenphases, SMatrixPoint, eigenphases, s_matrix
from solvers.radial_grid import RadialGrid
from solvers.radial_solver import jost_matrix
from susy.factorization import FactorizationSolution
from susy.transformation import (TransformOutput, chain, gauge_residual, orthogonal_factor, predicted_chain_mixing,
                                 predicted_mixing, predicted_s2, superpotential_symmetry, transform_potential)
from utils.exceptions import NumericalError

TOLERANCES = {
    "reality": 1e-8,
    "symmetry": 1e-8,
    "self_wronskian": 1e-8,
    "anti_hermitian": 1e-9,
    "wronskian_derivative": 1e-6,
    "integral_representation": 1e-4,
    "gauge": 1e-9,
    "u_asymptotics": 1e-5,
    "tail": 1e-2,
    "tail_equal_waves": 1e-3,
    "s_matrix": 1e-5,
    "unitarity": 1e-8,
    "eigenvalues": 1e-4,
    "permutation": 1e-4,
    "mixing": 1e-4,
    "chain": 1e-3,
    "chain_unitarity": 1e-6,
}
GAUGE_SEED = 20240611
TAIL_FRACTION = 0.1


@dataclass(frozen=True)
class CheckResult:
    name: str
    part: str
    residual: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{self.part:<5} {self.name:<40} {self.residual:>12.3e} {self.tolerance:>10.1e} {status}"
        return f"{text}  {self.detail}" if self.detail else text


@dataclass
class VerificationReport:
    """Ordered check results plus run metadata"""

    title: str
    metadata: Dict[str, object] = field(default_factory=dict)
    checks: List[CheckResult] = field(default_factory=list)

    def add(self, name: str, part: str, residual: float, tolerance: float, detail: str = "") -> CheckResult:
        residual = float(residual)
        passed = bool(np.isfinite(residual) and residual <= tolerance)
        result = CheckResult(name, part, residual, float(tolerance), passed, detail)
        self.checks.append(result)
        log = logger.debug if passed else logger.warning
        log(f"[{part}] {name}: residual {residual:.3e} (tolerance {tolerance:.1e}) {'PASS' if passed else 'FAIL'}")
        return result

    def fail(self, name: str, part: str, detail: str) -> CheckResult:
        return self.add(name, part, float("inf"), 0.0, detail)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def find(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(f"No check named {name!r}. Available: {[c.name for c in self.checks]}")

    def to_text(self) -> str:
        lines = [f"# {self.title}"]
        lines += [f"# {key}: {value}" for key, value in self.metadata.items()]
        lines.append(f"{'part':<5} {'check':<40} {'residual':>12} {'tolerance':>10} status")
        lines += [check.line() for check in self.checks]
        lines.append(f"# result: {'PASS' if self.passed else 'FAIL'} "
                     f"({len(self.checks) - len(self.failures)}/{len(self.checks)} checks passed)")
        return "\n".join(lines) + "\n"


def five_point_derivative(values: np.ndarray, r: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Central five-point derivative on uniformly spaced neighbours"""
    h = r[indices + 1] - r[indices]
    shape = (-1,) + (1,) * (values.ndim - 1)
    return (-values[indices + 2] + 8.0 * values[indices + 1] - 8.0 * values[indices - 1]
            + values[indices - 2]) / (12.0 * h.reshape(shape))


def wronskian_derivative_residual(f: FactorizationSolution, grid: RadialGrid, count: int = 100) -> float:
    """Finite-difference W[u,u*]' against 4i chi^2 u^T u*, entrywise relative to 4 chi^2 |u_i| |u_j|"""
    indices = grid.interior_indices(count)
    numeric = five_point_derivative(f.wronskian, f.r, indices)
    exact = f.wronskian_derivative()[indices]
    return float(np.max(np.abs(numeric - exact) / f.column_scale()[indices]))


def _hermite_cumulative(r: np.ndarray, values: np.ndarray, derivatives: np.ndarray) -> np.ndarray:
    """Cumulative integral from r[0] with the two-point Hermite (end-corrected trapezoid) rule"""
    h = np.diff(r)
    pieces = 0.5 * h * (values[1:] + values[:-1]) - h * h / 12.0 * (derivatives[1:] - derivatives[:-1])
    return np.concatenate([[0.0], np.cumsum(pieces)])


def integral_representation_residual(f: FactorizationSolution, grid: RadialGrid) -> float:
    """
    Diagonal of W[u,u*] against its quadrature form.

    W11(r) = 4i chi^2 int_0^r |u_1|^2 and W22(r) = -4i chi^2 int_r^inf |u_2|^2, where u_j is column j.
    The piece below r_min follows the local power law, the piece above r_max
    the exponential decay e^(-2 chi r). Compared on [knee, r_max - 10/chi].
    """
    r = f.r
    density = np.sum(np.abs(f.u) ** 2, axis=1).real
    density_prime = 2.0 * np.sum((np.conj(f.u) * f.u_prime).real, axis=1)

    first, first_prime = density[:, 0], density_prime[:, 0]
    power = 1.0 + r[0] * first_prime[0] / first[0]
    inner = r[0] * first[0] / power
    W11 = f.coupling * (inner + _hermite_cumulative(r, first, first_prime))

    second, second_prime = density[:, 1], density_prime[:, 1]
    outer = second[-1] / (2.0 * f.chi)
    cumulative = _hermite_cumulative(r, second, second_prime)
    W22 = -f.coupling * (outer + cumulative[-1] - cumulative)

    window = (r >= grid.knee) & (r <= grid.r_max - 10.0 / f.chi)
    residual_11 = np.abs(W11[window] - f.wronskian[window, 0, 0]) / np.abs(f.wronskian[window, 0, 0])
    residual_22 = np.abs(W22[window] - f.wronskian[window, 1, 1]) / np.abs(f.wronskian[window, 1, 1])
    return float(max(np.max(residual_11), np.max(residual_22)))


def tail_limit(r: np.ndarray, values: np.ndarray, power: int = 2, fraction: float = TAIL_FRACTION) -> np.ndarray:
    """Limit A of r^power X(r) = A + B/r + C/r^2, least squares on the outer part of the grid"""
    count = max(3, int(round(fraction * r.size)))
    radii = r[-count:]
    scaled = (radii ** power)[:, None, None] * values[-count:]
    basis = np.stack([np.ones_like(radii), 1.0 / radii, 1.0 / radii ** 2], axis=1)
    coefficients, *_ = np.linalg.lstsq(basis, scaled.reshape(count, -1), rcond=None)
    return coefficients[0].reshape(values.shape[1:])


def _gauge_matrix() -> np.ndarray:
    rng = np.random.default_rng(GAUGE_SEED)
    return rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))


def _wrap(angle, period: float = np.pi):
    return (np.asarray(angle) + period / 2.0) % period - period / 2.0


def _eigenphase_mismatch(first: SMatrixPoint, second: SMatrixPoint) -> float:
    """Distance between the eigenphase multisets of two S-matrices, modulo pi"""
    a = np.angle(first.eigenvalues) / 2.0
    b = np.angle(second.eigenvalues) / 2.0
    straight = max(abs(_wrap(a[0] - b[0])), abs(_wrap(a[1] - b[1])))
    crossed = max(abs(_wrap(a[0] - b[1])), abs(_wrap(a[1] - b[0])))
    return float(min(straight, crossed))


def _match_decomposition(initial: Eigenphases, final: Eigenphases, predicted_epsilon: float,
                         swapped: bool) -> Tuple[float, float, float]:
    """
    Compare final with (initial deltas, possibly exchanged, predicted epsilon).

    The final decomposition is tried as given and in its equivalent form with
    exchanged deltas and epsilon + pi/2. Returns (delta residual, epsilon
    residual, epsilon of the chosen form).
    """
    expected = (initial.delta2, initial.delta1) if swapped else (initial.delta1, initial.delta2)
    best = None
    for exchange in (False, True):
        deltas = (final.delta2, final.delta1) if exchange else (final.delta1, final.delta2)
        epsilon = final.epsilon + (np.pi / 2.0 if exchange else 0.0)
        delta_residual = max(abs(_wrap(deltas[0] - expected[0])), abs(_wrap(deltas[1] - expected[1])))
        epsilon_residual = abs(_wrap(epsilon - predicted_epsilon))
        candidate = (float(delta_residual), float(epsilon_residual), float(epsilon))
        if best is None or candidate[0] + candidate[1] < best[0] + best[1]:
            best = candidate
    return best


def _recompute(initial: Potential, final: Potential, k_grid: Sequence[float], grid: RadialGrid,
               threads: int) -> List[Tuple[float, Optional[SMatrixPoint], Optional[SMatrixPoint], Optional[Exception]]]:
    def _pair(k: float):
        try:
            S0 = s_matrix(jost_matrix(initial, k, grid), initial.spec)
            S2 = s_matrix(jost_matrix(final, k, grid), final.spec)
            return k, S0, S2, None
        except NumericalError as error:
            logger.error(f"Re-solve failed at k={k}: {error}")
            return k, None, None, error

    k_values = [float(k) for k in k_grid]
    if threads <= 1:
        return [_pair(k) for k in k_values]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_pair, k_values))


def _theorem_a(report: VerificationReport, output: TransformOutput, grid: RadialGrid) -> None:
    f = output.factorization
    W = f.wronskian
    det = (W[:, 0, 0] * W[:, 1, 1] - W[:, 0, 1] * W[:, 1, 0]).real
    report.add("reality of W2", "A", output.reality_residual, TOLERANCES["reality"])
    report.add("symmetry of V2", "A", output.symmetry_residual, TOLERANCES["symmetry"])
    report.add("regularity: points with det W[u,u*] <= 0", "A", np.count_nonzero(det <= 0), 0,
               detail=f"min det {det.min():.3e}")
    report.add("self-Wronskian W[u,u]", "A", f.self_wronskian_residual(), TOLERANCES["self_wronskian"])
    anti = np.max(np.linalg.norm(W + np.conj(np.swapaxes(W, 1, 2)), axis=(1, 2)) / np.linalg.norm(W, axis=(1, 2)))
    report.add("anti-Hermiticity of W[u,u*]", "A", anti, TOLERANCES["anti_hermitian"])
    report.add("Wronskian derivative identity", "A", wronskian_derivative_residual(f, grid),
               TOLERANCES["wronskian_derivative"])
    report.add("integral representation of W[u,u*]", "A", integral_representation_residual(f, grid),
               TOLERANCES["integral_representation"])
    report.add("gauge invariance of W2 under u -> uC", "A", gauge_residual(f, _gauge_matrix()), TOLERANCES["gauge"])
    report.add("asymptotics of u column 1", "A", f.asymptotic_residual(output.parent), TOLERANCES["u_asymptotics"])


def _theorem_b(report: VerificationReport, output: TransformOutput) -> None:
    r = output.r
    spec = output.spec
    limit = tail_limit(r, output.V2.values)
    report.add("tail: lim r^2 V2 = lbar(lbar+1)", "B", np.max(np.abs(limit - spec.centrifugal)), TOLERANCES["tail"],
               detail=f"limit diag ({limit[0, 0]:.6f}, {limit[1, 1]:.6f}), offdiag {limit[0, 1]:.2e}")
    parent = output.parent.spec
    w_limit = tail_limit(r, output.W2, power=1)
    if parent.l1 == parent.l2:
        report.add("tail: lim r W2 = 0 (equal partial waves)", "B", np.max(np.abs(w_limit)),
                   TOLERANCES["tail_equal_waves"])
    else:
        lam1, lam2 = np.diag(parent.centrifugal)
        expected = 0.5 * (lam2 - lam1) * np.diag([1.0, -1.0])
        report.add("tail: lim r W2 = (L2 - L1)/2 diag(1,-1)", "B", np.max(np.abs(w_limit - expected)),
                   TOLERANCES["tail"])


@allure.step("Verify the transformation theorem for {potential} chi={chi} sign={sign}")
def verify_theorem(potential: Potential, chi: float, sign: int, k_grid: Sequence[float], grid: RadialGrid,
                   threads: int = 1, allow_unphysical: bool = False,
                   output: Optional[TransformOutput] = None) -> VerificationReport:
    """
    Transform, re-solve and compare.

    Failures are report entries; the transformation itself may still raise.

    Args:
        potential: Parent potential
        chi: Factorization parameter
        sign: +1 or -1
        k_grid: Increasing real wave numbers for parts C and D
        grid: Radial grid
        threads: Workers for the per-k re-solves
        allow_unphysical: Passed on to transform_potential
        output: Reuse an existing transformation of the same parameters

    Returns:
        VerificationReport with parts A (reality, symmetry, regularity and the
        Wronskian identities), B (tails), C (S2 = O S0 O^T) and D (eigenphases, mixing)
    """
    if output is None:
        output = transform_potential(potential, chi, sign, grid, allow_unphysical)
    k_grid = np.asarray(k_grid, dtype=float)
    report = VerificationReport(title=f"Two-fold transformation of {potential}", metadata=output.metadata())
    report.metadata.update({"k_grid": f"{k_grid[0]:.6g}..{k_grid[-1]:.6g} ({k_grid.size} points)",
                            "radial_grid": f"{grid.r_min:.3g}..{grid.r_max:.6g} ({grid.size} points)",
                            "w_symmetry_diagnostic": f"{superpotential_symmetry(output.factorization):.3e}"})
    logger.info(f"Verifying {report.title} on {k_grid.size} wave numbers")

    _theorem_a(report, output, grid)
    _theorem_b(report, output)

    m = potential.spec.m
    s_residual = unitarity = 0.0
    eigen_residual = permutation = mixing = 0.0
    anchor: Optional[Tuple[float, float]] = None
    for k, S0, S2, error in _recompute(potential, output.V2, k_grid, grid, threads):
        if error is not None:
            report.fail(f"re-solve at k={k:.6g}", "C", f"{type(error).__name__}: {error}")
            continue
        predicted = predicted_s2(S0, potential.spec, chi, sign)
        s_residual = max(s_residual, float(np.max(np.abs(predicted.S - S2.S))))
        unitarity = max(unitarity, S0.unitarity_residual, S0.symmetry_residual, S2.unitarity_residual,
                        S2.symmetry_residual, predicted.unitarity_residual, predicted.symmetry_residual)
        eigen_residual = max(eigen_residual, _eigenphase_mismatch(S0, S2))

        initial, final = eigenphases(S0), eigenphases(S2)
        if initial.degenerate or final.degenerate:
            continue
        expected_epsilon = predicted_mixing(initial.epsilon, k, chi, sign, m)
        delta_residual, epsilon_residual, epsilon = _match_decomposition(initial, final, expected_epsilon, True)
        permutation = max(permutation, delta_residual)
        mixing = max(mixing, epsilon_residual)
        if anchor is None:
            anchor = (k, abs(_wrap(epsilon - initial.epsilon)))

    report.add("predicted vs recomputed S2", "C", s_residual, TOLERANCES["s_matrix"])
    report.add("unitarity and symmetry of S0, S2", "C", unitarity, TOLERANCES["unitarity"])
    report.add("eigenvalue multiset of S2 = S0", "D", eigen_residual, TOLERANCES["eigenvalues"])
    report.add("eigenphase permutation", "D", permutation, TOLERANCES["permutation"])
    report.add("mixing angle formula", "D", mixing, TOLERANCES["mixing"])
    if anchor is not None:
        k_min, shift = anchor
        report.add("zero-energy anchor of the mixing angle", "D", shift,
                   2.0 * np.arctan(k_min * k_min / (2.0 * chi * chi)), detail=f"k={k_min:.6g}")

    if report.passed:
        logger.success(f"All {len(report.checks)} checks passed")
    else:
        logger.warning(f"{len(report.failures)} of {len(report.checks)} checks failed: "
                       f"{', '.join(check.name for check in report.failures)}")
    return report


@allure.step("Verify a chain of transformations chis={chis} sign={sign}")
def verify_chain(potential: Potential, chis: Sequence[float], sign: int, k_grid: Sequence[float], grid: RadialGrid,
                 threads: int = 1, allow_unphysical: bool = False,
                 outputs: Optional[List[TransformOutput]] = None) -> VerificationReport:
    """Per-step Theorem A residuals, then eigenphases and the summed mixing formula of the final potential"""
    if outputs is None:
        outputs = chain(potential, chis, sign, grid, allow_unphysical)
    k_grid = np.asarray(k_grid, dtype=float)
    final = outputs[-1].V2
    report = VerificationReport(
        title=f"Chain of {len(outputs)} transformations of {potential}",
        metadata={"chis": list(map(float, chis)), "sign": sign, "final_spec": final.spec.describe(),
                  "k_grid": f"{k_grid[0]:.6g}..{k_grid[-1]:.6g} ({k_grid.size} points)"},
    )
    logger.info(f"Verifying {report.title}")

    for step, output in enumerate(outputs, start=1):
        report.add(f"step {step}: reality of W2", "A", output.reality_residual, TOLERANCES["reality"])
        report.add(f"step {step}: symmetry of V2", "A", output.symmetry_residual, TOLERANCES["symmetry"])
        report.add(f"step {step}: self-Wronskian W[u,u]", "A", output.factorization.self_wronskian_residual(),
                   TOLERANCES["self_wronskian"])
    limit = tail_limit(final.r, final.values)
    report.add("final tail: lim r^2 V = lbar(lbar+1)", "B", np.max(np.abs(limit - final.spec.centrifugal)),
               TOLERANCES["tail"])

    m = potential.spec.m
    swapped = len(outputs) % 2 == 1
    s_residual = unitarity = eigen_residual = permutation = mixing = 0.0
    for k, S0, Sn, error in _recompute(potential, final, k_grid, grid, threads):
        if error is not None:
            report.fail(f"re-solve at k={k:.6g}", "C", f"{type(error).__name__}: {error}")
            continue
        predicted = S0.S
        for output in outputs:
            factor = orthogonal_factor(k, output.parent.spec, output.chi, output.sign)
            predicted = factor @ predicted @ factor.T
        s_residual = max(s_residual, float(np.max(np.abs(predicted - Sn.S))))
        unitarity = max(unitarity, Sn.unitarity_residual, Sn.symmetry_residual)
        eigen_residual = max(eigen_residual, _eigenphase_mismatch(S0, Sn))

        initial, last = eigenphases(S0), eigenphases(Sn)
        if initial.degenerate or last.degenerate:
            continue
        expected_epsilon = predicted_chain_mixing(initial.epsilon, k, [o.chi for o in outputs], sign, m)
        delta_residual, epsilon_residual, _ = _match_decomposition(initial, last, expected_epsilon, swapped)
        permutation = max(permutation, delta_residual)
        mixing = max(mixing, epsilon_residual)

    report.add("composed O S0 O^T vs recomputed S", "C", s_residual, TOLERANCES["chain"])
    report.add("unitarity and symmetry of the final S", "C", unitarity, TOLERANCES["chain_unitarity"])
    report.add("eigenphase preservation", "D", eigen_residual, TOLERANCES["chain"])
    report.add("eigenphase ordering after the chain", "D", permutation, TOLERANCES["chain"])
    report.add("summed mixing formula", "D", mixing, TOLERANCES["chain"])
    if report.passed:
        logger.success(f"Chain verification passed ({len(report.checks)} checks)")
    else:
        logger.warning(f"Chain verification: {len(report.failures)} checks failed")
    return report
