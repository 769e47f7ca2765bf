"""Closed-form potentials: the free centrifugal baseline and the Bargmann s-d family."""
from typing import Callable

import numpy as np
from loguru import logger

from potentials.base_potential import ChannelSpec, Potential
from utils.exceptions import DegeneracyError, DomainError

R_FLOOR = 1e-8
_SERIES_LIMIT = 0.1


class Centrifugal:
    """l(l+1)/r^2"""

    def __init__(self, l: int):
        self.l = l
        self.strength = l * (l + 1.0)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.strength / (r * r)


def _sinh_minus_identity(x: np.ndarray) -> np.ndarray:
    """sinh(x) - x without cancellation for small |x|"""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < _SERIES_LIMIT
    xs = x[small]
    x2 = xs * xs
    out[small] = xs * x2 / 6.0 * (1.0 + x2 / 20.0 * (1.0 + x2 / 42.0 * (1.0 + x2 / 72.0)))
    out[~small] = np.sinh(x[~small]) - x[~small]
    return out


class BargmannSWave:
    """
    s-wave potential -2 (ln W[sinh k1 r, sinh k2 r])'' with a 6/r^2 core and no bound state.

    W  = k2 sinh(k1 r) cosh(k2 r) - k1 cosh(k1 r) sinh(k2 r)
    W' = (k2^2 - k1^2) sinh(k1 r) sinh(k2 r)
    W''= (k2^2 - k1^2)(k1 cosh(k1 r) sinh(k2 r) + k2 sinh(k1 r) cosh(k2 r))
    V  = -2 [W''/W - (W'/W)^2]
    """

    def __init__(self, kappa1: float, kappa2: float):
        if kappa1 <= 0 or kappa2 <= 0:
            logger.error(f"Bargmann rates must be positive: {kappa1}, {kappa2}")
            raise DomainError(f"kappa1 and kappa2 must be positive, got {kappa1}, {kappa2}")
        if kappa1 == kappa2:
            logger.error(f"Degenerate Bargmann Wronskian: kappa1 = kappa2 = {kappa1}")
            raise DegeneracyError("kappa1 = kappa2 makes W[sinh k1 r, sinh k2 r] vanish identically")
        self.kappa1 = float(kappa1)
        self.kappa2 = float(kappa2)

    def _ratios(self, r: np.ndarray):
        k1, k2 = self.kappa1, self.kappa2
        a, b = k1 * r, k2 * r
        near = np.maximum(a, b) < 1.0
        first = np.empty_like(r)
        second = np.empty_like(r)

        # Near the origin: exact linear cancellation of W through sinh(x) - x
        if np.any(near):
            rn = r[near]
            s, d = k1 + k2, k1 - k2
            w = 0.5 * (s * _sinh_minus_identity(d * rn) - d * _sinh_minus_identity(s * rn))
            an, bn = a[near], b[near]
            w1 = (k2 * k2 - k1 * k1) * np.sinh(an) * np.sinh(bn)
            w2 = (k2 * k2 - k1 * k1) * (k1 * np.cosh(an) * np.sinh(bn) + k2 * np.sinh(an) * np.cosh(bn))
            first[near] = w1 / w
            second[near] = w2 / w

        # Elsewhere: hyperbolic functions scaled by exp(-(k1 + k2) r)
        far = ~near
        if np.any(far):
            af, bf = a[far], b[far]
            ea, eb = np.exp(-2.0 * af), np.exp(-2.0 * bf)
            sh_a, ch_a = 0.5 * (1.0 - ea), 0.5 * (1.0 + ea)
            sh_b, ch_b = 0.5 * (1.0 - eb), 0.5 * (1.0 + eb)
            w = k2 * sh_a * ch_b - k1 * ch_a * sh_b
            w1 = (k2 * k2 - k1 * k1) * sh_a * sh_b
            w2 = (k2 * k2 - k1 * k1) * (k1 * ch_a * sh_b + k2 * sh_a * ch_b)
            first[far] = w1 / w
            second[far] = w2 / w
        return first, second

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        floor = r < R_FLOOR
        out[floor] = 6.0 / (r[floor] * r[floor])
        regular = ~floor
        if np.any(regular):
            first, second = self._ratios(r[regular])
            out[regular] = -2.0 * (second - first * first)
        return out


class DiagonalPotential(Potential):
    """Uncoupled potential diag(V1(r), V2(r)) built from two scalar channel components"""

    def __init__(self, spec: ChannelSpec, channel1: Callable, channel2: Callable,
                 provenance: str, tail_decay: str = "exponential"):
        super().__init__(spec, provenance, tail_decay)
        self.channel1 = channel1
        self.channel2 = channel2

    def _evaluate(self, r: np.ndarray) -> np.ndarray:
        values = np.zeros((r.size, 2, 2))
        values[:, 0, 0] = self.channel1(r)
        values[:, 1, 1] = self.channel2(r)
        return values


def make_free(spec: ChannelSpec) -> DiagonalPotential:
    """Pure centrifugal potential diag(l1(l1+1), l2(l2+1))/r^2"""
    if spec.nu != spec.l:
        logger.error(f"Free potential needs nu = l, got {spec.describe()}")
        raise DomainError(f"Free potential needs nu = l, got {spec.describe()}")
    logger.debug(f"Free potential for {spec.describe()}")
    return DiagonalPotential(spec, Centrifugal(spec.l1), Centrifugal(spec.l2),
                             provenance=f"free l=({spec.l1},{spec.l2})", tail_decay="none")


def make_bargmann_s(kappa1: float, kappa2: float) -> BargmannSWave:
    """Scalar Bargmann s-wave component with rates kappa1 != kappa2"""
    return BargmannSWave(kappa1, kappa2)


def make_example_v0(kappa1: float, kappa2: float) -> DiagonalPotential:
    """
    Exactly solvable s-d potential diag(6/r^2, Bargmann) with l=(2,0), nu=(2,2).

    Its Jost matrix is diag(-1/k^2, N1 N2) with N_j = (ik - kappa_j)^-1 and
    S = diag(1, (k + i kappa1)(k + i kappa2) / ((k - i kappa1)(k - i kappa2))).
    """
    spec = ChannelSpec(l1=2, l2=0, nu1=2, nu2=2)
    logger.info(f"Building s-d example potential with kappa1={kappa1}, kappa2={kappa2}")
    return DiagonalPotential(spec, Centrifugal(2), make_bargmann_s(kappa1, kappa2),
                             provenance=f"example_nf kappa1={kappa1} kappa2={kappa2}")


def make_uncoupled_bargmann(kappa1: float, kappa2: float) -> DiagonalPotential:
    """diag(0, Bargmann) with l=(0,0), nu=(0,2): the equal partial wave companion of the s-d example"""
    spec = ChannelSpec(l1=0, l2=0, nu1=0, nu2=2)
    return DiagonalPotential(spec, Centrifugal(0), make_bargmann_s(kappa1, kappa2),
                             provenance=f"bargmann_ss kappa1={kappa1} kappa2={kappa2}")
