import json

import allure
import numpy as np
import pytest
from loguru import logger

from potentials.analytic_potentials import make_example_v0, make_free, make_uncoupled_bargmann
from potentials.base_potential import ChannelSpec
from solvers.radial_grid import RadialGrid
from susy.transformation import chain, transform_potential
from susy.verification import verify_theorem

KAPPA1 = 0.232
KAPPA2 = 0.944
CHI = 1.22
CHAIN_CHIS = (1.22, 0.8)


def _attach_metadata(output, name: str) -> None:
    allure.attach(
        json.dumps(output.metadata(), indent=2, default=str),
        name=name,
        attachment_type=allure.attachment_type.JSON
    )


# ==========================================
# GRIDS
# ==========================================

@pytest.fixture(scope="session")
def radial_grid():
    """Default grid: 1e-4 .. 60 with 6000 points, knee at r = 1"""
    grid = RadialGrid.build()
    logger.info(f"Session radial grid: {grid.size} points on [{grid.r_min}, {grid.r_max}]")
    return grid


@pytest.fixture(scope="session")
def coarse_grid():
    """Cheap grid for tests that only exercise plumbing"""
    return RadialGrid.build(r_min=1e-4, r_max=30.0, n=1500, knee=1.0)


@pytest.fixture(scope="session")
def acceptance_k_grid():
    """100 wave numbers on [0.05, 5]"""
    return np.linspace(0.05, 5.0, 100)


@pytest.fixture(scope="session")
def short_k_grid():
    """A handful of wave numbers around the interesting region, including k = chi sqrt(2)"""
    return np.array([0.05, 0.232, 0.5, 1.0, CHI * np.sqrt(2.0), 2.5, 4.0])


# ==========================================
# POTENTIALS
# ==========================================

@pytest.fixture(scope="session")
def example_potential():
    """Exactly solvable s-d potential diag(6/r^2, Bargmann(0.232, 0.944))"""
    return make_example_v0(KAPPA1, KAPPA2)


@pytest.fixture(scope="session")
def free_sd_potential():
    """Free l=(2,0) potential"""
    return make_free(ChannelSpec(l1=2, l2=0, nu1=2, nu2=0))


@pytest.fixture(scope="session")
def uncoupled_bargmann_potential():
    """diag(0, Bargmann(0.232, 0.944)) with l=(0,0)"""
    return make_uncoupled_bargmann(KAPPA1, KAPPA2)


# ==========================================
# TRANSFORMATIONS (expensive, shared by the session)
# ==========================================

@pytest.fixture(scope="session")
def example_transform(example_potential, radial_grid):
    """The flagship transformation: chi = 1.22, sign +"""
    with allure.step("Transform the s-d example with chi=1.22, sign +"):
        output = transform_potential(example_potential, CHI, 1, radial_grid)
        _attach_metadata(output, "Transform metadata (sign +)")
    return output


@pytest.fixture(scope="session")
def example_transform_minus(example_potential, radial_grid):
    """Same parameters with the opposite sign pattern of u"""
    with allure.step("Transform the s-d example with chi=1.22, sign -"):
        output = transform_potential(example_potential, CHI, -1, radial_grid)
        _attach_metadata(output, "Transform metadata (sign -)")
    return output


@pytest.fixture(scope="session")
def free_sd_transform(free_sd_potential, radial_grid):
    """Transformation of the free l=(2,0) potential; nu=(2,0) needs the unphysical override"""
    with allure.step("Transform the free l=(2,0) potential"):
        output = transform_potential(free_sd_potential, CHI, 1, radial_grid, allow_unphysical=True)
        _attach_metadata(output, "Transform metadata (free l=(2,0))")
    return output


@pytest.fixture(scope="session")
def uncoupled_bargmann_transform(uncoupled_bargmann_potential, radial_grid):
    """Transformation of diag(0, Bargmann); nu=(0,2) needs the unphysical override"""
    with allure.step("Transform diag(0, Bargmann)"):
        output = transform_potential(uncoupled_bargmann_potential, CHI, 1, radial_grid, allow_unphysical=True)
        _attach_metadata(output, "Transform metadata (l=(0,0))")
    return output


@pytest.fixture(scope="session")
def example_chain(example_potential, radial_grid):
    """Two steps, chi = (1.22, 0.8), sign +"""
    with allure.step(f"Chain of transformations with chis={CHAIN_CHIS}"):
        outputs = chain(example_potential, CHAIN_CHIS, 1, radial_grid)
        allure.attach(
            json.dumps([output.metadata() for output in outputs], indent=2, default=str),
            name="Chain metadata",
            attachment_type=allure.attachment_type.JSON
        )
    return outputs


@pytest.fixture(scope="session")
def example_report(example_potential, example_transform, radial_grid, acceptance_k_grid):
    """Full verification report of the flagship transformation on the 100-point k grid"""
    with allure.step("Verify the flagship transformation"):
        report = verify_theorem(example_potential, CHI, 1, acceptance_k_grid, radial_grid,
                                threads=4, output=example_transform)
        allure.attach(report.to_text(), name="Verification report", attachment_type=allure.attachment_type.TEXT)
    return report
