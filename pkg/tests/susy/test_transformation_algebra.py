import allure
import numpy as np
import pytest

from potentials.base_potential import ChannelSpec, rotation_matrix
from scattering.smatrix import SMatrixPoint
from susy.factorization import check_sign, conjugate_wronskian
from susy.transformation import (measure_core, orthogonal_factor, predicted_chain_mixing, predicted_mixing,
                                 predicted_s2, singularity_rules, u_infinity)
from susy.verification import VerificationReport, five_point_derivative, tail_limit
from utils.exceptions import DomainError, UnphysicalCaseError


@allure.feature("SUSY Transformation")
@allure.story("Asymptotic Algebra")
@pytest.mark.susy
class TestAsymptoticAlgebra:

    @allure.title("det U_inf(k) = k^4 + 4 chi^4")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.smoke
    def test_u_infinity(self, example_constants):
        chi = example_constants["chi"]
        with allure.step("Determinant at k = 1"):
            assert np.linalg.det(u_infinity(1.0, chi, 1)) == pytest.approx(
                example_constants["u_infinity_det_at_1"], abs=1e-4)
        with allure.step("Determinant for both signs and several k"):
            for k in (0.1, 0.8, 3.0):
                for sign in (1, -1):
                    assert np.linalg.det(u_infinity(k, chi, sign)) == pytest.approx(k ** 4 + 4 * chi ** 4, rel=1e-12)
        with allure.step("The sign only flips the off-diagonal pattern"):
            np.testing.assert_array_equal(u_infinity(1.0, chi, -1), u_infinity(1.0, chi, 1).T)

    @allure.title("O(k) is real orthogonal for l=(2,0) and l=(0,0)")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.smoke
    @pytest.mark.parametrize("spec", [ChannelSpec(2, 0, 2, 2), ChannelSpec(0, 0, 0, 2, check_physical=False),
                                      ChannelSpec(1, 3, 1, 3)], ids=["s-d", "s-s", "p-f"])
    def test_orthogonal_factor(self, spec):
        for k in (0.05, 1.0, 1.22 * np.sqrt(2.0), 4.0):
            factor = orthogonal_factor(k, spec, 1.22, 1)
            assert factor.dtype == float
            np.testing.assert_allclose(factor @ factor.T, np.eye(2), atol=1e-13)
            assert np.linalg.det(factor) == pytest.approx(1.0, abs=1e-13)

    @allure.title("O(k) S0 O(k)^T keeps the eigenvalues of S0")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_predicted_s2(self):
        spec = ChannelSpec(2, 0, 2, 2)
        S0 = SMatrixPoint(1.0, np.diag([1.0, np.exp(-4.3j)]))
        S2 = predicted_s2(S0, spec, 1.22, 1)
        assert S2.k == 1.0
        np.testing.assert_allclose(np.sort_complex(S2.eigenvalues), np.sort_complex(S0.eigenvalues), atol=1e-13)
        assert S2.unitarity_residual < 1e-13
        assert S2.symmetry_residual < 1e-13
        assert abs(S2.S[0, 1]) > 0.1

    @allure.title("Mixing shift is sign (-1)^m arctan(k^2 / 2chi^2)")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.smoke
    def test_predicted_mixing(self, example_constants):
        chi = example_constants["chi"]
        magnitude = example_constants["mixing_magnitude_at_1"]
        with allure.step("m = -1 (s-d example)"):
            assert predicted_mixing(0.0, 1.0, chi, 1, -1) == pytest.approx(-magnitude, abs=1e-4)
            assert predicted_mixing(0.0, 1.0, chi, -1, -1) == pytest.approx(magnitude, abs=1e-4)
        with allure.step("m = 0 and an offset eps0"):
            assert predicted_mixing(0.1, 1.0, chi, 1, 0) == pytest.approx(0.1 + magnitude, abs=1e-4)
        with allure.step("pi/4 at k = chi sqrt(2)"):
            assert abs(predicted_mixing(0.0, chi * np.sqrt(2.0), chi, 1, -1)) == pytest.approx(np.pi / 4, abs=1e-14)
        with allure.step("Sign must be +-1"):
            with pytest.raises(DomainError):
                predicted_mixing(0.0, 1.0, chi, 0, -1)

    @allure.title("Chain shifts add up step by step")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_chain_mixing(self, example_constants):
        chis = example_constants["chain_chis"]
        k = 1.3
        expected = sum(predicted_mixing(0.0, k, chi, 1, -1) for chi in chis)
        assert predicted_chain_mixing(0.0, k, chis, 1, -1) == pytest.approx(expected, abs=1e-14)
        assert predicted_chain_mixing(0.2, k, chis[:1], -1, 0) == pytest.approx(
            predicted_mixing(0.2, k, chis[0], -1, 0), abs=1e-14)


@allure.feature("SUSY Transformation")
@allure.story("Singularity Rules")
@pytest.mark.susy
class TestSingularityRules:

    @allure.title("Accepted singularity patterns map as tabulated and keep nu1 + nu2")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.smoke
    def test_accepted(self, singularity_cases):
        accepted, _ = singularity_cases
        for nu, expected in accepted:
            with allure.step(f"nu={nu} -> {expected}"):
                nu_bar = singularity_rules(nu)
                assert nu_bar == expected
                assert sum(nu_bar) == sum(nu)

    @allure.title("A gap of two raises UnphysicalCaseError")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.regression
    def test_rejected(self, singularity_cases):
        _, rejected = singularity_cases
        for nu in rejected:
            with pytest.raises(UnphysicalCaseError, match="allow_unphysical"):
                singularity_rules(nu)

    @allure.title("Negative or non-integer indices are a domain error")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    @pytest.mark.parametrize("nu", [(-1, 1), (1.0, 2), (True, 1)], ids=["negative", "float", "bool"])
    def test_invalid(self, nu):
        with pytest.raises(DomainError):
            singularity_rules(nu)

    @allure.title("Measured core: eigenvalues, indices and rotation angle of r^2 V at the first node")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_measure_core(self):
        r = np.array([1e-3, 2e-3, 3e-3])
        rotation = rotation_matrix(0.3)
        with allure.step("Rotated diag(6, 0) core"):
            values = (rotation @ np.diag([6.0, 0.0]) @ rotation.T)[None] / (r * r)[:, None, None]
            core = measure_core(values, r)
            assert core.nu == (2, 0)
            assert core.angle == pytest.approx(0.3, abs=1e-12)
            assert core.eigenvalues == pytest.approx((6.0, 0.0), abs=1e-10)
            assert core.integral
        with allure.step("A core of 3/r^2 is not nu(nu+1)"):
            values = np.diag([3.0, 2.0])[None] / (r * r)[:, None, None]
            assert not measure_core(values, r).integral
        with allure.step("Equal indices give angle 0"):
            values = np.diag([6.0, 6.0])[None] / (r * r)[:, None, None]
            core = measure_core(values, r)
            assert core.nu == (2, 2) and core.angle == 0.0


@allure.feature("SUSY Transformation")
@allure.story("Numerical Helpers")
@pytest.mark.susy
class TestNumericalHelpers:

    @allure.title("Sign must be +1 or -1")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.smoke
    def test_check_sign(self):
        assert check_sign(1) == 1
        assert check_sign(-1) == -1
        for bad in (0, 2, "+"):
            with pytest.raises(DomainError):
                check_sign(bad)

    @allure.title("W[u, u*] is anti-Hermitian for arbitrary complex u")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_conjugate_wronskian(self):
        rng = np.random.default_rng(7)
        u = rng.normal(size=(50, 2, 2)) + 1j * rng.normal(size=(50, 2, 2))
        u_prime = rng.normal(size=(50, 2, 2)) + 1j * rng.normal(size=(50, 2, 2))
        W = conjugate_wronskian(u, u_prime)
        np.testing.assert_allclose(W, -np.conj(np.swapaxes(W, 1, 2)), rtol=0, atol=1e-14)
        expected = np.swapaxes(u, 1, 2) @ np.conj(u_prime) - np.swapaxes(u_prime, 1, 2) @ np.conj(u)
        np.testing.assert_allclose(W, expected, atol=1e-13)

    @allure.title("Five-point derivative of sin on a uniform grid")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    def test_five_point_derivative(self):
        r = np.linspace(0.0, 2.0, 201)
        indices = np.arange(2, 199)
        values = np.stack([np.sin(r), np.cos(r)], axis=1)
        derivative = five_point_derivative(values, r, indices)
        np.testing.assert_allclose(derivative[:, 0], np.cos(r[indices]), atol=1e-9)
        np.testing.assert_allclose(derivative[:, 1], -np.sin(r[indices]), atol=1e-9)

    @allure.title("Tail limit recovers A from A + B/r + C/r^2")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_tail_limit(self):
        r = np.linspace(1.0, 60.0, 600)
        A = np.array([[0.0, 0.5], [0.5, 6.0]])
        B = np.array([[1.0, -2.0], [-2.0, 4.0]])
        C = np.array([[3.0, 0.0], [0.0, -7.0]])
        profile = A[None] + B[None] / r[:, None, None] + C[None] / (r * r)[:, None, None]
        with allure.step("r^2 weighting"):
            np.testing.assert_allclose(tail_limit(r, profile / (r * r)[:, None, None]), A, atol=1e-10)
        with allure.step("r weighting"):
            np.testing.assert_allclose(tail_limit(r, profile / r[:, None, None], power=1), A, atol=1e-10)


@allure.feature("SUSY Transformation")
@allure.story("Verification Report")
@pytest.mark.susy
class TestVerificationReport:

    @allure.title("Report collects checks, finds them by name and renders a table")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.smoke
    def test_report(self):
        report = VerificationReport(title="demo", metadata={"chi": 1.22})
        with allure.step("Add one passing and one failing check"):
            good = report.add("reality of W2", "A", 1e-12, 1e-8)
            bad = report.add("mixing angle formula", "D", 1e-2, 1e-4, detail="k=1")
            assert good.passed and not bad.passed
            assert not report.passed
            assert report.failures == [bad]
        with allure.step("Lookup"):
            assert report.find("reality of W2") is good
            with pytest.raises(KeyError, match="reality of W2"):
                report.find("missing check")
        with allure.step("Text rendering"):
            text = report.to_text()
            allure.attach(text, name="Report", attachment_type=allure.attachment_type.TEXT)
            assert text.startswith("# demo\n# chi: 1.22\n")
            assert "FAIL  k=1" in text
            assert text.rstrip().endswith("# result: FAIL (1/2 checks passed)")

    @allure.title("Explicit failures and non-finite residuals never pass")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    def test_failures(self):
        report = VerificationReport(title="demo")
        assert report.passed
        report.fail("re-solve at k=1", "C", "PoleError: singular")
        report.add("nan residual", "A", float("nan"), 1.0)
        assert [check.passed for check in report.checks] == [False, False]
        assert report.checks[0].residual == float("inf")
