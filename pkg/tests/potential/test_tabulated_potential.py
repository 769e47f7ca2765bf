import allure
import numpy as np
import pytest
from loguru import logger

from potentials.base_potential import ChannelSpec
from potentials.tabulated_potential import TabulatedPotential, load_tabulated, table_columns, write_table
from utils.exceptions import TableFormatError

HEADER = "# l1=0 l2=0 nu1=0 nu2=0\n"


def coupled_model(r):
    """Smooth coupled test potential without a core"""
    values = np.zeros((r.size, 2, 2))
    values[:, 0, 0] = -3.0 * np.exp(-r)
    values[:, 1, 1] = -1.0 * np.exp(-0.5 * r)
    values[:, 0, 1] = values[:, 1, 0] = 0.7 * r * np.exp(-r)
    return values


@allure.feature("Potentials")
@allure.story("Tabulated Potentials")
@pytest.mark.potential
class TestTabulatedPotential:

    @allure.title("Spline of r^2 V in ln r reproduces the s-d example between the nodes")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.regression
    def test_interpolation(self, example_potential, radial_grid):
        with allure.step("Tabulate the example on the default grid"):
            r, values = table_columns(example_potential, radial_grid.points)
            table = TabulatedPotential(example_potential.spec, r, values)

        with allure.step("Evaluate at midpoints"):
            middle = 0.5 * (r[1:] + r[:-1])
            exact = example_potential(middle)
            interpolated = table(middle)
            error = np.max(np.abs(interpolated - exact), axis=(1, 2)) / np.max(np.abs(exact), axis=(1, 2))
            logger.info(f"Worst relative interpolation error: {error.max():.2e}")
            assert error.max() < 1e-6

    @allure.title("Outside the table: the core below the first node, the centrifugal term above the last")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_extrapolation(self):
        spec = ChannelSpec(l1=2, l2=0, nu1=2, nu2=2)
        r = np.linspace(0.01, 5.0, 200)
        values = spec.core[None] / (r * r)[:, None, None] + coupled_model(r)
        table = TabulatedPotential(spec, r, values)

        with allure.step("Below the first node: core / r^2 plus a constant"):
            inner = table(np.array([1e-4, 1e-3]))
            np.testing.assert_allclose(inner[:, 0, 0] * np.array([1e-8, 1e-6]), 6.0, rtol=1e-3)
            np.testing.assert_allclose(table(0.01), values[0], rtol=1e-12)

        with allure.step("Above the last node: l(l+1)/r^2 only"):
            np.testing.assert_allclose(table(10.0), spec.centrifugal / 100.0, atol=1e-15)

    @allure.title("Tables written by write_table load back with their header and values")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.smoke
    def test_write_and_load(self, tmp_path):
        spec = ChannelSpec(l1=0, l2=2, nu1=2, nu2=2, core_angle=0.25, check_physical=False)
        r = np.linspace(0.1, 8.0, 80)
        values = coupled_model(r)

        with allure.step("Write with metadata comments"):
            path = write_table(tmp_path / "v2.dat", spec, r, values, comments=["chi: 1.22", "sign: 1"])
            text = path.read_text(encoding="utf-8")
            allure.attach(text[:2000], name="Table head", attachment_type=allure.attachment_type.TEXT)
            assert text.startswith("# chi: 1.22\n# sign: 1\n# l1=0 l2=2 nu1=2 nu2=2 core_angle=0.25\n")

        with allure.step("Load it back"):
            loaded = load_tabulated(path)
            assert loaded.spec == spec
            np.testing.assert_allclose(loaded.r, r, rtol=1e-15)
            np.testing.assert_allclose(loaded.values, values, rtol=1e-15, atol=1e-300)

    @allure.title("Values are symmetrized on construction")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    def test_symmetrized(self):
        r = np.linspace(0.1, 2.0, 10)
        values = coupled_model(r)
        values[:, 0, 1] += 1e-3
        table = TabulatedPotential(ChannelSpec(0, 0, 0, 0), r, values)
        np.testing.assert_array_equal(table.values, np.swapaxes(table.values, 1, 2))


@allure.feature("Potentials")
@allure.story("Table Format Errors")
@pytest.mark.potential
class TestTableFormatErrors:

    @allure.title("A row without V12 is rejected with its line number")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.smoke
    def test_missing_v12(self, temp_file):
        path = temp_file("v.dat", HEADER + "0.1 1.0 0.0 2.0\n0.2 1.0 2.0\n")
        with allure.step("Load the table"):
            with pytest.raises(TableFormatError, match="V12") as error:
                load_tabulated(path)
        assert error.value.line == 3
        assert "line 3" in str(error.value)

    @allure.title("Only the first key=value comment before the rows is the header")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_header_line(self, temp_file):
        content = ("# parent: two-fold chi=1.22 with nu1=5 in the text\n"
                   "# l1=0 l2=2 nu1=2 nu2=2\n"
                   "# l1=4 l2=4 nu1=4 nu2=4\n"
                   "0.1 1.0 0.0 2.0\n0.2 1.0 0.0 2.0\n0.3 1.0 0.0 2.0\n0.4 1.0 0.0 2.0\n"
                   "# l1=6 l2=6 nu1=6 nu2=6\n")
        table = load_tabulated(temp_file("commented.dat", content))
        with allure.step("Free text and later header-like comments are ignored"):
            assert table.spec.l == (0, 2)
            assert table.spec.nu == (2, 2)
            assert table.r.size == 4

    @allure.title("Malformed tables raise TableFormatError")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    @pytest.mark.parametrize("content, line", [
        (HEADER + "0.2 1 0 1\n0.1 1 0 1\n", 3),          # r not increasing
        (HEADER + "0.1 1 0 1\n0.2 1 x 1\n", 3),          # non-numeric
        (HEADER + "0.1 1 0 1 5\n", 2),                   # five columns
        (HEADER + "0.1 1 0 1\n0.2 1 nan 1\n", 3),        # non-finite
        ("# l1=0 l2=0 nu1=0\n0.1 1 0 1\n", 1),           # header lacks nu2
        (HEADER, 1),                                     # no rows
    ], ids=["decreasing_r", "non_numeric", "five_columns", "non_finite", "missing_header_key", "empty"])
    def test_malformed(self, temp_file, content, line):
        path = temp_file("bad.dat", content)
        with pytest.raises(TableFormatError) as error:
            load_tabulated(path)
        logger.info(f"Rejected as expected: {error.value}")
        assert error.value.line == line

    @allure.title("A missing table file raises TableFormatError")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    def test_missing_file(self, tmp_path):
        with pytest.raises(TableFormatError, match="not found"):
            load_tabulated(tmp_path / "nowhere.dat")

    @allure.title("Too few nodes or non-finite values are rejected on construction")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    def test_constructor_checks(self):
        spec = ChannelSpec(0, 0, 0, 0)
        with pytest.raises(TableFormatError):
            TabulatedPotential(spec, np.array([0.1, 0.2, 0.3]), np.zeros((3, 2, 2)))
        values = np.zeros((5, 2, 2))
        values[2, 0, 0] = np.nan
        with pytest.raises(TableFormatError):
            TabulatedPotential(spec, np.linspace(0.1, 1.0, 5), values)
