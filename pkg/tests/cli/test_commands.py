import allure
import numpy as np
import pandas as pd
import pytest
import yaml
from loguru import logger

from cli.commands import _report_exit_code, build_potential, cmd_example_nf
from cli.main import build_parser, main
from config.config_manager import ConfigManager
from potentials.tabulated_potential import load_tabulated
from scattering.smatrix import s_matrix
from solvers.radial_solver import jost_matrix
from susy.transformation import transform_potential
from susy.verification import VerificationReport
from utils.exceptions import ConfigError


def run(argv, capsys):
    """main() plus whatever it printed"""
    logger.info(f"susy2 {' '.join(map(str, argv))}")
    code = main([str(arg) for arg in argv])
    captured = capsys.readouterr()
    allure.attach(f"exit {code}\n--- stdout\n{captured.out}\n--- stderr\n{captured.err}",
                  name=f"susy2 {argv[0]}", attachment_type=allure.attachment_type.TEXT)
    return code, captured


@allure.feature("Command Line")
@allure.story("Phases")
@pytest.mark.cli
class TestPhasesCommand:

    @allure.title("phases writes k,delta1,delta2,epsilon for the s-d example")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.smoke
    def test_phases(self, run_config_data, write_config, tmp_path, capsys):
        path = write_config(run_config_data())
        with allure.step("Run phases"):
            code, _ = run(["phases", "--config", path], capsys)
            assert code == 0
        with allure.step("Read the CSV"):
            frame = pd.read_csv(tmp_path / "output" / "phases.csv")
            assert list(frame.columns) == ["k", "delta1", "delta2", "epsilon"]
            assert len(frame) == 16
            k = frame["k"].to_numpy()
            expected = -np.arctan(k / 0.232) - np.arctan(k / 0.944)
            np.testing.assert_allclose(frame["delta2"], expected, atol=1e-4)
            np.testing.assert_allclose(frame["epsilon"], 0.0, atol=1e-6)

    @allure.title("Free l=(0,0) model gives all-zero phase columns")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_free_model(self, run_config_data, write_config, tmp_path, capsys):
        data = run_config_data(model={"type": "free"}, channel={"l1": 0, "l2": 0}, transform=None)
        code, _ = run(["phases", "--config", write_config(data)], capsys)
        assert code == 0
        frame = pd.read_csv(tmp_path / "output" / "phases.csv")
        np.testing.assert_allclose(frame[["delta1", "delta2", "epsilon"]].to_numpy(), 0.0, atol=1e-8)

    @allure.title("--out and --threads override the configuration")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_overrides(self, run_config_data, write_config, tmp_path, capsys):
        other = tmp_path / "elsewhere"
        code, _ = run(["phases", "--config", write_config(run_config_data()), "--out", other, "--threads", 2],
                      capsys)
        assert code == 0
        assert (other / "phases.csv").exists()
        assert not (tmp_path / "output" / "phases.csv").exists()

    @allure.title("Identical runs write identical bytes")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    def test_deterministic(self, run_config_data, write_config, tmp_path, capsys):
        path = write_config(run_config_data())
        run(["phases", "--config", path, "--out", tmp_path / "a"], capsys)
        run(["phases", "--config", path, "--out", tmp_path / "b", "--threads", 3], capsys)
        assert (tmp_path / "a" / "phases.csv").read_bytes() == (tmp_path / "b" / "phases.csv").read_bytes()


@allure.feature("Command Line")
@allure.story("Transform")
@pytest.mark.cli
class TestTransformCommand:

    @allure.title("transform writes a V2 table and metadata that load back")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.regression
    def test_transform(self, run_config_data, write_config, tmp_path, capsys):
        with allure.step("Run transform"):
            code, captured = run(["transform", "--config", write_config(run_config_data())], capsys)
            assert code == 0
            assert "mixing_formula: eps2 = eps0 - arctan(k^2 / 2.9768)" in captured.out

        with allure.step("Table header and values"):
            table = load_tabulated(tmp_path / "output" / "v2_table.dat")
            assert table.spec.l == (0, 2)
            assert table.spec.nu == (2, 2)
            assert table.r.size == 1500
            assert np.all(np.isfinite(table.values))

        with allure.step("Metadata"):
            metadata = yaml.safe_load((tmp_path / "output" / "transform_metadata.yaml").read_text(encoding="utf-8"))
            assert metadata["chi"] == 1.22
            assert metadata["sign"] == 1
            assert metadata["spec"] == "l=(0,2) nu=(2,2)"
            assert metadata["nu_source"] == "rules"

        with allure.step("The written table is a usable model"):
            data = run_config_data(model={"type": "table", "path": str(tmp_path / "output" / "v2_table.dat")},
                                   channel=None, transform=None, output={"dir": str(tmp_path / "reloaded")})
            code, _ = run(["phases", "--config", write_config(data, "table.yaml")], capsys)
            assert code == 0
            frame = pd.read_csv(tmp_path / "reloaded" / "phases.csv")
            assert np.all(np.isfinite(frame.to_numpy()))

        with allure.step("The reloaded table scatters like the in-memory V2"):
            config = ConfigManager(config_file="<dict>", data=run_config_data()).run_config()
            grid = config.radial_grid.build()
            output = transform_potential(build_potential(config), config.transform.chi[0], config.transform.sign, grid)
            assert table.spec.l == output.spec.l and table.spec.nu == output.spec.nu
            for k in (1.0, 2.0):
                in_memory = s_matrix(jost_matrix(output.V2, k, grid), output.spec)
                reloaded = s_matrix(jost_matrix(table, k, grid), table.spec)
                difference = float(np.max(np.abs(reloaded.S - in_memory.S)))
                logger.info(f"k={k}: |S(table) - S(in memory)| = {difference:.2e}")
                assert in_memory.unitarity_residual <= 1e-6
                assert difference <= 1e-2

    @allure.title("chain writes one table per step")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_chain(self, run_config_data, write_config, tmp_path, capsys):
        data = run_config_data(transform={"chi": [1.22, 0.8], "sign": 1})
        code, captured = run(["chain", "--config", write_config(data)], capsys)
        assert code == 0
        assert "final: l=(2,0)" in captured.out
        for step in (1, 2):
            assert (tmp_path / "output" / f"v2_table_step{step}.dat").exists()
        metadata = yaml.safe_load((tmp_path / "output" / "transform_metadata.yaml").read_text(encoding="utf-8"))
        assert metadata["chis"] == [1.22, 0.8]
        assert len(metadata["steps"]) == 2


@allure.feature("Command Line")
@allure.story("Exit Codes")
@pytest.mark.cli
class TestExitCodes:

    @allure.title("Missing model section exits 2 and names the section")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.smoke
    def test_missing_model(self, run_config_data, write_config, capsys):
        code, captured = run(["phases", "--config", write_config(run_config_data(model=None))], capsys)
        assert code == 2
        assert "model" in captured.err

    @allure.title("transform without a transform section exits 2")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    @pytest.mark.parametrize("command", ["transform", "chain", "verify"])
    def test_missing_transform(self, run_config_data, write_config, capsys, command):
        code, captured = run([command, "--config", write_config(run_config_data(transform=None))], capsys)
        assert code == 2
        assert "transform" in captured.err

    @allure.title("Rejected singularity pattern exits 4")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.regression
    def test_unphysical(self, run_config_data, write_config, capsys):
        data = run_config_data(model={"type": "free"}, channel={"l1": 2, "l2": 0})
        code, captured = run(["transform", "--config", write_config(data)], capsys)
        assert code == 4
        assert "allow_unphysical" in captured.err

    @allure.title("Malformed table exits 2 with its line number")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_bad_table(self, run_config_data, write_config, temp_file, capsys):
        table = temp_file("v.dat", "# l1=0 l2=0 nu1=0 nu2=0\n0.1 1.0 0.0 2.0\n0.2 1.0 2.0\n")
        data = run_config_data(model={"type": "table", "path": str(table)}, channel=None)
        code, captured = run(["phases", "--config", write_config(data)], capsys)
        assert code == 2
        assert "line 3" in captured.err

    @allure.title("Report outcome maps to exit 0 or 1")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.smoke
    def test_report_exit_code(self):
        report = VerificationReport(title="demo")
        report.add("reality of W2", "A", 0.0, 1e-8)
        assert _report_exit_code(report) == 0
        report.add("mixing angle formula", "D", 1.0, 1e-4)
        assert _report_exit_code(report) == 1

    @allure.title("Unknown commands are rejected by the parser")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    def test_parser(self):
        parser = build_parser()
        assert parser.prog == "susy2"
        args = parser.parse_args(["verify", "--threads", "4", "--verbose"])
        assert args.command == "verify" and args.threads == 4 and args.verbose
        with pytest.raises(SystemExit):
            parser.parse_args(["plot"])

    @allure.title("Channel section must agree with an analytic model")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    def test_channel_mismatch(self, run_config_data):
        data = run_config_data(channel={"l1": 0, "l2": 0})
        config = ConfigManager(config_file="<dict>", data=data).run_config()
        with pytest.raises(ConfigError, match="channel"):
            build_potential(config)


@allure.feature("Command Line")
@allure.story("Verify")
@pytest.mark.cli
class TestVerifyCommand:

    @allure.title("verify prints and writes the report, exit code follows the outcome")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.regression
    def test_verify(self, run_config_data, write_config, tmp_path, capsys):
        code, captured = run(["verify", "--config", write_config(run_config_data())], capsys)
        report = (tmp_path / "output" / "verification_report.txt").read_text(encoding="utf-8")
        assert report == captured.out
        assert "reality of W2" in report
        assert "mixing angle formula" in report
        result = report.strip().splitlines()[-1]
        assert result.startswith("# result: ")
        assert code == (0 if "PASS" in result else 1)

    @allure.title("example-nf writes every bundled output for an injected small configuration")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_example_nf(self, run_config_data, tmp_path, capsys):
        config = ConfigManager(config_file="<dict>", data=run_config_data()).run_config()
        with allure.step("Run the bundled workflow"):
            code = cmd_example_nf(config)
            out = capsys.readouterr().out
        with allure.step("Outputs"):
            output = tmp_path / "output"
            for name in ("phases.csv", "phases_v2.csv", "v2_table.dat", "transform_metadata.yaml",
                         "verification_report.txt"):
                assert (output / name).exists(), name
            assert out == (output / "verification_report.txt").read_text(encoding="utf-8")
            assert code in (0, 1)
        with allure.step("V2 phases keep the eigenphases of V0"):
            before = pd.read_csv(output / "phases.csv")
            after = pd.read_csv(output / "phases_v2.csv")
            np.testing.assert_allclose(np.sort(np.cos(2 * before[["delta1", "delta2"]].to_numpy()), axis=1),
                                       np.sort(np.cos(2 * after[["delta1", "delta2"]].to_numpy()), axis=1),
                                       atol=1e-3)
