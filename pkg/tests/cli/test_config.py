import allure
import pytest
import yaml
from loguru import logger

from config.config_manager import ConfigManager, RunConfig
from utils.exceptions import ConfigError


@allure.feature("Configuration")
@allure.story("Run Configuration")
@pytest.mark.cli
class TestRunConfig:

    @allure.title("Session configuration loads and names the s-d example")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.smoke
    def test_session_config(self, config_manager, environment_info):
        config = config_manager.run_config()
        with allure.step("Model and transform sections"):
            assert config.model.type in ("example_nf", "uncoupled_bargmann", "free", "table")
            assert environment_info["model"] == config.model.type
            assert config.runtime.threads >= 1
        with allure.step("Dotted lookups"):
            assert config_manager.get("model.type") == config.model.type
            assert config_manager.get("model.nothing", "fallback") == "fallback"

    @allure.title("Bundled configurations describe chi=1.22, sign + on the default grid")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.smoke
    @pytest.mark.parametrize("name", ["default", "example_nf"])
    def test_bundled(self, name):
        config = ConfigManager(env=name).run_config()
        assert config.model.kappa1 == pytest.approx(0.232)
        assert config.model.kappa2 == pytest.approx(0.944)
        assert config.transform.chi == (1.22,)
        assert config.transform.sign == 1
        assert config.radial_grid.build().size == 6000
        assert config.channel.spec().l == (2, 0)

    @allure.title("to_dict, YAML and back give an equal configuration")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.regression
    def test_round_trip(self, run_config_data):
        original = ConfigManager(config_file="<dict>", data=run_config_data()).run_config()
        with allure.step("Dump and reload"):
            text = yaml.safe_dump(original.to_dict(), sort_keys=False)
            allure.attach(text, name="Dumped configuration", attachment_type=allure.attachment_type.TEXT)
            reloaded = ConfigManager.from_text(text).run_config()
        assert reloaded == original
        assert RunConfig.from_dict(original.to_dict()) == original

    @allure.title("Scalar chi and '+'/'-' signs are normalized")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    def test_normalization(self, run_config_data):
        data = run_config_data(transform={"chi": 0.8, "sign": "-"})
        config = ConfigManager(config_file="<dict>", data=data).run_config()
        assert config.transform.chi == (0.8,)
        assert config.transform.sign == -1
        assert config.transform.allow_unphysical is False

    @allure.title("Command-line overrides replace output.dir and runtime.threads")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_overrides(self, run_config_data, tmp_path):
        config = ConfigManager(config_file="<dict>", data=run_config_data()).run_config()
        changed = config.with_overrides(output_dir=str(tmp_path / "elsewhere"), threads=3)
        assert changed.output.path("phases") == tmp_path / "elsewhere" / "phases.csv"
        assert changed.runtime.threads == 3
        assert config.with_overrides() == config
        with pytest.raises(ConfigError):
            config.with_overrides(threads=0)


@allure.feature("Configuration")
@allure.story("Configuration Errors")
@pytest.mark.cli
class TestConfigErrors:

    @allure.title("A missing model section is named in the error")
    @allure.severity(allure.severity_level.CRITICAL)
    @pytest.mark.smoke
    def test_missing_model(self, run_config_data, write_config):
        path = write_config(run_config_data(model=None))
        with pytest.raises(ConfigError, match="missing required section 'model'"):
            ConfigManager.from_file(path)

    @allure.title("Invalid sections are rejected with the section name")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    @pytest.mark.parametrize("sections, section", [
        (dict(k_grid={"k_min": 0.1, "k_max": 2.0, "n": 8}), "k_grid"),
        (dict(k_grid={"k_min": 2.0, "k_max": 1.0}), "k_grid"),
        (dict(radial_grid={"r_min": 2.0, "knee": 1.0, "r_max": 30.0}), "radial_grid"),
        (dict(transform={"chi": [1.22], "sign": 2}), "transform"),
        (dict(transform={"chi": -1.0}), "transform"),
        (dict(model={"type": "example_nf"}), "model"),
        (dict(model={"type": "table"}), "model"),
        (dict(model={"type": "harmonic"}), "model"),
        (dict(model={"type": "free"}, channel=None), "channel"),
        (dict(runtime={"threads": 0}), "runtime"),
    ], ids=["k_points", "k_order", "r_order", "sign", "chi", "kappas", "table_path", "model_type",
            "free_channel", "threads"])
    def test_invalid(self, run_config_data, sections, section):
        with pytest.raises(ConfigError, match=f"section '{section}'") as error:
            ConfigManager(config_file="<dict>", data=run_config_data(**sections))
        logger.info(f"Rejected as expected: {error.value}")

    @allure.title("Unknown sections, broken YAML and missing files raise ConfigError")
    @allure.severity(allure.severity_level.NORMAL)
    @pytest.mark.regression
    def test_unreadable(self, run_config_data, tmp_path):
        with allure.step("Unknown section"):
            data = run_config_data()
            data["plotting"] = {"enabled": True}
            with pytest.raises(ConfigError, match="unknown section"):
                ConfigManager(config_file="<dict>", data=data)
        with allure.step("Broken YAML"):
            with pytest.raises(ConfigError, match="Invalid YAML"):
                ConfigManager.from_text("model: [unclosed")
        with allure.step("Not a mapping"):
            with pytest.raises(ConfigError, match="mapping"):
                ConfigManager.from_text("- model\n- transform\n")
        with allure.step("Missing file"):
            with pytest.raises(ConfigError, match="not found"):
                ConfigManager.from_file(tmp_path / "absent.yaml")


@allure.feature("Configuration")
@allure.story("Reference Data")
@pytest.mark.cli
class TestReferenceData:

    @allure.title("Reference datasets are listed and unknown names report what exists")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    def test_lookup(self, reference_data):
        assert {"riccati_hankel", "example_nf", "singularity_rules"} <= set(reference_data.datasets())
        assert reference_data.complex_value("example_nf", "s22_at_1") == pytest.approx(-0.38790 + 0.92171j)
        with pytest.raises(ValueError, match="Available"):
            reference_data.get("no_such_dataset")
        with pytest.raises(ValueError, match="chi"):
            reference_data.get("example_nf", "no_such_key")

    @allure.title("Cached reference data is returned as an independent copy")
    @allure.severity(allure.severity_level.MINOR)
    @pytest.mark.regression
    def test_copy(self, reference_data):
        first = reference_data.get("example_nf")
        first["kappa1"] = -1.0
        assert reference_data.get("example_nf")["kappa1"] == 0.232
        reference_data.clear_cache()
        assert reference_data.get("example_nf", "chi") == 1.22
