import json
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict

import allure
import pytest
import yaml
from loguru import logger


@pytest.fixture(scope="function")
def temp_file(tmp_path):
    """
    Create temporary file for test

    Usage in test:
        def test_table(temp_file):
            file_path = temp_file("v.dat", "# l1=0 l2=0 nu1=0 nu2=0\\n...")
    """
    created_files = []

    def _create_file(filename: str, content: str = "") -> Path:
        file_path = tmp_path / filename
        file_path.write_text(content, encoding='utf-8')
        created_files.append(file_path)
        logger.info(f"Created temporary file: {file_path}")
        return file_path

    yield _create_file

    # Cleanup
    for file_path in created_files:
        if file_path.exists():
            file_path.unlink()
            logger.debug(f"Cleaned up temporary file: {file_path}")


@pytest.fixture(scope="function")
def run_config_data(tmp_path) -> Callable:
    """
    Factory for a small, valid run configuration as a dict

    Sections can be replaced or removed:
        data = run_config_data(model=None)            # drop the model section
        data = run_config_data(transform={"chi": 1})  # replace a section
    """
    def _build(**sections: Any) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "channel": {"l1": 2, "l2": 0, "nu1": 2, "nu2": 2},
            "model": {"type": "example_nf", "kappa1": 0.232, "kappa2": 0.944},
            "transform": {"chi": [1.22], "sign": 1},
            "radial_grid": {"r_min": 1.0e-4, "knee": 1.0, "r_max": 30.0, "n": 1500},
            "k_grid": {"k_min": 0.2, "k_max": 2.0, "n": 16},
            "output": {"dir": str(tmp_path / "output")},
            "runtime": {"threads": 1, "log_level": "INFO"},
        }
        for name, section in sections.items():
            if section is None:
                data.pop(name, None)
            else:
                data[name] = section
        return data

    return _build


@pytest.fixture(scope="function")
def write_config(temp_file) -> Callable:
    """
    Write a run configuration dict as YAML and return its path

    Usage in test:
        path = write_config(run_config_data(), "run.yaml")
    """
    def _write(data: Dict[str, Any], filename: str = "run.yaml") -> Path:
        path = temp_file(filename, yaml.safe_dump(data, sort_keys=False))
        allure.attach(path.read_text(encoding='utf-8'), name=f"Config - {filename}",
                      attachment_type=allure.attachment_type.TEXT)
        return path

    return _write


@pytest.fixture(scope="function")
def environment_info(config_manager):
    """Get environment information"""
    info = {
        'env': config_manager.env,
        'config_file': str(config_manager.config_file),
        'model': config_manager.model.get('type'),
        'transform': config_manager.transform,
        'threads': config_manager.threads,
    }

    logger.info(f"Environment info: {info}")

    allure.attach(
        json.dumps(info, indent=2, default=str),
        name="Environment Information",
        attachment_type=allure.attachment_type.JSON
    )

    return info


@pytest.fixture(scope="function", autouse=True)
def test_timer(request):
    """
    Automatically time test execution
    """
    test_name = request.node.name
    start_time = datetime.now()

    logger.info(f"Test '{test_name}' started at {start_time.strftime('%H:%M:%S')}")

    yield

    end_time = datetime.now()
    duration = (end_time - start_time).total_seconds()

    logger.info(f"Test '{test_name}' completed in {duration:.2f} seconds")

    # Attach timing to Allure
    allure.dynamic.parameter("Execution Time", f"{duration:.2f}s")
