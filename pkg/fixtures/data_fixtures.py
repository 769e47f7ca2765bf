import json
from typing import Any, Callable, Dict, List, Tuple

import allure
import pytest
from loguru import logger


# ==========================================
# REFERENCE VALUE FIXTURES (Environment-Aware)
# ==========================================

@pytest.fixture(scope="function")
def get_reference(reference_data) -> Callable:
    """
    Factory fixture returning one dataset or one entry of testdata/reference_values.json

    Usage in test:
        constants = get_reference('example_nf')
        chi = get_reference('example_nf', 'chi')
    """
    def _get(dataset: str, key: str = None) -> Any:
        logger.info(f"Retrieving reference data: {dataset}{'.' + key if key else ''}")
        try:
            value = reference_data.get(dataset, key)
            allure.attach(
                json.dumps(value, indent=2),
                name=f"Reference - {dataset}{'.' + key if key else ''}",
                attachment_type=allure.attachment_type.JSON
            )
            return value
        except Exception as e:
            logger.error(f"Failed to retrieve reference data '{dataset}': {str(e)}")
            raise

    return _get


@pytest.fixture(scope="function")
def get_complex_reference(reference_data) -> Callable:
    """
    Factory fixture for entries stored as [real, imag]

    Usage in test:
        expected = get_complex_reference('example_nf', 'n1n2_at_1')
    """
    def _get(dataset: str, key: str) -> complex:
        value = reference_data.complex_value(dataset, key)
        logger.debug(f"Reference {dataset}.{key} = {value}")
        return value

    return _get


@pytest.fixture(scope="function")
def example_constants(get_reference) -> Dict[str, Any]:
    """Parameters and closed-form values of the s-d example"""
    return get_reference('example_nf')


@pytest.fixture(scope="function")
def singularity_cases(get_reference) -> Tuple[List, List]:
    """(accepted [(nu, nu_bar), ...], rejected [nu, ...]) pairs for singularity_rules"""
    cases = get_reference('singularity_rules')
    accepted = [(tuple(nu), tuple(nu_bar)) for nu, nu_bar in cases['accepted']]
    rejected = [tuple(nu) for nu in cases['rejected']]
    return accepted, rejected


@pytest.fixture(scope="function")
def attach_residuals() -> Callable:
    """
    Attach a table of named residuals to the Allure report

    Usage in test:
        attach_residuals("Jost oracle", {"k=1.0": 1e-10})
    """
    def _attach(name: str, residuals: Dict[str, float]) -> None:
        text = "\n".join(f"{label:<30} {value:.3e}" for label, value in residuals.items())
        allure.attach(text, name=name, attachment_type=allure.attachment_type.TEXT)
        logger.debug(f"{name}: worst residual {max(residuals.values(), default=0.0):.3e}")

    return _attach
