import copy
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger


class ReferenceDataManager:
    """Reference values (closed forms, exact constants) kept as JSON datasets, with environment overrides"""

    def __init__(self, data_dir: str = "testdata", env: str = "default", file_name: str = "reference_values.json"):
        self.data_dir = Path(data_dir)
        self.env = env.lower()
        self.file_name = file_name
        self._cached_data: Dict[str, Any] = {}
        logger.info(f"Initialized ReferenceDataManager for environment: {self.env}")

    def _get_data_file_path(self, base_filename: str) -> Path:
        """
        Environment-specific file first (testdata/<env>/<file>), then the base file.

        Raises:
            FileNotFoundError: If neither exists
        """
        env_file = self.data_dir / self.env / base_filename
        if env_file.exists():
            logger.info(f"Using environment-specific data file: {env_file}")
            return env_file

        base_file = self.data_dir / base_filename
        if base_file.exists():
            logger.debug(f"Using base data file: {base_file}")
            return base_file

        raise FileNotFoundError(
            f"Data file not found: {base_filename} "
            f"(checked: {env_file}, {base_file})"
        )

    def _load(self, file_name: str) -> Dict[str, Any]:
        data_file = self._get_data_file_path(file_name)
        try:
            with open(data_file, 'r', encoding='utf-8') as file:
                return json.load(file)
        except json.JSONDecodeError as e:
            logger.error(f"Invalid JSON in data file {data_file}: {str(e)}")
            raise

    def get(self, dataset: str, key: Optional[str] = None, use_cache: bool = True) -> Any:
        """
        One dataset of the reference file, or one entry of it.

        Args:
            dataset: Top-level name, e.g. 'example_nf'
            key: Optional entry inside the dataset
            use_cache: Serve repeated requests from memory

        Returns:
            A deep copy of the requested data

        Raises:
            ValueError: If the dataset or key does not exist; the message lists what does
        """
        cache_key = f"{dataset}:{key}" if key else dataset
        if use_cache and cache_key in self._cached_data:
            logger.debug(f"Returning cached reference data for '{cache_key}'")
            return copy.deepcopy(self._cached_data[cache_key])

        all_data = self._load(self.file_name)
        if dataset not in all_data:
            available = self.datasets()
            logger.error(f"Dataset '{dataset}' not found in {self.file_name}")
            raise ValueError(f"Dataset '{dataset}' not found in {self.file_name}. Available: {available}")
        result = all_data[dataset]
        if key is not None:
            if key not in result:
                logger.error(f"Key '{key}' not found in dataset '{dataset}'")
                raise ValueError(f"Key '{key}' not found in dataset '{dataset}'. Available: {list(result)}")
            result = result[key]

        self._cached_data[cache_key] = copy.deepcopy(result)
        logger.debug(f"Loaded reference data '{cache_key}' ({self.env} environment)")
        return copy.deepcopy(result)

    def complex_value(self, dataset: str, key: str) -> complex:
        """Entries stored as [real, imag] pairs"""
        real, imag = self.get(dataset, key)
        return complex(real, imag)

    def datasets(self) -> List[str]:
        return [name for name in self._load(self.file_name) if not name.startswith('_')]

    def clear_cache(self) -> None:
        self._cached_data.clear()
        logger.debug("Reference data cache cleared")
