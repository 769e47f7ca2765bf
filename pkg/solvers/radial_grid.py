from dataclasses import dataclass

import numpy as np
from loguru import logger

from utils.exceptions import ConfigError

MIN_GRID_POINTS = 16
MAX_INNER_RADIUS = 1e-3
LOG_FRACTION = 6


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Strictly increasing radii: log-spaced below the knee, uniform from the knee to r_max"""

    points: np.ndarray
    knee: float
    scheme: str = "log-uniform"

    @classmethod
    def build(cls, r_min: float = 1e-4, r_max: float = 60.0, n: int = 6000, knee: float = 1.0) -> "RadialGrid":
        """
        Build the default two-part grid. One sixth of the points go below the knee.

        Raises:
            ConfigError: On non-positive or unordered radii, r_min above 1e-3 or fewer than 16 points
        """
        if n < MIN_GRID_POINTS:
            logger.error(f"Radial grid needs at least {MIN_GRID_POINTS} points, got {n}")
            raise ConfigError(f"radial_grid.n must be >= {MIN_GRID_POINTS}, got {n}")
        if not 0 < r_min < knee < r_max:
            logger.error(f"Radial grid needs 0 < r_min < knee < r_max, got {r_min}, {knee}, {r_max}")
            raise ConfigError(f"radial_grid needs 0 < r_min < knee < r_max, got {r_min}, {knee}, {r_max}")
        if r_min > MAX_INNER_RADIUS:
            logger.error(f"r_min={r_min} too large for the leading-power boundary condition")
            raise ConfigError(f"radial_grid.r_min must be <= {MAX_INNER_RADIUS}, got {r_min}")

        n_log = max(n // LOG_FRACTION, 2)
        inner = np.geomspace(r_min, knee, n_log, endpoint=False)
        outer = np.linspace(knee, r_max, n - n_log)
        grid = cls(points=np.concatenate([inner, outer]), knee=float(knee))
        logger.debug(f"Radial grid: {n_log} log points in [{r_min}, {knee}), {n - n_log} uniform up to {r_max}")
        return grid

    @property
    def r_min(self) -> float:
        return float(self.points[0])

    @property
    def r_max(self) -> float:
        return float(self.points[-1])

    @property
    def size(self) -> int:
        return int(self.points.size)

    def __len__(self) -> int:
        return self.size

    @property
    def uniform_start(self) -> int:
        """Index of the knee, the first point of the uniform part"""
        return int(np.searchsorted(self.points, self.knee))

    def index_near(self, r: float) -> int:
        """Index of the grid point closest to r"""
        return int(np.argmin(np.abs(self.points - r)))

    def interior_indices(self, count: int, margin: int = 2) -> np.ndarray:
        """count indices evenly spread over the uniform part, margin points away from its ends"""
        start = self.uniform_start + margin
        stop = self.size - 1 - margin
        if stop <= start:
            return np.array([], dtype=int)
        return np.unique(np.linspace(start, stop, count).astype(int))
