"""Potentials sampled on a radial grid and the line-oriented table format.

Format: comment lines start with '#'. The header is the first comment line
that opens with ``l1=<int> l2=<int> nu1=<int> nu2=<int>`` (optionally
``core_angle=<float>``) before any data row; other comments are free text.
Rows are ``r V11 V12 V22`` with r strictly increasing.
"""
import re
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy.interpolate import CubicSpline

from potentials.base_potential import ChannelSpec, Potential
from utils.exceptions import TableFormatError

HEADER_KEYS = ("l1", "l2", "nu1", "nu2")
_HEADER_PATTERN = re.compile(r"\b(l1|l2|nu1|nu2|core_angle)\s*=\s*([-+0-9.eE]+)")
_HEADER_LINE = re.compile(r"^#\s*(l1|l2|nu1|nu2)\s*=")


class TabulatedPotential(Potential):
    """
    Potential interpolating tabulated V11, V12, V22.

    Inside the table g = r^2 V is a cubic spline in ln r. Below the first node
    the core R diag(nu(nu+1)) R^T / r^2 plus a constant matching the first
    node is used; above the last node only the centrifugal term l(l+1)/r^2.
    """

    def __init__(self, spec: ChannelSpec, r: np.ndarray, values: np.ndarray,
                 provenance: str = "table", tail_decay: str = "tabulated"):
        super().__init__(spec, provenance, tail_decay)
        r = np.asarray(r, dtype=float)
        values = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.size < 4:
            raise TableFormatError(f"A tabulated potential needs at least 4 radii, got {r.size}")
        if np.any(np.diff(r) <= 0) or r[0] <= 0:
            raise TableFormatError("Radii must be positive and strictly increasing")
        if values.shape != (r.size, 2, 2) or not np.all(np.isfinite(values)):
            raise TableFormatError("Potential values must be finite 2x2 matrices at every radius")

        # Symmetric by construction: only V11, V12, V22 are interpolated
        self.r = r
        self.values = 0.5 * (values + np.swapaxes(values, 1, 2))
        columns = np.stack([self.values[:, 0, 0], self.values[:, 0, 1], self.values[:, 1, 1]], axis=1)
        self._spline = CubicSpline(np.log(r), columns * (r * r)[:, None], axis=0)
        self._r_first = r[0]
        self._r_last = r[-1]
        self._core_constant = self.values[0] - spec.core / (r[0] * r[0])
        logger.debug(f"Tabulated potential {spec.describe()} on [{r[0]:.3e}, {r[-1]:.3e}] with {r.size} nodes")

    def _evaluate(self, r: np.ndarray) -> np.ndarray:
        out = np.empty((r.size, 2, 2))
        inside = (r >= self._r_first) & (r <= self._r_last)
        if np.any(inside):
            ri = r[inside]
            g = self._spline(np.log(ri)) / (ri * ri)[:, None]
            out[inside, 0, 0] = g[:, 0]
            out[inside, 0, 1] = g[:, 1]
            out[inside, 1, 0] = g[:, 1]
            out[inside, 1, 1] = g[:, 2]
        below = r < self._r_first
        if np.any(below):
            rb = r[below]
            out[below] = self.spec.core[None, :, :] / (rb * rb)[:, None, None] + self._core_constant
        above = r > self._r_last
        if np.any(above):
            ra = r[above]
            out[above] = self.spec.centrifugal[None, :, :] / (ra * ra)[:, None, None]
        return out


def _parse_header(text: str, line_number: int, found: Dict[str, float]) -> None:
    for key, raw in _HEADER_PATTERN.findall(text):
        try:
            found[key] = float(raw) if key == "core_angle" else int(raw)
        except ValueError:
            logger.error(f"Line {line_number}: unreadable header value {key}={raw}")
            raise TableFormatError(f"Cannot read header value {key}={raw}", line=line_number)


def load_tabulated(path: Union[str, Path]) -> TabulatedPotential:
    """
    Read a potential table.

    Raises:
        TableFormatError: On an empty file, a missing header, a row that does
            not have exactly four numbers (V12 absent included) or non-increasing r
    """
    path = Path(path)
    logger.info(f"Loading potential table: {path}")
    if not path.exists():
        logger.error(f"Potential table not found: {path}")
        raise TableFormatError(f"Potential table not found: {path}")

    header: Dict[str, float] = {}
    rows = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                if not rows and not header and _HEADER_LINE.match(stripped):
                    _parse_header(stripped, line_number, header)
                continue
            tokens = stripped.split()
            if len(tokens) == 3:
                logger.error(f"{path}:{line_number}: row without V12 column")
                raise TableFormatError("Row has three columns; expected r V11 V12 V22 (V12 missing)",
                                       line=line_number)
            if len(tokens) != 4:
                logger.error(f"{path}:{line_number}: expected 4 columns, got {len(tokens)}")
                raise TableFormatError(f"Expected 4 columns (r V11 V12 V22), got {len(tokens)}",
                                       line=line_number)
            try:
                numbers = [float(token) for token in tokens]
            except ValueError:
                logger.error(f"{path}:{line_number}: non-numeric entry")
                raise TableFormatError(f"Non-numeric entry in row: {stripped!r}", line=line_number)
            if not np.all(np.isfinite(numbers)):
                logger.error(f"{path}:{line_number}: non-finite entry")
                raise TableFormatError("Non-finite entry in row", line=line_number)
            if rows and numbers[0] <= rows[-1][1][0]:
                logger.error(f"{path}:{line_number}: radius not increasing")
                raise TableFormatError(f"Radius {numbers[0]} does not increase", line=line_number)
            rows.append((line_number, numbers))

    if not rows:
        logger.error(f"Potential table has no data rows: {path}")
        raise TableFormatError(f"Potential table {path} has no data rows", line=1)
    missing = [key for key in HEADER_KEYS if key not in header]
    if missing:
        logger.error(f"Potential table header lacks {missing}")
        raise TableFormatError(f"Header lacks {', '.join(missing)}", line=1)

    spec = ChannelSpec(int(header["l1"]), int(header["l2"]), int(header["nu1"]), int(header["nu2"]),
                       core_angle=float(header.get("core_angle", 0.0)), check_physical=False)
    data = np.array([numbers for _, numbers in rows])
    values = np.empty((data.shape[0], 2, 2))
    values[:, 0, 0] = data[:, 1]
    values[:, 0, 1] = values[:, 1, 0] = data[:, 2]
    values[:, 1, 1] = data[:, 3]
    potential = TabulatedPotential(spec, data[:, 0], values, provenance=f"table {path.name}")
    logger.success(f"Loaded {data.shape[0]} rows for {spec.describe()}")
    return potential


def write_table(path: Union[str, Path], spec: ChannelSpec, r: np.ndarray, values: np.ndarray,
                comments: Optional[Iterable[str]] = None) -> Path:
    """Write r, V11, V12, V22 rows under the l1 l2 nu1 nu2 header; extra comments go above it"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"l1={spec.l1} l2={spec.l2} nu1={spec.nu1} nu2={spec.nu2}"
    if spec.core_angle:
        header += f" core_angle={spec.core_angle!r}"
    lines = [f"# {comment}" for comment in (comments or [])]
    lines.append(f"# {header}")
    lines.append("# r V11 V12 V22")
    for radius, matrix in zip(r, values):
        lines.append(f"{radius:.16e} {matrix[0, 0]:.16e} {matrix[0, 1]:.16e} {matrix[1, 1]:.16e}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote potential table with {len(r)} rows to {path}")
    return path


def table_columns(potential: Potential, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Radii and symmetric values of any potential, ready for write_table"""
    values = potential.evaluate(np.asarray(r, dtype=float))
    return np.asarray(r, dtype=float), 0.5 * (values + np.swapaxes(values, 1, 2))
