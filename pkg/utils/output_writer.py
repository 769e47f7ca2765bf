"""Deterministic data files: phase CSVs, verification reports and run metadata."""
from pathlib import Path
from typing import Any, Dict, Union

import yaml
from loguru import logger

from scattering.smatrix import PhaseData
from susy.verification import VerificationReport

PHASE_COLUMNS = ["k", "delta1", "delta2", "epsilon"]
FLOAT_FORMAT = "%.12e"


def write_phase_csv(path: Union[str, Path], phases: PhaseData) -> Path:
    """k,delta1,delta2,epsilon rows in radians; identical inputs give identical bytes"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    phases.to_frame()[PHASE_COLUMNS].to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(phases.k_grid)} phase rows to {path}")
    return path


def write_report(path: Union[str, Path], report: VerificationReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_text(), encoding="utf-8")
    logger.info(f"Wrote verification report ({'PASS' if report.passed else 'FAIL'}) to {path}")
    return path


def write_metadata(path: Union[str, Path], metadata: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(metadata, sort_keys=False), encoding="utf-8")
    logger.debug(f"Wrote metadata to {path}")
    return path
