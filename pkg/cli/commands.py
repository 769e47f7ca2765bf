"""The five workflows behind the command line. Each returns the process exit code."""
from pathlib import Path
from typing import Dict, List

import allure
from loguru import logger

from config.config_manager import ConfigManager, RunConfig
from potentials.analytic_potentials import make_example_v0, make_free, make_uncoupled_bargmann
from potentials.base_potential import Potential
from potentials.tabulated_potential import load_tabulated, table_columns, write_table
from scattering.smatrix import phase_curves
from susy.transformation import TransformOutput, chain, transform_potential
from susy.verification import VerificationReport, verify_chain, verify_theorem
from utils.exceptions import ConfigError
from utils.output_writer import write_metadata, write_phase_csv, write_report

EXAMPLE_NF_CONFIG = Path(__file__).resolve().parent.parent / "config" / "example_nf.yaml"


def build_potential(config: RunConfig) -> Potential:
    """
    Potential named by the model section.

    Raises:
        ConfigError: If the channel section contradicts the model
    """
    model = config.model
    if model.type == "free":
        return make_free(config.channel.spec())
    if model.type == "table":
        return load_tabulated(model.path)
    builder = make_example_v0 if model.type == "example_nf" else make_uncoupled_bargmann
    potential = builder(model.kappa1, model.kappa2)
    if config.channel is not None and config.channel.spec() != potential.spec:
        logger.error(f"Channel section {config.channel} does not match model {model.type}")
        raise ConfigError(
            f"section 'channel': model {model.type} has {potential.spec.describe()}, "
            f"got l=({config.channel.l1},{config.channel.l2})"
        )
    return potential


def _require_transform(config: RunConfig):
    if config.transform is None:
        logger.error("Configuration has no transform section")
        raise ConfigError("missing required section 'transform'")
    return config.transform


def _write_v2(config: RunConfig, output: TransformOutput, name: str) -> Path:
    r, values = table_columns(output.V2, output.r)
    metadata = output.metadata()
    comments = [f"{key}: {value}" for key, value in metadata.items()]
    return write_table(Path(config.output.dir) / name, output.spec, r, values, comments=comments)


@allure.step("Command phases")
def cmd_phases(config: RunConfig) -> int:
    potential = build_potential(config)
    phases = phase_curves(potential, config.k_grid.values(), config.radial_grid.build(), config.runtime.threads)
    write_phase_csv(config.output.path("phases"), phases)
    logger.success(f"Phases of {potential} written to {config.output.path('phases')}")
    return 0


@allure.step("Command transform")
def cmd_transform(config: RunConfig) -> int:
    transform = _require_transform(config)
    potential = build_potential(config)
    output = transform_potential(potential, transform.chi[0], transform.sign, config.radial_grid.build(),
                                 transform.allow_unphysical)
    if len(transform.chi) > 1:
        logger.warning(f"transform uses chi={transform.chi[0]} only; run chain for {len(transform.chi)} values")
    table = _write_v2(config, output, config.output.table)
    write_metadata(config.output.path("metadata"), output.metadata())
    for key, value in output.metadata().items():
        print(f"{key}: {value}")
    logger.success(f"V2 table written to {table}")
    return 0


@allure.step("Command chain")
def cmd_chain(config: RunConfig) -> int:
    transform = _require_transform(config)
    potential = build_potential(config)
    outputs = chain(potential, transform.chi, transform.sign, config.radial_grid.build(), transform.allow_unphysical)
    stem = Path(config.output.table)
    steps: List[Dict[str, object]] = []
    for step, output in enumerate(outputs, start=1):
        _write_v2(config, output, f"{stem.stem}_step{step}{stem.suffix}")
        steps.append(output.metadata())
    write_metadata(config.output.path("metadata"), {"chis": list(transform.chi), "steps": steps})
    print(f"final: {outputs[-1].spec.describe()} after {len(outputs)} steps")
    return 0


@allure.step("Command verify")
def cmd_verify(config: RunConfig) -> int:
    transform = _require_transform(config)
    potential = build_potential(config)
    grid = config.radial_grid.build()
    k_grid = config.k_grid.values()
    if len(transform.chi) > 1:
        report = verify_chain(potential, transform.chi, transform.sign, k_grid, grid, config.runtime.threads,
                              transform.allow_unphysical)
    else:
        report = verify_theorem(potential, transform.chi[0], transform.sign, k_grid, grid, config.runtime.threads,
                                transform.allow_unphysical)
    write_report(config.output.path("report"), report)
    print(report.to_text(), end="")
    return _report_exit_code(report)


def _report_exit_code(report: VerificationReport) -> int:
    if report.passed:
        return 0
    logger.error(f"Verification failed: {', '.join(check.name for check in report.failures)}")
    return 1


@allure.step("Command example-nf")
def cmd_example_nf(config: RunConfig = None) -> int:
    """
    Phases of V0, the V2 table, phases of V2 and the verification report for
    kappa1 = 0.232, kappa2 = 0.944, chi = 1.22, sign +.
    """
    if config is None:
        config = ConfigManager.from_file(EXAMPLE_NF_CONFIG).run_config()
    transform = _require_transform(config)
    potential = build_potential(config)
    grid = config.radial_grid.build()
    k_grid = config.k_grid.values()
    threads = config.runtime.threads

    write_phase_csv(config.output.path("phases"), phase_curves(potential, k_grid, grid, threads))
    output = transform_potential(potential, transform.chi[0], transform.sign, grid, transform.allow_unphysical)
    _write_v2(config, output, config.output.table)
    write_metadata(config.output.path("metadata"), output.metadata())
    write_phase_csv(config.output.path("transformed_phases"), phase_curves(output.V2, k_grid, grid, threads))

    report = verify_theorem(potential, output.chi, output.sign, k_grid, grid, threads, output=output)
    write_report(config.output.path("report"), report)
    print(report.to_text(), end="")
    logger.info(f"example-nf outputs in {Path(config.output.dir).resolve()}")
    return _report_exit_code(report)


COMMANDS = {
    "phases": cmd_phases,
    "transform": cmd_transform,
    "chain": cmd_chain,
    "verify": cmd_verify,
    "example-nf": cmd_example_nf,
}
