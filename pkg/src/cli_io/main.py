"""
Command-line entry point.

    biot-stokes run CONFIG
    biot-stokes verify adjoint CONFIG
    biot-stokes verify energy CONFIG
    biot-stokes study converge CONFIG
    biot-stokes study storage CONFIG
    biot-stokes study dependence CONFIG
    biot-stokes probe uniqueness CONFIG

Exit code 0 when every asserted property holds, 1 when a property fails or a
run breaks down (a JSON failure summary goes to standard error), 2 for usage
and configuration errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from dotenv import load_dotenv

from src.analysis.diagnostics import interface_residuals
from src.analysis.verification import adjoint_suite, energy_suite
from src.cli_io.config import RunConfig, load_config
from src.cli_io.writers import write_energy_csv, write_fields, write_table_csv
from src.dynamics.timestepper import run
from src.errors import ConfigValidationError, IoError, ParseError
from src.middleware.check_guard import run_check
from src.scenarios.cases import prepare
from src.scenarios.studies import (
    continuous_dependence_study,
    convergence_study,
    uniqueness_probe,
    vanishing_storage_study,
)
from src.settings import get_log_level
from src.utils.report_logger import get_report_logger, to_builtin
from src.utils.solve_tracker import get_tracker

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

# observed L2 orders required on the finest pair of a 2D convergence study
ORDER_TARGETS = {"p": 1.75, "u": 2.5, "v": 2.5}
# error reduction of p required between the two levels of a 3D study
REDUCTION_TARGET_3D = 3.0
DEPENDENCE_SPREAD = 0.05
ZERO_DATA_TOL = 1e-12
PERMUTED_TOL = 1e-10

CONVERGENCE_COLUMNS = ("n", "h", "dt", "steps", "field", "error", "order")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise AssertionError(message)


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------
def _run_command(config: RunConfig) -> Dict[str, Any]:
    out = config.output_dir
    case = config.case()
    prepared = prepare(case)
    trajectory = run(prepared.system, case.scheme, prepared.initial, case.sources, label=case.kind)
    files = [write_energy_csv(trajectory.reports, out / "energy.csv")]
    stride = config.output.field_stride
    if stride > 0:
        for index in range(0, len(trajectory.states), stride):
            files.append(write_fields(trajectory.states[index], prepared.dofmaps, out / f"fields_{index:05d}.txt"))
    files.append(write_fields(trajectory.final, prepared.dofmaps, out / "fields_final.txt"))
    residuals = interface_residuals(trajectory.final, prepared.system, case.sources.interface_targets())
    get_report_logger().log_report("interface_residuals", {
        "aggregate": residuals.aggregate,
        "per_face": residuals.per_face,
    })
    final = trajectory.reports[-1]
    return {
        "steps": len(trajectory) - 1,
        "final_energy": final.total_energy,
        "max_balance_residual": max(abs(r.balance_residual) for r in trajectory.reports),
        "projection_defect": prepared.projection_defect,
        "files": [str(path) for path in files],
    }


def command_run(config: RunConfig) -> List[Dict[str, Any]]:
    return [run_check("run", _run_command, config)]


def command_verify_adjoint(config: RunConfig) -> List[Dict[str, Any]]:
    prepared = run_check("prepare", prepare, config.case())
    if not prepared["passed"]:
        return [prepared]
    return adjoint_suite(prepared["result"], config.scenario.samples, config.scenario.seed)


def command_verify_energy(config: RunConfig) -> List[Dict[str, Any]]:
    def integrate():
        case = config.case()
        prepared = prepare(case)
        trajectory = run(prepared.system, case.scheme, prepared.initial, case.sources, label="energy")
        write_energy_csv(trajectory.reports, config.output_dir / "energy.csv")
        return prepared, trajectory

    outcome = run_check("integrate", integrate)
    if not outcome["passed"]:
        return [outcome]
    prepared, trajectory = outcome["result"]
    return energy_suite(prepared, trajectory)


def _converge(config: RunConfig) -> Dict[str, Any]:
    case = config.case()
    _require(case.exact is not None, f"scenario kind {case.kind!r} has no exact solution to converge to")
    table = convergence_study(case, config.scenario.levels)
    write_table_csv(table.as_records(), CONVERGENCE_COLUMNS, config.output_dir / "convergence.csv")
    if case.kind == "manufactured":
        if case.grid.dim == 2:
            for name, target in ORDER_TARGETS.items():
                observed = table.order(name)
                _require(observed is not None and observed >= target,
                         f"observed order of {name} is {observed} (needs ≥ {target})")
        else:
            coarse, fine = table.rows[-2], table.rows[-1]
            factor = coarse.errors["p"] / fine.errors["p"] if fine.errors["p"] > 0 else float("inf")
            _require(factor >= REDUCTION_TARGET_3D, f"p error reduced by {factor:.2f} (needs ≥ {REDUCTION_TARGET_3D})")
    return {"orders": table.rows[-1].orders, "finest_errors": table.rows[-1].errors}


def command_study_converge(config: RunConfig) -> List[Dict[str, Any]]:
    return [run_check("converge", _converge, config)]


def _storage(config: RunConfig) -> Dict[str, Any]:
    table = vanishing_storage_study(config.case(), config.scenario.c0_list)
    records = [{"c0": c0, "distance": d} for c0, d in zip(table.c0, table.distance)]
    write_table_csv(records, ("c0", "distance"), config.output_dir / "storage.csv")
    ordered = [d for c0, d in sorted(zip(table.c0, table.distance), reverse=True) if c0 > 0]
    _require(all(a > b for a, b in zip(ordered[:-1], ordered[1:])),
             f"distances do not decrease with c0: {ordered}")
    return {"c0": table.c0, "distance": table.distance}


def command_study_storage(config: RunConfig) -> List[Dict[str, Any]]:
    return [run_check("storage", _storage, config)]


def _dependence(config: RunConfig) -> Dict[str, Any]:
    scenario = config.scenario
    table = continuous_dependence_study(config.case(), scenario.deltas, scenario.perturb, scenario.seed)
    records = [
        {"delta": delta, "difference": diff, "constant": c}
        for delta, diff, c in zip(table.deltas, table.differences, table.constants)
    ]
    write_table_csv(records, ("delta", "difference", "constant"), config.output_dir / "dependence.csv")
    _require(table.spread <= DEPENDENCE_SPREAD, f"dependence constant spread {table.spread:.3e} above {DEPENDENCE_SPREAD}")
    return {"mode": table.mode, "constants": table.constants, "spread": table.spread}


def command_study_dependence(config: RunConfig) -> List[Dict[str, Any]]:
    return [run_check("dependence", _dependence, config)]


def _uniqueness(config: RunConfig) -> Dict[str, Any]:
    report = uniqueness_probe(config.case(), config.scenario.seed)
    _require(report.zero_data_sup_norm <= ZERO_DATA_TOL,
             f"zero data produced a state of norm {report.zero_data_sup_norm:.3e}")
    _require(report.permuted_max_difference <= PERMUTED_TOL,
             f"permuted solve differs by {report.permuted_max_difference:.3e}")
    _require(report.rerun_identical, "identical reruns differ")
    return {
        "zero_data_sup_norm": report.zero_data_sup_norm,
        "permuted_max_difference": report.permuted_max_difference,
        "rerun_identical": report.rerun_identical,
    }


def command_probe_uniqueness(config: RunConfig) -> List[Dict[str, Any]]:
    return [run_check("uniqueness", _uniqueness, config)]


COMMANDS: Dict[tuple, Callable[[RunConfig], List[Dict[str, Any]]]] = {
    ("run", None): command_run,
    ("verify", "adjoint"): command_verify_adjoint,
    ("verify", "energy"): command_verify_energy,
    ("study", "converge"): command_study_converge,
    ("study", "storage"): command_study_storage,
    ("study", "dependence"): command_study_dependence,
    ("probe", "uniqueness"): command_probe_uniqueness,
}


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biot-stokes",
        description="Coupled Biot-Stokes simulator and discrete operator verification lab.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="Time integration with energy and field output.")
    run_parser.add_argument("config", type=Path, help="Run configuration file.")

    groups = {
        "verify": ("Verification suites.", ("adjoint", "energy")),
        "study": ("Parameter studies.", ("converge", "storage", "dependence")),
        "probe": ("Uniqueness probe.", ("uniqueness",)),
    }
    for name, (help_text, actions) in groups.items():
        group = commands.add_parser(name, help=help_text)
        sub = group.add_subparsers(dest="action", required=True)
        for action in actions:
            action_parser = sub.add_parser(action)
            action_parser.add_argument("config", type=Path, help="Run configuration file.")
    return parser


def _configure_logging() -> None:
    logging.basicConfig(
        level=getattr(logging, get_log_level(), logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _label(args: argparse.Namespace) -> str:
    action = getattr(args, "action", None)
    return args.command if action is None else f"{args.command} {action}"


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    _configure_logging()
    args = build_parser().parse_args(argv)
    label = _label(args)

    try:
        config = load_config(args.config)
    except (ParseError, ConfigValidationError, IoError) as err:
        print(json.dumps({"command": label, "passed": False, "error": type(err).__name__, "detail": str(err)}),
              file=sys.stderr)
        return EXIT_USAGE

    out = config.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        print(json.dumps({"command": label, "passed": False, "error": "IoError", "detail": str(err)}),
              file=sys.stderr)
        return EXIT_FAILED
    tracker = get_tracker()
    tracker.set_stats_file(out / "solver_stats.json")
    get_report_logger().set_output_dir(out)

    handler = COMMANDS[(args.command, getattr(args, "action", None))]
    outcomes = handler(config)
    tracker.save_stats()

    summary = {"command": label, "passed": all(o["passed"] for o in outcomes), "checks": outcomes}
    get_report_logger().log_report(label.replace(" ", "_"), summary)
    if not summary["passed"]:
        failures = [o for o in outcomes if not o["passed"]]
        print(json.dumps(to_builtin({"command": label, "passed": False, "failures": failures})), file=sys.stderr)
        return EXIT_FAILED
    print(json.dumps(to_builtin({"command": label, "passed": True, "checks": [o["check"] for o in outcomes]})))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
