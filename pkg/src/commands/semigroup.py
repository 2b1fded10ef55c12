"""Semigroup Command - Restart deviations of the selected semiflow"""

import argparse
import itertools
import logging

from src.components.experiment_config import ExperimentConfig
from src.components.run_recorder import RunRecorder
from src.components.selection import restricted_semigroup_check, semigroup_sweep

logger = logging.getLogger(__name__)


def time_pairs(config: ExperimentConfig, args: argparse.Namespace) -> list[tuple[float, float]]:
    """--t1/--t2 override the configured lists; pairs are their product"""
    s = config["semigroup"]
    t1 = [args.t1] if getattr(args, "t1", None) is not None else s["t1"]
    t2 = [args.t2] if getattr(args, "t2", None) is not None else s["t2"]
    return [(float(a), float(b)) for a, b in itertools.product(t1, t2)]


def run(config: ExperimentConfig, args: argparse.Namespace, recorder: RunRecorder) -> int:
    """Exit code 0 iff every checked pair deviates by at most semigroup.tolerance"""
    data = config.build_data()
    system = config.build_system()
    selector = config.build_selector(data.E0)
    tolerance = float(config["semigroup"]["tolerance"])
    pairs = time_pairs(config, args)
    restricted = bool(getattr(args, "restricted", False))

    full_measure = None
    if restricted:
        records, full_measure = restricted_semigroup_check(
            selector, system, data.rho0, data.m0, config.build_law(), pairs,
            eta=float(config["semigroup"]["eta"]), tolerance=tolerance,
        )
    else:
        records = semigroup_sweep(selector, system, data, pairs, tolerance)
    recorder.update_progress("pairs", len(pairs), len(pairs))

    checked = [r for r in records if r.status == "checked"]
    skipped = [r for r in records if r.status != "checked"]
    if skipped:
        logger.warning(f"{len(skipped)} pairs lie outside the full-measure time set and were not checked")
    deviations = [r.deviation for r in checked]
    passed = all(r.passed for r in checked)

    report = {
        "system": config.system,
        "restricted": restricted,
        "passed": passed,
        "pairs": [r.to_dict() for r in records],
        "summary": {
            "checked": len(checked),
            "skipped": len(skipped),
            "max_deviation": max(deviations) if deviations else None,
            "mean_deviation": sum(deviations) / len(deviations) if deviations else None,
        },
    }
    if full_measure is not None:
        report["full_measure"] = full_measure.to_dict()
    recorder.write_report(report, config.tolerances())
    return 0 if passed else 1
