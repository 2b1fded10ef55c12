"""Select Command - Candidate family, selection cascade, selected bundle and trace"""

import argparse
import logging

from src.components.bundle_io import save_trajectory
from src.components.experiment_config import ExperimentConfig
from src.components.run_recorder import RunRecorder
from src.components.selection import is_admissible

logger = logging.getLogger(__name__)


def run(config: ExperimentConfig, args: argparse.Namespace, recorder: RunRecorder) -> int:
    """Select one trajectory; exit code 1 if the trace is not nested or the choice is not admissible"""
    data = config.build_data()
    recorder.update_progress("candidates", 0, 1)
    members = config.build_system()(data)
    recorder.update_progress("candidates", 1, 1)
    logger.info(f"{len(members)} candidates: {members.ids}")

    selector = config.build_selector(data.E0)
    chosen = selector(members)
    trace = selector.last_trace

    admissible = is_admissible(chosen, list(members))
    nested = trace.is_nested()
    if not admissible:
        logger.error(f"Selected '{chosen.id}' is not minimal for the energy order")

    save_trajectory(chosen, recorder.path("selected"))
    with open(recorder.path("trace.json"), "w") as f:
        f.write(trace.to_json())
        f.write("\n")

    passed = admissible and nested
    report = {
        "system": config.system,
        "passed": passed,
        "candidates": members.ids,
        "selected_id": chosen.id,
        "admissible": admissible,
        "nested": nested,
        "selection_incomplete": trace.incomplete,
        "tail_sensitive_stages": trace.tail_sensitive_stages,
        "stages_run": len(trace.stages),
        "schedule": selector.schedule.to_dict(),
        "family": members.metadata,
    }
    recorder.write_report(report, config.tolerances())
    return 0 if passed else 1
