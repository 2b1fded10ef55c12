"""Run Recorder - Output directory, run log, progress file and deterministic reports"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Optional

from .bundle_io import write_json

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class RunRecorder:
    """Owns the output directory of one CLI invocation"""

    def __init__(self, output_dir: str, command: str, config_hash: str, timestamped: bool = True):
        """Initialize the recorder

        Args:
            output_dir: Base output directory
            command: Subcommand name (verify, select, semigroup, convergence)
            config_hash: SHA-256 of the resolved config, embedded in every report
            timestamped: Create a run_<timestamp> subdirectory (False writes into output_dir)
        """
        self.command = command
        self.config_hash = config_hash
        self.output_dir = Path(output_dir)
        self.started = datetime.now()

        self.run_id = self.started.strftime(f"{command}_%Y%m%d_%H%M%S") if timestamped else command
        self.run_dir = self.output_dir / self.run_id if timestamped else self.output_dir
        self.run_dir.mkdir(parents=True, exist_ok=True)

        self.progress_file = self.run_dir / "progress.json"
        self.log_file = self.run_dir / "logs" / f"{command}.log"
        self._handler: Optional[logging.Handler] = None
        self.logger = self._setup_logging()

    def _setup_logging(self) -> logging.Logger:
        """Attach a file handler to the package logger for this run"""
        self.log_file.parent.mkdir(exist_ok=True)
        fh = logging.FileHandler(self.log_file)
        fh.setLevel(logging.DEBUG)
        fh.setFormatter(logging.Formatter(LOG_FORMAT))
        package = logging.getLogger("src")
        package.setLevel(logging.DEBUG)
        package.addHandler(fh)
        self._handler = fh

        logger = logging.getLogger(f"src.commands.{self.command}")
        logger.info(f"Starting run {self.run_id} (config {self.config_hash[:12]})")
        return logger

    def update_progress(self, stage: str, current: int, total: int) -> None:
        """Update progress file

        Args:
            stage: What is being counted
            current: Items done
            total: Items planned
        """
        progress_data = {
            "stage": stage,
            "current": current,
            "total": total,
            "timestamp": datetime.now().isoformat()
        }
        with open(self.progress_file, 'w') as f:
            json.dump(progress_data, f)

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def write_report(self, report: dict, tolerances: dict, name: str = "report.json") -> Path:
        """Write a deterministic report (sorted keys, no timestamps)

        Args:
            report: Command results
            tolerances: Tolerance set the results were judged with
            name: File name inside the run directory

        Returns:
            Path to the written report
        """
        payload = dict(report, command=self.command, config_hash=self.config_hash, tolerances=tolerances)
        path = self.run_dir / name
        write_json(path, payload)
        self.logger.info(f"Saved report to {path}")
        return path

    def close(self, passed: Optional[bool] = None, extra: Optional[dict] = None) -> Path:
        """Write metadata.json (timestamps, duration, outcome) and detach the log handler"""
        finished = datetime.now()
        metadata = {
            "run_id": self.run_id,
            "command": self.command,
            "config_hash": self.config_hash,
            "started_at": self.started.isoformat(),
            "finished_at": finished.isoformat(),
            "duration_seconds": (finished - self.started).total_seconds(),
            "passed": passed,
            "log_file": str(self.log_file.relative_to(self.run_dir)),
            **(extra or {}),
        }
        path = self.run_dir / "metadata.json"
        with open(path, 'w') as f:
            json.dump(metadata, f, indent=2)
        self.logger.info(f"Run finished: passed={passed}, {metadata['duration_seconds']:.1f}s")
        if self._handler is not None:
            logging.getLogger("src").removeHandler(self._handler)
            self._handler.close()
            self._handler = None
        return path
