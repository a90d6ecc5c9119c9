import csv
import json
import os
import platform
from datetime import datetime
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np
import scipy
from loguru import logger

CSV_HEADER = ["E", "root", "status", "ac", "sing", "kernel_dim", "rank", "dimS", "bound", "flags"]
CSV_VERSION = 1
PLOT_KINDS = ("im-trace", "density", "ratio-evidence")


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


class RunStore:
    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.evidence_dir = os.path.join(out_dir, "evidence")
        os.makedirs(self.evidence_dir, exist_ok=True)
        logger.info(f"Initialized RunStore in {self.out_dir}")

    @property
    def results_path(self) -> str:
        return os.path.join(self.out_dir, "results.csv")

    def write_results(self, rows: Iterable[Dict[str, Any]]) -> str:
        """Write results.csv in row order"""
        with open(self.results_path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in rows:
                writer.writerow([_fmt(row.get(col)) for col in CSV_HEADER])
        return self.results_path

    def write_evidence(self, name: str, payload: Any) -> str:
        filepath = os.path.join(self.evidence_dir, f"{name}.json")
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(_jsonable(payload), f, indent=2, ensure_ascii=False)
        return filepath

    def write_summary(self, lines: Sequence[str]) -> str:
        filepath = os.path.join(self.out_dir, "summary.txt")
        with open(filepath, 'w', encoding='utf-8') as f:
            f.write("\n".join(lines) + "\n")
        return filepath

    def write_meta(self, config: Dict[str, Any]) -> str:
        """Run metadata; kept apart from the deterministic artifacts"""
        filepath = os.path.join(self.out_dir, "run_meta.json")
        data = {
            "timestamp": datetime.now().isoformat(),
            "csv_version": CSV_VERSION,
            "config": _jsonable(config),
            "versions": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        }
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2)
        return filepath

    def write_plot_data(self, kind: str, pairs: Sequence[Tuple[float, float]]) -> str:
        """Two-column (E, value) text file"""
        if kind not in PLOT_KINDS:
            raise ValueError(f"unknown plot kind {kind!r}")
        if not len(pairs):
            raise ValueError(f"no data for plot kind {kind!r}")
        filepath = os.path.join(self.out_dir, f"{kind}.dat")
        with open(filepath, 'w', encoding='utf-8') as f:
            f.write(f"# E {kind}\n")
            for E, value in pairs:
                f.write(f"{E:.12g} {value:.12g}\n")
        return filepath

    def read_results(self) -> List[Dict[str, str]]:
        try:
            with open(self.results_path, 'r', encoding='utf-8', newline='') as f:
                return list(csv.DictReader(f))
        except Exception as e:
            logger.error(f"Error reading results: {str(e)}")
            return []
