import csv
import json
import math
import os
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ububu.errors import DataError
from ububu.estimator import EstimatorReport


@dataclass
class ResultRow:
    experiment: str
    model: str
    mode: str
    d: int
    kappa: float
    function: str
    estimate: float
    variance: float
    ess: float
    grads_per_ess: float
    ci_lo: float
    ci_hi: float
    work: float
    seed: int


COLUMNS = [f.name for f in fields(ResultRow)]
_TYPES = {f.name: f.type for f in fields(ResultRow)}


def _parse(name: str, value: str):
    kind = _TYPES[name]
    if kind is int or kind == "int":
        return int(value)
    if kind is float or kind == "float":
        return float(value)
    return value


def _write_provenance(f, provenance: Dict[str, object]) -> None:
    for key in sorted(provenance):
        f.write(f"# {key}={provenance[key]}\n")


def write_results(path: str, rows: Sequence[ResultRow], provenance: Dict[str, object]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        _write_provenance(f, provenance)
        writer = csv.DictWriter(f, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(row).items()})


def read_results(path: str) -> Tuple[Dict[str, str], List[ResultRow]]:
    provenance, lines = {}, []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line in f:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition("=")
                provenance[key] = value
            else:
                lines.append(line)
    rows = []
    for i, record in enumerate(csv.DictReader(lines), start=len(provenance) + 2):
        try:
            rows.append(ResultRow(**{name: _parse(name, record[name]) for name in COLUMNS}))
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{path}: malformed result row ({e})", row=i)
    return provenance, rows


def write_reports(path: str, reports: Sequence[EstimatorReport], provenance: Dict[str, object]) -> None:
    """Per-run reports with their difference samples, for re-analysis without re-running chains."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"provenance": provenance, "reports": [r.as_dict() for r in reports]}, f, sort_keys=True, indent=1)


def read_reports(path: str) -> Tuple[Dict[str, object], List[EstimatorReport]]:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return data["provenance"], [EstimatorReport.from_dict(r) for r in data["reports"]]


def write_table(path: str, columns: Sequence[str], rows: Sequence[Sequence], provenance: Dict[str, object]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        _write_provenance(f, provenance)
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def histogram(values: Sequence[float]) -> List[Tuple[float, float, int]]:
    """(bin lo, bin hi, count) with min(20, ⌊√n⌋) bins, at least one."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DataError("No values to bin")
    bins = max(1, min(20, int(math.sqrt(values.size))))
    counts, edges = np.histogram(values, bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def result_files(directory: str) -> List[str]:
    if not os.path.isdir(directory):
        raise DataError(f"{directory}: not a directory")
    paths = []
    for root, _, names in os.walk(directory):
        paths.extend(os.path.join(root, n) for n in names if n == "results.csv")
    if not paths:
        raise DataError(f"{directory}: no result files")
    return sorted(paths)
