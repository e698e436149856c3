#!/usr/bin/env python3
"""
Recompute pooled error statistics from a run directory's records.csv and
compare them with its summary.json
Run: python3 scripts/verify_summary.py data/results
"""

import json
import math
import sys
from pathlib import Path
from typing import List

import pandas as pd

TOLERANCE = 1e-12


def verify_run_directory(path) -> List[str]:
    """Return a list of mismatches (empty when the summary is consistent)"""
    path = Path(path)
    records = pd.read_csv(path / "records.csv")
    summary = json.loads((path / "summary.json").read_text())
    mismatches = []

    for entry in summary["estimators"]:
        name = entry["estimator"]
        errors = records[f"e_{name}"].dropna()
        expected = {
            "n_samples": int(errors.size),
            "pooled_std": float(errors.std(ddof=0)) if errors.size else None,
            "pooled_mean_abs": float(errors.abs().mean()) if errors.size else None,
        }
        for key, value in expected.items():
            reported = entry.get(key)
            if value is None or reported is None:
                ok = value == reported
            else:
                ok = math.isclose(value, reported, rel_tol=TOLERANCE, abs_tol=TOLERANCE)
            if not ok:
                mismatches.append(f"{name}.{key}: summary has {reported}, records give {value}")
    return mismatches


def main(argv: List[str]) -> int:
    if len(argv) != 1:
        print("Usage: verify_summary.py RUN_DIRECTORY")
        return 2
    mismatches = verify_run_directory(argv[0])
    if mismatches:
        print("❌ Summary does not match records:")
        for line in mismatches:
            print(f"  {line}")
        return 1
    print("✅ Summary matches records")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
