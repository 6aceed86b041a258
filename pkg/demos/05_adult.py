"""The same experiment on UCI Adult (race x sex x education subgroups).

The commands below reproduce the tabular capacity comparison. The full
matrix trains about 180 models, so expect several minutes per core.

    poisonlab attack-matrix --config configs/adult.yaml --out runs/adult
    poisonlab delta --config configs/adult.yaml --out runs/adult-delta

This script prints the per-model summary of a finished run.

Run: python demos/05_adult.py runs/adult
"""

import csv
import sys
from pathlib import Path

run_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/adult")
path = run_dir / "model_summary.csv"
if not path.exists():
    sys.exit(f"{path} not found; run the attack-matrix command from the docstring first")

with open(path) as fh:
    rows = list(csv.DictReader(fh))
print(f"{'alpha':>5} {'model':<14} {'params':>7} {'td':>7} {'td (size-weighted)':>19}")
for r in rows:
    print(f"{float(r['alpha']):>5g} {r['model_tag']:<14} {r['param_count']:>7} "
          f"{float(r['td_mean']):>7.3f} {float(r['td_weighted_mean']):>19.3f}")
