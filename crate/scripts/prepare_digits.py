"""Write data/digits.csv from the copy of the UCI 8x8 optical digits set bundled with scikit-learn.

The raw set stores pixel levels 0..16; the emulator's loader accepts 0..15, so level 16 is clipped to 15.
Output rows: 64 comma-separated pixel levels (row-major) followed by the label, no header.
"""
import gzip
import os
import sys

import sklearn.datasets

src = os.path.join(os.path.dirname(sklearn.datasets.__file__), "data", "digits.csv.gz")
dst = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data", "digits.csv")

with gzip.open(src, "rt") as f, open(dst, "w") as out:
    for line in f:
        vals = [int(float(v)) for v in line.strip().split(",")]
        pixels = [min(v, 15) for v in vals[:64]]
        out.write(",".join(str(v) for v in pixels + [vals[64]]) + "\n")
