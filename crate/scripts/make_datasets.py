"""Regenerate the bundled benchmark CSVs under data/.

Wine and breast cancer come from scikit-learn's bundled copies of the UCI
files. Diabetes is the complete-case Pima Indians table (MASS Pima.tr +
Pima.te), passed as the directory holding those two CSVs.

    python scripts/make_datasets.py /path/to/MASS
"""
import csv
import sys
from pathlib import Path

from sklearn.datasets import load_breast_cancer, load_wine

OUT = Path(__file__).resolve().parent.parent / "data"


def write(name, header, rows):
    with open(OUT / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def from_sklearn(name, loader):
    bunch = loader()
    header = [h.replace(" ", "_").replace("/", "_") for h in bunch.feature_names] + ["label"]
    rows = [[repr(float(v)) for v in x] + [int(y)] for x, y in zip(bunch.data, bunch.target)]
    write(name, header, rows)


def pima(mass_dir):
    rows = []
    header = None
    for part in ("Pima.tr.csv", "Pima.te.csv"):
        with open(Path(mass_dir) / part) as fh:
            r = csv.reader(fh)
            head = next(r)
            header = head[1:-1] + ["label"]
            for rec in r:
                rows.append(rec[1:-1] + [1 if rec[-1] == "Yes" else 0])
    write("diabetes", header, rows)


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    from_sklearn("wine", load_wine)
    from_sklearn("breast_cancer", load_breast_cancer)
    if len(sys.argv) > 1:
        pima(sys.argv[1])
