"""Build data/adult.csv and data/german.csv from the raw UCI files.

The raw files are the unmodified UCI distributions (adult.data, adult.test,
german.data). Usage::

    python scripts/prepare_data.py RAW_DIR OUT_DIR

RAW_DIR must contain adult.data, adult.test and german.data. Rows with
missing markers are kept as '?'; the loader drops them.
"""
import csv
import sys
from pathlib import Path

ADULT_COLUMNS = [
    "Age", "Workclass", "fnlwgt", "Education", "Education-Num",
    "Marital Status", "Occupation", "Relationship", "Race", "Sex",
    "Capital Gain", "Capital Loss", "Hours per week", "Country", "Income",
]

GERMAN_COLUMNS = [
    "existingchecking", "duration", "credithistory", "purpose",
    "creditamount", "savings", "employmentsince", "installmentrate",
    "statussex", "otherdebtors", "residencesince", "property", "age",
    "otherinstallmentplans", "housing", "existingcredits", "job",
    "peopleliable", "telephone", "foreignworker", "classification",
]


def adult_rows(path):
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            fields = [f.strip() for f in line.split(",")]
            fields[-1] = fields[-1].rstrip(".")
            yield fields


def main(raw_dir, out_dir):
    raw_dir, out_dir = Path(raw_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "adult.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ADULT_COLUMNS)
        for name in ("adult.data", "adult.test"):
            writer.writerows(adult_rows(raw_dir / name))

    with open(out_dir / "german.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GERMAN_COLUMNS)
        with open(raw_dir / "german.data") as src:
            for line in src:
                if line.strip():
                    writer.writerow(line.split())


if __name__ == "__main__":
    main(*sys.argv[1:3])
