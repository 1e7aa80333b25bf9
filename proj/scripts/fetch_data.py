#!/usr/bin/env python3
"""Stage the adult income and COMPAS CSVs under data/.

The raw files are taken from the `responsibly` wheel, which bundles verbatim
copies of the UCI adult files and ProPublica's compas-scores-two-years.csv.
Adult files get a header row; the test file's banner line is removed.
"""
import io
import pathlib
import subprocess
import sys
import tempfile
import zipfile

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]


def main() -> int:
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data")
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "responsibly==0.1.2", "-d", tmp],
            check=True)
        wheel = next(pathlib.Path(tmp).glob("responsibly-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            root = "responsibly/dataset/"
            (out / "compas.csv").write_bytes(
                z.read(root + "compas/compas-scores-two-years.csv"))
            for name, dest in (("adult.data", "adult_train.csv"),
                               ("adult.test", "adult_test.csv")):
                text = z.read(root + "adult/" + name).decode("utf-8")
                lines = [l for l in text.splitlines()
                         if l.strip() and not l.startswith("|")]
                (out / dest).write_text(
                    ",".join(ADULT_COLUMNS) + "\n" + "\n".join(lines) + "\n")
    for f in sorted(out.glob("*.csv")):
        n = sum(1 for _ in io.open(f, encoding="utf-8")) - 1
        print(f"{f}: {n} rows")
    return 0


if __name__ == "__main__":
    sys.exit(main())
