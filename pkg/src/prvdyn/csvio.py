"""CSV output shared by all writers: LF endings, 17 significant digits."""
from __future__ import annotations

import csv


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, int)) and not isinstance(v, float):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, columns, rows, header_lines=(), footer_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
        for line in footer_lines:
            fh.write(f"# {line}\n")


def read_csv(path):
    """(columns, rows of strings), skipping comment lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
