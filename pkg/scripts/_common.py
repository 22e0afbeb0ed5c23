"""Small helpers shared by the experiment scripts."""

import csv
import dataclasses
import sys


def write_tsv(rows, path=None):
    """Write dataclass rows as TSV to ``path`` or standard output."""
    rows = list(rows)
    if not rows:
        return
    fields = [f.name for f in dataclasses.fields(rows[0])]
    handle = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(handle, delimiter="\t", lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([getattr(r, f) for f in fields])
    finally:
        if path:
            handle.close()


def progress(done, total):
    print(f"{done}/{total}", file=sys.stderr, flush=True)
