"""Schema-checked reader for the delimited experiment outputs."""

import csv

CSV_MAGIC = "# rmfem-csv v1"


class SchemaError(Exception):
    """Raised with a line number when an input does not match the schema."""


def read_csv(path, required=()):
    """Read a versioned CSV into a list of dicts (floats where possible).

    Raises SchemaError with the offending line number on a bad magic
    line, missing columns, or ragged rows.
    """
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != CSV_MAGIC:
            raise SchemaError(f"{path}:1: expected '{CSV_MAGIC}', got '{first}'")
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}:2: missing header row") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}:2: missing columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, start=3):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, "
                                  f"got {len(row)}")
            rec = {}
            for key, val in zip(header, row):
                if val == "":
                    rec[key] = None
                else:
                    try:
                        rec[key] = float(val)
                    except ValueError:
                        rec[key] = val
            rows.append(rec)
    return rows


def column(rows, name):
    return [r[name] for r in rows]
