"""Structured plain-text reports: ordered key = value lines plus embedded
CSV blocks. The format is diff-friendly and re-parseable, and rendering is
deterministic so a fixed seed gives a byte-identical file.
"""

import hashlib
import io
import csv as _csv

import numpy as np

from .errors import ValidationError


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Report:
    """Ordered collection of scalar entries and named CSV blocks."""

    def __init__(self):
        self._items = []  # ("kv", key, value) or ("csv", name, header, rows)

    def set(self, key, value):
        if "=" in key or "\n" in key or key.startswith("["):
            raise ValidationError(f"bad report key {key!r}")
        self._items.append(("kv", key, format_value(value)))
        return self

    def set_many(self, pairs):
        for k, v in pairs:
            self.set(k, v)
        return self

    def add_csv(self, name, header, rows):
        buf = io.StringIO()
        w = _csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
        self._items.append(("csv", name, buf.getvalue()))
        return self

    def render(self):
        out = []
        for item in self._items:
            if item[0] == "kv":
                out.append(f"{item[1]} = {item[2]}")
            else:
                out.append(f"[csv:{item[1]}]")
                out.append(item[2].rstrip("\n"))
                out.append("[/csv]")
        return "\n".join(out) + "\n"


def parse_report(text):
    """Recover scalars and CSV blocks from a rendered report.

    Scalars come back as float/bool/string; CSV blocks as lists of dicts
    keyed by the header row, with numeric fields converted.
    """
    scalars = {}
    blocks = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("[csv:"):
            name = line[len("[csv:"):-1]
            body = []
            i += 1
            while i < len(lines) and lines[i] != "[/csv]":
                body.append(lines[i])
                i += 1
            if i == len(lines):
                raise ValidationError(f"unterminated csv block {name!r}")
            reader = _csv.reader(body)
            rows = list(reader)
            header = rows[0]
            blocks[name] = [
                {h: _coerce(v) for h, v in zip(header, r)} for r in rows[1:]
            ]
        elif " = " in line:
            key, _, value = line.partition(" = ")
            scalars[key] = _coerce(value)
        elif line.strip():
            raise ValidationError(f"unparseable report line: {line!r}")
        i += 1
    return scalars, blocks


def _coerce(s):
    if s == "true":
        return True
    if s == "false":
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def sha256_hex(data):
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()
