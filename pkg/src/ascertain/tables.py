"""Contingency tables of list-membership patterns.

A capture pattern is a string of J characters '0'/'1', list 1 first
("101" means caught by lists 1 and 3). Patterns are ordered
lexicographically, which coincides with the numeric order of their binary
values, so serialized tables are deterministic. A table stores one count
per pattern for one exposure group and is either complete or missing the
all-zero cell (the never-ascertained individuals).
"""

import csv
import dataclasses
import io

import numpy as np

from .errors import ValidationError


def pattern_bits(J):
    """(2^J, J) matrix whose row c holds the binary digits of c, list 1
    as the most significant bit."""
    idx = np.arange(1 << J)
    return ((idx[:, None] >> (J - 1 - np.arange(J))[None, :]) & 1).astype(float)


def pattern_index(pattern):
    """Cell index of a pattern string."""
    if not pattern or any(ch not in "01" for ch in pattern):
        raise ValidationError(f"malformed pattern {pattern!r}: expected a 0/1 string")
    return int(pattern, 2)


def index_pattern(index, J):
    return format(index, f"0{J}b")


@dataclasses.dataclass(frozen=True)
class RecordRow:
    """One matched individual: exposure group label plus J membership flags."""

    exposure: str
    memberships: tuple


@dataclasses.dataclass(frozen=True)
class ContingencyTable:
    """Counts per capture pattern for one exposure group.

    ``counts`` always has length 2^J; for an incomplete table slot 0 (the
    all-zero pattern) is identically zero and carries no information.
    """

    J: int
    counts: np.ndarray
    complete: bool
    exposure: str = ""
    list_names: tuple = ()

    def __post_init__(self):
        if self.J < 1:
            raise ValidationError("J must be at least 1")
        counts = np.asarray(self.counts, dtype=float)
        if counts.shape != (1 << self.J,):
            raise ValidationError(
                f"counts must have length 2^J = {1 << self.J}, got {counts.shape}"
            )
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ValidationError("counts must be finite and non-negative")
        if not self.complete and counts[0] != 0:
            raise ValidationError("incomplete table cannot carry an all-zero-pattern count")
        if self.list_names and len(self.list_names) != self.J:
            raise ValidationError("list_names must have one entry per list")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "list_names", tuple(self.list_names))

    @classmethod
    def from_counts(cls, counts_by_pattern, J, complete=False, exposure="", list_names=()):
        counts = np.zeros(1 << J)
        for pattern, count in counts_by_pattern.items():
            if len(pattern) != J:
                raise ValidationError(
                    f"pattern {pattern!r} has {len(pattern)} bits, expected {J}"
                )
            counts[pattern_index(pattern)] = count
        if float(counts.sum()) != float(np.rint(counts).sum()) or np.any(
            counts != np.rint(counts)
        ):
            raise ValidationError("counts must be integers")
        return cls(J=J, counts=counts, complete=complete, exposure=exposure, list_names=list_names)

    @property
    def total_observed(self):
        """Sum of stored counts (for a complete table this is N)."""
        return float(self.counts.sum())

    def counts_by_pattern(self):
        start = 0 if self.complete else 1
        return {
            index_pattern(c, self.J): float(self.counts[c])
            for c in range(start, 1 << self.J)
        }

    def with_missing_cell(self, count):
        """Complete copy of an incomplete table with the all-zero cell filled."""
        if self.complete:
            raise ValidationError("table is already complete")
        counts = self.counts.copy()
        counts[0] = count
        return dataclasses.replace(self, counts=counts, complete=True)

    def without_missing_cell(self):
        counts = self.counts.copy()
        counts[0] = 0.0
        return dataclasses.replace(self, counts=counts, complete=False)


def aggregate(records, J):
    """Build per-group incomplete tables by counting record patterns.

    Records of observed individuals can never have an all-zero pattern;
    such rows are rejected with their position.
    """
    counts = {}
    for i, rec in enumerate(records):
        flags = tuple(int(v) for v in rec.memberships)
        if len(flags) != J:
            raise ValidationError(f"record {i}: expected {J} membership flags, got {len(flags)}")
        if any(v not in (0, 1) for v in flags):
            raise ValidationError(f"record {i}: membership flags must be 0 or 1")
        if not any(flags):
            raise ValidationError(f"record {i}: observed record cannot have all-zero memberships")
        grp = counts.setdefault(rec.exposure, np.zeros(1 << J))
        grp[int("".join(str(v) for v in flags), 2)] += 1
    return {
        label: ContingencyTable(J=J, counts=c, complete=False, exposure=label)
        for label, c in counts.items()
    }


def totals(table):
    """Total observed count of a table."""
    return int(round(table.total_observed))


def as_pair(tables, exposed_label=None):
    """Split a label->table map into (exposed, unexposed).

    With two groups and no explicit label, the exposed group is the one
    labeled 'E' (or 'exposed'); anything else is ambiguous.
    """
    if len(tables) != 2:
        raise ValidationError(f"expected exactly 2 exposure groups, got {len(tables)}")
    labels = list(tables)
    if exposed_label is None:
        for cand in ("E", "exposed"):
            if cand in tables:
                exposed_label = cand
                break
        else:
            raise ValidationError(
                f"cannot tell which of {labels} is the exposed group; pass exposed_label"
            )
    if exposed_label not in tables:
        raise ValidationError(f"exposed label {exposed_label!r} not among groups {labels}")
    other = labels[1 - labels.index(exposed_label)]
    return tables[exposed_label], tables[other]


def _open_rows(text):
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rows.append((lineno, next(csv.reader(io.StringIO(line)))))
    return rows


def _list_names_comment(text):
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("#") and "lists:" in line:
            names = line.split("lists:", 1)[1].strip()
            return tuple(n.strip() for n in names.split(","))
    return ()


def read_tables_csv(text):
    """Parse either CSV schema into a label->table map.

    Record schema: header ``exposure,list1,...,listJ``, one row per
    individual. Aggregated schema: header ``exposure,pattern,count``.
    Aggregated input may include the all-zero pattern, yielding complete
    tables; absent, the tables are marked missing-all-zero.
    """
    rows = _open_rows(text)
    if not rows:
        return {}
    list_names = _list_names_comment(text)
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    if header[:1] != ["exposure"]:
        raise ValidationError(f"line {header_line}: first column must be 'exposure'")
    if header[1:3] == ["pattern", "count"]:
        return _read_aggregated(rows[1:], list_names)
    if all(h.startswith("list") for h in header[1:]) and len(header) > 1:
        J = len(header) - 1
        records = []
        for lineno, row in rows[1:]:
            if len(row) != J + 1:
                raise ValidationError(f"line {lineno}: expected {J + 1} fields, got {len(row)}")
            flags = []
            for v in row[1:]:
                if v.strip() not in ("0", "1"):
                    raise ValidationError(f"line {lineno}: membership flags must be 0 or 1")
                flags.append(int(v))
            records.append(RecordRow(exposure=row[0].strip(), memberships=tuple(flags)))
        try:
            out = aggregate(records, J)
        except ValidationError as exc:
            raise ValidationError(f"record rows: {exc}") from exc
        if list_names:
            out = {
                k: dataclasses.replace(t, list_names=list_names) for k, t in out.items()
            }
        return out
    raise ValidationError(
        f"line {header_line}: unrecognized header {header}; expected "
        "'exposure,pattern,count' or 'exposure,list1,...,listJ'"
    )


def _read_aggregated(rows, list_names):
    by_group = {}
    J = None
    for lineno, row in rows:
        if len(row) != 3:
            raise ValidationError(f"line {lineno}: expected 3 fields, got {len(row)}")
        label, pattern, count = (v.strip() for v in row)
        if J is None:
            J = len(pattern)
        if len(pattern) != J:
            raise ValidationError(f"line {lineno}: pattern length differs from earlier rows")
        try:
            idx = pattern_index(pattern)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
        try:
            value = float(count)
        except ValueError:
            raise ValidationError(f"line {lineno}: count {count!r} is not a number") from None
        if value < 0 or value != round(value):
            raise ValidationError(f"line {lineno}: count must be a non-negative integer")
        grp = by_group.setdefault(label, {})
        if idx in grp:
            raise ValidationError(f"line {lineno}: duplicate pattern {pattern!r} for {label!r}")
        grp[idx] = value
    out = {}
    for label, cells in by_group.items():
        counts = np.zeros(1 << J)
        for idx, value in cells.items():
            counts[idx] = value
        out[label] = ContingencyTable(
            J=J,
            counts=counts,
            complete=0 in cells,
            exposure=label,
            list_names=list_names,
        )
    return out


def write_tables_csv(tables):
    """Serialize a label->table map in the aggregated schema."""
    out = io.StringIO()
    names = next((t.list_names for t in tables.values() if t.list_names), ())
    if names:
        out.write(f"# lists: {','.join(names)}\n")
    out.write("exposure,pattern,count\n")
    for label in sorted(tables):
        t = tables[label]
        for pattern, count in sorted(t.counts_by_pattern().items()):
            out.write(f"{label},{pattern},{int(count)}\n")
    return out.getvalue()
