"""Loading K delimited datafiles under a shared schema.

Records from all files are indexed consecutively: file 1 occupies global
indices ``0 .. r_1 - 1``, file 2 the next ``r_2`` indices and so on.  Global
indices are 0-based internally; every on-disk artifact writes them 1-based.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

FIELD_KINDS = ("string", "categorical", "integer")


class DataError(ValueError):
    """Raised for malformed or unreadable input data."""


@dataclass(frozen=True)
class FieldDef:
    name: str
    kind: str = "string"

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"field {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Schema:
    fields: tuple[FieldDef, ...]

    def __post_init__(self):
        if not self.fields:
            raise ValueError("schema needs at least one field")
        names = [f.name for f in self.fields]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValueError(f"duplicate field names in schema: {dupes}")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, str]]) -> "Schema":
        return cls(tuple(FieldDef(n, k) for n, k in pairs))

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.fields]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"field {name!r} not in schema") from None

    def __len__(self):
        return len(self.fields)


@dataclass
class DataFile:
    """One datafile: its rows are lists of parsed values, ``None`` = missing."""

    name: str
    rows: list[list]
    duplicate_free: bool = False

    def __len__(self):
        return len(self.rows)


@dataclass
class FileCollection:
    schema: Schema
    files: list[DataFile]
    file_of: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.files:
            raise DataError("no datafiles given")
        self.file_of = np.repeat(np.arange(self.K), self.sizes).astype(np.int64)

    @property
    def K(self) -> int:
        return len(self.files)

    @property
    def sizes(self) -> list[int]:
        return [len(f) for f in self.files]

    @property
    def r(self) -> int:
        return int(sum(self.sizes))

    @property
    def duplicate_free(self) -> list[bool]:
        return [f.duplicate_free for f in self.files]

    def offsets(self) -> list[int]:
        """Start index of each file's block of global indices."""
        out, acc = [], 0
        for n in self.sizes:
            out.append(acc)
            acc += n
        return out

    def index_range(self, k: int) -> range:
        start = self.offsets()[k]
        return range(start, start + self.sizes[k])

    def column(self, name: str) -> list:
        """Values of one field across all records, in global order."""
        j = self.schema.index(name)
        return [row[j] for f in self.files for row in f.rows]

    def missing_mask(self) -> np.ndarray:
        out = np.zeros((self.r, len(self.schema)), dtype=bool)
        i = 0
        for f in self.files:
            for row in f.rows:
                out[i] = [v is None for v in row]
                i += 1
        return out


def _parse_value(token: str, kind: str, missing: set[str], where: str):
    if token in missing:
        return None
    if kind == "integer":
        try:
            return int(token.strip())
        except ValueError:
            raise DataError(f"{where}: non-integer value {token!r} in integer field") from None
    return token


def read_file(path, schema: Schema, duplicate_free: bool = False, name: str | None = None,
              missing_token: str = "NA") -> DataFile:
    path = Path(path)
    missing = {"", missing_token}
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty datafile")
        if header != schema.names:
            raise DataError(f"{path}: header {header} does not match schema {schema.names}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(raw)}")
            rows.append([
                _parse_value(tok, fd.kind, missing, f"{path}:{lineno}:{fd.name}")
                for tok, fd in zip(raw, schema.fields)
            ])
    if not rows:
        raise DataError(f"{path}: empty datafile")
    return DataFile(name or path.stem, rows, duplicate_free)


def load_files(paths: Sequence, schema: Schema, duplicate_flags: Sequence[bool],
               names: Sequence[str] | None = None, missing_token: str = "NA") -> FileCollection:
    """Read K CSV files (header row must equal the schema field names)."""
    if len(paths) != len(duplicate_flags):
        raise ValueError("need one duplicate-free flag per file")
    names = names or [None] * len(paths)
    files = [read_file(p, schema, bool(d), n, missing_token)
             for p, d, n in zip(paths, duplicate_flags, names)]
    return FileCollection(schema, files)


def write_file(datafile: DataFile, schema: Schema, path, missing_token: str = "NA") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema.names)
        for row in datafile.rows:
            w.writerow([missing_token if v is None else v for v in row])


def write_files(files: FileCollection, directory, missing_token: str = "NA") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for f in files.files:
        p = directory / f"{f.name}.csv"
        write_file(f, files.schema, p, missing_token)
        paths.append(p)
    return paths
