"""Field-level corruption of clean records.

Every record receives a fixed number of errors spread over distinct fields
(a field takes at most two).  Each error's kind is drawn uniformly from the
kinds allowed for that field which would actually change the current value.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..datastore import FileCollection
from .generate import _read_csv, _read_text

LETTERS = "abcdefghijklmnopqrstuvwxyz"
DIGITS = "0123456789"

FIELD_ERRORS = {
    "sex": ("missing",),
    "given_name": ("edit", "ocr", "keyboard", "phonetic"),
    "family_name": ("edit", "ocr", "keyboard", "phonetic", "misspelling"),
    "age": ("missing",),
    "occupation": ("missing",),
    "postal_code": ("missing", "edit", "ocr", "keyboard"),
    "phone": ("missing", "edit", "ocr", "keyboard"),
}
NUMERIC_FIELDS = {"postal_code", "phone"}

# per-file plan with fields set missing and fields receiving up to seven errors
UNEQUAL_PLAN = (
    {"missing": ("age",), "noisy": ("given_name",)},
    {"missing": ("sex", "occupation"), "noisy": ("family_name",)},
    {"missing": (), "noisy": ("phone", "postal_code")},
)


@lru_cache(maxsize=None)
def _tables() -> dict:
    ocr = [tuple(ln.split("\t")) for ln in _read_text("ocr_confusions.txt")]
    ocr = ocr + [(b, a) for a, b in ocr]
    phon = [tuple(ln.split("\t")) for ln in _read_text("phonetic_rules.txt")]
    phon = phon + [(b, a) for a, b in phon]
    rows = _read_text("keyboard.txt")
    nbrs: dict[str, set[str]] = {}
    for ri, row in enumerate(rows):
        for ci, ch in enumerate(row):
            s = nbrs.setdefault(ch, set())
            if ci > 0:
                s.add(row[ci - 1])
            if ci + 1 < len(row):
                s.add(row[ci + 1])
            for rj in (ri - 1, ri + 1):
                # vertical neighbours only within the same block (letters or digits)
                if 0 <= rj < len(rows) and rows[rj][0].isdigit() == ch.isdigit() and ci < len(rows[rj]):
                    s.add(rows[rj][ci])
    miss: dict[str, list[str]] = {}
    for r in _read_csv("misspellings.csv"):
        miss.setdefault(r["name"], []).append(r["misspelling"])
    return {"ocr": ocr, "phonetic": phon, "keyboard": {k: sorted(v) for k, v in nbrs.items()},
            "misspelling": miss}


def _edit(value: str, alphabet: str, rng) -> str:
    op = rng.integers(3) if len(value) > 1 else rng.choice([0, 2])
    pos = int(rng.integers(len(value) + (op == 0)))
    if op == 0:
        return value[:pos] + alphabet[rng.integers(len(alphabet))] + value[pos:]
    if op == 1:
        return value[:pos] + value[pos + 1:]
    choices = [c for c in alphabet if c != value[pos]]
    return value[:pos] + choices[rng.integers(len(choices))] + value[pos + 1:]


def _substring_options(value: str, rules) -> list[tuple[int, str, str]]:
    out = []
    for src, dst in rules:
        start = value.find(src)
        while start >= 0:
            out.append((start, src, dst))
            start = value.find(src, start + 1)
    return out


def _options(kind: str, value, name: str) -> list:
    """Ways an error of ``kind`` can change ``value`` (empty = not applicable)."""
    if value is None:
        return []
    if kind == "missing":
        return [None]
    if kind == "edit":
        return ["edit"] if isinstance(value, str) else []
    t = _tables()
    if kind in ("ocr", "phonetic"):
        return _substring_options(value, t[kind])
    if kind == "keyboard":
        return [(i, ch, n) for i, ch in enumerate(value) for n in t["keyboard"].get(ch, [])]
    if kind == "misspelling":
        return list(t["misspelling"].get(value, []))
    raise ValueError(f"unknown error kind {kind!r}")


def apply_error(value, field_name: str, rng: np.random.Generator, kinds=None):
    """Apply one error of a kind drawn among those that can change ``value``.

    Returns ``(new_value, kind)``; kind is ``None`` when nothing applies.
    """
    kinds = FIELD_ERRORS[field_name] if kinds is None else kinds
    usable = [(k, opts) for k in kinds if (opts := _options(k, value, field_name))]
    if not usable:
        return value, None
    kind, opts = usable[rng.integers(len(usable))]
    if kind == "missing":
        return None, kind
    if kind == "edit":
        alphabet = DIGITS if field_name in NUMERIC_FIELDS else LETTERS
        return _edit(value, alphabet, rng), kind
    if kind == "misspelling":
        return opts[rng.integers(len(opts))], kind
    pos, src, dst = opts[rng.integers(len(opts))]
    return value[:pos] + dst + value[pos + len(src):], kind


@dataclass(frozen=True)
class DistortionModel:
    """``errors`` erroneous fields per record, at most ``cap`` errors per field.

    ``plan="unequal"`` ignores ``errors`` and applies the per-file scheme in
    ``UNEQUAL_PLAN``: listed fields set missing, noisy fields receiving a
    uniform 0..7 number of errors.
    """

    errors: int = 1
    cap: int = 2
    plan: str = "equal"
    field_errors: dict = field(default_factory=lambda: dict(FIELD_ERRORS))

    def __post_init__(self):
        if self.errors < 0:
            raise ValueError("errors per record must be >= 0")
        if self.plan not in ("equal", "unequal"):
            raise ValueError(f"unknown distortion plan {self.plan!r}")
        if self.plan == "equal" and self.errors > self.max_errors():
            raise ValueError(f"at most {self.max_errors()} errors fit under the per-field cap")

    def field_cap(self, name: str) -> int:
        return 1 if self.field_errors[name] == ("missing",) else self.cap

    def max_errors(self) -> int:
        return sum(self.field_cap(f) for f in self.field_errors)


def error_allocation(model: DistortionModel, names: list[str], rng: np.random.Generator) -> np.ndarray:
    """Number of errors per field for one record.

    The first ``min(E, F)`` errors go to distinct fields drawn uniformly
    without replacement; any surplus goes one at a time to fields still under
    their cap.
    """
    eligible = [i for i, n in enumerate(names) if n in model.field_errors]
    counts = np.zeros(len(names), dtype=np.int64)
    first = min(model.errors, len(eligible))
    chosen = rng.choice(len(eligible), size=first, replace=False) if first else []
    for c in chosen:
        counts[eligible[c]] += 1
    for _ in range(model.errors - first):
        room = [i for i in eligible if counts[i] < model.field_cap(names[i])]
        counts[room[rng.integers(len(room))]] += 1
    return counts


def _distort_field(value, name, n_err, model: DistortionModel, rng):
    kinds = model.field_errors[name]
    # a missing value absorbs any later error, so draw it last
    for e in range(n_err):
        allowed = kinds if e == n_err - 1 else tuple(k for k in kinds if k != "missing") or kinds
        value, _ = apply_error(value, name, rng, allowed)
    return value


def distort(files: FileCollection, model: DistortionModel, rng: np.random.Generator) -> FileCollection:
    """A corrupted copy of ``files``; the input is left untouched."""
    out = copy.deepcopy(files)
    names = out.schema.names
    for k, f in enumerate(out.files):
        for row in f.rows:
            if model.plan == "unequal":
                plan = UNEQUAL_PLAN[k % len(UNEQUAL_PLAN)]
                for name in plan["missing"]:
                    row[names.index(name)] = None
                for name in plan["noisy"]:
                    i = names.index(name)
                    for _ in range(int(rng.integers(0, 8))):
                        row[i], _k = apply_error(row[i], name, rng,
                                                 tuple(x for x in model.field_errors[name] if x != "missing"))
                continue
            counts = error_allocation(model, names, rng)
            for i in np.flatnonzero(counts):
                row[i] = _distort_field(row[i], names[i], int(counts[i]), model, rng)
    return out
