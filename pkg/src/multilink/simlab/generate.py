"""Clean synthetic records with known entity membership."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from ..datastore import DataFile, FileCollection, Schema
from ..partition import canonical_labels
from .scenarios import OverlapScenario

SIM_SCHEMA = Schema.from_pairs([
    ("sex", "categorical"),
    ("given_name", "string"),
    ("family_name", "string"),
    ("age", "integer"),
    ("occupation", "categorical"),
    ("postal_code", "string"),
    ("phone", "string"),
])


def _read_text(name: str) -> list[str]:
    text = resources.files(__package__).joinpath("data", name).read_text(encoding="utf-8")
    return [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def _read_csv(name: str) -> list[dict]:
    return list(csv.DictReader(_read_text(name)))


@lru_cache(maxsize=None)
def lookup_tables() -> dict:
    given = {"f": [], "m": []}
    for row in _read_csv("given_names.csv"):
        given[row["sex"]].append(row["name"])
    occ = [(r["occupation"], int(r["min_age"]), int(r["max_age"])) for r in _read_csv("occupations.csv")]
    regions = [(r["postal_prefix"], r["area_code"]) for r in _read_csv("regions.csv")]
    return {"given": given, "family": _read_text("family_names.txt"), "occupations": occ,
            "regions": regions}


def base_record(rng: np.random.Generator) -> list:
    """One clean record; given name follows sex, occupation follows age, phone area follows postal region."""
    t = lookup_tables()
    sex = "f" if rng.random() < 0.5 else "m"
    given = t["given"][sex][rng.integers(len(t["given"][sex]))]
    family = t["family"][rng.integers(len(t["family"]))]
    age = int(rng.integers(16, 91))
    jobs = [o for o, lo, hi in t["occupations"] if lo <= age <= hi]
    occupation = jobs[rng.integers(len(jobs))]
    prefix, area = t["regions"][rng.integers(len(t["regions"]))]
    postal = prefix + "".join(map(str, rng.integers(0, 10, 3)))
    phone = area + "".join(map(str, rng.integers(0, 10, 7)))
    return [sex, given, family, age, occupation, postal, phone]


def truncated_poisson(mean: float, upper: int, rng: np.random.Generator, size: int) -> np.ndarray:
    s = np.arange(1, upper + 1)
    logw = s * np.log(mean) - np.cumsum(np.log(s))
    w = np.exp(logw - logw.max())
    return rng.choice(s, size=size, p=w / w.sum())


@dataclass
class SimulatedData:
    files: FileCollection
    truth: np.ndarray          # canonical entity label per record (global order)
    patterns: np.ndarray       # inclusion pattern of each entity
    n_entities: int


def generate_truth(scenario: OverlapScenario, rng: np.random.Generator) -> SimulatedData:
    """Entities, their file memberships and per-file record copies (not yet distorted).

    Each file's records are shuffled so copies of one entity are not adjacent.
    """
    K = scenario.K
    p = scenario.probability_vector()
    patterns = rng.choice(len(p), size=scenario.n, p=p)
    bases = [base_record(rng) for _ in range(scenario.n)]
    files, labels = [], []
    for k in range(K):
        ents = np.flatnonzero((patterns >> k) & 1)
        if scenario.duplicate_free:
            counts = np.ones(len(ents), dtype=np.int64)
        else:
            counts = truncated_poisson(scenario.duplicate_mean, scenario.max_duplicates, rng, len(ents))
        ent_of_row = np.repeat(ents, counts)
        ent_of_row = ent_of_row[rng.permutation(len(ent_of_row))]
        rows = [list(bases[e]) for e in ent_of_row]
        files.append(DataFile(f"file{k + 1}", rows, scenario.duplicate_free))
        labels.append(ent_of_row)
    truth = canonical_labels(np.concatenate(labels)) if labels else np.zeros(0, dtype=np.int64)
    return SimulatedData(FileCollection(SIM_SCHEMA, files), truth, patterns, int(scenario.n))
