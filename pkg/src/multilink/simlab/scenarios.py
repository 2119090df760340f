"""Named overlap scenarios for three files."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..partition import pattern_string

SINGLES = ("100", "010", "001")
PAIRS = ("110", "101", "011")
TRIPLE = "111"


@dataclass(frozen=True)
class OverlapScenario:
    """Inclusion-pattern probabilities (keys written file by file) and entity count.

    ``duplicate_mean`` switches on within-file duplication: each entity's
    record count in an included file is Poisson(``duplicate_mean``)
    truncated to ``1..max_duplicates``.
    """

    name: str
    p: dict
    n: int = 500
    duplicate_mean: float | None = None
    max_duplicates: int = 5

    def __post_init__(self):
        probs = np.array(list(self.p.values()), dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-9:
            raise ValueError(f"scenario {self.name!r}: pattern probabilities must be >= 0 and sum to 1")
        K = {len(k) for k in self.p}
        if len(K) != 1:
            raise ValueError("all patterns must have the same length")
        if self.n < 1:
            raise ValueError("need at least one entity")

    @property
    def K(self) -> int:
        return len(next(iter(self.p)))

    @property
    def duplicate_free(self) -> bool:
        return self.duplicate_mean is None

    def probability_vector(self) -> np.ndarray:
        """Probabilities indexed by integer pattern (index 0 unused)."""
        out = np.zeros(2 ** self.K)
        for h in range(1, 2 ** self.K):
            out[h] = self.p.get(pattern_string(h, self.K), 0.0)
        return out

    def with_n(self, n: int) -> "OverlapScenario":
        return OverlapScenario(self.name, dict(self.p), n, self.duplicate_mean, self.max_duplicates)


def _three_file(singles: float, pairs: float, triple: float) -> dict:
    p = {h: singles for h in SINGLES}
    p.update({h: pairs for h in PAIRS})
    p[TRIPLE] = triple
    return p


def scenario_presets(n: int = 500, duplicate_mean: float = 0.1) -> dict[str, OverlapScenario]:
    return {
        "high": OverlapScenario("high", _three_file(0.4 / 3, 0.15, 0.15), n),
        "medium": OverlapScenario("medium", _three_file(0.7 / 3, 0.05, 0.15), n),
        "low": OverlapScenario("low", _three_file(0.8 / 3, 0.05 / 3, 0.15), n),
        "no-three-file": OverlapScenario("no-three-file", _three_file(0.55 / 3, 0.15, 0.0), n),
        "duplicates": OverlapScenario("duplicates", _three_file(0.3, 0.025, 0.025), n, duplicate_mean),
    }
