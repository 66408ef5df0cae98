"""Brute-force references for the metric functions.

Each oracle works on rendered bit strings with sets and loops, so it shares no
code path with the integer and numpy implementations it checks.
"""

from __future__ import annotations

import math
from typing import List, Optional, Sequence

from qcsc_telemetry import BitstringSet


def _unique_strings(strings: BitstringSet) -> List[str]:
    return list(dict.fromkeys(strings.render_rows()))


def carryover_acquisition_oracle(prev: Optional[BitstringSet], cur: BitstringSet) -> Optional[int]:
    if prev is None:
        return None
    previous = set(_unique_strings(prev))
    return sum(1 for text in _unique_strings(cur) if text not in previous)


def sample_preservation_oracle(raw: BitstringSet, recovered: BitstringSet) -> float:
    raw_strings = set(_unique_strings(raw))
    recovered_strings = _unique_strings(recovered)
    kept = sum(1 for text in recovered_strings if text in raw_strings)
    return kept / len(recovered_strings)


def hamming_to_rhf_oracle(strings: BitstringSet, n_e: int) -> float:
    width = strings.num_bits
    # rendered strings put orbital 0 rightmost
    reference = "0" * (width - n_e) + "1" * n_e
    distances = [
        sum(1 for a, b in zip(text, reference) if a != b) for text in strings.render_rows()
    ]
    return sum(distances) / len(distances)


def parameter_convergence_oracle(thetas: Sequence[Sequence[float]]) -> float:
    total = 0.0
    pairs = 0
    for a in range(len(thetas)):
        for b in range(a + 1, len(thetas)):
            total += math.sqrt(sum((x - y) ** 2 for x, y in zip(thetas[a], thetas[b])))
            pairs += 1
    return total / pairs
