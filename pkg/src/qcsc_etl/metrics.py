"""Domain metrics as pure functions of stored artifacts.

Set metrics work on distinct strings; multiplicities of sampled multisets are
ignored.
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import Optional, Sequence, Tuple

import numpy as np

from qcsc_telemetry import BitstringSet

from .errors import MetricInputError

NORMALIZATION_TOL = 1e-10
FALLBACK_BINS = 20
MAX_BINS = 200


def _same_width(left: BitstringSet, right: BitstringSet) -> None:
    if left.num_bits != right.num_bits:
        raise MetricInputError(
            f"bitstring widths differ: {left.num_bits} vs {right.num_bits}"
        )


def carryover_acquisition(prev: Optional[BitstringSet], cur: BitstringSet) -> Optional[int]:
    """Number of carryover strings that were not carried over before.

    ``prev`` is None for the first generation, which has no predecessor; the
    metric is undefined there and None is returned.
    """

    if prev is None:
        return None
    _same_width(prev, cur)
    return len(cur.as_frozenset() - prev.as_frozenset())


def parameter_convergence(thetas: Sequence[Sequence[float]]) -> float:
    """Mean pairwise Euclidean distance between parameter vectors."""

    vectors = [np.asarray(theta, dtype=np.float64).reshape(-1) for theta in thetas]
    if len(vectors) < 2:
        raise MetricInputError("parameter convergence needs at least two vectors")
    if len({vector.size for vector in vectors}) != 1:
        raise MetricInputError("parameter vectors differ in dimension")
    distances = [float(np.linalg.norm(a - b)) for a, b in combinations(vectors, 2)]
    return math.fsum(distances) / len(distances)


def rhf_reference(n_e: int) -> int:
    return (1 << n_e) - 1


def hamming_to_rhf(strings: BitstringSet, n_e: int) -> float:
    """Mean Hamming distance of each string to the lowest-``n_e`` reference."""

    if not len(strings):
        raise MetricInputError("hamming distance of an empty set is undefined")
    if not 0 <= n_e <= strings.num_bits:
        raise MetricInputError(f"n_e={n_e} does not fit in {strings.num_bits} bits")
    reference = rhf_reference(n_e)
    total = sum((row ^ reference).bit_count() for row in strings.rows)
    return total / len(strings)


def sample_preservation(raw: BitstringSet, recovered: BitstringSet) -> float:
    """Share of distinct recovered strings that were already present in ``raw``."""

    _same_width(raw, recovered)
    recovered_set = recovered.as_frozenset()
    if not recovered_set:
        raise MetricInputError("sample preservation of an empty recovered set is undefined")
    return len(raw.as_frozenset() & recovered_set) / len(recovered_set)


def shot_retention(retained: int, shots: int) -> float:
    """Fraction of shots surviving post-selection."""

    if shots <= 0:
        raise MetricInputError("shot retention needs a positive shot count")
    if not 0 <= retained <= shots:
        raise MetricInputError("retained shots must lie between 0 and the shot count")
    return retained / shots


def avg_occupancy(
    basis: Sequence[Tuple[int, int]], amplitudes: Sequence[float], n_orb: int
) -> np.ndarray:
    """Spatial-orbital occupation numbers of the state ``sum_i c_i |det_i>``."""

    c = np.asarray(amplitudes, dtype=np.float64).reshape(-1)
    if c.size != len(basis):
        raise MetricInputError("amplitudes and basis differ in length")
    weights = np.square(c)
    if abs(weights.sum() - 1.0) > NORMALIZATION_TOL:
        raise MetricInputError(f"amplitudes are not normalized (sum |c|^2 = {weights.sum():.12f})")
    bits = np.arange(n_orb)
    occupancy = np.zeros(n_orb)
    for weight, (alpha, beta) in zip(weights, basis):
        occupancy += weight * (((int(alpha) >> bits) & 1) + ((int(beta) >> bits) & 1))
    return occupancy


def histogram(values: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Counts and bin edges with Freedman-Diaconis binning.

    Degenerate samples (zero interquartile range, a single value) and heavy
    tails that would need more than ``MAX_BINS`` bins fall back to
    ``FALLBACK_BINS`` equal-width bins.
    """

    data = np.asarray(values, dtype=np.float64)
    data = data[np.isfinite(data)]
    if data.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    low, high = float(data.min()), float(data.max())
    q75, q25 = np.percentile(data, [75, 25])
    n_bins = FALLBACK_BINS
    if data.size >= 2 and q75 - q25 > 0 and high > low:
        width = 2.0 * (q75 - q25) / np.cbrt(data.size)
        wanted = math.ceil((high - low) / width)
        if wanted <= MAX_BINS:
            n_bins = max(1, wanted)
    if low == high:
        low, high = low - 0.5, high + 0.5
    counts, edges = np.histogram(data, bins=n_bins, range=(low, high))
    return counts, edges
