"""Per-neuron distribution primitives: fixed-bin histograms and Gaussian moments.

Both are plain value types built for sharded accumulation: fitting shards
independently and merging gives the same result as one pass (exactly for
integer histogram counts, to float rounding for moments).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BINS = 1000

# Derived variance may come out slightly negative from catastrophic
# cancellation; anything below this slack is treated as zero.
VARIANCE_EPS = 1e-9


def bin_index(values: np.ndarray, bins: int) -> np.ndarray:
    """Bin indices of normalized values in [-1, 1].

    Bin k covers [-1 + 2k/B, -1 + 2(k+1)/B); the top edge +1 is folded into
    the last bin. The mapping is monotone and onto {0..B-1}.
    """
    idx = np.floor((np.asarray(values, dtype=np.float64) + 1.0) * (bins / 2.0)).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


@dataclass
class Histogram:
    """Integer counts over B uniform bins of [-1, 1]."""

    counts: np.ndarray

    @classmethod
    def empty(cls, bins: int = DEFAULT_BINS) -> "Histogram":
        if bins < 1:
            raise ValueError(f"bin count must be >= 1, got {bins}")
        return cls(np.zeros(bins, dtype=np.int64))

    @property
    def bins(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accumulate(self, values: np.ndarray) -> "Histogram":
        """Count normalized values into bins; each value lands in exactly one."""
        idx = bin_index(values, self.bins)
        self.counts += np.bincount(idx.ravel(), minlength=self.bins)
        return self

    def merge(self, other: "Histogram") -> "Histogram":
        if other.bins != self.bins:
            raise ValueError(f"bin count mismatch: {self.bins} vs {other.bins}")
        self.counts += other.counts
        return self

    def normalized(self) -> np.ndarray:
        """Counts as probabilities; requires at least one accumulated value."""
        total = self.total
        if total == 0:
            raise ValueError("empty histogram has no normalized form")
        return self.counts / total

    def cumulative(self) -> np.ndarray:
        """Normalized cumulative distribution over bin indices."""
        return np.cumsum(self.normalized())


@dataclass
class GaussianMoments:
    """Streaming (count, sum, sum of squares) of one neuron's activations.

    Moments are stored instead of (mean, std) so that merging shards is an
    exact component-wise addition; mean and std are derived on demand.
    """

    count: int = 0
    sum: float = 0.0
    sum_sq: float = 0.0

    def accumulate(self, values: np.ndarray) -> "GaussianMoments":
        v = np.asarray(values, dtype=np.float64)
        self.count += v.size
        self.sum += float(v.sum())
        self.sum_sq += float(np.square(v).sum())
        return self

    def merge(self, other: "GaussianMoments") -> "GaussianMoments":
        self.count += other.count
        self.sum += other.sum
        self.sum_sq += other.sum_sq
        return self

    @property
    def mean(self) -> float:
        if self.count < 1:
            raise ValueError("mean requires at least one value")
        return self.sum / self.count

    @property
    def variance(self) -> float:
        if self.count < 2:
            raise ValueError("variance requires at least two values")
        var = self.sum_sq / self.count - self.mean**2
        return var if var > VARIANCE_EPS else 0.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))
