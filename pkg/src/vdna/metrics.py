"""Distances between fingerprints.

Histogram VDNAs compare by the 1-D Earth Mover's Distance per neuron, the L1
gap between normalized cumulative histograms. Its unit is bins of
probability mass displacement: moving all mass by one bin costs 1. Gaussian
VDNAs compare by the closed-form distance between univariate Gaussians,
sqrt((mu1-mu2)^2 + (sigma1-sigma2)^2). Per-neuron distances combine into a
single score through scalar weights, uniform weights giving the plain
average.

The layer-wise baseline fits one multivariate Gaussian per layer to
spatially averaged per-image features and compares them with the standard
squared Frechet form ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)). Those
statistics need a dedicated pass over activation dumps; a VDNA cannot
reconstruct cross-neuron covariances.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import envelope
from .container import KIND_GAUSS, KIND_HIST, Vdna, check_comparable
from .distributions import VARIANCE_EPS, GaussianMoments, Histogram
from .dump import DumpHeader, ImageRecord
from .errors import FormatError, IncompatibleError
from .layers import LayerSpec, layers_from_meta, layers_to_meta, validate_layers

# Eigenvalues of the covariance square-root problem below this are noise.
EIG_CLAMP = 1e-8

LAYER_STATS_MAGIC = b"VDNALGS1"

_U64 = struct.Struct("<Q")


@dataclass
class WeightVector:
    """Per-neuron scalar weights for combining neuron distances."""

    values: np.ndarray
    constrained_nonnegative: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("weights must be a 1-D vector")
        if not np.isfinite(self.values).all():
            raise ValueError("weights must be finite")
        if self.constrained_nonnegative and (self.values < 0).any():
            raise ValueError("weights are constrained nonnegative but contain negatives")

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        if n < 1:
            raise ValueError("need at least one neuron")
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def from_selection(cls, indices: Iterable[int], n: int) -> "WeightVector":
        """Weights 1/k on the selected neurons, 0 elsewhere."""
        idx = np.fromiter(indices, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("empty neuron selection")
        if idx.min() < 0 or idx.max() >= n:
            raise ValueError("selected neuron index out of range")
        values = np.zeros(n)
        values[idx] = 1.0 / idx.size
        return cls(values)

    def __len__(self) -> int:
        return len(self.values)


# -- per-neuron distances ------------------------------------------------------


def emd_neuron(h1: Histogram, h2: Histogram, bin_width_units: bool = False) -> float:
    """Earth Mover's Distance between two histograms of equal bin count.

    With bin_width_units=True the result is scaled by the bin width 2/B,
    giving displacement on the normalized activation axis instead of in
    bins.
    """
    if h1.bins != h2.bins:
        raise ValueError(f"bin count mismatch: {h1.bins} vs {h2.bins}")
    d = float(np.abs(h1.cumulative() - h2.cumulative()).sum())
    return d * (2.0 / h1.bins) if bin_width_units else d


def fd_neuron(g1: GaussianMoments, g2: GaussianMoments) -> float:
    """Distance between the univariate Gaussian fits of two neurons."""
    if g1.count < 2 or g2.count < 2:
        raise ValueError("Gaussian distance requires at least two values per side")
    return float(np.hypot(g1.mean - g2.mean, g1.std - g2.std))


def _emd_layer(c1: np.ndarray, c2: np.ndarray, bin_width_units: bool) -> np.ndarray:
    t1 = c1.sum(axis=1, dtype=np.float64)
    t2 = c2.sum(axis=1, dtype=np.float64)
    if (t1 == 0).any() or (t2 == 0).any():
        raise ValueError("empty histogram (total count 0) has no EMD")
    f1 = np.cumsum(c1, axis=1, dtype=np.float64) / t1[:, None]
    f2 = np.cumsum(c2, axis=1, dtype=np.float64) / t2[:, None]
    d = np.abs(f1 - f2).sum(axis=1)
    return d * (2.0 / c1.shape[1]) if bin_width_units else d


def _gauss_layer_stats(v: Vdna, layer: int) -> tuple[np.ndarray, np.ndarray]:
    count = v.gauss_counts[layer]
    if count < 2:
        raise ValueError("Gaussian distance requires at least two values per side")
    mean = v.gauss_sums[layer] / count
    var = v.gauss_sum_sqs[layer] / count - mean**2
    var[var <= VARIANCE_EPS] = 0.0
    return mean, np.sqrt(var)


def neuron_distances(v1: Vdna, v2: Vdna, bin_width_units: bool = False) -> np.ndarray:
    """Per-neuron distance vector in flat neuron order (EMD or Gaussian)."""
    check_comparable(v1, v2)
    parts = []
    for i in range(len(v1.layers)):
        if v1.kind == KIND_HIST:
            parts.append(_emd_layer(v1.hist_counts[i], v2.hist_counts[i], bin_width_units))
        else:
            m1, s1 = _gauss_layer_stats(v1, i)
            m2, s2 = _gauss_layer_stats(v2, i)
            parts.append(np.hypot(m1 - m2, s1 - s2))
    return np.concatenate(parts)


def weighted_distance(
    v1: Vdna, v2: Vdna, w: WeightVector | None = None, bin_width_units: bool = False
) -> float:
    """Weighted sum of per-neuron distances; uniform weights give the average."""
    d = neuron_distances(v1, v2, bin_width_units)
    if w is None:
        w = WeightVector.uniform(len(d))
    if len(w) != len(d):
        raise ValueError(f"weight vector has {len(w)} entries for {len(d)} neurons")
    return float(np.dot(w.values, d))


def emd_weighted(
    v1: Vdna, v2: Vdna, w: WeightVector | None = None, bin_width_units: bool = False
) -> float:
    if v1.kind != KIND_HIST:
        raise ValueError("weighted EMD requires hist VDNAs")
    return weighted_distance(v1, v2, w, bin_width_units)


def fd_weighted(v1: Vdna, v2: Vdna, w: WeightVector | None = None) -> float:
    if v1.kind != KIND_GAUSS:
        raise ValueError("weighted Gaussian distance requires gauss VDNAs")
    return weighted_distance(v1, v2, w)


# -- layer-wise multivariate baseline ----------------------------------------


@dataclass
class LayerGaussian:
    """Multivariate Gaussian fit of one layer's spatially averaged features."""

    mean: np.ndarray
    cov: np.ndarray
    count: int


@dataclass
class LayerStats:
    """Per-layer multivariate Gaussian statistics for one image set."""

    extractor_id: str
    layers: tuple[LayerSpec, ...]
    gaussians: tuple[LayerGaussian, ...]
    n_images: int


def layer_stats(header: DumpHeader, records: Iterable[ImageRecord]) -> LayerStats:
    """One streaming pass over a dump: mean and covariance per layer.

    Each image contributes its spatial average per neuron (one vector per
    layer); covariance is the sample covariance (ddof=1) of those vectors.
    """
    k = len(header.layers)
    n = 0
    sums = [np.zeros(l.neurons) for l in header.layers]
    outer = [np.zeros((l.neurons, l.neurons)) for l in header.layers]
    for record in records:
        for i, values in enumerate(record.layer_values):
            pooled = values.mean(axis=1, dtype=np.float64)
            sums[i] += pooled
            outer[i] += np.outer(pooled, pooled)
        n += 1
    if n < 2:
        raise ValueError(f"layer statistics require at least 2 images, got {n}")
    gaussians = []
    for i in range(k):
        mean = sums[i] / n
        cov = (outer[i] - n * np.outer(mean, mean)) / (n - 1)
        cov = (cov + cov.T) / 2.0
        gaussians.append(LayerGaussian(mean, cov, n))
    return LayerStats(header.extractor_id, header.layers, tuple(gaussians), n)


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def fd_layer(s1: LayerGaussian, s2: LayerGaussian) -> float:
    """Squared Frechet distance between two multivariate Gaussians.

    The trace term uses the symmetric eigendecomposition of
    S1^(1/2) S2 S1^(1/2); eigenvalues below the clamp tolerance count as 0.
    """
    if s1.mean.shape != s2.mean.shape or s1.cov.shape != s2.cov.shape:
        raise ValueError(
            f"layer dimension mismatch: {s1.mean.shape} vs {s2.mean.shape}"
        )
    for s in (s1, s2):
        if not (np.isfinite(s.mean).all() and np.isfinite(s.cov).all()):
            raise ValueError("non-finite layer statistics")
        if s.count < len(s.mean) + 1:
            warnings.warn(
                f"covariance of a {len(s.mean)}-dim layer estimated from only "
                f"{s.count} images is rank-deficient",
                stacklevel=2,
            )
    diff = s1.mean - s2.mean
    root = _psd_sqrt(s1.cov)
    inner = root @ s2.cov @ root
    inner = (inner + inner.T) / 2.0
    eigvals = np.linalg.eigvalsh(inner)
    eigvals[eigvals < EIG_CLAMP] = 0.0
    trace_term = float(np.trace(s1.cov) + np.trace(s2.cov) - 2.0 * np.sqrt(eigvals).sum())
    return float(diff @ diff) + trace_term


def fd_layers(a: LayerStats, b: LayerStats) -> np.ndarray:
    """Per-layer Frechet distances between two layer-statistics sets."""
    if a.extractor_id != b.extractor_id or a.layers != b.layers:
        raise IncompatibleError("layer statistics are not comparable: structure differs")
    return np.array([fd_layer(g1, g2) for g1, g2 in zip(a.gaussians, b.gaussians)])


def fd_layers_weighted(a: LayerStats, b: LayerStats, w: WeightVector | None = None) -> float:
    d = fd_layers(a, b)
    if w is None:
        w = WeightVector.uniform(len(d))
    if len(w) != len(d):
        raise ValueError(f"weight vector has {len(w)} entries for {len(d)} layers")
    return float(np.dot(w.values, d))


# -- layer statistics persistence ---------------------------------------------
#
# Magic ``VDNALGS1``: envelope header (extractor_id, layers, n_images) then
# per layer: mean f64[N], covariance f64[N*N] row-major, count u64.


def save_layer_stats(stats: LayerStats, path: str | Path) -> None:
    meta = {
        "extractor_id": stats.extractor_id,
        "layers": layers_to_meta(stats.layers),
        "n_images": stats.n_images,
    }
    with open(path, "wb") as fh:
        envelope.write_header(fh, LAYER_STATS_MAGIC, meta)
        for g in stats.gaussians:
            fh.write(np.ascontiguousarray(g.mean, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(g.cov, dtype="<f8").tobytes())
            fh.write(_U64.pack(g.count))


def load_layer_stats(path: str | Path) -> LayerStats:
    with open(path, "rb") as fh:
        meta = envelope.read_header(fh, LAYER_STATS_MAGIC)
        layers = layers_from_meta(meta.get("layers"))
        validate_layers(layers)
        gaussians = []
        for spec in layers:
            mean = np.frombuffer(
                envelope.read_exact(fh, spec.neurons * 8, f"mean of layer {spec.name!r}"),
                dtype="<f8",
            ).copy()
            cov = (
                np.frombuffer(
                    envelope.read_exact(
                        fh, spec.neurons * spec.neurons * 8, f"covariance of layer {spec.name!r}"
                    ),
                    dtype="<f8",
                )
                .reshape(spec.neurons, spec.neurons)
                .copy()
            )
            (count,) = _U64.unpack(
                envelope.read_exact(fh, 8, f"image count of layer {spec.name!r}")
            )
            gaussians.append(LayerGaussian(mean, cov, count))
        if not isinstance(meta.get("extractor_id"), str):
            raise FormatError("metadata missing string field 'extractor_id'")
        return LayerStats(
            meta["extractor_id"], layers, tuple(gaussians), int(meta.get("n_images", 0))
        )
