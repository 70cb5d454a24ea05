"""The VDNA container: per-neuron distributions for a whole image set.

A VDNA is built by normalizing every activation of every image through a
calibration table and accumulating it into one distribution per neuron,
either a fixed-bin histogram ("hist") or Gaussian moments ("gauss").
Accumulation is image-order independent, and VDNAs built from shards of a
dataset merge into exactly the VDNA of the full dataset.

Two VDNAs are comparable only if kind, extractor, layer table, bin count and
calibration fingerprint all match; the fingerprint makes the otherwise
silent assumption of a shared normalization explicit.

File format (magic ``VDNA0001``):

    envelope header; metadata carries kind, extractor_id, layers, bins
    (hist), n_images, calibration fingerprint, payload_bytes and, for gauss,
    the per-layer value counts
    compressed_len  u64
    payload         zlib (DEFLATE) compressed
    crc32           u32, CRC-32 of the uncompressed payload

Uncompressed payload, in layer order, neuron-major:
    hist:   B u64 bin counts per neuron
    gauss:  (sum f64, sum_sq f64) per neuron

Gauss value counts live in the metadata rather than the payload because
they are identical for every neuron of a layer (each neuron of a layer sees
exactly the same number of activation values), which keeps the payload at
two floats per neuron while still allowing exact moment merging.
"""

from __future__ import annotations

import struct
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import envelope
from .calibration import CalibrationTable
from .distributions import DEFAULT_BINS, GaussianMoments, Histogram, bin_index
from .dump import DumpHeader, ImageRecord
from .errors import FormatError, IncompatibleError
from .layers import LayerSpec, layers_from_meta, layers_to_meta, total_neurons, validate_layers

MAGIC = b"VDNA0001"

KIND_HIST = "hist"
KIND_GAUSS = "gauss"

_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")


@dataclass
class Vdna:
    """Per-neuron distributions plus the metadata that scopes comparability."""

    kind: str
    extractor_id: str
    layers: tuple[LayerSpec, ...]
    bins: int | None
    n_images: int
    calibration_fingerprint: str
    # hist: per layer (neurons, bins) int64; gauss: per layer (neurons,) float64
    hist_counts: list[np.ndarray] = field(default_factory=list)
    gauss_sums: list[np.ndarray] = field(default_factory=list)
    gauss_sum_sqs: list[np.ndarray] = field(default_factory=list)
    gauss_counts: list[int] = field(default_factory=list)

    @classmethod
    def empty(
        cls,
        kind: str,
        extractor_id: str,
        layers: tuple[LayerSpec, ...],
        bins: int | None = DEFAULT_BINS,
        calibration_fingerprint: str = "",
    ) -> "Vdna":
        validate_layers(layers)
        if kind == KIND_HIST:
            if bins is None or bins < 1:
                raise ValueError(f"hist VDNA needs a positive bin count, got {bins}")
            return cls(
                kind, extractor_id, layers, bins, 0, calibration_fingerprint,
                hist_counts=[np.zeros((l.neurons, bins), dtype=np.int64) for l in layers],
            )
        if kind == KIND_GAUSS:
            return cls(
                kind, extractor_id, layers, None, 0, calibration_fingerprint,
                gauss_sums=[np.zeros(l.neurons) for l in layers],
                gauss_sum_sqs=[np.zeros(l.neurons) for l in layers],
                gauss_counts=[0] * len(layers),
            )
        raise ValueError(f"unknown VDNA kind {kind!r}")

    # -- queries -----------------------------------------------------------

    @property
    def neuron_count(self) -> int:
        return total_neurons(self.layers)

    def histogram(self, layer: int, neuron: int) -> Histogram:
        if self.kind != KIND_HIST:
            raise ValueError("per-neuron histograms exist only in hist VDNAs")
        return Histogram(self.hist_counts[layer][neuron].copy())

    def moments(self, layer: int, neuron: int) -> GaussianMoments:
        if self.kind != KIND_GAUSS:
            raise ValueError("per-neuron moments exist only in gauss VDNAs")
        return GaussianMoments(
            self.gauss_counts[layer],
            float(self.gauss_sums[layer][neuron]),
            float(self.gauss_sum_sqs[layer][neuron]),
        )

    # -- accumulation --------------------------------------------------------

    def _accumulate(self, record: ImageRecord, calibration: CalibrationTable) -> None:
        for i, values in enumerate(record.layer_values):
            norm = calibration.normalize_layer(i, values)
            if self.kind == KIND_HIST:
                neurons = norm.shape[0]
                idx = bin_index(norm, self.bins)
                flat = (np.arange(neurons, dtype=np.int64)[:, None] * self.bins + idx).ravel()
                self.hist_counts[i] += np.bincount(
                    flat, minlength=neurons * self.bins
                ).reshape(neurons, self.bins)
            else:
                self.gauss_sums[i] += norm.sum(axis=1)
                self.gauss_sum_sqs[i] += np.square(norm).sum(axis=1)
                self.gauss_counts[i] += norm.shape[1]
        self.n_images += 1


def fit(
    header: DumpHeader,
    records: Iterable[ImageRecord],
    calibration: CalibrationTable,
    kind: str = KIND_HIST,
    bins: int = DEFAULT_BINS,
) -> Vdna:
    """Build a VDNA from a dump stream.

    Every activation is normalized through the calibration table and
    accumulated into its neuron's distribution; the result is independent of
    record order.
    """
    if header.extractor_id != calibration.extractor_id:
        raise IncompatibleError(
            f"dump extractor {header.extractor_id!r} does not match "
            f"calibration extractor {calibration.extractor_id!r}"
        )
    if header.layers != calibration.layers:
        raise IncompatibleError("dump layer table does not match calibration layer table")
    if calibration.has_degenerate:
        warnings.warn(
            "calibration contains degenerate (constant) neurons; "
            "their activations normalize to 0",
            stacklevel=2,
        )
    vdna = Vdna.empty(
        kind,
        header.extractor_id,
        header.layers,
        bins if kind == KIND_HIST else None,
        calibration.fingerprint(),
    )
    for record in records:
        vdna._accumulate(record, calibration)
    return vdna


def check_comparable(a: Vdna, b: Vdna) -> None:
    """Raise IncompatibleError naming the first field that differs."""
    for name, va, vb in (
        ("kind", a.kind, b.kind),
        ("extractor_id", a.extractor_id, b.extractor_id),
        ("layers", a.layers, b.layers),
        ("bins", a.bins, b.bins),
        ("calibration_fingerprint", a.calibration_fingerprint, b.calibration_fingerprint),
    ):
        if va != vb:
            raise IncompatibleError(f"VDNAs are not comparable: {name} differs ({va!r} vs {vb!r})")


def merge(a: Vdna, b: Vdna) -> Vdna:
    """Combine two VDNAs of disjoint image sets into the VDNA of their union."""
    check_comparable(a, b)
    out = Vdna.empty(a.kind, a.extractor_id, a.layers, a.bins, a.calibration_fingerprint)
    out.n_images = a.n_images + b.n_images
    if a.kind == KIND_HIST:
        out.hist_counts = [ca + cb for ca, cb in zip(a.hist_counts, b.hist_counts)]
    else:
        out.gauss_sums = [sa + sb for sa, sb in zip(a.gauss_sums, b.gauss_sums)]
        out.gauss_sum_sqs = [sa + sb for sa, sb in zip(a.gauss_sum_sqs, b.gauss_sum_sqs)]
        out.gauss_counts = [ca + cb for ca, cb in zip(a.gauss_counts, b.gauss_counts)]
    return out


# -- persistence -------------------------------------------------------------


def _payload(vdna: Vdna) -> bytes:
    parts = []
    if vdna.kind == KIND_HIST:
        for counts in vdna.hist_counts:
            if (counts < 0).any():
                raise ValueError("negative histogram count")
            parts.append(counts.astype("<u8").tobytes())
    else:
        for sums, sum_sqs in zip(vdna.gauss_sums, vdna.gauss_sum_sqs):
            pair = np.empty((len(sums), 2))
            pair[:, 0] = sums
            pair[:, 1] = sum_sqs
            parts.append(pair.astype("<f8").tobytes())
    return b"".join(parts)


def payload_size(vdna: Vdna) -> int:
    """Uncompressed payload size in bytes (8*B per neuron for hist, 16 for gauss)."""
    n = vdna.neuron_count
    return n * vdna.bins * 8 if vdna.kind == KIND_HIST else n * 16


def save(vdna: Vdna, path: str | Path) -> None:
    payload = _payload(vdna)
    meta = {
        "kind": vdna.kind,
        "extractor_id": vdna.extractor_id,
        "layers": layers_to_meta(vdna.layers),
        "bins": vdna.bins,
        "n_images": vdna.n_images,
        "calibration_fingerprint": vdna.calibration_fingerprint,
        "payload_bytes": len(payload),
    }
    if vdna.kind == KIND_GAUSS:
        meta["value_counts"] = list(vdna.gauss_counts)
    compressed = zlib.compress(payload, 6)
    with open(path, "wb") as fh:
        envelope.write_header(fh, MAGIC, meta)
        fh.write(_U64.pack(len(compressed)))
        fh.write(compressed)
        fh.write(_U32.pack(zlib.crc32(payload)))


def load(path: str | Path) -> Vdna:
    with open(path, "rb") as fh:
        meta = envelope.read_header(fh, MAGIC)
        kind = meta.get("kind")
        if kind not in (KIND_HIST, KIND_GAUSS):
            raise FormatError(f"unknown VDNA kind {kind!r}")
        layers = layers_from_meta(meta.get("layers"))
        (compressed_len,) = _U64.unpack(envelope.read_exact(fh, 8, "payload length"))
        compressed = envelope.read_exact(fh, compressed_len, "payload")
        (crc,) = _U32.unpack(envelope.read_exact(fh, 4, "payload checksum"))
        try:
            payload = zlib.decompress(compressed)
        except zlib.error as exc:
            raise FormatError(f"payload does not decompress: {exc}") from exc
        if zlib.crc32(payload) != crc:
            raise FormatError("payload checksum mismatch")
        if len(payload) != meta.get("payload_bytes"):
            raise FormatError(
                f"payload size {len(payload)} does not match metadata "
                f"{meta.get('payload_bytes')}"
            )

        vdna = Vdna.empty(
            kind,
            meta.get("extractor_id", ""),
            layers,
            meta.get("bins") if kind == KIND_HIST else None,
            meta.get("calibration_fingerprint", ""),
        )
        vdna.n_images = int(meta.get("n_images", 0))
        offset = 0
        if kind == KIND_HIST:
            bins = vdna.bins
            for i, spec in enumerate(layers):
                size = spec.neurons * bins * 8
                block = payload[offset : offset + size]
                if len(block) < size:
                    raise FormatError(f"payload truncated in layer {spec.name!r}")
                offset += size
                raw = np.frombuffer(block, dtype="<u8")
                if raw.size and raw.max() > np.iinfo(np.int64).max:
                    raise FormatError(f"histogram count out of range in layer {spec.name!r}")
                vdna.hist_counts[i] = raw.reshape(spec.neurons, bins).astype(np.int64)
        else:
            counts = meta.get("value_counts")
            if not isinstance(counts, list) or len(counts) != len(layers):
                raise FormatError("gauss metadata must list one value count per layer")
            vdna.gauss_counts = [int(c) for c in counts]
            for i, spec in enumerate(layers):
                size = spec.neurons * 16
                block = payload[offset : offset + size]
                if len(block) < size:
                    raise FormatError(f"payload truncated in layer {spec.name!r}")
                offset += size
                pair = np.frombuffer(block, dtype="<f8").reshape(spec.neurons, 2)
                vdna.gauss_sums[i] = pair[:, 0].copy()
                vdna.gauss_sum_sqs[i] = pair[:, 1].copy()
        if offset != len(payload):
            raise FormatError("payload size does not match layer table")
    return vdna
