"""Per-neuron activation ranges and the normalization they define.

Calibration tracks the minimum and maximum activation each neuron produces
over a calibration corpus. The histogram axis is then anchored by mapping
raw activations to [-1, 1] around the observed range, widened by a 20%
margin so calibration-set values land strictly inside the interval:

    center     = (max_seen + min_seen) / 2
    half_width = 1.2 * (max_seen - min_seen) / 2
    normalized = clamp((a - center) / half_width, -1, 1)

Values outside the calibrated range (unseen data can always exceed the
extremes) clamp into the edge bins instead of being rejected. Neurons whose
observed range is a single point carry no information; by default they map
to 0, optionally they raise.

File format (magic ``VDNACAL1``): envelope header whose metadata holds the
extractor id, layer table and per-layer observation counts, followed by one
(min_seen, max_seen) float64 pair per neuron in layer order. Unobserved
neurons are stored as the empty-fold sentinel (+inf, -inf).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import envelope
from .dump import DumpHeader, ImageRecord
from .errors import CalibrationError, FormatError, IncompatibleError
from .layers import LayerSpec, layers_from_meta, layers_to_meta, validate_layers

MAGIC = b"VDNACAL1"

# Fraction added to the observed half-range on each side.
RANGE_MARGIN = 0.2


@dataclass(frozen=True)
class NeuronRange:
    """Observed extremes of one neuron."""

    min_seen: float
    max_seen: float
    count: int

    @property
    def degenerate(self) -> bool:
        return self.count >= 1 and self.min_seen == self.max_seen


class CalibrationTable:
    """Running min/max per neuron, plus the normalization they induce.

    Observation is a commutative, associative fold: feeding values in any
    order or merging tables built from disjoint shards yields the same
    result.
    """

    def __init__(self, extractor_id: str, layers: tuple[LayerSpec, ...]):
        validate_layers(layers)
        self.extractor_id = extractor_id
        self.layers = layers
        self._mins = [np.full(l.neurons, np.inf) for l in layers]
        self._maxs = [np.full(l.neurons, -np.inf) for l in layers]
        self._counts = [0] * len(layers)

    # -- observation ----------------------------------------------------

    def _check_header(self, header: DumpHeader) -> None:
        if header.extractor_id != self.extractor_id:
            raise IncompatibleError(
                f"dump extractor {header.extractor_id!r} does not match "
                f"calibration extractor {self.extractor_id!r}"
            )
        if header.layers != self.layers:
            raise IncompatibleError("dump layer table does not match calibration layer table")

    def observe(self, header: DumpHeader, records: Iterable[ImageRecord]) -> int:
        """Fold all records of a dump into the table; returns records seen."""
        self._check_header(header)
        n = 0
        for record in records:
            for i, values in enumerate(record.layer_values):
                v64 = values.astype(np.float64, copy=False)
                np.minimum(self._mins[i], v64.min(axis=1), out=self._mins[i])
                np.maximum(self._maxs[i], v64.max(axis=1), out=self._maxs[i])
                self._counts[i] += values.shape[1]
            n += 1
        return n

    def merge(self, other: "CalibrationTable") -> None:
        """Element-wise min/max merge of a table built from another shard."""
        if other.extractor_id != self.extractor_id or other.layers != self.layers:
            raise IncompatibleError("cannot merge calibration tables with different structure")
        for i in range(len(self.layers)):
            np.minimum(self._mins[i], other._mins[i], out=self._mins[i])
            np.maximum(self._maxs[i], other._maxs[i], out=self._maxs[i])
            self._counts[i] += other._counts[i]

    # -- queries ---------------------------------------------------------

    def neuron_range(self, layer: int, neuron: int) -> NeuronRange:
        return NeuronRange(
            float(self._mins[layer][neuron]),
            float(self._maxs[layer][neuron]),
            self._counts[layer],
        )

    def value_count(self, layer: int) -> int:
        return self._counts[layer]

    def centers(self, layer: int) -> np.ndarray:
        return (self._maxs[layer] + self._mins[layer]) / 2.0

    def half_widths(self, layer: int) -> np.ndarray:
        return (1.0 + RANGE_MARGIN) * (self._maxs[layer] - self._mins[layer]) / 2.0

    def degenerate_mask(self, layer: int) -> np.ndarray:
        """Neurons observed but constant; they normalize to 0 by default."""
        if self._counts[layer] == 0:
            return np.zeros(self.layers[layer].neurons, dtype=bool)
        return self._mins[layer] == self._maxs[layer]

    @property
    def has_degenerate(self) -> bool:
        return any(self.degenerate_mask(i).any() for i in range(len(self.layers)))

    # -- normalization ---------------------------------------------------

    def normalize_layer(
        self, layer: int, values: np.ndarray, degenerate: str = "zero"
    ) -> np.ndarray:
        """Normalize a (neurons, ...) array of raw activations to [-1, 1].

        degenerate: "zero" maps constant neurons to 0, "error" raises.
        """
        if self._counts[layer] == 0:
            raise CalibrationError(f"layer {self.layers[layer].name!r} was never calibrated")
        mask = self.degenerate_mask(layer)
        if mask.any() and degenerate == "error":
            bad = int(np.argwhere(mask)[0][0])
            raise CalibrationError(
                f"degenerate neuron {bad} in layer {self.layers[layer].name!r} "
                "(constant over calibration data)"
            )
        mu = self.centers(layer)
        sigma = self.half_widths(layer)
        sigma_safe = np.where(mask, 1.0, sigma)
        shape = (-1,) + (1,) * (values.ndim - 1)
        out = (values.astype(np.float64, copy=False) - mu.reshape(shape)) / sigma_safe.reshape(shape)
        if mask.any():
            out[mask] = 0.0
        return np.clip(out, -1.0, 1.0, out=out)

    def normalize(self, layer: int, neuron: int, a: float, degenerate: str = "zero") -> float:
        """Normalize a single raw activation of one neuron."""
        if self._counts[layer] == 0:
            raise CalibrationError(f"layer {self.layers[layer].name!r} was never calibrated")
        if self.degenerate_mask(layer)[neuron]:
            if degenerate == "error":
                raise CalibrationError(
                    f"degenerate neuron {neuron} in layer {self.layers[layer].name!r}"
                )
            return 0.0
        mu = self.centers(layer)[neuron]
        sigma = self.half_widths(layer)[neuron]
        return float(np.clip((a - mu) / sigma, -1.0, 1.0))

    # -- identity ----------------------------------------------------------

    def fingerprint(self) -> str:
        """Content hash tying a VDNA to the calibration that normalized it."""
        h = hashlib.sha256()
        h.update(self.extractor_id.encode("utf-8"))
        for spec, mins, maxs in zip(self.layers, self._mins, self._maxs):
            h.update(spec.name.encode("utf-8"))
            h.update(spec.neurons.to_bytes(8, "little"))
            h.update(np.ascontiguousarray(mins, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(maxs, dtype="<f8").tobytes())
        return h.hexdigest()

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        meta = {
            "extractor_id": self.extractor_id,
            "layers": layers_to_meta(self.layers),
            "value_counts": list(self._counts),
        }
        with open(path, "wb") as fh:
            envelope.write_header(fh, MAGIC, meta)
            for mins, maxs in zip(self._mins, self._maxs):
                pair = np.empty((len(mins), 2))
                pair[:, 0] = mins
                pair[:, 1] = maxs
                fh.write(pair.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationTable":
        with open(path, "rb") as fh:
            meta = envelope.read_header(fh, MAGIC)
            if "extractor_id" not in meta or not isinstance(meta["extractor_id"], str):
                raise FormatError("metadata missing string field 'extractor_id'")
            layers = layers_from_meta(meta.get("layers"))
            counts = meta.get("value_counts")
            if not isinstance(counts, list) or len(counts) != len(layers):
                raise FormatError("metadata field 'value_counts' must list one count per layer")
            table = cls(meta["extractor_id"], layers)
            for i, spec in enumerate(layers):
                raw = envelope.read_exact(fh, spec.neurons * 16, f"ranges of layer {spec.name!r}")
                pair = np.frombuffer(raw, dtype="<f8").reshape(spec.neurons, 2)
                table._mins[i] = pair[:, 0].astype(np.float64)
                table._maxs[i] = pair[:, 1].astype(np.float64)
                table._counts[i] = int(counts[i])
                observed = table._counts[i] >= 1
                if observed and not (
                    np.isfinite(table._mins[i]).all() and np.isfinite(table._maxs[i]).all()
                ):
                    raise FormatError(f"non-finite range in calibrated layer {spec.name!r}")
        return table
