"""Activation dump files (magic ``VDNAACT1``).

A dump decouples the numeric core from whatever model runner produced the
activations. It is a plain stream: an envelope header whose JSON metadata
holds the extractor id and layer table, followed by one record per image.

Record layout (little-endian):

    id_len    u32
    image_id  UTF-8, id_len bytes
    per layer, in header order:
        spatial_size S   u32, >= 1
        values           neurons * S float32, neuron-major
                         (all S values of neuron 0, then neuron 1, ...)

The two spatial axes of a conv feature map are flattened into the single
size S; for transformer extractors S is the token count. S may vary per
layer and per image, the neuron count per layer may not. All values must be
finite; readers reject NaN/Inf naming the image, layer and neuron.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from . import envelope
from .errors import FormatError
from .layers import LayerSpec, layers_from_meta, layers_to_meta, validate_layers

MAGIC = b"VDNAACT1"

_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class DumpHeader:
    extractor_id: str
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        validate_layers(self.layers)

    def to_meta(self) -> dict:
        return {"extractor_id": self.extractor_id, "layers": layers_to_meta(self.layers)}

    @classmethod
    def from_meta(cls, meta: dict) -> "DumpHeader":
        if "extractor_id" not in meta or not isinstance(meta["extractor_id"], str):
            raise FormatError("metadata missing string field 'extractor_id'")
        return cls(meta["extractor_id"], layers_from_meta(meta.get("layers")))


@dataclass(frozen=True)
class ImageRecord:
    """Activations of one image: one (neurons, S) float32 array per layer."""

    image_id: str
    layer_values: tuple[np.ndarray, ...]

    def spatial_sizes(self) -> tuple[int, ...]:
        return tuple(v.shape[1] for v in self.layer_values)


def _check_record(header: DumpHeader, record: ImageRecord) -> None:
    if len(record.layer_values) != len(header.layers):
        raise FormatError(
            f"record {record.image_id!r} has {len(record.layer_values)} layers, "
            f"header declares {len(header.layers)}"
        )
    for spec, values in zip(header.layers, record.layer_values):
        if values.ndim != 2 or values.shape[0] != spec.neurons:
            raise FormatError(
                f"record {record.image_id!r}, layer {spec.name!r}: expected shape "
                f"({spec.neurons}, S), got {values.shape}"
            )
        if values.shape[1] < 1:
            raise FormatError(
                f"record {record.image_id!r}, layer {spec.name!r}: spatial size must be >= 1"
            )


def write_dump(path: str | Path, header: DumpHeader, records: Iterable[ImageRecord]) -> int:
    """Write a dump file; returns the number of records written."""
    count = 0
    with open(path, "wb") as fh:
        envelope.write_header(fh, MAGIC, header.to_meta())
        for record in records:
            _check_record(header, record)
            _write_record(fh, record)
            count += 1
    return count


def _write_record(fh: BinaryIO, record: ImageRecord) -> None:
    ident = record.image_id.encode("utf-8")
    fh.write(_U32.pack(len(ident)))
    fh.write(ident)
    for values in record.layer_values:
        fh.write(_U32.pack(values.shape[1]))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_dump(path: str | Path) -> tuple[DumpHeader, Iterator[ImageRecord]]:
    """Open a dump, returning its header and a lazy record iterator.

    Records are parsed one at a time; peak memory is bounded by the largest
    single record, not the file size. The iterator owns the file handle and
    closes it on exhaustion.
    """
    fh = open(path, "rb")
    try:
        meta = envelope.read_header(fh, MAGIC)
        header = DumpHeader.from_meta(meta)
    except Exception:
        fh.close()
        raise
    return header, _iter_records(fh, header)


def _iter_records(fh: BinaryIO, header: DumpHeader) -> Iterator[ImageRecord]:
    with fh:
        while True:
            head = fh.read(_U32.size)
            if not head:
                return
            if len(head) < _U32.size:
                raise FormatError("truncated record: image id length incomplete")
            (id_len,) = _U32.unpack(head)
            image_id = envelope.read_exact(fh, id_len, "image id").decode("utf-8")
            values = []
            for spec in header.layers:
                (spatial,) = _U32.unpack(
                    envelope.read_exact(fh, _U32.size, f"spatial size of layer {spec.name!r}")
                )
                if spatial < 1:
                    raise FormatError(
                        f"record {image_id!r}, layer {spec.name!r}: spatial size must be >= 1"
                    )
                raw = envelope.read_exact(
                    fh, spec.neurons * spatial * 4, f"values of layer {spec.name!r}"
                )
                arr = np.frombuffer(raw, dtype="<f4").reshape(spec.neurons, spatial)
                finite = np.isfinite(arr)
                if not finite.all():
                    neuron = int(np.argwhere(~finite)[0][0])
                    raise FormatError(
                        f"non-finite activation in record {image_id!r}, "
                        f"layer {spec.name!r}, neuron {neuron}"
                    )
                arr.flags.writeable = False
                values.append(arr)
            yield ImageRecord(image_id, tuple(values))
