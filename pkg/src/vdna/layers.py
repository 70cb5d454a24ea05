"""Layer tables: the fixed (name, neuron count) structure shared by all containers.

Every artifact in the toolkit (activation dumps, calibration tables, VDNA
containers, weight vectors) carries the same layer table, and per-neuron data
is always laid out in layer order with neurons in index order. The flat
neuron index used for weight vectors and distance vectors follows that
layout: all neurons of layer 0, then layer 1, and so on.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import FormatError


@dataclass(frozen=True)
class LayerSpec:
    """One extractor layer: a unique name and a fixed neuron count."""

    name: str
    neurons: int

    def __post_init__(self):
        if not self.name:
            raise ValueError("layer name must be non-empty")
        if self.neurons < 1:
            raise ValueError(f"layer {self.name!r}: neuron count must be >= 1, got {self.neurons}")


def validate_layers(layers: tuple[LayerSpec, ...]) -> None:
    if not layers:
        raise ValueError("layer table must contain at least one layer")
    names = [l.name for l in layers]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise ValueError(f"duplicate layer name {dup!r}")


def layers_to_meta(layers: tuple[LayerSpec, ...]) -> list[dict]:
    return [{"name": l.name, "neurons": l.neurons} for l in layers]


def layers_from_meta(meta: object) -> tuple[LayerSpec, ...]:
    if not isinstance(meta, list) or not meta:
        raise FormatError("metadata field 'layers' must be a non-empty list")
    out = []
    for entry in meta:
        if not isinstance(entry, dict) or "name" not in entry or "neurons" not in entry:
            raise FormatError(f"malformed layer entry {entry!r}")
        name, neurons = entry["name"], entry["neurons"]
        if not isinstance(name, str) or not isinstance(neurons, int) or neurons < 1:
            raise FormatError(f"malformed layer entry {entry!r}")
        out.append(LayerSpec(name, neurons))
    layers = tuple(out)
    try:
        validate_layers(layers)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    return layers


def total_neurons(layers: tuple[LayerSpec, ...]) -> int:
    return sum(l.neurons for l in layers)


def flat_index(layers: tuple[LayerSpec, ...], layer: int, neuron: int) -> int:
    """Flat neuron index of (layer, neuron) in the canonical layout."""
    if not 0 <= layer < len(layers):
        raise IndexError(f"layer index {layer} out of range")
    if not 0 <= neuron < layers[layer].neurons:
        raise IndexError(f"neuron index {neuron} out of range for layer {layers[layer].name!r}")
    return sum(l.neurons for l in layers[:layer]) + neuron


def unflatten_index(layers: tuple[LayerSpec, ...], index: int) -> tuple[int, int]:
    """Inverse of flat_index: (layer index, neuron index) of a flat position."""
    if index < 0:
        raise IndexError(f"flat index {index} out of range")
    offset = index
    for i, l in enumerate(layers):
        if offset < l.neurons:
            return i, offset
        offset -= l.neurons
    raise IndexError(f"flat index {index} out of range")
