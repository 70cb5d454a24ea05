import numpy as np
import pytest

from vdna.calibration import CalibrationTable
from vdna.dump import DumpHeader, ImageRecord
from vdna.layers import LayerSpec


def make_header(layer_neurons=(2, 3), extractor="test-extractor"):
    layers = tuple(LayerSpec(f"L{i}", n) for i, n in enumerate(layer_neurons))
    return DumpHeader(extractor, layers)


def random_records(rng, header, n_images, s_range=(1, 6), scale=3.0, prefix="img"):
    records = []
    for i in range(n_images):
        values = []
        for spec in header.layers:
            s = int(rng.integers(s_range[0], s_range[1] + 1))
            values.append((rng.standard_normal((spec.neurons, s)) * scale).astype(np.float32))
        records.append(ImageRecord(f"{prefix}{i:04d}", tuple(values)))
    return records


def calibrate_records(header, records):
    table = CalibrationTable(header.extractor_id, header.layers)
    table.observe(header, records)
    return table


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
