"""Per-neuron activation-distribution fingerprints for comparing image sets.

The toolkit turns raw neuron activations (read from ``VDNAACT1`` dump files)
into compact per-neuron distributions, compares them with plain or weighted
Earth Mover's and Frechet distances, learns neuron weights that remove the
influence of chosen attributes, and evaluates retrieval and
cross-generalisation predictions.
"""

from .calibration import CalibrationTable, NeuronRange
from .container import KIND_GAUSS, KIND_HIST, Vdna, check_comparable, fit, load, merge, save
from .distributions import GaussianMoments, Histogram, bin_index
from .dump import DumpHeader, ImageRecord, read_dump, write_dump
from .errors import CalibrationError, FormatError, IncompatibleError, VdnaError
from .evaluation import (
    CrossGenTable,
    RankedList,
    crossgen_discrepancy,
    pr_curve,
    random_ordering_baseline,
    rank_against_reference,
)
from .layers import LayerSpec
from .metrics import (
    LayerGaussian,
    LayerStats,
    WeightVector,
    emd_neuron,
    emd_weighted,
    fd_layer,
    fd_layers,
    fd_neuron,
    fd_weighted,
    layer_stats,
    neuron_distances,
    weighted_distance,
)
from .weights import (
    AttributePair,
    OptimizerConfig,
    TrainingTrace,
    loss,
    loss_gradient,
    optimize,
    select_sensitive_neurons,
    sensitivity_deviation,
)

__version__ = "0.1.0"
