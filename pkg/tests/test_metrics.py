from fractions import Fraction

import numpy as np
import pytest
from scipy import optimize as sciopt

from vdna.container import KIND_GAUSS, KIND_HIST, Vdna
from vdna.distributions import GaussianMoments, Histogram
from vdna.errors import IncompatibleError
from vdna.layers import LayerSpec
from vdna.metrics import (
    LayerGaussian,
    WeightVector,
    emd_neuron,
    emd_weighted,
    fd_layer,
    fd_neuron,
    neuron_distances,
    weighted_distance,
)


def transport_cost_oracle(c1, c2):
    """Exact min-cost transport on the line, cost |i - j| per unit mass.

    Greedy front-to-front matching (northwest-corner rule), optimal for
    Monge costs; exact rational arithmetic throughout.
    """
    t1, t2 = sum(c1), sum(c2)
    supply = [Fraction(int(x), t1) for x in c1]
    demand = [Fraction(int(x), t2) for x in c2]
    i = j = 0
    cost = Fraction(0)
    while i < len(supply) and j < len(demand):
        moved = min(supply[i], demand[j])
        cost += moved * abs(i - j)
        supply[i] -= moved
        demand[j] -= moved
        if supply[i] == 0:
            i += 1
        if demand[j] == 0:
            j += 1
    return cost


def transport_cost_lp(c1, c2):
    """Linear-program transport oracle (scipy HiGHS)."""
    b = len(c1)
    p1 = np.asarray(c1, dtype=float) / sum(c1)
    p2 = np.asarray(c2, dtype=float) / sum(c2)
    cost = np.abs(np.subtract.outer(np.arange(b), np.arange(b))).ravel().astype(float)
    a_eq = np.zeros((2 * b, b * b))
    for i in range(b):
        a_eq[i, i * b : (i + 1) * b] = 1.0  # row sums = supply
        a_eq[b + i, i::b] = 1.0  # column sums = demand
    res = sciopt.linprog(cost, A_eq=a_eq, b_eq=np.concatenate([p1, p2]), method="highs")
    assert res.status == 0
    return res.fun


def hist(counts):
    return Histogram(np.asarray(counts, dtype=np.int64))


def random_counts(rng, bins, max_total=64):
    while True:
        c = rng.multinomial(int(rng.integers(1, max_total + 1)), np.ones(bins) / bins)
        if c.sum() >= 1:
            return c.astype(np.int64)


def test_emd_identical_zero():
    h = hist([3, 1, 4])
    assert emd_neuron(h, hist([3, 1, 4])) == 0.0


def test_emd_hand_examples():
    assert emd_neuron(hist([1, 0]), hist([0, 1])) == pytest.approx(1.0, abs=1e-15)
    # F1 = [.5,.5,.5,1], F2 = [0,.5,1,1] -> |diff| sums to 1.0
    assert emd_neuron(hist([2, 0, 0, 2]), hist([0, 2, 2, 0])) == pytest.approx(1.0, abs=1e-15)


def test_emd_hand_examples_match_lp_oracle():
    for c1, c2 in [([1, 0], [0, 1]), ([2, 0, 0, 2], [0, 2, 2, 0])]:
        assert emd_neuron(hist(c1), hist(c2)) == pytest.approx(transport_cost_lp(c1, c2), abs=1e-9)


def test_emd_empty_histogram_rejected():
    with pytest.raises(ValueError, match="empty"):
        emd_neuron(hist([0, 0]), hist([1, 0]))


def test_emd_bin_width_units():
    d = emd_neuron(hist([1, 0, 0, 0]), hist([0, 0, 0, 1]), bin_width_units=True)
    assert d == pytest.approx(3 * (2 / 4), abs=1e-15)


def test_emd_matches_transport_oracle(rng):
    # oracle cross-check: greedy rational vs LP on a few cases first
    for _ in range(25):
        bins = int(rng.integers(2, 9))
        c1, c2 = random_counts(rng, bins), random_counts(rng, bins)
        exact = float(transport_cost_oracle(c1, c2))
        assert exact == pytest.approx(transport_cost_lp(c1, c2), abs=1e-9)
    # implementation vs exact oracle across the full size range
    for _ in range(300):
        bins = int(rng.integers(2, 17))
        c1, c2 = random_counts(rng, bins), random_counts(rng, bins)
        assert emd_neuron(hist(c1), hist(c2)) == pytest.approx(
            float(transport_cost_oracle(c1, c2)), abs=1e-12
        )


def test_emd_metric_properties(rng):
    for _ in range(500):
        bins = int(rng.integers(2, 17))
        a, b, c = (hist(random_counts(rng, bins)) for _ in range(3))
        dab, dba = emd_neuron(a, b), emd_neuron(b, a)
        assert dab == dba
        assert emd_neuron(a, a) == 0.0
        assert dab <= emd_neuron(a, c) + emd_neuron(c, b) + 1e-12


def test_emd_replication_invariance(rng):
    for factor in (2, 7):
        for _ in range(100):
            bins = int(rng.integers(2, 17))
            c1, c2 = random_counts(rng, bins), random_counts(rng, bins)
            base = emd_neuron(hist(c1), hist(c2))
            scaled = emd_neuron(hist(c1 * factor), hist(c2))
            assert scaled == pytest.approx(base, abs=1e-12)


def make_vdna(per_neuron_counts, bins, fingerprint="cal"):
    neurons = len(per_neuron_counts)
    v = Vdna.empty(KIND_HIST, "e", (LayerSpec("L0", neurons),), bins, fingerprint)
    v.hist_counts[0] = np.asarray(per_neuron_counts, dtype=np.int64)
    v.n_images = 1
    return v


def make_gauss_vdna(moments, fingerprint="cal"):
    neurons = len(moments)
    v = Vdna.empty(KIND_GAUSS, "e", (LayerSpec("L0", neurons),), None, fingerprint)
    v.gauss_counts = [moments[0].count]
    v.gauss_sums[0] = np.array([m.sum for m in moments])
    v.gauss_sum_sqs[0] = np.array([m.sum_sq for m in moments])
    return v


def test_weighted_emd_examples():
    v1 = make_vdna([[1, 0], [2, 0, 0, 2][:2]], bins=2)
    assert emd_weighted(v1, v1, WeightVector.uniform(2)) == 0.0
    # per-neuron distances 1 and 3 on a 4-bin pair
    a = make_vdna([[1, 0, 0, 0], [1, 0, 0, 0]], bins=4)
    b = make_vdna([[0, 1, 0, 0], [0, 0, 0, 1]], bins=4)
    assert neuron_distances(a, b) == pytest.approx([1.0, 3.0])
    assert emd_weighted(a, b, WeightVector.uniform(2)) == pytest.approx(2.0)
    assert emd_weighted(a, b, WeightVector(np.array([1.0, 0.0]))) == pytest.approx(1.0)


def test_weighted_emd_is_linear_in_weights(rng):
    a = make_vdna(rng.integers(1, 9, size=(3, 6)), bins=6)
    b = make_vdna(rng.integers(1, 9, size=(3, 6)), bins=6)
    w1 = WeightVector(rng.uniform(0, 1, 3))
    w2 = WeightVector(rng.uniform(0, 1, 3))
    alpha, beta = 0.3, 1.7
    combo = WeightVector(alpha * w1.values + beta * w2.values)
    assert emd_weighted(a, b, combo) == pytest.approx(
        alpha * emd_weighted(a, b, w1) + beta * emd_weighted(a, b, w2), rel=1e-12
    )


def test_weight_cardinality_mismatch():
    a = make_vdna([[1, 0], [0, 1]], bins=2)
    with pytest.raises(ValueError, match="weight"):
        emd_weighted(a, a, WeightVector.uniform(3))


def test_incomparable_vdnas_rejected():
    a = make_vdna([[1, 0]], bins=2, fingerprint="x")
    b = make_vdna([[1, 0]], bins=2, fingerprint="y")
    with pytest.raises(IncompatibleError):
        neuron_distances(a, b)


def test_neuron_distances_localized_difference():
    base = [[4, 0, 0, 0]] * 8
    changed = [row[:] for row in base]
    changed[5] = [0, 0, 0, 4]
    a, b = make_vdna(base, bins=4), make_vdna(changed, bins=4)
    d = neuron_distances(a, b)
    assert len(d) == 8
    assert d[5] > 0
    assert np.count_nonzero(d) == 1
    assert np.all(neuron_distances(a, a) == 0.0)


def test_fd_neuron_closed_forms():
    def g(mean, std, count=100):
        total = mean * count
        sum_sq = (std**2 + mean**2) * count
        return GaussianMoments(count, total, sum_sq)

    assert fd_neuron(g(0, 1), g(0, 1)) == pytest.approx(0.0, abs=1e-9)
    assert fd_neuron(g(3, 1), g(0, 1)) == pytest.approx(3.0, abs=1e-9)
    assert fd_neuron(g(0, 2), g(0, 1)) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        fd_neuron(GaussianMoments(1, 0.0, 0.0), g(0, 1))


def test_fd_gauss_vdna_weighting():
    def g(mean, std, count=100):
        return GaussianMoments(count, mean * count, (std**2 + mean**2) * count)

    a = make_gauss_vdna([g(0, 1), g(1, 1)])
    b = make_gauss_vdna([g(2, 1), g(1, 3)])
    d = neuron_distances(a, b)
    assert d == pytest.approx([2.0, 2.0], abs=1e-9)
    assert weighted_distance(a, b) == pytest.approx(2.0, abs=1e-9)


def test_fd_layer_identical_zero(rng):
    cov = rng.standard_normal((4, 4))
    cov = cov @ cov.T + np.eye(4)
    s = LayerGaussian(rng.standard_normal(4), cov, 100)
    assert fd_layer(s, s) == pytest.approx(0.0, abs=1e-8)


def test_fd_layer_diagonal_matches_closed_form(rng):
    n = 6
    std1 = rng.uniform(0.5, 2.0, n)
    std2 = rng.uniform(0.5, 2.0, n)
    mu1 = rng.standard_normal(n)
    mu2 = rng.standard_normal(n)
    s1 = LayerGaussian(mu1, np.diag(std1**2), 100)
    s2 = LayerGaussian(mu2, np.diag(std2**2), 100)
    closed = float(np.sum((mu1 - mu2) ** 2) + np.sum((std1 - std2) ** 2))
    assert fd_layer(s1, s2) == pytest.approx(closed, abs=1e-8)


def test_fd_layer_analytic_2d():
    s1 = LayerGaussian(np.zeros(2), np.eye(2), 100)
    s2 = LayerGaussian(np.zeros(2), 4 * np.eye(2), 100)
    assert fd_layer(s1, s2) == pytest.approx(2.0, abs=1e-10)


def test_fd_layer_dimension_mismatch():
    s1 = LayerGaussian(np.zeros(2), np.eye(2), 100)
    s2 = LayerGaussian(np.zeros(3), np.eye(3), 100)
    with pytest.raises(ValueError, match="dimension"):
        fd_layer(s1, s2)


def test_fd_layer_warns_on_few_samples():
    s = LayerGaussian(np.zeros(5), np.eye(5), 3)
    with pytest.warns(UserWarning, match="rank-deficient"):
        fd_layer(s, LayerGaussian(np.zeros(5), np.eye(5), 100))


def test_weight_vector_validation():
    with pytest.raises(ValueError, match="nonnegative"):
        WeightVector(np.array([0.5, -0.1]))
    WeightVector(np.array([0.5, -0.1]), constrained_nonnegative=False)
    with pytest.raises(ValueError, match="finite"):
        WeightVector(np.array([np.nan, 0.0]), constrained_nonnegative=False)
    u = WeightVector.uniform(4)
    assert u.values.sum() == pytest.approx(1.0)
    sel = WeightVector.from_selection([1, 3], 5)
    assert sel.values.tolist() == [0.0, 0.5, 0.0, 0.5, 0.0]
