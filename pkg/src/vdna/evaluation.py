"""Evaluation protocols: retrieval ranking, precision-recall, rank discrepancy.

Ranking compares each item fingerprint against one reference fingerprint
and sorts ascending by distance, ties broken by item id so results are
reproducible. Precision-recall sweeps the ranked prefix as the retrieved
set and integrates AUC by trapezoid over recall, anchored at
(recall=0, precision of the top-1 prefix).

The cross-generalisation discrepancy compares two rankings of training sets
per validation set: the ground-truth ranking by descending transfer mIoU and
a predicted ranking by ascending dataset distance. The penalty is the mean
absolute mIoU gap between the datasets occupying the same rank. Bundled
reference data (MSeg cross-dataset transfer mIoUs and distance-based rank
matrices from several extractors) lets the whole protocol run without
training anything: predicted matrices store rank positions, which are valid
distances that reproduce the published orderings exactly, sidestepping ties
introduced by the rounding of the published distance values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .container import Vdna
from .metrics import WeightVector, weighted_distance

BUNDLED_MIOU = "mseg"
BUNDLED_PREDICTIONS = {
    "dna-emd-mugs": "mseg_rank_dna_emd_mugs.csv",
    "fd-mugs": "mseg_rank_fd_mugs.csv",
    "dna-fd-mugs": "mseg_rank_dna_fd_mugs.csv",
    "dna-emd-hrnet-all": "mseg_rank_dna_emd_hrnet_all.csv",
    "dna-emd-hrnet-val": "mseg_rank_dna_emd_hrnet_val.csv",
}


# -- ranking -------------------------------------------------------------------


@dataclass
class RankedList:
    """Items ordered by ascending distance, ties broken by id."""

    entries: list[tuple[str, float]]

    @classmethod
    def from_distances(cls, distances: Iterable[tuple[str, float]]) -> "RankedList":
        entries = sorted(distances, key=lambda e: (e[1], e[0]))
        for _, d in entries:
            if not np.isfinite(d):
                raise ValueError("ranked distances must be finite")
        return cls(entries)

    def ids(self) -> list[str]:
        return [i for i, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def rank_against_reference(
    reference: Vdna,
    items: Mapping[str, Vdna] | Iterable[tuple[str, Vdna]],
    w: WeightVector | None = None,
) -> RankedList:
    """Distance of every item fingerprint to the reference, sorted ascending."""
    pairs = items.items() if isinstance(items, Mapping) else items
    return RankedList.from_distances(
        (item_id, weighted_distance(reference, v, w)) for item_id, v in pairs
    )


def pr_curve(
    ranked: RankedList, positives: set[str]
) -> tuple[np.ndarray, np.ndarray, float]:
    """Precision and recall per ranked prefix, plus AUC.

    Every prefix of the ranked list is treated as the retrieved set. AUC is
    the trapezoidal integral of precision over recall with the conventional
    (0, precision@1) anchor.
    """
    if not positives:
        raise ValueError("need at least one positive id")
    ids = ranked.ids()
    missing = positives - set(ids)
    if missing:
        raise ValueError(f"positive ids not present in ranking: {sorted(missing)[:3]}")
    hits = np.fromiter((i in positives for i in ids), dtype=np.float64, count=len(ids))
    tp = np.cumsum(hits)
    retrieved = np.arange(1, len(ids) + 1, dtype=np.float64)
    precision = tp / retrieved
    recall = tp / len(positives)
    anchored_r = np.concatenate(([0.0], recall))
    anchored_p = np.concatenate(([precision[0]], precision))
    auc = float(np.trapezoid(anchored_p, anchored_r))
    return precision, recall, auc


# -- cross-generalisation discrepancy -------------------------------------------


@dataclass
class CrossGenTable:
    """mIoU and predicted-distance matrices over validation x training sets."""

    validation_sets: tuple[str, ...]
    training_sets: tuple[str, ...]
    miou: np.ndarray
    predicted: np.ndarray

    def __post_init__(self):
        shape = (len(self.validation_sets), len(self.training_sets))
        if self.miou.shape != shape or self.predicted.shape != shape:
            raise ValueError(f"matrices must have shape {shape}")
        if not np.isfinite(self.miou).all():
            raise ValueError("mIoU matrix contains non-finite values")
        if not np.isfinite(self.predicted).all():
            raise ValueError("predicted-distance matrix contains non-finite values")
        if ((self.miou < 0) | (self.miou > 100)).any():
            raise ValueError("mIoU values must lie in [0, 100]")


def _rank_by(names: Sequence[str], keys: np.ndarray, descending: bool) -> list[int]:
    sign = -1.0 if descending else 1.0
    return sorted(range(len(names)), key=lambda i: (sign * keys[i], names[i]))


def crossgen_discrepancy(table: CrossGenTable) -> float:
    """Mean absolute mIoU gap between ground-truth and predicted rankings.

    Per validation set, ground truth ranks training sets by descending mIoU
    and the prediction by ascending distance; ties resolve by training-set
    name so the result is deterministic.
    """
    total = 0.0
    n = 0
    for vi in range(len(table.validation_sets)):
        gt = _rank_by(table.training_sets, table.miou[vi], descending=True)
        pred = _rank_by(table.training_sets, table.predicted[vi], descending=False)
        for g, p in zip(gt, pred):
            total += abs(table.miou[vi, g] - table.miou[vi, p])
            n += 1
    return total / n


def random_ordering_baseline(
    table: CrossGenTable, trials: int, seed: int
) -> tuple[float, float]:
    """Discrepancy of uniformly random predicted orderings: (mean, sample std)."""
    if trials < 2:
        raise ValueError("need at least 2 trials for a sample std")
    rng = np.random.default_rng(seed)
    n_train = len(table.training_sets)
    values = np.empty(trials)
    for t in range(trials):
        shuffled = CrossGenTable(
            table.validation_sets,
            table.training_sets,
            table.miou,
            np.array(
                [rng.permutation(n_train) for _ in range(len(table.validation_sets))],
                dtype=np.float64,
            ),
        )
        values[t] = crossgen_discrepancy(shuffled)
    return float(values.mean()), float(values.std(ddof=1))


# -- CSV I/O --------------------------------------------------------------------
#
# All CSV output uses '.' decimals, ',' separators and '\n' line endings.


def write_matrix_csv(path, row_names, col_names, matrix, corner="validation"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([corner] + list(col_names))
        for name, row in zip(row_names, matrix):
            w.writerow([name] + [_fmt(x) for x in row])


def read_matrix_csv(path) -> tuple[tuple[str, ...], tuple[str, ...], np.ndarray]:
    """Read a matrix CSV: header row = column names, first column = row names."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or len(rows[0]) < 2:
        raise ValueError(f"{path}: matrix CSV needs a header row and at least one data row")
    col_names = tuple(rows[0][1:])
    row_names = []
    data = []
    for row in rows[1:]:
        if len(row) != len(col_names) + 1:
            raise ValueError(f"{path}: row {row[0]!r} has {len(row) - 1} values, "
                             f"expected {len(col_names)}")
        row_names.append(row[0])
        data.append([float(x) for x in row[1:]])
    return tuple(row_names), col_names, np.asarray(data)


def load_crossgen(miou_csv, predicted_csv) -> CrossGenTable:
    """Build a table from two matrix CSVs, aligning row/column names."""
    val_names, train_names, miou = read_matrix_csv(miou_csv)
    pval, ptrain, predicted = read_matrix_csv(predicted_csv)
    if set(pval) != set(val_names) or set(ptrain) != set(train_names):
        raise ValueError("mIoU and prediction matrices name different datasets")
    # align prediction matrix onto the mIoU matrix's ordering
    vi = [pval.index(v) for v in val_names]
    ti = [ptrain.index(t) for t in train_names]
    return CrossGenTable(val_names, train_names, miou, predicted[np.ix_(vi, ti)])


def bundled_fixture_path(name: str) -> Path:
    """Path of a bundled reference CSV ('mseg' or a prediction key)."""
    if name == BUNDLED_MIOU:
        fname = "mseg_miou.csv"
    elif name in BUNDLED_PREDICTIONS:
        fname = BUNDLED_PREDICTIONS[name]
    else:
        known = [BUNDLED_MIOU] + sorted(BUNDLED_PREDICTIONS)
        raise ValueError(f"unknown bundled fixture {name!r}; known: {known}")
    return Path(str(resources.files("vdna").joinpath("data", fname)))


def write_ranked_csv(path, ranked: RankedList) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "distance"])
        for item_id, d in ranked.entries:
            w.writerow([item_id, _fmt(d)])


def read_ranked_csv(path) -> RankedList:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["id", "distance"]:
        raise ValueError(f"{path}: expected header 'id,distance'")
    entries = [(r[0], float(r[1])) for r in rows[1:]]
    for (_, a), (_, b) in zip(entries, entries[1:]):
        if b < a:
            raise ValueError(f"{path}: distances are not nondecreasing")
    return RankedList(entries)


def write_pr_csv(path, precision: np.ndarray, recall: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recall", "precision"])
        for r, p in zip(recall, precision):
            w.writerow([_fmt(r), _fmt(p)])


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)
