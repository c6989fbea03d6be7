"""Dataset loading, instance-id alignment, quantile binning and vertical splits.

Binned features are stored sparsely: an instance's entry for a feature is
omitted when the raw value is exactly 0.0.  Histogram code recovers the
implicit zero bin by subtracting the stored sums from node totals.

Missing values (empty CSV cells, absent libsvm keys) are treated as 0.0 and
therefore merge with the sparse zero path.  This is intentional and keeps the
storage format uniform, but it means "missing" and "zero" are
indistinguishable downstream.
"""

from __future__ import annotations

import csv
import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError

DEFAULT_BINS = 32
MAX_BINS = 255


@dataclass
class PartyDataset:
    """One party's vertical shard: ids, features and (guest only) labels."""

    instance_ids: list
    features: np.ndarray
    feature_names: list[str]
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            self.features = self.features.reshape(len(self.instance_ids), -1)
        if len(self.instance_ids) != self.features.shape[0]:
            raise DatasetError("id count does not match feature row count")
        if len(set(map(str, self.instance_ids))) != len(self.instance_ids):
            raise DatasetError("instance ids must be unique")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64)
            if self.labels.shape[0] != self.features.shape[0]:
                raise DatasetError("label count does not match feature row count")

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def align(self, ordered_ids: list) -> "PartyDataset":
        """Reorder rows to the given id order; every id must be present locally."""
        pos = {str(v): i for i, v in enumerate(self.instance_ids)}
        try:
            rows = [pos[str(v)] for v in ordered_ids]
        except KeyError as missing:
            raise DatasetError(f"instance id {missing} not present in this shard")
        return PartyDataset(
            instance_ids=list(ordered_ids),
            features=self.features[rows],
            feature_names=list(self.feature_names),
            labels=None if self.labels is None else self.labels[rows],
        )


def _parse_cell(text: str) -> float:
    text = text.strip()
    if not text or text.lower() in ("nan", "na"):
        return 0.0
    return float(text)


def load_csv(path: str, has_labels: bool) -> PartyDataset:
    """Load ``id[,label],f1,...`` CSV with a header row.

    The first column is the instance id; with ``has_labels`` the second column
    is the label.  Empty/NaN cells become 0.0 (see module docstring).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file")
        skip = 2 if has_labels else 1
        if len(header) < skip:
            raise DatasetError(f"{path}: too few columns")
        names = [c.strip() for c in header[skip:]]
        ids, labels, rows = [], [], []
        for line in reader:
            if not line:
                continue
            ids.append(line[0].strip())
            if has_labels:
                labels.append(_parse_cell(line[1]))
            rows.append([_parse_cell(c) for c in line[skip:]])
    if not ids:
        raise DatasetError(f"{path}: no data rows")
    return PartyDataset(
        instance_ids=ids,
        features=np.asarray(rows, dtype=np.float64),
        feature_names=names,
        labels=np.asarray(labels) if has_labels else None,
    )


def load_libsvm(path: str, has_labels: bool) -> PartyDataset:
    """Load ``label idx:val ...`` rows (1-based indices, absent keys are 0.0).

    The format carries no instance ids; row numbers are used, so alignment
    across parties relies on consistent row order.
    """
    labels, entries, max_idx = [], [], 0
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            labels.append(float(parts[0]))
            row = {}
            for tok in parts[1:]:
                idx, val = tok.split(":")
                idx = int(idx)
                max_idx = max(max_idx, idx)
                row[idx - 1] = float(val)
            entries.append(row)
    if not entries:
        raise DatasetError(f"{path}: no data rows")
    X = np.zeros((len(entries), max_idx), dtype=np.float64)
    for i, row in enumerate(entries):
        for j, v in row.items():
            X[i, j] = v
    return PartyDataset(
        instance_ids=list(range(len(entries))),
        features=X,
        feature_names=[f"f{j}" for j in range(max_idx)],
        labels=np.asarray(labels) if has_labels else None,
    )


def id_digest(salt: str, instance_id) -> bytes:
    """Salted 32-byte digest of an instance id; the cross-party join key."""
    return hashlib.sha256((salt + "|" + str(instance_id)).encode()).digest()


def intersect_ids(id_lists: list[list], salt: str = "") -> list:
    """Common ids of all parties in an order every party can reproduce.

    The order is by salted digest, so it carries no information about any
    party's local ordering.  Raises :class:`DatasetError` when empty.
    """
    if len(id_lists) < 2:
        raise DatasetError("need at least two parties to intersect")
    common = set(map(str, id_lists[0]))
    for ids in id_lists[1:]:
        common &= set(map(str, ids))
    if not common:
        raise DatasetError("instance id intersection is empty")
    first = {str(v): v for v in id_lists[0]}
    return sorted((first[s] for s in common), key=lambda v: id_digest(salt, v))


@dataclass
class BinnedMatrix:
    """Sparse binned view of one party's features.

    ``rows[i]`` maps feature index -> bin index, with raw-zero entries omitted
    on purpose; ``zero_bins[f]`` is the bin raw value 0.0 falls into.
    """

    rows: list[dict]
    bin_edges: list[np.ndarray]
    zero_bins: np.ndarray
    n_bins_per_feature: np.ndarray
    n_features: int = field(init=False)

    def __post_init__(self):
        self.n_features = len(self.bin_edges)

    @property
    def n_instances(self) -> int:
        return len(self.rows)

    def bin_of(self, instance: int, feature: int) -> int:
        """Effective bin of an instance (stored entry or the implicit zero bin)."""
        return self.rows[instance].get(feature, int(self.zero_bins[feature]))

    def densify(self) -> np.ndarray:
        """Dense (n, d) bin-index matrix; test/debug helper."""
        out = np.tile(self.zero_bins.astype(np.int64), (self.n_instances, 1))
        for i, row in enumerate(self.rows):
            for f, b in row.items():
                out[i, f] = b
        return out


def bin_values(edges: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Monotone value->bin mapping; out-of-range values clamp to the edge bins."""
    return np.searchsorted(edges, values, side="right")


def quantile_bin(features: np.ndarray, n_bins: int = DEFAULT_BINS) -> BinnedMatrix:
    """Quantile-bin every feature column and store the result sparsely.

    Edges sit at empirical quantiles (exact, sort-based); duplicate edges are
    merged so a feature may end up with fewer effective bins.  A constant
    feature collapses to a single bin with a warning.
    """
    if not 2 <= n_bins <= MAX_BINS:
        raise ValueError(f"n_bins must be in [2, {MAX_BINS}]")
    features = np.asarray(features, dtype=np.float64)
    n, d = features.shape
    edges_per_feature = []
    for f in range(d):
        col = features[:, f]
        if col.max() == col.min():
            warnings.warn(f"feature {f} is constant; using a single bin")
            edges_per_feature.append(np.empty(0, dtype=np.float64))
            continue
        qs = np.quantile(col, [i / n_bins for i in range(1, n_bins)])
        edges_per_feature.append(np.unique(qs))
    zero_bins = np.array(
        [int(bin_values(e, np.array([0.0]))[0]) for e in edges_per_feature], dtype=np.int64
    )
    rows: list[dict] = [dict() for _ in range(n)]
    for f in range(d):
        col = features[:, f]
        bins = bin_values(edges_per_feature[f], col)
        nonzero = np.nonzero(col != 0.0)[0]
        for i in nonzero:
            rows[i][f] = int(bins[i])
    return BinnedMatrix(
        rows=rows,
        bin_edges=edges_per_feature,
        zero_bins=zero_bins,
        n_bins_per_feature=np.array([len(e) + 1 for e in edges_per_feature], dtype=np.int64),
    )


def split_feature_counts(n_features: int, fractions: list[float]) -> list[int]:
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    bounds = [round(sum(fractions[: i + 1]) * n_features) for i in range(len(fractions))]
    counts, prev = [], 0
    for b in bounds:
        counts.append(b - prev)
        prev = b
    return counts


def vertical_split(dataset: PartyDataset, fractions: list[float]) -> list[PartyDataset]:
    """Partition feature columns across parties; the first shard keeps the labels."""
    counts = split_feature_counts(dataset.n_features, fractions)
    shards, start = [], 0
    for k, c in enumerate(counts):
        cols = slice(start, start + c)
        shards.append(
            PartyDataset(
                instance_ids=list(dataset.instance_ids),
                features=dataset.features[:, cols].copy(),
                feature_names=list(dataset.feature_names[cols]),
                labels=dataset.labels if k == 0 else None,
            )
        )
        start += c
    return shards
