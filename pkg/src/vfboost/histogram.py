"""Sparse-aware histograms over pluggable cell arithmetic.

One histogram routine serves three payload kinds:

* float (g, h) tuples — guest-local features and the plaintext trainer,
* packed big integers — plaintext view of the encrypted pipeline (tests),
* ciphertexts (scalar or per-class vectors) — host-side computation.

Cells start as ``None`` (empty); only stored (non-zero-valued) entries are
accumulated.  The implicit zero bin is recovered afterwards by subtracting
each feature's stored sum from the node total, and a sibling histogram is
derived from the parent by cell-wise subtraction instead of a direct build.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BinnedMatrix
from .errors import CorruptionError
from .paillier import he_add, he_sub


class FloatGHOps:
    """Cells are (g_sum, h_sum) float tuples."""

    @staticmethod
    def add(a, b):
        return (a[0] + b[0], a[1] + b[1])

    @staticmethod
    def sub(a, b):
        return (a[0] - b[0], a[1] - b[1])


class FloatVecOps:
    """Cells are (g_vec, h_vec) numpy-array pairs (multi-output trees)."""

    @staticmethod
    def add(a, b):
        return (a[0] + b[0], a[1] + b[1])

    @staticmethod
    def sub(a, b):
        return (a[0] - b[0], a[1] - b[1])


class IntOps:
    """Cells are packed non-negative integers."""

    @staticmethod
    def add(a, b):
        return a + b

    @staticmethod
    def sub(a, b):
        if a < b:
            raise CorruptionError("packed-cell subtraction would underflow")
        return a - b


class CipherOps:
    """Cells are single ciphertexts of packed aggregates."""

    @staticmethod
    def add(a, b):
        return he_add(a, b)

    @staticmethod
    def sub(a, b):
        return he_sub(a, b)


class CipherPairOps:
    """Cells are (cipher_g, cipher_h) pairs; the unpacked baseline pipeline."""

    @staticmethod
    def add(a, b):
        return (he_add(a[0], b[0]), he_add(a[1], b[1]))

    @staticmethod
    def sub(a, b):
        return (he_sub(a[0], b[0]), he_sub(a[1], b[1]))


class CipherVecOps:
    """Cells are lists of ciphertexts (multi-output packed class groups)."""

    @staticmethod
    def add(a, b):
        return [he_add(x, y) for x, y in zip(a, b)]

    @staticmethod
    def sub(a, b):
        return [he_sub(x, y) for x, y in zip(a, b)]


class Histogram:
    """Per-node accumulator: one cell and one count per (feature, bin)."""

    __slots__ = ("node_id", "cells", "counts", "layout")

    def __init__(self, node_id: int, layout):
        self.node_id = node_id
        self.layout = [int(b) for b in layout]
        self.cells = [[None] * b for b in self.layout]
        self.counts = [[0] * b for b in self.layout]

    @property
    def n_features(self) -> int:
        return len(self.layout)

    def total_count(self) -> int:
        return sum(self.counts[0]) if self.layout else 0


def payload_total(payload, indices, ops):
    """Fold the node's payload entries into a single total cell (None if empty)."""
    total = None
    for i in indices:
        v = payload[i]
        total = v if total is None else ops.add(total, v)
    return total


def build_histogram(
    binned: BinnedMatrix, indices: np.ndarray, payload, ops, node_id: int = -1
) -> Histogram:
    """Accumulate stored (non-zero) entries of the node's instances.

    ``payload[i]`` is instance *i*'s cell contribution in the aligned order.
    The zero bin stays implicit until :func:`recover_zero_bin`.
    """
    hist = Histogram(node_id, binned.n_bins_per_feature)
    cells, counts = hist.cells, hist.counts
    rows = binned.rows
    for i in indices:
        v = payload[i]
        for f, b in rows[i].items():
            cur = cells[f][b]
            cells[f][b] = v if cur is None else ops.add(cur, v)
            counts[f][b] += 1
    return hist


def recover_zero_bin(hist: Histogram, node_total, node_count: int, binned: BinnedMatrix, ops):
    """Fill each feature's zero bin with (node total - stored sum), in place.

    After recovery every feature's bins sum to the node total and the counts
    are true instance counts.
    """
    for f in range(hist.n_features):
        stored = None
        stored_count = 0
        for b in range(hist.layout[f]):
            cell = hist.cells[f][b]
            if cell is not None:
                stored = cell if stored is None else ops.add(stored, cell)
            stored_count += hist.counts[f][b]
        zb = int(binned.zero_bins[f])
        missing = node_count - stored_count
        if node_total is None:
            continue
        delta = node_total if stored is None else ops.sub(node_total, stored)
        cur = hist.cells[f][zb]
        hist.cells[f][zb] = delta if cur is None else ops.add(cur, delta)
        hist.counts[f][zb] += missing
    return hist


def histogram_subtract(parent: Histogram, child: Histogram, ops, node_id: int = -1) -> Histogram:
    """Sibling histogram as parent minus child, cell-wise."""
    if parent.layout != child.layout:
        raise CorruptionError("histogram layouts differ")
    out = Histogram(node_id, parent.layout)
    for f in range(parent.n_features):
        for b in range(parent.layout[f]):
            p, c = parent.cells[f][b], child.cells[f][b]
            pc, cc = parent.counts[f][b], child.counts[f][b]
            if cc > pc:
                raise CorruptionError("child bin count exceeds parent bin count")
            out.counts[f][b] = pc - cc
            if c is None:
                out.cells[f][b] = p
            elif p is None:
                raise CorruptionError("child histogram has entries missing from parent")
            else:
                out.cells[f][b] = ops.sub(p, c)
    return out


@dataclass
class RawCandidate:
    """A pre-anonymization split candidate: left-prefix aggregate at one bin."""

    feature: int
    bin_index: int
    cell: object
    left_count: int


def cumsum_candidates(hist: Histogram, node_count: int, ops) -> list[RawCandidate]:
    """Prefix-sum each feature's bins and emit one candidate per usable bin.

    A bin yields a candidate when it holds at least one instance and its
    prefix leaves a non-empty right side; this skips duplicate aggregates
    from empty bins and the trailing no-op split.
    """
    out = []
    for f in range(hist.n_features):
        run = None
        run_count = 0
        for b in range(hist.layout[f]):
            cell = hist.cells[f][b]
            cnt = hist.counts[f][b]
            if cell is not None:
                run = cell if run is None else ops.add(run, cell)
            run_count += cnt
            if cnt > 0 and 0 < run_count < node_count and run is not None:
                out.append(RawCandidate(feature=f, bin_index=b, cell=run, left_count=run_count))
    return out


class HistogramEngine:
    """Per-party, per-tree engine: smaller-child builds plus sibling subtraction.

    ``payload[i]`` must be the cell contribution of aligned instance ``i``.
    The cache keeps one layer of histograms and node totals so children can
    be derived from their parents.
    """

    def __init__(self, binned: BinnedMatrix, payload, ops, use_subtraction: bool = True):
        self.binned = binned
        self.payload = payload
        self.ops = ops
        self.use_subtraction = use_subtraction
        self._cache: dict[int, tuple[Histogram, object]] = {}

    def compute_layer(self, nodes) -> dict[int, tuple[Histogram, object]]:
        """Histograms and totals for a batch of sibling-paired nodes."""
        by_id = {n.node_id: n for n in nodes}
        done: dict[int, tuple[Histogram, object]] = {}
        for node in nodes:
            if node.node_id in done:
                continue
            sibling = by_id.get(node.sibling_id)
            if (
                not self.use_subtraction
                or sibling is None
                or node.parent_id < 0
                or node.parent_id not in self._cache
            ):
                done[node.node_id] = self._direct(node)
                continue
            # Strictly fewer instances is built directly; ties go to the left
            # child (the lower node id).
            first, second = node, sibling
            if sibling.count < node.count:
                first, second = sibling, node
            hist_first, total_first = self._direct(first)
            parent_hist, parent_total = self._cache[node.parent_id]
            hist_second = histogram_subtract(parent_hist, hist_first, self.ops, second.node_id)
            total_second = (
                parent_total
                if total_first is None
                else self.ops.sub(parent_total, total_first)
            )
            done[first.node_id] = (hist_first, total_first)
            done[second.node_id] = (hist_second, total_second)
        self._cache = done
        return done

    def _direct(self, node) -> tuple[Histogram, object]:
        hist = build_histogram(self.binned, node.indices, self.payload, self.ops, node.node_id)
        total = payload_total(self.payload, node.indices, self.ops)
        recover_zero_bin(hist, total, node.count, self.binned, self.ops)
        return hist, total
