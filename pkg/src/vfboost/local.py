"""Single-process plaintext trainer over vertically partitioned data.

Runs the exact growth logic of the federated protocol — same binning, same
histogram engine, same candidate filtering, gain math, tie-breaking and node
fates — but with every party's statistics in the clear in one process.  It is
the reference the encrypted pipeline is checked against, and doubles as a
fast non-private trainer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import BinnedMatrix, PartyDataset, bin_values, quantile_bin
from .errors import ConfigError, DatasetError
from .goss import epoch_seed, goss_sample
from .histogram import FloatGHOps, FloatVecOps, HistogramEngine, cumsum_candidates
from .losses import (
    logloss_grad_hess,
    logloss_value,
    one_hot,
    sigmoid,
    softmax,
    softmax_grad_hess,
    softmax_xent_value,
)
from .metrics import accuracy_score, auc_score
from .modes import candidate_parties, tree_owner, validate_mode
from .selection import Candidate, guest_key, select_best_split
from .tree import (
    FullMembership,
    NodeBatchTracker,
    Tree,
    TreeNode,
    gh_total,
    gh_total_vec,
    leaf_weight,
    mo_leaf_weight,
)


@dataclass
class TrainLogEntry:
    tree_round: int
    epoch: int
    class_index: int
    loss: float
    metric: float
    n_selected: int


@dataclass
class GBDTParams:
    """Hyper-parameters shared by the plaintext and federated trainers."""

    n_trees: int = 25
    max_depth: int = 5
    learning_rate: float = 0.3
    max_bins: int = 32
    reg_lambda: float = 0.1
    min_gain: float = 1e-4
    min_samples: int = 2
    objective: str = "binary"  # binary | multiclass
    n_classes: int = 2
    multi_output: bool = False
    goss_enabled: bool = False
    top_rate: float = 0.2
    other_rate: float = 0.1
    seed: int = 0
    use_subtraction: bool = True
    mode: str = "default"
    tree_per_party: int = 1
    guest_depth: int = 0
    host_depth: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.objective not in ("binary", "multiclass"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.objective == "multiclass" and self.n_classes < 2:
            raise ConfigError("multiclass needs n_classes >= 2")
        if self.mode == "mo":
            self.multi_output = True

    def tree_rounds(self) -> list[tuple[int, int]]:
        """(epoch, class_index) per grown tree; class -1 = single-output tree."""
        if self.objective == "multiclass" and not self.multi_output:
            return [(t, c) for t in range(self.n_trees) for c in range(self.n_classes)]
        return [(t, -1) for t in range(self.n_trees)]


class LocalGBDT:
    """Plaintext GBDT over one or more vertical shards; shard 0 holds labels."""

    def __init__(self, params: GBDTParams):
        self.params = params
        self.trees: list[Tree] = []
        self.tree_meta: list[tuple[int, int]] = []  # (epoch, class_index)
        self.binned: list[BinnedMatrix] = []
        self.bin_edges: list[list[np.ndarray]] = []
        self.log: list[TrainLogEntry] = []
        self._dense_bins: list[np.ndarray] = []

    # -- training ----------------------------------------------------------

    def fit(self, parties: list[PartyDataset]) -> "LocalGBDT":
        p = self.params
        if parties[0].labels is None:
            raise DatasetError("party 0 (guest) must hold labels")
        n = parties[0].n_instances
        if any(ds.n_instances != n for ds in parties):
            raise DatasetError("parties are not aligned to a common instance order")
        validate_mode(p.mode, len(parties) - 1, p.guest_depth, p.host_depth, p.max_depth)

        y = parties[0].labels
        self.binned = [quantile_bin(ds.features, p.max_bins) for ds in parties]
        self.bin_edges = [b.bin_edges for b in self.binned]
        self._dense_bins = [b.densify() for b in self.binned]

        mo = p.multi_output or p.mode == "mo"
        if p.objective == "multiclass":
            Y = one_hot(y.astype(np.int64), p.n_classes)
            scores = np.zeros((n, p.n_classes))
        else:
            scores = np.zeros(n)

        for tree_round, (epoch, class_index) in enumerate(p.tree_rounds()):
            if p.objective == "multiclass":
                G_all, H_all = softmax_grad_hess(Y, scores)
                if mo:
                    g_w, h_w = G_all.copy(), H_all.copy()
                else:
                    g_w, h_w = G_all[:, class_index].copy(), H_all[:, class_index].copy()
            else:
                g_raw, h_raw = logloss_grad_hess(y, scores)
                if mo:
                    # mo machinery over a binary task: one-class vectors
                    g_w, h_w = g_raw[:, None].copy(), h_raw[:, None].copy()
                else:
                    g_w, h_w = g_raw.copy(), h_raw.copy()

            root_idx = np.arange(n, dtype=np.int64)
            if p.goss_enabled:
                norms = (
                    np.linalg.norm(g_w, axis=1) if g_w.ndim == 2 else np.abs(g_w)
                )
                root_idx, mult = goss_sample(
                    norms, p.top_rate, p.other_rate,
                    rng_seed=epoch_seed(p.seed, tree_round),
                )
                if g_w.ndim == 2:
                    g_w[root_idx] *= mult[:, None]
                    h_w[root_idx] *= mult[:, None]
                else:
                    g_w[root_idx] *= mult
                    h_w[root_idx] *= mult

            tree = self._grow_tree(tree_round, root_idx, g_w, h_w, mo)
            self.trees.append(tree)
            self.tree_meta.append((epoch, class_index))
            self._apply_tree(tree, scores, class_index, mo)

            if p.objective == "multiclass":
                loss = softmax_xent_value(Y, scores)
                metric = accuracy_score(y, np.argmax(scores, axis=1))
            else:
                loss = logloss_value(y, scores)
                try:
                    metric = auc_score(y, scores)
                except ValueError:
                    metric = float("nan")
            self.log.append(
                TrainLogEntry(tree_round, epoch, class_index, loss, metric, len(root_idx))
            )
        return self

    def _grow_tree(self, tree_round, root_idx, g_w, h_w, mo) -> Tree:
        p = self.params
        ops = FloatVecOps if mo else FloatGHOps
        payload = list(zip(g_w, h_w))
        engines = [
            HistogramEngine(b, payload, ops, use_subtraction=p.use_subtraction)
            for b in self.binned
        ]
        tree = Tree()
        tree.add(TreeNode(node_id=0, depth=0))
        tracker = NodeBatchTracker(root_idx)
        full = FullMembership(self.binned[0].n_instances)

        while tracker.batch:
            batch = tracker.batch
            depth = batch[0].depth
            active = candidate_parties(
                p.mode, depth, len(self.binned),
                tree_round=tree_round, tree_per_party=p.tree_per_party,
                host_depth=p.host_depth,
            )
            layer_hists = {rank: engines[rank].compute_layer(batch) for rank in active}
            splits = {}
            for node in batch:
                totals = (
                    gh_total_vec(g_w, h_w, node.indices)
                    if mo
                    else gh_total(g_w, h_w, node.indices)
                )
                candidates = []
                for rank in active:
                    hist, _total = layer_hists[rank][node.node_id]
                    for rc in cumsum_candidates(hist, node.count, ops):
                        g_l, h_l = rc.cell
                        candidates.append(
                            Candidate(
                                party_rank=rank,
                                key=guest_key(rc.feature, rc.bin_index),
                                g_left=g_l,
                                h_left=h_l,
                                left_count=rc.left_count,
                                feature=rc.feature,
                                bin_index=rc.bin_index,
                            )
                        )
                best = select_best_split(
                    candidates, totals[0], totals[1], p.reg_lambda, p.min_gain,
                    multi_output=mo,
                )
                rec = tree.nodes[node.node_id]
                if best is None:
                    self._set_leaf(rec, totals, mo)
                    continue
                owner_bins = self._dense_bins[best.party_rank][:, best.feature]
                splits[node.node_id] = owner_bins <= best.bin_index
                rec.owner_rank = best.party_rank
                rec.feature = best.feature
                rec.bin_index = best.bin_index
                edges = self.bin_edges[best.party_rank][best.feature]
                if best.bin_index < len(edges):
                    rec.threshold = float(edges[best.bin_index])
            next_batch, children = tracker.advance(splits, p.max_depth, p.min_samples)
            for state, is_leaf in children:
                child = tree.add(TreeNode(node_id=state.node_id, depth=state.depth))
                parent = tree.nodes[state.parent_id]
                if parent.left < 0:
                    parent.left = state.node_id
                    full.split(state.parent_id, state.node_id, state.sibling_id,
                               splits[state.parent_id])
                else:
                    parent.right = state.node_id
                if is_leaf:
                    totals = (
                        gh_total_vec(g_w, h_w, state.indices)
                        if mo
                        else gh_total(g_w, h_w, state.indices)
                    )
                    self._set_leaf(child, totals, mo)
        tree.node_indices = full.indices
        return tree

    def _set_leaf(self, rec: TreeNode, totals, mo: bool):
        lam = self.params.reg_lambda
        if mo:
            rec.weight = mo_leaf_weight(totals[0], totals[1], lam).tolist()
        else:
            rec.weight = leaf_weight(totals[0], totals[1], lam)

    def _apply_tree(self, tree: Tree, scores, class_index: int, mo: bool):
        lr = self.params.learning_rate
        for node in sorted(tree.leaves(), key=lambda r: r.node_id):
            idx = tree.node_indices[node.node_id]
            if len(idx) == 0:
                continue
            if mo:
                scores[idx] += lr * np.asarray(node.weight)
            elif self.params.objective == "multiclass":
                scores[idx, class_index] += lr * node.weight
            else:
                scores[idx] += lr * node.weight

    # -- inference -----------------------------------------------------------

    def predict_margin(self, parties: list[PartyDataset]) -> np.ndarray:
        p = self.params
        n = parties[0].n_instances
        dense = []
        for rank, ds in enumerate(parties):
            edges = self.bin_edges[rank]
            cols = [bin_values(edges[f], ds.features[:, f]) for f in range(len(edges))]
            dense.append(np.stack(cols, axis=1) if cols else np.zeros((n, 0), dtype=np.int64))
        mo = p.multi_output or p.mode == "mo"
        if p.objective == "multiclass":
            scores = np.zeros((n, p.n_classes))
        else:
            scores = np.zeros(n)
        lr = p.learning_rate
        for tree, (epoch, class_index) in zip(self.trees, self.tree_meta):
            frontier = [(tree.root, np.arange(n, dtype=np.int64))]
            while frontier:
                node, idx = frontier.pop()
                if len(idx) == 0:
                    continue
                if node.is_leaf:
                    if node.weight is None:
                        continue
                    if mo:
                        scores[idx] += lr * np.asarray(node.weight)
                    elif p.objective == "multiclass":
                        scores[idx, class_index] += lr * node.weight
                    else:
                        scores[idx] += lr * node.weight
                    continue
                bins = dense[node.owner_rank][idx, node.feature]
                left = bins <= node.bin_index
                frontier.append((tree.nodes[node.left], idx[left]))
                frontier.append((tree.nodes[node.right], idx[~left]))
        return scores

    def predict_proba(self, parties: list[PartyDataset]) -> np.ndarray:
        margin = self.predict_margin(parties)
        if margin.ndim == 2:
            return softmax(margin)
        return sigmoid(margin)
