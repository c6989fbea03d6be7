"""Split gain and leaf weight math, tree node structures, growth bookkeeping.

The same gain/weight functions and node-fate rules run on the guest, on the
hosts and in the single-process plaintext trainer, so every participant
derives identical tree topology from the same inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GUEST_RANK = 0


def gh_total(g: np.ndarray, h: np.ndarray, indices: np.ndarray) -> tuple[float, float]:
    """Node totals; one shared summation path keeps parties bit-identical."""
    return float(g[indices].sum()), float(h[indices].sum())


def gh_total_vec(G: np.ndarray, H: np.ndarray, indices: np.ndarray):
    return G[indices].sum(axis=0), H[indices].sum(axis=0)


def split_gain(g_l, h_l, g_r, h_r, g, h, reg_lambda: float) -> float:
    """Second-order gain of splitting a node into (left, right)."""
    return 0.5 * (
        g_l * g_l / (h_l + reg_lambda)
        + g_r * g_r / (h_r + reg_lambda)
        - g * g / (h + reg_lambda)
    )


def leaf_weight(g_sum: float, h_sum: float, reg_lambda: float) -> float:
    return -g_sum / (h_sum + reg_lambda)


def mo_leaf_weight(g_vec: np.ndarray, h_vec: np.ndarray, reg_lambda: float) -> np.ndarray:
    return -np.asarray(g_vec) / (np.asarray(h_vec) + reg_lambda)


def mo_score(g_vec: np.ndarray, h_vec: np.ndarray, reg_lambda: float) -> float:
    g_vec = np.asarray(g_vec, dtype=np.float64)
    h_vec = np.asarray(h_vec, dtype=np.float64)
    return float(-0.5 * np.sum(g_vec * g_vec / (h_vec + reg_lambda)))


def mo_gain(parent, left, right, reg_lambda: float) -> float:
    """Multi-output gain: parent score minus the two child scores.

    Each argument is a ``(g_vec, h_vec)`` pair of per-class sums.
    """
    return mo_score(*parent, reg_lambda) - (
        mo_score(*left, reg_lambda) + mo_score(*right, reg_lambda)
    )


@dataclass
class TreeNode:
    """One node of a federated tree as the guest records it.

    Host-owned internal nodes carry only the owner rank and an anonymous
    split id; the owning host keeps the (feature, bin) meaning of that id.
    """

    node_id: int
    depth: int
    owner_rank: int = -1
    feature: int = -1          # guest-owned splits only
    bin_index: int = -1        # guest-owned splits only
    threshold: float | None = None
    split_id: int = -1         # host-owned splits only
    left: int = -1
    right: int = -1
    weight: float | list | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left < 0


@dataclass
class Tree:
    nodes: dict = field(default_factory=dict)
    # training-time bookkeeping: node_id -> instance index array (guest only)
    node_indices: dict = field(default_factory=dict)

    def add(self, node: TreeNode) -> TreeNode:
        self.nodes[node.node_id] = node
        return node

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes.values() if n.is_leaf]


@dataclass
class NodeState:
    """Per-node growth bookkeeping shared by every party."""

    node_id: int
    depth: int
    indices: np.ndarray
    parent_id: int = -1
    sibling_id: int = -1

    @property
    def count(self) -> int:
        return int(self.indices.shape[0])


def child_fates(
    left_count: int,
    right_count: int,
    child_depth: int,
    max_depth: int,
    min_samples: int,
) -> tuple[bool, bool]:
    """Decide whether each child of a fresh split becomes a leaf.

    A degenerate split (an empty child) finalizes both children; otherwise a
    child is a leaf when the depth limit is reached or it is too small to
    split further.
    """
    if left_count == 0 or right_count == 0:
        return True, True
    depth_stop = child_depth >= max_depth
    return (
        depth_stop or left_count < min_samples,
        depth_stop or right_count < min_samples,
    )


class FullMembership:
    """Routes the complete instance set through the growing tree.

    Tree structure is decided on the (possibly subsampled) training set, but
    score updates and training-set predictions cover every instance; the
    full-length assignment masks make that routing possible on every party.
    """

    def __init__(self, n_instances: int):
        self.indices = {0: np.arange(n_instances, dtype=np.int64)}

    def split(self, parent_id: int, left_id: int, right_id: int, left_mask: np.ndarray):
        idx = self.indices[parent_id]
        going = left_mask[idx]
        self.indices[left_id] = idx[going]
        self.indices[right_id] = idx[~going]


class NodeBatchTracker:
    """Deterministic node-id assignment and layer batches during tree growth.

    Every party runs one tracker with identical inputs, which guarantees the
    same node ids and the same layer batches everywhere.
    """

    def __init__(self, root_indices: np.ndarray):
        self.next_id = 1
        self.batch: list[NodeState] = [
            NodeState(node_id=0, depth=0, indices=np.asarray(root_indices, dtype=np.int64))
        ]

    def advance(
        self,
        splits: dict,
        max_depth: int,
        min_samples: int,
    ) -> tuple[list[NodeState], list[tuple[NodeState, bool]]]:
        """Consume this layer's split decisions and produce the next batch.

        ``splits`` maps node_id -> boolean left-membership mask over the full
        instance order (nodes absent from the map were finalized as leaves).
        Returns ``(next_batch, children)`` where children pairs each new
        :class:`NodeState` with an ``is_leaf`` flag, in creation order.
        """
        next_batch: list[NodeState] = []
        children: list[tuple[NodeState, bool]] = []
        for node in self.batch:
            if node.node_id not in splits:
                continue
            left_mask = splits[node.node_id]
            idx = node.indices
            going_left = left_mask[idx]
            left_idx = idx[going_left]
            right_idx = idx[~going_left]
            left_id, right_id = self.next_id, self.next_id + 1
            self.next_id += 2
            left_leaf, right_leaf = child_fates(
                len(left_idx), len(right_idx), node.depth + 1, max_depth, min_samples
            )
            ln = NodeState(left_id, node.depth + 1, left_idx, node.node_id, right_id)
            rn = NodeState(right_id, node.depth + 1, right_idx, node.node_id, left_id)
            children.append((ln, left_leaf))
            children.append((rn, right_leaf))
            if not left_leaf:
                next_batch.append(ln)
            if not right_leaf:
                next_batch.append(rn)
        self.batch = next_batch
        return next_batch, children
