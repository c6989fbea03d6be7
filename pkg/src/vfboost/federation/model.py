"""Per-party model shards and their versioned JSON artifact format.

The guest shard stores the full tree topology, its own split thresholds and
all leaf weights; it never contains a host feature index or threshold.  Each
host shard stores only its bin edges and a map from anonymous split id to the
local (feature, bin) meaning; it never contains weights or labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..tree import Tree, TreeNode

FORMAT_VERSION = 1


def _edges_to_json(edges: list[np.ndarray]) -> list[list[float]]:
    return [[float(v) for v in e] for e in edges]


def _edges_from_json(raw) -> list[np.ndarray]:
    return [np.asarray(e, dtype=np.float64) for e in raw]


def _node_to_json(node: TreeNode) -> dict:
    out = {"id": node.node_id, "depth": node.depth}
    if node.is_leaf:
        out["weight"] = node.weight
        return out
    out.update(
        {
            "owner": node.owner_rank,
            "left": node.left,
            "right": node.right,
        }
    )
    if node.owner_rank == 0:
        out["feature"] = node.feature
        out["bin"] = node.bin_index
        out["threshold"] = node.threshold
    else:
        out["split_id"] = node.split_id
    return out


def _node_from_json(raw: dict) -> TreeNode:
    node = TreeNode(node_id=raw["id"], depth=raw["depth"])
    if "weight" in raw:
        node.weight = raw["weight"]
        return node
    node.owner_rank = raw["owner"]
    node.left = raw["left"]
    node.right = raw["right"]
    if node.owner_rank == 0:
        node.feature = raw["feature"]
        node.bin_index = raw["bin"]
        node.threshold = raw["threshold"]
    else:
        node.split_id = raw["split_id"]
    return node


@dataclass
class GuestModel:
    session_id: str
    objective: str
    n_classes: int
    multi_output: bool
    mode: str
    learning_rate: float
    feature_names: list[str]
    bin_edges: list[np.ndarray]
    trees: list[Tree] = field(default_factory=list)
    tree_meta: list[tuple[int, int]] = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "role": "guest",
            "session_id": self.session_id,
            "objective": self.objective,
            "n_classes": self.n_classes,
            "multi_output": self.multi_output,
            "mode": self.mode,
            "learning_rate": self.learning_rate,
            "feature_names": self.feature_names,
            "bin_edges": _edges_to_json(self.bin_edges),
            "trees": [
                {
                    "tree_index": i,
                    "epoch": meta[0],
                    "class_index": meta[1],
                    "nodes": [
                        _node_to_json(tree.nodes[nid]) for nid in sorted(tree.nodes)
                    ],
                }
                for i, (tree, meta) in enumerate(zip(self.trees, self.tree_meta))
            ],
            "config_echo": self.config_echo,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, raw: str) -> "GuestModel":
        doc = json.loads(raw)
        if doc.get("format_version") != FORMAT_VERSION or doc.get("role") != "guest":
            raise ConfigError("not a guest model artifact of a supported version")
        model = cls(
            session_id=doc["session_id"],
            objective=doc["objective"],
            n_classes=doc["n_classes"],
            multi_output=doc["multi_output"],
            mode=doc["mode"],
            learning_rate=doc["learning_rate"],
            feature_names=doc["feature_names"],
            bin_edges=_edges_from_json(doc["bin_edges"]),
            config_echo=doc.get("config_echo", {}),
        )
        for entry in doc["trees"]:
            tree = Tree()
            for raw_node in entry["nodes"]:
                tree.add(_node_from_json(raw_node))
            model.trees.append(tree)
            model.tree_meta.append((entry["epoch"], entry["class_index"]))
        return model


@dataclass
class HostModel:
    session_id: str
    rank: int
    feature_names: list[str]
    bin_edges: list[np.ndarray]
    # anonymous split id -> {"feature": int, "bin": int, "threshold": float}
    splits: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "role": "host",
            "rank": self.rank,
            "session_id": self.session_id,
            "feature_names": self.feature_names,
            "bin_edges": _edges_to_json(self.bin_edges),
            "splits": {str(k): v for k, v in self.splits.items()},
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, raw: str) -> "HostModel":
        doc = json.loads(raw)
        if doc.get("format_version") != FORMAT_VERSION or doc.get("role") != "host":
            raise ConfigError("not a host model artifact of a supported version")
        return cls(
            session_id=doc["session_id"],
            rank=doc["rank"],
            feature_names=doc["feature_names"],
            bin_edges=_edges_from_json(doc["bin_edges"]),
            splits={int(k): v for k, v in doc["splits"].items()},
        )


def shard_filename(rank: int) -> str:
    return "model.guest.json" if rank == 0 else f"model.host{rank}.json"
