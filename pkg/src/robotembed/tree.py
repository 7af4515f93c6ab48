"""Rooted trees with per-node feature vectors.

Edge data (link lengths) is folded into the child node's features, so the
tree itself only stores parent/child links and node features.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .kinematics import ChainStructure, DimensionError, Point2


@dataclass(frozen=True)
class NodeRecord:
    parent: Optional[int]
    children: tuple[int, ...]
    features: tuple[float, ...]


@dataclass(frozen=True)
class RobotTree:
    nodes: tuple[NodeRecord, ...]
    root: int = 0
    graph_feature: Optional[tuple[float, ...]] = None
    _order: tuple[int, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        self._validate()
        object.__setattr__(self, "_order", tuple(self._preorder()))

    def _validate(self):
        n = len(self.nodes)
        if n == 0:
            raise ValueError("empty tree")
        if not 0 <= self.root < n or self.nodes[self.root].parent is not None:
            raise ValueError("root must exist and have no parent")
        width = len(self.nodes[0].features)
        for i, node in enumerate(self.nodes):
            if len(node.features) != width:
                raise ValueError("feature width differs between nodes")
            if len(set(node.children)) != len(node.children):
                raise ValueError(f"duplicate children at node {i}")
            for c in node.children:
                if not 0 <= c < n or self.nodes[c].parent != i:
                    raise ValueError(f"inconsistent parent/child link {i}->{c}")
            if i != self.root and node.parent is None:
                raise ValueError(f"node {i} has no parent")
            if node.parent is not None and i not in self.nodes[node.parent].children:
                raise ValueError(f"node {i} missing from its parent's children")

    def _preorder(self):
        out, stack = [], [self.root]
        while stack:
            i = stack.pop()
            out.append(i)
            stack.extend(reversed(self.nodes[i].children))
        if len(out) != len(self.nodes):
            raise ValueError("tree is disconnected or cyclic")
        return out

    def __len__(self):
        return len(self.nodes)

    @property
    def feature_width(self) -> int:
        return len(self.nodes[0].features)

    @property
    def features(self) -> np.ndarray:
        return np.array([n.features for n in self.nodes], dtype=float)

    @property
    def parents(self) -> list:
        return [n.parent for n in self.nodes]

    def with_features(self, features) -> "RobotTree":
        feats = np.asarray(features, dtype=float)
        nodes = tuple(NodeRecord(n.parent, n.children, tuple(map(float, f)))
                      for n, f in zip(self.nodes, feats))
        return RobotTree(nodes, self.root, self.graph_feature)

    def skeleton(self) -> "RobotTree":
        """Same topology with width-0 features."""
        nodes = tuple(NodeRecord(n.parent, n.children, ()) for n in self.nodes)
        return RobotTree(nodes, self.root, None)

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "nodes": [{"parent": n.parent, "children": list(n.children),
                       "features": list(n.features)} for n in self.nodes],
            "graph_feature": None if self.graph_feature is None else list(self.graph_feature),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RobotTree":
        nodes = tuple(NodeRecord(n["parent"], tuple(n["children"]),
                                 tuple(float(v) for v in n["features"]))
                      for n in d["nodes"])
        gf = d.get("graph_feature")
        return cls(nodes, int(d.get("root", 0)),
                   None if gf is None else tuple(float(v) for v in gf))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "RobotTree":
        return cls.from_dict(json.loads(s))


def preorder(tree: RobotTree) -> list[int]:
    return list(tree._order)


def chain_tree(features: Sequence[Sequence[float]], graph_feature=None) -> RobotTree:
    """Linear chain 0 -> 1 -> ... -> n-1 carrying the given node features."""
    n = len(features)
    nodes = tuple(
        NodeRecord(None if i == 0 else i - 1,
                   (i + 1,) if i + 1 < n else (),
                   tuple(float(v) for v in features[i]))
        for i in range(n))
    gf = None if graph_feature is None else tuple(float(v) for v in graph_feature)
    return RobotTree(nodes, 0, gf)


def structure_to_tree(structure: ChainStructure) -> RobotTree:
    n = structure.n_joints
    feats = [[0.0, 0.0]]
    for i, length in enumerate(structure.link_lengths):
        feats.append([length, 1.0 if i == n - 1 else 0.0])
    return chain_tree(feats)


def tree_to_structure(tree: RobotTree) -> ChainStructure:
    order = preorder(tree)
    return ChainStructure(tuple(tree.nodes[i].features[0] for i in order[1:]))


def pose_to_tree(structure: ChainStructure, pose: Sequence[float], ee: Point2) -> RobotTree:
    if len(pose) != structure.n_joints:
        raise DimensionError(
            f"pose has {len(pose)} angles, structure has {structure.n_joints} joints")
    feats = [[float(s)] for s in pose] + [[0.0]]
    return chain_tree(feats, graph_feature=(float(ee[0]), float(ee[1])))


def tree_depths(tree: RobotTree) -> list[int]:
    depth = [0] * len(tree)
    for i in preorder(tree)[1:]:
        depth[i] = depth[tree.nodes[i].parent] + 1
    return depth
