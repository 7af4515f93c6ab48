"""Directional tree message passing.

A downward pass sends messages from each parent to its children, an upward
pass aggregates (mean) the messages of all children into their parent. Both
directions have their own message network and GRU update. Trees are batched
into a ``Forest`` and processed level by level; within a pass a node always
sees the state its sender already has *in this pass*, which makes the level
schedule identical to visiting nodes in preorder (down) or reverse preorder
(up).
"""
from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .nn import Dense, GruCell, ModelParams
from .tree import RobotTree, tree_depths

EMBED_DIM = 8
HIDDEN_DIM = 8


class Forest:
    """Several trees stacked into one node array with precomputed schedules."""

    def __init__(self, trees: Sequence[RobotTree]):
        if isinstance(trees, RobotTree):
            trees = [trees]
        self.trees = list(trees)
        widths = {t.feature_width for t in self.trees}
        if len(widths) > 1:
            raise ValueError("trees in a forest must share a feature width")
        self.feature_width = widths.pop()
        sizes = [len(t) for t in self.trees]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.n_nodes = int(self.offsets[-1])
        self.n_trees = len(self.trees)
        self.node_tree = np.repeat(np.arange(self.n_trees), sizes)

        parent = np.full(self.n_nodes, -1)
        depth = np.zeros(self.n_nodes, dtype=int)
        has_child = np.zeros(self.n_nodes, dtype=bool)
        roots = []
        for t, off in zip(self.trees, self.offsets):
            roots.append(off + t.root)
            for i, d in enumerate(tree_depths(t)):
                depth[off + i] = d
                node = t.nodes[i]
                if node.parent is not None:
                    parent[off + i] = off + node.parent
                has_child[off + i] = bool(node.children)
        self.parent = parent
        self.depth = depth
        self.roots = np.asarray(roots, dtype=int)
        self.leaves = np.flatnonzero(~has_child)
        if self.feature_width:
            self.features = np.concatenate([t.features for t in self.trees], axis=0)
        else:
            self.features = np.zeros((self.n_nodes, 0))

        max_depth = int(depth.max())
        self.down_levels = []
        for d in range(1, max_depth + 1):
            nodes = np.flatnonzero(depth == d)
            self.down_levels.append((nodes, parent[nodes]))
        self.up_levels = []
        for d in range(max_depth - 1, -1, -1):
            children = np.flatnonzero(depth == d + 1)
            pars = np.unique(parent[children])
            slot = {p: k for k, p in enumerate(pars)}
            agg = np.zeros((len(pars), len(children)))
            for j, c in enumerate(children):
                agg[slot[parent[c]], j] = 1.0
            agg /= agg.sum(axis=1, keepdims=True)
            self.up_levels.append((pars, children, agg))

        leaf_tree = self.node_tree[self.leaves]
        self.leaf_mean = np.zeros((self.n_trees, len(self.leaves)))
        self.leaf_mean[leaf_tree, np.arange(len(self.leaves))] = 1.0
        self.leaf_mean /= self.leaf_mean.sum(axis=1, keepdims=True)

    def node_slices(self):
        return [slice(a, b) for a, b in zip(self.offsets[:-1], self.offsets[1:])]


def as_forest(trees) -> Forest:
    return trees if isinstance(trees, Forest) else Forest(trees)


class _Passing:
    """Message and update functions shared by encoder and decoder."""

    def _build_passing(self, params, name, hidden, rng):
        self.m_down = Dense(params, f"{name}.m_down", hidden, hidden, "tanh", rng)
        self.m_up = Dense(params, f"{name}.m_up", hidden, hidden, "tanh", rng)
        self.u_down = GruCell(params, f"{name}.u_down", hidden, hidden, rng)
        self.u_up = GruCell(params, f"{name}.u_up", hidden, hidden, rng)

    def _p(self, p):
        return self.params.arrays() if p is None else p


class TreeEncoder(_Passing):
    def __init__(self, params: ModelParams, name: str, feature_width: int,
                 hidden: int = HIDDEN_DIM, embed: int = EMBED_DIM,
                 round_trips: int = 2, rng=None, downward_only: bool = False):
        if round_trips < 0:
            raise ValueError("round_trips must be >= 0")
        self.params, self.name = params, name
        self.feature_width, self.hidden, self.embed = feature_width, hidden, embed
        self.round_trips = round_trips
        self.downward_only = downward_only
        self.projector = Dense(params, f"{name}.proj", feature_width, hidden, "tanh", rng)
        self._build_passing(params, name, hidden, rng)
        self.readout = Dense(params, f"{name}.readout", hidden, embed, "identity", rng)


class TreeDecoder(_Passing):
    def __init__(self, params: ModelParams, name: str, feature_width: int,
                 hidden: int = HIDDEN_DIM, embed: int = EMBED_DIM,
                 round_trips: int = 2, rng=None, downward_only: bool = False):
        self.params, self.name = params, name
        self.feature_width, self.hidden, self.embed = feature_width, hidden, embed
        self.round_trips = round_trips
        self.downward_only = downward_only
        self.projector = Dense(params, f"{name}.proj", embed, hidden, "tanh", rng)
        self._build_passing(params, name, hidden, rng)
        self.head = Dense(params, f"{name}.head", hidden, feature_width, "identity", rng)


def downward_pass(net, forest: Forest, h, p=None):
    p = net._p(p)
    for nodes, parents in forest.down_levels:
        msg = net.m_down(p, ad.take(h, parents))
        h = ad.set_rows(h, nodes, net.u_down(p, ad.take(h, nodes), msg))
    return h


def upward_pass(net, forest: Forest, h, p=None):
    p = net._p(p)
    for pars, children, agg in forest.up_levels:
        msg = ad.matmul(agg, net.m_up(p, ad.take(h, children)))
        h = ad.set_rows(h, pars, net.u_up(p, ad.take(h, pars), msg))
    return h


def propagate(net, forest: Forest, h, p=None, round_trips: Optional[int] = None,
              downward_only: Optional[bool] = None):
    if net.downward_only if downward_only is None else downward_only:
        return downward_pass(net, forest, h, p)
    trips = net.round_trips if round_trips is None else round_trips
    for _ in range(trips):
        h = downward_pass(net, forest, h, p)
        h = upward_pass(net, forest, h, p)
    return h


def encode(encoder: TreeEncoder, trees: Union[RobotTree, Sequence[RobotTree], Forest],
           p=None, round_trips: Optional[int] = None, downward_only: Optional[bool] = None):
    """Embed one tree (-> (8,)) or a batch (-> (B, 8)).

    ``downward_only`` (default: the encoder's setting) runs a single
    downward pass and reads the embedding out of the leaves, where that pass
    deposits the information.
    """
    if downward_only is None:
        downward_only = encoder.downward_only
    single = isinstance(trees, RobotTree)
    forest = as_forest(trees)
    if forest.feature_width != encoder.feature_width:
        raise ValueError(f"feature width {forest.feature_width} does not match "
                         f"encoder width {encoder.feature_width}")
    p = encoder._p(p)
    h = encoder.projector(p, forest.features)
    if downward_only:
        h = downward_pass(encoder, forest, h, p)
        out = encoder.readout(p, ad.matmul(forest.leaf_mean, ad.take(h, forest.leaves)))
    else:
        h = propagate(encoder, forest, h, p, round_trips, downward_only=False)
        out = encoder.readout(p, ad.take(h, forest.roots))
    return ad.take(out, 0) if single else out


def decode(decoder: TreeDecoder, embedding, topology, p=None,
           round_trips: Optional[int] = None, downward_only: Optional[bool] = None):
    """Per-node features (N, F) over the given skeleton(s).

    ``embedding`` has one row per tree in ``topology``.
    """
    forest = as_forest(topology)
    p = decoder._p(p)
    emb = embedding
    if ad.value(emb).ndim == 1:
        emb = ad.reshape(emb, (1, -1))
    if ad.value(emb).shape[0] != forest.n_trees:
        raise ValueError("one embedding row per tree is required")
    h0 = decoder.projector(p, emb)
    h = ad.set_rows(np.zeros((forest.n_nodes, decoder.hidden)), forest.roots, h0)
    h = propagate(decoder, forest, h, p, round_trips, downward_only)
    return decoder.head(p, h)
