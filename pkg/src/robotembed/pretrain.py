"""Reconstruction pretraining of tree encoders.

Two tasks: encoder-decoder (ED) rebuilds every node feature from the graph
embedding; fill-in-the-blank (FB) zeroes one node and predicts its features
from the embeddings of the full and the blanked tree plus the blank's
relative position.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .mpnn import EMBED_DIM, HIDDEN_DIM, Forest, TreeDecoder, TreeEncoder, decode, encode
from .nn import Mlp, ModelParams
from .training import fit
from .tree import RobotTree, preorder

TASKS = ("ED", "FB")


@dataclass
class PretrainConfig:
    task: str = "FB"
    dataset: str = "structure"
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-4
    seed: int = 0
    round_trips: int = 2

    def __post_init__(self):
        self.task = self.task.upper()
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.dataset not in ("structure", "pose"):
            raise ValueError("dataset must be 'structure' or 'pose'")
        if self.epochs <= 0 or self.batch_size <= 0 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BlankedTree:
    tree: RobotTree
    blank_index: int
    true_features: tuple

    @property
    def original(self) -> RobotTree:
        feats = self.tree.features
        feats[self.blank_index] = self.true_features
        return self.tree.with_features(feats)

    @property
    def position(self) -> float:
        """Blank's preorder position divided by the node count."""
        return preorder(self.tree).index(self.blank_index) / len(self.tree)


def make_blank(tree: RobotTree, rng) -> BlankedTree:
    k = int(rng.integers(len(tree)))
    feats = tree.features
    true = tuple(float(v) for v in feats[k])
    feats[k] = 0.0
    return BlankedTree(tree.with_features(feats), k, true)


def _node_weights(forest: Forest) -> np.ndarray:
    """Per-node weight so that the weighted sum is a per-tree mean, then a batch mean."""
    sizes = np.diff(forest.offsets)
    return (1.0 / (sizes[forest.node_tree] * forest.n_trees))[:, None]


def reconstruction_mae(pred, forest: Forest):
    w = _node_weights(forest) / max(forest.feature_width, 1)
    return ad.sum(ad.abs(pred - forest.features) * w)


def ed_loss(encoder: TreeEncoder, decoder: TreeDecoder, trees, p=None):
    forest = trees if isinstance(trees, Forest) else Forest(trees)
    emb = encode(encoder, forest, p)
    return reconstruction_mae(decode(decoder, emb, forest, p), forest)


class FbHead(Mlp):
    def __init__(self, params, name, feature_width, embed=EMBED_DIM, hidden=HIDDEN_DIM, rng=None):
        super().__init__(params, name, 2 * embed + 1, hidden, feature_width, rng)


def fb_predict(encoder: TreeEncoder, head: FbHead, blanked: Sequence[BlankedTree], p=None):
    p = encoder._p(p)
    e_full = encode(encoder, Forest([b.original for b in blanked]), p)
    e_blank = encode(encoder, Forest([b.tree for b in blanked]), p)
    pos = np.array([[b.position] for b in blanked])
    return head(p, ad.concat([e_full, e_blank, pos], axis=-1))


def fb_loss(encoder: TreeEncoder, head: FbHead, blanked, p=None):
    if isinstance(blanked, BlankedTree):
        blanked = [blanked]
    pred = fb_predict(encoder, head, blanked, p)
    true = np.array([b.true_features for b in blanked])
    return ad.mean(ad.abs(pred - true))


class PretrainModel:
    """Encoder plus the task-specific decoder/head, sharing one parameter vector."""

    def __init__(self, feature_width: int, task: str = "FB", seed: int = 0, round_trips: int = 2,
                 prefix: str = "enc"):
        rng = np.random.default_rng(seed)
        self.task = task.upper()
        self.params = ModelParams()
        self.encoder = TreeEncoder(self.params, prefix, feature_width,
                                   round_trips=round_trips, rng=rng)
        self.decoder = self.head = None
        if self.task == "ED":
            self.decoder = TreeDecoder(self.params, "dec", feature_width,
                                       round_trips=round_trips, rng=rng)
        else:
            self.head = FbHead(self.params, "fb_head", feature_width, rng=rng)

    def loss(self, p, batch):
        if self.task == "ED":
            return ed_loss(self.encoder, self.decoder, batch, p)
        return fb_loss(self.encoder, self.head, batch, p)


def constant_ed_baseline(train: Sequence[RobotTree], test: Sequence[RobotTree]) -> float:
    """ED loss of predicting the training mean feature vector at every node."""
    mean = np.concatenate([t.features for t in train]).mean(axis=0)
    forest = Forest(test)
    return float(reconstruction_mae(np.broadcast_to(mean, forest.features.shape), forest))


def constant_fb_baseline(train: Sequence[RobotTree], test: Sequence[BlankedTree]) -> float:
    mean = np.concatenate([t.features for t in train]).mean(axis=0)
    true = np.array([b.true_features for b in test])
    return float(np.mean(np.abs(true - mean)))


def fixed_blanks(trees: Sequence[RobotTree], seed: int) -> list[BlankedTree]:
    rng = np.random.default_rng(seed)
    return [make_blank(t, rng) for t in trees]


def pretrain(train: Sequence[RobotTree], test: Sequence[RobotTree], config: PretrainConfig,
             model: Optional[PretrainModel] = None):
    """Train ED or FB; returns (model, curve, constant-baseline test loss)."""
    width = train[0].feature_width
    model = model or PretrainModel(width, config.task, config.seed, config.round_trips)
    rng = np.random.default_rng([config.seed, 1])
    if model.task == "ED":
        train_items, test_items = list(train), list(test)
        prepare = None
        baseline = constant_ed_baseline(train, test)
    else:
        train_items = list(train)
        test_items = fixed_blanks(test, config.seed + 7919)

        def prepare(items, r):
            return [make_blank(t, r) for t in items]

        baseline = constant_fb_baseline(train, test_items)
    curve = fit(model.params, model.loss, train_items, test_items,
                epochs=config.epochs, batch_size=config.batch_size, lr=config.lr,
                rng=rng, prepare_epoch=prepare, label=f"pretrain-{model.task}")
    for rec in curve:
        rec["baseline_test_loss"] = baseline
    return model, curve, baseline
