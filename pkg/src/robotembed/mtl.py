"""FK/IK multi-task learning over shared structure and pose embeddings.

FK:  [structure emb ; pose emb] -> MLP -> end-effector (x, y)
IK:  [structure emb ; x ; y] -> MLP -> pose emb -> pose decoder -> angles

The zero-padded MLP baseline exposes the same interface so both models are
trained and evaluated by the same code.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .datagen import DatasetBundle
from .kinematics import normalize_angle
from .mpnn import EMBED_DIM, HIDDEN_DIM, Forest, TreeDecoder, TreeEncoder, decode, encode
from .nn import Mlp, ModelParams
from .training import fit
from .tree import RobotTree, tree_to_structure

MAX_JOINTS = 4
TASKS = ("mtl", "fk-only", "ik-only")


@dataclass(frozen=True)
class Sample:
    """One (structure, pose) pair with the quantities the losses need."""
    structure: RobotTree
    pose: RobotTree
    lengths: tuple
    angles: tuple
    ee: tuple

    @classmethod
    def from_trees(cls, structure: RobotTree, pose: RobotTree) -> "Sample":
        lengths = tree_to_structure(structure).link_lengths
        joints = [i for i, n in enumerate(pose.nodes) if n.children]
        angles = tuple(pose.nodes[i].features[0] for i in joints)
        if len(angles) != len(lengths):
            raise ValueError("pose and structure trees disagree on joint count")
        return cls(structure, pose, lengths, angles, tuple(pose.graph_feature))

    @property
    def n_joints(self) -> int:
        return len(self.lengths)


def samples_from_bundle(bundle: DatasetBundle, part: Optional[str] = None) -> list[Sample]:
    by_id = dict(bundle.structures)
    return [Sample.from_trees(by_id[sid], tree) for _, sid, tree in bundle.pose_records(part)]


def _pad(rows: Sequence[Sequence[float]], width: int) -> tuple[np.ndarray, np.ndarray]:
    out = np.zeros((len(rows), width))
    mask = np.zeros((len(rows), width))
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
        mask[i, :len(r)] = 1.0
    return out, mask


def batch_fk(lengths: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """FK for zero-padded (B, J) lengths/angles; padded links have length 0."""
    theta = np.cumsum(angles, axis=1)
    return np.stack([(lengths * np.cos(theta)).sum(1), (lengths * np.sin(theta)).sum(1)], 1)


@dataclass
class MtlConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-4
    seed: int = 0
    w_fk: float = 5.0
    w_ik: float = 0.5
    round_trips: int = 2
    downward_only: bool = False
    task: str = "mtl"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.w_fk <= 0 or self.w_ik <= 0:
            raise ValueError("loss weights must be positive")
        if self.epochs <= 0 or self.batch_size <= 0 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")

    def to_dict(self):
        return asdict(self)


class _Heads:
    def _build_heads(self, rng):
        e = EMBED_DIM
        self.fk_head = Mlp(self.params, "fk_head", 2 * e, HIDDEN_DIM, 2, rng)
        self.ik_bridge = Mlp(self.params, "ik_bridge", e + 2, HIDDEN_DIM, e, rng)

    def _p(self, p):
        return self.params.arrays() if p is None else p

    def fk(self, samples: Sequence[Sample], p=None):
        p = self._p(p)
        emb = ad.concat([self.embed_structures(samples, p), self.embed_poses(samples, p)], -1)
        return self.fk_head(p, emb)

    def ik(self, samples: Sequence[Sample], targets=None, p=None):
        """Padded (B, J) angle predictions and their mask."""
        p = self._p(p)
        if targets is None:
            targets = np.array([s.ee for s in samples])
        z = self.ik_bridge(p, ad.concat([self.embed_structures(samples, p),
                                         np.asarray(targets, dtype=float)], -1))
        return self.decode_angles(z, samples, p)


class MtlModel(_Heads):
    """Tree encoders for structure and pose, tree decoder for IK poses."""

    def __init__(self, seed: int = 0, round_trips: int = 2, downward_only: bool = False,
                 w_fk: float = 5.0, w_ik: float = 0.5):
        rng = np.random.default_rng(seed)
        self.params = ModelParams()
        kw = dict(round_trips=round_trips, rng=rng, downward_only=downward_only)
        self.structure_encoder = TreeEncoder(self.params, "struct_enc", 2, **kw)
        self.pose_encoder = TreeEncoder(self.params, "pose_enc", 1, **kw)
        self.pose_decoder = TreeDecoder(self.params, "pose_dec", 1, **kw)
        self._build_heads(rng)
        self.w_fk, self.w_ik = w_fk, w_ik

    def embed_structures(self, samples, p=None):
        trees = [s.structure if isinstance(s, Sample) else s for s in samples]
        return encode(self.structure_encoder, Forest(trees), self._p(p))

    def embed_poses(self, samples, p=None):
        trees = [s.pose if isinstance(s, Sample) else s for s in samples]
        return encode(self.pose_encoder, Forest(trees), self._p(p))

    def decode_angles(self, z, samples, p):
        forest = Forest([s.structure.skeleton() for s in samples])
        nodes = ad.reshape(decode(self.pose_decoder, z, forest, p), (-1,))
        width = max(s.n_joints for s in samples)
        idx = np.zeros((len(samples), width), dtype=int)
        mask = np.zeros((len(samples), width))
        for b, (s, off) in enumerate(zip(samples, forest.offsets)):
            joints = [off + i for i, n in enumerate(s.structure.nodes) if n.children]
            idx[b, :len(joints)] = joints
            mask[b, :len(joints)] = 1.0
        return ad.take(nodes, idx) * mask, mask

    def warm_start(self, structure: Optional[ModelParams] = None,
                   pose: Optional[ModelParams] = None) -> int:
        """Copy pretrained encoder (and pose decoder, if ED-pretrained) weights."""
        n = 0
        if structure is not None:
            n += self.params.copy_from(structure, {"enc.": "struct_enc."})
        if pose is not None:
            n += self.params.copy_from(pose, {"enc.": "pose_enc.", "dec.": "pose_dec."})
        return n


class MlpBaseline(_Heads):
    """MLP encoders over inputs zero-filled to ``MAX_JOINTS`` joints."""

    def __init__(self, seed: int = 0, w_fk: float = 5.0, w_ik: float = 0.5):
        rng = np.random.default_rng(seed)
        self.params = ModelParams()
        self.structure_mlp = Mlp(self.params, "struct_mlp", 2 * MAX_JOINTS, HIDDEN_DIM,
                                 EMBED_DIM, rng)
        self.pose_mlp = Mlp(self.params, "pose_mlp", MAX_JOINTS, HIDDEN_DIM, EMBED_DIM, rng)
        self.pose_out = Mlp(self.params, "pose_out", EMBED_DIM, HIDDEN_DIM, MAX_JOINTS, rng)
        self._build_heads(rng)
        self.w_fk, self.w_ik = w_fk, w_ik

    @staticmethod
    def structure_input(sample) -> np.ndarray:
        """Interleaved (length, ee flag) per joint, zero-filled."""
        lengths = sample.lengths if isinstance(sample, Sample) else \
            tree_to_structure(sample).link_lengths
        x = np.zeros(2 * MAX_JOINTS)
        for i, l in enumerate(lengths):
            x[2 * i] = l
            x[2 * i + 1] = 1.0 if i == len(lengths) - 1 else 0.0
        return x

    @staticmethod
    def pose_input(sample) -> np.ndarray:
        if isinstance(sample, Sample):
            angles = sample.angles
        else:
            angles = [n.features[0] for n in sample.nodes if n.children]
        x = np.zeros(MAX_JOINTS)
        x[:len(angles)] = angles
        return x

    def embed_structures(self, samples, p=None):
        x = np.array([self.structure_input(s) for s in samples])
        return self.structure_mlp(self._p(p), x)

    def embed_poses(self, samples, p=None):
        return self.pose_mlp(self._p(p), np.array([self.pose_input(s) for s in samples]))

    def decode_angles(self, z, samples, p):
        _, mask = _pad([s.angles for s in samples], MAX_JOINTS)
        return self.pose_out(p, z) * mask, mask


def fk_forward(model, structure_tree: RobotTree, pose_tree: RobotTree):
    return ad.value(model.fk([Sample.from_trees(structure_tree, pose_tree)]))[0]


def ik_forward(model, structure_tree: RobotTree, target) -> np.ndarray:
    """Per-joint angle predictions for one structure and target point."""
    n = len(tree_to_structure(structure_tree).link_lengths)
    dummy = Sample(structure_tree, structure_tree, (1.0,) * n, (0.0,) * n, tuple(target))
    angles, _ = model.ik([dummy], np.asarray([target], dtype=float))
    return ad.value(angles)[0, :n]


def fk_loss(model, batch, p):
    pred = model.fk(batch, p)
    true = np.array([s.ee for s in batch])
    return ad.mean(ad.abs(pred - true))


def angle_difference(a, b):
    """``a - b`` wrapped into [-pi, pi]; the 2*pi shift is piecewise constant."""
    d = a - b
    return d - 2.0 * np.pi * np.round(ad.value(d) / (2.0 * np.pi))


def ik_loss(model, batch, p):
    """Mean absolute angular error over joint nodes (per robot, then batch)."""
    pred, mask = model.ik(batch, p=p)
    true, _ = _pad([s.angles for s in batch], mask.shape[1])
    per_row = mask / mask.sum(axis=1, keepdims=True) / len(batch)
    return ad.sum(ad.abs(angle_difference(pred, true)) * per_row)


def combine_losses(l_fk, l_ik, w_fk=5.0, w_ik=0.5):
    return w_fk * l_fk + w_ik * l_ik


def mtl_loss(model, batch: Sequence[Sample], p=None, task: str = "mtl"):
    """Returns ``(total, {"L_FK": ..., "L_IK": ...})``."""
    p = model._p(p)
    parts, total = {}, 0.0
    if task in ("mtl", "fk-only"):
        parts["L_FK"] = fk_loss(model, batch, p)
        total = total + model.w_fk * parts["L_FK"]
    if task in ("mtl", "ik-only"):
        parts["L_IK"] = ik_loss(model, batch, p)
        total = total + model.w_ik * parts["L_IK"]
    return total, parts


def train(model, train_samples: Sequence[Sample], test_samples: Sequence[Sample],
          config: MtlConfig):
    """Returns (model, curve rows with epoch/split/L_FK/L_IK/L_total)."""
    rng = np.random.default_rng([config.seed, 2])
    model.w_fk, model.w_ik = config.w_fk, config.w_ik

    def loss_fn(p, batch):
        return mtl_loss(model, batch, p, config.task)

    curve = fit(model.params, loss_fn, list(train_samples), list(test_samples),
                epochs=config.epochs, batch_size=config.batch_size, lr=config.lr,
                rng=rng, label="mtl")
    return model, curve_rows(curve)


def baseline_train(baseline: "MlpBaseline", train_samples, test_samples, config: MtlConfig):
    """Same loop and curve schema as :func:`train`, for the zero-filled MLP."""
    return train(baseline, train_samples, test_samples, config)


def curve_rows(curve: list[dict]) -> list[dict]:
    rows = []
    for rec in curve:
        for split in ("train", "test"):
            rows.append({"epoch": rec["epoch"], "split": split,
                         "L_FK": rec.get(f"{split}_L_FK", float("nan")),
                         "L_IK": rec.get(f"{split}_L_IK", float("nan")),
                         "L_total": rec[f"{split}_loss"]})
    return rows


CURVE_COLUMNS = ("epoch", "split", "L_FK", "L_IK", "L_total")


def ik_distances(model, samples: Sequence[Sample], batch_size: int = 256) -> np.ndarray:
    """Distance from FK(predicted angles) to each target."""
    out = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        angles, mask = model.ik(chunk)
        lengths, _ = _pad([s.lengths for s in chunk], mask.shape[1])
        ee = batch_fk(lengths, ad.value(angles))
        out.append(np.hypot(*(ee - np.array([s.ee for s in chunk])).T))
    return np.concatenate(out) if out else np.zeros(0)


def random_angle_distances(samples: Sequence[Sample], rng) -> np.ndarray:
    lengths, mask = _pad([s.lengths for s in samples], MAX_JOINTS)
    angles = normalize_angle(rng.uniform(-np.pi, np.pi, lengths.shape)) * mask
    ee = batch_fk(lengths, angles)
    return np.hypot(*(ee - np.array([s.ee for s in samples])).T)


def mean_predictor_fk_mae(train_samples, test_samples) -> float:
    mean = np.mean([s.ee for s in train_samples], axis=0)
    return float(np.mean(np.abs(np.array([s.ee for s in test_samples]) - mean)))
