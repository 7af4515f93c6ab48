"""Structure/pose dataset generation, stratified splitting and JSONL storage."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .kinematics import (ChainStructure, IkConfig, forward_kinematics, self_collides,
                         solve_ik_batch)
from .tree import RobotTree, pose_to_tree, structure_to_tree, tree_to_structure

log = logging.getLogger(__name__)

RESAMPLE_BUDGET = 20
SPLIT_STREAM = 2**32 - 1


@dataclass
class DatasetSpec:
    joint_counts: list = field(default_factory=lambda: [2, 3, 4])
    structures_per_count: int = 1000
    poses_per_structure: int = 10000
    length_range: tuple = (0.1, 0.4)
    split_ratio: float = 0.8
    rng_seed: int = 0

    def __post_init__(self):
        self.joint_counts = [int(n) for n in self.joint_counts]
        self.length_range = tuple(float(v) for v in self.length_range)
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must be in (0, 1)")
        lo, hi = self.length_range
        if not 0 < lo < hi:
            raise ValueError("length_range must satisfy 0 < min < max")
        if self.structures_per_count <= 0 or self.poses_per_structure <= 0:
            raise ValueError("counts must be positive")
        if not self.joint_counts or any(n < 1 for n in self.joint_counts):
            raise ValueError("joint counts must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["length_range"] = list(self.length_range)
        return d


@dataclass
class DatasetBundle:
    structures: list  # (id, RobotTree)
    poses: list  # (id, structure_id, RobotTree)
    split: dict = field(default_factory=dict)  # structure id -> "train" | "test"
    spec: Optional[DatasetSpec] = None
    underfilled: dict = field(default_factory=dict)

    def structure_tree(self, sid) -> RobotTree:
        return self._by_id()[sid]

    def _by_id(self):
        if not hasattr(self, "_index"):
            self._index = dict(self.structures)
        return self._index

    def structure_ids(self, part: str) -> list:
        return [sid for sid, _ in self.structures if self.split.get(sid) == part]

    def pose_records(self, part: Optional[str] = None) -> list:
        if part is None:
            return list(self.poses)
        return [r for r in self.poses if self.split.get(r[1]) == part]


def structure_rng(seed: int, structure_id: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(structure_id)])


def generate_structures(spec: DatasetSpec, rng: np.random.Generator) -> list[ChainStructure]:
    lo, hi = spec.length_range
    out = []
    for n in spec.joint_counts:
        for _ in range(spec.structures_per_count):
            out.append(ChainStructure(tuple(rng.uniform(lo, hi, n))))
    return out


def sample_targets(structure: ChainStructure, count: int, rng) -> np.ndarray:
    """Uniform points in the reachable annulus (disk minus inner hole)."""
    inner, outer = structure.inner_radius, structure.reach
    pts = []
    have = 0
    while have < count:
        xy = rng.uniform(-outer, outer, size=(2 * (count - have) + 8, 2))
        r = np.hypot(xy[:, 0], xy[:, 1])
        keep = xy[(r <= outer) & (r >= inner)]
        pts.append(keep)
        have += len(keep)
    return np.concatenate(pts)[:count]


def generate_poses(structure: ChainStructure, count: int, rng,
                   ik: IkConfig = IkConfig()) -> tuple[list, int]:
    """Collision-free IK poses for random reachable targets.

    Returns ``(poses, shortfall)`` where poses are ``(angles, ee)`` pairs and
    ``shortfall`` counts poses missing after the resample budget ran out.
    """
    budget = RESAMPLE_BUDGET * count
    poses: list = []
    tried = 0
    while len(poses) < count and tried < budget:
        batch = min(budget - tried, max(8, int(1.2 * (count - len(poses)))))
        targets = sample_targets(structure, batch, rng)
        tried += batch
        angles, ok = solve_ik_batch(structure, targets, rng, ik)
        for s, good in zip(angles, ok):
            if not good or self_collides(structure, s):
                continue
            ee = forward_kinematics(structure, s)
            poses.append((s, ee))
            if len(poses) == count:
                break
    shortfall = count - len(poses)
    if shortfall:
        log.warning("structure %s: only %d/%d poses after %d attempts",
                    structure.link_lengths, len(poses), count, tried)
    return poses, shortfall


def split_dataset(bundle: DatasetBundle, ratio: float, rng) -> DatasetBundle:
    """Structure-level split stratified by joint count; poses follow their structure."""
    if not 0 < ratio < 1:
        raise ValueError("split ratio must be in (0, 1)")
    strata: dict[int, list] = {}
    for sid, tree in bundle.structures:
        strata.setdefault(len(tree) - 1, []).append(sid)
    split = {}
    for n in sorted(strata):
        ids = list(strata[n])
        order = rng.permutation(len(ids))
        n_train = int(round(ratio * len(ids)))
        for k, j in enumerate(order):
            split[ids[j]] = "train" if k < n_train else "test"
    bundle.split = split
    return bundle


def generate_dataset(spec: DatasetSpec, ik: IkConfig = IkConfig()) -> DatasetBundle:
    rng = np.random.default_rng(spec.rng_seed)
    structures = generate_structures(spec, rng)
    s_trees, p_trees, under = [], [], {}
    pid = 0
    for sid, st in enumerate(structures):
        s_trees.append((sid, structure_to_tree(st)))
        poses, short = generate_poses(st, spec.poses_per_structure,
                                      structure_rng(spec.rng_seed, sid), ik)
        if short:
            under[sid] = short
        for s, ee in poses:
            p_trees.append((pid, sid, pose_to_tree(st, s, ee)))
            pid += 1
    bundle = DatasetBundle(s_trees, p_trees, spec=spec, underfilled=under)
    # split draws from its own stream so pose generation never shifts it
    return split_dataset(bundle, spec.split_ratio, np.random.default_rng([spec.rng_seed, SPLIT_STREAM]))


def manifest(bundle: DatasetBundle) -> dict:
    per_count: dict = {}
    for sid, tree in bundle.structures:
        n = len(tree) - 1
        c = per_count.setdefault(str(n), {"structures": 0, "train": 0, "test": 0, "poses": 0})
        c["structures"] += 1
        c[bundle.split[sid]] += 1
    for _, sid, _ in bundle.poses:
        per_count[str(len(bundle.structure_tree(sid)) - 1)]["poses"] += 1
    lengths = [f[0] for _, t in bundle.structures for f in t.features[1:]]
    return {
        "n_structures": len(bundle.structures),
        "n_poses": len(bundle.poses),
        "n_train_structures": sum(v == "train" for v in bundle.split.values()),
        "n_test_structures": sum(v == "test" for v in bundle.split.values()),
        "per_joint_count": per_count,
        "link_length_min": min(lengths),
        "link_length_max": max(lengths),
        "underfilled_structures": len(bundle.underfilled),
        "pose_shortfall": int(sum(bundle.underfilled.values())),
        "spec": bundle.spec.to_dict() if bundle.spec else None,
    }


def save_dataset(bundle: DatasetBundle, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "structures.jsonl", "w") as fh:
        for sid, tree in bundle.structures:
            st = tree_to_structure(tree)
            fh.write(json.dumps({"id": sid, "n_joints": st.n_joints,
                                 "link_lengths": list(st.link_lengths),
                                 "tree": tree.to_dict()}) + "\n")
    with open(out / "poses.jsonl", "w") as fh:
        for pid, sid, tree in bundle.poses:
            fh.write(json.dumps({"id": pid, "structure_id": sid,
                                 "tree": tree.to_dict()}) + "\n")
    (out / "split.json").write_text(json.dumps({str(k): v for k, v in sorted(bundle.split.items())}))
    man = manifest(bundle)
    (out / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True))
    return man


def load_dataset(in_dir) -> DatasetBundle:
    d = Path(in_dir)
    structures, poses = [], []
    with open(d / "structures.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            structures.append((rec["id"], RobotTree.from_dict(rec["tree"])))
    with open(d / "poses.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            poses.append((rec["id"], rec["structure_id"], RobotTree.from_dict(rec["tree"])))
    split = {int(k): v for k, v in json.loads((d / "split.json").read_text()).items()}
    spec = None
    man_path = d / "manifest.json"
    if man_path.exists():
        spec_d = json.loads(man_path.read_text()).get("spec")
        if spec_d:
            spec = DatasetSpec(**spec_d)
    return DatasetBundle(structures, poses, split, spec)
