"""
Planar chains: FK, IK, self-collision and the pose dataset
==========================================================

Builds a 3-joint arm, solves IK for a few targets, checks self-collision
and draws the resulting poses. Ends by generating a very small dataset.
"""
import argparse
import math
from pathlib import Path

import numpy as np

from robotembed.datagen import DatasetSpec, generate_dataset, manifest
from robotembed.kinematics import ChainStructure, forward_kinematics, self_collides, solve_ik
from robotembed.plotting import poses_svg

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--out", default="demo_out")
args = parser.parse_args()
out = Path(args.out)
out.mkdir(exist_ok=True)

# a chain is just its link lengths; angles are relative to the previous link
arm = ChainStructure((0.3, 0.25, 0.15))
print("reach", arm.reach, "| straight pose ends at", forward_kinematics(arm, [0, 0, 0]))

# IK by damped least squares; unreachable targets give None
targets = [(0.4, 0.2), (-0.1, 0.5), (0.05, -0.3), (1.0, 0.0)]
poses, labels = [], []
for t in targets:
    sol = solve_ik(arm, t, rng=0)
    if sol is None:
        print(f"target {t}: unreachable")
        continue
    err = math.dist(forward_kinematics(arm, sol), t)
    print(f"target {t}: angles {np.round(sol, 3)}, error {err:.1e}, "
          f"collides={self_collides(arm, sol)}")
    poses.append(sol)
    labels.append(f"target {t}")

# a folded pose that crosses itself
folded = [0.0, 3.0, 3.0]
print("folded pose collides:", self_collides(ChainStructure((1.0, 1.0, 1.0)), folded))

poses_svg(out / "ik_poses.svg", [arm] * len(poses), poses, labels)
print("wrote", out / "ik_poses.svg")

# the dataset: random structures, IK poses for random reachable targets
bundle = generate_dataset(DatasetSpec(structures_per_count=3, poses_per_structure=5))
m = manifest(bundle)
print(f"{m['n_structures']} structures, {m['n_poses']} poses, "
      f"{m['n_train_structures']} train / {m['n_test_structures']} test structures")
