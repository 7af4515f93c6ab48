"""
From robots to a t-SNE map
==========================

A small end-to-end run: dataset, FB pretraining of the structure encoder,
FK/IK multi-task training, then structure embeddings projected with
t-SNE and drawn coloured by joint count and first link length. Takes a
minute or two.
"""
import argparse
from pathlib import Path

import numpy as np

from robotembed.datagen import DatasetSpec, generate_dataset
from robotembed.embeddings import embed_trees
from robotembed.mtl import (MtlConfig, MtlModel, ik_distances, random_angle_distances,
                            samples_from_bundle, train)
from robotembed.plotting import scatter_svg
from robotembed.pretrain import PretrainConfig, pretrain
from robotembed.projection import TsneConfig, clamp_perplexity, tsne

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--out", default="demo_out")
parser.add_argument("--epochs", type=int, default=5)
args = parser.parse_args()
out = Path(args.out)
out.mkdir(exist_ok=True)

bundle = generate_dataset(DatasetSpec(structures_per_count=30, poses_per_structure=30))
by_id = dict(bundle.structures)
s_train = [by_id[i] for i in bundle.structure_ids("train")]
s_test = [by_id[i] for i in bundle.structure_ids("test")]

# fill-in-the-blank pretraining on structures
pre, curve, baseline = pretrain(s_train, s_test, PretrainConfig(
    task="FB", epochs=args.epochs, batch_size=8, lr=1e-2))
print(f"FB test loss {curve[-1]['test_loss']:.4f} (constant predictor {baseline:.4f})")

# multi-task FK/IK, structure encoder warm-started
tr, te = samples_from_bundle(bundle, "train"), samples_from_bundle(bundle, "test")
model = MtlModel(seed=0)
model.warm_start(pre.params)
model, rows = train(model, tr, te, MtlConfig(epochs=args.epochs, lr=1e-3))
for r in rows:
    if r["split"] == "test":
        print(f"epoch {r['epoch']}: L_FK {r['L_FK']:.4f}  L_IK {r['L_IK']:.4f}")
ik = ik_distances(model, te).mean()
rand = random_angle_distances(te, np.random.default_rng(0)).mean()
print(f"IK end-effector miss {ik:.3f} vs {rand:.3f} for random angles")

emb = embed_trees(model, [sid for sid, _ in bundle.structures],
                  [t for _, t in bundle.structures], "structure")
xy = tsne(emb.vectors, TsneConfig(perplexity=clamp_perplexity(30, len(emb)), learning_rate=50))
scatter_svg(out / "structure_tsne.svg", xy, emb.n_joints, emb.first_feature,
            "structure embeddings")
print("wrote", out / "structure_tsne.svg")
