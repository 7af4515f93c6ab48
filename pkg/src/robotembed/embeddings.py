"""Embedding matrices with per-row metadata, and their CSV form."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class EmbeddingSet:
    ids: list
    vectors: np.ndarray  # (n, 8)
    n_joints: np.ndarray
    first_feature: np.ndarray

    def __len__(self):
        return len(self.ids)

    def subsample(self, k: int, rng) -> "EmbeddingSet":
        if k >= len(self):
            return self
        idx = np.sort(rng.choice(len(self), size=k, replace=False))
        return EmbeddingSet([self.ids[i] for i in idx], self.vectors[idx],
                            self.n_joints[idx], self.first_feature[idx])


def _first_feature(tree) -> float:
    # structure trees: first link length (node 1); pose trees: first joint angle (root)
    if tree.feature_width == 2:
        return tree.nodes[1].features[0]
    return tree.nodes[tree.root].features[0]


def embed_trees(model, ids, trees, kind: str, batch_size: int = 256) -> EmbeddingSet:
    """Structure or pose embeddings of ``trees`` under a trained model."""
    embed = {"structure": model.embed_structures, "pose": model.embed_poses}[kind]
    rows = [np.asarray(embed(trees[s:s + batch_size]))
            for s in range(0, len(trees), batch_size)]
    vecs = np.concatenate(rows) if rows else np.zeros((0, 8))
    return EmbeddingSet(list(ids), vecs,
                        np.array([len(t) - 1 for t in trees]),
                        np.array([_first_feature(t) for t in trees]))


def write_embeddings_csv(path, emb: EmbeddingSet):
    width = emb.vectors.shape[1] if emb.vectors.ndim == 2 else 8
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"e{k}" for k in range(width)] + ["n_joints", "first_feature"])
        for i, vec, nj, ff in zip(emb.ids, emb.vectors, emb.n_joints, emb.first_feature):
            w.writerow([i] + [repr(float(v)) for v in vec] + [int(nj), repr(float(ff))])


def read_embeddings_csv(path) -> EmbeddingSet:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    cols = [c for c in (rows[0].keys() if rows else []) if c.startswith("e") and c[1:].isdigit()]
    return EmbeddingSet(
        [r["id"] for r in rows],
        np.array([[float(r[c]) for c in cols] for r in rows]).reshape(len(rows), len(cols)),
        np.array([int(r["n_joints"]) for r in rows]),
        np.array([float(r["first_feature"]) for r in rows]))
