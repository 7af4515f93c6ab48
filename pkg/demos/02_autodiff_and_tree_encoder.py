"""
Gradients through a tree encoder
================================

The reverse-mode tape is checked against finite differences on a small
expression, then a tree encoder embeds chains of 2 to 4 joints into
8-vectors and a single gradient step is taken through it.
"""
import numpy as np

from robotembed import autodiff as ad
from robotembed.kinematics import ChainStructure
from robotembed.mpnn import TreeEncoder, encode
from robotembed.nn import AdamState, ModelParams, adam_step
from robotembed.tree import structure_to_tree


def f(x):
    return ad.sum(ad.tanh(x) * ad.exp(ad.sigmoid(x)))


x = np.array([0.3, -1.2, 2.0])
(g,) = ad.grad(f, x)
print("analytic ", np.round(g, 6))
print("numerical", np.round(ad.numerical_grad(f, x), 6))

# structure trees: root [0, 0], then one node per link [length, is_end_effector]
rng = np.random.default_rng(0)
trees = [structure_to_tree(ChainStructure(tuple(rng.uniform(0.1, 0.4, n)))) for n in (2, 3, 4)]
print(trees[0].features)

params = ModelParams()
enc = TreeEncoder(params, "enc", feature_width=2, rng=rng)
print("embeddings:\n", np.round(encode(enc, trees), 3))

# pull the three embeddings towards zero for a few Adam steps
opt = AdamState(params.flat.size, lr=1e-2)
for step in range(5):
    tape = ad.Tape()
    loss = ad.mean(ad.abs(encode(enc, trees, params.bind(tape))))
    grads = params.flatten_grads(ad.backward(tape, loss))
    params.flat[:] = adam_step(opt, params.flat, grads)
    print(f"step {step}: loss {float(loss.value):.4f}")
