import numpy as np
import pytest

from robotembed import autodiff as ad
from robotembed.kinematics import ChainStructure
from robotembed.mpnn import Forest, TreeDecoder, TreeEncoder, decode, encode
from robotembed.nn import ModelParams
from robotembed.tree import NodeRecord, RobotTree, chain_tree, structure_to_tree


def make_encoder(width=2, seed=0, **kw):
    params = ModelParams()
    enc = TreeEncoder(params, "enc", width, rng=np.random.default_rng(seed), **kw)
    return params, enc


def random_structure(rng, n):
    return structure_to_tree(ChainStructure(tuple(rng.uniform(0.1, 0.4, n))))


def test_embedding_width_and_determinism():
    rng = np.random.default_rng(0)
    _, enc = make_encoder()
    trees = [random_structure(rng, n) for n in (2, 3, 4)]
    for t in trees:
        e = encode(enc, t)
        assert e.shape == (8,)
        np.testing.assert_array_equal(e, encode(enc, t))
    batch = encode(enc, trees)
    assert batch.shape == (3, 8)
    # batching does not change any row
    for i, t in enumerate(trees):
        np.testing.assert_allclose(batch[i], encode(enc, t), atol=1e-14)


def test_every_node_reaches_root_after_one_round_trip():
    _, enc = make_encoder(round_trips=1)
    t = random_structure(np.random.default_rng(1), 4)
    base = encode(enc, t)
    feats = t.features
    for i in range(len(t)):
        for f in range(2):
            bumped = feats.copy()
            bumped[i, f] += 1e-4
            assert np.abs(encode(enc, t.with_features(bumped)) - base).max() > 1e-8


def test_zero_round_trips_sees_only_root():
    _, enc = make_encoder(round_trips=0)
    t = random_structure(np.random.default_rng(2), 3)
    feats = t.features
    feats[1:] += 0.5
    np.testing.assert_array_equal(encode(enc, t), encode(enc, t.with_features(feats)))


def test_downward_only_reads_leaves():
    _, enc = make_encoder(downward_only=True)
    t = random_structure(np.random.default_rng(3), 3)
    base = encode(enc, t)
    for i in range(len(t)):
        feats = t.features
        feats[i, 0] += 1e-3
        assert np.abs(encode(enc, t.with_features(feats)) - base).max() > 1e-8


def test_two_node_hand_trace():
    # all passing weights zero: GRU updates give h' = (1 - z) h with z = 1/2
    params, enc = make_encoder(width=1, round_trips=1)
    params.flat[:] = 0.0
    params["enc.proj.W"] = [[1.0]] * 8
    params["enc.readout.W"] = np.eye(8)
    t = chain_tree([[0.5], [0.25]])
    # root: downward leaves it alone; upward halves it
    np.testing.assert_allclose(encode(enc, t), np.full(8, np.tanh(0.5) / 2), atol=1e-15)


def test_order_sensitivity():
    _, enc = make_encoder()
    a = structure_to_tree(ChainStructure((0.1, 0.3, 0.2)))
    b = structure_to_tree(ChainStructure((0.2, 0.3, 0.1)))
    assert np.abs(encode(enc, a) - encode(enc, b)).max() > 1e-6


def test_branching_tree_supported():
    nodes = (NodeRecord(None, (1, 2), (1.0, 0.0)), NodeRecord(0, (), (0.2, 1.0)),
             NodeRecord(0, (), (0.3, 1.0)))
    _, enc = make_encoder()
    t = RobotTree(nodes)
    e = encode(enc, t)
    swapped = t.with_features(t.features[[0, 2, 1]])
    # children are aggregated by mean, so swapping sibling features is invariant
    np.testing.assert_allclose(encode(enc, swapped), e, atol=1e-14)


def test_decoder_shape_and_root_only_seed():
    params = ModelParams()
    dec = TreeDecoder(params, "dec", 2, rng=np.random.default_rng(0))
    trees = [random_structure(np.random.default_rng(k), n) for k, n in enumerate((2, 4))]
    out = decode(dec, np.ones((2, 8)), [t.skeleton() for t in trees])
    assert out.shape == (3 + 5, 2)
    with pytest.raises(ValueError):
        decode(dec, np.ones((1, 8)), trees)


def test_encoder_gradient_check():
    params, enc = make_encoder(round_trips=2)
    trees = [random_structure(np.random.default_rng(k), n) for k, n in enumerate((2, 3))]
    forest = Forest(trees)
    names = params.names
    tape = ad.Tape()
    p = params.bind(tape)
    loss = ad.sum(ad.tanh(encode(enc, forest, p)))
    g = params.flatten_grads(ad.backward(tape, loss))

    def f(flat):
        old = params.flat.copy()
        params.flat[:] = flat
        v = float(np.sum(np.tanh(encode(enc, forest))))
        params.flat[:] = old
        return v

    assert ad.check_close(g, ad.numerical_grad(f, params.flat.copy()))
    assert len(names) == len(params.names)


def test_width_mismatch():
    _, enc = make_encoder(width=1)
    with pytest.raises(ValueError):
        encode(enc, random_structure(np.random.default_rng(0), 2))


def test_single_node_passes_are_identity():
    from robotembed.mpnn import downward_pass, upward_pass
    _, enc = make_encoder(width=1)
    f = Forest([chain_tree([[0.3]])])
    h = np.random.default_rng(0).normal(size=(1, 8))
    np.testing.assert_array_equal(downward_pass(enc, f, h), h)
    np.testing.assert_array_equal(upward_pass(enc, f, h), h)


def test_leaf_sees_root_after_one_downward_pass():
    from robotembed.mpnn import downward_pass
    _, enc = make_encoder(width=1)
    t = chain_tree([[0.1], [0.2], [0.3]])
    f0 = Forest([t])
    h0 = enc.projector(enc.params.arrays(), f0.features)
    bumped = t.with_features([[0.2], [0.2], [0.3]])
    h1 = enc.projector(enc.params.arrays(), Forest([bumped]).features)
    leaf0 = downward_pass(enc, f0, h0)[2]
    leaf1 = downward_pass(enc, Forest([bumped]), h1)[2]
    assert np.abs(leaf0 - leaf1).max() > 1e-8


def test_decode_deterministic():
    params = ModelParams()
    dec = TreeDecoder(params, "dec", 1, rng=np.random.default_rng(0))
    sk = chain_tree([[0.0]] * 4).skeleton()
    e = np.random.default_rng(1).normal(size=8)
    np.testing.assert_array_equal(decode(dec, e, sk), decode(dec, e, sk))
    assert decode(dec, e, sk).shape == (4, 1)
