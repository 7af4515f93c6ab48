import numpy as np
import pytest
from hypothesis import given, strategies as st

from robotembed.kinematics import ChainStructure, DimensionError, forward_kinematics
from robotembed.tree import (NodeRecord, RobotTree, chain_tree, pose_to_tree, preorder,
                             structure_to_tree, tree_depths, tree_to_structure)


def test_structure_tree_layout():
    t = structure_to_tree(ChainStructure((0.2, 0.3, 0.4)))
    assert len(t) == 4
    assert t.features.tolist() == [[0, 0], [0.2, 0], [0.3, 0], [0.4, 1]]
    assert t.parents == [None, 0, 1, 2]
    assert tree_depths(t) == [0, 1, 2, 3]


def test_pose_tree_layout():
    c = ChainStructure((0.2, 0.3))
    ee = forward_kinematics(c, [0.1, -0.2])
    t = pose_to_tree(c, [0.1, -0.2], ee)
    assert t.features.tolist() == [[0.1], [-0.2], [0.0]]
    assert t.graph_feature == pytest.approx(tuple(ee))
    with pytest.raises(DimensionError):
        pose_to_tree(c, [0.1], ee)


@given(st.lists(st.floats(0.1, 0.4), min_size=1, max_size=6))
def test_structure_round_trip(lengths):
    c = ChainStructure(tuple(lengths))
    t = structure_to_tree(c)
    assert tree_to_structure(t) == c
    assert RobotTree.from_json(t.to_json()) == t


def test_json_round_trip_branching():
    # 0 -> (1, 2), 1 -> 3
    nodes = (NodeRecord(None, (1, 2), (1.0,)), NodeRecord(0, (3,), (2.0,)),
             NodeRecord(0, (), (3.0,)), NodeRecord(1, (), (4.0,)))
    t = RobotTree(nodes, 0, (0.5, 0.25))
    assert preorder(t) == [0, 1, 3, 2]
    back = RobotTree.from_json(t.to_json())
    assert back == t and back.graph_feature == (0.5, 0.25)


def test_validation():
    with pytest.raises(ValueError):
        RobotTree((NodeRecord(None, (1,), (0.0,)), NodeRecord(None, (), (0.0,))))
    with pytest.raises(ValueError):
        RobotTree((NodeRecord(None, (1,), (0.0,)), NodeRecord(0, (), (0.0, 1.0))))
    with pytest.raises(ValueError):
        RobotTree(())


def test_skeleton_and_with_features():
    t = chain_tree([[1.0], [2.0]])
    assert t.skeleton().feature_width == 0
    assert t.with_features([[5.0], [6.0]]).features.tolist() == [[5.0], [6.0]]


def test_spec_tree_examples():
    assert structure_to_tree(ChainStructure((0.1,))).features.tolist() == [[0, 0], [0.1, 1]]
    c = ChainStructure((0.2, 0.3))
    t = pose_to_tree(c, [0.5, -0.5], forward_kinematics(c, [0.5, -0.5]))
    assert t.features.tolist() == [[0.5], [-0.5], [0.0]]
    z = pose_to_tree(c, [0.0, 0.0], forward_kinematics(c, [0.0, 0.0]))
    assert z.graph_feature == pytest.approx((0.5, 0.0)) and np.all(z.features == 0)
    assert preorder(chain_tree([[0.0]])) == [0]
    assert preorder(chain_tree([[0.0]] * 3)) == [0, 1, 2]


@given(st.lists(st.integers(0, 10 ** 6), min_size=1, max_size=12))
def test_preorder_random_trees(seeds):
    # random tree: node i > 0 hangs off a random earlier node
    rng = np.random.default_rng(seeds)
    n = len(seeds)
    parents = [None] + [int(rng.integers(0, i)) for i in range(1, n)]
    nodes = tuple(NodeRecord(parents[i], tuple(j for j in range(n) if parents[j] == i), (0.0,))
                  for i in range(n))
    order = preorder(RobotTree(nodes))
    assert sorted(order) == list(range(n)) and order[0] == 0
    pos = {v: k for k, v in enumerate(order)}
    assert all(pos[parents[i]] < pos[i] for i in range(1, n))
