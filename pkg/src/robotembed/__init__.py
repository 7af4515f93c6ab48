"""Tree-structured embeddings of planar serial robots.

Kinematics and dataset generation, a small reverse-mode autodiff, a
tree message-passing encoder/decoder, reconstruction pretraining,
FK/IK multi-task training and t-SNE projection of the embeddings.
"""
from .kinematics import ChainStructure, forward_kinematics, jacobian, self_collides, solve_ik
from .tree import RobotTree, pose_to_tree, structure_to_tree, tree_to_structure

__version__ = "0.1.0"

__all__ = [
    "ChainStructure", "RobotTree", "forward_kinematics", "jacobian", "pose_to_tree",
    "self_collides", "solve_ik", "structure_to_tree", "tree_to_structure",
]
