"""Planar serial-chain geometry.

Angles are relative: joint ``i`` is measured from the direction of link
``i - 1`` and the first joint from the +x axis. The base sits at the origin.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when a pose does not match its structure."""


@dataclass(frozen=True)
class ChainStructure:
    link_lengths: tuple[float, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.link_lengths)
        if len(lengths) < 1:
            raise ValueError("a chain needs at least one link")
        if any(not (v > 0) for v in lengths):
            raise ValueError(f"link lengths must be positive: {lengths}")
        object.__setattr__(self, "link_lengths", lengths)

    @property
    def n_joints(self) -> int:
        return len(self.link_lengths)

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths))

    @property
    def inner_radius(self) -> float:
        """Radius of the unreachable disk around the base (0 for most chains)."""
        longest = max(self.link_lengths)
        return max(0.0, longest - (self.reach - longest))


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class IkConfig:
    tolerance: float = 1e-4
    max_iters: int = 200
    damping: float = 0.01
    seed_noise: float = 0.1
    restarts: int = 5
    max_step: Optional[float] = 0.2  # per-joint step clamp (rad); None disables


def normalize_angle(a):
    """Wrap angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def _angles(structure: ChainStructure, pose) -> np.ndarray:
    s = np.asarray(pose, dtype=float)
    if s.shape[-1] != structure.n_joints:
        raise DimensionError(
            f"pose has {s.shape[-1]} angles, structure has {structure.n_joints} joints")
    return s


def _fk_batch(lengths: np.ndarray, angles: np.ndarray) -> np.ndarray:
    theta = np.cumsum(angles, axis=-1)
    return np.stack([(lengths * np.cos(theta)).sum(-1),
                     (lengths * np.sin(theta)).sum(-1)], axis=-1)


def _jac_batch(lengths: np.ndarray, angles: np.ndarray) -> np.ndarray:
    theta = np.cumsum(angles, axis=-1)
    dx = -lengths * np.sin(theta)
    dy = lengths * np.cos(theta)
    # column j sums the contribution of links j..n-1
    dx = np.flip(np.cumsum(np.flip(dx, -1), -1), -1)
    dy = np.flip(np.cumsum(np.flip(dy, -1), -1), -1)
    return np.stack([dx, dy], axis=-2)


def forward_kinematics(structure: ChainStructure, pose: Sequence[float]) -> Point2:
    s = _angles(structure, pose)
    x, y = _fk_batch(np.asarray(structure.link_lengths), s)
    return Point2(float(x), float(y))


def joint_positions(structure: ChainStructure, pose: Sequence[float]) -> np.ndarray:
    """(n_joints + 1, 2) array of joint positions, base first, end effector last."""
    s = _angles(structure, pose)
    theta = np.cumsum(s)
    steps = np.stack([np.asarray(structure.link_lengths) * np.cos(theta),
                      np.asarray(structure.link_lengths) * np.sin(theta)], axis=-1)
    return np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)])


def jacobian(structure: ChainStructure, pose: Sequence[float]) -> np.ndarray:
    s = _angles(structure, pose)
    return _jac_batch(np.asarray(structure.link_lengths), s)


def _dls_solve(lengths, targets, seeds, cfg: IkConfig):
    """Vectorised damped least squares over a batch of (target, seed) rows.

    Returns (angles, converged) with angles normalised.
    """
    s = np.array(seeds, dtype=float)
    tgt = np.asarray(targets, dtype=float)
    lam2 = cfg.damping ** 2
    done = np.zeros(len(s), dtype=bool)
    for _ in range(cfg.max_iters + 1):
        err = tgt - _fk_batch(lengths, s)
        done = np.hypot(err[:, 0], err[:, 1]) < cfg.tolerance
        if done.all():
            break
        act = ~done
        J = _jac_batch(lengths, s[act])
        e = err[act]
        a = (J[:, 0] * J[:, 0]).sum(-1) + lam2
        b = (J[:, 0] * J[:, 1]).sum(-1)
        d = (J[:, 1] * J[:, 1]).sum(-1) + lam2
        det = a * d - b * b
        # (J J^T + lam^2 I)^-1 e for the 2x2 system
        u0 = (d * e[:, 0] - b * e[:, 1]) / det
        u1 = (a * e[:, 1] - b * e[:, 0]) / det
        step = J[:, 0] * u0[:, None] + J[:, 1] * u1[:, None]
        if cfg.max_step:
            # near singular configurations the damped step is huge and cycles
            biggest = np.abs(step).max(axis=1, keepdims=True)
            step *= np.minimum(1.0, cfg.max_step / np.maximum(biggest, 1e-300))
        s[act] += step
    return normalize_angle(s), done


def reachable(structure: ChainStructure, target) -> bool:
    r = float(np.hypot(target[0], target[1]))
    return structure.inner_radius <= r <= structure.reach


def solve_ik(structure: ChainStructure, target, seed=None,
             config: IkConfig = IkConfig(), rng=None) -> Optional[np.ndarray]:
    """Damped least squares IK; returns normalised angles or None on failure.

    Without an explicit ``seed`` the solver starts from zeros plus uniform
    noise and retries from uniform random seeds.
    """
    if not reachable(structure, target):
        return None
    rng = np.random.default_rng(rng)
    lengths = np.asarray(structure.link_lengths)
    n = structure.n_joints
    if seed is None:
        seed = rng.uniform(-config.seed_noise, config.seed_noise, n)
    seed = _angles(structure, seed)
    tgt = np.asarray(target, dtype=float)[None]
    for attempt in range(config.restarts + 1):
        sol, ok = _dls_solve(lengths, tgt, seed[None], config)
        if ok[0]:
            return sol[0]
        seed = normalize_angle(rng.uniform(-np.pi, np.pi, n))
    return None


def solve_ik_batch(structure: ChainStructure, targets: np.ndarray, rng,
                   config: IkConfig = IkConfig()):
    """Solve many targets at once with the same seeding/restart policy as
    :func:`solve_ik`. Returns (angles, ok)."""
    lengths = np.asarray(structure.link_lengths)
    targets = np.asarray(targets, dtype=float)
    n = structure.n_joints
    m = len(targets)
    r = np.hypot(targets[:, 0], targets[:, 1])
    valid = (r >= structure.inner_radius) & (r <= structure.reach)
    out = np.zeros((m, n))
    ok = np.zeros(m, dtype=bool)
    seeds = rng.uniform(-config.seed_noise, config.seed_noise, (m, n))
    todo = np.flatnonzero(valid)
    for attempt in range(config.restarts + 1):
        if len(todo) == 0:
            break
        sol, conv = _dls_solve(lengths, targets[todo], seeds[todo], config)
        out[todo[conv]] = sol[conv]
        ok[todo[conv]] = True
        todo = todo[~conv]
        seeds[todo] = rng.uniform(-np.pi, np.pi, (len(todo), n))
    return out, ok


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p, q, r) -> bool:
    # r collinear with p-q: is it inside the bounding box?
    return (min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
            and min(p[1], q[1]) <= r[1] <= max(p[1], q[1]))


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test, collinear overlaps included."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and \
            ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def self_collides(structure: ChainStructure, pose: Sequence[float]) -> bool:
    """True iff two non-adjacent links intersect."""
    pts = joint_positions(structure, pose).tolist()
    n = structure.n_joints
    for i in range(n):
        for j in range(i + 2, n):
            if segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1]):
                return True
    return False
