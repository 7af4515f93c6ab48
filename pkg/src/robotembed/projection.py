"""Exact (O(n^2)) t-SNE for projecting embeddings to the plane."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MACHINE_EPS = np.finfo(float).eps


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum: float = 0.5
    final_momentum: float = 0.8
    seed: int = 0
    kl_every: int = 10

    def __post_init__(self):
        if self.iterations <= self.exaggeration_iters:
            raise ValueError("iterations must exceed the early-exaggeration phase")
        if self.perplexity <= 1:
            raise ValueError("perplexity must be > 1")


@dataclass
class TsneResult:
    embedding: np.ndarray
    P: np.ndarray = field(repr=False)
    betas: np.ndarray = field(repr=False)
    kl_history: list = field(default_factory=list)  # (iteration, KL)


def entropy_and_probs(sq_dist: np.ndarray, beta: float):
    """Conditional Gaussian over neighbours at precision ``beta``; entropy in nats."""
    d = sq_dist - sq_dist.min()
    w = np.exp(-beta * d)
    s = w.sum()
    p = w / s
    return np.log(s) + beta * np.dot(d, p), p


def perplexity_search(sq_dist, target_perplexity: float, tol: float = 1e-5,
                      max_iter: int = 100, beta0: float = 1.0):
    """Binary search the precision so that exp(entropy) matches the target.

    ``sq_dist`` are squared distances from one point to all others. Returns
    ``(beta, probs)``; the Gaussian bandwidth is ``1 / sqrt(2 * beta)``.
    """
    sq_dist = np.asarray(sq_dist, dtype=float)
    if sq_dist.size < 2 or not np.all(np.isfinite(sq_dist)):
        raise ValueError("need at least two finite distances")
    log_target = np.log(target_perplexity)
    beta, lo, hi = beta0, 0.0, np.inf
    h, p = entropy_and_probs(sq_dist, beta)
    for _ in range(max_iter):
        diff = h - log_target
        if abs(diff) <= tol:
            return beta, p
        if diff > 0:  # too flat: sharpen
            lo = beta
            beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
        else:
            hi = beta
            beta = 0.5 * (beta + lo)
        h, p = entropy_and_probs(sq_dist, beta)
    if abs(h - log_target) > tol:
        log.warning("perplexity search stopped at |dH| = %.2e", abs(h - log_target))
    return beta, p


def pairwise_sq_dists(x: np.ndarray, block: int = 512) -> np.ndarray:
    """Squared distances from explicit coordinate differences (translation exact)."""
    n = len(x)
    out = np.empty((n, n))
    for s in range(0, n, block):
        diff = x[s:s + block, None, :] - x[None, :, :]
        out[s:s + block] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def joint_probabilities(x: np.ndarray, perplexity: float, tol: float = 1e-5):
    """Symmetrised affinity matrix P (sums to 1) and per-point precisions."""
    D = pairwise_sq_dists(x)
    n = len(x)
    P = np.zeros((n, n))
    betas = np.zeros(n)
    for i in range(n):
        others = np.r_[0:i, i + 1:n]
        betas[i], P[i, others] = perplexity_search(D[i, others], perplexity, tol)
    P = P + P.T
    P /= P.sum()
    return P, betas


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    num = 1.0 / (1.0 + pairwise_sq_dists(Y))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), 1e-300)
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def tsne_run(points, config: TsneConfig = TsneConfig()) -> TsneResult:
    x = np.asarray(points, dtype=float)
    n = len(x)
    if x.ndim != 2 or n < 10:
        raise ValueError("t-SNE needs an (n, d) matrix with n >= 10")
    if not np.all(np.isfinite(x)):
        raise ValueError("t-SNE input contains NaN or inf")
    if config.perplexity >= (n - 1) / 3:
        raise ValueError(f"perplexity {config.perplexity} too large for {n} points")
    if np.all(x == x[0]):
        raise ValueError("all input points are identical")

    P, betas = joint_probabilities(x, config.perplexity)
    rng = np.random.default_rng(config.seed)
    Y = rng.normal(0.0, 1e-4, (n, 2))
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history = []
    P_eff = P * config.exaggeration
    for it in range(config.iterations):
        if it == config.exaggeration_iters:
            P_eff = P
        momentum = config.momentum if it < config.exaggeration_iters else config.final_momentum
        num = 1.0 / (1.0 + pairwise_sq_dists(Y))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        W = (P_eff - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same = (grad > 0) == (velocity > 0)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, 0.01)
        velocity = momentum * velocity - config.learning_rate * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
        if config.kl_every and ((it + 1) % config.kl_every == 0 or it == config.iterations - 1):
            history.append((it + 1, kl_divergence(P, Y)))
    return TsneResult(Y, P, betas, history)


def tsne(points, config: TsneConfig = TsneConfig()) -> np.ndarray:
    return tsne_run(points, config).embedding


def clamp_perplexity(perplexity: float, n: int) -> float:
    """Largest admissible perplexity for ``n`` points, capped at ``perplexity``."""
    limit = (n - 1) / 3 - 1e-6
    if perplexity >= limit:
        log.warning("perplexity %.1f too large for %d points; using %.2f",
                    perplexity, n, limit - 1)
        return max(1.5, limit - 1)
    return perplexity


PROJECTION_COLUMNS = ("id", "tsne_x", "tsne_y", "n_joints", "first_feature")


def write_projection_csv(path, ids, coords, n_joints, first_feature):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROJECTION_COLUMNS)
        for i, (x, y), nj, ff in zip(ids, coords, n_joints, first_feature):
            w.writerow([i, repr(float(x)), repr(float(y)), int(nj), repr(float(ff))])


def read_projection_csv(path) -> dict:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {
        "id": [r["id"] for r in rows],
        "xy": np.array([[float(r["tsne_x"]), float(r["tsne_y"])] for r in rows]),
        "n_joints": np.array([int(r["n_joints"]) for r in rows]),
        "first_feature": np.array([float(r["first_feature"]) for r in rows]),
    }
