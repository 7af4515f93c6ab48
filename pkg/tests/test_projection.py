import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robotembed.projection import (TsneConfig, clamp_perplexity, entropy_and_probs,
                                   joint_probabilities, pairwise_sq_dists, perplexity_search,
                                   read_projection_csv, tsne_run, write_projection_csv)


def two_clusters(n=100, d=8, sep=10.0, sigma=0.01, seed=0):
    rng = np.random.default_rng(seed)
    c = np.zeros(d)
    c[0] = sep
    x = np.vstack([rng.normal(0, sigma, (n // 2, d)), c + rng.normal(0, sigma, (n // 2, d))])
    return x, np.repeat([0, 1], n // 2)


def test_entropy_uniform_limit():
    h, p = entropy_and_probs(np.array([1.0, 1.0, 1.0, 1.0]), 3.0)
    assert h == pytest.approx(np.log(4))
    np.testing.assert_allclose(p, 0.25)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(2.0, 20.0))
def test_perplexity_search_hits_target(seed, perp):
    d = np.random.default_rng(seed).exponential(size=80)
    beta, p = perplexity_search(d, perp)
    h = -np.sum(p[p > 0] * np.log(p[p > 0]))
    assert abs(h - np.log(perp)) <= 1e-5
    assert p.sum() == pytest.approx(1.0)


def test_bandwidth_grows_with_perplexity():
    d = np.random.default_rng(0).exponential(size=60)
    betas = [perplexity_search(d, k)[0] for k in (3, 6, 12, 24)]
    assert all(a > b for a, b in zip(betas, betas[1:]))


def test_joint_probabilities_properties():
    x = np.random.default_rng(0).normal(size=(40, 8))
    P, betas = joint_probabilities(x, 5.0)
    assert np.abs(P - P.T).max() <= 1e-12
    assert P.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diag(P) == 0) and np.all(P >= 0)
    assert np.all(betas > 0)


def test_pairwise_translation_invariant_on_dyadic_grid():
    x = np.random.default_rng(0).integers(-64, 64, size=(30, 4)) / 8.0
    np.testing.assert_array_equal(pairwise_sq_dists(x), pairwise_sq_dists(x + 1024.0))


def separable(Y, labels):
    m0, m1 = Y[labels == 0].mean(0), Y[labels == 1].mean(0)
    proj = (Y - (m0 + m1) / 2) @ (m1 - m0)
    return bool(np.all(proj[labels == 0] < 0) and np.all(proj[labels == 1] > 0))


@pytest.fixture(scope="module")
def cluster_run():
    x, labels = two_clusters(n=200)
    return tsne_run(x, TsneConfig(kl_every=1)), labels


def test_two_clusters_separable(cluster_run):
    res, labels = cluster_run
    assert res.embedding.shape == (200, 2)
    assert separable(res.embedding, labels)


def test_kl_windows_after_exaggeration(cluster_run):
    kl = dict(cluster_run[0].kl_history)
    for start in range(250, 1000 - 50 + 1):
        assert kl[start + 50] <= 1.05 * kl[start]
    assert kl[1000] < kl[250]


def test_small_n_with_small_learning_rate():
    x, labels = two_clusters(n=100)
    res = tsne_run(x, TsneConfig(perplexity=20, iterations=500, learning_rate=50))
    assert separable(res.embedding, labels)


def test_translation_invariance_end_to_end():
    x = np.random.default_rng(3).integers(-64, 64, size=(30, 8)) / 8.0
    cfg = TsneConfig(perplexity=5, iterations=300, learning_rate=50)
    np.testing.assert_array_equal(tsne_run(x, cfg).embedding,
                                  tsne_run(x + 256.0, cfg).embedding)


def test_single_close_neighbour_limit():
    d = np.array([1e-4, 4.0, 5.0, 6.0, 7.0])
    _, p = perplexity_search(d, 1.01)
    assert p[0] > 0.99


def test_deterministic_and_seed_sensitive():
    x, _ = two_clusters(n=40)
    cfg = TsneConfig(perplexity=8, iterations=300)
    a, b = tsne_run(x, cfg).embedding, tsne_run(x, cfg).embedding
    np.testing.assert_array_equal(a, b)
    c = tsne_run(x, TsneConfig(perplexity=8, iterations=300, seed=1)).embedding
    assert not np.array_equal(a, c)


def test_input_validation():
    with pytest.raises(ValueError):
        tsne_run(np.zeros((5, 3)))
    with pytest.raises(ValueError):
        tsne_run(np.ones((40, 3)), TsneConfig(perplexity=5))
    x = np.random.default_rng(0).normal(size=(40, 3))
    x[3, 1] = np.nan
    with pytest.raises(ValueError):
        tsne_run(x, TsneConfig(perplexity=5))
    with pytest.raises(ValueError):
        tsne_run(np.random.default_rng(0).normal(size=(40, 3)), TsneConfig(perplexity=30))


def test_clamp_perplexity():
    assert clamp_perplexity(30, 1000) == 30
    assert clamp_perplexity(30, 40) < 13


def test_csv_round_trip(tmp_path):
    xy = np.array([[0.1, -2.5], [1e-17, 3.0]])
    write_projection_csv(tmp_path / "p.csv", [7, 9], xy, [2, 3], [0.25, 0.5])
    back = read_projection_csv(tmp_path / "p.csv")
    assert back["id"] == ["7", "9"]
    np.testing.assert_array_equal(back["xy"], xy)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == \
        "id,tsne_x,tsne_y,n_joints,first_feature"
