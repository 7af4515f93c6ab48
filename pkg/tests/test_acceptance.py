"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed with
output capture disabled, so they show up without ``-s``).
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from shapely.geometry import LineString

from robotembed import autodiff as ad
from robotembed.cli import main
from robotembed.datagen import DatasetSpec, generate_dataset, load_dataset
from robotembed.embeddings import read_embeddings_csv
from robotembed.kinematics import (ChainStructure, forward_kinematics, jacobian, joint_positions,
                                   self_collides, solve_ik)
from robotembed.mpnn import TreeEncoder, encode
from robotembed.mtl import (MtlConfig, MtlModel, ik_distances, mean_predictor_fk_mae,
                            random_angle_distances, samples_from_bundle, train)
from robotembed.nn import ModelParams
from robotembed.pretrain import PretrainConfig, pretrain
from robotembed.projection import TsneConfig, joint_probabilities, perplexity_search, tsne_run
from robotembed.tree import structure_to_tree, tree_to_structure

from exprgen import check_expression
from mtlcheck import mtl_gradient_check


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return _report


def random_chain(rng):
    return ChainStructure(tuple(rng.uniform(0.1, 0.4, rng.integers(2, 5))))


def brute_force_collides(structure, pose):
    # independent geometry: shapely segments, every non-adjacent pair
    pts = joint_positions(structure, pose)
    segs = [LineString([pts[i], pts[i + 1]]) for i in range(structure.n_joints)]
    return any(segs[i].intersects(segs[j])
               for i in range(len(segs)) for j in range(len(segs)) if abs(i - j) > 1)


def test_criterion_1_kinematics_oracles(report):
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst_ik, worst_jac, failures, disagree, collisions = 0.0, 0.0, 0, 0, 0
    for _ in range(1000):
        c = random_chain(rng)
        pose = rng.uniform(-math.pi, math.pi, c.n_joints)
        target = forward_kinematics(c, pose)
        sol = solve_ik(c, target, rng=rng)
        if sol is None:
            failures += 1
        else:
            worst_ik = max(worst_ik, math.dist(forward_kinematics(c, sol), target))
        h = 1e-6
        num = np.column_stack([
            (np.subtract(forward_kinematics(c, pose + h * e), forward_kinematics(c, pose - h * e)))
            / (2 * h) for e in np.eye(c.n_joints)])
        worst_jac = max(worst_jac, float(np.abs(jacobian(c, pose) - num).max()))
        expect = brute_force_collides(c, pose)
        collisions += expect
        disagree += self_collides(c, pose) != expect
    dt = time.time() - t0
    ok = failures == 0 and worst_ik < 1e-4 and worst_jac < 1e-4 and disagree == 0 and dt < 30
    report(1, ok, f"IK failures {failures}/1000, max FK(IK) error {worst_ik:.2e}, "
                  f"max Jacobian-FD gap {worst_jac:.2e}, collision disagreements {disagree}/1000 "
                  f"({collisions} colliding poses), {dt:.1f}s")


def test_criterion_2_autodiff(report):
    t0 = time.time()
    bad = [s for s in range(500) if not check_expression(s)[0]]
    mtl_ok, worst, n_checks = mtl_gradient_check("mtl", per_tensor=4, directions=20)
    dt = time.time() - t0
    ok = not bad and mtl_ok and dt < 60
    report(2, ok, f"{500 - len(bad)}/500 random expressions within max(1e-5 abs, 1e-4 rel); "
                  f"MTL loss on 2 samples: {n_checks} checks, worst rel err {worst:.1e}; {dt:.1f}s")


def test_criterion_3_dataset_protocol(report, tmp_path):
    out = tmp_path / "paper"
    rc = main(["gen-data", "--out", str(out), "--scale", "paper", "--poses", "2", "--seed", "0"])
    man = json.loads((out / "manifest.json").read_text())
    bundle = load_dataset(out)
    per = man["per_joint_count"]
    counts_ok = man["n_structures"] == 3000 and all(per[k]["structures"] == 1000 for k in "234")
    split_ok = all(per[k]["train"] == 800 and per[k]["test"] == 200 for k in "234")
    lengths = np.concatenate([t.features[1:, 0] for _, t in bundle.structures])
    lengths_ok = lengths.min() >= 0.1 and lengths.max() <= 0.4
    rng = np.random.default_rng(0)
    audit = rng.choice(len(bundle.poses), size=max(1, len(bundle.poses) // 100), replace=False)
    collide, fk_gap = 0, 0.0
    for k in audit:
        _, sid, tree = bundle.poses[k]
        st = tree_to_structure(bundle.structure_tree(sid))
        angles = tree.features[:-1, 0]
        collide += self_collides(st, angles)
        fk_gap = max(fk_gap, math.dist(forward_kinematics(st, angles), tree.graph_feature))
    ok = rc == 0 and counts_ok and split_ok and lengths_ok and collide == 0 and fk_gap < 1e-9
    report(3, ok, f"{man['n_structures']} structures ({', '.join(str(per[k]['structures']) for k in '234')}), "
                  f"train/test per count {[(per[k]['train'], per[k]['test']) for k in '234']}, "
                  f"lengths in [{lengths.min():.4f}, {lengths.max():.4f}], audit of {len(audit)} "
                  f"poses: {collide} collisions, max FK gap {fk_gap:.1e}")


def test_criterion_4_learning_sanity(report):
    t0 = time.time()
    bundle = generate_dataset(DatasetSpec(structures_per_count=30, poses_per_structure=200,
                                          rng_seed=1))
    by_id = dict(bundle.structures)
    s_train = [by_id[i] for i in bundle.structure_ids("train")]
    s_test = [by_id[i] for i in bundle.structure_ids("test")]
    p_train = [t for _, _, t in bundle.pose_records("train")]
    p_test = [t for _, _, t in bundle.pose_records("test")]
    pre = {}
    struct_fb = None
    for task in ("ED", "FB"):
        model, curve, base = pretrain(s_train, s_test, PretrainConfig(
            task=task, epochs=30, batch_size=8, lr=1e-2))
        pre[f"structure {task}"] = (curve[-1]["test_loss"], base)
        if task == "FB":
            struct_fb = model
    pose_fb, curve, base = pretrain(p_train, p_test, PretrainConfig(
        task="FB", dataset="pose", epochs=30, batch_size=64, lr=1e-3))
    pre["pose FB"] = (curve[-1]["test_loss"], base)

    tr, te = samples_from_bundle(bundle, "train"), samples_from_bundle(bundle, "test")
    model = MtlModel(seed=0)
    model.warm_start(struct_fb.params, pose_fb.params)
    model, rows = train(model, tr, te, MtlConfig(epochs=30, lr=1e-3))
    train_total = [r["L_total"] for r in rows if r["split"] == "train"]
    ratio = train_total[-1] / train_total[0]
    ik = float(ik_distances(model, te).mean())
    rand = float(random_angle_distances(te, np.random.default_rng(0)).mean())
    dt = time.time() - t0

    a_ok = all(loss < base for loss, base in pre.values())
    ok = a_ok and ratio <= 0.5 and rand / ik >= 2.0 and dt < 15 * 60
    pre_txt = "; ".join(f"{k} {v[0]:.4f} vs const {v[1]:.4f}" for k, v in pre.items())
    report(4, ok, f"(a) {pre_txt}; (b) MTL train loss epoch30/epoch1 = {ratio:.3f}; "
                  f"(c) IK FK-distance {ik:.3f} vs random {rand:.3f} ({rand / ik:.2f}x); "
                  f"FK test MAE {rows[-1]['L_FK']:.3f} vs mean predictor "
                  f"{mean_predictor_fk_mae(tr, te):.3f}; {dt / 60:.1f} min")


def test_criterion_5_embedding_contract(report):
    params = ModelParams()
    enc = TreeEncoder(params, "enc", 2, round_trips=1, rng=np.random.default_rng(7))
    rng = np.random.default_rng(8)
    widths, deterministic, min_sens = [], True, np.inf
    for n in (2, 3, 4):
        t = structure_to_tree(ChainStructure(tuple(rng.uniform(0.1, 0.4, n))))
        e = encode(enc, t)
        widths.append(e.shape)
        deterministic &= bool(np.array_equal(e, encode(enc, t)))
        for i in range(len(t)):
            for f in range(t.feature_width):
                feats = t.features
                feats[i, f] += 1e-5
                min_sens = min(min_sens, float(np.abs(encode(enc, t.with_features(feats)) - e).max()))
    ok = all(w == (8,) for w in widths) and deterministic and min_sens > 1e-8
    report(5, ok, f"embedding shapes {widths}, deterministic={deterministic}, "
                  f"min root-readout response to any node feature {min_sens:.2e}")


def test_criterion_6_tsne(report):
    t0 = time.time()
    rng = np.random.default_rng(0)
    centers = np.zeros((2, 8))
    centers[1, :] = 10.0 / np.sqrt(8)
    labels = np.repeat([0, 1], 100)
    x = centers[labels] + rng.normal(0, 0.01, (200, 8))
    P, _ = joint_probabilities(x, 30.0)
    sym = float(np.abs(P - P.T).max())
    norm = abs(float(P.sum()) - 1.0)
    Y = tsne_run(x, TsneConfig(seed=0)).embedding
    m0, m1 = Y[labels == 0].mean(0), Y[labels == 1].mean(0)
    proj = (Y - (m0 + m1) / 2) @ (m1 - m0)
    separable = bool(proj[labels == 0].max() < 0 < proj[labels == 1].min())
    worst_h = 0.0
    for i in range(50):
        d = ((x - x[i]) ** 2).sum(1)
        _, p = perplexity_search(np.delete(d, i), 30.0)
        p = p[p > 0]
        worst_h = max(worst_h, abs(-np.sum(p * np.log(p)) - np.log(30.0)))
    dt = time.time() - t0
    ok = sym <= 1e-9 and norm <= 1e-9 and separable and worst_h <= 1e-5 and dt < 120
    report(6, ok, f"|P-P^T| {sym:.1e}, |sum P - 1| {norm:.1e}, clusters linearly separable="
                  f"{separable}, max log-perplexity miss {worst_h:.1e}, {dt:.1f}s")


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny") / "data"
    assert main(["gen-data", "--out", str(out), "--scale", "tiny", "--seed", "0"]) == 0
    return out


def test_criterion_7_ablation_harness(report, tiny_data, tmp_path):
    runs = []
    for rep in ("a", "b"):
        out = tmp_path / rep
        rc = main(["ablation", "--data", str(tiny_data), "--out", str(out), "--epochs", "2",
                   "--max-samples", "640", "--lr", "1e-3", "--iterations", "300"])
        runs.append((rc, out))
    files = {k: runs[0][1] / f"round_trips_{k}" for k in range(4)}
    have = all((d / "embeddings_structure.csv").exists() and (d / "tsne_structure.svg").exists()
               for d in files.values())
    same = all((runs[0][1] / f"round_trips_{k}" / "embeddings_structure.csv").read_bytes() ==
               (runs[1][1] / f"round_trips_{k}" / "embeddings_structure.csv").read_bytes()
               for k in range(4))
    mats = [read_embeddings_csv(d / "embeddings_structure.csv").vectors for d in files.values()]
    dists = [float(np.linalg.norm(mats[i] - mats[j])) for i in range(4) for j in range(i + 1, 4)]
    ok = all(rc == 0 for rc, _ in runs) and have and same and min(dists) > 0
    report(7, ok, f"4 runs x2 completed, CSVs+SVGs present={have}, repeat byte-identical={same}, "
                  f"min pairwise Frobenius distance {min(dists):.3e}")


def test_criterion_8_end_to_end_determinism(report, tmp_path):
    t0 = time.time()
    rcs = [main(["pipeline", "--out", str(tmp_path / r), "--scale", "tiny", "--seed", "0"])
           for r in ("a", "b")]
    names = ["pretrain_structure/curve.csv", "pretrain_pose/curve.csv", "model/curves.csv",
             "embeddings_structure.csv", "embeddings_pose.csv"]
    diff = [n for n in names
            if (tmp_path / "a" / n).read_bytes() != (tmp_path / "b" / n).read_bytes()]
    ok = rcs == [0, 0] and not diff
    report(8, ok, f"tiny pipeline twice: exit codes {rcs}, {len(names) - len(diff)}/{len(names)} "
                  f"curve/embedding CSVs byte-identical{' (differ: ' + ', '.join(diff) + ')' if diff else ''}, "
                  f"{(time.time() - t0) / 60:.1f} min for both runs")
