"""Command-line entry point.

Subcommands: gen-data, pretrain, train, embed, project, plot, ablation,
pipeline. Every flag can also come from a JSON config file (``--config``);
explicit flags win. Exit codes: 0 ok, 1 usage, 2 data error, 3 divergence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import datagen, mtl, pretrain as pt
from .embeddings import embed_trees, read_embeddings_csv, write_embeddings_csv
from .nn import ModelParams, TrainingError
from .projection import TsneConfig, clamp_perplexity, read_projection_csv, tsne, \
    write_projection_csv
from .training import write_curve_csv
from .tree import tree_to_structure

log = logging.getLogger("robotembed")

EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 1, 2, 3

SCALES = {
    "tiny": {"structures": 30, "poses": 50, "epochs": 5, "max_points": 500},
    "paper": {"structures": 1000, "poses": 10000, "epochs": 100, "max_points": 5000},
}


class DataError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers

def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing {what}: {p}")
    return p


def _file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _up_to_date(out: Path, cfg: dict, outputs) -> bool:
    stamp = out / "config.json"
    if not stamp.exists() or not all((out / o).exists() for o in outputs):
        return False
    try:
        return json.loads(stamp.read_text()).get("hash") == _config_hash(cfg)
    except ValueError:
        return False


def _stamp(out: Path, cfg: dict):
    (out / "config.json").write_text(
        json.dumps({"hash": _config_hash(cfg), "config": cfg}, indent=2, sort_keys=True))


def _dataset_id(data_dir) -> str:
    return _file_hash(_require(Path(data_dir) / "manifest.json", "dataset manifest"))


def _load_bundle(data_dir):
    d = Path(data_dir)
    for f in ("structures.jsonl", "poses.jsonl", "split.json"):
        _require(d / f, "dataset file")
    return datagen.load_dataset(d)


def _limit(items, n, seed):
    if n is None or n >= len(items):
        return items
    idx = np.sort(np.random.default_rng(seed).choice(len(items), size=n, replace=False))
    return [items[i] for i in idx]


# ---------------------------------------------------------------- commands

def cmd_gen_data(args) -> dict:
    scale = SCALES[args.scale]
    spec = datagen.DatasetSpec(
        joint_counts=args.joints,
        structures_per_count=args.structures or scale["structures"],
        poses_per_structure=args.poses or scale["poses"],
        length_range=(args.length_min, args.length_max),
        split_ratio=args.split_ratio, rng_seed=args.seed)
    out = Path(args.out)
    cfg = {"cmd": "gen-data", "spec": spec.to_dict()}
    files = ("structures.jsonl", "poses.jsonl", "split.json", "manifest.json")
    if _up_to_date(out, cfg, files):
        log.info("dataset in %s is up to date", out)
        return json.loads((out / "manifest.json").read_text())
    bundle = datagen.generate_dataset(spec)
    man = datagen.save_dataset(bundle, out)
    _stamp(out, cfg)
    log.info("wrote %d structures, %d poses to %s", man["n_structures"], man["n_poses"], out)
    return man


def _pretrain_items(bundle, dataset):
    if dataset == "structure":
        by_id = dict(bundle.structures)
        return ([by_id[i] for i in bundle.structure_ids("train")],
                [by_id[i] for i in bundle.structure_ids("test")])
    return ([t for _, _, t in bundle.pose_records("train")],
            [t for _, _, t in bundle.pose_records("test")])


def cmd_pretrain(args) -> dict:
    out = Path(args.out)
    config = pt.PretrainConfig(task=args.task, dataset=args.dataset, epochs=args.epochs,
                               batch_size=args.batch_size, lr=args.lr, seed=args.seed,
                               round_trips=args.round_trips)
    cfg = {"cmd": "pretrain", "data": _dataset_id(args.data), "config": config.to_dict(),
           "max_samples": args.max_samples}
    if _up_to_date(out, cfg, ("params.json", "curve.csv")):
        log.info("pretraining in %s is up to date", out)
        return cfg
    bundle = _load_bundle(args.data)
    train, test = _pretrain_items(bundle, args.dataset)
    train = _limit(train, args.max_samples, args.seed)
    model, curve, baseline = pt.pretrain(train, test, config)
    out.mkdir(parents=True, exist_ok=True)
    model.params.save(out / "params.json")
    write_curve_csv(out / "curve.csv", curve,
                    ("epoch", "train_loss", "test_loss", "baseline_test_loss"))
    _stamp(out, cfg)
    return {"final_test_loss": curve[-1]["test_loss"], "baseline_test_loss": baseline}


def _build_model(meta: dict):
    if meta["kind"] == "mlp":
        return mtl.MlpBaseline(seed=meta["seed"])
    return mtl.MtlModel(seed=meta["seed"], round_trips=meta["round_trips"],
                        downward_only=meta["downward_only"])


def load_model(model_dir):
    d = Path(model_dir)
    meta = json.loads(_require(d / "model.json", "model description").read_text())
    model = _build_model(meta)
    params = ModelParams.load(_require(d / "params.json", "model checkpoint"))
    if params.manifest() != model.params.manifest():
        raise DataError(f"checkpoint in {d} does not match its model description")
    model.params.flat[:] = params.flat
    return model, meta


def train_model(data, out, *, epochs, batch_size, lr, seed, w_fk, w_ik, round_trips, task,
                baseline, struct_ckpt=None, pose_ckpt=None, max_samples=None) -> dict:
    out = Path(out)
    downward_only = round_trips == 0
    meta = {"kind": "mlp" if baseline == "mlp" else "tree", "seed": seed,
            "round_trips": max(round_trips, 1) if downward_only else round_trips,
            "downward_only": downward_only}
    config = mtl.MtlConfig(epochs=epochs, batch_size=batch_size, lr=lr, seed=seed,
                           w_fk=w_fk, w_ik=w_ik, round_trips=meta["round_trips"],
                           downward_only=downward_only, task=task)
    cfg = {"cmd": "train", "data": _dataset_id(data), "config": config.to_dict(),
           "model": meta, "max_samples": max_samples,
           "struct_ckpt": _file_hash(_require(struct_ckpt, "structure checkpoint"))
           if struct_ckpt else None,
           "pose_ckpt": _file_hash(_require(pose_ckpt, "pose checkpoint")) if pose_ckpt else None}
    if _up_to_date(out, cfg, ("params.json", "model.json", "curves.csv", "metrics.json")):
        log.info("model in %s is up to date", out)
        return json.loads((out / "metrics.json").read_text())
    bundle = _load_bundle(data)
    train = _limit(mtl.samples_from_bundle(bundle, "train"), max_samples, seed)
    test = mtl.samples_from_bundle(bundle, "test")
    model = _build_model(meta)
    if meta["kind"] == "tree" and (struct_ckpt or pose_ckpt):
        n = model.warm_start(ModelParams.load(struct_ckpt) if struct_ckpt else None,
                             ModelParams.load(pose_ckpt) if pose_ckpt else None)
        log.info("warm-started %d parameter arrays", n)
    model, rows = mtl.train(model, train, test, config)
    out.mkdir(parents=True, exist_ok=True)
    model.params.save(out / "params.json")
    (out / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    write_curve_csv(out / "curves.csv", rows, mtl.CURVE_COLUMNS)
    rng = np.random.default_rng([seed, 3])
    metrics = {
        "test_L_FK": rows[-1]["L_FK"], "test_L_IK": rows[-1]["L_IK"],
        "fk_mean_predictor_mae": mtl.mean_predictor_fk_mae(train, test),
        "ik_fk_distance": float(mtl.ik_distances(model, test).mean()) if test else None,
        "random_angle_fk_distance": float(mtl.random_angle_distances(test, rng).mean())
        if test else None,
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True))
    _stamp(out, cfg)
    return metrics


def cmd_train(args) -> dict:
    return train_model(args.data, args.out, epochs=args.epochs, batch_size=args.batch_size,
                       lr=args.lr, seed=args.seed, w_fk=args.w_fk, w_ik=args.w_ik,
                       round_trips=args.round_trips, task=args.task, baseline=args.baseline,
                       struct_ckpt=args.struct_ckpt, pose_ckpt=args.pose_ckpt,
                       max_samples=args.max_samples)


def export_embeddings(data, model_dir, out_file, kind="structure", max_points=None, seed=0):
    bundle = _load_bundle(data)
    model, _ = load_model(model_dir)
    if kind == "structure":
        ids = [sid for sid, _ in bundle.structures]
        trees = [t for _, t in bundle.structures]
    else:
        recs = _limit(bundle.poses, max_points, seed)
        ids = [pid for pid, _, _ in recs]
        trees = [t for _, _, t in recs]
    emb = embed_trees(model, ids, trees, kind)
    Path(out_file).parent.mkdir(parents=True, exist_ok=True)
    write_embeddings_csv(out_file, emb)
    return emb


def cmd_embed(args):
    emb = export_embeddings(args.data, args.model, args.out, args.kind, args.max_points,
                            args.seed)
    return {"rows": len(emb)}


def project_embeddings(in_file, out_file, *, perplexity=30.0, iterations=1000,
                       learning_rate=200.0, seed=0, max_points=None):
    emb = read_embeddings_csv(_require(in_file, "embedding CSV"))
    if max_points:
        emb = emb.subsample(max_points, np.random.default_rng(seed))
    if len(emb) < 10:
        raise DataError("t-SNE needs at least 10 embeddings")
    config = TsneConfig(perplexity=clamp_perplexity(perplexity, len(emb)),
                        iterations=iterations, learning_rate=learning_rate, seed=seed)
    xy = tsne(emb.vectors, config)
    Path(out_file).parent.mkdir(parents=True, exist_ok=True)
    write_projection_csv(out_file, emb.ids, xy, emb.n_joints, emb.first_feature)
    return xy


def cmd_project(args):
    project_embeddings(args.embeddings, args.out, perplexity=args.perplexity,
                       iterations=args.iterations, learning_rate=args.tsne_lr,
                       seed=args.seed, max_points=args.max_points)
    return {}


def plot_projection(proj_file, out_svg, title=""):
    from .plotting import scatter_svg

    proj = read_projection_csv(_require(proj_file, "projection CSV"))
    scatter_svg(out_svg, proj["xy"], proj["n_joints"], proj["first_feature"], title)


def plot_pose_extremes(proj_file, data, out_svg, per_end: int = 4):
    """Stick figures of the poses at both ends of the first t-SNE axis."""
    from .plotting import poses_svg

    proj = read_projection_csv(_require(proj_file, "projection CSV"))
    bundle = _load_bundle(data)
    poses = {str(pid): (sid, t) for pid, sid, t in bundle.poses}
    order = np.argsort(proj["xy"][:, 0], kind="stable")
    picks = list(order[:per_end]) + list(order[-per_end:])
    structures, angles, labels = [], [], []
    for k in picks:
        sid, tree = poses[proj["id"][k]]
        st = tree_to_structure(bundle.structure_tree(sid))
        structures.append(st)
        angles.append([n.features[0] for n in tree.nodes if n.children])
        labels.append(("low" if k in picks[:per_end] else "high") + f" end, id {proj['id'][k]}")
    poses_svg(out_svg, structures, angles, labels)


def cmd_plot(args):
    plot_projection(args.projection, args.out, args.title)
    if args.poses_out:
        if not args.data:
            raise DataError("--poses-out needs --data")
        plot_pose_extremes(args.projection, args.data, args.poses_out)
    return {}


def cmd_ablation(args):
    """Train once per round-trip setting and project each structure embedding."""
    out = Path(args.out)
    result = {}
    for k in args.round_trips:
        run = out / f"round_trips_{k}"
        train_model(args.data, run, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                    seed=args.seed, w_fk=args.w_fk, w_ik=args.w_ik, round_trips=k,
                    task="mtl", baseline="none", max_samples=args.max_samples)
        export_embeddings(args.data, run, run / "embeddings_structure.csv", "structure")
        project_embeddings(run / "embeddings_structure.csv", run / "tsne_structure.csv",
                           iterations=args.iterations, seed=args.seed)
        label = "downward only" if k == 0 else f"{k} round trip(s)"
        plot_projection(run / "tsne_structure.csv", run / "tsne_structure.svg", label)
        result[k] = str(run)
    return result


def cmd_pipeline(args):
    """gen-data -> pretrain (FB structure, FB pose) -> train -> embed -> project -> plot."""
    scale = SCALES[args.scale]
    out = Path(args.out)
    epochs = args.epochs or scale["epochs"]
    max_points = args.max_points or scale["max_points"]
    ns = argparse.Namespace(
        out=out / "data", scale=args.scale, joints=[2, 3, 4],
        structures=args.structures, poses=args.poses, length_min=0.1, length_max=0.4,
        split_ratio=0.8, seed=args.seed)
    cmd_gen_data(ns)
    data = out / "data"
    ckpts = {}
    for dataset, bs in (("structure", 8), ("pose", args.batch_size)):
        run = out / f"pretrain_{dataset}"
        cmd_pretrain(argparse.Namespace(
            data=data, out=run, task="FB", dataset=dataset, epochs=epochs, batch_size=bs,
            lr=args.pretrain_lr, seed=args.seed, round_trips=args.round_trips, max_samples=None))
        ckpts[dataset] = run / "params.json"
    model_dir = out / "model"
    metrics = train_model(data, model_dir, epochs=epochs, batch_size=args.batch_size,
                          lr=args.lr, seed=args.seed, w_fk=5.0, w_ik=0.5,
                          round_trips=args.round_trips, task="mtl", baseline="none",
                          struct_ckpt=ckpts["structure"], pose_ckpt=ckpts["pose"])
    for kind in ("structure", "pose"):
        emb_csv = out / f"embeddings_{kind}.csv"
        export_embeddings(data, model_dir, emb_csv, kind,
                          max_points if kind == "pose" else None, args.seed)
        proj_csv = out / f"tsne_{kind}.csv"
        project_embeddings(emb_csv, proj_csv, iterations=args.iterations, seed=args.seed)
        plot_projection(proj_csv, out / f"tsne_{kind}.svg", f"{kind} embedding")
    plot_pose_extremes(out / "tsne_pose.csv", data, out / "sampled_poses.svg")
    return metrics


# ---------------------------------------------------------------- parser

def _add_train_flags(p, lr_default=1e-4):
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=lr_default)
    p.add_argument("--max-samples", type=int, default=None,
                   help="cap on training items (seeded subsample)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robotembed", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with flag defaults")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate structure/pose datasets")
    p.add_argument("--out", required=True)
    p.add_argument("--scale", choices=sorted(SCALES), default="paper")
    p.add_argument("--joints", type=int, nargs="+", default=[2, 3, 4])
    p.add_argument("--structures", type=int, help="structures per joint count")
    p.add_argument("--poses", type=int, help="poses per structure")
    p.add_argument("--length-min", type=float, default=0.1)
    p.add_argument("--length-max", type=float, default=0.4)
    p.add_argument("--split-ratio", type=float, default=0.8)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="ED/FB reconstruction pretraining")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--task", choices=["ED", "FB"], default="FB")
    p.add_argument("--dataset", choices=["structure", "pose"], default="structure")
    p.add_argument("--round-trips", type=int, default=2)
    _add_train_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="FK/IK multi-task training")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--task", choices=list(mtl.TASKS), default="mtl")
    p.add_argument("--round-trips", type=int, choices=[0, 1, 2, 3], default=2,
                   help="0 = downward pass only")
    p.add_argument("--baseline", choices=["none", "mlp"], default="none")
    p.add_argument("--w-fk", type=float, default=5.0)
    p.add_argument("--w-ik", type=float, default=0.5)
    p.add_argument("--struct-ckpt", help="pretrained structure encoder params.json")
    p.add_argument("--pose-ckpt", help="pretrained pose encoder params.json")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="export embeddings as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=["structure", "pose"], default="structure")
    p.add_argument("--max-points", type=int, default=5000)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("project", help="t-SNE of an embedding CSV")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--tsne-lr", type=float, default=200.0)
    p.add_argument("--max-points", type=int, default=5000)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("plot", help="SVG scatter of a projection CSV")
    p.add_argument("--projection", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--title", default="")
    p.add_argument("--data", help="dataset dir, needed for --poses-out")
    p.add_argument("--poses-out", help="also draw poses from both ends of the projection")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("ablation", help="round-trip ablation: train/embed/project per setting")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--round-trips", type=int, nargs="+", default=[0, 1, 2, 3])
    p.add_argument("--w-fk", type=float, default=5.0)
    p.add_argument("--w-ik", type=float, default=0.5)
    p.add_argument("--iterations", type=int, default=1000)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--out", required=True)
    p.add_argument("--scale", choices=sorted(SCALES), default="tiny")
    p.add_argument("--structures", type=int)
    p.add_argument("--poses", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--pretrain-lr", type=float, default=1e-4)
    p.add_argument("--round-trips", type=int, default=2)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--max-points", type=int)
    p.set_defaults(func=cmd_pipeline)

    # the global seed may also follow the subcommand
    for sp in sub.choices.values():
        sp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    return parser


def _apply_config(parser, argv):
    """Two-pass parse so JSON config values act as defaults for every subcommand."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = json.loads(_require(args.config, "config file").read_text())
    if not isinstance(cfg, dict):
        raise DataError("config file must hold a JSON object")
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub_action.choices[args.command]
    known = {a.dest for a in subparser._actions} | {a.dest for a in parser._actions}
    unknown = set(cfg) - known
    if unknown:
        parser.error(f"unknown config keys: {sorted(unknown)}")
    subparser.set_defaults(**{k: v for k, v in cfg.items() if k in {a.dest for a in subparser._actions}})
    parser.set_defaults(**{k: v for k, v in cfg.items() if k in {a.dest for a in parser._actions}})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as e:  # argparse: --help or a usage error
        return int(e.code or 0)
    except DataError as e:
        print(f"robotembed: {e}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except (DataError, FileNotFoundError, OSError, KeyError, ValueError) as e:
        print(f"robotembed: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as e:
        print(f"robotembed: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    if result:
        print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
