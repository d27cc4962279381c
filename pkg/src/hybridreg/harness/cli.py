"""Command-line entry point: ``hybridreg {synth,sample,register,eval,ablate}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..core import RigidTransform, rotation_about_axis
from ..io import load_cloud, load_transform, save_cloud, save_transform
from .ablation import ablation_suite, run_suite
from .config import Config
from .pipeline import Variant, NODE_MODES, prepare, register_prepared, variant_nodes
from .report import plot_nodes, write_json, write_suite_report
from .synth import RECIPES, ScenePair, make_suite, measured_overlap, synth_pair

log = logging.getLogger("hybridreg")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="flat key = value file")
    g.add_argument("--scale", type=float, default=None, help="multiply every length key (e.g. 20 outdoors)")
    for key, val in Config().to_flat().items():
        g.add_argument(f"--{key}", dest=f"cfg:{key}", default=None, metavar=type(val).__name__.upper())


def build_config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    if args.scale is not None:
        cfg = cfg.scaled(args.scale)
    flat = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    return cfg.override(flat)


def _pair_dir_write(pair: ScenePair, d: Path) -> None:
    d.mkdir(parents=True, exist_ok=True)
    save_cloud(pair.source, d / "source.ply")
    save_cloud(pair.target, d / "target.ply")
    save_transform(pair.T_gt, d / "gt.txt")
    write_json({"recipe": pair.recipe, "seed": pair.seed, "gt_overlap": pair.gt_overlap,
                "noise_sigma": pair.noise_sigma, "step": pair.step}, d / "meta.json")


def _pair_dir_read(d: Path) -> ScenePair:
    meta = json.loads((d / "meta.json").read_text())
    return ScenePair(load_cloud(d / "source.ply"), load_cloud(d / "target.ply"), load_transform(d / "gt.txt"),
                     meta["gt_overlap"], meta["noise_sigma"], meta.get("recipe", ""), meta.get("seed", 0),
                     meta.get("step", 0.03))


def _suite(args) -> List[ScenePair]:
    if args.pairs:
        dirs = sorted(p.parent for p in Path(args.pairs).glob("*/meta.json"))
        if not dirs:
            raise SystemExit(f"no pair directories (with meta.json) under {args.pairs}")
        return [_pair_dir_read(d) for d in dirs]
    return make_suite(args.recipe, args.n, args.seed, (args.min_overlap, args.max_overlap), args.noise)


def cmd_synth(args, cfg: Config) -> int:
    out = Path(args.out)
    if args.n == 1 and args.angle is not None:
        T = RigidTransform(rotation_about_axis(args.axis, args.angle), np.asarray(args.translation, float))
        pairs = [synth_pair(args.recipe, T, args.max_overlap, args.noise, args.seed)]
    else:
        pairs = make_suite(args.recipe, args.n, args.seed, (args.min_overlap, args.max_overlap), args.noise)
    for k, pair in enumerate(pairs):
        _pair_dir_write(pair, out / f"pair_{k:03d}")
        print(f"pair_{k:03d}: {len(pair.source)} / {len(pair.target)} points, "
              f"overlap {pair.gt_overlap:.3f} (measured {measured_overlap(pair):.3f})")
    return 0


def cmd_sample(args, cfg: Config) -> int:
    cloud = load_cloud(args.cloud)
    prep = prepare(cloud, cfg)
    nodes = variant_nodes(prep, args.nodes)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out, np.hstack([nodes.points, nodes.labels[:, None]]), fmt=["%.9g"] * 3 + ["%d"],
               header="x y z salient")
    print(f"{nodes.n_salient} salient + {nodes.n_non_salient} non-salient nodes -> {out}")
    if args.figure:
        plot_nodes(prep.P2.points, nodes.salient, nodes.non_salient, args.figure)
    return 0


def cmd_register(args, cfg: Config) -> int:
    ps = prepare(load_cloud(args.source), cfg)
    pt = prepare(load_cloud(args.target), cfg)
    out = register_prepared(ps, pt, cfg, Variant(nodes=args.nodes))
    save_transform(out.T, args.out)
    info = dict(out.counts, failed=out.result is None, error=out.error,
                transform=out.T.as_matrix().tolist())
    if args.json:
        write_json(info, args.json)
    if out.result is None:
        print(f"registration failed ({out.error}); identity written to {args.out}", file=sys.stderr)
        return 2
    print(f"{len(out.result.inliers)} inliers of {out.counts['point_corr']} correspondences -> {args.out}")
    return 0


def _emit(report, args) -> int:
    files = write_suite_report(report, args.out, figures=not args.no_figures)
    print((Path(args.out) / "summary.txt").read_text(), end="")
    print("wrote " + ", ".join(str(f) for f in files))
    return 0


def cmd_eval(args, cfg: Config) -> int:
    return _emit(run_suite(_suite(args), cfg, jobs=args.jobs), args)


def cmd_ablate(args, cfg: Config) -> int:
    return _emit(ablation_suite(args.mode, _suite(args), cfg, jobs=args.jobs), args)


def _suite_flags(p):
    p.add_argument("--recipe", choices=sorted(RECIPES), default="room")
    p.add_argument("--n", type=int, default=1, help="number of pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.005)
    p.add_argument("--min-overlap", type=float, default=0.3)
    p.add_argument("--max-overlap", type=float, default=0.8)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridreg", description="Hybrid-node point cloud registration")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic scan pairs with ground truth")
    _suite_flags(p)
    p.add_argument("--angle", type=float, default=None, help="fixed rotation angle (deg) for a single pair")
    p.add_argument("--axis", type=float, nargs=3, default=(0.0, 0.0, 1.0))
    p.add_argument("--translation", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sample", help="hybrid nodes of one cloud")
    p.add_argument("cloud")
    p.add_argument("--out", required=True, help="text file: x y z label")
    p.add_argument("--nodes", choices=NODE_MODES, default="hybrid")
    p.add_argument("--figure", help="optional PNG with the nodes drawn over the cloud")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("register", help="estimate the transform taking source onto target")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--out", required=True, help="4x4 transform text file")
    p.add_argument("--json", help="optional JSON with intermediate counts")
    p.add_argument("--nodes", choices=NODE_MODES, default="hybrid")
    p.set_defaults(func=cmd_register)

    for name, helptext in (("eval", "metrics over a suite"), ("ablate", "node-choice / sm-placement sweeps")):
        p = sub.add_parser(name, help=helptext)
        if name == "ablate":
            p.add_argument("--mode", choices=("node-choice", "sm-placement"), required=True)
        _suite_flags(p)
        p.add_argument("--pairs", help="directory of pairs written by synth (overrides --recipe/--n)")
        p.add_argument("--out", required=True, help="report directory")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--no-figures", action="store_true")
        p.set_defaults(func=cmd_eval if name == "eval" else cmd_ablate)

    for p in sub.choices.values():
        _add_config_flags(p)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
    except (KeyError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return args.func(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
