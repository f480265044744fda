"""Command-line interface: ``gslayout <command> ...``.

Exit codes: 0 ok, 2 usage, 3 validation or input error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .bundle import BundleError, SceneBundle, write_atomic
from .camera import RoamConfig, roam_trajectory, trajectory_to_json
from .energy import EnergyError, assemble
from .gscloud import PlyError, write_composite_ply, write_ply
from .layout_init import SceneConfig, build_configs, configs_to_json, initialize_positions, standard_sizes
from .optimizer import DivergenceError, OptimConfig, ScheduleConfig, optimize
from .pools import PoolsError, load_pools
from .scenegraph import SceneGraphError, extract_relations, parse_scene_file

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _graph_from(args):
    """Scene graph from ``--prompt`` text or a scene file path."""
    if args.prompt:
        return extract_relations(args.prompt), None
    if not args.scene:
        raise UsageError("give a scene file or --prompt")
    path = Path(args.scene)
    return parse_scene_file(path.read_text()), path.parent


def _pools(args):
    return load_pools(args.pools) if args.pools else load_pools()


def _emit(text):
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# -- commands

def cmd_parse(args):
    graph, _ = _graph_from(args)
    _emit(graph.to_json())


def cmd_init(args):
    graph, _ = _graph_from(args)
    pools = _pools(args)
    sizes = standard_sizes(graph, pools)
    configs = build_configs(graph, pools, initialize_positions(graph, pools, args.mode, sizes), sizes)
    _emit(configs_to_json(configs))


def cmd_build(args):
    graph, base = _graph_from(args)
    bundle = SceneBundle.build(graph, _pools(args), args.seed, args.points, base)
    bundle.save(args.out)
    _emit(json.dumps({"bundle": str(args.out), "labels": graph.labels}))


def _run_optimize(args, bundle, labels=None):
    scene = bundle.scene()
    schedule = ScheduleConfig(T=args.steps, beta=args.beta, tau_p=args.tau)
    try:
        res = optimize(scene, schedule, OptimConfig(lr_t=args.lr_t, lr_r=args.lr_r), labels=labels, trace=bool(args.trace))
    except DivergenceError as exc:
        if args.trace:
            write_atomic(args.trace, exc.result.trace_lines().encode())
        raise
    if args.trace:
        write_atomic(args.trace, res.trace_lines().encode())
    bundle.absorb(scene, res.poses)
    return res


def cmd_optimize(args):
    bundle = SceneBundle.load(args.bundle)
    res = _run_optimize(args, bundle, args.labels)
    bundle.save(args.bundle)
    _emit(json.dumps({"x": res.x, "E_p": res.final.E_p, "E_l": res.final.E_l}))


def cmd_energy(args):
    bundle = SceneBundle.load(args.bundle)
    scene = bundle.scene()
    bd = assemble(scene)
    if args.json:
        _emit(json.dumps(bd.to_dict(), indent=2, sort_keys=True))
        return
    lines = [f"E_p {bd.E_p:.6g}", f"E_l {bd.E_l:.6g}"]
    for t in bd.terms:
        state = "" if t.active else "  (inactive)"
        lines.append(f"  {t.group:8s} {t.name:11s} {'/'.join(t.nodes):30s} "
                     f"w={t.weight:<5g} value={t.value:.6g}{state}")
    _emit("\n".join(lines))


def cmd_cameras(args):
    bundle = SceneBundle.load(args.bundle)
    labels = [args.object] if args.object else bundle.graph.labels
    out = {}
    for lab in labels:
        bundle.node(lab)
        c = bundle.configs[lab]
        # track the object where it is now, not where it started
        cur = SceneConfig(c.id, lab, tuple(bundle.poses[lab].translation), c.standard_size)
        roam = RoamConfig(views_per_object=args.views, seed=args.seed)
        out[lab] = json.loads(trajectory_to_json(roam_trajectory(cur, roam)))
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        write_atomic(args.out, text.encode())
    else:
        _emit(text)


def cmd_edit(args):
    bundle = SceneBundle.load(args.bundle)
    if args.action == "remove":
        bundle.remove(args.label)
    elif args.action == "move":
        if args.to is None and args.by is None and args.rotate is None:
            raise UsageError("move needs --to, --by or --rotate")
        bundle.move(args.label, by=args.by, rotate=args.rotate, to=args.to)
    elif args.action == "add":
        n_before = len(bundle.graph.edges)
        text = Path(args.fragment[1:]).read_text() if args.fragment.startswith("@") else args.fragment
        text = text.replace(";", "\n")
        new = bundle.add(text, points=args.points)
        if not args.no_optimize:
            _run_optimize(args, bundle, sorted(bundle.new_edge_labels(n_before, new)))
    elif args.action == "restyle":
        bundle.restyle(args.label, args.ply)
    changed = bundle.save(args.bundle)
    _emit(json.dumps({"changed": changed}))


def cmd_export(args):
    bundle = SceneBundle.load(args.bundle)
    if not bundle.graph.nodes:
        raise BundleError("bundle has no objects to export")
    out = Path(args.out)
    poses = None if args.local else bundle.poses
    configs = [bundle.configs[lab] for lab in bundle.graph.labels]
    if args.format == "json":
        doc = {"configs": [c.to_dict() for c in configs],
               "poses": {lab: {"translation": p.translation.tolist(), "rotation": p.rotation.tolist()}
                         for lab, p in bundle.poses.items()},
               "graph": bundle.graph.to_dict()}
        write_atomic(out, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())
        _emit(json.dumps({"written": [str(out)]}))
        return
    written = []
    if args.composite:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_composite_ply(out, bundle.clouds, poses)
        written.append(out)
        side = out.parent
    else:
        out.mkdir(parents=True, exist_ok=True)
        for lab in bundle.graph.labels:
            f = out / f"{lab}.ply"
            write_ply(f, bundle.clouds[lab], None if poses is None else poses[lab])
            written.append(f)
        side = out
    write_atomic(side / "configs.json", configs_to_json(configs).encode())
    written.append(side / "configs.json")
    if args.local:
        doc = {lab: {"translation": p.translation.tolist(), "rotation": p.rotation.tolist()}
               for lab, p in sorted(bundle.poses.items())}
        write_atomic(side / "poses.json", (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())
        written.append(side / "poses.json")
    _emit(json.dumps({"written": [str(w) for w in written]}))


# -- parser

def _scene_args(p):
    p.add_argument("scene", nargs="?", help="scene file")
    p.add_argument("--prompt", help="free-text prompt instead of a scene file")


def _opt_args(p, steps=300):
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=None, help="phase threshold on raw E_p")
    p.add_argument("--trace", help="write per-step JSON lines here")
    p.add_argument("--lr-t", type=float, default=OptimConfig.lr_t, help="translation step size, m")
    p.add_argument("--lr-r", type=float, default=OptimConfig.lr_r, help="rotation step size, rad")


def build_parser():
    # global flags work before or after the command name
    common = _Parser(add_help=False)
    common.add_argument("--pools", default=argparse.SUPPRESS, help="pools JSON (default: bundled)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--json-errors", action="store_true", default=argparse.SUPPRESS,
                        help="report errors as JSON on stderr")
    ap = _Parser(prog="gslayout", description="Scene-graph-driven Gaussian layout.", parents=[common])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def add_parser(name, parent=sub, **kw):
        return parent.add_parser(name, parents=[common], **kw)
    sub.required = True

    p = add_parser("parse", help="print the scene graph as JSON")
    _scene_args(p)
    p.set_defaults(func=cmd_parse)

    p = add_parser("init", help="print chained initial configurations")
    _scene_args(p)
    p.add_argument("--mode", choices=("mean", "sum"), default="mean")
    p.set_defaults(func=cmd_init)

    p = add_parser("build", help="write a scene bundle")
    _scene_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int, default=1000)
    p.set_defaults(func=cmd_build)

    p = add_parser("optimize", help="optimize bundle poses in place")
    p.add_argument("bundle")
    p.add_argument("--labels", nargs="+", help="only move these labels")
    _opt_args(p)
    p.set_defaults(func=cmd_optimize)

    p = add_parser("energy", help="energy breakdown of a bundle")
    esub = p.add_subparsers(dest="energy_cmd", parser_class=_Parser)
    esub.required = True
    r = add_parser("report", esub)
    r.add_argument("bundle")
    r.add_argument("--json", action="store_true")
    r.set_defaults(func=cmd_energy)

    p = add_parser("cameras", help="per-object camera trajectories")
    p.add_argument("bundle")
    p.add_argument("--object")
    p.add_argument("--views", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cameras)

    p = add_parser("edit", help="edit a bundle in place")
    esub = p.add_subparsers(dest="action", parser_class=_Parser)
    esub.required = True
    r = add_parser("remove", esub)
    r.add_argument("bundle")
    r.add_argument("label")
    r = add_parser("move", esub)
    r.add_argument("bundle")
    r.add_argument("label")
    r.add_argument("--by", type=float, nargs=3)
    r.add_argument("--to", type=float, nargs=3)
    r.add_argument("--rotate", type=float, nargs=3, help="rotation vector applied on top, radians")
    r = add_parser("add", esub)
    r.add_argument("bundle")
    r.add_argument("fragment", help="scene-file lines (';' separated) or @file")
    r.add_argument("--points", type=int, default=1000)
    r.add_argument("--no-optimize", action="store_true")
    _opt_args(r, steps=150)
    r = add_parser("restyle", esub)
    r.add_argument("bundle")
    r.add_argument("label")
    r.add_argument("ply")
    p.set_defaults(func=cmd_edit)

    p = add_parser("export", help="export clouds or scene JSON")
    p.add_argument("bundle")
    p.add_argument("--format", choices=("ply", "json"), default="ply")
    p.add_argument("--out", required=True, help="directory (per-label PLY) or file")
    p.add_argument("--composite", action="store_true", help="one PLY with a label property")
    p.add_argument("--local", action="store_true", help="keep local frames and write poses.json")
    p.set_defaults(func=cmd_export)
    return ap


def _fail(args_json, code, kind, exc):
    msg = str(exc) or type(exc).__name__
    if args_json:
        sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": msg,
                                     "exit": code}) + "\n")
    else:
        sys.stderr.write(f"gslayout: {kind} error: {msg}\n")
    return code


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in argv
    try:
        args = build_parser().parse_args(argv)
        for k, v in (("pools", None), ("seed", 0), ("json_errors", False)):
            if not hasattr(args, k):
                setattr(args, k, v)
    except UsageError as exc:
        return _fail(json_errors, EXIT_USAGE, "usage", exc)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except UsageError as exc:
        return _fail(json_errors, EXIT_USAGE, "usage", exc)
    except (DivergenceError, FloatingPointError) as exc:
        return _fail(json_errors, EXIT_NUMERIC, "numeric", exc)
    except (SceneGraphError, PoolsError, BundleError, EnergyError, PlyError,
            KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        return _fail(json_errors, EXIT_INVALID, "validation", exc)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
