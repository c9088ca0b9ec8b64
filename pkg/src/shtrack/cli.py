"""Command-line harness: simulate, replay, sweep and export-mesh."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .geometry import tessellate
from .sh import ShCoefficients
from .tracking import TrackerConfig, TrackState, belief_to_json

log = logging.getLogger("shtrack")

SNAPSHOT_MESH = (24, 48)


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _mesh_dir(args) -> Path:
    if args.mesh_dir:
        return Path(args.mesh_dir)
    if args.out and args.out != "-":
        out = Path(args.out)
        return out.with_name(out.stem + "_meshes")
    return Path("meshes")


def _snapshot_steps(n: int) -> list[int]:
    picks = [1, 2, 3, 4, n] if n > 5 else list(range(1, n + 1))
    return sorted(set(picks))


def _run_steps(steps, args, total: int | None):
    """Stream reports, export meshes and collect figure material."""
    snapshots, ks, ious = [], [], []
    wanted = set(_snapshot_steps(total)) if total else set()
    last = None
    with _output(args.out) as out:
        for i, step in enumerate(steps, 1):
            out.write(step.report.to_json(timing=args.timing) + "\n")
            out.flush()
            state = step.state
            if args.mesh_every and step.report.k % args.mesh_every == 0:
                d = _mesh_dir(args)
                d.mkdir(parents=True, exist_ok=True)
                harness.export_mesh(state.coeffs, state.position, d / f"step_{step.report.k:06d}.obj")
            if args.figures and (i in wanted):
                mesh = tessellate(state.coeffs, state.position, *SNAPSHOT_MESH)
                snapshots.append((mesh, step.frame.points, f"k={step.report.k}"))
            ks.append(step.report.k)
            ious.append(step.report.iou)
            last = step
    if last is None:
        raise RuntimeError("no frames were processed")
    if args.state:
        Path(args.state).write_text(belief_to_json(last.belief, last.state.coeffs.degree), encoding="utf-8")
    if args.figures and total is None:
        mesh = tessellate(last.state.coeffs, last.state.position, *SNAPSHOT_MESH)
        snapshots.append((mesh, last.frame.points, f"k={last.report.k}"))
    return snapshots, ks, ious


def cmd_simulate(args) -> int:
    scenario = harness.load_config(args.config).with_overrides(seed=args.seed, frames=args.steps)
    snapshots, ks, ious = _run_steps(harness.simulate(scenario), args, scenario.frames)
    if args.figures:
        from . import plotting

        fig_dir = Path(args.figures)
        plotting.plot_iou_curve({"estimate": (ks, ious)}, fig_dir / "iou.png")
        plotting.plot_snapshots(snapshots, fig_dir / "estimates.png", f"L = {scenario.tracker.degree}")
    return 0


def _tracker_from_config(path) -> tuple[TrackerConfig, object]:
    scenario = harness.load_config(path)
    return scenario.tracker, scenario.filter_motion


def cmd_replay(args) -> int:
    tracker, motion = _tracker_from_config(args.config)
    frames = harness.read_frames(args.frames_dir)
    n = len(frames)
    snapshots, ks, _ = _run_steps(harness.iter_replay(args.frames_dir, tracker, motion), args, None)
    if args.figures:
        from . import plotting

        plotting.plot_snapshots(snapshots, Path(args.figures) / "estimate.png", f"{n} frames, L = {tracker.degree}")
    return 0


def cmd_sweep(args) -> int:
    base = harness.load_config(args.config).with_overrides(seed=args.seed, frames=args.steps)
    orders = [int(v) for v in args.orders.split(",") if v.strip()]
    results = {L: [] for L in orders}
    with _output(args.out) as out:
        for L in orders:
            for i in range(args.seeds):
                scenario = replace(base, seed=base.seed + i, tracker=replace(base.tracker, degree=L))
                tail = range(max(1, scenario.frames - args.window + 1), scenario.frames + 1)
                ious = [r.iou for r in harness.run_simulation(scenario, iou_steps=set(tail))]
                converged = float(np.median([v for v in ious if v is not None]))
                results[L].append(converged)
                record = {"record": "run", "order": L, "seed": scenario.seed, "iou": ious, "converged_iou": converged}
                out.write(json.dumps(record) + "\n")
                out.flush()
        for L in orders:
            out.write(json.dumps({"record": "summary", "order": L, "median_converged_iou": float(np.median(results[L]))}) + "\n")
    if args.figures:
        from . import plotting

        plotting.plot_order_sweep(orders, [results[L] for L in orders], Path(args.figures) / "order_sweep.png")
    return 0


def cmd_export_mesh(args) -> int:
    data = json.loads(Path(args.state).read_text(encoding="utf-8"))
    if "mean" in data:
        state = TrackState.from_vector(data["mean"], int(data["degree"]))
        coeffs, star = state.coeffs, state.position
    else:
        coeffs = ShCoefficients.from_dict(data)
        star = np.asarray(data.get("star_point", (0.0, 0.0, 0.0)), dtype=float)
    mesh = harness.export_mesh(coeffs, star, args.out, (args.n_theta, args.n_phi))
    log.info("wrote %s (%d vertices, %d triangles)", args.out, mesh.n_vertices, mesh.n_triangles)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shtrack", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_output_flags(p):
        p.add_argument("--out", help="JSONL metrics file (default: stdout)")
        p.add_argument("--mesh-every", type=int, default=0, metavar="K", help="export the estimate as OBJ every K steps")
        p.add_argument("--mesh-dir", help="directory for OBJ snapshots")
        p.add_argument("--figures", metavar="DIR", help="render PNG figures into DIR")
        p.add_argument("--state", help="write the final belief as JSON")
        p.add_argument("--timing", action="store_true", help="include wall time in reports")

    p = sub.add_parser("simulate", help="run a simulated scenario")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    add_output_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="track recorded frame files")
    p.add_argument("frames_dir")
    p.add_argument("config")
    add_output_flags(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("sweep", help="converged IoU over series degrees and seeds")
    p.add_argument("config")
    p.add_argument("--orders", default="1,2,4,6,8")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--window", type=int, default=5, help="final steps whose median IoU is the converged IoU (only these are scored)")
    p.add_argument("--out")
    p.add_argument("--figures", metavar="DIR")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-mesh", help="tessellate a saved state or coefficient file to OBJ")
    p.add_argument("state")
    p.add_argument("out")
    p.add_argument("--n-theta", type=int, default=32)
    p.add_argument("--n-phi", type=int, default=64)
    p.set_defaults(func=cmd_export_mesh)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - report any failure as a diagnostic and non-zero exit
        if args.verbose:
            raise
        print(f"shtrack {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
