"""Simulation scenarios, recorded-frame replay and per-step metrics."""
from __future__ import annotations

import json
import math
import re
import time
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterator

import numpy as np

from .geometry import CuboidShape, MeshShape, SphereShape, StarConvexShape, iou, tessellate
from .mesh import TriangleMesh, load_mesh, save_obj
from .models import teapot_like_mesh
from .sh import Rotation3, ShCoefficients
from .tracking import RotationInput, TrackerConfig, TrackState, initialize_belief, process_frame
from .ukf import GaussianBelief

__all__ = [
    "Frame",
    "GroundTruth",
    "ScenarioConfig",
    "StepReport",
    "StepResult",
    "FrameFormatError",
    "load_config",
    "generate_frame",
    "simulate",
    "run_simulation",
    "replay",
    "iter_replay",
    "read_frames",
    "write_frames",
    "export_mesh",
]

FRAME_PATTERN = re.compile(r"^frame_(\d+)\.(txt|ply)$")


class FrameFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Frame:
    k: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class GroundTruth:
    """Ground-truth solid, centred at ``center``.

    ``kind`` is ``"cuboid"`` (``half_extents``), ``"sphere"`` (``radius``) or
    ``"mesh"`` (``mesh``: a file path or ``"builtin:teapot"``; the mesh is
    recentred on its bounding box and either scaled to ``mesh_extents`` or
    multiplied by ``mesh_scale``).
    """

    kind: str = "cuboid"
    half_extents: tuple[float, float, float] = (1.5, 0.5, 0.5)
    radius: float = 1.0
    mesh: str | None = None
    mesh_scale: float = 1.0
    mesh_extents: tuple[float, float, float] | None = None
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("cuboid", "sphere", "mesh"):
            raise ValueError(f"unknown ground truth kind {self.kind!r}")
        if self.kind == "mesh" and not self.mesh:
            raise ValueError("mesh ground truth needs a mesh path")
        object.__setattr__(self, "half_extents", tuple(float(v) for v in self.half_extents))
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.mesh_extents is not None:
            object.__setattr__(self, "mesh_extents", tuple(float(v) for v in self.mesh_extents))

    def base_mesh(self, base_dir: Path | None = None) -> TriangleMesh:
        if self.mesh == "builtin:teapot":
            mesh = teapot_like_mesh()
        else:
            path = Path(self.mesh)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            mesh = load_mesh(path)
        if self.mesh_extents is not None:
            return mesh.scaled_to(self.mesh_extents)
        lo, hi = mesh.bounds()
        return mesh.transformed(self.mesh_scale, -0.5 * (lo + hi) * self.mesh_scale)


@dataclass(frozen=True)
class ScenarioConfig:
    truth: GroundTruth = field(default_factory=GroundTruth)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    measurements_per_frame: int = 60
    noise_variance: float = 1e-2
    frames: int = 20
    seed: int = 0
    rotation_axis: tuple[float, float, float] | None = None
    rotation_rate_deg: float = 0.0
    motion_model: bool = True
    iou_resolution: int = 128
    base_dir: str | None = None

    def __post_init__(self):
        if self.measurements_per_frame < 1 or self.frames < 1:
            raise ValueError("measurement and frame counts must be at least 1")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")
        if self.iou_resolution < 1:
            raise ValueError("iou_resolution must be at least 1")
        if self.rotation_axis is not None:
            object.__setattr__(self, "rotation_axis", tuple(float(v) for v in self.rotation_axis))

    @property
    def rotation(self) -> RotationInput | None:
        if self.rotation_axis is None or self.rotation_rate_deg == 0.0:
            return None
        return RotationInput(self.rotation_axis, math.radians(self.rotation_rate_deg))

    @property
    def filter_motion(self) -> RotationInput | None:
        """Rotation handed to the filter's prediction, if the motion model is enabled."""
        return self.rotation if self.motion_model else None

    @cached_property
    def _base_mesh(self) -> TriangleMesh:
        return self.truth.base_mesh(Path(self.base_dir) if self.base_dir else None)

    def truth_at(self, k: int) -> StarConvexShape:
        """Ground truth pose at time step ``k`` (1-based; no rotation at k = 1)."""
        center = np.array(self.truth.center)
        motion = self.rotation
        rot = motion.rotation(k - 1) if motion is not None else Rotation3.identity()
        if self.truth.kind == "cuboid":
            return CuboidShape(np.array(self.truth.half_extents), center, rot)
        if self.truth.kind == "sphere":
            return SphereShape(self.truth.radius, center)
        mesh = self._base_mesh
        mesh = TriangleMesh(rot.apply(mesh.vertices) + center, mesh.triangles)
        return MeshShape(mesh, center)

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        tracker_kw = {k[len("tracker_"):]: kwargs.pop(k) for k in list(kwargs) if k.startswith("tracker_")}
        cfg = replace(self, **{k: v for k, v in kwargs.items() if v is not None})
        if tracker_kw:
            cfg = replace(cfg, tracker=replace(cfg.tracker, **tracker_kw))
        return cfg

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop("base_dir")
        return data

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ScenarioConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__) - {"base_dir"}
        if unknown:
            raise ValueError(f"unknown scenario settings: {sorted(unknown)}")
        if "truth" in data:
            data["truth"] = GroundTruth(**data["truth"])
        if "tracker" in data:
            data["tracker"] = TrackerConfig.from_dict(data["tracker"])
        if base_dir is not None:
            data["base_dir"] = str(base_dir)
        return cls(**data)


def load_config(path) -> ScenarioConfig:
    """Read a scenario from a ``.json`` or ``.toml`` file."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    else:
        data = json.loads(path.read_text(encoding="utf-8"))
    return ScenarioConfig.from_dict(data, base_dir=path.parent)


# ----------------------------------------------------------------- reports


@dataclass
class StepReport:
    k: int
    iou: float | None
    position_error: float | None
    coefficients: list[float]
    position: list[float]
    skipped: int
    wall_time: float = 0.0

    def to_json(self, timing: bool = False) -> str:
        data = asdict(self)
        if not timing:
            data.pop("wall_time")
        return json.dumps(data)


@dataclass(frozen=True, eq=False)
class StepResult:
    report: StepReport
    belief: GaussianBelief
    frame: Frame

    @property
    def state(self) -> TrackState:
        return TrackState.from_vector(self.belief.mean)


def generate_frame(scenario: ScenarioConfig, k: int, rng: np.random.Generator | None = None) -> Frame:
    """Noisy surface samples of the ground truth at step ``k``.

    Without an explicit generator the stream is seeded by ``(seed, k)``, so
    any frame can be regenerated independently.
    """
    if rng is None:
        rng = np.random.default_rng([scenario.seed, k])
    n = scenario.measurements_per_frame
    pts = scenario.truth_at(k).sample_surface(n, rng)
    if scenario.noise_variance > 0:
        pts = pts + rng.normal(0.0, math.sqrt(scenario.noise_variance), pts.shape)
    return Frame(k, pts)


def _track(frames, tracker: TrackerConfig, motion, truth_fn=None, iou_resolution=128, iou_steps=None) -> Iterator[StepResult]:
    belief = None
    for frame in frames:
        t0 = time.perf_counter()
        if belief is None:
            belief = initialize_belief(frame.points, tracker)
        belief, skipped = process_frame(belief, frame.points, tracker, motion)
        state = TrackState.from_vector(belief.mean)
        score = err = None
        if truth_fn is not None:
            truth = truth_fn(frame.k)
            if iou_steps is None or frame.k in iou_steps:
                score = iou(state.shape(), truth, resolution=iou_resolution)
            err = float(np.linalg.norm(state.position - truth.star_point))
        report = StepReport(
            k=frame.k,
            iou=score,
            position_error=err,
            coefficients=state.coeffs.weights.tolist(),
            position=state.position.tolist(),
            skipped=skipped,
            wall_time=time.perf_counter() - t0,
        )
        yield StepResult(report, belief, frame)


def simulate(scenario: ScenarioConfig, iou_steps=None) -> Iterator[StepResult]:
    """Generate and track frames ``1..scenario.frames``, yielding after each step.

    IoU is scored at every step unless ``iou_steps`` names a subset; the
    other reports then carry ``iou=None``.
    """
    frames = (generate_frame(scenario, k) for k in range(1, scenario.frames + 1))
    yield from _track(
        frames, scenario.tracker, scenario.filter_motion, scenario.truth_at, scenario.iou_resolution, iou_steps
    )


def run_simulation(scenario: ScenarioConfig, iou_steps=None) -> list[StepReport]:
    return [step.report for step in simulate(scenario, iou_steps)]


# ------------------------------------------------------------- frame files


def write_frames(frames, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for frame in frames:
        path = directory / f"frame_{frame.k:06d}.txt"
        with open(path, "w", encoding="utf-8") as fh:
            for x, y, z in frame.points.tolist():
                fh.write(f"{x!r} {y!r} {z!r}\n")
        paths.append(path)
    return paths


def _read_frame_file(path: Path) -> np.ndarray:
    if path.suffix == ".ply":
        return _read_ply_points(path)
    pts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if len(parts) != 3:
                    raise ValueError(f"expected 3 values, got {len(parts)}")
                xyz = [float(v) for v in parts]
            except ValueError as exc:
                raise FrameFormatError(f"{path.name}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in xyz):
                raise FrameFormatError(f"{path.name}:{lineno}: non-finite coordinate")
            pts.append(xyz)
    return np.array(pts, dtype=float).reshape(-1, 3)


def _read_ply_points(path: Path) -> np.ndarray:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FrameFormatError(f"{path.name}: missing 'ply' magic")
    n_vertex, props, start, in_vertex = None, [], None, False
    for i, line in enumerate(lines[1:], 2):
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "format" and tokens[1] != "ascii":
            raise FrameFormatError(f"{path.name}:{i}: only ASCII PLY is supported")
        if tokens[0] == "element":
            in_vertex = tokens[1] == "vertex"
            if in_vertex:
                n_vertex = int(tokens[2])
        elif tokens[0] == "property" and n_vertex is not None and in_vertex:
            props.append(tokens[-1])
        elif tokens[0] == "end_header":
            start = i
            break
    if n_vertex is None or start is None:
        raise FrameFormatError(f"{path.name}: PLY header lacks a vertex element")
    try:
        cols = [props.index(c) for c in ("x", "y", "z")]
        rows = [lines[start + j].split() for j in range(n_vertex)]
        pts = np.array([[float(r[c]) for c in cols] for r in rows])
    except (ValueError, IndexError) as exc:
        raise FrameFormatError(f"{path.name}: bad vertex data ({exc})") from None
    return pts.reshape(-1, 3)


def read_frames(directory) -> list[Frame]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FrameFormatError(f"{directory} is not a directory")
    entries = []
    for path in directory.iterdir():
        match = FRAME_PATTERN.match(path.name)
        if match:
            entries.append((int(match.group(1)), path))
    if not entries:
        raise FrameFormatError(f"no frame_NNNNNN.txt/.ply files in {directory}")
    entries.sort()
    return [Frame(k, _read_frame_file(path)) for k, path in entries]


def iter_replay(frames_dir, tracker: TrackerConfig, motion: RotationInput | None = None) -> Iterator[StepResult]:
    frames = read_frames(frames_dir)
    if len(frames[0].points) == 0:
        raise FrameFormatError("first frame is empty; cannot initialize the track")
    yield from _track(frames, tracker, motion)


def replay(frames_dir, tracker: TrackerConfig, motion: RotationInput | None = None) -> list[StepReport]:
    """Track recorded frames (no ground truth, so IoU is omitted)."""
    return [step.report for step in iter_replay(frames_dir, tracker, motion)]


def export_mesh(coeffs: ShCoefficients, star_point, path, resolution=(32, 64)) -> TriangleMesh:
    mesh = tessellate(coeffs, star_point, *resolution)
    save_obj(mesh, path)
    return mesh
