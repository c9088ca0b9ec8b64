import json
from dataclasses import replace

import numpy as np
import pytest

from shtrack.harness import (
    Frame,
    FrameFormatError,
    GroundTruth,
    ScenarioConfig,
    export_mesh,
    generate_frame,
    iter_replay,
    load_config,
    read_frames,
    replay,
    run_simulation,
    simulate,
    write_frames,
)
from shtrack.geometry import CuboidShape, ShShape, cuboid_radial, iou, tessellate
from shtrack.mesh import load_mesh
from shtrack.sh import ShCoefficients, fit_coefficients
from shtrack.tracking import TrackerConfig


def _scenario(**kw):
    base = dict(frames=4, iou_resolution=32, tracker=TrackerConfig(degree=3))
    base.update(kw)
    return ScenarioConfig(**base)


# ------------------------------------------------------------- frames


def test_generate_frame_is_deterministic():
    sc = _scenario(seed=9)
    a, b = generate_frame(sc, 3), generate_frame(sc, 3)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, generate_frame(sc, 4).points)
    assert a.points.shape == (60, 3)


def test_zero_noise_sphere_points_on_surface():
    sc = _scenario(truth=GroundTruth(kind="sphere", radius=1.7, center=(1, 2, 3)), noise_variance=0.0)
    r = np.linalg.norm(generate_frame(sc, 1).points - [1, 2, 3], axis=1)
    assert np.abs(r - 1.7).max() < 1e-12


def test_noise_variance_statistics():
    sc = _scenario(measurements_per_frame=100_000, seed=4)
    clean = generate_frame(replace(sc, noise_variance=0.0), 2)
    noisy = generate_frame(sc, 2)
    var = (noisy.points - clean.points).var(axis=0)
    assert np.all(np.abs(var - 1e-2) < 0.05 * 1e-2)


def test_rotating_truth_follows_schedule():
    sc = _scenario(rotation_axis=(0, 0, 1), rotation_rate_deg=90.0)
    t1, t2 = sc.truth_at(1), sc.truth_at(2)
    # after a quarter turn the long axis lies along y
    assert t1.contains(np.array([[1.4, 0, 0]]))[0] and not t2.contains(np.array([[1.4, 0, 0]]))[0]
    assert t2.contains(np.array([[0, 1.4, 0]]))[0]


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(frames=0)
    with pytest.raises(ValueError):
        ScenarioConfig(noise_variance=-1.0)
    with pytest.raises(ValueError):
        GroundTruth(kind="torus")
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({"frames": 3, "colour": "red"})


# ------------------------------------------------------------- simulation


def test_reports_are_complete_and_bounded():
    reports = run_simulation(_scenario())
    assert [r.k for r in reports] == [1, 2, 3, 4]
    for r in reports:
        assert 0.0 <= r.iou <= 1.0
        assert len(r.coefficients) == 16 and len(r.position) == 3
        assert r.position_error >= 0 and r.skipped == 0
        assert "wall_time" not in json.loads(r.to_json())
        assert "wall_time" in json.loads(r.to_json(timing=True))


def test_identical_configs_give_identical_streams():
    a = [r.to_json() for r in run_simulation(_scenario(seed=5))]
    b = [r.to_json() for r in run_simulation(_scenario(seed=5))]
    assert a == b


def test_sphere_radius_recovered_at_degree_zero():
    sc = _scenario(truth=GroundTruth(kind="sphere", radius=2.0), frames=10, tracker=TrackerConfig(degree=0))
    final = run_simulation(sc)[-1]
    radius = final.coefficients[0] / np.sqrt(4 * np.pi)
    assert abs(radius - 2.0) / 2.0 < 0.02


# ------------------------------------------------------------- replay


def test_replay_matches_simulation(tmp_path):
    sc = _scenario(seed=2, frames=5)
    write_frames([generate_frame(sc, k) for k in range(1, 6)], tmp_path)
    sim = run_simulation(sc)
    rep = replay(tmp_path, sc.tracker)
    assert len(rep) == len(sim)
    for a, b in zip(sim, rep):
        assert b.iou is None and b.position_error is None
        assert (a.k, a.coefficients, a.position, a.skipped) == (b.k, b.coefficients, b.position, b.skipped)


def test_replay_empty_directory(tmp_path):
    with pytest.raises(FrameFormatError):
        replay(tmp_path, TrackerConfig(degree=1))


def test_replay_reports_bad_file_by_name(tmp_path):
    (tmp_path / "frame_000001.txt").write_text("0 0 0\n1 0 0\n")
    (tmp_path / "frame_000002.txt").write_text("0 0 0\n1 zero 0\n")
    with pytest.raises(FrameFormatError, match="frame_000002.txt:2"):
        replay(tmp_path, TrackerConfig(degree=1))


def test_frames_sorted_numerically_and_ply_accepted(tmp_path):
    (tmp_path / "frame_000010.txt").write_text("1 1 1\n")
    (tmp_path / "frame_000002.ply").write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0 1\n0 1 0\n"
    )
    (tmp_path / "notes.txt").write_text("ignored")
    frames = read_frames(tmp_path)
    assert [f.k for f in frames] == [2, 10]
    assert frames[0].points.tolist() == [[0, 0, 1], [0, 1, 0]]


def test_two_interleaved_viewpoints_give_a_stable_shape(rng, tmp_path):
    truth = CuboidShape(np.array([1.5, 0.5, 0.5]))
    views = [np.array([1.0, 1.0, 0.3]), np.array([-1.0, -1.0, -0.3])]
    frames = []
    for k in range(1, 41):
        pts = truth.sample_surface(600, rng)
        # keep what the camera on this side can see: outward face normal pointing at it
        local = pts / truth.half_extents
        axis = np.argmax(np.abs(local), axis=1)
        normal = np.zeros_like(pts)
        normal[np.arange(len(pts)), axis] = np.sign(local[np.arange(len(pts)), axis])
        visible = normal @ views[k % 2] > 0
        frames.append(Frame(k, pts[visible][:60] + rng.normal(0, 0.1, (60, 3))))
    write_frames(frames, tmp_path)
    steps = list(iter_replay(tmp_path, TrackerConfig(degree=6)))
    tail = steps[-len(steps) // 5:]
    volumes = np.array([tessellate(s.state.coeffs, s.state.position, 32, 64).volume() for s in tail])
    assert np.abs(volumes - volumes.mean()).max() / volumes.mean() < 0.10


# ------------------------------------------------------------- mesh export


def test_export_sphere_mesh(tmp_path):
    path = tmp_path / "sphere.obj"
    mesh = export_mesh(ShCoefficients.sphere(1.25, 3), [0.5, 0, 0], path, (12, 24))
    r = np.linalg.norm(mesh.vertices - [0.5, 0, 0], axis=1)
    assert np.abs(r - 1.25).max() < 1e-12
    assert load_mesh(path).n_vertices == mesh.n_vertices


def test_converged_cuboid_estimate_volume(tmp_path):
    steps = list(simulate(_scenario(frames=20, tracker=TrackerConfig(degree=8))))
    state = steps[-1].state
    mesh = export_mesh(state.coeffs, state.position, tmp_path / "est.obj", (48, 96))
    assert abs(mesh.volume() - 3.0) / 3.0 < 0.15


def test_projection_fit_beats_filter_estimate():
    sc = _scenario(frames=20, tracker=TrackerConfig(degree=8), iou_resolution=128)
    converged = float(np.median([r.iou for r in run_simulation(sc)][-5:]))
    fit = fit_coefficients(lambda t, p: cuboid_radial((1.5, 0.5, 0.5), t, p), 8)
    assert iou(ShShape(fit), sc.truth_at(20), resolution=128) >= converged


# ------------------------------------------------------------- config files


def test_load_toml_and_json(tmp_path):
    toml = tmp_path / "s.toml"
    toml.write_text(
        'frames = 7\nseed = 3\nrotation_axis = [0, 0, 1]\nrotation_rate_deg = 10.0\n'
        '[truth]\nkind = "cuboid"\nhalf_extents = [1.5, 0.5, 0.5]\n'
        '[tracker]\ndegree = 4\nmeasurement_std = 0.1\n'
    )
    sc = load_config(toml)
    assert sc.frames == 7 and sc.tracker.degree == 4 and sc.filter_motion is not None
    js = tmp_path / "s.json"
    js.write_text(json.dumps(sc.to_dict()))
    assert load_config(js) == replace(sc, base_dir=str(tmp_path))


def test_mesh_path_relative_to_config(tmp_path):
    (tmp_path / "tet.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n")
    cfg = tmp_path / "m.json"
    cfg.write_text(json.dumps({"truth": {"kind": "mesh", "mesh": "tet.obj", "mesh_scale": 2.0}}))
    truth = load_config(cfg).truth_at(1)
    np.testing.assert_allclose(truth.mesh.extents(), [2, 2, 2])


def test_overrides_ignore_none():
    sc = _scenario(seed=1)
    assert sc.with_overrides(seed=None, frames=9).frames == 9
    assert sc.with_overrides(seed=None).seed == 1
    assert sc.with_overrides(tracker_degree=5).tracker.degree == 5


@pytest.mark.slow
def test_motion_model_beats_random_walk_in_most_seeds():
    wins = 0
    for seed in range(10):
        sc = ScenarioConfig(frames=15, seed=seed, iou_resolution=64, rotation_axis=(0, 0, 1), rotation_rate_deg=10.0)
        with_motion = run_simulation(sc)[-1].iou
        without = run_simulation(replace(sc, motion_model=False))[-1].iou
        wins += with_motion > without
    assert wins >= 9


@pytest.mark.parametrize("name", ["cuboid", "rotating", "teapot"])
def test_shipped_configs_load(name):
    from pathlib import Path

    sc = load_config(Path(__file__).resolve().parents[1] / "configs" / f"{name}.toml")
    assert sc.frames > 0 and sc.truth_at(1).contains(np.zeros((1, 3)))[0]
