import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gslayout.camera import (
    CameraPose,
    RoamConfig,
    adjust_camera,
    config_box,
    distance_factor,
    frustum_contains,
    roam_trajectory,
    trajectory_to_json,
)
from gslayout.layout_init import SceneConfig


def _cfg(pos=(0, 0, 0), size=(0.35, 0.35, 0.35)):
    return SceneConfig(0, "obj_0", tuple(pos), tuple(size))


@pytest.mark.parametrize("size,std,alpha", [((1.0, 0.2, 0.3), 1.0, 0.0), ((2.0, 1, 1), 1.0, 1.0),
                                            ((0.5, 0.1, 0.1), 1.0, -0.5)])
def test_distance_factor(size, std, alpha):
    assert distance_factor(size, std) == alpha


def test_distance_factor_rejects_nonpositive():
    with pytest.raises(ValueError):
        distance_factor((0, 1, 1), 1.0)


def test_adjust_identity():
    C = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(adjust_camera(C, np.zeros(3), 0.0), C)


def test_adjust_hand_cases():
    assert np.allclose(adjust_camera([0, 0, 5], [0, 0, 0], 2.0), [0, 0, 7], atol=1e-12, rtol=0)
    d = np.array([-3.0, 1.0, 0.0]) / np.sqrt(10.0)
    want = np.array([3.0, 0, 0]) + np.array([0, 1.0, 0]) - d
    assert np.allclose(adjust_camera([3, 0, 0], [0, 1, 0], 1.0), want, atol=1e-12, rtol=0)


def test_adjust_zero_view():
    with pytest.raises(ValueError):
        adjust_camera([1, 1, 1], [1, 1, 1], 0.5)


def test_camera_pose_validation():
    with pytest.raises(ValueError):
        CameraPose([0, 0, 1], [0, 0, 1])
    with pytest.raises(ValueError):
        CameraPose([0, 0, 5], [0, 0, 0])  # view along -z, up +z
    f, r, u = CameraPose([5, 0, 0], [0, 0, 0]).basis()
    assert np.allclose([f @ r, f @ u, r @ u], 0, atol=1e-12)


@pytest.mark.parametrize("bad", [dict(radius=(4.0, 1.5)), dict(radius=(0.0, 1.0)), dict(elevation=(-90.0, 10.0)),
                                 dict(standard_size=0.0), dict(views_per_object=0)])
def test_roam_config_validation(bad):
    with pytest.raises(ValueError):
        RoamConfig(**bad)


def test_standard_size_on_shell():
    roam = RoamConfig()
    poses = roam_trajectory(_cfg(size=(roam.standard_size,) * 3), roam)
    r = np.array([np.linalg.norm(p.position) for p in poses])
    assert len(poses) == roam.views_per_object
    assert np.all((r >= 1.5 - 1e-12) & (r <= 4.0 + 1e-12))
    el = np.degrees(np.arcsin([p.position[2] / np.linalg.norm(p.position) for p in poses]))
    assert np.all((el >= -10 - 1e-9) & (el <= 60 + 1e-9))


def test_tracking():
    for p in roam_trajectory(_cfg(pos=(5, 0, 0))):
        assert np.array_equal(p.look_at, [5.0, 0.0, 0.0])


def test_large_object_pushes_back_exactly():
    # DERIVED: against the alpha = 0 trajectory from the same seed
    roam = RoamConfig(standard_size=1.0, views_per_object=16)
    base = roam_trajectory(_cfg(size=(1, 1, 1)), roam)
    big = roam_trajectory(_cfg(size=(2, 1, 1)), roam)
    for a, b in zip(base, big):
        ra, rb = np.linalg.norm(a.position), np.linalg.norm(b.position)
        assert np.isclose(rb - ra, 1.0, atol=1e-12)
        assert np.allclose(a.position / ra, b.position / rb, atol=1e-12)


def test_depth_change_invariant():
    rng = np.random.default_rng(0)
    for _ in range(100):
        C, alpha = rng.normal(size=3) * 3, rng.uniform(-0.5, 3)
        C2 = adjust_camera(C, np.zeros(3), alpha)
        assert np.isclose(np.linalg.norm(C2), np.linalg.norm(C) + alpha, atol=1e-12)


def test_frustum_check():
    cam = CameraPose([5, 0, 0], [0, 0, 0], fov=40)
    assert frustum_contains(cam, np.zeros((1, 3)))
    assert not frustum_contains(cam, np.array([[10.0, 0, 0]]))  # behind
    assert not frustum_contains(cam, np.array([[0.0, 5.0, 0]]))


@settings(max_examples=60, deadline=None)
@given(pos=st.tuples(*[st.floats(-5, 5)] * 3),
       size=st.tuples(*[st.floats(0.05, 3.0)] * 3),
       fov=st.floats(40, 90), seed=st.integers(0, 1000))
def test_every_pose_frames_the_object(pos, size, fov, seed):
    roam = RoamConfig(fov=fov, seed=seed)
    c = _cfg(pos, size)
    verts = config_box(c).vertices()
    for cam in roam_trajectory(c, roam):
        assert frustum_contains(cam, verts)


def test_json_export():
    poses = roam_trajectory(_cfg(), RoamConfig(views_per_object=3))
    doc = json.loads(trajectory_to_json(poses))
    assert len(doc) == 3 and set(doc[0]) == {"position", "look_at", "up", "fov"}
