import numpy as np
import pytest

from rgbd_perception.core_types import DepthMap
from rgbd_perception.geometry import CameraModel, back_project, estimate_normals
from rgbd_perception.hha_encode import (
    HhaConfig,
    disparity_channel,
    encode_hha,
    encode_raw3,
    gravity_angle,
    height_above_ground,
)


def level_camera(W=80, H=60, f=60.0):
    return CameraModel(f, f, (W - 1) / 2, (H - 1) / 2, W, H)


def floor_depth(cam, camera_height=1.0):
    """Depth of a horizontal floor ``camera_height`` below a level camera (y down)."""
    ry = cam.rays()[..., 1]
    z = np.where(ry > 1e-3, camera_height / np.where(ry > 1e-3, ry, 1.0), 0.0)
    z = np.where(z < 6.0, z, 0.0)
    return DepthMap(z, z > 0)


def test_default_gravity_points_down_the_image():
    assert HhaConfig().gravity == (0.0, 1.0, 0.0)


def test_floor_has_zero_height_and_zero_angle():
    cam = level_camera()
    d = floor_depth(cam)
    n, ok = estimate_normals(d, cam, 5)
    img = encode_hha(d, cam, n, ok).values
    assert np.abs(img[..., 1][d.valid].astype(int)).max() <= 1
    assert img[..., 2][ok & d.valid].max() <= 1


def test_upward_normal_angle_zero_with_explicit_gravity():
    cfg = HhaConfig(gravity=(0.0, -1.0, 0.0))
    n = np.array([[[0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]]])
    ang = gravity_angle(n, np.ones((1, 3), bool), cfg)
    np.testing.assert_allclose(ang[0], [0.0, 180.0, 90.0], atol=1e-9)


def test_wall_normal_is_ninety_degrees():
    cam = level_camera()
    d = DepthMap(np.full(cam.shape, 2.0), np.ones(cam.shape, bool))
    n, ok = estimate_normals(d, cam, 5)
    img = encode_hha(d, cam, n, ok).values
    assert np.all(np.abs(img[..., 2][ok].astype(int) - 128) <= 1)


def test_disparity_endpoints_and_monotonic():
    cfg = HhaConfig()
    z = np.array([[0.2, 3.0, 0.5, 1.0, 2.0, 0.0]])
    d = DepthMap(z, z > 0)
    c = disparity_channel(d, cfg)[0]
    assert c[0] == pytest.approx(255.0)
    assert c[1] == pytest.approx(0.0, abs=1e-9)
    assert c[0] > c[2] > c[3] > c[4] > c[1]
    assert c[5] == 0.0


def test_out_of_range_depth_saturates():
    cam = CameraModel(10.0, 10.0, 0.5, 0.0, 2, 1)
    z = np.array([[0.1, 10.0]])
    d = DepthMap(z, z > 0)
    img = encode_hha(d, cam, np.zeros((1, 2, 3)), np.zeros((1, 2), bool)).values
    assert img[0, 0, 0] == 255 and img[0, 1, 0] == 0


def test_height_invariant_to_translation_along_gravity():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (20, 30, 3))
    valid = rng.random((20, 30)) > 0.1
    cfg = HhaConfig()
    h0 = height_above_ground(pts, valid, cfg)
    h1 = height_above_ground(pts + 0.7 * np.array(cfg.gravity), valid, cfg)
    np.testing.assert_allclose(h0, h1, atol=1e-12)
    assert (h0[~valid] == 0).all()


def test_height_channel_on_box_resting_on_floor():
    cam = level_camera(120, 90, 80.0)
    d = floor_depth(cam, 1.2).values.copy()
    # a vertical face 40 cm tall standing on the floor 2 m ahead
    pts, _ = back_project(DepthMap(np.full(cam.shape, 2.0), np.ones(cam.shape, bool)), cam)
    face = (pts[..., 1] > 0.8) & (pts[..., 1] < 1.2) & (np.abs(pts[..., 0]) < 0.3)
    d[face] = 2.0
    depth = DepthMap(d, d > 0)
    n, ok = estimate_normals(depth, cam, 5)
    img = encode_hha(depth, cam, n, ok).values
    top = np.nonzero(face.any(axis=1))[0][0]
    col = int(np.nonzero(face[top])[0].mean())
    expect = (1.2 - pts[top, col, 1]) / 2.5 * 255
    assert abs(int(img[top, col, 1]) - expect) <= 2


def test_invalid_pixels_zero_in_all_channels():
    cam = level_camera()
    d = floor_depth(cam)
    n, ok = estimate_normals(d, cam, 5)
    img = encode_hha(d, cam, n, ok).values
    assert (img[~d.valid] == 0).all()


def test_raw3_replicates_scaled_depth():
    z = np.array([[0.2, 3.0, 1.6, 0.0]])
    img = encode_raw3(DepthMap(z, z > 0)).values
    assert (img[..., 0] == img[..., 1]).all() and (img[..., 1] == img[..., 2]).all()
    np.testing.assert_array_equal(img[0, :, 0], [0, 255, 128, 0])


def test_errors():
    cam = level_camera()
    empty = DepthMap(np.zeros(cam.shape), np.zeros(cam.shape, bool))
    with pytest.raises(ValueError):
        encode_hha(empty, cam, np.zeros(cam.shape + (3,)), np.zeros(cam.shape, bool))
    with pytest.raises(ValueError):
        encode_raw3(empty)
    with pytest.raises(ValueError):
        HhaConfig(gravity=(0.0, 2.0, 0.0))
    full = DepthMap(np.ones(cam.shape), np.ones(cam.shape, bool))
    with pytest.raises(ValueError):
        encode_hha(full, cam, np.zeros((3, 3, 3)), np.zeros((3, 3), bool))
