import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import label_components
from rgbd_perception.core_types import ColorImage, DepthMap
from rgbd_perception.geometry import CameraModel, back_project, estimate_normals
from rgbd_perception.region_proposals import (
    BACKGROUND,
    DEFAULT_MIN_AREA_FRAC,
    ProposalConfig,
    RegionLabeling,
    connected_components,
    extract_boxes,
    saturation,
)


def flat_scene(H, W, spacing=0.001, color=(120, 120, 120)):
    """Points on a plane with ``spacing`` meters between neighbors, normals toward the camera."""
    v, u = np.mgrid[0:H, 0:W]
    points = np.stack([u * spacing, v * spacing, np.ones((H, W))], axis=-1)
    normals = np.broadcast_to([0.0, 0.0, -1.0], (H, W, 3)).copy()
    rgb = ColorImage(np.broadcast_to(np.array(color, np.uint8), (H, W, 3)).copy())
    return rgb, points, normals


def test_saturation_values():
    rgb = np.array([[[0, 0, 0], [255, 0, 0], [200, 100, 100], [50, 50, 50]]], np.uint8)
    np.testing.assert_allclose(saturation(rgb)[0], [0.0, 255.0, 127.5, 0.0])


def test_uniform_plane_is_one_region():
    rgb, pts, nrm = flat_scene(30, 40)
    lab = connected_components(rgb, pts, nrm)
    assert lab.region_count == 1
    assert (lab.labels == 0).all()


def test_depth_gap_splits_regions():
    rgb, pts, nrm = flat_scene(20, 20)
    pts[:, 10:, 2] += 0.02
    lab = connected_components(rgb, pts, nrm)
    assert lab.region_count == 2
    assert (lab.labels[:, :10] == 0).all() and (lab.labels[:, 10:] == 1).all()


def test_normal_angle_splits_regions():
    rgb, pts, nrm = flat_scene(10, 10)
    a = np.radians(60)
    nrm[:, 5:] = [np.sin(a), 0, -np.cos(a)]
    assert connected_components(rgb, pts, nrm).region_count == 2
    a = np.radians(40)
    nrm[:, 5:] = [np.sin(a), 0, -np.cos(a)]
    assert connected_components(rgb, pts, nrm).region_count == 1


def test_checkerboard_color_gives_one_region_per_tile():
    H, W, t = 24, 32, 8
    rgb, pts, nrm = flat_scene(H, W)
    v, u = np.mgrid[0:H, 0:W]
    board = ((v // t + u // t) % 2).astype(np.uint8)
    img = ColorImage(np.repeat((100 + 40 * board)[..., None], 3, axis=-1).astype(np.uint8))
    lab = connected_components(img, pts, nrm)
    assert lab.region_count == (H // t) * (W // t)
    for ty in range(H // t):
        for tx in range(W // t):
            tile = lab.labels[ty * t:(ty + 1) * t, tx * t:(tx + 1) * t]
            assert (tile == tile[0, 0]).all()


def test_saturation_predicate_alone_splits():
    # per-channel difference 10 passes, saturation jumps from 0 to 255*10/110
    rgb, pts, nrm = flat_scene(6, 6, color=(100, 100, 100))
    vals = rgb.values.copy()
    vals[:, 3:] = (110, 100, 100)
    lab = connected_components(ColorImage(vals), pts, nrm)
    assert lab.region_count == 2


def test_invalid_pixels_are_background():
    rgb, pts, nrm = flat_scene(8, 8)
    valid = np.ones((8, 8), bool)
    valid[:, 4] = False
    lab = connected_components(rgb, pts, nrm, valid=valid)
    assert (lab.labels[:, 4] == BACKGROUND).all()
    assert lab.region_count == 2
    nrm[0, 0] = np.nan
    lab = connected_components(rgb, pts, nrm)
    assert lab.labels[0, 0] == BACKGROUND


def test_canonical_numbering():
    rgb, pts, nrm = flat_scene(6, 6)
    pts[3:, :, 2] += 0.1
    pts[:3, 3:, 2] += 0.2
    lab = connected_components(rgb, pts, nrm)
    np.testing.assert_array_equal(lab.labels[0], [0, 0, 0, 1, 1, 1])
    assert (lab.labels[3:] == 2).all()


def test_dimension_mismatch():
    rgb, pts, nrm = flat_scene(5, 5)
    with pytest.raises(ValueError):
        connected_components(rgb, pts[:4], nrm)


def random_case(rng, H, W):
    """Blocky random scene so that both joins and splits are common."""
    block = rng.integers(0, 3, (H // 4 + 1, W // 4 + 1))
    k = np.kron(block, np.ones((4, 4), int))[:H, :W]
    z = 1.0 + 0.004 * k + rng.uniform(0, 0.002, (H, W))
    v, u = np.mgrid[0:H, 0:W]
    pts = np.stack([u * 0.001, v * 0.001, z], axis=-1)
    ang = np.radians(rng.choice([0.0, 30.0, 70.0], (H, W)))
    nrm = np.stack([np.sin(ang), np.zeros_like(ang), -np.cos(ang)], axis=-1)
    base = rng.integers(0, 246, 3)
    rgb = np.clip(base + rng.integers(0, 12, (H, W, 3)), 0, 255).astype(np.uint8)
    valid = rng.random((H, W)) > 0.05
    return ColorImage(rgb), pts, nrm, valid


def test_matches_union_find_oracle():
    rng = np.random.default_rng(0)
    cfg = ProposalConfig()
    for _ in range(10):
        rgb, pts, nrm, valid = random_case(rng, 24, 20)
        lab = connected_components(rgb, pts, nrm, cfg, valid)
        expect, n = label_components(rgb.values.tolist(), pts.tolist(), nrm.tolist(), valid.tolist(), cfg)
        assert lab.region_count == n
        np.testing.assert_array_equal(lab.labels, np.array(expect))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 12))
def test_oracle_property(seed, H, W):
    rgb, pts, nrm, valid = random_case(np.random.default_rng(seed), H, W)
    cfg = ProposalConfig()
    lab = connected_components(rgb, pts, nrm, cfg, valid)
    expect, n = label_components(rgb.values.tolist(), pts.tolist(), nrm.tolist(), valid.tolist(), cfg)
    assert lab.region_count == n
    np.testing.assert_array_equal(lab.labels, np.array(expect))


# ---------------------------------------------------------------------------
# boxes


def labeling_with_block(H, W, y, x, h, w):
    labels = np.full((H, W), BACKGROUND, np.int64)
    labels[y:y + h, x:x + w] = 0
    return RegionLabeling(labels, 1)


def test_large_region_kept_at_full_hd():
    lab = labeling_with_block(1080, 1920, 100, 300, 200, 200)
    boxes = extract_boxes(lab)
    assert len(boxes) == 1
    assert boxes[0].box == (300.0, 100.0, 200.0, 200.0)
    assert boxes[0].class_id == -1 and boxes[0].confidence == 1.0


def test_area_threshold_boundary_at_full_hd():
    assert extract_boxes(labeling_with_block(1080, 1920, 0, 0, 99, 101)) == []  # 9999 px
    assert len(extract_boxes(labeling_with_block(1080, 1920, 0, 0, 100, 100))) == 1


def test_threshold_scales_with_image_area():
    # half-resolution frame: threshold is 2500 px
    assert DEFAULT_MIN_AREA_FRAC * 960 * 540 == pytest.approx(2500)
    assert len(extract_boxes(labeling_with_block(540, 960, 10, 10, 50, 50))) == 1
    assert extract_boxes(labeling_with_block(540, 960, 10, 10, 49, 50)) == []


def test_boxes_are_tight_and_ordered():
    labels = np.full((50, 60), BACKGROUND, np.int64)
    labels[5:10, 2:8] = 0     # 30 px
    labels[20:40, 10:30] = 1  # 400 px
    labels[20, 40] = 2        # 1 px
    labels[30:35, 40:46] = 3  # 30 px, tie with region 0
    boxes = extract_boxes(RegionLabeling(labels, 4), ProposalConfig(min_area_frac=2 / 3000))
    assert [b.box for b in boxes] == [(10, 20, 20, 20), (2, 5, 6, 5), (40, 30, 6, 5)]


def test_end_to_end_box_from_depth():
    H, W = 120, 160
    cam = CameraModel(300.0, 300.0, (W - 1) / 2, (H - 1) / 2, W, H)
    z = np.full((H, W), 1.0)
    z[40:80, 50:110] = 0.8
    depth = DepthMap(z, np.ones((H, W), bool))
    pts, valid = back_project(depth, cam)
    nrm, ok = estimate_normals(depth, cam, 3)
    rgb = ColorImage(np.full((H, W, 3), 90, np.uint8))
    lab = connected_components(rgb, pts, nrm, valid=valid & ok)
    boxes = extract_boxes(lab, ProposalConfig(min_area_frac=0.05))
    # background (minus the unsupported border) and the raised block, shrunk
    # by one pixel where normals straddle its edge
    assert [b.box for b in boxes] == [(1.0, 1.0, 158.0, 118.0), (51.0, 41.0, 58.0, 38.0)]
