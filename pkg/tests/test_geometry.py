"""Camera model and grid indexing tests.

The projection tests lean on tests/oracles.py, which rebuilds the same
transforms from 4x4 homogeneous matrices and explicit matrix inverses.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from groundmem.errors import BehindCameraError, NonPositiveDepthError
from groundmem.geometry import (
    CameraIntrinsics,
    CellIndex,
    Extrinsics,
    GridSpec,
    Pose,
    cells_from_world,
    downsample_to_feature_grid,
    extrinsics_from_pose,
    intrinsics_for_stride,
    pixel_to_world,
    pixels_to_world,
    world_to_cell,
    world_to_pixel,
    world_to_pixels,
)

import oracles

INTR = CameraIntrinsics(fx=100.0, fy=100.0, cx=80.0, cy=60.0, width=160, height=120)
IDENTITY = Extrinsics(np.eye(3), np.zeros(3))

poses = st.tuples(
    st.floats(-10, 10),
    st.floats(-10, 10),
    st.floats(-1, 1),
    st.floats(-4 * math.pi, 4 * math.pi),
).map(lambda t: Pose(*t))
pitches = st.floats(-1.3, 1.3)
depths = st.floats(0.05, 80.0)
pixel_is = st.floats(0, 119.99)
pixel_js = st.floats(0, 159.99)


class TestPose:
    def test_theta_wraps_into_half_open_interval(self):
        assert Pose(0, 0, 0, 3 * math.pi).theta == pytest.approx(-math.pi)
        assert Pose(0, 0, 0, -math.pi).theta == pytest.approx(-math.pi)
        assert Pose(0, 0, 0, math.pi).theta == pytest.approx(-math.pi)
        assert Pose(0, 0, 0, 0.5).theta == 0.5

    @given(st.floats(-100, 100))
    def test_wrapped_theta_in_range(self, theta):
        assert -math.pi <= Pose(0, 0, 0, theta).theta < math.pi

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            Pose(math.nan, 0, 0, 0)
        with pytest.raises(ValueError):
            Pose(0, 0, 0, math.inf)


class TestCameraIntrinsics:
    def test_principal_point_must_be_interior(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=100, fy=100, cx=0, cy=60, width=160, height=120)
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=100, fy=100, cx=80, cy=120, width=160, height=120)

    def test_focal_lengths_positive(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=0, fy=100, cx=80, cy=60, width=160, height=120)
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=100, fy=-1, cx=80, cy=60, width=160, height=120)


class TestExtrinsics:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            Extrinsics(np.eye(3) * 2.0, np.zeros(3))

    def test_rejects_reflection(self):
        mirror = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            Extrinsics(mirror, np.zeros(3))

    @given(poses, pitches)
    def test_inverse_composes_to_identity(self, pose, pitch):
        ext = extrinsics_from_pose(pose, camera_height=1.25, camera_pitch=pitch)
        inv = ext.inverse()
        composed = ext.rotation @ inv.rotation
        assert np.max(np.abs(composed - np.eye(3))) < 1e-9
        round_trip = ext.world_to_camera(inv.world_to_camera(np.array([1.0, 2.0, 3.0])))
        assert np.max(np.abs(round_trip - np.array([1.0, 2.0, 3.0]))) < 1e-9

    @given(poses, pitches)
    def test_rotation_stays_orthonormal_under_composition(self, pose, pitch):
        ext = extrinsics_from_pose(pose, camera_pitch=pitch)
        twice = ext.rotation @ ext.rotation
        assert np.max(np.abs(twice.T @ twice - np.eye(3))) < 1e-9

    def test_as_matrix_agrees_with_apply(self):
        ext = extrinsics_from_pose(Pose(1, 2, 0, 0.7), camera_pitch=0.2)
        p = np.array([3.0, -1.0, 0.5])
        via_matrix = (ext.as_matrix() @ np.append(p, 1.0))[:3]
        assert np.allclose(via_matrix, ext.world_to_camera(p), atol=1e-12)


class TestExtrinsicsFromPose:
    def test_zero_pose_gives_zero_translation_and_forward_x(self):
        ext = extrinsics_from_pose(Pose(0, 0, 0, 0), camera_height=0.0)
        assert np.allclose(ext.translation, 0.0)
        # forward axis of the camera, expressed in world coordinates
        assert np.allclose(ext.rotation[2], [1.0, 0.0, 0.0])
        assert abs(np.linalg.det(ext.rotation) - 1.0) < 1e-12

    def test_camera_center_sits_above_pose(self):
        ext = extrinsics_from_pose(Pose(1, 2, 0, math.pi / 2), camera_height=1.5)
        assert np.allclose(ext.world_to_camera(np.array([1.0, 2.0, 1.5])), 0.0, atol=1e-12)
        assert np.allclose(ext.camera_center, [1.0, 2.0, 1.5])

    def test_heading_pi_negates_forward_axis(self):
        fwd0 = extrinsics_from_pose(Pose(0, 0, 0, 0)).rotation[2]
        fwd_pi = extrinsics_from_pose(Pose(0, 0, 0, math.pi)).rotation[2]
        assert np.allclose(fwd_pi, -fwd0, atol=1e-12)

    def test_positive_pitch_looks_down(self):
        ext = extrinsics_from_pose(Pose(0, 0, 0, 0), camera_pitch=0.5)
        assert ext.rotation[2, 2] < 0

    def test_straight_down_pitch(self):
        ext = extrinsics_from_pose(Pose(0, 0, 0, 0), camera_height=1.25, camera_pitch=math.pi / 2)
        p_cam = ext.world_to_camera(np.array([0.0, 0.0, 0.0]))
        assert np.allclose(p_cam, [0.0, 0.0, 1.25], atol=1e-12)

    @given(poses, pitches)
    def test_matches_homogeneous_matrix_oracle(self, pose, pitch):
        ext = extrinsics_from_pose(pose, camera_height=1.25, camera_pitch=pitch)
        ref = oracles.lookat_world_to_camera((pose.x, pose.y, pose.z, pose.theta), 1.25, pitch)
        assert np.max(np.abs(ext.as_matrix() - ref)) < 1e-9


class TestPixelToWorld:
    def test_principal_ray(self):
        p = pixel_to_world(INTR.cy, INTR.cx, 2.0, INTR, IDENTITY)
        assert np.allclose(p, [0.0, 0.0, 2.0], atol=1e-12)

    def test_corner_pixel_hand_computed(self):
        intr = CameraIntrinsics(fx=100, fy=100, cx=50, cy=50, width=100, height=100)
        p = pixel_to_world(0.0, 0.0, 1.0, intr, IDENTITY)
        assert np.allclose(p, [-0.5, -0.5, 1.0], atol=1e-12)

    def test_pose_translation_carries_through(self):
        ext = extrinsics_from_pose(Pose(5, 5, 0, 0), camera_height=1.25)
        base = pixel_to_world(30.0, 40.0, 3.0, INTR, extrinsics_from_pose(Pose(0, 0, 0, 0)))
        moved = pixel_to_world(30.0, 40.0, 3.0, INTR, ext)
        assert np.allclose(moved, base + np.array([5.0, 5.0, 0.0]), atol=1e-9)

    def test_nonpositive_depth_raises(self):
        with pytest.raises(NonPositiveDepthError):
            pixel_to_world(10, 10, 0.0, INTR, IDENTITY)
        with pytest.raises(NonPositiveDepthError):
            pixel_to_world(10, 10, -1.0, INTR, IDENTITY)

    def test_depth_is_along_optical_axis_not_ray_length(self):
        ext = extrinsics_from_pose(Pose(0.3, -0.2, 0, 1.1), camera_pitch=0.3)
        p = pixel_to_world(5.0, 150.0, 4.0, INTR, ext)
        assert ext.world_to_camera(p)[2] == pytest.approx(4.0, abs=1e-12)
        ray_len = np.linalg.norm(p - ext.camera_center)
        assert ray_len > 4.0

    @given(poses, pitches, pixel_is, pixel_js, depths)
    def test_matches_matrix_oracle(self, pose, pitch, i, j, d):
        ext = extrinsics_from_pose(pose, camera_pitch=pitch)
        ref_mat = oracles.lookat_world_to_camera((pose.x, pose.y, pose.z, pose.theta), 1.25, pitch)
        ours = pixel_to_world(i, j, d, INTR, ext)
        ref = oracles.backproject_pixel(i, j, d, INTR, ref_mat)
        assert np.max(np.abs(ours - ref)) < 1e-8


class TestWorldToPixel:
    def test_principal_axis_point(self):
        i, j, d = world_to_pixel(np.array([0.0, 0.0, 2.0]), INTR, IDENTITY)
        assert (i, j, d) == pytest.approx((INTR.cy, INTR.cx, 2.0))

    def test_camera_center_is_behind(self):
        ext = extrinsics_from_pose(Pose(1, 1, 0, 0.3))
        with pytest.raises(BehindCameraError):
            world_to_pixel(ext.camera_center, INTR, ext)

    def test_point_behind_camera(self):
        with pytest.raises(BehindCameraError):
            world_to_pixel(np.array([0.0, 0.0, -1.0]), INTR, IDENTITY)

    @given(poses, pitches, pixel_is, pixel_js, depths)
    def test_round_trip_recovers_pixel(self, pose, pitch, i, j, d):
        ext = extrinsics_from_pose(pose, camera_pitch=pitch)
        point = pixel_to_world(i, j, d, INTR, ext)
        ri, rj, rd = world_to_pixel(point, INTR, ext)
        assert abs(ri - i) < 1e-6
        assert abs(rj - j) < 1e-6
        assert abs(rd - d) < 1e-6

    @given(poses, pitches)
    def test_matches_matrix_oracle(self, pose, pitch):
        ext = extrinsics_from_pose(pose, camera_pitch=pitch)
        ref_mat = oracles.lookat_world_to_camera((pose.x, pose.y, pose.z, pose.theta), 1.25, pitch)
        point = ext.camera_center + 3.0 * ext.rotation[2] + 0.4 * ext.rotation[0]
        ours = world_to_pixel(point, INTR, ext)
        ref = oracles.project_point(point, INTR, ref_mat)
        assert ref is not None
        assert np.max(np.abs(np.array(ours) - np.array(ref))) < 1e-8


class TestVectorizedProjection:
    def test_matches_scalar_on_grid(self):
        ext = extrinsics_from_pose(Pose(0.5, -1.0, 0, 0.8), camera_pitch=0.25)
        rng = np.random.default_rng(3)
        rows = rng.uniform(0, 119, size=50)
        cols = rng.uniform(0, 159, size=50)
        depth = rng.uniform(0.2, 20.0, size=50)
        pts, valid = pixels_to_world(rows, cols, depth, INTR, ext)
        assert valid.all()
        for k in range(50):
            scalar = pixel_to_world(rows[k], cols[k], depth[k], INTR, ext)
            assert np.allclose(pts[k], scalar, atol=1e-12)

    def test_invalid_depth_masked_out(self):
        pts, valid = pixels_to_world(
            np.array([1.0, 2.0, 3.0]),
            np.array([1.0, 2.0, 3.0]),
            np.array([1.0, 0.0, np.inf]),
            INTR,
            IDENTITY,
        )
        assert valid.tolist() == [True, False, False]
        assert np.allclose(pts[1:], 0.0)

    def test_world_to_pixels_flags_behind(self):
        pts = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, -2.0]])
        rows, cols, depth, in_front = world_to_pixels(pts, INTR, IDENTITY)
        assert in_front.tolist() == [True, False]
        assert rows[0] == pytest.approx(INTR.cy)
        assert cols[0] == pytest.approx(INTR.cx)
        assert depth[0] == pytest.approx(2.0)


class TestGridIndexing:
    SPEC = GridSpec(origin_x=0.0, origin_y=0.0, cell_size=0.2, breadth=10, length=10)

    def test_origin_cell(self):
        assert world_to_cell(0.0, 0.0, self.SPEC) == (0, 0)

    def test_floor_arithmetic(self):
        assert world_to_cell(0.39, 0.40, self.SPEC) == (1, 2)

    def test_out_of_bounds_is_none(self):
        assert world_to_cell(-0.01, 0.0, self.SPEC) is None
        assert world_to_cell(0.0, 2.0, self.SPEC) is None  # == breadth edge

    def test_cell_index_validates(self):
        with pytest.raises(ValueError):
            CellIndex(-1, 0)
        c = CellIndex(3, 4)
        assert (c.u, c.v) == (3, 4)

    @given(
        st.floats(0.01, 1.99),
        st.floats(0.01, 1.99),
        st.floats(-5, 5),
        st.floats(-5, 5),
    )
    def test_translation_equivariance(self, x, y, dx, dy):
        # points near a cell boundary are legitimately unstable under
        # float shifts; keep strictly inside a cell
        def interior(val, shift):
            frac = ((val + shift) - math.floor((val + shift) / 0.2) * 0.2) / 0.2
            return 0.05 < frac < 0.95

        if not (interior(x, 0) and interior(y, 0) and interior(x, dx) and interior(y, dy)):
            return
        base = world_to_cell(x, y, self.SPEC)
        shifted_spec = GridSpec(
            origin_x=dx, origin_y=dy, cell_size=0.2, breadth=10, length=10
        )
        shifted = world_to_cell(x + dx, y + dy, shifted_spec)
        assert base == shifted

    @given(
        st.lists(st.floats(-1, 3), min_size=1, max_size=20),
        st.lists(st.floats(-1, 3), min_size=1, max_size=20),
    )
    def test_vectorized_matches_scalar(self, xs, ys):
        n = min(len(xs), len(ys))
        xs, ys = np.array(xs[:n]), np.array(ys[:n])
        u, v, ok = cells_from_world(xs, ys, self.SPEC)
        for k in range(n):
            scalar = world_to_cell(xs[k], ys[k], self.SPEC)
            if scalar is None:
                assert not ok[k]
            else:
                assert ok[k]
                assert (u[k], v[k]) == scalar

    def test_from_extent_pads_and_covers(self):
        spec = GridSpec.from_extent(-1.0, -2.0, 3.0, 2.0, cell_size=0.2)
        for x, y in [(-1.0, -2.0), (3.0 - 1e-9, 2.0 - 1e-9), (0.0, 0.0)]:
            assert world_to_cell(x, y, spec) is not None
        # one padding cell ring
        assert spec.breadth == math.ceil(4.0 / 0.2) + 2
        assert spec.length == math.ceil(4.0 / 0.2) + 2
        assert world_to_cell(-1.0 - 0.1, -2.0, spec) is not None
        assert world_to_cell(-1.0 - 0.3, -2.0, spec) is None

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            GridSpec(0, 0, 0.0, 10, 10)
        with pytest.raises(ValueError):
            GridSpec(0, 0, 0.2, 0, 10)
        with pytest.raises(ValueError):
            GridSpec.from_extent(1, 0, 1, 5)


class TestFeatureGridCorrespondence:
    def test_stride_centers_share_rays(self):
        feat = intrinsics_for_stride(INTR, 4)
        assert (feat.width, feat.height) == (40, 30)
        ext = extrinsics_from_pose(Pose(0.2, 0.1, 0, 0.4), camera_pitch=0.1)
        for r, c in [(0, 0), (10, 17), (29, 39)]:
            p_feat = pixel_to_world(r, c, 2.5, feat, ext)
            p_full = pixel_to_world(r * 4 + 2, c * 4 + 2, 2.5, INTR, ext)
            assert np.allclose(p_feat, p_full, atol=1e-12)

    def test_stride_must_divide_resolution(self):
        with pytest.raises(ValueError):
            intrinsics_for_stride(INTR, 7)

    def test_downsample_picks_centers(self):
        img = np.arange(120 * 160, dtype=np.float64).reshape(120, 160)
        small = downsample_to_feature_grid(img, 4)
        assert small.shape == (30, 40)
        assert small[0, 0] == img[2, 2]
        assert small[5, 7] == img[22, 30]
