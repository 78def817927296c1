import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftsdf import (
    Box,
    Plane,
    Pose,
    Scene,
    Sphere,
    TrajectorySpec,
    make_reference_scenes,
    render_frame,
    sample_trajectory,
)
from conftsdf.scenes import interpolate_pose


class TestPrimitives:
    def test_plane_sdf_signs(self):
        p = Plane([0, 0, 2], [0, 0, -1], 0.9)
        assert p.sdf([[0, 0, 1.5]])[0] == pytest.approx(0.5)
        assert p.sdf([[0, 0, 2.5]])[0] == pytest.approx(-0.5)

    def test_plane_normal_normalized(self):
        p = Plane([0, 0, 0], [0, 0, -5], 0.5)
        np.testing.assert_allclose(p.normal, [0, 0, -1])

    def test_plane_zero_normal_rejected(self):
        with pytest.raises(ValueError):
            Plane([0, 0, 0], [0, 0, 0], 0.5)

    def test_plane_ray_hit(self):
        p = Plane([0, 0, 2], [0, 0, -1], 0.9)
        t = p.ray_hits(np.zeros(3), np.array([[0.0, 0.0, 1.0]]))
        assert t[0] == pytest.approx(2.0)

    def test_plane_ray_parallel_misses(self):
        p = Plane([0, 0, 2], [0, 0, -1], 0.9)
        t = p.ray_hits(np.zeros(3), np.array([[1.0, 0.0, 0.0]]))
        assert np.isinf(t[0])

    def test_box_sdf_outside_and_inside(self):
        b = Box([0, 0, 0], [1, 1, 1], 0.5)
        assert b.sdf([[2.0, 0.5, 0.5]])[0] == pytest.approx(1.0)
        assert b.sdf([[0.5, 0.5, 0.5]])[0] == pytest.approx(-0.5)
        assert b.sdf([[0.5, 0.5, 0.9]])[0] == pytest.approx(-0.1)

    def test_box_sdf_corner_distance(self):
        b = Box([0, 0, 0], [1, 1, 1], 0.5)
        assert b.sdf([[2.0, 2.0, 2.0]])[0] == pytest.approx(np.sqrt(3))

    def test_box_ray_entry(self):
        b = Box([-1, -1, 2], [1, 1, 3], 0.5)
        t = b.ray_hits(np.zeros(3), np.array([[0.0, 0.0, 1.0]]))
        assert t[0] == pytest.approx(2.0)

    def test_box_ray_miss(self):
        b = Box([-1, -1, 2], [1, 1, 3], 0.5)
        t = b.ray_hits(np.zeros(3), np.array([[0.0, 5.0, 1.0]]))
        assert np.isinf(t[0])

    def test_box_invalid_corners(self):
        with pytest.raises(ValueError):
            Box([1, 0, 0], [0, 1, 1], 0.5)

    def test_sphere_sdf(self):
        s = Sphere([0, 0, 2], 0.5, 0.8)
        assert s.sdf([[0, 0, 0]])[0] == pytest.approx(1.5)
        assert s.sdf([[0, 0, 2]])[0] == pytest.approx(-0.5)

    def test_sphere_ray_near_hit(self):
        s = Sphere([0, 0, 2], 0.5, 0.8)
        t = s.ray_hits(np.zeros(3), np.array([[0.0, 0.0, 1.0]]))
        assert t[0] == pytest.approx(1.5)

    def test_sphere_ray_from_inside(self):
        s = Sphere([0, 0, 2], 0.5, 0.8)
        t = s.ray_hits(np.array([0.0, 0.0, 2.0]), np.array([[0.0, 0.0, 1.0]]))
        assert t[0] == pytest.approx(0.5)

    def test_confidence_range_checked(self):
        with pytest.raises(ValueError):
            Sphere([0, 0, 0], 1.0, 1.5)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
    def test_scene_sdf_is_min_of_parts(self, x, y, z):
        s1 = Sphere([0, 0, 2], 0.5, 0.8)
        b1 = Box([1, 1, 1], [2, 2, 2], 0.5)
        scene = Scene([s1, b1])
        p = [[x, y, z]]
        assert scene.sdf(p)[0] == pytest.approx(min(s1.sdf(p)[0], b1.sdf(p)[0]))


class TestTrajectory:
    def make_spec(self):
        p0 = Pose(translation=np.array([0.0, 0.0, 0.0]))
        p1 = Pose(translation=np.array([2.0, 0.0, 0.0]))
        return TrajectorySpec([(0.0, p0), (1.0, p1)], frame_rate=4.0)

    def test_requires_two_keyposes(self):
        with pytest.raises(ValueError):
            TrajectorySpec([(0.0, Pose.identity())], frame_rate=1.0)

    def test_times_strictly_increasing(self):
        with pytest.raises(ValueError):
            TrajectorySpec(
                [(0.0, Pose.identity()), (0.0, Pose.identity())], frame_rate=1.0
            )

    def test_interpolation_linear_translation(self):
        spec = self.make_spec()
        pose = interpolate_pose(spec, 0.25)
        np.testing.assert_allclose(pose.translation, [0.5, 0, 0])

    def test_interpolation_snaps_to_keypose(self):
        spec = self.make_spec()
        np.testing.assert_allclose(interpolate_pose(spec, 1.0).translation, [2, 0, 0])

    def test_out_of_span_rejected(self):
        with pytest.raises(ValueError):
            interpolate_pose(self.make_spec(), 2.0)

    def test_sample_count_and_endpoints(self):
        samples = sample_trajectory(self.make_spec())
        assert len(samples) == 5
        assert samples[0][0] == 0.0 and samples[-1][0] == pytest.approx(1.0)
        np.testing.assert_allclose(samples[2][1].translation, [1.0, 0, 0])

    def test_rotation_slerped(self):
        q1 = np.array([np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)])
        spec = TrajectorySpec(
            [(0.0, Pose.identity()), (1.0, Pose(rotation=q1))], frame_rate=2.0
        )
        mid = interpolate_pose(spec, 0.5)
        np.testing.assert_allclose(
            mid.rotation, [np.cos(np.pi / 8), 0, 0, np.sin(np.pi / 8)], atol=1e-12
        )


class TestRenderFrame:
    def wall_scene(self):
        return Scene([Box([-5, -5, 2.0], [5, 5, 2.5], 0.7)])

    def test_center_depth_exact(self, intr_small):
        depth, conf = render_frame(self.wall_scene(), Pose.identity(), intr_small)
        assert depth.data[24, 32] == pytest.approx(2.0, abs=1e-12)
        assert conf.data[24, 32] == 0.7

    def test_depth_is_camera_z_not_range(self, intr_small):
        # off-center pixels see the same fronto-parallel wall at the same Z
        depth, _ = render_frame(self.wall_scene(), Pose.identity(), intr_small)
        np.testing.assert_allclose(depth.data[depth.mask], 2.0, atol=1e-9)

    def test_miss_is_invalid(self, intr_small):
        scene = Scene([Box([-0.01, -0.01, 2.0], [0.01, 0.01, 2.1], 0.7)])
        depth, conf = render_frame(scene, Pose.identity(), intr_small)
        assert depth.mask[24, 32]
        assert not depth.mask[0, 0]
        assert np.isnan(depth.data[0, 0])

    def test_nearest_primitive_wins(self, intr_small):
        near = Box([-5, -5, 1.0], [5, 5, 1.2], 0.3)
        far = Box([-5, -5, 2.0], [5, 5, 2.2], 0.9)
        depth, conf = render_frame(Scene([far, near]), Pose.identity(), intr_small)
        assert depth.data[24, 32] == pytest.approx(1.0)
        assert conf.data[24, 32] == 0.3

    def test_pose_moves_camera(self, intr_small):
        pose = Pose(translation=np.array([0.0, 0.0, 1.0]))
        depth, _ = render_frame(self.wall_scene(), pose, intr_small)
        assert depth.data[24, 32] == pytest.approx(1.0)

    def test_noise_reproducible(self, intr_small):
        a1, _ = render_frame(self.wall_scene(), Pose.identity(), intr_small, 0.01, seed=7)
        a2, _ = render_frame(self.wall_scene(), Pose.identity(), intr_small, 0.01, seed=7)
        b, _ = render_frame(self.wall_scene(), Pose.identity(), intr_small, 0.01, seed=8)
        np.testing.assert_array_equal(a1.data[a1.mask], a2.data[a2.mask])
        assert not np.array_equal(a1.data[a1.mask], b.data[b.mask])

    def test_noise_scale(self, intr_small):
        depth, _ = render_frame(self.wall_scene(), Pose.identity(), intr_small, 0.005, seed=3)
        resid = depth.data[depth.mask] - 2.0
        sigma = 0.005 * 4.0
        assert abs(resid.std() - sigma) < 0.3 * sigma

    def test_empty_scene_rejected(self, intr_small):
        with pytest.raises(ValueError):
            render_frame(Scene([]), Pose.identity(), intr_small)


class TestReferenceScenes:
    def test_names_and_regions(self):
        scenes = make_reference_scenes()
        assert set(scenes) == {"pool", "two_walls", "sphere_room"}
        assert set(scenes["two_walls"].regions) == {"wall_a", "wall_b"}
        assert "floor" in scenes["pool"].regions

    def test_pool_extent(self):
        scenes = make_reference_scenes(pool_full_scale=True)
        assert scenes["pool"].extent == (40.0, 6.45, 1.5)

    def test_two_walls_confidences_and_depths(self, intr_small):
        scene = make_reference_scenes()["two_walls"]
        # aim at wall A's face center from z=0
        target = np.array([-0.55, 0.0, 1.4])
        pose = Pose(translation=np.array([-0.55, 0.0, 0.0]))
        depth, conf = render_frame(scene, pose, intr_small)
        assert depth.data[24, 32] == pytest.approx(1.4)
        assert conf.data[24, 32] == 0.9
        pose_b = Pose(translation=np.array([0.245, 0.0, 0.0]))
        depth_b, conf_b = render_frame(scene, pose_b, intr_small)
        assert depth_b.data[24, 32] == pytest.approx(0.56)
        assert conf_b.data[24, 32] == 0.4

    def test_sphere_room_center_hit(self, intr_small):
        scene = make_reference_scenes()["sphere_room"]
        depth, conf = render_frame(scene, Pose.identity(), intr_small)
        assert depth.data[24, 32] == pytest.approx(1.5)
        assert conf.data[24, 32] == 0.8
