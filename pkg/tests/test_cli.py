import json

import numpy as np
import pytest

from conftsdf import TsdfMap, import_ply, load_manifest, read_pfm
from conftsdf.cli import default_trajectory, look_at, main
from conftsdf.errors import ConfigError


class TestLookAt:
    def test_z_points_at_target(self):
        pose = look_at([0, 0, 0], [0, 0, 5])
        np.testing.assert_allclose(pose.matrix()[:, 2], [0, 0, 1], atol=1e-12)

    def test_rotation_is_orthonormal(self):
        pose = look_at([1.0, -2.0, 0.5], [0.3, 0.1, 2.0])
        r = pose.matrix()
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-9)
        assert np.linalg.det(r) == pytest.approx(1.0)

    def test_translation_is_position(self):
        pose = look_at([1, 2, 3], [0, 0, 10])
        np.testing.assert_allclose(pose.translation, [1, 2, 3])


class TestDefaultTrajectory:
    def test_two_walls_count_and_span(self):
        poses = default_trajectory("two_walls", 5)
        assert len(poses) == 5
        assert poses[0][0] == 0.0 and poses[-1][0] == 4.0

    def test_sphere_room_looks_at_center(self):
        for _, pose in default_trajectory("sphere_room", 8):
            center = np.array([0.0, 0.0, 2.0])
            z = pose.matrix()[:, 2]
            to_center = center - pose.translation
            to_center /= np.linalg.norm(to_center)
            assert np.dot(z, to_center) > 0.999

    def test_unknown_scene(self):
        with pytest.raises(ConfigError):
            default_trajectory("mystery", 3)

    def test_bad_frame_count(self):
        with pytest.raises(ConfigError):
            default_trajectory("two_walls", 0)


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    rc = main(["synth", "--scene", "two_walls", "--output", str(out), "--frames", "4"])
    assert rc == 0
    return out


class TestSynth:
    def test_layout(self, synth_dir):
        assert (synth_dir / "manifest.json").exists()
        assert (synth_dir / "poses.txt").exists()
        assert (synth_dir / "frames" / "depth_0000.pfm").exists()
        assert (synth_dir / "frames" / "conf_0003.pfm").exists()

    def test_manifest_loads(self, synth_dir):
        man = load_manifest(synth_dir / "manifest.json")
        assert len(man.frames) == 4
        assert man.intrinsics.width == 64

    def test_rendered_depth_plausible(self, synth_dir):
        depth = read_pfm(synth_dir / "frames" / "depth_0000.pfm")
        conf = read_pfm(synth_dir / "frames" / "conf_0000.pfm")
        vals = depth.data[depth.mask]
        assert len(vals) > 0
        assert np.all((vals > 0.4) & (vals < 2.0))
        # PFM stores float32, so compare against the nearest-f32 values
        uniq = np.unique(conf.data[conf.mask])
        assert np.all(np.isclose(uniq[:, None], [0.4, 0.9], atol=1e-6).any(axis=1))

    def test_unknown_scene_exit_code(self, tmp_path):
        rc = main(["synth", "--scene", "nope", "--output", str(tmp_path / "x")])
        assert rc == 2


class TestPipeline:
    def test_integrate_mesh_voxels_eval(self, synth_dir, tmp_path, capsys):
        snap = tmp_path / "map.ctsd"
        rc = main(
            ["integrate", "--manifest", str(synth_dir / "manifest.json"),
             "--output", str(snap)]
        )
        assert rc == 0
        m = TsdfMap.load(snap)
        assert len(m.blocks) > 0

        mesh_path = tmp_path / "mesh.ply"
        rc = main(["mesh", "--snapshot", str(snap), "--output", str(mesh_path)])
        assert rc == 0
        mesh = import_ply(mesh_path)
        assert mesh.num_vertices > 0

        vox_path = tmp_path / "voxels.ply"
        rc = main(["voxels", "--snapshot", str(snap), "--output", str(vox_path)])
        assert rc == 0
        assert vox_path.stat().st_size > 0

        report = tmp_path / "report.json"
        capsys.readouterr()
        rc = main(
            ["eval", "--scene", "two_walls", "--snapshot", str(snap),
             "--output", str(report)]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "rms_error=" in out
        assert "region.wall_a.mean_omega=" in out
        doc = json.loads(report.read_text())
        assert doc["rms_error"] < 0.05
        assert doc["vertex_count"] > 0

    def test_repeat_runs_bitwise_identical(self, synth_dir, tmp_path):
        outs = []
        for tag in ("a", "b"):
            snap = tmp_path / f"{tag}.ctsd"
            rc = main(
                ["integrate", "--manifest", str(synth_dir / "manifest.json"),
                 "--output", str(snap)]
            )
            assert rc == 0
            outs.append(snap.read_bytes())
        assert outs[0] == outs[1]

    def test_flag_overrides(self, synth_dir, tmp_path):
        snap = tmp_path / "q.ctsd"
        rc = main(
            ["integrate", "--manifest", str(synth_dir / "manifest.json"),
             "--output", str(snap), "--weight", "quad", "--mode", "accumulate",
             "--voxel-size", "0.1"]
        )
        assert rc == 0
        m = TsdfMap.load(snap)
        assert m.voxel_size == 0.1
        assert m.omega_max == 100.0

    def test_config_file(self, synth_dir, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"voxel_size": 0.08, "c_min": 0.2}))
        snap = tmp_path / "c.ctsd"
        rc = main(
            ["integrate", "--manifest", str(synth_dir / "manifest.json"),
             "--output", str(snap), "--config", str(cfg_path)]
        )
        assert rc == 0
        assert TsdfMap.load(snap).voxel_size == 0.08


class TestExitCodes:
    def test_missing_manifest_is_data_error(self, tmp_path):
        rc = main(
            ["integrate", "--manifest", str(tmp_path / "none.json"),
             "--output", str(tmp_path / "m.ctsd")]
        )
        assert rc == 3

    def test_bad_config_is_config_error(self, synth_dir, tmp_path):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text('{"voxel_sizee": 0.05}')
        rc = main(
            ["integrate", "--manifest", str(synth_dir / "manifest.json"),
             "--output", str(tmp_path / "m.ctsd"), "--config", str(cfg_path)]
        )
        assert rc == 2

    def test_corrupt_snapshot_is_data_error(self, tmp_path):
        snap = tmp_path / "bad.ctsd"
        snap.write_bytes(b"JUNKJUNKJUNK")
        rc = main(["mesh", "--snapshot", str(snap), "--output", str(tmp_path / "m.ply")])
        assert rc == 3

    def test_thread_cap_env_validation(self, synth_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("CONFTSDF_THREADS", "zero")
        rc = main(
            ["integrate", "--manifest", str(synth_dir / "manifest.json"),
             "--output", str(tmp_path / "m.ctsd")]
        )
        assert rc == 2

    def test_thread_cap_env_valid(self, synth_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("CONFTSDF_THREADS", "1")
        rc = main(
            ["integrate", "--manifest", str(synth_dir / "manifest.json"),
             "--output", str(tmp_path / "m.ctsd")]
        )
        assert rc == 0


class TestStereoCommand:
    def test_disparity_only_pipeline(self, tmp_path):
        import conftsdf
        from conftsdf.images import ScalarImage

        # dataset with a disparity image and no confidence source
        intr_doc = {
            "alpha_x": 40.0, "alpha_y": 40.0, "o_x": 32.0, "o_y": 24.0,
            "width": 64, "height": 48, "baseline": 0.12,
        }
        src = tmp_path / "src"
        src.mkdir()
        (src / "poses.txt").write_text("0.0 0 0 0 0 0 0 1\n")
        disp = ScalarImage.full(64, 48, 2.4)
        conftsdf.write_pfm(disp, src / "disp.pfm")
        (src / "manifest.json").write_text(json.dumps({
            "version": 1,
            "intrinsics": intr_doc,
            "pose_file": "poses.txt",
            "frames": [{"timestamp": 0.0, "disparity": "disp.pfm"}],
        }))
        out = tmp_path / "out"
        rc = main(["stereo", "--manifest", str(src / "manifest.json"),
                   "--output", str(out)])
        assert rc == 0
        man = load_manifest(out / "manifest.json")
        depth, conf = (
            read_pfm(out / man.frames[0].depth),
            read_pfm(out / man.frames[0].confidence),
        )
        assert depth.data[0, 0] == pytest.approx(40.0 * 0.12 / 2.4)
        assert np.all(conf.data == 1.0)

    def test_left_right_block_match(self, tmp_path):
        import conftsdf
        from conftsdf.images import ScalarImage

        intr_doc = {
            "alpha_x": 40.0, "alpha_y": 40.0, "o_x": 32.0, "o_y": 24.0,
            "width": 64, "height": 48, "baseline": 0.12,
        }
        rng = np.random.default_rng(2)
        left = rng.uniform(0, 1, size=(48, 64))
        shift = 4
        right = np.full((48, 64), np.nan)
        right[:, : 64 - shift] = left[:, shift:]
        src = tmp_path / "src"
        src.mkdir()
        (src / "poses.txt").write_text("0.0 0 0 0 0 0 0 1\n")
        conftsdf.write_pfm(ScalarImage.from_array(left), src / "left.pfm")
        conftsdf.write_pfm(
            ScalarImage(right, np.isfinite(right)), src / "right.pfm"
        )
        (src / "manifest.json").write_text(json.dumps({
            "version": 1,
            "intrinsics": intr_doc,
            "pose_file": "poses.txt",
            "frames": [{"timestamp": 0.0, "left": "left.pfm", "right": "right.pfm"}],
        }))
        out = tmp_path / "out"
        rc = main(["stereo", "--manifest", str(src / "manifest.json"),
                   "--output", str(out), "--max-disp", "8"])
        assert rc == 0
        man = load_manifest(out / "manifest.json")
        depth = read_pfm(out / man.frames[0].depth)
        expected = 40.0 * 0.12 / shift
        good = np.isclose(depth.data[depth.mask], expected)
        assert good.mean() > 0.9
