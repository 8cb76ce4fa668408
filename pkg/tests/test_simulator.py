import json

import numpy as np
import pytest

import thicket.simulator as sim
from thicket.exceptions import DensityUnreachable
from thicket.integrator import ImageIntegrator
from thicket.rasters import load_png
from thicket.simulator import (
    SceneRenderer,
    SceneSpec,
    TargetSpec,
    default_plane,
    default_rig,
    default_scene_spec,
    estimate_occlusion,
    generate_scene,
    ground_texture,
    load_frames,
    load_manifest,
    load_truth_frame,
    manifest_plane,
    manifest_rig,
    manifest_spec,
    simulate_flight,
)


class TestSceneSpec:
    def test_extent_validation(self):
        with pytest.raises(ValueError):
            SceneSpec(extent_m=(0, 0, 0, 1))

    def test_density_range(self):
        with pytest.raises(ValueError):
            SceneSpec(extent_m=(-1, 1, -1, 1), occluder_density=1.0)

    def test_waypoints_must_lie_inside_extent(self):
        t = TargetSpec(color=(1, 0, 0), waypoints=((5.0, 5.0),), speed_mps=0.0)
        with pytest.raises(ValueError):
            SceneSpec(extent_m=(-1, 1, -1, 1), targets=(t,))


class TestTargetPath:
    def test_static_target(self):
        t = TargetSpec(color=(1, 0, 0), waypoints=((2.0, 3.0),), speed_mps=0.0)
        assert t.position(0.0) == pytest.approx((2.0, 3.0))
        assert t.position(9.0) == pytest.approx((2.0, 3.0))

    def test_constant_speed_two_segments(self):
        t = TargetSpec(
            color=(1, 0, 0),
            waypoints=((0.0, 0.0), (4.0, 0.0), (4.0, 2.0)),
            speed_mps=2.0,
        )
        assert t.position(1.0) == pytest.approx((2.0, 0.0))
        assert t.position(2.0) == pytest.approx((4.0, 0.0))
        assert t.position(2.5) == pytest.approx((4.0, 1.0))
        # clamps at the final waypoint
        assert t.position(100.0) == pytest.approx((4.0, 2.0))


class TestGroundTexture:
    def spec(self, **kw):
        return SceneSpec(extent_m=(-5, 5, -5, 5), **kw)

    def test_deterministic(self):
        xy = np.random.default_rng(0).uniform(-4, 4, size=(32, 32, 2))
        a = ground_texture(xy[..., 0], xy[..., 1], self.spec(seed=5))
        b = ground_texture(xy[..., 0], xy[..., 1], self.spec(seed=5))
        assert np.array_equal(a, b)

    def test_seed_changes_field(self):
        xy = np.zeros((8, 8, 2)) + np.linspace(-3, 3, 8)[None, :, None]
        a = ground_texture(xy[..., 0], xy[..., 1], self.spec(seed=1))
        b = ground_texture(xy[..., 0], xy[..., 1], self.spec(seed=2))
        assert not np.array_equal(a, b)

    def test_range_and_shape(self):
        xy = np.random.default_rng(1).uniform(-4, 4, size=(16, 16, 2))
        out = ground_texture(xy[..., 0], xy[..., 1], self.spec())
        assert out.shape == (16, 16, 3)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_amplitude_bound(self):
        xy = np.random.default_rng(2).uniform(-4, 4, size=(64, 64, 2))
        spec = self.spec(background_amp=0.02)
        out = ground_texture(xy[..., 0], xy[..., 1], spec)
        assert np.all(np.abs(out - np.array(spec.background_base)) <= 0.02 + 1e-9)


class TestGenerateScene:
    def test_density_calibration_within_tolerance(self):
        for density in (0.3, 0.6, 0.85):
            spec = SceneSpec(extent_m=(-8, 8, -8, 8), occluder_density=density, seed=3)
            scene = generate_scene(spec)
            est = estimate_occlusion(scene, n_rays=100_000,
                                     rng=np.random.default_rng(99))
            assert abs(est - density) <= 0.02, (density, est)

    def test_zero_density_empty(self):
        spec = SceneSpec(extent_m=(-4, 4, -4, 4), occluder_density=0.0)
        scene = generate_scene(spec)
        assert scene.n_occluders == 0

    def test_deterministic(self):
        spec = SceneSpec(extent_m=(-6, 6, -6, 6), occluder_density=0.5, seed=11)
        a, b = generate_scene(spec), generate_scene(spec)
        assert np.array_equal(a.disk_xy, b.disk_xy)
        assert np.array_equal(a.disk_color, b.disk_color)

    def test_disks_sorted_by_height(self):
        spec = SceneSpec(extent_m=(-6, 6, -6, 6), occluder_density=0.4, seed=2)
        scene = generate_scene(spec)
        assert np.all(np.diff(scene.disk_z) >= 0)

    def test_disk_parameters_within_spec(self):
        spec = SceneSpec(extent_m=(-6, 6, -6, 6), occluder_density=0.4, seed=2)
        scene = generate_scene(spec)
        zmin, zmax = spec.occluder_layer
        rmin, rmax = spec.occluder_radius_m
        assert scene.disk_z.min() >= zmin and scene.disk_z.max() <= zmax
        assert scene.disk_r.min() >= rmin and scene.disk_r.max() <= rmax

    def test_unreachable_density(self, monkeypatch):
        monkeypatch.setattr(sim, "_DISK_CAP", 512)
        spec = SceneSpec(
            extent_m=(-50, 50, -50, 50),
            occluder_density=0.9,
            occluder_radius_m=(0.02, 0.03),
        )
        with pytest.raises(DensityUnreachable):
            generate_scene(spec)


class TestRenderer:
    def test_render_deterministic(self, small_renderer):
        a = small_renderer.render(1, 0.0)
        b = small_renderer.render(1, 0.0)
        assert np.array_equal(a, b)

    def test_zero_density_render_matches_reference(self, small_rig):
        spec = default_scene_spec(21, 0.0, rig=small_rig)
        scene = generate_scene(spec)
        plane = default_plane(small_rig)
        r = SceneRenderer(scene, small_rig, plane)
        # native-resolution grid: the reference camera view IS the reference image
        assert np.array_equal(
            r.render(small_rig.center_index, 0.0), r.reference(0.0)
        )

    def test_zero_density_truth_labels_match_painted_targets(self, small_rig):
        spec = default_scene_spec(22, 0.0, rig=small_rig)
        scene = generate_scene(spec)
        plane = default_plane(small_rig)
        r = SceneRenderer(scene, small_rig, plane)
        truth = r.truth(0.0)
        img = r.render(small_rig.center_index, 0.0)
        lab = truth.labels
        for i, t in enumerate(scene.spec.targets, start=1):
            sel = lab == i
            assert sel.any()
            assert np.allclose(img[sel], t.color, atol=1e-6)

    def test_visibility_subset_of_truth(self, small_renderer, small_rig):
        truth = small_renderer.truth(0.0, with_visibility=True)
        assert truth.visibility is not None
        for k in range(small_rig.count):
            vis = small_renderer.visibility(k, 0.0)
            assert vis.shape == small_rig.cameras[k][0].resolution[::-1]
            # every visible label value also exists in the full label set
            assert set(np.unique(vis)) <= set(np.unique(truth.labels)) | {0}

    def test_noise_std_changes_image_deterministically(self, small_rig):
        spec = default_scene_spec(23, 0.2, rig=small_rig, noise_std=0.01)
        scene = generate_scene(spec)
        plane = default_plane(small_rig)
        r = SceneRenderer(scene, small_rig, plane)
        a, b = r.render(0, 0.0), r.render(0, 0.0)
        assert np.array_equal(a, b)
        quiet = SceneRenderer(
            generate_scene(default_scene_spec(23, 0.2, rig=small_rig)),
            small_rig, plane,
        ).render(0, 0.0)
        assert not np.array_equal(a, quiet)

    def test_centroids_project_onto_labels(self, small_renderer):
        truth = small_renderer.truth(0.0)
        for (wx, wy), (px, py), lbl in zip(
            truth.centroids_world, truth.centroids_px,
            range(1, len(truth.centroids_world) + 1),
        ):
            x, y = int(round(px)), int(round(py))
            h, w = truth.labels.shape
            assert 0 <= x < w and 0 <= y < h
            assert truth.labels[y, x] == lbl


class TestFactories:
    def test_default_rig_shape(self):
        rig = default_rig()
        assert rig.count == 10
        assert rig.baseline_m == 1.0
        assert rig.altitude_m == pytest.approx(35.0)
        assert rig.aperture_m == pytest.approx(9.0)
        cam = rig.reference[0]
        assert cam.resolution == (1024, 1024)
        assert cam.fov_deg == pytest.approx(41.10)

    def test_default_plane_is_common_footprint(self, small_rig):
        plane = default_plane(small_rig)
        xmin, xmax, ymin, ymax = plane.extent
        # narrower than a single camera footprint because of the baseline spread
        half = 35.0 * np.tan(np.radians(small_rig.reference[0].fov_deg / 2.0))
        assert xmax - xmin < 2 * half
        assert plane.resolution == small_rig.reference[0].resolution

    def test_default_scene_spec_targets_inside(self, small_rig):
        spec = default_scene_spec(1, 0.3, rig=small_rig, n_targets=3)
        assert len(spec.targets) == 3
        xmin, xmax, ymin, ymax = spec.extent_m
        for t in spec.targets:
            for (x, y) in t.waypoints:
                assert xmin <= x <= xmax and ymin <= y <= ymax

    def test_moving_targets_have_paths(self, small_rig):
        spec = default_scene_spec(2, 0.3, rig=small_rig, moving=True)
        for t in spec.targets:
            assert len(t.waypoints) >= 2
            assert t.speed_mps > 0


@pytest.fixture(scope="module")
def dataset(tmp_path_factory, small_rig):
    out = tmp_path_factory.mktemp("ds")
    spec = default_scene_spec(41, 0.3, rig=small_rig, moving=True)
    return simulate_flight(spec, small_rig, frames=2, fps=10.0, out_dir=out)


class TestDataset:
    def test_layout(self, dataset, small_rig):
        assert (dataset / "manifest.json").exists()
        assert (dataset / "rig.json").exists()
        for k in range(small_rig.count):
            assert (dataset / f"cam{k}" / "frame_0000.png").exists()
            assert (dataset / f"cam{k}" / "frame_0001.png").exists()
        assert (dataset / "truth" / "frame_0000.png").exists()
        assert (dataset / "truth" / "centroids.csv").exists()

    def test_manifest_contents(self, dataset, small_rig):
        m = load_manifest(dataset)
        assert m["frames"] == 2
        assert m["fps"] == 10.0
        assert m["camera_count"] == small_rig.count
        assert m["aperture_m"] == pytest.approx(small_rig.aperture_m)
        rig = manifest_rig(dataset, m)
        assert rig.count == small_rig.count
        plane = manifest_plane(m)
        assert plane.resolution == tuple(small_rig.reference[0].resolution)
        spec = manifest_spec(m)
        assert spec.occluder_density == 0.3

    def test_truth_round_trip(self, dataset, small_rig, small_plane):
        m = load_manifest(dataset)
        truth = load_truth_frame(dataset, 1, m)
        spec = manifest_spec(m)
        scene = generate_scene(spec)
        r = SceneRenderer(scene, small_rig, manifest_plane(m))
        live = r.truth(1.0 / 10.0, with_visibility=True)
        assert np.array_equal(truth.labels, live.labels)
        assert np.allclose(truth.centroids_world, live.centroids_world, atol=1e-6)
        assert truth.visibility is not None
        for a, b in zip(truth.visibility, live.visibility):
            assert np.array_equal(a, b)

    def test_frames_round_trip(self, dataset, small_rig, small_plane):
        m = load_manifest(dataset)
        frames = load_frames(dataset, 0, m)
        assert len(frames) == small_rig.count
        spec = manifest_spec(m)
        scene = generate_scene(spec)
        r = SceneRenderer(scene, small_rig, manifest_plane(m))
        live = r.render(0, 0.0)
        # PNG quantization only
        assert np.abs(frames[0].astype(float) / 255.0 - live).max() <= 0.5 / 255.0 + 1e-9

    def test_centroid_csv_schema(self, dataset):
        header = (dataset / "truth" / "centroids.csv").read_text().splitlines()[0]
        assert header == "frame,target_id,world_x,world_y,px_x,px_y"

    def test_missing_frame_raises(self, dataset):
        m = load_manifest(dataset)
        with pytest.raises(FileNotFoundError):
            load_frames(dataset, 7, m)

    def test_byte_identical_rerun(self, tmp_path, small_rig):
        spec = default_scene_spec(42, 0.25, rig=small_rig)
        a = simulate_flight(spec, small_rig, 1, 10.0, tmp_path / "a")
        b = simulate_flight(spec, small_rig, 1, 10.0, tmp_path / "b")
        fa = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        fb = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert fa == fb
        for rel in fa:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
