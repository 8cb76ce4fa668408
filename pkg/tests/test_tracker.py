import numpy as np
import pytest

from thicket.tracker import (
    CONFIRMED,
    LOST,
    TENTATIVE,
    Blob,
    BlobTracker,
    KalmanState,
    associate,
    detect_blobs,
    kalman_predict,
    kalman_update,
    load_tracks_csv,
    save_tracks_csv,
    track_sequence,
)


def disk_mask(shape, cx, cy, radius):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2


class TestDetectBlobs:
    def test_single_blob_centroid_and_area(self):
        mask = np.zeros((10, 10), bool)
        mask[2:4, 3:6] = True  # rows 2-3, cols 3-5
        blobs = detect_blobs(mask, min_area=1)
        assert len(blobs) == 1
        b = blobs[0]
        assert b.area == 6
        assert b.centroid == pytest.approx((4.0, 2.5))  # (x, y)
        assert b.bounding_box == (2, 3, 3, 5)

    def test_diagonal_pixels_are_one_blob(self):
        mask = np.zeros((5, 5), bool)
        mask[1, 1] = mask[2, 2] = True
        assert len(detect_blobs(mask, min_area=1)) == 1

    def test_min_area_filters(self):
        mask = np.zeros((8, 8), bool)
        mask[0, 0] = True
        mask[4:6, 4:6] = True
        blobs = detect_blobs(mask, min_area=4)
        assert len(blobs) == 1
        assert blobs[0].area == 4

    def test_sort_area_desc_then_bbox_origin(self):
        mask = np.zeros((12, 12), bool)
        mask[8:10, 8:10] = True   # area 4 at (8,8)
        mask[0:2, 5:7] = True     # area 4 at (0,5)
        mask[4:7, 0:3] = True     # area 9 at (4,0)
        blobs = detect_blobs(mask, min_area=1)
        assert [b.area for b in blobs] == [9, 4, 4]
        assert blobs[1].bounding_box[:2] == (0, 5)
        assert blobs[2].bounding_box[:2] == (8, 8)

    def test_accepts_anomaly_mask(self):
        from thicket.anomaly import AnomalyMask

        mask = np.zeros((6, 6), bool)
        mask[2:4, 2:4] = True
        am = AnomalyMask(mask=mask, threshold_used=1.0, confidence_used=0.99)
        assert len(detect_blobs(am, min_area=1)) == 1


class TestKalman:
    def test_hand_computed_two_steps(self):
        # 1D-style check on the x components, measurement noise r=1, q=0
        state = KalmanState(
            state=np.array([0.0, 0.0, 0.0, 0.0]),
            covariance=np.diag([1.0, 1.0, 1.0, 1.0]),
        )
        pred = kalman_predict(state, process_noise=0.0)
        # P after predict: [[2,1],[1,1]] in (x, vx) block
        assert pred.covariance[0, 0] == pytest.approx(2.0)
        assert pred.covariance[0, 2] == pytest.approx(1.0)
        assert pred.covariance[2, 2] == pytest.approx(1.0)
        upd = kalman_update(pred, np.array([1.0, 0.0]), measurement_noise=1.0)
        # K_x = 2/3; x = 0 + 2/3*(1-0); vx = 0 + 1/3
        assert upd.state[0] == pytest.approx(2.0 / 3.0)
        assert upd.state[2] == pytest.approx(1.0 / 3.0)
        # Joseph form: P00 = 2/3
        assert upd.covariance[0, 0] == pytest.approx(2.0 / 3.0)

    def test_noiseless_linear_motion_converges_exactly(self):
        state = KalmanState(
            state=np.array([0.0, 0.0, 0.0, 0.0]),
            covariance=np.diag([1.0, 1.0, 100.0, 100.0]),
        )
        for t in range(1, 60):
            state = kalman_predict(state, process_noise=0.0)
            state = kalman_update(
                state, np.array([2.0 * t, -1.0 * t]), measurement_noise=1e-12
            )
        assert state.position == pytest.approx((118.0, -59.0), abs=1e-6)
        assert state.velocity == pytest.approx((2.0, -1.0), abs=1e-6)

    def test_covariance_stays_psd_random_cycles(self):
        rng = np.random.default_rng(8)
        state = KalmanState(
            state=np.zeros(4), covariance=np.diag([1.0, 1.0, 100.0, 100.0])
        )
        for _ in range(2000):
            state = kalman_predict(state, process_noise=rng.uniform(0.1, 5.0))
            z = state.position + rng.normal(0, 3.0, 2)
            state = kalman_update(state, z, measurement_noise=rng.uniform(0.1, 5.0))
            eig = np.linalg.eigvalsh(state.covariance)
            assert eig.min() > -1e-9

    def test_state_validates_symmetry(self):
        bad = np.eye(4)
        bad[0, 1] = 0.5
        with pytest.raises(ValueError):
            KalmanState(state=np.zeros(4), covariance=bad)


class TestAssociate:
    def t(self, x, y):
        return KalmanState(state=np.array([x, y, 0.0, 0.0]), covariance=np.eye(4))

    def b(self, x, y, area=10):
        return Blob(centroid=(x, y), area=area, bounding_box=(0, 0, 1, 1))

    def test_nearest_within_gate(self):
        class T:  # minimal stand-in with .kalman
            def __init__(self, s):
                self.kalman = s

        tracks = [T(self.t(0, 0)), T(self.t(50, 50))]
        blobs = [self.b(52, 49), self.b(1, 1)]
        matches, ut, ub = associate(tracks, blobs, gate_px=30.0)
        assert sorted(matches) == [(0, 1), (1, 0)]
        assert ut == [] and ub == []

    def test_gate_blocks_far_pairs(self):
        class T:
            def __init__(self, s):
                self.kalman = s

        tracks = [T(self.t(0, 0))]
        blobs = [self.b(100, 100)]
        matches, ut, ub = associate(tracks, blobs, gate_px=30.0)
        assert matches == []
        assert ut == [0] and ub == [0]

    def test_global_optimum_beats_greedy(self):
        class T:
            def __init__(self, s):
                self.kalman = s

        # greedy would pair t0-b0 (dist 5) leaving t1-b1 at 28;
        # optimal total pairs t0-b1 (10) and t1-b0 (8)
        tracks = [T(self.t(0, 0)), T(self.t(13, 0))]
        blobs = [self.b(5, 0), self.b(10, 0)]
        matches, _, _ = associate(tracks, blobs, gate_px=30.0)
        d = {t: b for t, b in matches}
        total = sum(
            np.hypot(
                tracks[t].kalman.position[0] - blobs[b].centroid[0],
                tracks[t].kalman.position[1] - blobs[b].centroid[1],
            )
            for t, b in matches
        )
        assert len(matches) == 2
        assert total <= 5 + 15 + 1e-9  # optimal assignment cost


class TestLifecycle:
    def masks_linear(self, n, start=(10.0, 20.0), v=(3.0, 0.0), shape=(64, 96)):
        out = []
        for t in range(n):
            m = np.zeros(shape, bool)
            m |= disk_mask(shape, start[0] + v[0] * t, start[1] + v[1] * t, 3)
            out.append(m)
        return out

    def test_confirmation_after_three_hits(self):
        bt = BlobTracker().fit(self.masks_linear(2))
        assert all(not t.was_confirmed() for t in bt.tracks_)
        bt = BlobTracker().fit(self.masks_linear(3))
        assert any(t.was_confirmed() for t in bt.tracks_)

    def test_track_follows_constant_velocity(self):
        bt = BlobTracker().fit(self.masks_linear(12))
        confirmed = [t for t in bt.tracks_ if t.was_confirmed()]
        assert len(confirmed) == 1
        obs = confirmed[0].history
        assert len(obs) == 12
        xs = [o.x for o in obs]
        assert xs[-1] - xs[0] == pytest.approx(33.0, abs=1.0)

    def test_missed_frames_get_predicted_entries(self):
        masks = self.masks_linear(10)
        masks[6][:] = False  # dropout
        bt = BlobTracker().fit(masks)
        tr = [t for t in bt.tracks_ if t.was_confirmed()][0]
        frames = [o.frame for o in tr.history]
        assert frames == list(range(10))
        gap = tr.history[6]
        assert not gap.observed
        assert gap.area == 0

    def test_lost_after_max_misses(self):
        masks = self.masks_linear(4) + [np.zeros((64, 96), bool)] * 7
        bt = BlobTracker(max_misses=5).fit(masks)
        tr = bt.tracks_[0]
        assert tr.status == LOST
        # history ends after 5 predicted entries past the last hit
        assert tr.history[-1].frame == 3 + 5

    def test_two_targets_two_tracks(self):
        shape = (64, 96)
        masks = []
        for t in range(8):
            m = disk_mask(shape, 15 + 2 * t, 15, 3) | disk_mask(shape, 70 - 2 * t, 45, 3)
            masks.append(m)
        bt = BlobTracker().fit(masks)
        confirmed = [t for t in bt.tracks_ if t.was_confirmed()]
        assert len(confirmed) == 2
        ids = sorted(t.id for t in confirmed)
        assert ids == [1, 2]

    def test_track_sequence_wrapper(self):
        tracks = track_sequence(self.masks_linear(5))
        assert any(t.was_confirmed() for t in tracks)

    def test_get_params(self):
        bt = BlobTracker(gate_px=12.5)
        assert bt.get_params()["gate_px"] == 12.5


class TestCsv:
    def test_round_trip_and_filtering(self, tmp_path):
        masks = TestLifecycle().masks_linear(6)
        bt = BlobTracker().fit(masks)
        path = tmp_path / "tracks.csv"
        save_tracks_csv(bt.tracks_, path)
        text = path.read_text().splitlines()
        assert text[0] == "frame,track_id,x,y,area,status"
        rows = load_tracks_csv(path)
        # confirmed from frame 2 onward (3rd hit), observed rows only
        assert {r["frame"] for r in rows} == {2, 3, 4, 5}
        assert all(r["status"] == CONFIRMED for r in rows)
        frames = [r["frame"] for r in rows]
        assert frames == sorted(frames)

    def test_tentative_never_written(self, tmp_path):
        masks = TestLifecycle().masks_linear(2)
        bt = BlobTracker().fit(masks)
        path = tmp_path / "tracks.csv"
        save_tracks_csv(bt.tracks_, path)
        assert len(path.read_text().splitlines()) == 1  # header only
