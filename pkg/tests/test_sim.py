import math

import numpy as np
import pytest

from evtr.config import Config
from evtr.correlation import CorrelationEngine
from evtr.evaluation import ate
from evtr.events import compress
from evtr.geometry import Pose2D
from evtr.sim import (
    DriftModel,
    PinholeCamera,
    SimState,
    Trace,
    World,
    make_world,
    read_path,
    read_world,
    render_events,
    run_repeat,
    run_teach,
    step,
    write_path,
    write_world,
)

LINE = [(0.0, 0.0), (10.0, 0.0)]


@pytest.fixture(scope="module")
def line_world():
    return make_world(LINE, seed=3)


@pytest.fixture(scope="module")
def line_teach(line_world):
    return run_teach(line_world, LINE, Config())


def wall(n=40, x=5.0):
    ys = np.linspace(-1.0, 1.0, n)
    return World(np.column_stack([np.full(n, x), ys, np.linspace(-0.3, 0.3, n), np.ones(n)]))


class TestRenderEvents:
    def test_stationary_camera_is_silent(self, line_world):
        p = Pose2D(1, 0, 0.1)
        ev = render_events(line_world, PinholeCamera(), p, p, 0, 66_000, np.random.default_rng(0))
        assert len(ev) == 0

    def test_one_pixel_rotation_fires_every_landmark(self):
        cam = PinholeCamera()
        world = wall()
        angle = math.atan(1.0 / cam.focal) * 1.001
        u0, v0, inside = cam.project(0.0, 0.0, 0.0, world.landmarks[:, :3])
        u1, v1, inside1 = cam.project(0.0, 0.0, angle, world.landmarks[:, :3])
        assert inside.all() and inside1.all()
        ev = render_events(world, cam, Pose2D(), Pose2D(0, 0, angle), 0, 10_000,
                           np.random.default_rng(1))
        c0, c1 = np.floor(u0[0]).astype(int), np.floor(u1[0]).astype(int)
        assert (np.abs(c1 - c0) == 1).all()
        hits = {(int(a), int(b)) for a, b in zip(ev.u, ev.v)}
        for col, row in zip(c1, np.floor(v1[0]).astype(int)):
            assert (col, row) in hits

    def test_events_are_time_ordered_and_in_window(self, line_world):
        ev = render_events(line_world, PinholeCamera(), Pose2D(0, 0, 0), Pose2D(0.05, 0, 0.02),
                           1000, 67_000, np.random.default_rng(2))
        assert len(ev) > 0
        assert (np.diff(ev.t) >= 0).all() and ev.t.min() >= 1000 and ev.t.max() < 67_000
        assert set(np.unique(ev.p)) <= {-1, 1}
        assert ev.u.max() < 320 and ev.v.max() < 180

    def test_zero_salience_is_silent(self):
        world = wall()
        world.landmarks[:, 3] = 0.0
        ev = render_events(world, PinholeCamera(), Pose2D(), Pose2D(0, 0, 0.05), 0, 10_000,
                           np.random.default_rng(0))
        assert len(ev) == 0

    def test_rejects_non_finite_pose(self, line_world):
        with pytest.raises(ValueError):
            render_events(line_world, PinholeCamera(), Pose2D(math.nan, 0, 0), Pose2D(), 0, 10,
                          np.random.default_rng(0))


class TestDrift:
    def test_identity_model_is_exact(self):
        rng = np.random.default_rng(0)
        s = SimState(Pose2D(1, 2, 0.3), Pose2D(1, 2, 0.3))
        for _ in range(5000):
            s = step(s, (rng.uniform(0, 0.5), rng.uniform(-1.5, 1.5)), 1000, rng)
        assert s.true_pose == s.odom_pose

    def test_wheel_asymmetry_turns_odometry_only(self):
        d = DriftModel(wheel_scale_left=1.01, wheel_scale_right=0.99, track_width=0.5)
        s = SimState(Pose2D(), Pose2D(), drift=d)
        for _ in range(1000):
            s = step(s, (0.35, 0.0), 1000)
        assert s.true_pose.theta == 0.0
        # closed form: omega = v * (sR - sL) / B over one second
        assert s.odom_pose.theta == pytest.approx(0.35 * -0.02 / 0.5, rel=1e-9)

    def test_rotational_bias_per_meter(self):
        s = SimState(Pose2D(), Pose2D(), drift=DriftModel(bias_rot=0.01))
        for _ in range(2000):
            s = step(s, (0.5, 0.0), 1000)
        assert s.odom_pose.theta == pytest.approx(0.01 * 1.0, rel=1e-9)
        assert s.true_pose.x == pytest.approx(1.0)

    def test_noise_is_seeded(self):
        d = DriftModel(noise_sigma_rot=0.05, noise_sigma_trans=0.02)
        out = []
        for _ in range(2):
            rng = np.random.default_rng(11)
            s = SimState(Pose2D(), Pose2D(), drift=d)
            for _ in range(200):
                s = step(s, (0.35, 0.1), 1000, rng)
            out.append(s.odom_pose)
        assert out[0] == out[1] and out[0] != s.true_pose

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            step(SimState(Pose2D(), Pose2D()), (0.1, 0), 0)


class TestTeach:
    def test_straight_line_node_count(self, line_teach):
        tmap, trace = line_teach
        assert len(tmap) == math.floor(10.0 / 0.2 + 1e-9) + 1
        gaps = [math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(tmap.poses, tmap.poses[1:])]
        assert np.allclose(gaps, 0.2, atol=1e-6)
        assert trace.true[-1, 0] >= 10.0

    def test_frames_have_texture(self, line_teach):
        counts = [n.frame.count() for n in line_teach[0].nodes]
        assert np.median(counts) > 50 and min(counts[:10]) > 50

    def test_deterministic(self, line_world, line_teach):
        tmap, trace = run_teach(line_world, LINE, Config())
        assert tmap.to_bytes() == line_teach[0].to_bytes()
        assert np.array_equal(trace.true, line_teach[1].true)

    def test_teach_drift_lands_in_map(self, line_world, line_teach):
        tmap, trace = run_teach(line_world, LINE, Config(teach_drift_bias_rot=0.01))
        end = tmap.poses[-1]
        assert abs(end.theta) > 0.05
        assert not np.allclose(trace.true[:, 2], trace.odom[:, 2])

    def test_second_pass_matches_stored_frames(self, line_world, line_teach):
        # a zero-drift pass with fresh event noise sees the same views at every node
        again, _ = run_teach(line_world, LINE, Config(seed=5))
        eng = CorrelationEngine(180, 40)
        hits = [eng.correlate(compress(a.frame, 8), compress(b.frame, 8)).delta == 0
                for a, b in zip(line_teach[0].nodes, again.nodes)]
        assert np.mean(hits) >= 0.95


class TestRepeat:
    def test_odometry_only_zero_drift(self, line_world, line_teach):
        tmap, trace = line_teach
        res = run_repeat(line_world, tmap, trace, Config(), corrections=False)
        assert res.completed and res.progress_pct == 100.0
        assert ate(trace, res.trace).mean < 0.01

    def test_odometry_only_with_drift_fails(self, line_world, line_teach):
        tmap, trace = line_teach
        res = run_repeat(line_world, tmap, trace, Config(drift_bias_rot=0.03), corrections=False)
        assert not res.completed and 0 < res.progress_pct < 100
        assert "deviated" in res.reason

    def test_odometry_only_error_grows(self, line_world, line_teach):
        tmap, trace = line_teach
        res = run_repeat(line_world, tmap, trace, Config(drift_bias_rot=0.02), corrections=False)
        lateral = np.abs(res.trace.true[:, 1])
        checkpoints = lateral[:: max(1, len(lateral) // 6)]
        assert (np.diff(checkpoints) > 0).all()

    @pytest.mark.slow
    def test_corrections_beat_odometry(self, line_world, line_teach):
        tmap, trace = line_teach
        cfg = Config(drift_bias_rot=0.01)
        corrected = run_repeat(line_world, tmap, trace, cfg, corrections=True)
        baseline = run_repeat(line_world, tmap, trace, cfg, corrections=False)
        assert corrected.completed
        assert ate(trace, corrected.trace).mean < ate(trace, baseline.trace).mean
        assert len(corrected.reports) > 0

    def test_timeout(self, line_world, line_teach):
        tmap, trace = line_teach
        res = run_repeat(line_world, tmap, trace, Config(max_time_factor=0.2), corrections=False)
        assert not res.completed and res.reason == "time limit exceeded"


class TestFiles:
    def test_world_round_trip(self, tmp_path):
        w = make_world([(0, 0), (2, 0)], seed=4)
        write_world(tmp_path / "w.txt", w)
        back = read_world(tmp_path / "w.txt")
        assert back.seed == 4 and np.array_equal(back.landmarks, w.landmarks)

    def test_path_round_trip(self, tmp_path):
        write_path(tmp_path / "p.txt", LINE)
        assert read_path(tmp_path / "p.txt") == LINE

    def test_trace_round_trip(self, tmp_path, line_teach):
        trace = line_teach[1]
        trace.to_csv(tmp_path / "t.csv")
        back = Trace.from_csv(tmp_path / "t.csv")
        assert np.array_equal(back.true, trace.true) and np.array_equal(back.t, trace.t)

    def test_world_validation(self, tmp_path):
        with pytest.raises(ValueError):
            World(np.array([[0, 0, 0, 1.5]]))
        (tmp_path / "w.txt").write_text("seed=1\n1,2,3\n")
        with pytest.raises(ValueError):
            read_world(tmp_path / "w.txt")

    def test_make_world_keeps_clear_of_path(self):
        w = make_world(LINE, seed=0)
        on_line = (w.landmarks[:, 0] > 0) & (w.landmarks[:, 0] < 10)
        assert np.abs(w.landmarks[on_line, 1]).min() >= 0.55
        assert make_world(LINE, seed=0).landmarks.tolist() == w.landmarks.tolist()
