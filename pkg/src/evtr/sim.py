"""Deterministic planar simulator: differential-drive robot, point-landmark
world and a forward-facing event camera.

Events come only from apparent motion: between consecutive micro-steps each
visible landmark's projection is followed across pixel boundaries and every
pixel it enters fires with the landmark's salience probability. A stationary
camera therefore produces no events at all.

All randomness flows from ``numpy.random.SeedSequence([world_seed, run_seed,
phase, stream])`` so teach and repeat runs are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from evtr.config import Config, DriftModel
from evtr.controller import RepeatController, CorrectionReport
from evtr.events import EventStream, SlidingAccumulator
from evtr.geometry import Pose2D, wrap_angle
from evtr.topomap import TopometricMap

__all__ = [
    "World", "PinholeCamera", "SimState", "DriftModel", "Trace", "RunResult",
    "make_world", "read_world", "write_world", "read_path", "write_path",
    "step", "render_events", "run_teach", "run_repeat", "SimulationError",
]

_PHASES = {"teach": 1, "repeat": 2}
_STREAM_EVENTS, _STREAM_DRIFT, _STREAM_SPURIOUS = 1, 2, 3
CULL_RADIUS = 30.0


class SimulationError(RuntimeError):
    pass


@dataclass
class World:
    """Landmarks as rows ``(x, y, z, salience)``; ``z`` is height relative to the camera."""

    landmarks: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        lm = np.asarray(self.landmarks, dtype=np.float64).reshape(-1, 4)
        if lm.shape[0] < 1:
            raise ValueError("world needs at least one landmark")
        if not np.isfinite(lm).all():
            raise ValueError("landmark coordinates must be finite")
        if ((lm[:, 3] < 0) | (lm[:, 3] > 1)).any():
            raise ValueError("salience must lie in [0, 1]")
        self.landmarks = lm
        self._tree = cKDTree(lm[:, :2])

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        lm = self.landmarks
        return (lm[:, 0].min(), lm[:, 0].max(), lm[:, 1].min(), lm[:, 1].max())

    def near(self, x: float, y: float, radius: float) -> np.ndarray:
        return np.sort(np.asarray(self._tree.query_ball_point([x, y], radius), dtype=np.intp))


@dataclass(frozen=True)
class PinholeCamera:
    """Forward-facing camera at the robot origin (x forward, y left, z up)."""

    fov_deg: float = 36.0
    width: int = 320
    height: int = 180
    near: float = 0.2

    def __post_init__(self) -> None:
        if not 0 < self.fov_deg < 180:
            raise ValueError("field of view must lie in (0, 180) degrees")

    @property
    def focal(self) -> float:
        return (self.width / 2) / math.tan(math.radians(self.fov_deg) / 2)

    def project(self, xs, ys, thetas, points: np.ndarray):
        """Project ``points`` (N, 3) from each pose; returns ``u, v, inside`` of shape (P, N)."""
        xs, ys, ths = (np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in (xs, ys, thetas))
        dx = points[None, :, 0] - xs[:, None]
        dy = points[None, :, 1] - ys[:, None]
        c, s = np.cos(ths)[:, None], np.sin(ths)[:, None]
        fwd = c * dx + s * dy
        left = -s * dx + c * dy
        ahead = fwd > self.near
        safe = np.where(ahead, fwd, 1.0)
        f = self.focal
        u = self.width / 2 - f * left / safe
        v = self.height / 2 - f * points[None, :, 2] / safe
        inside = ahead & (u >= 0) & (u < self.width) & (v >= 0) & (v < self.height)
        return u, v, inside


@dataclass(frozen=True)
class SimState:
    true_pose: Pose2D
    odom_pose: Pose2D
    t: int = 0
    drift: DriftModel = field(default_factory=DriftModel)


def _integrate(pose: Pose2D, v: float, omega: float, dt: float) -> Pose2D:
    th = pose.theta
    if abs(omega) < 1e-9:
        return Pose2D(pose.x + v * dt * math.cos(th), pose.y + v * dt * math.sin(th), th)
    th1 = th + omega * dt
    r = v / omega
    return Pose2D(pose.x + r * (math.sin(th1) - math.sin(th)),
                  pose.y - r * (math.cos(th1) - math.cos(th)), th1)


def step(state: SimState, command: tuple[float, float], dt_us: int,
         rng: Optional[np.random.Generator] = None) -> SimState:
    """Advance ground truth by unicycle kinematics and odometry through the drift model."""
    if dt_us <= 0:
        raise ValueError("dt must be positive")
    v, omega = command
    dt = dt_us * 1e-6
    true = _integrate(state.true_pose, v, omega, dt)
    d = state.drift
    if d.is_identity:
        odom = _integrate(state.odom_pose, v, omega, dt)
    else:
        sl, sr = d.wheel_scale_left, d.wheel_scale_right
        # left/right wheel speeds v -+ omega*B/2, each scaled, recombined
        v_o = v * (sl + sr) / 2 + omega * d.track_width * (sr - sl) / 4
        w_o = omega * (sl + sr) / 2 + v * (sr - sl) / d.track_width + d.bias_rot * abs(v_o)
        odom = _integrate(state.odom_pose, v_o, w_o, dt)
        if rng is None:
            rng = np.random.default_rng(0)
        z_rot, z_trans = rng.standard_normal(2)
        root = math.sqrt(abs(v_o) * dt)
        dtrans = d.noise_sigma_trans * root * z_trans
        odom = Pose2D(odom.x + dtrans * math.cos(odom.theta),
                      odom.y + dtrans * math.sin(odom.theta),
                      odom.theta + d.noise_sigma_rot * root * z_rot)
    return SimState(true, odom, state.t + dt_us, d)


def _render(points: np.ndarray, salience: np.ndarray, camera: PinholeCamera,
            xs, ys, ths, ts, rng: np.random.Generator) -> EventStream:
    w, h = camera.width, camera.height
    if points.shape[0] == 0 or len(ts) < 2:
        return EventStream.empty(w, h)
    u, v, inside = camera.project(xs, ys, ths, points)
    both = inside[:-1] & inside[1:]
    cu, cv = np.floor(u).astype(np.int64), np.floor(v).astype(np.int64)
    du, dv = cu[1:] - cu[:-1], cv[1:] - cv[:-1]
    n = np.where(both, np.maximum(np.abs(du), np.abs(dv)), 0)
    step_idx, lm_idx = np.nonzero(n)
    if step_idx.size == 0:
        return EventStream.empty(w, h)
    counts = n[step_idx, lm_idx]
    total = int(counts.sum())
    owner = np.repeat(np.arange(counts.size), counts)
    k = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts) + 1
    frac = k / counts[owner]
    si, li = step_idx[owner], lm_idx[owner]
    col = cu[si, li] + np.rint(frac * du[si, li]).astype(np.int64)
    row = cv[si, li] + np.rint(frac * dv[si, li]).astype(np.int64)
    ts = np.asarray(ts, dtype=np.int64)
    span = ts[si + 1] - ts[si]
    t = ts[si] + np.ceil(frac * span).astype(np.int64) - 1
    pol = np.where((du[si, li] > 0) | ((du[si, li] == 0) & (dv[si, li] > 0)), 1, -1)
    keep = rng.random(total) < salience[li]
    order = np.argsort(t[keep], kind="stable")
    return EventStream(t[keep][order], col[keep][order], row[keep][order], pol[keep][order], w, h)


def render_events(world: World, camera: PinholeCamera, pose_t0: Pose2D, pose_t1: Pose2D,
                  t0_us: int, t1_us: int, rng: np.random.Generator,
                  microstep_us: int = 1000, cull_radius: Optional[float] = None) -> EventStream:
    """Events for a camera moving linearly from ``pose_t0`` to ``pose_t1`` over ``[t0, t1)``."""
    if not (pose_t0.is_finite() and pose_t1.is_finite()):
        raise ValueError("poses must be finite")
    n = max(1, -(-(t1_us - t0_us) // microstep_us))
    a = np.linspace(0.0, 1.0, n + 1)
    xs = pose_t0.x + a * (pose_t1.x - pose_t0.x)
    ys = pose_t0.y + a * (pose_t1.y - pose_t0.y)
    ths = pose_t0.theta + a * wrap_angle(pose_t1.theta - pose_t0.theta)
    ts = np.minimum(t0_us + np.arange(n + 1) * microstep_us, t1_us)
    lm = world.landmarks
    if cull_radius is not None:
        lm = lm[world.near(pose_t0.x, pose_t0.y, cull_radius)]
    return _render(lm[:, :3], lm[:, 3], camera, xs, ys, ths, ts, rng)


# --------------------------------------------------------------------------
# file formats


def write_world(path: Union[str, Path], world: World) -> None:
    lines = [f"seed={world.seed}"]
    lines += [f"{x!r},{y!r},{z!r},{s!r}" for x, y, z, s in world.landmarks.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_world(path: Union[str, Path]) -> World:
    seed, rows = 0, []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("seed="):
            seed = int(line[5:])
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected x,y,z,salience")
        rows.append([float(p) for p in parts])
    if not rows:
        raise ValueError(f"{path}: no landmarks")
    return World(np.array(rows), seed)


def write_path(path: Union[str, Path], waypoints: Sequence[tuple[float, float]]) -> None:
    Path(path).write_text("".join(f"{x!r},{y!r}\n" for x, y in waypoints))


def read_path(path: Union[str, Path]) -> list[tuple[float, float]]:
    out = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected x,y")
        out.append((float(parts[0]), float(parts[1])))
    return out


def make_world(waypoints: Sequence[tuple[float, float]], seed: int = 0,
               pole_spacing: float = 0.25, lateral: tuple[float, float] = (0.6, 3.0),
               clearance: float = 0.55, points_per_pole: int = 16,
               z_range: tuple[float, float] = (-0.4, 1.0),
               salience: tuple[float, float] = (0.6, 1.0)) -> World:
    """Poles of stacked point landmarks along both sides of a path.

    Poles closer than ``clearance`` to any path segment are dropped so the
    robot never drives through one.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))
    wp = np.asarray(waypoints, dtype=np.float64)
    bases = []
    for a, b in zip(wp[:-1], wp[1:]):
        seg = b - a
        length = float(np.hypot(*seg))
        if length == 0:
            continue
        tangent, normal = seg / length, np.array([-seg[1], seg[0]]) / length
        extend = lateral[1]
        along = np.arange(-extend, length + extend, pole_spacing)
        for side in (-1.0, 1.0):
            jitter = rng.uniform(-0.4, 0.4, along.size) * pole_spacing
            off = rng.uniform(*lateral, along.size)
            bases.append(a + np.outer(along + jitter, tangent) + side * np.outer(off, normal))
    base = np.vstack(bases)
    dist = _distance_to_polyline(base, wp)
    base = base[dist >= clearance]
    z = np.linspace(*z_range, points_per_pole)
    z_jit = rng.uniform(-0.02, 0.02, (base.shape[0], points_per_pole))
    sal = rng.uniform(*salience, (base.shape[0], points_per_pole))
    pts = np.column_stack([
        np.repeat(base, points_per_pole, axis=0),
        (z[None, :] + z_jit).ravel(),
        sal.ravel(),
    ])
    return World(pts, seed)


def _distance_to_polyline(points: np.ndarray, wp: np.ndarray) -> np.ndarray:
    best = np.full(points.shape[0], np.inf)
    for a, b in zip(wp[:-1], wp[1:]):
        seg = b - a
        denom = float(seg @ seg)
        if denom == 0:
            continue
        t = np.clip(((points - a) @ seg) / denom, 0.0, 1.0)
        d = np.hypot(*(points - (a + t[:, None] * seg)).T)
        best = np.minimum(best, d)
    return best


# --------------------------------------------------------------------------
# runs


@dataclass
class Trace:
    """Ground-truth and odometry poses sampled once per control period."""

    t: np.ndarray
    true: np.ndarray  # (n, 3) x, y, theta
    odom: np.ndarray

    CSV_HEADER = "t_us,x,y,theta,odo_x,odo_y,odo_theta"

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.true[:, :2]

    def poses(self) -> list[Pose2D]:
        return [Pose2D(*row) for row in self.true.tolist()]

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for t, a, b in zip(self.t.tolist(), self.true.tolist(), self.odom.tolist()):
                fh.write(f"{t},{a[0]!r},{a[1]!r},{a[2]!r},{b[0]!r},{b[1]!r},{b[2]!r}\n")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "Trace":
        with open(path) as fh:
            header = fh.readline().strip()
            if header != cls.CSV_HEADER:
                raise ValueError(f"{path}: unexpected trace header {header!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.size == 0:
            raise ValueError(f"{path}: empty trace")
        return cls(data[:, 0].astype(np.int64), data[:, 1:4].copy(), data[:, 4:7].copy())

    @classmethod
    def from_rows(cls, rows: list) -> "Trace":
        arr = np.array(rows, dtype=np.float64).reshape(-1, 7)
        return cls(arr[:, 0].astype(np.int64), arr[:, 1:4], arr[:, 4:7])


@dataclass
class RunResult:
    trace: Trace
    reports: list[CorrectionReport]
    completed: bool
    progress_pct: float
    reason: str = ""

    @property
    def outcome(self) -> str:
        return "completed" if self.completed else "failed"


def _rngs(world: World, cfg: Config, phase: str):
    base = [world.seed, cfg.seed, _PHASES[phase]]
    return tuple(np.random.default_rng(np.random.SeedSequence(base + [s]))
                 for s in (_STREAM_EVENTS, _STREAM_DRIFT, _STREAM_SPURIOUS))


class _Driver:
    """Steps robot, renders events and keeps the sliding event window."""

    def __init__(self, world: World, cfg: Config, phase: str, start: Pose2D, render: bool):
        self.world = world
        self.cfg = cfg
        self.camera = PinholeCamera(cfg.fov_deg, cfg.width, cfg.height)
        self.ev_rng, self.drift_rng, self.sp_rng = _rngs(world, cfg, phase)
        self.state = SimState(start, start, 0, cfg.drift(phase))
        self.acc = SlidingAccumulator(cfg.width, cfg.height)
        self.render = render
        self.rows: list = []

    def log(self) -> None:
        s = self.state
        self.rows.append((s.t, *s.true_pose.as_tuple(), *s.odom_pose.as_tuple()))

    def advance(self, command, n_micro: int) -> list[SimState]:
        """Simulate ``n_micro`` micro-steps; returns the states after each one."""
        cfg = self.cfg
        states = [self.state]
        for _ in range(n_micro):
            states.append(step(states[-1], command, cfg.microstep_us, self.drift_rng))
        self.state = states[-1]
        return states

    def _visible(self, poses: np.ndarray) -> np.ndarray:
        """Landmarks that can be in view at any pose of the hop (conservative)."""
        x0, y0, th0 = poses[0]
        reach = float(np.hypot(*(poses[:, :2] - poses[0, :2]).T).max())
        turn = float(np.abs(np.unwrap(poses[:, 2]) - th0).max())
        lm = self.world.landmarks
        dx, dy = lm[:, 0] - x0, lm[:, 1] - y0
        c, s = math.cos(th0), math.sin(th0)
        fwd, left = c * dx + s * dy, -s * dx + c * dy
        half = math.radians(self.cfg.fov_deg) / 2 + turn + 0.02
        slack = reach + 0.05
        ok = (fwd > self.camera.near - slack) & (fwd < CULL_RADIUS)
        if half < math.pi / 2:
            ok &= np.abs(left) <= math.tan(half) * np.maximum(fwd, 0.0) + slack / math.cos(half)
        return np.flatnonzero(ok)

    def events_for(self, states: list[SimState]) -> EventStream:
        cfg = self.cfg
        w, h = cfg.width, cfg.height
        if not self.render:
            return EventStream.empty(w, h)
        poses = np.array([s.true_pose.as_tuple() for s in states])
        lm = self.world.landmarks[self._visible(poses)]
        ths = np.unwrap(poses[:, 2])
        ts = [s.t for s in states]
        ev = _render(lm[:, :3], lm[:, 3], self.camera, poses[:, 0], poses[:, 1], ths, ts, self.ev_rng)
        if cfg.spurious_rate > 0:
            span = ts[-1] - ts[0]
            n = int(self.sp_rng.poisson(cfg.spurious_rate * span / cfg.tau_us))
            if n:
                t = np.sort(self.sp_rng.integers(ts[0], ts[-1], n))
                su = self.sp_rng.integers(0, w, n)
                sv = self.sp_rng.integers(0, h, n)
                sp = self.sp_rng.choice(np.array([-1, 1]), n)
                ev = EventStream.concatenate([ev, EventStream(t, su, sv, sp, w, h)], w, h)
                order = np.argsort(ev.t, kind="stable")
                ev = EventStream(ev.t[order], ev.u[order], ev.v[order], ev.p[order], w, h)
        return ev


def _path_geometry(waypoints):
    wp = np.asarray(waypoints, dtype=np.float64)
    if wp.ndim != 2 or wp.shape[0] < 2:
        raise ValueError("path needs at least two waypoints")
    seg = np.diff(wp, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    if (lengths == 0).any():
        raise SimulationError("path contains repeated waypoints")
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    return wp, seg, lengths, cum


def _project_on_path(wp, seg, lengths, cum, x, y) -> float:
    best_d, best_s = np.inf, 0.0
    for i in range(seg.shape[0]):
        t = ((x - wp[i, 0]) * seg[i, 0] + (y - wp[i, 1]) * seg[i, 1]) / lengths[i] ** 2
        t = min(1.0, max(0.0, t)) if 0 < i < seg.shape[0] - 1 else t
        if i == 0:
            t = min(t, 1.0)
        if i == seg.shape[0] - 1:
            t = max(t, 0.0)
        px, py = wp[i] + t * seg[i]
        d = math.hypot(x - px, y - py)
        if d < best_d - 1e-12:
            best_d, best_s = d, cum[i] + t * lengths[i]
    return best_s


def _point_at(wp, seg, lengths, cum, s: float) -> np.ndarray:
    if s >= cum[-1]:
        return wp[-1] + seg[-1] / lengths[-1] * (s - cum[-1])
    i = max(0, int(np.searchsorted(cum, s, side="right")) - 1)
    return wp[i] + seg[i] / lengths[i] * (s - cum[i])


def _pure_pursuit(pose: Pose2D, target: np.ndarray, v: float, max_omega: float) -> tuple[float, float]:
    dx, dy = target[0] - pose.x, target[1] - pose.y
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    lx, ly = c * dx + s * dy, -s * dx + c * dy
    dist2 = lx * lx + ly * ly
    if dist2 == 0:
        return v, 0.0
    omega = v * 2.0 * ly / dist2
    return v, max(-max_omega, min(max_omega, omega))


def _crossing(last: Pose2D, a: Pose2D, b: Pose2D, delta_d: float, delta_alpha: float) -> float:
    """Fraction of the a->b micro-step at which a recording threshold is met."""
    alphas = [1.0]
    qx, qy = a.x - last.x, a.y - last.y
    dx, dy = b.x - a.x, b.y - a.y
    aa = dx * dx + dy * dy
    if aa > 0 and math.hypot(b.x - last.x, b.y - last.y) >= delta_d:
        bb = 2 * (qx * dx + qy * dy)
        cc = qx * qx + qy * qy - delta_d * delta_d
        alphas.append((-bb + math.sqrt(max(0.0, bb * bb - 4 * aa * cc))) / (2 * aa))
    dth = wrap_angle(b.theta - a.theta)
    turned0 = wrap_angle(a.theta - last.theta)
    if dth != 0 and abs(wrap_angle(b.theta - last.theta)) >= delta_alpha:
        target = math.copysign(delta_alpha, dth)
        alphas.append((target - turned0) / dth)
    return min(1.0, max(0.0, min(alphas)))


def _lerp(a: Pose2D, b: Pose2D, f: float) -> Pose2D:
    return Pose2D(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y),
                  a.theta + f * wrap_angle(b.theta - a.theta))


def _start_pose(waypoints) -> tuple[Pose2D, Pose2D]:
    wp = np.asarray(waypoints, dtype=np.float64)
    heading = math.atan2(wp[1, 1] - wp[0, 1], wp[1, 0] - wp[0, 0])
    return Pose2D(wp[0, 0], wp[0, 1], heading), Pose2D(0, 0, heading)


def run_teach(world: World, waypoints: Sequence[tuple[float, float]],
              cfg: Config) -> tuple[TopometricMap, Trace]:
    """Drive the path at constant speed and record a map keyed to odometry.

    The robot starts one accumulation window behind the first waypoint so the
    first node already has a full event frame; node 0 is recorded on arrival
    at the first waypoint.
    """
    wp, seg, lengths, cum = _path_geometry(waypoints)
    first, _ = _start_pose(wp)
    pre = cfg.v * cfg.tau_us * 1e-6
    start = Pose2D(first.x - pre * math.cos(first.theta), first.y - pre * math.sin(first.theta),
                   first.theta)
    drv = _Driver(world, cfg, "teach", start, render=True)
    tmap = TopometricMap(cfg.width, cfg.height, cfg.tau_us, cfg.delta_d, cfg.delta_alpha, cfg.fov_deg)
    n_hop = cfg.control_hop_us // cfg.microstep_us
    total = cum[-1]
    time_limit = int(cfg.max_time_factor * (total + pre) / cfg.v * 1e6) + cfg.tau_us

    # pre-roll: straight approach, events only
    n_pre = -(-cfg.tau_us // cfg.microstep_us)
    states = drv.advance((cfg.v, 0.0), n_pre)
    drv.acc.stamp(drv.events_for(states))
    last = drv.state.odom_pose
    tmap.record(drv.acc.frame(drv.state.t, cfg.tau_us), last)
    drv.log()

    while True:
        pose = drv.state.true_pose
        progress = _project_on_path(wp, seg, lengths, cum, pose.x, pose.y)
        if progress >= total:
            break
        if drv.state.t > time_limit:
            raise SimulationError("teach run did not reach the final waypoint")
        target = _point_at(wp, seg, lengths, cum, progress + cfg.lookahead)
        cmd = _pure_pursuit(pose, target, cfg.v, cfg.max_omega)
        states = drv.advance(cmd, n_hop)
        ev = drv.events_for(states)
        done_upto = 0
        for i in range(1, len(states)):
            odom = states[i].odom_pose
            if not _records(last, odom, tmap):
                continue
            cut = int(np.searchsorted(ev.t, states[i].t))
            drv.acc.stamp(_slice(ev, done_upto, cut))
            done_upto = cut
            f = _crossing(last, states[i - 1].odom_pose, odom, tmap.delta_d, tmap.delta_alpha)
            last = _lerp(states[i - 1].odom_pose, odom, f)
            tmap.record(drv.acc.frame(states[i].t, cfg.tau_us), last)
            pose_i = states[i].true_pose
            if _project_on_path(wp, seg, lengths, cum, pose_i.x, pose_i.y) >= total:
                break
        drv.acc.stamp(_slice(ev, done_upto, len(ev)))
        drv.log()
    return tmap, Trace.from_rows(drv.rows)


def _records(last: Pose2D, odom: Pose2D, tmap: TopometricMap) -> bool:
    from evtr.topomap import should_record

    return should_record(last, odom, tmap.delta_d, tmap.delta_alpha)


def _slice(ev: EventStream, lo: int, hi: int) -> EventStream:
    return EventStream(ev.t[lo:hi], ev.u[lo:hi], ev.v[lo:hi], ev.p[lo:hi], ev.width, ev.height)


def run_repeat(world: World, tmap: TopometricMap, teach_trace: Trace, cfg: Config,
               corrections: bool = True) -> RunResult:
    """Repeat the taught route from the teach start pose.

    Fails when the true pose strays more than ``failure_radius`` from the
    teach ground truth or when the run exceeds ``max_time_factor`` times the
    teach duration.
    """
    if len(tmap) < 2:
        raise ValueError("map has fewer than two nodes")
    start = Pose2D(*teach_trace.true[0]) if len(teach_trace) else Pose2D()
    ctrl = RepeatController(tmap, cfg.gains(), cfg.motion(), cfg.s, cfg.M, corrections, cfg.timing)
    drv = _Driver(world, cfg, "repeat", start, render=corrections)
    teach_tree = cKDTree(teach_trace.positions)
    n_hop = cfg.control_hop_us // cfg.microstep_us
    time_limit = int(cfg.max_time_factor * max(int(teach_trace.t[-1]), cfg.tau_us))

    n_pre = -(-cfg.tau_us // cfg.microstep_us)
    states = drv.advance((cfg.v, 0.0), n_pre)
    drv.acc.stamp(drv.events_for(states))
    drv.log()

    reports: list[CorrectionReport] = []
    completed, reason = False, ""
    while True:
        s = drv.state
        frame = drv.acc.frame(s.t, cfg.tau_us) if corrections else None
        cmd, report = ctrl.tick(s.odom_pose, frame, s.t)
        if ctrl.done:
            completed = True
            break
        reports.append(report)
        states = drv.advance(cmd, n_hop)
        drv.acc.stamp(drv.events_for(states))
        drv.log()
        p = drv.state.true_pose
        dist, _ = teach_tree.query([p.x, p.y])
        if dist > cfg.failure_radius:
            reason = f"deviated {dist:.3f} m from the taught path"
            break
        if drv.state.t > time_limit:
            reason = "time limit exceeded"
            break
    pct = 100.0 if completed else 100.0 * ctrl.progress()
    return RunResult(Trace.from_rows(drv.rows), reports, completed, pct, reason)
