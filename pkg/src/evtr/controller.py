"""Repeat-phase controller: odometry goal pursuit with visual corrections.

Each tick the robot's (corrected) odometry pose is compared with the current
goal from the map, giving the relative goal transform ``T_delta``. The latest
event frame is correlated with the map frames around the goal; the peak
offsets rotate ``T_delta`` (lateral correction) and the spread of peak values
across the search window rescales its translation (along-path correction).

Corrections are persistent: after they are applied, the controller stores the
pose offset that reproduces the corrected ``T_delta`` from raw odometry, so the
small per-tick gains integrate over the run instead of being recomputed away
on the next tick.

Sign convention: a positive correlation shift means the robot points right
of the taught heading, so the lateral offset fed to the controller is the
negated shift angle (counter-clockwise positive, like ``Pose2D.theta``).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from evtr.correlation import CorrelationEngine, PreparedSpace, pixel_offset_to_angle
from evtr.events import EventFrame, compress
from evtr.geometry import Pose2D, relative, rotation
from evtr.topomap import TopometricMap


class DegenerateSegmentError(ValueError):
    """Previous and current goal share the same position."""


class RunComplete(Exception):
    """Raised when ticking a controller whose goal list is exhausted."""


@dataclass
class CorrectionGains:
    g_theta: float = 1.5e-3
    g_rho: float = 1.5e-5
    rho_bar: Union[str, float] = "median"

    def __post_init__(self) -> None:
        if self.g_theta < 0 or self.g_rho < 0:
            raise ValueError("correction gains must be non-negative")
        if isinstance(self.rho_bar, str) and self.rho_bar != "median":
            raise ValueError(f"unknown threshold policy {self.rho_bar!r}")

    def threshold(self, rhos: np.ndarray) -> float:
        if self.rho_bar == "median":
            return float(np.median(rhos))
        return float(self.rho_bar)


@dataclass
class MotionParams:
    """Point-to-pose controller settings."""

    v: float = 0.35
    heading_gain: float = 2.0
    max_omega: float = 1.5
    goal_tolerance: float = 0.05


@dataclass
class GoalState:
    k: int = 1
    theta_prev: float = 0.0
    theta_curr: float = 0.0
    u: float = 0.0
    t_delta: Pose2D = field(default_factory=Pose2D)


@dataclass(frozen=True)
class CorrectionReport:
    tick: int
    t_us: int
    k: int
    u: float
    deltas: tuple
    rhos: tuple
    delta_px: int
    rho: float
    dtheta: float
    drho: float
    latency_us: int

    CSV_HEADER = "tick,t_us,k,u,delta_px,rho,dtheta_rad,drho,latency_us"

    def csv_row(self) -> str:
        return (f"{self.tick},{self.t_us},{self.k},{self.u:.9g},{self.delta_px},"
                f"{self.rho:.9g},{self.dtheta:.9g},{self.drho:.9g},{self.latency_us}")


def goal_transform(odom_pose: Pose2D, goal_pose: Pose2D) -> Pose2D:
    """Goal expressed in the robot frame: ``odom^-1 @ goal``."""
    return relative(odom_pose, goal_pose)


def interpolation_factor(prev_goal: Pose2D, curr_goal: Pose2D, current_pose: Pose2D) -> float:
    """Progress from the previous goal towards the current one.

    Projection of the robot's translation (in the previous goal's frame) onto
    the segment, divided by the squared segment length. Not clamped.
    """
    seg = relative(prev_goal, curr_goal).translation
    here = relative(prev_goal, current_pose).translation
    denom = float(seg @ seg)
    if denom == 0.0:
        raise DegenerateSegmentError("previous and current goal coincide")
    return float(seg @ here) / denom


def interpolate_offset(theta_prev: float, theta_curr: float, u: float) -> float:
    return (1.0 - u) * theta_prev + u * theta_curr


def lateral_correction(theta_prev: float, theta_curr: float, u: float, g_theta: float,
                       t_delta: Pose2D) -> Pose2D:
    """Rotate the goal about the robot by ``-g_theta * dtheta``."""
    dtheta = interpolate_offset(theta_prev, theta_curr, u)
    return rotation(-g_theta * dtheta) @ t_delta


def along_path_offset(rhos: Sequence[float], u: float, rho_bar: float,
                      offsets: Optional[Sequence[float]] = None) -> float:
    """Thresholded peak-weighted position in the window, minus progress ``u``.

    ``offsets`` gives each candidate's index relative to the reference goal;
    by default the window is taken as centred, ``-s .. +s``. Returns 0 when no
    candidate clears the threshold.
    """
    rhos = np.asarray(rhos, dtype=np.float64)
    if rhos.size == 0:
        raise ValueError("no correlation values")
    if offsets is None:
        half = (rhos.size - 1) / 2
        offsets = np.arange(rhos.size) - half
    offsets = np.asarray(offsets, dtype=np.float64)
    weights = np.maximum(0.0, rhos - rho_bar)
    total = weights.sum()
    if total <= 0.0:
        return 0.0
    return float((offsets * weights).sum() / total) - u


def apply_along_path(t_delta: Pose2D, drho: float, g_rho: float, delta_d: float) -> Pose2D:
    """Scale the goal translation by ``(|t| - g_rho * drho * delta_d) / |t|``, floored at 0."""
    norm = t_delta.norm
    if norm == 0.0:
        return t_delta
    scale = max(0.0, (norm - g_rho * drho * delta_d) / norm)
    return Pose2D(t_delta.x * scale, t_delta.y * scale, t_delta.theta)


def velocity_command(t_delta: Pose2D, params: MotionParams) -> tuple[float, float]:
    """Constant forward speed, proportional steering towards the goal position."""
    if t_delta.norm < 1e-6:
        err, v = t_delta.theta, 0.0
    else:
        err, v = math.atan2(t_delta.y, t_delta.x), params.v
    omega = max(-params.max_omega, min(params.max_omega, params.heading_gain * err))
    return v, omega


class RepeatController:
    """Drives a robot along a :class:`TopometricMap`.

    Single consumer: call :meth:`tick` once per control period with the raw
    odometry pose and (when corrections are enabled) the latest event frame.
    """

    def __init__(self, tmap: TopometricMap, gains: CorrectionGains | None = None,
                 motion: MotionParams | None = None, s: int = 4, factor: int = 8,
                 corrections: bool = True, timing: bool = False):
        if len(tmap) < 2:
            raise ValueError("a repeatable map needs at least two nodes")
        self.map = tmap
        self.gains = gains or CorrectionGains()
        self.motion = motion or MotionParams()
        self.s = s
        self.factor = factor
        self.corrections = corrections
        self.timing = timing
        self.state = GoalState()
        self.offset = Pose2D()  # world-frame correction applied to odometry
        self.done = False
        self._tick = 0
        self._goals = tmap.poses
        if corrections:
            self._teach = [compress(n.frame, factor) for n in tmap.nodes]
            self._cwidth = self._teach[0].width
            self._engine = CorrelationEngine(tmap.height, self._cwidth)
        self._window: tuple[int, int] | None = None
        self._prepared: PreparedSpace | None = None

    @property
    def k(self) -> int:
        return self.state.k

    def corrected_pose(self, odom_pose: Pose2D) -> Pose2D:
        return self.offset @ odom_pose

    def progress(self) -> float:
        """Fraction of the map's path length covered by reached goals."""
        poses = self._goals
        seg = [math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(poses, poses[1:])]
        total = sum(seg)
        reached = min(self.state.k, len(poses)) - 1
        return sum(seg[:reached]) / total if total > 0 else 1.0

    def _u(self, pose: Pose2D) -> float:
        k = self.state.k
        try:
            return interpolation_factor(self._goals[k - 1], self._goals[k], pose)
        except DegenerateSegmentError:
            return 1.0

    def _advance(self, pose: Pose2D) -> None:
        st = self.state
        while st.k < len(self._goals):
            goal = self._goals[st.k]
            close = math.hypot(goal.x - pose.x, goal.y - pose.y) < self.motion.goal_tolerance
            if not (close or self._u(pose) >= 1.0):
                return
            st.theta_prev = st.theta_curr
            st.k += 1
        self.done = True

    def _prepare(self, lo: int, hi: int) -> PreparedSpace:
        if self._window != (lo, hi):
            self._prepared = self._engine.prepare(self._teach[lo:hi + 1])
            self._window = (lo, hi)
        return self._prepared

    def tick(self, odom_pose: Pose2D, frame: EventFrame | None = None,
             t_us: int = 0) -> tuple[tuple[float, float], CorrectionReport]:
        if self.done:
            raise RunComplete("goal list exhausted")
        st = self.state
        pose = self.corrected_pose(odom_pose)
        self._advance(pose)
        tick = self._tick
        self._tick += 1
        if self.done:
            report = CorrectionReport(tick, t_us, st.k, 1.0, (), (), 0, 0.0, 0.0, 0.0, 0)
            return (0.0, 0.0), report

        k = st.k
        goal = self._goals[k]
        t_delta = goal_transform(pose, goal)
        u = self._u(pose)
        st.u = u
        deltas: tuple = ()
        rhos: tuple = ()
        delta_px, rho_k, dtheta, drho, latency = 0, 0.0, 0.0, 0.0, 0

        if self.corrections:
            if frame is None:
                raise ValueError("corrections enabled but no event frame supplied")
            start = time.perf_counter_ns() if self.timing else 0
            lo, hi = max(0, k - self.s), min(len(self._goals) - 1, k + self.s)
            results = self._engine.correlate_prepared(self._prepare(lo, hi), compress(frame, self.factor))
            deltas = tuple(r.delta for r in results)
            rho_arr = np.array([r.rho for r in results])
            rhos = tuple(rho_arr.tolist())
            st.theta_curr = -math.radians(
                pixel_offset_to_angle(deltas[k - lo], self._cwidth, self.map.fov_deg))
            # gross overshoot: do not extrapolate corrections
            u_w = min(1.0, max(0.0, u)) if (u < -0.5 or u > 1.5) else u
            dtheta = interpolate_offset(st.theta_prev, st.theta_curr, u_w)
            offsets = np.arange(lo, hi + 1) - (k - 1)
            drho = along_path_offset(rho_arr, u_w, self.gains.threshold(rho_arr), offsets)
            if self.timing:
                latency = (time.perf_counter_ns() - start) // 1000
            prev = self._goals[k - 1]
            spacing = math.hypot(goal.x - prev.x, goal.y - prev.y) or self.map.delta_d
            raw = t_delta
            t_delta = lateral_correction(st.theta_prev, st.theta_curr, u_w, self.gains.g_theta, t_delta)
            t_delta = apply_along_path(t_delta, drho, self.gains.g_rho, spacing)
            if t_delta != raw:
                # persist: the corrected belief must reproduce t_delta from raw odometry
                believed = goal @ t_delta.inverse()
                self.offset = believed @ odom_pose.inverse()
            delta_px, rho_k = deltas[k - lo] * self.factor, rhos[k - lo]

        st.t_delta = t_delta
        report = CorrectionReport(tick, t_us, k, u, deltas, rhos, delta_px, rho_k,
                                  dtheta, drho, latency)
        return velocity_command(t_delta, self.motion), report


def control_tick(controller: RepeatController, odom_pose: Pose2D, frame: EventFrame,
                 t_us: int = 0) -> tuple[tuple[float, float], CorrectionReport]:
    return controller.tick(odom_pose, frame, t_us)


def odom_only_tick(controller: RepeatController, odom_pose: Pose2D) -> tuple[float, float]:
    """Baseline tick: the controller must have been built with ``corrections=False``."""
    if controller.corrections:
        raise ValueError("controller has visual corrections enabled")
    cmd, _ = controller.tick(odom_pose)
    return cmd
