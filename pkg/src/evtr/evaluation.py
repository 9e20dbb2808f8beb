"""Trajectory metrics and the vision-step latency benchmark.

ATE associates every teach pose with its nearest repeat pose (translation
only) and aggregates those distances. It is deliberately asymmetric: swapping
the traces answers a different question.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from evtr.controller import along_path_offset, interpolate_offset
from evtr.correlation import CorrelationEngine, pixel_offset_to_angle
from evtr.events import EventFrame, compress
from evtr.geometry import Pose2D
from evtr.topomap import TopometricMap

_CHUNK_ELEMS = 1 << 22


def _positions(trace) -> np.ndarray:
    if isinstance(trace, np.ndarray):
        arr = np.asarray(trace, dtype=np.float64)
        return arr[:, :2] if arr.ndim == 2 else arr.reshape(-1, 2)
    if hasattr(trace, "positions"):
        return np.asarray(trace.positions, dtype=np.float64)
    rows = [(p.x, p.y) if isinstance(p, Pose2D) else tuple(p)[:2] for p in trace]
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


@dataclass(frozen=True)
class AteResult:
    distances: np.ndarray
    indices: np.ndarray
    mean: float
    max: float
    rms: float

    def __len__(self) -> int:
        return self.distances.shape[0]


def ate(teach_trace, repeat_trace) -> AteResult:
    """Distance from each teach pose to the nearest repeat pose.

    Uses a chunked linear scan on squared distances, so ties resolve to the
    lowest repeat index and the result is exactly what a double loop over
    ``sqrt(dx*dx + dy*dy)`` gives.

    Raises:
        ValueError: either trace is empty.
    """
    teach, rep = _positions(teach_trace), _positions(repeat_trace)
    if teach.shape[0] == 0 or rep.shape[0] == 0:
        raise ValueError("ATE needs non-empty teach and repeat traces")
    n = teach.shape[0]
    idx = np.empty(n, dtype=np.intp)
    best = np.empty(n, dtype=np.float64)
    step = max(1, _CHUNK_ELEMS // rep.shape[0])
    for lo in range(0, n, step):
        chunk = teach[lo:lo + step]
        dx = chunk[:, 0, None] - rep[None, :, 0]
        dy = chunk[:, 1, None] - rep[None, :, 1]
        d2 = dx * dx + dy * dy
        j = np.argmin(d2, axis=1)
        idx[lo:lo + step] = j
        best[lo:lo + step] = d2[np.arange(chunk.shape[0]), j]
    dist = np.sqrt(best)
    return AteResult(dist, idx, float(dist.mean()), float(dist.max()),
                     float(np.sqrt(np.mean(dist * dist))))


def teach_prefix(teach_trace, progress_pct: float) -> np.ndarray:
    """Teach positions covering the first ``progress_pct`` percent of path length."""
    pos = _positions(teach_trace)
    seg = np.hypot(*np.diff(pos, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    limit = cum[-1] * min(100.0, max(0.0, progress_pct)) / 100.0
    return pos[: max(1, int(np.searchsorted(cum, limit, side="right")))]


@dataclass(frozen=True)
class SuccessSummary:
    completed: int
    total: int
    lengths_pct: tuple

    @property
    def rate(self) -> Fraction:
        return Fraction(self.completed, self.total)

    def __str__(self) -> str:
        return f"{self.completed}/{self.total}"


def success_rate(outcomes: Sequence) -> SuccessSummary:
    """Completed runs over total, with completed-length percentages per run.

    Accepts run results (``completed`` and ``progress_pct`` attributes) or
    ``(completed, pct)`` pairs.
    """
    if len(outcomes) == 0:
        raise ValueError("no runs to summarise")
    done, lengths = 0, []
    for o in outcomes:
        ok, pct = (o.completed, o.progress_pct) if hasattr(o, "completed") else o
        done += bool(ok)
        lengths.append(100.0 if ok else max(0.0, float(pct)))
    return SuccessSummary(done, len(outcomes), tuple(lengths))


@dataclass(frozen=True)
class BenchReport:
    """Vision-step latency samples in microseconds.

    ``hz`` is the raw step rate ``1e6 / mean``; ``loop_hz`` caps it at the
    control hop, i.e. what a closed loop fed at that hop can achieve.
    """

    samples_us: np.ndarray
    mean_us: float
    median_us: float
    p99_us: float
    hz: float
    loop_hz: float
    timer_overhead_us: float
    factor: int
    s: int
    concatenated: bool

    @property
    def overhead_ok(self) -> bool:
        return self.timer_overhead_us < 0.01 * self.median_us

    def summary(self) -> str:
        pairs = [("factor", self.factor), ("s", self.s), ("concatenated", str(self.concatenated).lower()),
                 ("iterations", self.samples_us.shape[0]), ("mean_us", f"{self.mean_us:.1f}"),
                 ("median_us", f"{self.median_us:.1f}"), ("p99_us", f"{self.p99_us:.1f}"),
                 ("rate_hz", f"{self.hz:.1f}"), ("loop_hz", f"{self.loop_hz:.1f}"),
                 ("timer_overhead_us", f"{self.timer_overhead_us:.3f}")]
        return "".join(f"{k}={v}\n" for k, v in pairs)


def _timer_overhead(n: int = 2000) -> float:
    clock = time.perf_counter_ns
    samples = np.empty(n)
    for i in range(n):
        a = clock()
        samples[i] = clock() - a
    return float(np.median(samples)) / 1000.0


def bench_vision(tmap: TopometricMap, frame_source: Optional[Sequence[EventFrame]] = None,
                 s: int = 4, factor: int = 8, iterations: int = 300, warmup: int = 20,
                 concatenated: bool = True, hop_us: int = 10_000,
                 ticks_per_goal: int = 20) -> BenchReport:
    """Time the per-tick vision step as the repeat controller runs it.

    One step compresses the current frame, correlates it against the search
    window (teach spectra cached per window, as in the controller), extracts
    shift and peak per candidate and evaluates the lateral and along-path
    offsets. The goal advances every ``ticks_per_goal`` steps so the window
    cache is refreshed at a realistic rate.
    """
    if iterations < 100:
        raise ValueError("use at least 100 iterations")
    if len(tmap) < 2:
        raise ValueError("map needs at least two nodes")
    frames = list(frame_source) if frame_source is not None else [n.frame for n in tmap.nodes]
    if not frames:
        raise ValueError("no frames to benchmark with")
    teach = [compress(n.frame, factor) for n in tmap.nodes]
    width = teach[0].width
    engine = CorrelationEngine(tmap.height, width)
    K = len(tmap)
    cache: dict = {}
    theta_prev = 0.0

    def step(i: int) -> None:
        nonlocal theta_prev
        k = 1 + (i // ticks_per_goal) % (K - 1)
        lo, hi = max(0, k - s), min(K - 1, k + s)
        rep = compress(frames[i % len(frames)], factor)
        if concatenated:
            if cache.get("key") != (lo, hi):
                cache["key"], cache["space"] = (lo, hi), engine.prepare(teach[lo:hi + 1])
            results = engine.correlate_prepared(cache["space"], rep)
        else:
            results = engine.correlate_each(teach[lo:hi + 1], rep)
        rhos = np.array([r.rho for r in results])
        theta = -math.radians(pixel_offset_to_angle(results[k - lo].delta, width, tmap.fov_deg))
        u = (i % ticks_per_goal) / ticks_per_goal
        interpolate_offset(theta_prev, theta, u)
        along_path_offset(rhos, u, float(np.median(rhos)), np.arange(lo, hi + 1) - (k - 1))
        theta_prev = theta

    for i in range(warmup):
        step(i)
    clock = time.perf_counter_ns
    samples = np.empty(iterations)
    for i in range(iterations):
        a = clock()
        step(warmup + i)
        samples[i] = clock() - a
    samples /= 1000.0
    mean = float(samples.mean())
    hz = 1e6 / mean
    return BenchReport(samples, mean, float(np.median(samples)), float(np.percentile(samples, 99)),
                       hz, min(hz, 1e6 / hop_us), _timer_overhead(), factor, s, concatenated)


def write_ate_csv(path: Union[str, Path], result: AteResult) -> None:
    with open(path, "w") as fh:
        fh.write("teach_index,repeat_index,distance_m\n")
        for j, (i, d) in enumerate(zip(result.indices.tolist(), result.distances.tolist())):
            fh.write(f"{j},{i},{d:.9g}\n")


def summary_lines(pairs: Iterable[tuple[str, object]]) -> str:
    """``key=value`` lines; floats get 6 decimals."""
    out = []
    for k, v in pairs:
        out.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
    return "\n".join(out) + "\n"
