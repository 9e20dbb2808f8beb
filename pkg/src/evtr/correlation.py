"""Horizontal cross-correlation of event frames in the Fourier domain.

For a teach frame ``T`` and a repeat frame ``R`` of equal shape the score for
a horizontal shift ``d`` is::

    scores[d] = sum_rows sum_u T[row, u + d] * R[row, u]

with out-of-frame pixels treated as zero. Shifts are reported from the image
centre, ``d`` in ``[-w//2, w - w//2)``. A positive ``d`` means the repeat view's
content appears shifted left relative to the teach view, i.e. the robot is
pointing to the right of the taught heading.

Scores are computed through zero-padded real FFTs along rows. Because only
horizontal shifts are scored, the row products are summed in the frequency
domain and a single 1-D inverse transform is taken per call. Frames with
integer pixels give integer scores, so those are rounded after the inverse
transform.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import fft as sfft

from evtr.events import CompressedFrame, EventFrame

FrameLike = Union[EventFrame, CompressedFrame, np.ndarray]


def as_array(frame: FrameLike) -> np.ndarray:
    """Float64 ``(rows, columns)`` view of any supported frame type."""
    if isinstance(frame, EventFrame):
        return frame.pixels.astype(np.float64)
    if isinstance(frame, CompressedFrame):
        return frame.values.astype(np.float64)
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("frames must be 2-D")
    return arr


def _unit_of(frame: FrameLike):
    if isinstance(frame, CompressedFrame):
        return ("compressed", frame.factor)
    if isinstance(frame, EventFrame):
        return ("binary", 1)
    return ("array", None)


def _is_integral(frame: FrameLike) -> bool:
    if isinstance(frame, (EventFrame, CompressedFrame)):
        return True
    return np.asarray(frame).dtype.kind in "biu"


def shift_range(width: int) -> tuple[int, int]:
    """Half-open range of reported shifts for a frame ``width`` columns wide."""
    return -(width // 2), width - width // 2


@dataclass(frozen=True, eq=False)
class CorrelationResult:
    """Scores over all reported shifts plus the peak.

    ``scores[i]`` belongs to shift ``offsets[i]``; ``delta`` is the peak shift
    and ``rho`` the peak score.
    """

    scores: np.ndarray
    delta: int
    rho: float

    @property
    def offsets(self) -> np.ndarray:
        lo, hi = shift_range(self.scores.shape[0])
        return np.arange(lo, hi)

    def score_at(self, shift: int) -> float:
        lo, _ = shift_range(self.scores.shape[0])
        return float(self.scores[shift - lo])


@dataclass(frozen=True)
class SearchSpace:
    """Candidate teach frames around the current goal ``k``."""

    candidates: tuple
    indices: tuple
    k: int
    s: int

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("search space is empty")
        if len(self.candidates) != len(self.indices):
            raise ValueError("one index per candidate required")
        if list(self.indices) != list(range(self.indices[0], self.indices[0] + len(self.indices))):
            raise ValueError("search space indices must be contiguous and ascending")

    def __len__(self) -> int:
        return len(self.candidates)


def peak(scores: np.ndarray) -> tuple[int, float]:
    """Peak shift and value; ties go to the shift closest to zero."""
    lo, _ = shift_range(scores.shape[0])
    rho = scores.max()
    tied = np.flatnonzero(scores == rho) + lo
    delta = int(tied[np.argmin(np.abs(tied))])
    return delta, float(rho)


def _result(scores: np.ndarray) -> CorrelationResult:
    delta, rho = peak(scores)
    scores.setflags(write=False)
    return CorrelationResult(scores, delta, rho)


class PreparedSpace:
    """Spectrum of a horizontally concatenated set of teach frames."""

    __slots__ = ("spectrum", "count", "length", "gather", "integral")

    def __init__(self, spectrum, count, length, gather, integral=False):
        self.spectrum = spectrum
        self.count = count
        self.length = length
        self.gather = gather
        self.integral = integral


class CorrelationEngine:
    """Correlator bound to one frame geometry.

    Holds transform sizes and gather indices for every search-space size seen
    so far. Not meant to be shared between threads; create one per worker
    (construction is cheap).
    """

    def __init__(self, height: int, width: int, workers: int = 1):
        if height <= 0 or width <= 0:
            raise ValueError("frame geometry must be positive")
        self.height = height
        self.width = width
        self.workers = workers
        # each segment is padded to twice its width so neighbours never leak
        # into another segment's shift window
        self.segment = 2 * width
        self._layouts: dict[int, tuple[int, np.ndarray]] = {}

    def _layout(self, count: int) -> tuple[int, np.ndarray]:
        layout = self._layouts.get(count)
        if layout is None:
            length = sfft.next_fast_len(count * self.segment, real=True)
            lo, hi = shift_range(self.width)
            gather = (np.arange(count)[:, None] * self.segment + np.arange(lo, hi)[None, :]) % length
            layout = (length, gather)
            self._layouts[count] = layout
        return layout

    def _check(self, arr: np.ndarray) -> None:
        if arr.shape != (self.height, self.width):
            raise ValueError(
                f"frame shape {arr.shape} does not match engine geometry "
                f"{(self.height, self.width)}")

    def prepare(self, teach_frames: Sequence[FrameLike]) -> PreparedSpace:
        """Forward transform of the concatenated teach frames."""
        if len(teach_frames) == 0:
            raise ValueError("search space is empty")
        count = len(teach_frames)
        length, gather = self._layout(count)
        extended = np.zeros((self.height, length))
        for j, frame in enumerate(teach_frames):
            arr = as_array(frame)
            self._check(arr)
            extended[:, j * self.segment: j * self.segment + self.width] = arr
        spectrum = sfft.rfft(extended, axis=1, workers=self.workers)
        integral = all(_is_integral(f) for f in teach_frames)
        return PreparedSpace(spectrum, count, length, gather, integral)

    def correlate_prepared(self, prepared: PreparedSpace, repeat: FrameLike) -> list[CorrelationResult]:
        arr = as_array(repeat)
        self._check(arr)
        teach_spec = prepared.spectrum
        live = arr.any(axis=1)
        if not live.all():
            # empty repeat rows contribute nothing to the row sum
            arr, teach_spec = arr[live], teach_spec[live]
        rspec = sfft.rfft(arr, n=prepared.length, axis=1, workers=self.workers)
        summed = np.einsum("rf,rf->f", teach_spec, rspec.conj())
        corr = sfft.irfft(summed, n=prepared.length, workers=self.workers)
        if prepared.integral and _is_integral(repeat):
            # integer frames give integer sums; drop transform round-off so ties are exact
            corr = np.rint(corr)
        return [_result(row) for row in corr[prepared.gather]]

    def correlate_many(self, teach_frames: Sequence[FrameLike], repeat: FrameLike) -> list[CorrelationResult]:
        """All candidates in one forward/product/inverse pass."""
        return self.correlate_prepared(self.prepare(teach_frames), repeat)

    def correlate(self, teach: FrameLike, repeat: FrameLike) -> CorrelationResult:
        return self.correlate_many([teach], repeat)[0]

    def correlate_each(self, teach_frames: Sequence[FrameLike], repeat: FrameLike) -> list[CorrelationResult]:
        """One transform pair per candidate; the reference for the concatenated path."""
        if len(teach_frames) == 0:
            raise ValueError("search space is empty")
        return [self.correlate(t, repeat) for t in teach_frames]


@functools.lru_cache(maxsize=16)
def engine_for(height: int, width: int) -> CorrelationEngine:
    return CorrelationEngine(height, width)


def _check_pair(teach: FrameLike, repeat: FrameLike) -> None:
    if _unit_of(teach) != _unit_of(repeat):
        raise ValueError(f"cannot correlate {_unit_of(teach)} with {_unit_of(repeat)} frames")
    if np.shape(as_array(teach)) != np.shape(as_array(repeat)):
        raise ValueError("teach and repeat frames differ in size")


def correlate_horizontal(teach: FrameLike, repeat: FrameLike) -> CorrelationResult:
    """Score every horizontal shift of ``teach`` against ``repeat``."""
    _check_pair(teach, repeat)
    h, w = as_array(repeat).shape
    return engine_for(h, w).correlate(teach, repeat)


def correlate_search_space(space: Union[SearchSpace, Sequence[FrameLike]],
                           repeat: FrameLike) -> list[CorrelationResult]:
    """Correlate ``repeat`` against every candidate through one concatenated transform."""
    frames = space.candidates if isinstance(space, SearchSpace) else list(space)
    if not frames:
        raise ValueError("search space is empty")
    for f in frames:
        _check_pair(f, repeat)
    h, w = as_array(repeat).shape
    return engine_for(h, w).correlate_many(frames, repeat)


def pixel_offset_to_angle(delta: float, width: int, fov_deg: float) -> float:
    """Angle in degrees spanned by ``delta`` columns of a ``width``-column image.

    With compressed frames pass the compressed width, which coarsens the
    angular resolution by the compression factor.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    return fov_deg / width * delta
