"""Event streams and binary event frames.

Frames are stored bit-packed, one bit per pixel, row-major with each row
padded to a byte boundary (``numpy.packbits`` layout). A pixel is set when at
least one event, of either polarity, fell inside the frame's half-open time
window ``[t_start, t_start + tau)``.
"""

from __future__ import annotations

import functools
import io
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from evtr import kernels

DEFAULT_TAU_US = 66_000
_NEVER = np.iinfo(np.int64).min // 2
_HEADER_RE = re.compile(r"#\s*evtr-events\s+v1\s+width=(\d+)\s+height=(\d+)")


@dataclass(frozen=True)
class Event:
    """One brightness change: time (us), column, row, polarity."""

    t: int
    u: int
    v: int
    p: int

    def __post_init__(self) -> None:
        if self.t < 0 or self.u < 0 or self.v < 0:
            raise ValueError(f"negative field in {self}")
        if self.p not in (-1, 1):
            raise ValueError(f"polarity must be -1 or +1, got {self.p}")


class EventStream:
    """Column-oriented batch of events (int64 arrays of equal length)."""

    __slots__ = ("t", "u", "v", "p", "width", "height")

    def __init__(self, t, u, v, p, width: int, height: int):
        self.t = np.ascontiguousarray(t, dtype=np.int64)
        self.u = np.ascontiguousarray(u, dtype=np.int64)
        self.v = np.ascontiguousarray(v, dtype=np.int64)
        self.p = np.ascontiguousarray(p, dtype=np.int64)
        n = self.t.shape[0]
        if not (self.u.shape[0] == self.v.shape[0] == self.p.shape[0] == n):
            raise ValueError("event columns differ in length")
        self.width = int(width)
        self.height = int(height)

    @classmethod
    def empty(cls, width: int, height: int) -> "EventStream":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, width, height)

    @classmethod
    def from_events(cls, events: Iterable[Event], width: int, height: int) -> "EventStream":
        rows = [(e.t, e.u, e.v, e.p) for e in events]
        if not rows:
            return cls.empty(width, height)
        t, u, v, p = np.array(rows, dtype=np.int64).T
        return cls(t, u, v, p, width, height)

    @classmethod
    def concatenate(cls, streams: Sequence["EventStream"], width: int, height: int) -> "EventStream":
        if not streams:
            return cls.empty(width, height)
        return cls(*(np.concatenate([getattr(s, f) for s in streams]) for f in "tuvp"),
                   width=width, height=height)

    def __len__(self) -> int:
        return self.t.shape[0]

    def __iter__(self):
        for row in zip(self.t.tolist(), self.u.tolist(), self.v.tolist(), self.p.tolist()):
            yield Event(*row)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in "tuvp")


@dataclass(frozen=True, eq=False)
class EventFrame:
    """Binary occupancy image over one accumulation window."""

    width: int
    height: int
    t_start: int
    tau: int
    bits: np.ndarray

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame dimensions must be positive, got {self.width}x{self.height}")
        if self.tau <= 0:
            raise ValueError(f"window length must be positive, got {self.tau}")
        bits = np.array(self.bits, dtype=np.uint8, order="C")
        if bits.shape != (self.height, (self.width + 7) // 8):
            raise ValueError(f"packed shape {bits.shape} does not fit {self.width}x{self.height}")
        if self.width % 8:
            # padding bits must stay clear so byte-level comparisons are meaningful
            bits[:, -1] &= np.uint8((0xFF << (8 - self.width % 8)) & 0xFF)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_pixels(cls, pixels, t_start: int = 0, tau: int = DEFAULT_TAU_US) -> "EventFrame":
        pixels = np.asarray(pixels)
        if pixels.ndim != 2:
            raise ValueError("pixel grid must be 2-D (rows, columns)")
        if not np.isin(pixels, (0, 1)).all():
            raise ValueError("event frame pixels must be 0 or 1")
        h, w = pixels.shape
        return cls(w, h, int(t_start), int(tau), np.packbits(pixels.astype(bool), axis=1))

    @functools.cached_property
    def pixels(self) -> np.ndarray:
        """Unpacked ``(height, width)`` boolean view."""
        px = np.unpackbits(self.bits, axis=1, count=self.width).astype(bool)
        px.setflags(write=False)
        return px

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def count(self) -> int:
        """Number of set pixels."""
        return int(np.unpackbits(self.bits).sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventFrame):
            return NotImplemented
        return (self.width, self.height, self.t_start, self.tau) == (
            other.width, other.height, other.t_start, other.tau
        ) and np.array_equal(self.bits, other.bits)

    def __repr__(self) -> str:
        return (f"EventFrame({self.width}x{self.height}, t_start={self.t_start}, "
                f"tau={self.tau}, set={self.count()})")


@dataclass(frozen=True, eq=False)
class CompressedFrame:
    """Row-wise column sums of an event frame over windows of ``factor`` pixels."""

    values: np.ndarray
    factor: int
    source_width: int

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(self.values, dtype=np.int32)
        if vals.ndim != 2 or vals.shape[1] != -(-self.source_width // self.factor):
            raise ValueError("compressed grid does not match source width and factor")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CompressedFrame):
            return NotImplemented
        return (self.factor, self.source_width) == (other.factor, other.source_width) and \
            np.array_equal(self.values, other.values)


EventsLike = Union[EventStream, Sequence[Event]]


def _as_stream(events: EventsLike, width: int, height: int) -> EventStream:
    if isinstance(events, EventStream):
        return events
    return EventStream.from_events(events, width, height)


def accumulate(events: EventsLike, t_k: int, tau: int, width: int, height: int) -> EventFrame:
    """Binary frame of every pixel that fired in ``[t_k, t_k + tau)``.

    Raises:
        ValueError: an event lies outside the ``width x height`` sensor, or the
            window/geometry is not positive.
    """
    if tau <= 0 or width <= 0 or height <= 0:
        raise ValueError("window length and frame dimensions must be positive")
    s = _as_stream(events, width, height)
    bits = kernels.accumulate_packed(s.t, s.u, s.v, int(t_k), int(t_k) + int(tau), width, height)
    return EventFrame(width, height, int(t_k), int(tau), bits)


def frames(events: EventStream, tau: int = DEFAULT_TAU_US, hop: int | None = None,
           t0: int | None = None) -> list[EventFrame]:
    """Cut a stream into consecutive windows of length ``tau`` every ``hop`` us.

    ``hop`` defaults to ``tau`` (non-overlapping windows). Only windows that
    start at or before the last event are produced.
    """
    hop = tau if hop is None else hop
    if hop <= 0:
        raise ValueError("hop must be positive")
    if len(events) == 0:
        return []
    start = int(events.t[0]) if t0 is None else int(t0)
    out = []
    t_last = int(events.t[-1])
    while start <= t_last:
        lo, hi = np.searchsorted(events.t, [start, start + tau])
        chunk = EventStream(events.t[lo:hi], events.u[lo:hi], events.v[lo:hi], events.p[lo:hi],
                            events.width, events.height)
        out.append(accumulate(chunk, start, tau, events.width, events.height))
        start += hop
    return out


def downsample(frame: EventFrame, target_w: int, target_h: int) -> EventFrame:
    """Nearest-neighbour resize; output pixel ``(i, j)`` samples source
    ``(floor(i * h / target_h), floor(j * w / target_w))``."""
    if target_w <= 0 or target_h <= 0:
        raise ValueError("target dimensions must be positive")
    if target_w > frame.width or target_h > frame.height:
        raise ValueError("downsample cannot enlarge a frame")
    cols = (np.arange(target_w) * frame.width) // target_w
    rows = (np.arange(target_h) * frame.height) // target_h
    px = frame.pixels[np.ix_(rows, cols)]
    return EventFrame(target_w, target_h, frame.t_start, frame.tau, np.packbits(px, axis=1))


def compress(frame: EventFrame, factor: int) -> CompressedFrame:
    """Sum each row over non-overlapping windows of ``factor`` columns.

    The last window is partial when the width is not a multiple of ``factor``.
    """
    if factor < 1:
        raise ValueError(f"compression factor must be >= 1, got {factor}")
    if factor > frame.width:
        raise ValueError(f"compression factor {factor} exceeds frame width {frame.width}")
    vals = kernels.compress_packed(frame.bits, frame.width, factor)
    return CompressedFrame(vals, factor, frame.width)


class SlidingAccumulator:
    """Keeps the latest event time per pixel so that a frame for any window
    ending at the current time can be cut without re-scanning the stream.

    ``frame(t_end, tau)`` equals ``accumulate(all_events, t_end - tau, tau, ...)``
    as long as every stamped event is earlier than ``t_end``.
    """

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self._last = np.full((height, width), _NEVER, dtype=np.int64)

    def stamp(self, events: EventStream) -> None:
        if len(events):
            kernels.stamp_events(self._last, events.t, events.u, events.v)

    def frame(self, t_end: int, tau: int = DEFAULT_TAU_US) -> EventFrame:
        t_start = int(t_end) - int(tau)
        bits = kernels.window_packed(self._last, t_start, int(t_end))
        return EventFrame(self.width, self.height, t_start, int(tau), bits)

    def reset(self) -> None:
        self._last.fill(_NEVER)


def write_events(path: Union[str, Path], events: EventStream) -> None:
    with open(path, "w") as fh:
        fh.write(f"# evtr-events v1 width={events.width} height={events.height}\n")
        for t, u, v, p in zip(events.t.tolist(), events.u.tolist(), events.v.tolist(),
                              events.p.tolist()):
            fh.write(f"{t},{u},{v},{p}\n")


def read_events(path: Union[str, Path]) -> EventStream:
    """Parse a ``t_us,u,v,p`` text file with an ``evtr-events v1`` header."""
    with open(path) as fh:
        header = fh.readline()
        m = _HEADER_RE.match(header.strip())
        if m is None:
            raise ValueError(f"{path}: missing 'evtr-events v1' header")
        width, height = int(m.group(1)), int(m.group(2))
        body = fh.read()
    if not body.strip():
        return EventStream.empty(width, height)
    data = np.loadtxt(io.StringIO(body), delimiter=",", comments="#", dtype=np.int64, ndmin=2)
    if data.size == 0:
        return EventStream.empty(width, height)
    if data.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 columns, got {data.shape[1]}")
    stream = EventStream(data[:, 0], data[:, 1], data[:, 2], data[:, 3], width, height)
    if not np.isin(stream.p, (-1, 1)).all():
        raise ValueError(f"{path}: polarity must be -1 or +1")
    if (stream.t < 0).any():
        raise ValueError(f"{path}: negative timestamp")
    if (np.diff(stream.t) < 0).any():
        raise ValueError(f"{path}: events are not sorted by time")
    return stream
